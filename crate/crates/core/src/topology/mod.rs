//! In-process staged dataflow: spout -> hashtag reader -> combiner ->
//! detector, with pluggable grouping strategies and tuple accounting.
//!
//! The topology runs either as a deterministic single-threaded pipeline
//! (stages polled round-robin) or with one thread per stage instance and
//! bounded queues. Both modes produce identical final count tables.

mod runner;

pub use runner::{run_window, ExecMode, WindowRun};

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::error::{CoreError, Result};
use crate::stream::{Post, PostStream};

/// Pipeline stage identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Spout,
    Reader,
    Combiner,
    Detector,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Spout => "spout",
            Stage::Reader => "reader",
            Stage::Combiner => "combiner",
            Stage::Detector => "detector",
        }
    }
}

/// A keyed count on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tuple {
    pub key: String,
    pub value: u64,
    pub origin: Stage,
}

impl Tuple {
    pub fn new(key: impl Into<String>, value: u64, origin: Stage) -> Self {
        let t = Tuple {
            key: key.into(),
            value,
            origin,
        };
        debug_assert!(t.value >= 1);
        t
    }
}

/// A tuple tagged with the calendar day of its source post, so the
/// detector can reject anything outside its window.
#[derive(Debug, Clone)]
pub struct WindowTuple {
    pub tuple: Tuple,
    pub day: NaiveDate,
}

/// How tuples are distributed among parallel tasks of the next stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// Uniform random task from a seeded generator.
    Shuffle,
    /// Stable hash of the key: same key, same task.
    Field,
}

/// Per-stage execution knobs.
#[derive(Debug, Clone)]
pub struct StageConfig {
    /// Parallel task count for the reader and combiner stages.
    pub parallelism: usize,
    /// Grouping used for tuples entering the combiner/detector path.
    pub grouping: Grouping,
    pub combiner_enabled: bool,
    /// Buffered-tuple threshold that forces a combiner flush.
    pub combiner_flush_size: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            parallelism: 4,
            grouping: Grouping::Shuffle,
            combiner_enabled: true,
            combiner_flush_size: 1024,
        }
    }
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.parallelism < 1 {
            return Err(CoreError::Config("stage parallelism must be >= 1".into()));
        }
        if self.combiner_flush_size < 1 {
            return Err(CoreError::Config("combiner flush size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Counters collected over a run. Counters only ever increase while the
/// topology is running.
#[derive(Debug, Clone, Default)]
pub struct TopologyMetrics {
    pub tuples_emitted: BTreeMap<Stage, u64>,
    pub tuples_received_by_detector: u64,
    pub max_queue_depth: BTreeMap<Stage, usize>,
}

impl TopologyMetrics {
    pub fn record_emit(&mut self, stage: Stage, count: u64) {
        *self.tuples_emitted.entry(stage).or_insert(0) += count;
    }

    pub fn record_depth(&mut self, stage: Stage, depth: usize) {
        let entry = self.max_queue_depth.entry(stage).or_insert(0);
        *entry = (*entry).max(depth);
    }

    pub fn merge(&mut self, other: &TopologyMetrics) {
        for (stage, n) in &other.tuples_emitted {
            self.record_emit(*stage, *n);
        }
        self.tuples_received_by_detector += other.tuples_received_by_detector;
        for (stage, d) in &other.max_queue_depth {
            self.record_depth(*stage, *d);
        }
    }

    /// Metrics dump: CSV with one row per stage.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "stage,tuples_emitted,tuples_received,max_queue_depth")?;
        for stage in [Stage::Spout, Stage::Reader, Stage::Combiner, Stage::Detector] {
            let emitted = self.tuples_emitted.get(&stage).copied().unwrap_or(0);
            let received = if stage == Stage::Detector {
                self.tuples_received_by_detector
            } else {
                0
            };
            let depth = self.max_queue_depth.get(&stage).copied().unwrap_or(0);
            writeln!(w, "{},{emitted},{received},{depth}", stage.name())?;
        }
        Ok(())
    }
}

/// Emits, in timestamp order, each post of the given day whose text
/// matches at least one filter keyword (case-insensitive substring).
/// An empty filter list matches everything.
pub fn spout_emit<'a>(
    stream: &'a PostStream,
    filters: &[String],
    day: NaiveDate,
) -> Vec<&'a Post> {
    stream
        .day(day)
        .iter()
        .filter(|p| p.matches_filters(filters))
        .collect()
}

/// One `(hashtag, 1)` tuple per distinct hashtag of the post.
pub fn reader_process(post: &Post) -> Vec<Tuple> {
    post.hashtags
        .iter()
        .map(|h| Tuple::new(h.clone(), 1, Stage::Reader))
        .collect()
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a; a stable hash so field grouping does not depend on process
/// or platform state.
fn stable_hash(key: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for byte in key.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Task index for a key: field grouping is a pure function of the key,
/// shuffle grouping draws uniformly from the seeded generator.
pub fn route(key: &str, grouping: Grouping, n_tasks: usize, rng: &mut ChaCha8Rng) -> usize {
    assert!(n_tasks >= 1);
    match grouping {
        Grouping::Field => (stable_hash(key) % n_tasks as u64) as usize,
        Grouping::Shuffle => rng.gen_range(0..n_tasks),
    }
}

/// Pre-aggregation buffer that sums values per key before they reach the
/// detector. Flushes when `flush_size` tuples have been buffered, and at
/// window boundaries.
#[derive(Debug)]
pub struct Combiner {
    buffer: BTreeMap<String, u64>,
    buffered: usize,
    flush_size: usize,
    day: Option<NaiveDate>,
}

impl Combiner {
    pub fn new(flush_size: usize) -> Self {
        assert!(flush_size >= 1);
        Combiner {
            buffer: BTreeMap::new(),
            buffered: 0,
            flush_size,
            day: None,
        }
    }

    /// Buffers a tuple; returns the flushed batch when the size threshold
    /// is hit. Tuples from different days never share a buffer, so a
    /// flushed batch carries one well-defined day.
    pub fn push(&mut self, wt: WindowTuple) -> Option<(Vec<Tuple>, NaiveDate)> {
        let mut flushed = None;
        if let Some(day) = self.day {
            if day != wt.day {
                flushed = Some((self.flush(), day));
            }
        }
        self.day = Some(wt.day);
        *self.buffer.entry(wt.tuple.key).or_insert(0) += wt.tuple.value;
        self.buffered += 1;
        if self.buffered >= self.flush_size {
            let day = self.day.expect("buffer non-empty");
            debug_assert!(flushed.is_none());
            flushed = Some((self.flush(), day));
        }
        flushed
    }

    /// Drains the buffer into one tuple per distinct key, values summed,
    /// sorted by key.
    pub fn flush(&mut self) -> Vec<Tuple> {
        let out = std::mem::take(&mut self.buffer)
            .into_iter()
            .map(|(key, value)| Tuple::new(key, value, Stage::Combiner))
            .collect();
        self.buffered = 0;
        self.day = None;
        out
    }

    pub fn pending_day(&self) -> Option<NaiveDate> {
        self.day
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }
}

/// Builds the per-hashtag count table for a tumbling window from a tuple
/// sequence, rejecting anything dated outside the window.
pub fn detector_ingest(
    tuples: impl IntoIterator<Item = WindowTuple>,
    window_start: NaiveDate,
    boundary: NaiveDate,
) -> Result<HashMap<String, u64>> {
    let mut table = HashMap::new();
    for wt in tuples {
        if wt.day < window_start || wt.day > boundary {
            return Err(CoreError::LateTuple {
                key: wt.tuple.key,
                day: wt.day,
                boundary,
            });
        }
        *table.entry(wt.tuple.key).or_insert(0) += wt.tuple.value;
    }
    Ok(table)
}

/// Single-pass direct count of hashtags in a window; the oracle the
/// topology is checked against.
pub fn direct_count(posts: &[Post]) -> HashMap<String, u64> {
    let mut table = HashMap::new();
    for post in posts {
        for tag in &post.hashtags {
            *table.entry(tag.clone()).or_insert(0) += 1;
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use rand::SeedableRng;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 8, 1).unwrap()
    }

    fn tagged_post(id: &str, tags: &[&str], text: &str) -> Post {
        Post {
            id: id.into(),
            timestamp: Utc.with_ymd_and_hms(2020, 8, 1, 12, 0, 0).unwrap(),
            text: text.into(),
            hashtags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn spout_filters_by_keyword() {
        let stream = PostStream::from_posts(vec![
            tagged_post("1", &[], "COVID numbers rise"),
            tagged_post("2", &[], "nothing to see"),
            tagged_post("3", &[], "more covid talk"),
        ]);
        let hits = spout_emit(&stream, &["covid".to_string()], day());
        assert_eq!(hits.len(), 2);
        assert_eq!(spout_emit(&stream, &[], day()).len(), 3);
        assert!(spout_emit(&stream, &["zzz-absent".to_string()], day()).is_empty());
    }

    #[test]
    fn reader_emits_one_tuple_per_hashtag() {
        let post = tagged_post("1", &["maga", "trump2020"], "x");
        let tuples = reader_process(&post);
        assert_eq!(tuples.len(), 2);
        assert_eq!(tuples[0].key, "maga");
        assert_eq!(tuples[0].value, 1);
        assert!(reader_process(&tagged_post("2", &[], "x")).is_empty());
    }

    #[test]
    fn reader_emits_per_post_not_per_window() {
        let posts: Vec<Post> = (0..3)
            .map(|i| tagged_post(&i.to_string(), &["covid19"], "x"))
            .collect();
        let total: usize = posts.iter().map(|p| reader_process(p).len()).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn combiner_sums_by_key() {
        let mut combiner = Combiner::new(100);
        for key in ["a", "a", "b"] {
            let out = combiner.push(WindowTuple {
                tuple: Tuple::new(key, 1, Stage::Reader),
                day: day(),
            });
            assert!(out.is_none());
        }
        let flushed = combiner.flush();
        assert_eq!(
            flushed
                .iter()
                .map(|t| (t.key.as_str(), t.value))
                .collect::<Vec<_>>(),
            vec![("a", 2), ("b", 1)]
        );
        assert!(combiner.flush().is_empty());
    }

    #[test]
    fn combiner_flushes_at_threshold() {
        let mut combiner = Combiner::new(3);
        let mut flushes = 0;
        for _ in 0..6 {
            let out = combiner.push(WindowTuple {
                tuple: Tuple::new("k", 1, Stage::Reader),
                day: day(),
            });
            if let Some((batch, _)) = out {
                flushes += 1;
                assert_eq!(batch.len(), 1);
                assert_eq!(batch[0].value, 3);
            }
        }
        assert_eq!(flushes, 2);
        assert!(combiner.is_empty());
    }

    #[test]
    fn field_routing_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let first = route("covid19", Grouping::Field, 4, &mut rng);
        for _ in 0..50 {
            assert_eq!(route("covid19", Grouping::Field, 4, &mut rng), first);
        }
        assert_eq!(route("anything", Grouping::Shuffle, 1, &mut rng), 0);
        assert_eq!(route("anything", Grouping::Field, 1, &mut rng), 0);
    }

    #[test]
    fn shuffle_balances_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut loads = [0u64; 4];
        for i in 0..100_000 {
            loads[route(&format!("k{i}"), Grouping::Shuffle, 4, &mut rng)] += 1;
        }
        for load in loads {
            assert!(
                (load as i64 - 25_000).abs() <= 1_000,
                "shuffle load {load} outside 25000 +/- 1000"
            );
        }
    }

    #[test]
    fn detector_rejects_late_tuples() {
        let start = day();
        let boundary = day();
        let late = WindowTuple {
            tuple: Tuple::new("old", 1, Stage::Reader),
            day: NaiveDate::from_ymd_opt(2020, 7, 25).unwrap(),
        };
        let err = detector_ingest([late], start, boundary).unwrap_err();
        assert!(matches!(err, CoreError::LateTuple { .. }));
    }

    #[test]
    fn detector_table_from_combined_tuples() {
        let tuples = vec![
            WindowTuple {
                tuple: Tuple::new("a", 2, Stage::Combiner),
                day: day(),
            },
            WindowTuple {
                tuple: Tuple::new("b", 1, Stage::Combiner),
                day: day(),
            },
        ];
        let table = detector_ingest(tuples, day(), day()).unwrap();
        assert_eq!(table["a"], 2);
        assert_eq!(table["b"], 1);
        assert!(detector_ingest([], day(), day()).unwrap().is_empty());
    }

    #[test]
    fn skewed_keys_imbalance_field_vs_shuffle() {
        // Zipf(s=1.2) over 200 keys: field grouping concentrates the head
        // keys, shuffle stays near-uniform.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n_keys = 200;
        let weights: Vec<f64> = (1..=n_keys).map(|i| 1.0 / (i as f64).powf(1.2)).collect();
        let total: f64 = weights.iter().sum();
        let cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w / total;
                Some(*acc)
            })
            .collect();

        let mut field_loads = [0u64; 4];
        let mut shuffle_loads = [0u64; 4];
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..50_000 {
            let u: f64 = rng.gen();
            let key_idx = cumulative.partition_point(|&c| c < u);
            let key = format!("hashtag{key_idx}");
            field_loads[route(&key, Grouping::Field, 4, &mut shuffle_rng)] += 1;
            shuffle_loads[route(&key, Grouping::Shuffle, 4, &mut shuffle_rng)] += 1;
        }
        let ratio = |loads: &[u64; 4]| {
            let max = *loads.iter().max().unwrap() as f64;
            let min = *loads.iter().min().unwrap() as f64;
            max / min
        };
        assert!(
            ratio(&field_loads) >= 2.0 * ratio(&shuffle_loads),
            "field {field_loads:?} vs shuffle {shuffle_loads:?}"
        );
    }
}
