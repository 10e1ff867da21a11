use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc;

use crate::error::{CoreError, Result};
use crate::stream::{Post, PostStream};
use crate::topology::{
    reader_process, route, spout_emit, Combiner, Grouping, Stage, StageConfig, TopologyMetrics,
    Tuple, WindowTuple,
};

/// How the topology executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// Single-threaded; stages are polled round-robin. Deterministic.
    Polled,
    /// One OS thread per stage instance, bounded channels between stages.
    Threaded,
}

/// Result of running the topology over one window.
#[derive(Debug)]
pub struct WindowRun {
    /// Per-hashtag occurrence counts for the window.
    pub counts: HashMap<String, u64>,
    pub metrics: TopologyMetrics,
}

fn derive_seed(seed: u64, stage: Stage, task: u64) -> u64 {
    seed ^ super::stable_hash(stage.name()) ^ task.wrapping_mul(0x9e3779b97f4a7c15)
}

/// Runs spout -> reader -> (combiner) -> detector over the posts of
/// `[window_start, boundary]` and returns the detector's count table.
pub fn run_window(
    stream: &PostStream,
    filters: &[String],
    config: &StageConfig,
    window_start: NaiveDate,
    boundary: NaiveDate,
    seed: u64,
    mode: ExecMode,
) -> Result<WindowRun> {
    config.validate()?;
    if window_start > boundary {
        return Err(CoreError::Config(format!(
            "window start {window_start} after boundary {boundary}"
        )));
    }
    match mode {
        ExecMode::Polled => run_polled(stream, filters, config, window_start, boundary, seed),
        ExecMode::Threaded => run_threaded(stream, filters, config, window_start, boundary, seed),
    }
}

fn run_polled(
    stream: &PostStream,
    filters: &[String],
    config: &StageConfig,
    window_start: NaiveDate,
    boundary: NaiveDate,
    seed: u64,
) -> Result<WindowRun> {
    let n_tasks = config.parallelism;
    let mut metrics = TopologyMetrics::default();
    let mut spout_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stage::Spout, 0));
    let mut reader_rngs: Vec<ChaCha8Rng> = (0..n_tasks)
        .map(|t| ChaCha8Rng::seed_from_u64(derive_seed(seed, Stage::Reader, t as u64)))
        .collect();

    let mut reader_queues: Vec<VecDeque<(&Post, NaiveDate)>> = vec![VecDeque::new(); n_tasks];
    let mut combiner_queues: Vec<VecDeque<WindowTuple>> = vec![VecDeque::new(); n_tasks];
    let mut combiners: Vec<Combiner> = (0..n_tasks)
        .map(|_| Combiner::new(config.combiner_flush_size))
        .collect();
    let mut detector_queue: VecDeque<WindowTuple> = VecDeque::new();
    let mut table: HashMap<String, u64> = HashMap::new();

    let mut day = window_start;
    while day <= boundary {
        // Spout: emit the day's posts, shuffled across readers.
        for post in spout_emit(stream, filters, day) {
            metrics.record_emit(Stage::Spout, 1);
            let task = route(&post.id, Grouping::Shuffle, n_tasks, &mut spout_rng);
            reader_queues[task].push_back((post, day));
            metrics.record_depth(Stage::Reader, reader_queues[task].len());
        }

        // Readers: turn posts into (hashtag, 1) tuples, routed onward.
        loop {
            let mut progressed = false;
            for r in 0..n_tasks {
                if let Some((post, day)) = reader_queues[r].pop_front() {
                    progressed = true;
                    for tuple in reader_process(post) {
                        metrics.record_emit(Stage::Reader, 1);
                        let wt = WindowTuple { tuple, day };
                        if config.combiner_enabled {
                            let task =
                                route(&wt.tuple.key, config.grouping, n_tasks, &mut reader_rngs[r]);
                            combiner_queues[task].push_back(wt);
                            metrics.record_depth(Stage::Combiner, combiner_queues[task].len());
                        } else {
                            detector_queue.push_back(wt);
                            metrics.record_depth(Stage::Detector, detector_queue.len());
                        }
                    }
                }
            }
            if !progressed {
                break;
            }
        }

        // Combiners: aggregate, flushing on the size threshold.
        for c in 0..n_tasks {
            while let Some(wt) = combiner_queues[c].pop_front() {
                if let Some((batch, batch_day)) = combiners[c].push(wt) {
                    emit_batch(batch, batch_day, &mut detector_queue, &mut metrics);
                }
            }
        }

        day = day + chrono::Days::new(1);
    }

    // Window boundary: force-flush every combiner.
    for combiner in &mut combiners {
        if let Some(day) = combiner.pending_day() {
            let batch = combiner.flush();
            emit_batch(batch, day, &mut detector_queue, &mut metrics);
        }
    }

    // Detector drains its queue, rejecting anything out of window.
    while let Some(wt) = detector_queue.pop_front() {
        if wt.day < window_start || wt.day > boundary {
            return Err(CoreError::LateTuple {
                key: wt.tuple.key,
                day: wt.day,
                boundary,
            });
        }
        metrics.tuples_received_by_detector += 1;
        *table.entry(wt.tuple.key).or_insert(0) += wt.tuple.value;
    }

    Ok(WindowRun { counts: table, metrics })
}

fn emit_batch(
    batch: Vec<Tuple>,
    day: NaiveDate,
    detector_queue: &mut VecDeque<WindowTuple>,
    metrics: &mut TopologyMetrics,
) {
    for tuple in batch {
        metrics.record_emit(Stage::Combiner, 1);
        detector_queue.push_back(WindowTuple { tuple, day });
        metrics.record_depth(Stage::Detector, detector_queue.len());
    }
}

const CHANNEL_CAP: usize = 1024;

struct AtomicCounters {
    spout_emitted: AtomicU64,
    reader_emitted: AtomicU64,
    combiner_emitted: AtomicU64,
    detector_received: AtomicU64,
    reader_depth: DepthGauge,
    combiner_depth: DepthGauge,
    detector_depth: DepthGauge,
}

#[derive(Default)]
struct DepthGauge {
    current: AtomicUsize,
    max: AtomicUsize,
}

impl DepthGauge {
    fn push(&self) {
        let now = self.current.fetch_add(1, Ordering::Relaxed) + 1;
        self.max.fetch_max(now, Ordering::Relaxed);
    }

    fn pop(&self) {
        self.current.fetch_sub(1, Ordering::Relaxed);
    }
}

fn run_threaded(
    stream: &PostStream,
    filters: &[String],
    config: &StageConfig,
    window_start: NaiveDate,
    boundary: NaiveDate,
    seed: u64,
) -> Result<WindowRun> {
    let n_tasks = config.parallelism;
    let counters = AtomicCounters {
        spout_emitted: AtomicU64::new(0),
        reader_emitted: AtomicU64::new(0),
        combiner_emitted: AtomicU64::new(0),
        detector_received: AtomicU64::new(0),
        reader_depth: DepthGauge::default(),
        combiner_depth: DepthGauge::default(),
        detector_depth: DepthGauge::default(),
    };

    let result: Result<HashMap<String, u64>> = std::thread::scope(|scope| {
        // Channels: spout -> readers, readers -> combiners (or detector),
        // combiners -> detector.
        let (reader_txs, reader_rxs): (Vec<_>, Vec<_>) = (0..n_tasks)
            .map(|_| mpsc::sync_channel::<(&Post, NaiveDate)>(CHANNEL_CAP))
            .unzip();
        let (detector_tx, detector_rx) = mpsc::sync_channel::<WindowTuple>(CHANNEL_CAP);

        let (combiner_txs, combiner_rxs): (Vec<_>, Vec<_>) = if config.combiner_enabled {
            (0..n_tasks)
                .map(|_| mpsc::sync_channel::<WindowTuple>(CHANNEL_CAP))
                .unzip()
        } else {
            (Vec::new(), Vec::new())
        };

        for (r, rx) in reader_rxs.into_iter().enumerate() {
            let combiner_txs = combiner_txs.clone();
            let detector_tx = detector_tx.clone();
            let grouping = config.grouping;
            let counters = &counters;
            scope.spawn(move || {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, Stage::Reader, r as u64));
                for (post, day) in rx {
                    counters.reader_depth.pop();
                    for tuple in reader_process(post) {
                        counters.reader_emitted.fetch_add(1, Ordering::Relaxed);
                        let wt = WindowTuple { tuple, day };
                        if combiner_txs.is_empty() {
                            counters.detector_depth.push();
                            detector_tx.send(wt).expect("detector alive");
                        } else {
                            let task = route(&wt.tuple.key, grouping, n_tasks, &mut rng);
                            counters.combiner_depth.push();
                            combiner_txs[task].send(wt).expect("combiner alive");
                        }
                    }
                }
            });
        }
        drop(combiner_txs);

        for rx in combiner_rxs {
            let detector_tx = detector_tx.clone();
            let flush_size = config.combiner_flush_size;
            let counters = &counters;
            scope.spawn(move || {
                let mut combiner = Combiner::new(flush_size);
                let send_batch = |batch: Vec<Tuple>, day: NaiveDate| {
                    for tuple in batch {
                        counters.combiner_emitted.fetch_add(1, Ordering::Relaxed);
                        counters.detector_depth.push();
                        detector_tx.send(WindowTuple { tuple, day }).expect("detector alive");
                    }
                };
                for wt in rx {
                    counters.combiner_depth.pop();
                    if let Some((batch, day)) = combiner.push(wt) {
                        send_batch(batch, day);
                    }
                }
                if let Some(day) = combiner.pending_day() {
                    send_batch(combiner.flush(), day);
                }
            });
        }
        drop(detector_tx);

        let detector = scope.spawn(|| -> Result<HashMap<String, u64>> {
            let mut table = HashMap::new();
            for wt in detector_rx {
                counters.detector_depth.pop();
                if wt.day < window_start || wt.day > boundary {
                    return Err(CoreError::LateTuple {
                        key: wt.tuple.key,
                        day: wt.day,
                        boundary,
                    });
                }
                counters.detector_received.fetch_add(1, Ordering::Relaxed);
                *table.entry(wt.tuple.key).or_insert(0) += wt.tuple.value;
            }
            Ok(table)
        });

        // The spout runs on this thread.
        let mut spout_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stage::Spout, 0));
        let mut day = window_start;
        while day <= boundary {
            for post in spout_emit(stream, filters, day) {
                counters.spout_emitted.fetch_add(1, Ordering::Relaxed);
                let task = route(&post.id, Grouping::Shuffle, n_tasks, &mut spout_rng);
                counters.reader_depth.push();
                reader_txs[task].send((post, day)).expect("reader alive");
            }
            day = day + chrono::Days::new(1);
        }
        drop(reader_txs);

        detector.join().expect("detector thread panicked")
    });

    let counts = result?;
    let mut metrics = TopologyMetrics::default();
    metrics.record_emit(Stage::Spout, counters.spout_emitted.load(Ordering::Relaxed));
    metrics.record_emit(Stage::Reader, counters.reader_emitted.load(Ordering::Relaxed));
    metrics.record_emit(
        Stage::Combiner,
        counters.combiner_emitted.load(Ordering::Relaxed),
    );
    metrics.tuples_received_by_detector = counters.detector_received.load(Ordering::Relaxed);
    metrics.record_depth(
        Stage::Reader,
        counters.reader_depth.max.load(Ordering::Relaxed),
    );
    metrics.record_depth(
        Stage::Combiner,
        counters.combiner_depth.max.load(Ordering::Relaxed),
    );
    metrics.record_depth(
        Stage::Detector,
        counters.detector_depth.max.load(Ordering::Relaxed),
    );
    Ok(WindowRun { counts, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::direct_count;
    use chrono::{TimeZone, Utc};
    use rand::Rng;

    fn seeded_stream(days: u32, posts_per_day: usize, n_keys: usize, seed: u64) -> PostStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut posts = Vec::new();
        for day in 0..days {
            for i in 0..posts_per_day {
                let n_tags = rng.gen_range(1..=3);
                let tags: Vec<String> = (0..n_tags)
                    .map(|_| format!("tag{}", rng.gen_range(0..n_keys)))
                    .collect();
                let mut unique = Vec::new();
                for t in tags {
                    if !unique.contains(&t) {
                        unique.push(t);
                    }
                }
                posts.push(Post {
                    id: format!("d{day}p{i}"),
                    timestamp: Utc
                        .with_ymd_and_hms(2020, 8, 1 + day, 0, 0, 0)
                        .unwrap()
                        + chrono::Duration::seconds(i as i64),
                    text: String::new(),
                    hashtags: unique,
                });
            }
        }
        PostStream::from_posts(posts)
    }

    #[test]
    fn polled_and_threaded_agree_with_direct_count() {
        let stream = seeded_stream(3, 200, 40, 5);
        let start = NaiveDate::from_ymd_opt(2020, 8, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(2020, 8, 3).unwrap();
        let oracle = direct_count(stream.get_last_window(3, end));

        for grouping in [Grouping::Shuffle, Grouping::Field] {
            for combiner_enabled in [false, true] {
                let config = StageConfig {
                    parallelism: 3,
                    grouping,
                    combiner_enabled,
                    combiner_flush_size: 64,
                };
                let polled =
                    run_window(&stream, &[], &config, start, end, 42, ExecMode::Polled).unwrap();
                let threaded =
                    run_window(&stream, &[], &config, start, end, 42, ExecMode::Threaded).unwrap();
                assert_eq!(polled.counts, oracle);
                assert_eq!(threaded.counts, oracle);
            }
        }
    }

    #[test]
    fn combiner_reduces_detector_traffic() {
        // 10,000 tuples over 50 distinct keys with flush size 1,000:
        // the detector sees at most (distinct keys) x (flushes), far
        // fewer than the raw tuple count.
        let stream = seeded_stream(1, 5000, 50, 9);
        let start = NaiveDate::from_ymd_opt(2020, 8, 1).unwrap();
        let raw_tuples: u64 = stream
            .posts()
            .iter()
            .map(|p| p.hashtags.len() as u64)
            .sum();
        assert!(raw_tuples > 5_000);

        let base = StageConfig {
            parallelism: 1,
            grouping: Grouping::Shuffle,
            combiner_enabled: false,
            combiner_flush_size: 1000,
        };
        let without =
            run_window(&stream, &[], &base, start, start, 1, ExecMode::Polled).unwrap();
        assert_eq!(without.metrics.tuples_received_by_detector, raw_tuples);

        let with = run_window(
            &stream,
            &[],
            &StageConfig {
                combiner_enabled: true,
                ..base
            },
            start,
            start,
            1,
            ExecMode::Polled,
        )
        .unwrap();
        let n_flushes = raw_tuples.div_ceil(1000);
        assert!(with.metrics.tuples_received_by_detector <= 50 * n_flushes);
        assert!(with.metrics.tuples_received_by_detector < raw_tuples);
        assert_eq!(with.counts, without.counts);
    }

    #[test]
    fn polled_run_is_reproducible() {
        let stream = seeded_stream(2, 100, 20, 3);
        let start = NaiveDate::from_ymd_opt(2020, 8, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(2020, 8, 2).unwrap();
        let config = StageConfig::default();
        let a = run_window(&stream, &[], &config, start, end, 7, ExecMode::Polled).unwrap();
        let b = run_window(&stream, &[], &config, start, end, 7, ExecMode::Polled).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_eq!(
            a.metrics.tuples_received_by_detector,
            b.metrics.tuples_received_by_detector
        );
    }

    #[test]
    fn empty_day_yields_empty_table() {
        let stream = seeded_stream(1, 10, 5, 2);
        let empty_day = NaiveDate::from_ymd_opt(2020, 9, 15).unwrap();
        let run = run_window(
            &stream,
            &[],
            &StageConfig::default(),
            empty_day,
            empty_day,
            1,
            ExecMode::Polled,
        )
        .unwrap();
        assert!(run.counts.is_empty());
    }
}
