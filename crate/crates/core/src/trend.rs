//! Trending-set construction and the ranked Jaccard distance shift test.
//!
//! The rank of a hashtag in an ordered set of size `n_eff` is `n_eff - i`
//! for 0-based position `i`: the top element gets the maximum assignable
//! rank, the last gets 1, and anything absent gets 0. The distance between
//! two ordered sets is one minus the ratio between the ranked intersection
//! (sum of per-hashtag minimum ranks) and the ranked union (sum of
//! per-hashtag mean ranks).

use chrono::NaiveDate;
use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use crate::error::Result;

/// Ordered top-n hashtags with occurrence counts.
///
/// Entries are sorted by decreasing count, ties broken lexicographically,
/// and hold at most `capacity` hashtags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrendingSet {
    entries: Vec<(String, u64)>,
    capacity: usize,
    pub window_end: NaiveDate,
}

impl TrendingSet {
    /// Builds a trending set directly from ordered entries.
    ///
    /// Panics if the entries violate the ordering/uniqueness invariants;
    /// use [`top_hashtags`] to build one from a count table.
    pub fn from_entries(
        entries: Vec<(String, u64)>,
        capacity: usize,
        window_end: NaiveDate,
    ) -> Self {
        assert!(entries.len() <= capacity, "more entries than capacity");
        for pair in entries.windows(2) {
            let ordered = pair[0].1 > pair[1].1 || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0);
            assert!(ordered, "entries must be sorted by count desc, tie lex asc");
        }
        for (_, count) in &entries {
            assert!(*count > 0, "counts must be strictly positive");
        }
        TrendingSet {
            entries,
            capacity,
            window_end,
        }
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Hashtags in rank order, without counts.
    pub fn hashtags(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(h, _)| h.as_str())
    }

    /// Pipe-joined hashtags, the form used in the shift log.
    pub fn joined(&self) -> String {
        self.hashtags().collect::<Vec<_>>().join("|")
    }
}

/// Detection record: the day a shift was seen, its distance, and the
/// trending sets on both sides.
#[derive(Debug, Clone)]
pub struct ShiftEvent {
    pub date: NaiveDate,
    pub delta: f64,
    pub previous: TrendingSet,
    pub current: TrendingSet,
    pub omega: f64,
}

/// The `n` highest-count hashtags of a count table, sorted by decreasing
/// count with lexicographic tie-break. Fewer entries if the table is smaller.
pub fn top_hashtags(
    counts: &HashMap<String, u64>,
    n: usize,
    window_end: NaiveDate,
) -> TrendingSet {
    assert!(n >= 1, "trending capacity must be >= 1");
    let mut all: Vec<(String, u64)> = counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(h, &c)| (h.clone(), c))
        .collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(n);
    TrendingSet {
        entries: all,
        capacity: n,
        window_end,
    }
}

/// Rank of `h` in the ordered set: `n_eff - position`, or 0 if absent.
pub fn rank(set: &TrendingSet, h: &str) -> usize {
    let n_eff = set.entries.len();
    set.entries
        .iter()
        .position(|(tag, _)| tag == h)
        .map_or(0, |i| n_eff - i)
}

/// Ranked Jaccard distance between two ordered hashtag sets, in `[0, 1]`.
///
/// 0 means identical sets in identical order; 1 means disjoint sets. Both
/// sums are integers (the union sum is kept doubled), so the result is an
/// exact ratio of integers. Two empty sets are defined as distance 0.
pub fn rjd(h1: &TrendingSet, h2: &TrendingSet) -> f64 {
    if h1.is_empty() && h2.is_empty() {
        return 0.0;
    }
    let ranks1: HashMap<&str, usize> = h1
        .entries
        .iter()
        .enumerate()
        .map(|(i, (tag, _))| (tag.as_str(), h1.entries.len() - i))
        .collect();
    let ranks2: HashMap<&str, usize> = h2
        .entries
        .iter()
        .enumerate()
        .map(|(i, (tag, _))| (tag.as_str(), h2.entries.len() - i))
        .collect();

    let mut intersection: u64 = 0;
    let mut union_doubled: u64 = 0;
    let universe: BTreeSet<&str> = ranks1.keys().chain(ranks2.keys()).copied().collect();
    for tag in universe {
        let r1 = ranks1.get(tag).copied().unwrap_or(0) as u64;
        let r2 = ranks2.get(tag).copied().unwrap_or(0) as u64;
        if r1 > 0 && r2 > 0 {
            intersection += r1.min(r2);
        }
        union_doubled += r1 + r2;
    }
    debug_assert!(union_doubled > 0);
    1.0 - 2.0 * intersection as f64 / union_doubled as f64
}

/// Compares the current trends against a window's trends and returns a
/// [`ShiftEvent`] iff the distance reaches `omega`.
pub fn detect_shift(
    current_trends: &TrendingSet,
    window_trends: &TrendingSet,
    omega: f64,
) -> Option<ShiftEvent> {
    assert!((0.0..=1.0).contains(&omega), "omega must be in [0, 1]");
    let delta = rjd(current_trends, window_trends);
    if delta >= omega {
        Some(ShiftEvent {
            date: window_trends.window_end,
            delta,
            previous: current_trends.clone(),
            current: window_trends.clone(),
            omega,
        })
    } else {
        None
    }
}

/// Writes the shift log CSV: one row per detected shift.
pub fn write_shift_log(mut w: impl Write, events: &[ShiftEvent]) -> Result<()> {
    writeln!(w, "date,delta,omega,previous_set,current_set")?;
    for ev in events {
        writeln!(
            w,
            "{},{:.6},{:.6},{},{}",
            ev.date,
            ev.delta,
            ev.omega,
            ev.previous.joined(),
            ev.current.joined()
        )?;
    }
    Ok(())
}
