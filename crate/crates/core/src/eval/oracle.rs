use std::collections::{BTreeSet, HashMap};

use crate::trend::TrendingSet;

/// Definitional re-implementation of the ranked Jaccard distance, kept
/// independent of [`crate::trend::rjd`] as a verification oracle: ranks
/// are materialized per set, then the intersection and union sums are
/// evaluated literally over the combined universe in floating point.
pub fn rjd_oracle(h1: &TrendingSet, h2: &TrendingSet) -> f64 {
    let rank_table = |set: &TrendingSet| -> HashMap<String, f64> {
        let n = set.len();
        set.hashtags()
            .enumerate()
            .map(|(i, h)| (h.to_string(), (n - i) as f64))
            .collect()
    };
    let r1 = rank_table(h1);
    let r2 = rank_table(h2);

    let universe: BTreeSet<&String> = r1.keys().chain(r2.keys()).collect();
    if universe.is_empty() {
        return 0.0;
    }

    let mut intersection = 0.0;
    for h in &universe {
        if let (Some(&a), Some(&b)) = (r1.get(*h), r2.get(*h)) {
            intersection += a.min(b);
        }
    }
    let mut union = 0.0;
    for h in &universe {
        let a = r1.get(*h).copied().unwrap_or(0.0);
        let b = r2.get(*h).copied().unwrap_or(0.0);
        union += (a + b) / 2.0;
    }
    1.0 - intersection / union
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trend::{rjd, TrendingSet};
    use chrono::NaiveDate;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 8, 20).unwrap()
    }

    fn ordered(tags: &[String]) -> TrendingSet {
        let n = tags.len();
        let entries = tags
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), (n - i) as u64 + 1))
            .collect();
        TrendingSet::from_entries(entries, n.max(1), day())
    }

    fn named(tags: &[&str]) -> TrendingSet {
        ordered(&tags.iter().map(|t| t.to_string()).collect::<Vec<_>>())
    }

    #[test]
    fn oracle_mirrors_worked_examples() {
        let h1 = named(&["a", "b", "c"]);
        let h2 = named(&["b", "a", "d"]);
        assert!((rjd_oracle(&h1, &h2) - (1.0 - 4.0 / 6.0)).abs() < 1e-15);
        assert!((rjd_oracle(&h1, &h2) - rjd(&h1, &h2)).abs() < 1e-15);

        let h1 = named(&["a", "b"]);
        let h2 = named(&["b", "a"]);
        assert!((rjd_oracle(&h1, &h2) - (1.0 - 2.0 / 3.0)).abs() < 1e-15);

        let empty = TrendingSet::from_entries(vec![], 10, day());
        assert_eq!(rjd_oracle(&empty, &empty), 0.0);
        assert_eq!(rjd_oracle(&empty, &named(&["a"])), 1.0);
    }

    #[test]
    fn oracle_and_implementation_agree_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let alphabet: Vec<String> = (0..25).map(|i| format!("h{i:02}")).collect();
        for _ in 0..1000 {
            let mut pool = alphabet.clone();
            pool.shuffle(&mut rng);
            let n1 = rng.gen_range(0..=15);
            let s1 = ordered(&pool[..n1]);
            pool.shuffle(&mut rng);
            let n2 = rng.gen_range(0..=15);
            let s2 = ordered(&pool[..n2]);
            let diff = (rjd(&s1, &s2) - rjd_oracle(&s1, &s2)).abs();
            assert!(diff < 1e-12, "diff {diff} on sizes {n1}/{n2}");
        }
    }
}
