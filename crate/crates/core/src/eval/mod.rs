//! Rank-based recall evaluation, daily/weekly aggregation, a definitional
//! oracle for the ranked Jaccard distance, and the synthetic drift-corpus
//! generator.

mod corpus;
mod oracle;

pub use corpus::{
    generate_corpus, single_drift_spec, stationary_spec, two_drift_spec, write_corpus,
    CorpusSpec, DriftEvent, TopicSpec,
};
pub use oracle::rjd_oracle;

use chrono::{Datelike, NaiveDate};
use std::collections::BTreeMap;
use std::collections::HashSet;
use std::io::Write;

use crate::adapt::ModelRegistry;
use crate::error::{CoreError, Result};
use crate::semantic::{recommend, HashetModel};
use crate::stream::{Post, PostStream};

/// 1 iff the recommended hashtag is one of the post's targets.
pub fn relevance(recommended: &str, targets: &HashSet<String>) -> u32 {
    u32::from(targets.contains(recommended))
}

/// Fraction of target hashtags present in the recommended list.
/// Errors on an empty target set; the measure is undefined there.
pub fn recall_at_k(recommended: &[String], targets: &HashSet<String>) -> Result<f64> {
    if targets.is_empty() {
        return Err(CoreError::EmptyTargets);
    }
    let hits: u32 = recommended.iter().map(|r| relevance(r, targets)).sum();
    Ok(f64::from(hits) / targets.len() as f64)
}

/// Outcome of evaluating one post against the then-serving model.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub post_id: String,
    pub date: NaiveDate,
    pub recommended: Vec<String>,
    pub targets: HashSet<String>,
    pub recall: f64,
    pub model_generation: u64,
}

/// One day of aggregated recall.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyPoint {
    pub date: NaiveDate,
    pub n_posts: usize,
    pub mean_recall: f64,
    /// Generation of the model that served the day's first post.
    pub model_generation: u64,
}

/// One ISO week of aggregated recall, weighted by post counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyPoint {
    pub iso_week: String,
    pub n_posts: usize,
    pub mean_recall: f64,
}

/// Evaluates the posts of one day against a fixed model.
///
/// Targets are the post's own hashtags; the encoder never sees hashtag
/// tokens, so targets cannot leak into the input. Posts without targets
/// are skipped; posts whose text is empty after hashtag removal are
/// skipped and counted separately.
pub fn evaluate_day(
    model: &HashetModel,
    posts: &[Post],
    k: usize,
    eta: usize,
) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::new();
    for post in posts {
        if post.hashtags.is_empty() {
            continue;
        }
        let targets: HashSet<String> = post.hashtags.iter().cloned().collect();
        let recommended = match recommend(model, post, k, eta) {
            Ok(list) => list.into_iter().map(|(h, _)| h).collect::<Vec<_>>(),
            // No usable input text; recall is undefined rather than zero.
            Err(CoreError::Config(_)) => continue,
            Err(e) => return Err(e),
        };
        let recall = recall_at_k(&recommended, &targets)?;
        records.push(EvalRecord {
            post_id: post.id.clone(),
            date: post.day(),
            recommended,
            targets,
            recall,
            model_generation: model.generation,
        });
    }
    Ok(records)
}

/// Evaluates a date range against whatever model the registry serves,
/// day by day. With a never-swapped registry this is the frozen-baseline
/// ablation path.
pub fn evaluate_stream(
    registry: &ModelRegistry,
    stream: &PostStream,
    from: NaiveDate,
    to: NaiveDate,
    k: usize,
    eta: usize,
) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::new();
    let mut day = from;
    while day <= to {
        let model = registry.current();
        records.extend(evaluate_day(&model, stream.day(day), k, eta)?);
        day = day + chrono::Days::new(1);
    }
    Ok(records)
}

/// Groups records into a per-day series.
pub fn daily_series(records: &[EvalRecord]) -> Vec<DailyPoint> {
    let mut by_day: BTreeMap<NaiveDate, (usize, f64, u64)> = BTreeMap::new();
    for rec in records {
        let entry = by_day.entry(rec.date).or_insert((0, 0.0, rec.model_generation));
        entry.0 += 1;
        entry.1 += rec.recall;
    }
    by_day
        .into_iter()
        .map(|(date, (n, total, generation))| DailyPoint {
            date,
            n_posts: n,
            mean_recall: total / n as f64,
            model_generation: generation,
        })
        .collect()
}

/// Weekly means, weighted by daily post counts: the week's mean equals
/// the recall sum over all its posts divided by the post count.
pub fn weekly_series(daily: &[DailyPoint]) -> Vec<WeeklyPoint> {
    let mut by_week: BTreeMap<(i32, u32), (usize, f64)> = BTreeMap::new();
    for point in daily {
        let week = point.date.iso_week();
        let entry = by_week.entry((week.year(), week.week())).or_insert((0, 0.0));
        entry.0 += point.n_posts;
        entry.1 += point.mean_recall * point.n_posts as f64;
    }
    by_week
        .into_iter()
        .map(|((year, week), (n, total))| WeeklyPoint {
            iso_week: format!("{year}-W{week:02}"),
            n_posts: n,
            mean_recall: total / n as f64,
        })
        .collect()
}

/// Mean recall over records dated strictly after `after`.
pub fn mean_recall_after(records: &[EvalRecord], after: NaiveDate) -> Option<f64> {
    let tail: Vec<f64> = records
        .iter()
        .filter(|r| r.date > after)
        .map(|r| r.recall)
        .collect();
    if tail.is_empty() {
        None
    } else {
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// CSV series `(date, n_posts, mean_recall, model_version)`.
pub fn write_daily_csv(mut w: impl Write, daily: &[DailyPoint]) -> Result<()> {
    writeln!(w, "date,n_posts,mean_recall,model_version")?;
    for p in daily {
        writeln!(
            w,
            "{},{},{:.6},{}",
            p.date, p.n_posts, p.mean_recall, p.model_generation
        )?;
    }
    Ok(())
}

/// CSV series `(iso_week, n_posts, mean_recall)`.
pub fn write_weekly_csv(mut w: impl Write, weekly: &[WeeklyPoint]) -> Result<()> {
    writeln!(w, "iso_week,n_posts,mean_recall")?;
    for p in weekly {
        writeln!(w, "{},{},{:.6}", p.iso_week, p.n_posts, p.mean_recall)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn targets(tags: &[&str]) -> HashSet<String> {
        tags.iter().map(|t| t.to_string()).collect()
    }

    fn list(tags: &[&str]) -> Vec<String> {
        tags.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn relevance_membership() {
        let t = targets(&["covid19", "maga"]);
        assert_eq!(relevance("covid19", &t), 1);
        assert_eq!(relevance("bts", &targets(&["covid19"])), 0);
    }

    #[test]
    fn recall_examples() {
        assert_eq!(
            recall_at_k(&list(&["x", "y", "z"]), &targets(&["x", "y"])).unwrap(),
            1.0
        );
        assert_eq!(
            recall_at_k(&list(&["x", "a", "b"]), &targets(&["x", "y"])).unwrap(),
            0.5
        );
        assert_eq!(
            recall_at_k(&list(&["a", "b"]), &targets(&["x", "y"])).unwrap(),
            0.0
        );
        assert!(matches!(
            recall_at_k(&list(&["a"]), &targets(&[])),
            Err(CoreError::EmptyTargets)
        ));
    }

    #[test]
    fn recall_monotone_in_k() {
        let t = targets(&["a", "b", "c"]);
        let full = list(&["x", "a", "y", "b", "z", "c"]);
        let mut last = 0.0;
        for k in 1..=full.len() {
            let r = recall_at_k(&full[..k], &t).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn weekly_mean_is_post_weighted() {
        let daily = vec![
            DailyPoint {
                date: NaiveDate::from_ymd_opt(2020, 8, 3).unwrap(), // Mon, W32
                n_posts: 10,
                mean_recall: 1.0,
                model_generation: 1,
            },
            DailyPoint {
                date: NaiveDate::from_ymd_opt(2020, 8, 4).unwrap(),
                n_posts: 30,
                mean_recall: 0.0,
                model_generation: 1,
            },
        ];
        let weekly = weekly_series(&daily);
        assert_eq!(weekly.len(), 1);
        assert_eq!(weekly[0].iso_week, "2020-W32");
        assert!((weekly[0].mean_recall - 0.25).abs() < 1e-12);
        assert_eq!(weekly[0].n_posts, 40);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(128))]
        #[test]
        fn recall_bounded(
            rec in proptest::collection::vec(0usize..30, 0..10),
            tgt in proptest::collection::hash_set(0usize..30, 1..8),
        ) {
            let mut dedup = Vec::new();
            for r in rec {
                if !dedup.contains(&r) {
                    dedup.push(r);
                }
            }
            let rec: Vec<String> = dedup.iter().map(|r| format!("h{r}")).collect();
            let tgt: HashSet<String> = tgt.iter().map(|t| format!("h{t}")).collect();
            let r = recall_at_k(&rec, &tgt).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
