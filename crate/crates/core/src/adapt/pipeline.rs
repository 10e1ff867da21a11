use chrono::{Datelike, NaiveDate};
use serde::Serialize;
use std::time::{Duration, Instant};

use crate::adapt::registry::{InFlightJob, ModelRegistry};
use crate::adapt::{derive_seed, AdaptationMode, AdaptationStrategy, PipelineConfig, TrainParams};
use crate::embedding::{compute_targets, train_word2vec, update_word2vec};
use crate::error::{CoreError, Result};
use crate::eval::{evaluate_day, EvalRecord};
use crate::semantic::{
    fine_tune_mapper_only, fine_tuning, transfer_learning, Encoder, HashetModel, Mapper,
    SemanticMapper, TrainingReport,
};
use crate::stream::{Post, PostStream};
use crate::topology::{direct_count, run_window, TopologyMetrics};
use crate::trend::{detect_shift, top_hashtags, ShiftEvent, TrendingSet};

/// Everything produced by the bootstrap phase.
#[derive(Debug)]
pub struct Bootstrap {
    pub model: HashetModel,
    pub trending: TrendingSet,
    /// Encoder weights before any fine-tuning; the restore point for the
    /// W-window adaptation strategy.
    pub pretrained_encoder: Encoder,
    pub probe: Post,
    pub transfer_report: TrainingReport,
    pub finetune_report: TrainingReport,
}

impl Bootstrap {
    pub fn into_registry(self) -> Result<ModelRegistry> {
        ModelRegistry::new(self.model, self.pretrained_encoder, self.probe)
    }
}

/// Trains the initial model on the bootstrap window ending at `as_of`
/// and initializes the trending set.
pub fn bootstrap(
    stream: &PostStream,
    as_of: NaiveDate,
    config: &PipelineConfig,
) -> Result<Bootstrap> {
    config.validate()?;
    let window = stream.get_last_window(config.bootstrap_days, as_of);
    if window.is_empty() {
        return Err(CoreError::Config(format!(
            "bootstrap window of {} days ending {as_of} holds no posts",
            config.bootstrap_days
        )));
    }
    let train = &config.train;
    let seed = config.seed;

    let space = train_word2vec(window, &train.w2v, derive_seed(seed, "bootstrap-w2v", 0))?;
    let (pairs, _) = compute_targets(&space, window);
    if pairs.is_empty() {
        return Err(CoreError::Config(
            "bootstrap window yields no supervised pairs (no posts with in-vocabulary hashtags)"
                .into(),
        ));
    }

    let encoder = Encoder::from_corpus(
        window,
        train.encoder_dim,
        derive_seed(seed, "bootstrap-encoder", 0),
    );
    let pretrained_encoder = encoder.clone();
    let mapper = Mapper::new(&train.mapper_dims(), derive_seed(seed, "bootstrap-mapper", 0));
    let mut sm = SemanticMapper::stack(encoder, mapper)?;

    let transfer_report =
        transfer_learning(&mut sm, &pairs, train.transfer_epochs, train.transfer_lr)?;
    let finetune_report = fine_tuning(
        &mut sm,
        &pairs,
        train.finetune_epochs,
        train.finetune_lr,
        train.transfer_lr,
    )?;

    let probe = window
        .iter()
        .find(|p| !sm.encoder.input_rows(p).is_empty())
        .cloned()
        .ok_or_else(|| CoreError::Config("no bootstrap post has usable text".into()))?;

    let model = HashetModel::new(space, sm, 1)?;
    let trending = top_hashtags(&direct_count(window), config.trending_capacity, as_of);

    Ok(Bootstrap {
        model,
        trending,
        pretrained_encoder,
        probe,
        transfer_report,
        finetune_report,
    })
}

/// Rebuilds the model against the latest windows according to the chosen
/// strategy. `w_posts` is the sliding window, `f_posts` its fine-tuning
/// suffix. Empty windows abort the adaptation and keep the old model.
pub fn adapt(
    old: &HashetModel,
    pretrained_encoder: &Encoder,
    w_posts: &[Post],
    f_posts: &[Post],
    strategy: AdaptationStrategy,
    train: &TrainParams,
    seed: u64,
) -> Result<HashetModel> {
    if w_posts.is_empty() || f_posts.is_empty() {
        return Err(CoreError::Training(
            "adaptation aborted: empty sliding or fine-tuning window".into(),
        ));
    }
    let salt = old.generation;
    let w2v_seed = derive_seed(seed, "adapt-w2v", salt);
    let space = if train.warm_start_embeddings {
        update_word2vec(&old.space, w_posts, &train.w2v, w2v_seed)?
    } else {
        train_word2vec(w_posts, &train.w2v, w2v_seed)?
    };

    let sm = match strategy {
        AdaptationStrategy::TlwFtf | AdaptationStrategy::TlwFtw => {
            // Mapper reset + transfer learning on W against the updated
            // hashtag space; the W-window variant restores the original
            // pre-trained encoder first and fine-tunes on all of W.
            let encoder = match strategy {
                AdaptationStrategy::TlwFtw => pretrained_encoder.clone(),
                _ => old.sm.encoder.clone(),
            };
            let mapper = Mapper::new(&train.mapper_dims(), derive_seed(seed, "adapt-mapper", salt));
            let mut sm = SemanticMapper::stack(encoder, mapper)?;
            sm.version = old.sm.version;

            let (w_pairs, _) = compute_targets(&space, w_posts);
            transfer_learning(&mut sm, &w_pairs, train.transfer_epochs, train.transfer_lr)?;
            let finetune_pairs = match strategy {
                AdaptationStrategy::TlwFtw => w_pairs,
                _ => compute_targets(&space, f_posts).0,
            };
            fine_tuning(
                &mut sm,
                &finetune_pairs,
                train.finetune_epochs,
                train.finetune_lr,
                train.transfer_lr,
            )?;
            sm
        }
        AdaptationStrategy::FtEMlpF => {
            let mut sm = old.sm.clone();
            let (f_pairs, _) = compute_targets(&space, f_posts);
            fine_tuning(
                &mut sm,
                &f_pairs,
                train.finetune_epochs,
                train.finetune_lr,
                train.transfer_lr,
            )?;
            sm
        }
        AdaptationStrategy::FtMlpF => {
            let mut sm = old.sm.clone();
            let (f_pairs, _) = compute_targets(&space, f_posts);
            fine_tune_mapper_only(&mut sm, &f_pairs, train.finetune_epochs, train.finetune_lr)?;
            sm
        }
    };

    HashetModel::new(space, sm, old.generation + 1)
}

/// One line of the event log.
#[derive(Debug, Clone, Serialize)]
pub struct LoopEvent {
    #[serde(rename = "type")]
    pub kind: String,
    pub date: NaiveDate,
    pub version: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub strategy: String,
}

/// Chronological record of one detection-loop run.
#[derive(Debug, Default)]
pub struct RunLog {
    pub shift_events: Vec<ShiftEvent>,
    pub events: Vec<LoopEvent>,
    pub eval_records: Vec<EvalRecord>,
    pub topology_metrics: TopologyMetrics,
    /// Wall time spent inside `adapt` calls.
    pub adapt_wall: Duration,
    pub adaptations: u64,
    pub aborted: u64,
}

impl RunLog {
    pub fn write_events(&self, mut w: impl std::io::Write) -> Result<()> {
        for event in &self.events {
            let line = serde_json::to_string(event)
                .map_err(|e| CoreError::Config(format!("event serialization: {e}")))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

struct PendingJob {
    detected_on: NaiveDate,
    completes_on: NaiveDate,
    target_trending: TrendingSet,
}

/// Runs detection and adaptation day by day over `[from, to]`, serving
/// and evaluating each day's posts with the then-current model.
///
/// Within a day: a due deferred job is swapped in first, then the day's
/// posts are evaluated, then (at a tumbling boundary) detection runs and
/// may adapt. Immediate adaptations therefore serve from the next day.
/// Boundaries with an empty count table are skipped; there are no trends
/// to compare.
pub fn run_loop(
    stream: &PostStream,
    config: &PipelineConfig,
    registry: &ModelRegistry,
    trending: TrendingSet,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<RunLog> {
    config.validate()?;
    let mut log = RunLog::default();
    let mut trending = trending;
    let mut pending: Option<PendingJob> = None;
    let mut next_boundary = from + chrono::Days::new(u64::from(config.tumbling_days) - 1);

    let mut day = from;
    while day <= to {
        // Complete a due deferred job before serving the day.
        let due = pending
            .as_ref()
            .map_or(false, |job| job.completes_on <= day);
        if due {
            let job = pending.take().expect("job checked above");
            let rerun = registry
                .in_flight()
                .map_or(false, |info| info.coalesced_rerun);
            registry.set_in_flight(None);
            finish_job(stream, config, registry, &mut trending, &mut log, job)?;
            if rerun {
                // A shift fired while the job ran: realign once more on
                // the freshest windows.
                pending = start_job(stream, config, registry, &mut log, day);
            }
        }

        // Serve and evaluate today's posts with the current model.
        let model = registry.current();
        log.eval_records
            .extend(evaluate_day(&model, stream.day(day), config.k, config.eta)?);

        // Detection at the tumbling-window boundary.
        if day == next_boundary {
            let window_start = day - chrono::Days::new(u64::from(config.tumbling_days) - 1);
            let run = run_window(
                stream,
                &config.filters,
                &config.topology,
                window_start,
                day,
                derive_seed(config.seed, "topology", day.num_days_from_ce() as u64),
                config.exec_mode,
            )?;
            log.topology_metrics.merge(&run.metrics);
            let window_trends = top_hashtags(&run.counts, config.trending_capacity, day);

            if !window_trends.is_empty() {
                if let Some(event) = detect_shift(&trending, &window_trends, config.omega) {
                    log.events.push(LoopEvent {
                        kind: "shift".into(),
                        date: day,
                        version: registry.generation(),
                        delta: Some(event.delta),
                        strategy: config.strategy.name().into(),
                    });
                    log.shift_events.push(event.clone());

                    match config.adaptation {
                        AdaptationMode::Immediate => {
                            let job = PendingJob {
                                detected_on: day,
                                completes_on: day,
                                target_trending: event.current.clone(),
                            };
                            finish_job(stream, config, registry, &mut trending, &mut log, job)?;
                        }
                        AdaptationMode::Deferred { .. } => {
                            if pending.is_some() {
                                registry.request_rerun();
                            } else {
                                pending = start_job(stream, config, registry, &mut log, day);
                            }
                        }
                    }
                }
            }
            next_boundary = next_boundary + chrono::Days::new(u64::from(config.tumbling_days));
        }

        day = day + chrono::Days::new(1);
    }
    Ok(log)
}

/// Opens a deferred job snapshotting the trending set of the tumbling
/// window ending today.
fn start_job(
    stream: &PostStream,
    config: &PipelineConfig,
    registry: &ModelRegistry,
    log: &mut RunLog,
    day: NaiveDate,
) -> Option<PendingJob> {
    let latency = match config.adaptation {
        AdaptationMode::Deferred { latency_days } => latency_days,
        AdaptationMode::Immediate => 0,
    };
    let counts = direct_count(stream.get_last_window(config.tumbling_days, day));
    let target = top_hashtags(&counts, config.trending_capacity, day);
    if target.is_empty() {
        log.events.push(LoopEvent {
            kind: "abort".into(),
            date: day,
            version: registry.generation(),
            delta: None,
            strategy: config.strategy.name().into(),
        });
        log.aborted += 1;
        return None;
    }
    registry.set_in_flight(Some(InFlightJob {
        detected_on: day,
        completes_on: day + chrono::Days::new(u64::from(latency)),
        base_generation: registry.generation(),
        coalesced_rerun: false,
    }));
    Some(PendingJob {
        detected_on: day,
        completes_on: day + chrono::Days::new(u64::from(latency)),
        target_trending: target,
    })
}

/// Runs the adaptation for a job and swaps the result in; failures log
/// an abort and leave the previous model serving.
fn finish_job(
    stream: &PostStream,
    config: &PipelineConfig,
    registry: &ModelRegistry,
    trending: &mut TrendingSet,
    log: &mut RunLog,
    job: PendingJob,
) -> Result<()> {
    let old = registry.current();
    let w_posts = stream.get_last_window(config.sliding_days, job.detected_on);
    let f_posts = stream.get_last_window(config.finetune_days, job.detected_on);

    let started = Instant::now();
    let outcome = adapt(
        &old,
        registry.pretrained_encoder(),
        w_posts,
        f_posts,
        config.strategy,
        &config.train,
        config.seed,
    );
    log.adapt_wall += started.elapsed();

    let swapped = outcome.and_then(|new_model| registry.swap_model(new_model));
    match swapped {
        Ok(version) => {
            *trending = job.target_trending;
            log.adaptations += 1;
            log.events.push(LoopEvent {
                kind: "swap".into(),
                date: job.completes_on,
                version,
                delta: None,
                strategy: config.strategy.name().into(),
            });
            Ok(())
        }
        Err(CoreError::Training(_)) | Err(CoreError::Config(_)) => {
            log.aborted += 1;
            log.events.push(LoopEvent {
                kind: "abort".into(),
                date: job.completes_on,
                version: registry.generation(),
                delta: None,
                strategy: config.strategy.name().into(),
            });
            Ok(())
        }
        Err(other) => Err(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{generate_corpus, single_drift_spec};

    fn fast_config(seed: u64) -> PipelineConfig {
        let mut config = PipelineConfig::default();
        config.seed = seed;
        config.train.w2v.epochs = 6;
        config.train.transfer_epochs = 8;
        config.train.finetune_epochs = 3;
        config
    }

    #[test]
    fn bootstrap_produces_generation_one() {
        let stream = generate_corpus(&single_drift_spec(5)).unwrap();
        let config = fast_config(5);
        let as_of = stream.first_day().unwrap() + chrono::Days::new(13);
        let boot = bootstrap(&stream, as_of, &config).unwrap();
        assert_eq!(boot.model.generation, 1);
        assert!(boot.trending.len() <= 10);
        assert!(!boot.trending.is_empty());
        assert!(
            boot.transfer_report.final_loss() < boot.transfer_report.initial_loss,
            "transfer learning should reduce loss"
        );
    }

    #[test]
    fn bootstrap_requires_posts_and_pairs() {
        let stream = generate_corpus(&single_drift_spec(5)).unwrap();
        let config = fast_config(5);
        let before = stream.first_day().unwrap() - chrono::Days::new(30);
        assert!(matches!(
            bootstrap(&stream, before, &config),
            Err(CoreError::Config(_))
        ));

        // All-tagless corpus: no supervised pairs.
        let tagless: Vec<Post> = stream
            .posts()
            .iter()
            .take(500)
            .map(|p| Post {
                id: p.id.clone(),
                timestamp: p.timestamp,
                text: p
                    .text
                    .split_whitespace()
                    .filter(|w| !w.starts_with('#'))
                    .collect::<Vec<_>>()
                    .join(" "),
                hashtags: vec![],
            })
            .collect();
        let tagless = PostStream::from_posts(tagless);
        let as_of = tagless.last_day().unwrap();
        assert!(bootstrap(&tagless, as_of, &config).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let stream = generate_corpus(&single_drift_spec(6)).unwrap();
        let config = fast_config(6);
        let as_of = stream.first_day().unwrap() + chrono::Days::new(13);
        let a = bootstrap(&stream, as_of, &config).unwrap();
        let b = bootstrap(&stream, as_of, &config).unwrap();
        assert_eq!(a.trending, b.trending);
        assert_eq!(a.model.sm.encoder.digest(), b.model.sm.encoder.digest());
        assert_eq!(a.model.sm.mapper.digest(), b.model.sm.mapper.digest());

        let probe = a.probe.clone();
        let ra = crate::semantic::recommend(&a.model, &probe, 5, 0).unwrap();
        let rb = crate::semantic::recommend(&b.model, &probe, 5, 0).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn adapt_rejects_empty_windows() {
        let stream = generate_corpus(&single_drift_spec(5)).unwrap();
        let config = fast_config(5);
        let as_of = stream.first_day().unwrap() + chrono::Days::new(13);
        let boot = bootstrap(&stream, as_of, &config).unwrap();
        let err = adapt(
            &boot.model,
            &boot.pretrained_encoder,
            &[],
            &[],
            AdaptationStrategy::TlwFtf,
            &config.train,
            5,
        )
        .unwrap_err();
        assert!(err.to_string().contains("aborted"));
    }

    #[test]
    fn mapper_only_strategy_never_touches_encoder() {
        let stream = generate_corpus(&single_drift_spec(5)).unwrap();
        let config = fast_config(5);
        let first = stream.first_day().unwrap();
        let as_of = first + chrono::Days::new(13);
        let boot = bootstrap(&stream, as_of, &config).unwrap();
        let digest = boot.model.sm.encoder.digest();

        let drift_day = first + chrono::Days::new(21);
        let w = stream.get_last_window(config.sliding_days, drift_day);
        let f = stream.get_last_window(config.finetune_days, drift_day);
        let adapted = adapt(
            &boot.model,
            &boot.pretrained_encoder,
            w,
            f,
            AdaptationStrategy::FtMlpF,
            &config.train,
            5,
        )
        .unwrap();
        assert_eq!(adapted.sm.encoder.digest(), digest);
        assert_eq!(adapted.generation, 2);
    }

    #[test]
    fn restore_strategy_starts_from_pretrained_encoder() {
        let stream = generate_corpus(&single_drift_spec(5)).unwrap();
        let mut config = fast_config(5);
        // Zero fine-tuning epochs: the adapted encoder must then be
        // byte-identical to the pretrained snapshot under tlw-ftw, and to
        // the bootstrap-tuned encoder under tlw-ftf.
        config.train.finetune_epochs = 0;
        let first = stream.first_day().unwrap();
        let boot = bootstrap(&stream, first + chrono::Days::new(13), &config).unwrap();
        let drift_day = first + chrono::Days::new(21);
        let w = stream.get_last_window(config.sliding_days, drift_day);
        let f = stream.get_last_window(config.finetune_days, drift_day);

        let restored = adapt(
            &boot.model,
            &boot.pretrained_encoder,
            w,
            f,
            AdaptationStrategy::TlwFtw,
            &config.train,
            5,
        )
        .unwrap();
        assert_eq!(
            restored.sm.encoder.digest(),
            boot.pretrained_encoder.digest()
        );

        let kept = adapt(
            &boot.model,
            &boot.pretrained_encoder,
            w,
            f,
            AdaptationStrategy::TlwFtf,
            &config.train,
            5,
        )
        .unwrap();
        assert_eq!(kept.sm.encoder.digest(), boot.model.sm.encoder.digest());
    }
}
