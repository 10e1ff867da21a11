//! End-to-end scenarios for the detection/adaptation loop on small
//! synthetic corpora with reduced training budgets.

use chrono::NaiveDate;
use tagdrift_core::adapt::{
    bootstrap, run_loop, AdaptationMode, PipelineConfig,
};
use tagdrift_core::eval::{
    daily_series, generate_corpus, single_drift_spec, stationary_spec, two_drift_spec,
    weekly_series,
};
use tagdrift_core::stream::PostStream;

fn fast_config(seed: u64) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.seed = seed;
    config.train.w2v.epochs = 5;
    config.train.transfer_epochs = 8;
    config.train.finetune_epochs = 3;
    config
}

fn day_of(stream: &PostStream, index: u64) -> NaiveDate {
    stream.first_day().unwrap() + chrono::Days::new(index - 1)
}

/// Bootstraps on the first 14 days and runs the loop over the rest.
fn run(
    stream: &PostStream,
    config: &PipelineConfig,
) -> (tagdrift_core::adapt::RunLog, tagdrift_core::adapt::ModelRegistry) {
    let boot_end = day_of(stream, u64::from(config.bootstrap_days));
    let boot = bootstrap(stream, boot_end, config).unwrap();
    let trending = boot.trending.clone();
    let registry = boot.into_registry().unwrap();
    let log = run_loop(
        stream,
        config,
        &registry,
        trending,
        boot_end + chrono::Days::new(1),
        stream.last_day().unwrap(),
    )
    .unwrap();
    (log, registry)
}

#[test]
fn stationary_corpus_never_adapts() {
    let stream = generate_corpus(&stationary_spec(40)).unwrap();
    let config = fast_config(40);
    let (log, registry) = run(&stream, &config);
    assert!(log.shift_events.is_empty(), "events: {:?}", log.events);
    assert_eq!(registry.generation(), 1);
    assert_eq!(log.adaptations, 0);
}

#[test]
fn single_drift_detected_once_with_full_turnover() {
    let stream = generate_corpus(&single_drift_spec(41)).unwrap();
    let config = fast_config(41);
    let (log, registry) = run(&stream, &config);

    assert_eq!(log.shift_events.len(), 1, "events: {:?}", log.events);
    let shift = &log.shift_events[0];
    assert_eq!(shift.date, day_of(&stream, 20));
    assert_eq!(shift.delta, 1.0);
    assert_eq!(registry.generation(), 2);

    // Event log ordering: shift then swap, same day in immediate mode.
    let kinds: Vec<&str> = log.events.iter().map(|e| e.kind.as_str()).collect();
    assert_eq!(kinds, vec!["shift", "swap"]);
    assert_eq!(log.events[1].version, 2);
}

#[test]
fn two_drifts_reach_generation_three() {
    let stream = generate_corpus(&two_drift_spec(42)).unwrap();
    let config = fast_config(42);
    let (log, registry) = run(&stream, &config);

    assert_eq!(log.shift_events.len(), 2);
    assert_eq!(log.shift_events[0].date, day_of(&stream, 20));
    assert_eq!(log.shift_events[1].date, day_of(&stream, 40));
    assert_eq!(registry.generation(), 3);
    assert_eq!(log.adaptations, 2);

    // Daily series covers every test day; weekly aggregation is
    // post-weighted and consistent with the daily view.
    let daily = daily_series(&log.eval_records);
    assert_eq!(daily.len(), 46);
    let weekly = weekly_series(&daily);
    let daily_total: f64 = daily
        .iter()
        .map(|p| p.mean_recall * p.n_posts as f64)
        .sum();
    let weekly_total: f64 = weekly
        .iter()
        .map(|p| p.mean_recall * p.n_posts as f64)
        .sum();
    assert!((daily_total - weekly_total).abs() < 1e-9);
}

#[test]
fn deferred_adaptation_coalesces_overlapping_shifts() {
    let stream = generate_corpus(&single_drift_spec(43)).unwrap();
    let mut config = fast_config(43);
    config.adaptation = AdaptationMode::Deferred { latency_days: 3 };
    let (log, registry) = run(&stream, &config);

    // The shift fires daily from day 20 until the swap lands on day 23;
    // the in-flight job coalesces those extra shifts into one rerun.
    let shift_dates: Vec<NaiveDate> = log.shift_events.iter().map(|e| e.date).collect();
    assert_eq!(
        shift_dates,
        vec![day_of(&stream, 20), day_of(&stream, 21), day_of(&stream, 22)]
    );
    let swaps: Vec<&tagdrift_core::adapt::LoopEvent> =
        log.events.iter().filter(|e| e.kind == "swap").collect();
    assert_eq!(swaps.len(), 2, "one job plus one coalesced rerun");
    assert_eq!(swaps[0].date, day_of(&stream, 23));
    assert_eq!(swaps[0].version, 2);
    assert_eq!(swaps[1].date, day_of(&stream, 26));
    assert_eq!(swaps[1].version, 3);
    assert_eq!(registry.generation(), 3);

    // Versions observed through the event log never decrease.
    let versions: Vec<u64> = log.events.iter().map(|e| e.version).collect();
    assert!(versions.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn failed_adaptation_aborts_and_keeps_serving() {
    let stream = generate_corpus(&single_drift_spec(44)).unwrap();
    let good = fast_config(44);
    let boot_end = day_of(&stream, 14);
    let boot = bootstrap(&stream, boot_end, &good).unwrap();
    let trending = boot.trending.clone();
    let registry = boot.into_registry().unwrap();

    // Break only the adaptation path: no token can reach min_count.
    let mut broken = good.clone();
    broken.train.w2v.min_count = 1_000_000;
    let log = run_loop(
        &stream,
        &broken,
        &registry,
        trending,
        boot_end + chrono::Days::new(1),
        stream.last_day().unwrap(),
    )
    .unwrap();

    assert_eq!(registry.generation(), 1, "old model must keep serving");
    assert_eq!(log.adaptations, 0);
    assert!(log.aborted >= 1);
    // With no successful swap the trending set never updates, so the
    // shift keeps firing on every post-drift day.
    assert_eq!(log.shift_events.len(), 11);
    assert!(log.events.iter().any(|e| e.kind == "abort"));
    // Serving stayed available: every test day produced evaluations.
    assert_eq!(daily_series(&log.eval_records).len(), 16);
}

#[test]
fn run_log_event_lines_are_single_json_objects() {
    let stream = generate_corpus(&single_drift_spec(45)).unwrap();
    let config = fast_config(45);
    let (log, _) = run(&stream, &config);
    let mut buf = Vec::new();
    log.write_events(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(value.get("type").is_some());
        assert!(value.get("date").is_some());
        assert!(value.get("version").is_some());
        assert!(value.get("strategy").is_some());
    }
    assert_eq!(text.lines().count(), 2);
}
