use clap::Args;
use serde::Deserialize;
use std::path::PathBuf;

use tagdrift_core::adapt::{AdaptationMode, AdaptationStrategy, PipelineConfig};
use tagdrift_core::topology::{ExecMode, Grouping};

use crate::CliError;

/// Pipeline flags shared by `run` and `compare-strategies`. Defaults are
/// the standard hyperparameters; a config file overrides flags, flags
/// override defaults.
#[derive(Debug, Args)]
pub struct PipelineFlags {
    /// Config file (TOML) whose keys override these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, default_value_t = 14)]
    pub bootstrap_days: u32,
    #[arg(long, default_value_t = 1)]
    pub tumbling_days: u32,
    #[arg(long, default_value_t = 14)]
    pub sliding_days: u32,
    #[arg(long, default_value_t = 4)]
    pub finetune_days: u32,
    /// Trend-shift threshold on the ranked Jaccard distance.
    #[arg(long, default_value_t = 0.9)]
    pub omega: f64,
    /// Trending-set capacity.
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Extra neighbors appended beyond k.
    #[arg(long, default_value_t = 0)]
    pub eta: usize,
    /// Adaptation strategy: tlw-ftw, tlw-ftf, ft-e-mlp-f, ft-mlp-f.
    #[arg(long, default_value = "tlw-ftf")]
    pub strategy: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Keyword filters applied by the spout (repeatable).
    #[arg(long = "filter")]
    pub filters: Vec<String>,

    /// Embedding dimensionality (hashtag space and encoder).
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 12)]
    pub w2v_epochs: usize,
    #[arg(long, default_value_t = 2)]
    pub min_count: u64,
    #[arg(long, default_value_t = 20)]
    pub transfer_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub finetune_epochs: usize,
    /// Retrain the embedding space from the previous vectors instead of
    /// from scratch during adaptation.
    #[arg(long)]
    pub warm_embeddings: bool,

    /// Reader/combiner parallelism of the detection topology.
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    /// Tuple grouping into the combiner stage: shuffle or field.
    #[arg(long, default_value = "shuffle")]
    pub grouping: String,
    /// Disable the pre-aggregation combiner.
    #[arg(long)]
    pub no_combiner: bool,
    #[arg(long, default_value_t = 1024)]
    pub combiner_flush_size: usize,

    /// Run stage instances on threads with bounded queues.
    #[arg(long)]
    pub threaded: bool,
    /// Force the single-threaded polling topology (overrides --threaded).
    #[arg(long)]
    pub deterministic: bool,
    /// Deferred adaptation latency in days; 0 adapts between days.
    #[arg(long, default_value_t = 0)]
    pub adapt_latency_days: u32,
}

/// Optional keys of the TOML config file; present keys override flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    bootstrap_days: Option<u32>,
    tumbling_days: Option<u32>,
    sliding_days: Option<u32>,
    finetune_days: Option<u32>,
    omega: Option<f64>,
    top_n: Option<usize>,
    k: Option<usize>,
    eta: Option<usize>,
    strategy: Option<String>,
    seed: Option<u64>,
    filters: Option<Vec<String>>,
    dim: Option<usize>,
    w2v_epochs: Option<usize>,
    min_count: Option<u64>,
    transfer_epochs: Option<usize>,
    finetune_epochs: Option<usize>,
    warm_embeddings: Option<bool>,
    parallelism: Option<usize>,
    grouping: Option<String>,
    combiner: Option<bool>,
    combiner_flush_size: Option<usize>,
    threaded: Option<bool>,
    adapt_latency_days: Option<u32>,
}

fn parse_grouping(name: &str) -> Result<Grouping, CliError> {
    match name {
        "shuffle" => Ok(Grouping::Shuffle),
        "field" => Ok(Grouping::Field),
        other => Err(CliError::Config(format!(
            "unknown grouping `{other}`; expected shuffle or field"
        ))),
    }
}

impl PipelineFlags {
    /// Resolves flags plus optional config file into a validated
    /// [`PipelineConfig`].
    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let file: FileConfig = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };

        let strategy_name = file.strategy.clone().unwrap_or_else(|| self.strategy.clone());
        let strategy: AdaptationStrategy = strategy_name.parse()?;
        let grouping = parse_grouping(&file.grouping.clone().unwrap_or_else(|| self.grouping.clone()))?;

        let mut config = PipelineConfig::default();
        config.bootstrap_days = file.bootstrap_days.unwrap_or(self.bootstrap_days);
        config.tumbling_days = file.tumbling_days.unwrap_or(self.tumbling_days);
        config.sliding_days = file.sliding_days.unwrap_or(self.sliding_days);
        config.finetune_days = file.finetune_days.unwrap_or(self.finetune_days);
        config.omega = file.omega.unwrap_or(self.omega);
        config.trending_capacity = file.top_n.unwrap_or(self.top_n);
        config.k = file.k.unwrap_or(self.k);
        config.eta = file.eta.unwrap_or(self.eta);
        config.strategy = strategy;
        config.filters = file.filters.unwrap_or_else(|| self.filters.clone());
        config.seed = file.seed.unwrap_or(self.seed);

        let dim = file.dim.unwrap_or(self.dim);
        config.train.w2v.dim = dim;
        config.train.encoder_dim = dim;
        config.train.mapper_hidden = vec![2 * dim];
        config.train.w2v.epochs = file.w2v_epochs.unwrap_or(self.w2v_epochs);
        config.train.w2v.min_count = file.min_count.unwrap_or(self.min_count);
        config.train.transfer_epochs = file.transfer_epochs.unwrap_or(self.transfer_epochs);
        config.train.finetune_epochs = file.finetune_epochs.unwrap_or(self.finetune_epochs);
        config.train.warm_start_embeddings =
            file.warm_embeddings.unwrap_or(self.warm_embeddings);

        config.topology.parallelism = file.parallelism.unwrap_or(self.parallelism);
        config.topology.grouping = grouping;
        config.topology.combiner_enabled = file.combiner.unwrap_or(!self.no_combiner);
        config.topology.combiner_flush_size =
            file.combiner_flush_size.unwrap_or(self.combiner_flush_size);

        let threaded = file.threaded.unwrap_or(self.threaded);
        config.exec_mode = if self.deterministic || !threaded {
            ExecMode::Polled
        } else {
            ExecMode::Threaded
        };
        let latency = file.adapt_latency_days.unwrap_or(self.adapt_latency_days);
        config.adaptation = if latency == 0 {
            AdaptationMode::Immediate
        } else {
            AdaptationMode::Deferred {
                latency_days: latency,
            }
        };

        config.validate()?;
        Ok(config)
    }
}
