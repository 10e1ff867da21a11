//! End-to-end orchestration: bootstrap, the daily detection loop,
//! strategy-selectable model adaptation, and atomic hot swap of the
//! serving model.

mod pipeline;
mod registry;

pub use pipeline::{adapt, bootstrap, run_loop, Bootstrap, LoopEvent, RunLog};
pub use registry::{InFlightJob, ModelRegistry};

use std::fmt;
use std::str::FromStr;

use crate::embedding::Word2VecParams;
use crate::error::{CoreError, Result};
use crate::topology::{ExecMode, StageConfig};

/// How the semantic mapping model is realigned after a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptationStrategy {
    /// Transfer learning on W, then end-to-end fine-tuning on W with the
    /// original pre-trained encoder weights restored first.
    TlwFtw,
    /// Transfer learning on W, then progressive end-to-end fine-tuning
    /// on F from current weights. The default.
    TlwFtf,
    /// End-to-end fine-tuning on F only, from current weights.
    FtEMlpF,
    /// Mapper-only fine-tuning on F; the encoder is never touched.
    FtMlpF,
}

impl AdaptationStrategy {
    pub const ALL: [AdaptationStrategy; 4] = [
        AdaptationStrategy::TlwFtw,
        AdaptationStrategy::TlwFtf,
        AdaptationStrategy::FtEMlpF,
        AdaptationStrategy::FtMlpF,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AdaptationStrategy::TlwFtw => "tlw-ftw",
            AdaptationStrategy::TlwFtf => "tlw-ftf",
            AdaptationStrategy::FtEMlpF => "ft-e-mlp-f",
            AdaptationStrategy::FtMlpF => "ft-mlp-f",
        }
    }
}

impl fmt::Display for AdaptationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdaptationStrategy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tlw-ftw" => Ok(AdaptationStrategy::TlwFtw),
            "tlw-ftf" => Ok(AdaptationStrategy::TlwFtf),
            "ft-e-mlp-f" => Ok(AdaptationStrategy::FtEMlpF),
            "ft-mlp-f" => Ok(AdaptationStrategy::FtMlpF),
            other => Err(CoreError::Config(format!(
                "unknown strategy `{other}`; expected one of tlw-ftw, tlw-ftf, ft-e-mlp-f, ft-mlp-f"
            ))),
        }
    }
}

/// Training hyperparameters for bootstrap and adaptation.
#[derive(Debug, Clone)]
pub struct TrainParams {
    pub w2v: Word2VecParams,
    /// Encoder (sentence-embedding) dimensionality.
    pub encoder_dim: usize,
    /// Hidden layer sizes of the mapper; input/output dims are implied.
    pub mapper_hidden: Vec<usize>,
    pub transfer_epochs: usize,
    pub transfer_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    /// Whether adaptation retrains the embedding space from the previous
    /// vectors (update) or from scratch.
    pub warm_start_embeddings: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        let w2v = Word2VecParams::default();
        TrainParams {
            encoder_dim: 64,
            mapper_hidden: vec![2 * w2v.dim],
            w2v,
            transfer_epochs: 20,
            transfer_lr: 0.05,
            finetune_epochs: 20,
            finetune_lr: 0.005,
            warm_start_embeddings: false,
        }
    }
}

impl TrainParams {
    pub fn mapper_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.encoder_dim];
        dims.extend(&self.mapper_hidden);
        dims.push(self.w2v.dim);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_dim == 0 || self.w2v.dim == 0 {
            return Err(CoreError::Config("embedding dims must be >= 1".into()));
        }
        if self.finetune_lr >= self.transfer_lr {
            return Err(CoreError::Config(format!(
                "fine-tuning rate {} must be below the transfer rate {}",
                self.finetune_lr, self.transfer_lr
            )));
        }
        Ok(())
    }
}

/// When adaptation work happens relative to stream time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptationMode {
    /// Adaptation completes between days; fully synchronous.
    Immediate,
    /// Adaptation occupies a separate logical context and its result is
    /// swapped in `latency_days` later; overlapping shifts coalesce into
    /// one follow-up job.
    Deferred { latency_days: u32 },
}

/// Full pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub bootstrap_days: u32,
    pub tumbling_days: u32,
    pub sliding_days: u32,
    pub finetune_days: u32,
    pub omega: f64,
    pub trending_capacity: usize,
    pub k: usize,
    pub eta: usize,
    pub strategy: AdaptationStrategy,
    pub filters: Vec<String>,
    pub train: TrainParams,
    pub topology: StageConfig,
    pub exec_mode: ExecMode,
    pub adaptation: AdaptationMode,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bootstrap_days: 14,
            tumbling_days: 1,
            sliding_days: 14,
            finetune_days: 4,
            omega: 0.9,
            trending_capacity: 10,
            k: 5,
            eta: 0,
            strategy: AdaptationStrategy::TlwFtf,
            filters: Vec::new(),
            train: TrainParams::default(),
            topology: StageConfig::default(),
            exec_mode: ExecMode::Polled,
            adaptation: AdaptationMode::Immediate,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, days) in [
            ("bootstrap", self.bootstrap_days),
            ("tumbling", self.tumbling_days),
            ("sliding", self.sliding_days),
            ("finetune", self.finetune_days),
        ] {
            if days < 1 {
                return Err(CoreError::Config(format!("{name} window must be >= 1 day")));
            }
        }
        if self.finetune_days >= self.sliding_days {
            return Err(CoreError::Config(format!(
                "finetune window ({} days) must be shorter than the sliding window ({} days)",
                self.finetune_days, self.sliding_days
            )));
        }
        if self.tumbling_days > self.sliding_days {
            return Err(CoreError::Config(
                "tumbling window cannot exceed the sliding window".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(CoreError::Config("omega out of range [0, 1]".into()));
        }
        if self.trending_capacity < 1 {
            return Err(CoreError::Config("trending capacity must be >= 1".into()));
        }
        if self.k < 1 {
            return Err(CoreError::Config("k must be >= 1".into()));
        }
        if let AdaptationMode::Deferred { latency_days } = self.adaptation {
            if latency_days < 1 {
                return Err(CoreError::Config(
                    "deferred adaptation latency must be >= 1 day".into(),
                ));
            }
        }
        self.train.validate()?;
        self.topology.validate()
    }
}

/// Stable per-phase seed derivation from the run seed.
pub(crate) fn derive_seed(base: u64, tag: &str, salt: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    base ^ h ^ salt.wrapping_mul(0x9e3779b97f4a7c15)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in AdaptationStrategy::ALL {
            assert_eq!(s.name().parse::<AdaptationStrategy>().unwrap(), s);
        }
        assert!("nope".parse::<AdaptationStrategy>().is_err());
    }

    #[test]
    fn default_config_is_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn config_guards() {
        let mut config = PipelineConfig::default();
        config.omega = 1.01;
        assert!(config.validate().is_err());

        let mut config = PipelineConfig::default();
        config.finetune_days = 14;
        assert!(config.validate().is_err());

        let mut config = PipelineConfig::default();
        config.train.finetune_lr = 0.05;
        assert!(config.validate().is_err());

        let mut config = PipelineConfig::default();
        config.tumbling_days = 20;
        assert!(config.validate().is_err());
    }

    #[test]
    fn derived_seeds_differ_by_tag_and_salt() {
        let a = derive_seed(1, "w2v", 0);
        let b = derive_seed(1, "mapper", 0);
        let c = derive_seed(1, "w2v", 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, "w2v", 0));
    }
}
