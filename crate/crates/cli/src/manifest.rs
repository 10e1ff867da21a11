use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use tagdrift_core::adapt::PipelineConfig;

use crate::CliError;

/// Outcome and provenance of one invocation, written on success and on
/// failure so a run can always be reproduced from its manifest.
pub struct Manifest {
    pub command: String,
    pub run_id: String,
    pub status: String,
    pub error: Option<String>,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<(String, String)>,
    pub config: Vec<(String, String)>,
    pub timings: Vec<(String, Duration)>,
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            run_id: String::new(),
            status: "running".into(),
            error: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn input(&mut self, key: &str, value: impl ToString) {
        self.inputs.push((key.to_string(), value.to_string()));
    }

    pub fn output(&mut self, key: &str, value: impl ToString) {
        self.outputs.push((key.to_string(), value.to_string()));
    }

    pub fn timing(&mut self, phase: &str, elapsed: Duration) {
        self.timings.push((phase.to_string(), elapsed));
    }

    pub fn record_config(&mut self, config: &PipelineConfig) {
        let pairs: Vec<(&str, String)> = vec![
            ("bootstrap_days", config.bootstrap_days.to_string()),
            ("tumbling_days", config.tumbling_days.to_string()),
            ("sliding_days", config.sliding_days.to_string()),
            ("finetune_days", config.finetune_days.to_string()),
            ("omega", config.omega.to_string()),
            ("top_n", config.trending_capacity.to_string()),
            ("k", config.k.to_string()),
            ("eta", config.eta.to_string()),
            ("strategy", config.strategy.to_string()),
            ("seed", config.seed.to_string()),
            ("filters", format!("{:?}", config.filters)),
            ("dim", config.train.w2v.dim.to_string()),
            ("w2v_epochs", config.train.w2v.epochs.to_string()),
            ("min_count", config.train.w2v.min_count.to_string()),
            ("transfer_epochs", config.train.transfer_epochs.to_string()),
            ("transfer_lr", config.train.transfer_lr.to_string()),
            ("finetune_epochs", config.train.finetune_epochs.to_string()),
            ("finetune_lr", config.train.finetune_lr.to_string()),
            (
                "warm_embeddings",
                config.train.warm_start_embeddings.to_string(),
            ),
            ("parallelism", config.topology.parallelism.to_string()),
            ("grouping", format!("{:?}", config.topology.grouping)),
            ("combiner", config.topology.combiner_enabled.to_string()),
            (
                "combiner_flush_size",
                config.topology.combiner_flush_size.to_string(),
            ),
            ("exec_mode", format!("{:?}", config.exec_mode)),
            ("adaptation", format!("{:?}", config.adaptation)),
        ];
        self.config = pairs
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        // Run id derives from the resolved config and inputs, so a rerun
        // with this manifest's values reproduces the run.
        let mut blob = self.command.clone();
        for (k, v) in self.inputs.iter().chain(&self.config) {
            let _ = write!(blob, ";{k}={v}");
        }
        self.run_id = format!("{:016x}", fnv64(blob.as_bytes()));
    }

    pub fn finish_ok(&mut self) {
        self.status = "ok".into();
    }

    pub fn finish_err(&mut self, err: &CliError) {
        self.status = match err {
            CliError::Config(_) => "config_error".into(),
            CliError::Runtime(_) => "runtime_error".into(),
        };
        self.error = Some(err.message().to_string());
    }

    /// Renders the manifest as human-readable key-value TOML.
    pub fn render(&self) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::new();
        let _ = writeln!(out, "command = \"{}\"", esc(&self.command));
        let _ = writeln!(out, "run_id = \"{}\"", self.run_id);
        let _ = writeln!(out, "status = \"{}\"", self.status);
        if let Some(err) = &self.error {
            let _ = writeln!(out, "error = \"{}\"", esc(err));
        }
        let section = |out: &mut String, name: &str, pairs: &[(String, String)]| {
            if pairs.is_empty() {
                return;
            }
            let _ = writeln!(out, "\n[{name}]");
            for (k, v) in pairs {
                let _ = writeln!(out, "{k} = \"{}\"", esc(v));
            }
        };
        section(&mut out, "inputs", &self.inputs);
        section(&mut out, "outputs", &self.outputs);
        section(&mut out, "config", &self.config);
        if !self.timings.is_empty() {
            let _ = writeln!(out, "\n[timings]");
            for (phase, elapsed) in &self.timings {
                let _ = writeln!(out, "{phase}_s = {:.3}", elapsed.as_secs_f64());
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.render())?;
        Ok(())
    }
}
