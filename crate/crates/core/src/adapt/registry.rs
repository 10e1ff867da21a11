use chrono::NaiveDate;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use crate::error::{CoreError, Result};
use crate::semantic::{recommend, Encoder, HashetModel};
use crate::stream::Post;

/// Descriptor of an adaptation job running off the serving path.
#[derive(Debug, Clone)]
pub struct InFlightJob {
    pub detected_on: NaiveDate,
    pub completes_on: NaiveDate,
    pub base_generation: u64,
    /// A later shift arrived while this job ran; rerun on completion.
    pub coalesced_rerun: bool,
}

/// Holds the serving model behind an atomic swap point.
///
/// Readers take a cheap `Arc` clone of the current model; the writer
/// replaces the pointer under a short write lock, so every request sees
/// exactly one complete model and observed generations never decrease.
#[derive(Debug)]
pub struct ModelRegistry {
    serving: RwLock<Arc<HashetModel>>,
    generation: AtomicU64,
    in_flight: Mutex<Option<InFlightJob>>,
    /// Encoder weights as initialized at bootstrap, before any
    /// fine-tuning; the restore point for the W-window strategy.
    pretrained_encoder: Encoder,
    probe: Post,
}

impl ModelRegistry {
    /// Builds a registry around the bootstrapped model. The probe post is
    /// used to self-check every candidate model before it may serve.
    pub fn new(model: HashetModel, pretrained_encoder: Encoder, probe: Post) -> Result<Self> {
        let generation = model.generation;
        let registry = ModelRegistry {
            serving: RwLock::new(Arc::new(model)),
            generation: AtomicU64::new(generation),
            in_flight: Mutex::new(None),
            pretrained_encoder,
            probe,
        };
        registry.self_check(&registry.current())?;
        Ok(registry)
    }

    /// The currently serving model. Never absent after construction.
    pub fn current(&self) -> Arc<HashetModel> {
        self.serving.read().expect("registry lock healthy").clone()
    }

    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::SeqCst)
    }

    pub fn pretrained_encoder(&self) -> &Encoder {
        &self.pretrained_encoder
    }

    pub fn probe(&self) -> &Post {
        &self.probe
    }

    pub fn in_flight(&self) -> Option<InFlightJob> {
        self.in_flight.lock().expect("job lock healthy").clone()
    }

    pub fn set_in_flight(&self, job: Option<InFlightJob>) {
        *self.in_flight.lock().expect("job lock healthy") = job;
    }

    /// Marks the running job for a coalesced rerun; returns false when no
    /// job is in flight.
    pub fn request_rerun(&self) -> bool {
        let mut guard = self.in_flight.lock().expect("job lock healthy");
        match guard.as_mut() {
            Some(job) => {
                job.coalesced_rerun = true;
                true
            }
            None => false,
        }
    }

    fn self_check(&self, model: &HashetModel) -> Result<()> {
        let hits = recommend(model, &self.probe, 1, 0).map_err(|e| {
            CoreError::Config(format!("model self-check failed on probe post: {e}"))
        })?;
        if hits.is_empty() {
            return Err(CoreError::Config(
                "model self-check returned no recommendation".into(),
            ));
        }
        Ok(())
    }

    /// Atomically replaces the serving model after a successful
    /// self-check. Returns the new generation number. A refused swap
    /// leaves the old model serving.
    pub fn swap_model(&self, new_model: HashetModel) -> Result<u64> {
        self.self_check(&new_model)?;
        let mut guard = self.serving.write().expect("registry lock healthy");
        let old = guard.generation;
        if new_model.generation <= old {
            return Err(CoreError::Config(format!(
                "swap refused: generation {} does not advance {}",
                new_model.generation, old
            )));
        }
        let new_generation = new_model.generation;
        *guard = Arc::new(new_model);
        self.generation.store(new_generation, Ordering::SeqCst);
        Ok(new_generation)
    }
}
