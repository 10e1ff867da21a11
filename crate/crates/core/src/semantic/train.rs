use crate::embedding::{dot, norm, TargetPair};
use crate::error::{CoreError, Result};
use crate::semantic::SemanticMapper;

/// Loss curve of one training phase. `epoch_losses[i]` is the full-data
/// mean loss after epoch `i`; a zero-epoch run reports only the initial
/// loss.
#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub pairs: usize,
}

impl TrainingReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Cosine distance `1 - cos(y, t)` and its gradient with respect to `y`.
/// A zero-norm prediction contributes loss 1 with no gradient.
pub fn cosine_loss_and_grad(y: &[f64], t: &[f64]) -> (f64, Vec<f64>) {
    let ny = norm(y);
    let nt = norm(t);
    if ny == 0.0 || nt == 0.0 {
        return (1.0, vec![0.0; y.len()]);
    }
    let u = dot(y, t);
    let cos = u / (ny * nt);
    let grad = y
        .iter()
        .zip(t)
        .map(|(&yi, &ti)| -(ti / (ny * nt) - yi * u / (ny * ny * ny * nt)))
        .collect();
    (1.0 - cos, grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TrainScope {
    MapperOnly,
    /// Encoder rows step at a fraction of the phase rate, shielding the
    /// pre-trained features from large updates.
    EndToEnd { encoder_scale: f64 },
}

fn mean_loss(sm: &SemanticMapper, pairs: &[TargetPair<'_>]) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|pair| {
            let (y, _) = sm.translate(pair.post);
            cosine_loss_and_grad(&y, &pair.target).0
        })
        .sum();
    total / pairs.len() as f64
}

fn run_phase(
    sm: &mut SemanticMapper,
    pairs: &[TargetPair<'_>],
    epochs: usize,
    lr: f64,
    scope: TrainScope,
) -> Result<TrainingReport> {
    if pairs.is_empty() {
        return Err(CoreError::Training("no supervised pairs to train on".into()));
    }
    if !(lr.is_finite() && lr > 0.0) {
        return Err(CoreError::Config(format!("learning rate {lr} must be positive")));
    }

    // Token rows per post are fixed; pooled inputs are recomputed only
    // when the encoder itself is training.
    let token_rows: Vec<Vec<usize>> = pairs
        .iter()
        .map(|p| sm.encoder.input_rows(p.post))
        .collect();
    let end_to_end = matches!(scope, TrainScope::EndToEnd { .. });
    let frozen_inputs: Option<Vec<Vec<f64>>> = if end_to_end {
        None
    } else {
        Some(pairs.iter().map(|p| sm.encoder.encode(p.post).0).collect())
    };

    let report_initial = mean_loss(sm, pairs);
    let mut epoch_losses = Vec::with_capacity(epochs);

    // Cosine-loss gradients scale inversely with the prediction norm, so
    // a phase inheriting large outputs would crawl. Rescaling the output
    // layer to unit mean norm leaves the model's behavior untouched
    // (cosine ignores scale) but restores a sane step size.
    if epochs > 0 {
        let mean_norm: f64 = pairs
            .iter()
            .map(|pair| {
                let (y, _) = sm.translate(pair.post);
                norm(&y)
            })
            .sum::<f64>()
            / pairs.len() as f64;
        if mean_norm.is_finite() && mean_norm > 1e-12 {
            sm.mapper.scale_output_layer(1.0 / mean_norm);
        }
    }

    if end_to_end {
        sm.encoder.frozen = false;
    }
    let result = (|| -> Result<()> {
        for epoch in 0..epochs {
            for (i, pair) in pairs.iter().enumerate() {
                let input = match &frozen_inputs {
                    Some(cache) => cache[i].clone(),
                    None => sm.encoder.encode(pair.post).0,
                };
                let y = sm.mapper.forward(&input);
                let (loss, out_grad) = cosine_loss_and_grad(&y, &pair.target);
                if !loss.is_finite() {
                    return Err(CoreError::Training(format!(
                        "non-finite loss at epoch {epoch}, pair {i} (post `{}`)",
                        pair.post.id
                    )));
                }
                let grads = sm.mapper.gradients(&input, &out_grad);
                sm.mapper.apply(&grads, lr);
                if let TrainScope::EndToEnd { encoder_scale } = scope {
                    sm.encoder.apply_pooled_gradient(
                        &token_rows[i],
                        &grads.input,
                        -lr * encoder_scale,
                    );
                }
            }
            let epoch_loss = mean_loss(sm, pairs);
            if !epoch_loss.is_finite() {
                return Err(CoreError::Training(format!(
                    "non-finite mean loss after epoch {epoch}"
                )));
            }
            epoch_losses.push(epoch_loss);
        }
        Ok(())
    })();
    if end_to_end {
        sm.encoder.frozen = true;
    }
    result?;

    sm.version += 1;
    Ok(TrainingReport {
        initial_loss: report_initial,
        epoch_losses,
        pairs: pairs.len(),
    })
}

/// Transfer learning: trains the mapper head by gradient descent on the
/// mean cosine distance while the encoder stays frozen.
pub fn transfer_learning(
    sm: &mut SemanticMapper,
    pairs: &[TargetPair<'_>],
    epochs: usize,
    lr: f64,
) -> Result<TrainingReport> {
    if !sm.encoder.frozen {
        return Err(CoreError::Config(
            "transfer learning requires a frozen encoder".into(),
        ));
    }
    run_phase(sm, pairs, epochs, lr, TrainScope::MapperOnly)
}

/// How much slower the encoder steps than the mapper during end-to-end
/// fine-tuning. Pre-trained features adapt progressively instead of
/// being rebuilt by the fine-tuning pass.
pub const ENCODER_FINETUNE_SCALE: f64 = 1.0;

/// Fine-tuning: unfreezes the encoder and updates the whole stack
/// end-to-end from its current weights, at a learning rate strictly
/// below the transfer-learning rate. Encoder rows move slower still,
/// by [`ENCODER_FINETUNE_SCALE`].
pub fn fine_tuning(
    sm: &mut SemanticMapper,
    pairs: &[TargetPair<'_>],
    epochs: usize,
    lr_low: f64,
    transfer_lr: f64,
) -> Result<TrainingReport> {
    if lr_low >= transfer_lr {
        return Err(CoreError::Config(format!(
            "fine-tuning rate {lr_low} must be below the transfer-learning rate {transfer_lr}"
        )));
    }
    run_phase(
        sm,
        pairs,
        epochs,
        lr_low,
        TrainScope::EndToEnd {
            encoder_scale: ENCODER_FINETUNE_SCALE,
        },
    )
}

/// Fine-tunes the mapper alone from its current weights, the encoder
/// serving as a frozen feature extractor.
pub fn fine_tune_mapper_only(
    sm: &mut SemanticMapper,
    pairs: &[TargetPair<'_>],
    epochs: usize,
    lr_low: f64,
) -> Result<TrainingReport> {
    run_phase(sm, pairs, epochs, lr_low, TrainScope::MapperOnly)
}
