use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One dense layer, weights stored row-major `(out_dim x in_dim)`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Multi-layer perceptron with tanh hidden activations and a linear
/// output layer.
#[derive(Debug, Clone)]
pub struct Mapper {
    layers: Vec<Layer>,
}

/// Per-layer weight/bias gradients for one sample.
#[derive(Debug)]
pub struct MapperGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Gradient with respect to the input vector, for encoder updates.
    pub input: Vec<f64>,
}

impl Mapper {
    /// Builds a mapper with the given layer sizes, e.g. `[d_s, 2*d_w, d_w]`.
    pub fn new(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "mapper needs at least input and output dims");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (in_dim, out_dim) = (pair[0], pair[1]);
                let bound = 1.0 / (in_dim as f64).sqrt();
                Layer {
                    weights: (0..in_dim * out_dim)
                        .map(|_| rng.gen_range(-bound..bound))
                        .collect(),
                    biases: vec![0.0; out_dim],
                    in_dim,
                    out_dim,
                }
            })
            .collect();
        Mapper { layers }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Mapper { layers }
    }

    fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), layer.in_dim);
        (0..layer.out_dim)
            .map(|o| {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + layer.biases[o]
            })
            .collect()
    }

    /// Activations per layer: `trace[0]` is the input, `trace.last()` the
    /// linear output.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Self::affine(layer, trace.last().expect("trace non-empty"));
            if i + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            trace.push(z);
        }
        trace
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().expect("trace non-empty")
    }

    /// Backpropagates the output gradient through the network and returns
    /// per-layer gradients plus the input gradient. Pure; no update.
    pub fn gradients(&self, x: &[f64], output_grad: &[f64]) -> MapperGrads {
        let trace = self.forward_trace(x);
        let mut weight_grads = vec![Vec::new(); self.layers.len()];
        let mut bias_grads = vec![Vec::new(); self.layers.len()];
        let mut delta = output_grad.to_vec();

        for (i, layer) in self.layers.iter().enumerate().rev() {
            let activation_in = &trace[i];
            let mut wg = vec![0.0; layer.weights.len()];
            for o in 0..layer.out_dim {
                for (j, a) in activation_in.iter().enumerate() {
                    wg[o * layer.in_dim + j] = delta[o] * a;
                }
            }
            weight_grads[i] = wg;
            bias_grads[i] = delta.clone();

            // Propagate: dL/d(input of layer i).
            let mut prev = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += delta[o] * w;
                }
            }
            if i > 0 {
                // Through the tanh of the previous layer's output.
                for (p, a) in prev.iter_mut().zip(&trace[i]) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }

        MapperGrads {
            weights: weight_grads,
            biases: bias_grads,
            input: delta,
        }
    }

    /// One SGD step: `w -= lr * grad`.
    pub fn apply(&mut self, grads: &MapperGrads, lr: f64) {
        for (layer, (wg, bg)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(&grads.biases))
        {
            for (w, g) in layer.weights.iter_mut().zip(wg) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(bg) {
                *b -= lr * g;
            }
        }
    }

    /// Scales the output layer by a positive factor. The model's ranking
    /// behavior is unchanged (cosine ignores scale); only optimization
    /// dynamics differ.
    pub fn scale_output_layer(&mut self, factor: f64) {
        assert!(factor.is_finite() && factor > 0.0);
        let last = self.layers.last_mut().expect("non-empty");
        for w in &mut last.weights {
            *w *= factor;
        }
        for b in &mut last.biases {
            *b *= factor;
        }
    }

    /// Stable content digest over all parameters.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: f64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for layer in &self.layers {
            layer.weights.iter().copied().for_each(&mut eat);
            layer.biases.iter().copied().for_each(&mut eat);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_roundtrip() {
        let mapper = Mapper::new(&[5, 8, 4], 3);
        assert_eq!(mapper.dims(), vec![5, 8, 4]);
        assert_eq!(mapper.input_dim(), 5);
        assert_eq!(mapper.output_dim(), 4);
    }

    #[test]
    fn forward_matches_manual_single_layer() {
        let mut mapper = Mapper::new(&[2, 2], 1);
        // Overwrite with known weights: y = W x + b.
        mapper.layers[0].weights = vec![1.0, 2.0, 3.0, 4.0];
        mapper.layers[0].biases = vec![0.5, -0.5];
        let y = mapper.forward(&[1.0, 1.0]);
        assert_eq!(y, vec![3.5, 6.5]);
    }

    #[test]
    fn gradients_match_finite_differences_on_quadratic() {
        // Loss = 0.5 * |y|^2 so dL/dy = y; check dL/dw numerically.
        let mapper = Mapper::new(&[3, 3, 3], 7);
        let x = [0.3, -0.7, 0.2];
        let y = mapper.forward(&x);
        let grads = mapper.gradients(&x, &y);

        let h = 1e-6;
        for li in 0..mapper.layers.len() {
            for wi in 0..mapper.layers[li].weights.len() {
                let mut plus = mapper.clone();
                plus.layers[li].weights[wi] += h;
                let mut minus = mapper.clone();
                minus.layers[li].weights[wi] -= h;
                let loss = |m: &Mapper| {
                    let y = m.forward(&x);
                    0.5 * y.iter().map(|v| v * v).sum::<f64>()
                };
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let analytic = grads.weights[li][wi];
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    ((analytic - numeric) / denom).abs() < 1e-6,
                    "layer {li} weight {wi}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn apply_moves_against_gradient() {
        let mut mapper = Mapper::new(&[2, 2], 9);
        let x = [1.0, -1.0];
        let before = mapper.forward(&x);
        // dL/dy = y for L = 0.5|y|^2; stepping should shrink |y|.
        for _ in 0..50 {
            let y = mapper.forward(&x);
            let grads = mapper.gradients(&x, &y);
            mapper.apply(&grads, 0.1);
        }
        let after = mapper.forward(&x);
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(n(&after) < n(&before) * 0.1);
    }
}
