use rand::seq::SliceRandom;
use rand::Rng;

use super::data::Dataset;
use crate::tensor::Tensor;

/// Dense ReLU network with a softmax cross-entropy head.
///
/// Parameters are stored as `[W_1, b_1, ..., W_L, b_L]`, with `W_k` of
/// shape `[out, in]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    dims: Vec<usize>,
}

impl Mlp {
    pub fn new(input: usize, hidden: &[usize], classes: usize) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        Mlp { dims }
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn tensor_count(&self) -> usize {
        2 * self.layers()
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Tensor> {
        let mut params = Vec::with_capacity(self.tensor_count());
        for w in self.dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
            params.push(Tensor::new(vec![fan_out, fan_in], data).expect("shape"));
            params.push(Tensor::zeros(&[fan_out]));
        }
        params
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, params: &[Tensor], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for layer in 0..self.layers() {
            let (w, b) = (&params[2 * layer], &params[2 * layer + 1]);
            let (out, inp) = (self.dims[layer + 1], self.dims[layer]);
            let prev = acts.last().expect("input");
            let mut z: Vec<f64> = (0..out)
                .map(|o| {
                    let row = &w.data()[o * inp..(o + 1) * inp];
                    b.data()[o] + row.iter().zip(prev).map(|(a, v)| a * v).sum::<f64>()
                })
                .collect();
            if layer + 1 < self.layers() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, params: &[Tensor], x: &[f64]) -> Vec<f64> {
        self.forward(params, x).pop().expect("logits")
    }

    pub fn predict(&self, params: &[Tensor], x: &[f64]) -> usize {
        let logits = self.logits(params, x);
        let mut best = 0;
        for (k, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = k;
            }
        }
        best
    }

    /// Mean cross-entropy over `idx`.
    pub fn loss(&self, params: &[Tensor], data: &Dataset, idx: &[usize]) -> f64 {
        let total: f64 = idx
            .iter()
            .map(|&i| {
                let logits = self.logits(params, data.row(i));
                let (log_z, _) = log_softmax(&logits);
                log_z - logits[data.label(i)]
            })
            .sum();
        total / idx.len().max(1) as f64
    }

    /// Mean loss and its gradient over the batch `idx`.
    pub fn loss_and_grad(&self, params: &[Tensor], data: &Dataset, idx: &[usize]) -> (f64, Vec<Tensor>) {
        let mut grads: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let mut loss = 0.0;
        for &i in idx {
            let acts = self.forward(params, data.row(i));
            let logits = acts.last().expect("logits");
            let (log_z, probs) = log_softmax(logits);
            let label = data.label(i);
            loss += log_z - logits[label];
            let mut delta = probs;
            delta[label] -= 1.0;
            for layer in (0..self.layers()).rev() {
                let (out, inp) = (self.dims[layer + 1], self.dims[layer]);
                let input = &acts[layer];
                {
                    let gw = grads[2 * layer].data_mut();
                    for o in 0..out {
                        for k in 0..inp {
                            gw[o * inp + k] += delta[o] * input[k];
                        }
                    }
                }
                for (gb, d) in grads[2 * layer + 1].data_mut().iter_mut().zip(&delta) {
                    *gb += d;
                }
                if layer > 0 {
                    let w = params[2 * layer].data();
                    delta = (0..inp)
                        .map(|k| {
                            if input[k] > 0.0 {
                                (0..out).map(|o| w[o * inp + k] * delta[o]).sum()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                }
            }
        }
        let scale = 1.0 / idx.len().max(1) as f64;
        grads.iter_mut().for_each(|g| g.scale(scale));
        (loss * scale, grads)
    }

    pub fn correct(&self, params: &[Tensor], data: &Dataset, idx: &[usize]) -> usize {
        idx.iter()
            .filter(|&&i| self.predict(params, data.row(i)) == data.label(i))
            .count()
    }
}

fn log_softmax(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (max + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}

/// `E` epochs of mini-batch SGD from `theta` on `shard`; returns the
/// per-tensor delta `θ_trained - θ`.
#[allow(clippy::too_many_arguments)]
pub fn local_train<R: Rng + ?Sized>(
    model: &Mlp,
    theta: &[Tensor],
    data: &Dataset,
    shard: &[usize],
    epochs: usize,
    batch_size: usize,
    eta: f64,
    rng: &mut R,
) -> Vec<Tensor> {
    let mut params = theta.to_vec();
    let mut order = shard.to_vec();
    for _ in 0..epochs {
        order.shuffle(rng);
        for batch in order.chunks(batch_size.max(1)) {
            let (_, grads) = model.loss_and_grad(&params, data, batch);
            for (p, g) in params.iter_mut().zip(&grads) {
                p.axpy(-eta, g).expect("same shapes");
            }
        }
    }
    params
        .iter()
        .zip(theta)
        .map(|(p, t)| p.sub(t).expect("same shapes"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flsim::config::DataConfig;
    use crate::flsim::data::synthetic_blobs;
    use crate::seeds;

    fn tiny() -> (Mlp, Vec<Tensor>, Dataset) {
        let model = Mlp::new(3, &[4], 3);
        let params = model.init(&mut seeds::stream(&[b"init"]));
        let cfg = DataConfig {
            classes: 3,
            features: 3,
            samples_per_class: 4,
            separation: 2.0,
            ..DataConfig::default()
        };
        let data = synthetic_blobs(&cfg, &mut seeds::stream(&[b"d"]));
        (model, params, data)
    }

    #[test]
    fn shapes() {
        let model = Mlp::new(32, &[32], 4);
        assert_eq!(model.tensor_count(), 4);
        assert_eq!(model.param_count(), 32 * 32 + 32 + 32 * 4 + 4);
        assert_eq!(Mlp::new(5, &[], 2).tensor_count(), 2);
        assert_eq!(Mlp::new(5, &[3, 3, 3], 2).tensor_count(), 8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, params, data) = tiny();
        let idx: Vec<usize> = (0..data.len()).collect();
        let (_, grads) = model.loss_and_grad(&params, &data, &idx);
        let h = 1e-6;
        for (t, g) in grads.iter().enumerate() {
            for k in 0..g.len() {
                let mut plus = params.clone();
                plus[t].data_mut()[k] += h;
                let mut minus = params.clone();
                minus[t].data_mut()[k] -= h;
                let numeric = (model.loss(&plus, &data, &idx) - model.loss(&minus, &data, &idx)) / (2.0 * h);
                let analytic = g.data()[k];
                let err = (numeric - analytic).abs() / analytic.abs().max(1e-3);
                assert!(err < 1e-4, "tensor {t} elem {k}: {numeric} vs {analytic}");
            }
        }
    }

    #[test]
    fn zero_epochs_zero_delta() {
        let (model, params, data) = tiny();
        let shard: Vec<usize> = (0..data.len()).collect();
        let delta = local_train(&model, &params, &data, &shard, 0, 4, 0.1, &mut seeds::stream(&[b"t"]));
        assert!(delta.iter().all(|d| d.max_abs() == 0.0));
    }

    #[test]
    fn single_step_is_negative_scaled_gradient() {
        let (model, params, data) = tiny();
        let shard: Vec<usize> = (0..data.len()).collect();
        let eta = 0.05;
        let delta = local_train(
            &model,
            &params,
            &data,
            &shard,
            1,
            shard.len(),
            eta,
            &mut seeds::stream(&[b"t"]),
        );
        let (_, grads) = model.loss_and_grad(&params, &data, &shard);
        for (d, g) in delta.iter().zip(&grads) {
            for (a, b) in d.data().iter().zip(g.data()) {
                assert!((a + eta * b).abs() <= 1e-12 + 1e-4 * (eta * b).abs());
            }
        }
    }

    #[test]
    fn loss_decreases() {
        let model = Mlp::new(8, &[16], 2);
        let cfg = DataConfig {
            classes: 2,
            features: 8,
            samples_per_class: 100,
            separation: 2.0,
            ..DataConfig::default()
        };
        let data = synthetic_blobs(&cfg, &mut seeds::stream(&[b"sep"]));
        let shard: Vec<usize> = (0..data.len()).collect();
        let mut theta = model.init(&mut seeds::stream(&[b"init"]));
        let mut rng = seeds::stream(&[b"t"]);
        let mut last = model.loss(&theta, &data, &shard);
        for _ in 0..2 {
            let delta = local_train(&model, &theta, &data, &shard, 1, 10, 0.1, &mut rng);
            for (t, d) in theta.iter_mut().zip(&delta) {
                t.axpy(1.0, d).unwrap();
            }
            let now = model.loss(&theta, &data, &shard);
            assert!(now < last, "{now} >= {last}");
            last = now;
        }
        assert!(model.correct(&theta, &data, &shard) as f64 / data.len() as f64 > 0.9);
    }
}
