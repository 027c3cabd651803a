//! Backpropagation and Adam.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{batch_matrix, elbo_from_cache, Dense, Elbo, PoseVector, VaeModel, LATENT_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds minibatch shuffling and reparameterisation noise.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    pub steps: usize,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Gradient of the batch-mean loss, same layout as [`VaeModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    /// Flattened in [`VaeModel::params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
        .collect()
}

fn dense_grad(delta: &DMatrix<f64>, input: &DMatrix<f64>) -> Dense {
    Dense {
        w: delta * input.transpose(),
        b: delta.column_sum(),
    }
}

/// `dL/dpre = dL/dpost * (1 - tanh^2)`.
fn through_tanh(mut upstream: DMatrix<f64>, act: &DMatrix<f64>) -> DMatrix<f64> {
    upstream.zip_apply(act, |g, a| *g *= 1.0 - a * a);
    upstream
}

fn eps_matrix(eps: &[[f64; LATENT_DIM]]) -> DMatrix<f64> {
    DMatrix::from_fn(LATENT_DIM, eps.len(), |r, c| eps[c][r])
}

impl VaeModel {
    /// All parameters: per layer, weights (column-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Dimension {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Batch-mean loss with explicit noise, one `eps` per input.
    pub fn batch_loss(&self, xs: &[PoseVector], eps: &[[f64; LATENT_DIM]]) -> Result<Elbo> {
        check_batch(xs, eps)?;
        Ok(self.batch_elbo(&batch_matrix(xs), &eps_matrix(eps)))
    }

    /// Batch-mean loss and its exact gradient with respect to every parameter.
    pub fn gradients(&self, xs: &[PoseVector], eps: &[[f64; LATENT_DIM]]) -> Result<(Elbo, Gradients)> {
        check_batch(xs, eps)?;
        Ok(self.backprop(&batch_matrix(xs), &eps_matrix(eps)))
    }

    pub(crate) fn backprop(&self, x: &DMatrix<f64>, eps: &DMatrix<f64>) -> (Elbo, Gradients) {
        let cache = self.forward(x, eps);
        let elbo = elbo_from_cache(x, &cache, self.beta);
        let n = x.ncols() as f64;
        let n_enc = self.n_enc();
        let n_dec = self.hidden.len();
        let mut grads: Vec<Option<Dense>> = vec![None; self.layers.len()];

        // Decoder.
        let mut delta = (&cache.output - x) * (2.0 / n);
        let out_idx = self.layers.len() - 1;
        grads[out_idx] = Some(dense_grad(&delta, cache.dec.last().expect("latent present")));
        let mut upstream = self.layers[out_idx].w.transpose() * &delta;
        for j in (0..n_dec).rev() {
            let idx = n_enc + 2 + j;
            delta = through_tanh(upstream, &cache.dec[j + 1]);
            grads[idx] = Some(dense_grad(&delta, &cache.dec[j]));
            upstream = self.layers[idx].w.transpose() * &delta;
        }
        let dz = upstream;

        // Reparameterisation and KL.
        let k = self.beta / n;
        let mut dmu = dz.clone();
        dmu.zip_apply(&cache.mu, |g, m| *g += k * m);
        let mut dlv = dz;
        for ((g, lv), e) in dlv.iter_mut().zip(cache.logvar.iter()).zip(eps.iter()) {
            let s = (0.5 * lv).exp();
            *g = *g * e * 0.5 * s + k * 0.5 * (lv.exp() - 1.0);
        }

        // Encoder.
        let top = cache.enc.last().expect("input present");
        grads[n_enc] = Some(dense_grad(&dmu, top));
        grads[n_enc + 1] = Some(dense_grad(&dlv, top));
        let mut upstream = self.layers[n_enc].w.transpose() * &dmu + self.layers[n_enc + 1].w.transpose() * &dlv;
        for j in (0..n_enc).rev() {
            let delta = through_tanh(upstream, &cache.enc[j + 1]);
            grads[j] = Some(dense_grad(&delta, &cache.enc[j]));
            if j > 0 {
                upstream = self.layers[j].w.transpose() * &delta;
            } else {
                break;
            }
        }
        let layers = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
        (elbo, Gradients { layers })
    }
}

fn check_batch(xs: &[PoseVector], eps: &[[f64; LATENT_DIM]]) -> Result<()> {
    if xs.is_empty() || xs.len() != eps.len() {
        return Err(Error::InvalidArgument(format!(
            "batch needs one noise draw per input (got {} inputs, {} draws)",
            xs.len(),
            eps.len()
        )));
    }
    Ok(())
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    fn new(model: &VaeModel, lr: f64) -> Self {
        let zeros: Vec<Dense> = model.layers.iter().map(|l| Dense::zeros(l.inputs(), l.outputs())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn step(&mut self, model: &mut VaeModel, grads: &Gradients) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        for (((p, g), m), v) in model.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            for (((p, g), m), v) in p.w.iter_mut().zip(g.w.iter()).zip(m.w.iter_mut()).zip(v.w.iter_mut()) {
                update(p, *g, m, v);
            }
            for (((p, g), m), v) in p.b.iter_mut().zip(g.b.iter()).zip(m.b.iter_mut()).zip(v.b.iter_mut()) {
                update(p, *g, m, v);
            }
        }
    }
}

/// Minibatch Adam on the batch-mean loss. Deterministic for a given model,
/// data order and `cfg.seed`. `on_epoch` sees every epoch's mean loss.
pub fn train(
    model: &mut VaeModel,
    data: &[PoseVector],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("batch_size and learning_rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model, cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut recon, mut kl) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<PoseVector> = chunk.iter().map(|&i| data[i]).collect();
            let x = batch_matrix(&batch);
            let eps = DMatrix::from_fn(LATENT_DIM, chunk.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let (elbo, grads) = model.backprop(&x, &eps);
            if !elbo.loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: elbo.loss });
            }
            let w = chunk.len() as f64;
            loss += elbo.loss * w;
            recon += elbo.recon * w;
            kl += elbo.kl * w;
            adam.step(model, &grads);
            report.steps += 1;
        }
        if !model.is_finite() {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
        let n = data.len() as f64;
        let e = EpochLoss {
            epoch,
            loss: loss / n,
            recon: recon / n,
            kl: kl / n,
        };
        on_epoch(&e);
        report.epochs.push(e);
    }
    Ok(report)
}
