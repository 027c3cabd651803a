//! Variational autoencoder between 13-D dual-arm pose vectors and a 2-D
//! latent space.
//!
//! Inputs are the twelve joint angles of both arms divided by pi, followed by
//! the collision flag. The encoder is a tanh MLP ending in two linear heads
//! (mean and log-variance); the decoder mirrors the hidden widths and ends in
//! a linear layer. Everything runs on column-major batches: one sample per
//! column.

mod separability;
mod train;

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::kinematics::{JointConfig, KinematicChain, DOF};

pub use separability::{fit_logistic, LogisticSeparator};
pub use train::{train, EpochLoss, Gradients, TrainConfig, TrainReport};

pub const INPUT_DIM: usize = 2 * DOF + 1;
pub const LATENT_DIM: usize = 2;
/// Index of the collision flag inside a pose vector.
pub const FLAG_INDEX: usize = 2 * DOF;
pub const DEFAULT_HIDDEN: [usize; 3] = [450, 250, 100];
pub const DEFAULT_BETA: f64 = 1e-3;

/// Normalised 13-D pose vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseVector(pub [f64; INPUT_DIM]);

impl PoseVector {
    pub fn from_sample(s: &Sample) -> Self {
        Self::from_parts(&s.theta_a, &s.theta_b, s.flag as f64)
    }

    pub fn from_parts(theta_a: &JointConfig, theta_b: &JointConfig, flag: f64) -> Self {
        let mut v = [0.0; INPUT_DIM];
        for i in 0..DOF {
            v[i] = theta_a.0[i] / PI;
            v[DOF + i] = theta_b.0[i] / PI;
        }
        v[FLAG_INDEX] = flag;
        PoseVector(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentLabel {
    Safe,
    Colliding,
}

/// Fully connected layer `y = W x + b`, `W` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            w: DMatrix::zeros(outputs, inputs),
            b: DVector::zeros(outputs),
        }
    }

    /// Glorot-uniform weights, zero biases.
    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = DMatrix::from_fn(outputs, inputs, |_, _| rng.gen_range(-limit..limit));
        Dense {
            w,
            b: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// `W X + b 1^T` for a batch `X` (one sample per column).
    pub(crate) fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = &self.w * x;
        for mut col in y.column_iter_mut() {
            col += &self.b;
        }
        y
    }

    fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

/// Layer order inside [`VaeModel::layers`]: encoder hidden layers, mean head,
/// log-variance head, decoder hidden layers, output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub hidden: Vec<usize>,
    pub layers: Vec<Dense>,
    pub beta: f64,
    /// Joint angles are divided by this before entering the network.
    pub angle_scale: f64,
    pub seed: u64,
}

pub(crate) struct ForwardCache {
    /// Encoder activations, starting with the input batch.
    pub enc: Vec<DMatrix<f64>>,
    pub mu: DMatrix<f64>,
    pub logvar: DMatrix<f64>,
    /// Decoder activations, starting with the latent batch.
    pub dec: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

fn tanh_inplace(m: &mut DMatrix<f64>) {
    m.apply(|v| *v = v.tanh());
}

impl VaeModel {
    /// Randomly initialised model with the given hidden widths (encoder
    /// order; the decoder uses them reversed).
    pub fn new(hidden: &[usize], beta: f64, seed: u64) -> Result<Self> {
        Self::check_hidden(hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = Self::shapes(hidden)
            .into_iter()
            .map(|(i, o)| Dense::glorot(i, o, &mut rng))
            .collect();
        Ok(VaeModel {
            hidden: hidden.to_vec(),
            layers,
            beta,
            angle_scale: PI,
            seed,
        })
    }

    /// Model with every weight and bias set to zero.
    pub fn zeros(hidden: &[usize], beta: f64) -> Result<Self> {
        Self::check_hidden(hidden)?;
        Ok(VaeModel {
            hidden: hidden.to_vec(),
            layers: Self::shapes(hidden).into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
            beta,
            angle_scale: PI,
            seed: 0,
        })
    }

    fn check_hidden(hidden: &[usize]) -> Result<()> {
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!("hidden widths must be non-empty and positive, got {hidden:?}")));
        }
        Ok(())
    }

    /// `(inputs, outputs)` of every layer in storage order.
    fn shapes(hidden: &[usize]) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut prev = INPUT_DIM;
        for &h in hidden {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.push((prev, LATENT_DIM));
        shapes.push((prev, LATENT_DIM));
        let mut prev = LATENT_DIM;
        for &h in hidden.iter().rev() {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.push((prev, INPUT_DIM));
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub(crate) fn n_enc(&self) -> usize {
        self.hidden.len()
    }

    pub fn mu_head(&self) -> &Dense {
        &self.layers[self.n_enc()]
    }

    pub fn mu_head_mut(&mut self) -> &mut Dense {
        let i = self.n_enc();
        &mut self.layers[i]
    }

    pub fn logvar_head(&self) -> &Dense {
        &self.layers[self.n_enc() + 1]
    }

    pub fn output_layer(&self) -> &Dense {
        self.layers.last().expect("model has layers")
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense {
        self.layers.last_mut().expect("model has layers")
    }

    pub(crate) fn encoder_layers(&self) -> &[Dense] {
        &self.layers[..self.n_enc()]
    }

    pub(crate) fn decoder_layers(&self) -> &[Dense] {
        let start = self.n_enc() + 2;
        &self.layers[start..self.layers.len() - 1]
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    pub(crate) fn encode_batch(&self, x: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, DMatrix<f64>, DMatrix<f64>) {
        let mut acts = Vec::with_capacity(self.n_enc() + 1);
        acts.push(x.clone());
        for layer in self.encoder_layers() {
            let mut h = layer.forward(acts.last().expect("input present"));
            tanh_inplace(&mut h);
            acts.push(h);
        }
        let top = acts.last().expect("input present");
        let mu = self.mu_head().forward(top);
        let logvar = self.logvar_head().forward(top);
        (acts, mu, logvar)
    }

    pub(crate) fn decode_batch(&self, z: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        acts.push(z.clone());
        for layer in self.decoder_layers() {
            let mut h = layer.forward(acts.last().expect("latent present"));
            tanh_inplace(&mut h);
            acts.push(h);
        }
        let out = self.output_layer().forward(acts.last().expect("latent present"));
        (acts, out)
    }

    /// Full forward pass with reparameterisation noise `eps` (`2 x B`).
    pub(crate) fn forward(&self, x: &DMatrix<f64>, eps: &DMatrix<f64>) -> ForwardCache {
        let (enc, mu, logvar) = self.encode_batch(x);
        let sigma = logvar.map(|v| (0.5 * v).exp());
        let z = &mu + sigma.component_mul(eps);
        let (dec, output) = self.decode_batch(&z);
        ForwardCache {
            enc,
            mu,
            logvar,
            dec,
            output,
        }
    }

    /// Posterior mean and log-variance of one pose vector.
    pub fn encode(&self, x: &[f64]) -> Result<([f64; LATENT_DIM], [f64; LATENT_DIM])> {
        check_input(x, INPUT_DIM)?;
        let (_, mu, logvar) = self.encode_batch(&DMatrix::from_column_slice(INPUT_DIM, 1, x));
        Ok(([mu[0], mu[1]], [logvar[0], logvar[1]]))
    }

    /// Posterior means of many pose vectors.
    pub fn encode_means(&self, xs: &[PoseVector]) -> Vec<[f64; LATENT_DIM]> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(1024) {
            let x = batch_matrix(chunk);
            let (_, mu, _) = self.encode_batch(&x);
            out.extend(mu.column_iter().map(|c| [c[0], c[1]]));
        }
        out
    }

    /// Unclamped reconstruction of a latent point.
    pub fn decode(&self, z: &[f64]) -> Result<[f64; INPUT_DIM]> {
        check_input(z, LATENT_DIM)?;
        let (_, out) = self.decode_batch(&DMatrix::from_column_slice(LATENT_DIM, 1, z));
        Ok(std::array::from_fn(|i| out[i]))
    }

    pub fn decode_many(&self, zs: &[[f64; LATENT_DIM]]) -> Vec<[f64; INPUT_DIM]> {
        let mut out = Vec::with_capacity(zs.len());
        for chunk in zs.chunks(1024) {
            let z = DMatrix::from_fn(LATENT_DIM, chunk.len(), |r, c| chunk[c][r]);
            let (_, y) = self.decode_batch(&z);
            out.extend(y.column_iter().map(|c| std::array::from_fn(|i| c[i])));
        }
        out
    }

    /// Safe iff the reconstructed flag is at least 0.5.
    pub fn classify_latent(&self, z: &[f64]) -> Result<LatentLabel> {
        Ok(label_from_flag(self.decode(z)?[FLAG_INDEX]))
    }

    /// Arm-2 joint angles of a reconstruction, de-normalised and clamped to
    /// the chain's limits.
    pub fn theta_b_from_output(&self, out: &[f64; INPUT_DIM], chain: &KinematicChain) -> JointConfig {
        let q = JointConfig(std::array::from_fn(|i| out[DOF + i] * self.angle_scale));
        chain.clamp(&q)
    }

    /// ELBO terms for one pose vector with a given noise draw.
    pub fn elbo_with_noise(&self, x: &[f64], eps: [f64; LATENT_DIM]) -> Result<Elbo> {
        check_input(x, INPUT_DIM)?;
        let xm = DMatrix::from_column_slice(INPUT_DIM, 1, x);
        let em = DMatrix::from_column_slice(LATENT_DIM, 1, &eps);
        Ok(self.batch_elbo(&xm, &em))
    }

    /// ELBO terms for one pose vector; the reparameterisation noise is drawn
    /// from `rng`.
    pub fn elbo_loss<R: Rng>(&self, x: &[f64], rng: &mut R) -> Result<Elbo> {
        let eps = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        self.elbo_with_noise(x, eps)
    }

    /// Batch-mean loss `||x - x'||^2 + beta * KL`.
    pub(crate) fn batch_elbo(&self, x: &DMatrix<f64>, eps: &DMatrix<f64>) -> Elbo {
        let cache = self.forward(x, eps);
        elbo_from_cache(x, &cache, self.beta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let names = self.layer_names();
        let file = ModelFile {
            input_dim: INPUT_DIM,
            latent_dim: LATENT_DIM,
            hidden: self.hidden.clone(),
            activation: "tanh".into(),
            beta: self.beta,
            normalization: Normalization {
                angle_scale: self.angle_scale,
                flag_scale: 1.0,
            },
            seed: self.seed,
            layers: self
                .layers
                .iter()
                .zip(names)
                .map(|(l, name)| LayerFile {
                    name,
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    w: (0..l.outputs()).flat_map(|r| l.w.row(r).iter().copied().collect::<Vec<_>>()).collect(),
                    b: l.b.iter().copied().collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.input_dim != INPUT_DIM || file.latent_dim != LATENT_DIM {
            return Err(Error::Dimension {
                expected: INPUT_DIM,
                got: file.input_dim,
            });
        }
        Self::check_hidden(&file.hidden)?;
        let shapes = Self::shapes(&file.hidden);
        if shapes.len() != file.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "model has {} layers, expected {}",
                file.layers.len(),
                shapes.len()
            )));
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for ((inputs, outputs), l) in shapes.into_iter().zip(file.layers) {
            if l.inputs != inputs || l.outputs != outputs || l.w.len() != inputs * outputs || l.b.len() != outputs {
                return Err(Error::InvalidArgument(format!("layer {} has wrong shape", l.name)));
            }
            layers.push(Dense {
                w: DMatrix::from_row_slice(outputs, inputs, &l.w),
                b: DVector::from_vec(l.b),
            });
        }
        let model = VaeModel {
            hidden: file.hidden,
            layers,
            beta: file.beta,
            angle_scale: file.normalization.angle_scale,
            seed: file.seed,
        };
        if !model.is_finite() {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(model)
    }

    fn layer_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_enc()).map(|i| format!("encoder.{i}")).collect();
        names.push("encoder.mu".into());
        names.push("encoder.logvar".into());
        names.extend((0..self.hidden.len()).map(|i| format!("decoder.{i}")));
        names.push("decoder.out".into());
        names
    }
}

pub(crate) fn label_from_flag(flag: f64) -> LatentLabel {
    if flag >= 0.5 {
        LatentLabel::Safe
    } else {
        LatentLabel::Colliding
    }
}

fn check_input(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: x.len(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("network input"));
    }
    Ok(())
}

pub(crate) fn batch_matrix(xs: &[PoseVector]) -> DMatrix<f64> {
    DMatrix::from_fn(INPUT_DIM, xs.len(), |r, c| xs[c].0[r])
}

/// Loss terms; batch means when computed over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elbo {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

/// `KL(N(mu, exp(logvar)) || N(0, I))` for one latent.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

pub(crate) fn elbo_from_cache(x: &DMatrix<f64>, cache: &ForwardCache, beta: f64) -> Elbo {
    let n = x.ncols() as f64;
    let recon = (&cache.output - x).norm_squared() / n;
    let kl: f64 = cache
        .mu
        .column_iter()
        .zip(cache.logvar.column_iter())
        .map(|(m, lv)| kl_divergence(m.as_slice(), lv.as_slice()))
        .sum::<f64>()
        / n;
    Elbo {
        loss: recon + beta * kl,
        recon,
        kl,
    }
}

#[derive(Serialize, Deserialize)]
struct Normalization {
    angle_scale: f64,
    flag_scale: f64,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    name: String,
    inputs: usize,
    outputs: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    input_dim: usize,
    latent_dim: usize,
    hidden: Vec<usize>,
    activation: String,
    beta: f64,
    normalization: Normalization,
    seed: u64,
    layers: Vec<LayerFile>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(rng: &mut ChaCha8Rng) -> [f64; INPUT_DIM] {
        let mut x: [f64; INPUT_DIM] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        x[FLAG_INDEX] = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        x
    }

    fn randomise_biases(m: &mut VaeModel, rng: &mut ChaCha8Rng) {
        for l in &mut m.layers {
            l.b = DVector::from_fn(l.b.len(), |_, _| rng.gen_range(-0.5..0.5));
        }
    }

    /// Plain nested loops: y_r = act(sum_c W[r][c] x_c + b_r).
    fn dense_oracle(l: &Dense, x: &[f64], act: bool) -> Vec<f64> {
        (0..l.outputs())
            .map(|r| {
                let mut s = l.b[r];
                for c in 0..l.inputs() {
                    s += l.w[(r, c)] * x[c];
                }
                if act {
                    s.tanh()
                } else {
                    s
                }
            })
            .collect()
    }

    #[test]
    fn layer_shapes() {
        let m = VaeModel::new(&DEFAULT_HIDDEN, DEFAULT_BETA, 1).unwrap();
        let dims: Vec<(usize, usize)> = m.layers.iter().map(|l| (l.inputs(), l.outputs())).collect();
        assert_eq!(
            dims,
            vec![(13, 450), (450, 250), (250, 100), (100, 2), (100, 2), (2, 100), (100, 250), (250, 450), (450, 13)]
        );
    }

    #[test]
    fn zero_weights_give_final_biases() {
        let mut m = VaeModel::zeros(&[4, 3], 1e-3).unwrap();
        m.mu_head_mut().b = DVector::from_vec(vec![0.25, -1.5]);
        m.output_layer_mut().b = DVector::from_fn(INPUT_DIM, |i, _| i as f64 * 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let (mu, _) = m.encode(&random_input(&mut rng)).unwrap();
            assert_eq!(mu, [0.25, -1.5]);
            let out = m.decode(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).unwrap();
            for (i, v) in out.iter().enumerate() {
                assert_eq!(*v, i as f64 * 0.1);
            }
        }
    }

    #[test]
    fn encode_is_deterministic() {
        let m = VaeModel::new(&[8, 4], 1e-3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_input(&mut rng);
        assert_eq!(m.encode(&x).unwrap(), m.encode(&x).unwrap());
    }

    #[test]
    fn tiny_model_matches_hand_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = VaeModel::new(&[3, 2], 1e-3, 5).unwrap();
        randomise_biases(&mut m, &mut rng);
        let x = random_input(&mut rng);
        let h1 = dense_oracle(&m.layers[0], &x, true);
        let h2 = dense_oracle(&m.layers[1], &h1, true);
        let mu = dense_oracle(&m.layers[2], &h2, false);
        let lv = dense_oracle(&m.layers[3], &h2, false);
        let (got_mu, got_lv) = m.encode(&x).unwrap();
        for k in 0..2 {
            assert!((got_mu[k] - mu[k]).abs() < 1e-12);
            assert!((got_lv[k] - lv[k]).abs() < 1e-12);
        }
        let z = [0.3, -0.8];
        let g1 = dense_oracle(&m.layers[4], &z, true);
        let g2 = dense_oracle(&m.layers[5], &g1, true);
        let out = dense_oracle(&m.layers[6], &g2, false);
        let got = m.decode(&z).unwrap();
        for i in 0..INPUT_DIM {
            assert!((got[i] - out[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_terms() {
        assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.0, 0.0]) - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let mu = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let lv = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            assert!(kl_divergence(&mu, &lv) >= 0.0);
        }
    }

    #[test]
    fn perfect_reconstruction_loss_is_half_beta() {
        // Zero decoder weights with output bias equal to x reproduce x exactly.
        let beta = 0.01;
        let mut m = VaeModel::zeros(&[3, 2], beta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_input(&mut rng);
        m.output_layer_mut().b = DVector::from_column_slice(&x);
        m.mu_head_mut().b = DVector::from_vec(vec![1.0, 0.0]);
        let e = m.elbo_loss(&x, &mut rng).unwrap();
        assert_eq!(e.recon, 0.0);
        assert!((e.kl - 0.5).abs() < 1e-15);
        assert!((e.loss - beta * 0.5).abs() < 1e-15);
    }

    #[test]
    fn elbo_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut m = VaeModel::new(&[3, 2], 0.05, 9).unwrap();
        randomise_biases(&mut m, &mut rng);
        let x = random_input(&mut rng);
        let eps = [0.7, -1.2];
        let e = m.elbo_with_noise(&x, eps).unwrap();

        let h1 = dense_oracle(&m.layers[0], &x, true);
        let h2 = dense_oracle(&m.layers[1], &h1, true);
        let mu = dense_oracle(&m.layers[2], &h2, false);
        let lv = dense_oracle(&m.layers[3], &h2, false);
        let z: Vec<f64> = (0..2).map(|k| mu[k] + (0.5 * lv[k]).exp() * eps[k]).collect();
        let g1 = dense_oracle(&m.layers[4], &z, true);
        let g2 = dense_oracle(&m.layers[5], &g1, true);
        let out = dense_oracle(&m.layers[6], &g2, false);
        let recon: f64 = (0..INPUT_DIM).map(|i| (x[i] - out[i]).powi(2)).sum();
        let mut kl = 0.0;
        for k in 0..2 {
            kl += 0.5 * (mu[k] * mu[k] + lv[k].exp() - 1.0 - lv[k]);
        }
        assert!((e.recon - recon).abs() < 1e-10);
        assert!((e.kl - kl).abs() < 1e-10);
        assert!((e.loss - (recon + 0.05 * kl)).abs() < 1e-10);
    }

    #[test]
    fn classify_threshold() {
        let mut m = VaeModel::zeros(&[2], 1e-3).unwrap();
        m.output_layer_mut().b[FLAG_INDEX] = 0.5 - 1e-9;
        assert_eq!(m.classify_latent(&[0.0, 0.0]).unwrap(), LatentLabel::Colliding);
        m.output_layer_mut().b[FLAG_INDEX] = 0.5 + 1e-9;
        assert_eq!(m.classify_latent(&[0.0, 0.0]).unwrap(), LatentLabel::Safe);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let m = VaeModel::new(&[3], 1e-3, 1).unwrap();
        assert!(matches!(m.encode(&[0.0; 12]), Err(Error::Dimension { expected: 13, got: 12 })));
        assert!(matches!(m.decode(&[0.0; 3]), Err(Error::Dimension { expected: 2, got: 3 })));
        assert!(m.encode(&[f64::NAN; 13]).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = VaeModel::new(&[5, 4, 3], 2e-3, 77).unwrap();
        let back = VaeModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["layers"][0]["w"][1], serde_json::json!(m.layers[0].w[(0, 1)]));
    }
}
