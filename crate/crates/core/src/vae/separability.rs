//! Linear separator in the latent plane, fitted by Newton's method on the
//! L2-regularised logistic loss.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `P(label) = sigmoid(w . z + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticSeparator {
    pub w: [f64; 2],
    pub b: f64,
}

impl LogisticSeparator {
    pub fn score(&self, z: &[f64; 2]) -> f64 {
        self.w[0] * z[0] + self.w[1] * z[1] + self.b
    }

    pub fn predict(&self, z: &[f64; 2]) -> bool {
        self.score(z) >= 0.0
    }

    pub fn accuracy(&self, points: &[[f64; 2]], labels: &[bool]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        let correct = points.iter().zip(labels).filter(|(z, &l)| self.predict(z) == l).count();
        correct as f64 / points.len() as f64
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Fits on standardised coordinates (ridge `1e-6` keeps separable data
/// bounded), then maps back.
pub fn fit_logistic(points: &[[f64; 2]], labels: &[bool]) -> Result<LogisticSeparator> {
    if points.is_empty() || points.len() != labels.len() {
        return Err(Error::InvalidArgument("logistic fit needs one label per point".into()));
    }
    let n = points.len() as f64;
    let mean = [0, 1].map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n);
    let std = [0, 1].map(|k| {
        let var = points.iter().map(|p| (p[k] - mean[k]).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            var.sqrt()
        } else {
            1.0
        }
    });
    let feats: Vec<Vector3<f64>> = points
        .iter()
        .map(|p| Vector3::new((p[0] - mean[0]) / std[0], (p[1] - mean[1]) / std[1], 1.0))
        .collect();
    let lambda = 1e-6;
    let mut theta = Vector3::zeros();
    for _ in 0..100 {
        let mut grad = Vector3::zeros();
        let mut hess = Matrix3::identity() * lambda * n;
        grad += theta * lambda * n;
        for (x, &l) in feats.iter().zip(labels) {
            let p = sigmoid(theta.dot(x));
            let y = if l { 1.0 } else { 0.0 };
            grad += x * (p - y);
            hess += x * x.transpose() * (p * (1.0 - p));
        }
        let Some(step) = hess.lu().solve(&grad) else { break };
        theta -= step;
        if step.norm() < 1e-10 {
            break;
        }
    }
    let w = [theta[0] / std[0], theta[1] / std[1]];
    let b = theta[2] - w[0] * mean[0] - w[1] * mean[1];
    if !(w[0].is_finite() && w[1].is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("logistic separator"));
    }
    Ok(LogisticSeparator { w, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separates_half_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<[f64; 2]> = (0..500).map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
        let labels: Vec<bool> = pts.iter().map(|p| p[0] + 2.0 * p[1] > 0.5).collect();
        let sep = fit_logistic(&pts, &labels).unwrap();
        assert!(sep.accuracy(&pts, &labels) > 0.99);
    }

    #[test]
    fn coin_flip_labels_near_majority_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<[f64; 2]> = (0..2000).map(|_| [rng.gen(), rng.gen()]).collect();
        let labels: Vec<bool> = (0..2000).map(|_| rng.gen_bool(0.5)).collect();
        let acc = fit_logistic(&pts, &labels).unwrap().accuracy(&pts, &labels);
        assert!(acc < 0.56, "accuracy {acc}");
    }

    #[test]
    fn rejects_mismatch() {
        assert!(fit_logistic(&[[0.0, 0.0]], &[]).is_err());
    }
}
