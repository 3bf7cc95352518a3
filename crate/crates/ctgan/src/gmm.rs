//! One-dimensional Gaussian mixture fitted by EM, used for mode-specific
//! normalisation of continuous columns.

use serde::{Deserialize, Serialize};

pub const MAX_MODES: usize = 10;
pub const MIN_WEIGHT: f64 = 0.005;
const EM_ITERATIONS: usize = 200;
const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

fn log_normal(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

impl Gmm {
    pub fn modes(&self) -> usize {
        self.means.len()
    }

    /// Fits up to `max_modes` components. Means start at evenly spaced
    /// quantiles so the fit is deterministic.
    pub fn fit(values: &[f64], max_modes: usize) -> Gmm {
        assert!(!values.is_empty(), "gmm fit on empty column");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if var <= 0.0 || sorted.len() == 1 {
            return Gmm {
                weights: vec![1.0],
                means: vec![mean],
                stds: vec![1.0],
            };
        }
        let floor = (var.sqrt() * 1e-3).max(1e-6);

        let k = max_modes.min(sorted.len()).max(1);
        let mut weights = vec![1.0 / k as f64; k];
        let mut means: Vec<f64> = (0..k)
            .map(|i| sorted[((i as f64 + 0.5) / k as f64 * sorted.len() as f64) as usize])
            .collect();
        let mut stds = vec![var.sqrt() / k as f64; k];
        stds.iter_mut().for_each(|s| *s = s.max(floor));

        let mut resp = vec![vec![0.0; k]; values.len()];
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..EM_ITERATIONS {
            let mut ll = 0.0;
            for (x, r) in values.iter().zip(resp.iter_mut()) {
                let logs: Vec<f64> = (0..k)
                    .map(|j| weights[j].max(1e-300).ln() + log_normal(*x, means[j], stds[j]))
                    .collect();
                let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = logs.iter().map(|l| (l - m).exp()).sum();
                ll += m + total.ln();
                for j in 0..k {
                    r[j] = (logs[j] - m).exp() / total;
                }
            }
            for j in 0..k {
                let nk: f64 = resp.iter().map(|r| r[j]).sum();
                weights[j] = nk / n;
                if nk < 1e-12 {
                    continue;
                }
                means[j] = values.iter().zip(&resp).map(|(x, r)| r[j] * x).sum::<f64>() / nk;
                let v = values
                    .iter()
                    .zip(&resp)
                    .map(|(x, r)| r[j] * (x - means[j]).powi(2))
                    .sum::<f64>()
                    / nk;
                stds[j] = v.sqrt().max(floor);
            }
            if (ll - prev).abs() < TOLERANCE * (1.0 + ll.abs()) {
                break;
            }
            prev = ll;
        }

        let keep: Vec<usize> = (0..k).filter(|&j| weights[j] >= MIN_WEIGHT).collect();
        let total: f64 = keep.iter().map(|&j| weights[j]).sum();
        Gmm {
            weights: keep.iter().map(|&j| weights[j] / total).collect(),
            means: keep.iter().map(|&j| means[j]).collect(),
            stds: keep.iter().map(|&j| stds[j]).collect(),
        }
    }

    /// Most probable mode for `x`.
    pub fn assign(&self, x: f64) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..self.modes() {
            let l = self.weights[j].ln() + log_normal(x, self.means[j], self.stds[j]);
            if l > best.1 {
                best = (j, l);
            }
        }
        best.0
    }

    /// `(alpha, mode)`; alpha is not clipped so the inverse is exact.
    pub fn forward(&self, x: f64) -> (f64, usize) {
        let k = self.assign(x);
        ((x - self.means[k]) / (4.0 * self.stds[k]), k)
    }

    pub fn inverse(&self, alpha: f64, mode: usize) -> f64 {
        alpha * 4.0 * self.stds[mode] + self.means[mode]
    }
}
