use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::schema::Dataset;

/// Three principal axes fitted on the source multi-hot matrix.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    pub words: Vec<String>,
    pub mean: Vec<f64>,
    /// `components[k]` is a unit vector over `words`; all-zero when the
    /// vocabulary has fewer than `k + 1` words.
    pub components: [Vec<f64>; 3],
    pub variances: [f64; 3],
}

fn multi_hot(dataset: &Dataset, words: &[String]) -> Vec<Vec<f64>> {
    dataset
        .wordsets()
        .map(|set| {
            words
                .iter()
                .map(|w| if set.contains(w) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

impl PcaProjection {
    pub fn fit(source: &Dataset, words: &[String]) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::Parameter("PCA needs at least one source row".into()));
        }
        let x = multi_hot(source, words);
        let n = x.len() as f64;
        let d = words.len();
        let mut mean = vec![0.0; d];
        for row in &x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for row in &x {
            for i in 0..d {
                let di = row[i] - mean[i];
                if di == 0.0 {
                    continue;
                }
                for j in 0..d {
                    cov[(i, j)] += di * (row[j] - mean[j]) / n;
                }
            }
        }
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let mut components: [Vec<f64>; 3] = [vec![0.0; d], vec![0.0; d], vec![0.0; d]];
        let mut variances = [0.0; 3];
        for (k, &idx) in order.iter().take(3).enumerate() {
            let col = eig.eigenvectors.column(idx);
            // fix the sign so the largest-magnitude loading is positive
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            components[k] = col.iter().map(|v| v * sign).collect();
            variances[k] = eig.eigenvalues[idx].max(0.0);
        }
        Ok(PcaProjection {
            words: words.to_vec(),
            mean,
            components,
            variances,
        })
    }

    pub fn project(&self, dataset: &Dataset) -> Vec<[f64; 3]> {
        multi_hot(dataset, &self.words)
            .iter()
            .map(|row| {
                let mut out = [0.0; 3];
                for (k, comp) in self.components.iter().enumerate() {
                    out[k] = row
                        .iter()
                        .zip(&self.mean)
                        .zip(comp)
                        .map(|((x, m), c)| (x - m) * c)
                        .sum();
                }
                out
            })
            .collect()
    }

    /// Maps projected coordinates back into multi-hot space.
    pub fn reconstruct(&self, coords: &[f64; 3]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (k, comp) in self.components.iter().enumerate() {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += coords[k] * c;
            }
        }
        out
    }
}

/// A fitted projection with the source and synthetic coordinates.
pub type Projected = (PcaProjection, Vec<[f64; 3]>, Vec<[f64; 3]>);

/// Fits on `source` over the union vocabulary, then projects both tables.
pub fn pca_project3(source: &Dataset, synthetic: &Dataset) -> Result<Projected> {
    let mut words: Vec<String> = Vec::new();
    for set in source.wordsets().chain(synthetic.wordsets()) {
        for w in set.iter() {
            if !words.iter().any(|x| x == w) {
                words.push(w.to_string());
            }
        }
    }
    let pca = PcaProjection::fit(source, &words)?;
    let a = pca.project(source);
    let b = pca.project(synthetic);
    Ok((pca, a, b))
}

/// CSV rows `(dataset, x, y, z)`.
pub fn write_pca_csv<W: Write>(out: W, tables: &[(&str, &[[f64; 3]])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "x", "y", "z"])
        .map_err(|e| Error::csv("<pca>", e))?;
    for (tag, coords) in tables {
        for c in coords.iter() {
            w.write_record([
                tag.to_string(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
            ])
            .map_err(|e| Error::csv("<pca>", e))?;
        }
    }
    w.flush().map_err(|e| Error::io("<pca>", e))?;
    Ok(())
}
