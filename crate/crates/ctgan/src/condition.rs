//! Conditional vectors and training-by-sampling.
//!
//! During training a discrete column is picked uniformly and a category in it
//! with probability proportional to `ln(1 + frequency)`, so rare categories
//! are still visited. Generation uses the plain empirical frequencies. A
//! table without discrete columns runs condition-free with an empty vector.

use rand::Rng;

use crate::tape::Tensor;
use crate::transform::DiscreteSlot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Condition {
    pub column: usize,
    pub category: usize,
}

#[derive(Debug, Clone)]
pub struct ConditionSampler {
    slots: Vec<DiscreteSlot>,
    log_weights: Vec<Vec<f64>>,
    freq_weights: Vec<Vec<f64>>,
    /// Row ids holding each category, per column.
    rows_by_category: Vec<Vec<Vec<usize>>>,
    width: usize,
}

fn pick<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let x = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if x < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

impl ConditionSampler {
    /// `categories[c][r]` is row `r`'s category in discrete column `c`.
    pub fn new(slots: Vec<DiscreteSlot>, categories: &[Vec<usize>]) -> Self {
        let mut log_weights = Vec::new();
        let mut freq_weights = Vec::new();
        let mut rows_by_category = Vec::new();
        for (slot, cats) in slots.iter().zip(categories) {
            let mut rows = vec![Vec::new(); slot.categories];
            for (r, &k) in cats.iter().enumerate() {
                rows[k].push(r);
            }
            let freq: Vec<f64> = rows.iter().map(|r| r.len() as f64).collect();
            log_weights.push(freq.iter().map(|f| (1.0 + f).ln()).collect());
            freq_weights.push(freq);
            rows_by_category.push(rows);
        }
        let width = slots.iter().map(|s| s.categories).sum();
        ConditionSampler {
            slots,
            log_weights,
            freq_weights,
            rows_by_category,
            width,
        }
    }

    /// Generation-only sampler built from stored category counts; it cannot
    /// draw training rows.
    pub fn from_counts(slots: Vec<DiscreteSlot>, counts: &[Vec<u64>]) -> Self {
        let freq_weights: Vec<Vec<f64>> = counts
            .iter()
            .map(|c| c.iter().map(|&f| f as f64).collect())
            .collect();
        let log_weights = freq_weights
            .iter()
            .map(|f| f.iter().map(|x| (1.0 + x).ln()).collect())
            .collect();
        let width = slots.iter().map(|s| s.categories).sum();
        ConditionSampler {
            slots,
            log_weights,
            freq_weights,
            rows_by_category: Vec::new(),
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn columns(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[DiscreteSlot] {
        &self.slots
    }

    pub fn sample_training<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<Condition> {
        self.sample_with(batch, rng, &self.log_weights)
    }

    pub fn sample_generation<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<Condition> {
        self.sample_with(batch, rng, &self.freq_weights)
    }

    fn sample_with<R: Rng>(&self, batch: usize, rng: &mut R, weights: &[Vec<f64>]) -> Vec<Condition> {
        if self.slots.is_empty() {
            return Vec::new();
        }
        (0..batch)
            .map(|_| {
                let column = rng.random_range(0..self.slots.len());
                Condition {
                    column,
                    category: pick(&weights[column], rng),
                }
            })
            .collect()
    }

    /// One-hot matrix `(conditions, width)`.
    pub fn encode(&self, conditions: &[Condition]) -> Tensor {
        let mut v = Tensor::zeros((conditions.len(), self.width));
        for (r, c) in conditions.iter().enumerate() {
            v[(r, self.slots[c.column].cond_start + c.category)] = 1.0;
        }
        v
    }

    /// A training row holding each condition's category.
    pub fn sample_rows<R: Rng>(&self, conditions: &[Condition], rng: &mut R) -> Vec<usize> {
        conditions
            .iter()
            .map(|c| {
                let rows = &self.rows_by_category[c.column][c.category];
                rows[rng.random_range(0..rows.len())]
            })
            .collect()
    }

    /// Per discrete column, a `(batch, categories)` indicator of the rows
    /// conditioned on that column; used for the generator's cross-entropy.
    pub fn column_masks(&self, conditions: &[Condition]) -> Vec<Tensor> {
        self.slots
            .iter()
            .enumerate()
            .map(|(col, slot)| {
                let mut m = Tensor::zeros((conditions.len(), slot.categories));
                for (r, c) in conditions.iter().enumerate() {
                    if c.column == col {
                        m[(r, c.category)] = 1.0;
                    }
                }
                m
            })
            .collect()
    }
}
