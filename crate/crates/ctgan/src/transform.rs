use krew_core::encoders::{ColumnDomain, EncodedTable};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{Gmm, MAX_MODES};
use crate::tape::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DiscreteSource {
    Column(usize),
    /// Consecutive one-hot skillset columns, treated as one categorical column
    /// whose categories are positions inside the block.
    OneHotBlock {
        start: usize,
        len: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnTransform {
    Continuous {
        source: usize,
        gmm: Gmm,
    },
    Discrete {
        source: DiscreteSource,
        /// Observed values in ascending order.
        categories: Vec<f64>,
        counts: Vec<u64>,
    },
}

impl ColumnTransform {
    pub fn output_width(&self) -> usize {
        match self {
            ColumnTransform::Continuous { gmm, .. } => 1 + gmm.modes(),
            ColumnTransform::Discrete { categories, .. } => categories.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub width: usize,
    pub activation: Activation,
}

/// Position of one discrete column inside the generator output and the
/// conditional vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscreteSlot {
    pub output_start: usize,
    pub cond_start: usize,
    pub categories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub columns: Vec<ColumnTransform>,
    pub input_width: usize,
}

fn category_of(categories: &[f64], value: f64) -> Option<usize> {
    categories.iter().position(|c| *c == value)
}

fn block_position(row: &[f64], start: usize, len: usize) -> f64 {
    let block = &row[start..start + len];
    let mut best = 0;
    for (i, v) in block.iter().enumerate() {
        if *v > block[best] {
            best = i;
        }
    }
    best as f64
}

impl TransformSpec {
    pub fn fit(table: &EncodedTable) -> Result<TransformSpec> {
        if table.rows.is_empty() {
            return Err(Error::Data("cannot fit transforms on an empty table".into()));
        }
        let cols = &table.layout.columns;
        let mut columns = Vec::new();
        let mut i = 0;
        while i < cols.len() {
            let (source, values): (DiscreteSource, Vec<f64>) = match cols[i].domain {
                ColumnDomain::Continuous => {
                    let values: Vec<f64> = table.rows.iter().map(|r| r[i]).collect();
                    columns.push(ColumnTransform::Continuous {
                        source: i,
                        gmm: Gmm::fit(&values, MAX_MODES),
                    });
                    i += 1;
                    continue;
                }
                ColumnDomain::OneHot { .. } => {
                    let len = cols[i..]
                        .iter()
                        .take_while(|c| matches!(c.domain, ColumnDomain::OneHot { .. }))
                        .count();
                    let values = table.rows.iter().map(|r| block_position(r, i, len)).collect();
                    let src = DiscreteSource::OneHotBlock { start: i, len };
                    i += len;
                    (src, values)
                }
                ColumnDomain::Categorical { .. }
                | ColumnDomain::Binary { .. }
                | ColumnDomain::Count { .. } => {
                    let values = table.rows.iter().map(|r| r[i]).collect();
                    i += 1;
                    (DiscreteSource::Column(i - 1), values)
                }
            };
            let mut categories = values.clone();
            categories.sort_by(f64::total_cmp);
            categories.dedup();
            let mut counts = vec![0u64; categories.len()];
            for v in &values {
                counts[category_of(&categories, *v).expect("observed")] += 1;
            }
            columns.push(ColumnTransform::Discrete {
                source,
                categories,
                counts,
            });
        }
        Ok(TransformSpec {
            columns,
            input_width: table.width(),
        })
    }

    pub fn output_width(&self) -> usize {
        self.columns.iter().map(|c| c.output_width()).sum()
    }

    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut start = 0;
        for c in &self.columns {
            match c {
                ColumnTransform::Continuous { gmm, .. } => {
                    out.push(Segment {
                        start,
                        width: 1,
                        activation: Activation::Tanh,
                    });
                    out.push(Segment {
                        start: start + 1,
                        width: gmm.modes(),
                        activation: Activation::Softmax,
                    });
                }
                ColumnTransform::Discrete { categories, .. } => out.push(Segment {
                    start,
                    width: categories.len(),
                    activation: Activation::Softmax,
                }),
            }
            start += c.output_width();
        }
        out
    }

    pub fn discrete_slots(&self) -> Vec<DiscreteSlot> {
        let mut out = Vec::new();
        let (mut start, mut cond) = (0, 0);
        for c in &self.columns {
            if let ColumnTransform::Discrete { categories, .. } = c {
                out.push(DiscreteSlot {
                    output_start: start,
                    cond_start: cond,
                    categories: categories.len(),
                });
                cond += categories.len();
            }
            start += c.output_width();
        }
        out
    }

    pub fn cond_width(&self) -> usize {
        self.discrete_slots().iter().map(|s| s.categories).sum()
    }

    /// Category frequencies of every discrete column, in slot order.
    pub fn discrete_counts(&self) -> Vec<Vec<u64>> {
        self.columns
            .iter()
            .filter_map(|c| match c {
                ColumnTransform::Discrete { counts, .. } => Some(counts.clone()),
                _ => None,
            })
            .collect()
    }

    /// Category index per discrete column for every row.
    pub fn category_indices(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::new();
        for c in &self.columns {
            if let ColumnTransform::Discrete {
                source, categories, ..
            } = c
            {
                let idx = rows
                    .iter()
                    .enumerate()
                    .map(|(r, row)| {
                        let v = match source {
                            DiscreteSource::Column(i) => row[*i],
                            DiscreteSource::OneHotBlock { start, len } => block_position(row, *start, *len),
                        };
                        category_of(categories, v)
                            .ok_or_else(|| Error::Data(format!("row {r}: value {v} is not a known category")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push(idx);
            }
        }
        Ok(out)
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Tensor> {
        if let Some(r) = rows.iter().position(|r| r.len() != self.input_width) {
            return Err(Error::Data(format!(
                "row {r} width differs from the fitted layout"
            )));
        }
        let cats = self.category_indices(rows)?;
        let mut out = Array2::zeros((rows.len(), self.output_width()));
        let mut start = 0;
        let mut d = 0;
        for c in &self.columns {
            match c {
                ColumnTransform::Continuous { source, gmm } => {
                    for (r, row) in rows.iter().enumerate() {
                        let (alpha, mode) = gmm.forward(row[*source]);
                        out[(r, start)] = alpha;
                        out[(r, start + 1 + mode)] = 1.0;
                    }
                }
                ColumnTransform::Discrete { .. } => {
                    for (r, k) in cats[d].iter().enumerate() {
                        out[(r, start + k)] = 1.0;
                    }
                    d += 1;
                }
            }
            start += c.output_width();
        }
        Ok(out)
    }

    /// Maps transformed rows (or generator activations) back to encoded rows.
    /// Softmax groups are read by argmax.
    pub fn inverse(&self, data: &Tensor) -> Vec<Vec<f64>> {
        let argmax = |r: usize, start: usize, width: usize| -> usize {
            let mut best = 0;
            for j in 1..width {
                if data[(r, start + j)] > data[(r, start + best)] {
                    best = j;
                }
            }
            best
        };
        let mut rows = vec![vec![0.0; self.input_width]; data.nrows()];
        for (r, row) in rows.iter_mut().enumerate() {
            let mut start = 0;
            for c in &self.columns {
                match c {
                    ColumnTransform::Continuous { source, gmm } => {
                        let mode = argmax(r, start + 1, gmm.modes());
                        row[*source] = gmm.inverse(data[(r, start)], mode);
                    }
                    ColumnTransform::Discrete {
                        source, categories, ..
                    } => {
                        let v = categories[argmax(r, start, categories.len())];
                        match source {
                            DiscreteSource::Column(i) => row[*i] = v,
                            DiscreteSource::OneHotBlock { start: s, .. } => row[s + v as usize] = 1.0,
                        }
                    }
                }
                start += c.output_width();
            }
        }
        rows
    }
}
