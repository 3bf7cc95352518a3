//! Skillset encoders (one-hot over whole skillsets, multi-hot over words,
//! cluster counts) and their decoders.
//!
//! Every encoded table keeps the `p` non-word-set columns first, in schema
//! order, followed by the skillset-derived block.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterMapper;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::schema::{ColumnKind, Dataset, Schema, Value, WordSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    OneHot,
    MultiHot,
    ClusterCount,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 3] = [
        EncoderKind::OneHot,
        EncoderKind::MultiHot,
        EncoderKind::ClusterCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::OneHot => "one-hot",
            EncoderKind::MultiHot => "multi-hot",
            EncoderKind::ClusterCount => "cluster-count",
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-hot" | "onehot" => Ok(EncoderKind::OneHot),
            "multi-hot" | "multihot" => Ok(EncoderKind::MultiHot),
            "cluster-count" | "cluster" => Ok(EncoderKind::ClusterCount),
            other => Err(Error::Parameter(format!("unknown encoder `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnOrigin {
    Passthrough,
    SkillsetDerived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ColumnDomain {
    Continuous,
    /// Cell holds an index into `labels`.
    Categorical {
        labels: Vec<String>,
    },
    /// Member of the exclusive one-hot block; 1 marks this skillset.
    OneHot {
        skillset: Vec<String>,
    },
    /// Multi-hot indicator for a single word.
    Binary {
        word: String,
    },
    /// Number of the row's words that fall in `cluster`.
    Count {
        cluster: usize,
        size: usize,
    },
}

impl ColumnDomain {
    pub fn origin(&self) -> ColumnOrigin {
        match self {
            ColumnDomain::Continuous | ColumnDomain::Categorical { .. } => ColumnOrigin::Passthrough,
            _ => ColumnOrigin::SkillsetDerived,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub domain: ColumnDomain,
}

/// Column descriptors plus the schema the table was encoded from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedLayout {
    pub kind: EncoderKind,
    pub columns: Vec<EncodedColumn>,
    pub source_schema: Schema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapper_hash: Option<String>,
}

impl EncodedLayout {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn passthrough_width(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.domain.origin() == ColumnOrigin::Passthrough)
            .count()
    }

    pub fn skill_columns(&self) -> std::ops::Range<usize> {
        self.passthrough_width()..self.width()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTable {
    pub layout: EncodedLayout,
    pub rows: Vec<Vec<f64>>,
}

impl EncodedTable {
    pub fn new(layout: EncodedLayout, rows: Vec<Vec<f64>>) -> Result<Self> {
        let w = layout.width();
        if let Some(i) = rows.iter().position(|r| r.len() != w) {
            return Err(Error::Consistency(format!(
                "encoded row {i} has {} cells, layout has {w} columns",
                rows[i].len()
            )));
        }
        Ok(EncodedTable { layout, rows })
    }

    pub fn kind(&self) -> EncoderKind {
        self.layout.kind
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[j])
    }

    /// The skillset-derived block of every row.
    pub fn skill_block(&self) -> Vec<Vec<f64>> {
        let range = self.layout.skill_columns();
        self.rows.iter().map(|r| r[range.clone()].to_vec()).collect()
    }

    /// Rounds count cells to the nearest integer and clamps them to
    /// `[0, cluster size]`.
    pub fn clamp_counts(&mut self) {
        let bounds: Vec<Option<usize>> = self
            .layout
            .columns
            .iter()
            .map(|c| match c.domain {
                ColumnDomain::Count { size, .. } => Some(size),
                _ => None,
            })
            .collect();
        for row in &mut self.rows {
            for (x, b) in row.iter_mut().zip(&bounds) {
                if let Some(size) = b {
                    let v = if x.is_finite() { x.round() } else { 0.0 };
                    *x = v.clamp(0.0, *size as f64);
                }
            }
        }
    }

    /// CSV with a leading `# encoder=... mapper=...` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# encoder={} mapper={}",
            self.layout.kind,
            self.layout.mapper_hash.as_deref().unwrap_or("-")
        )
        .map_err(|e| Error::io("<encoded>", e))?;
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(self.layout.columns.iter().map(|c| c.name.as_str()))
            .map_err(|e| Error::csv("<encoded>", e))?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(|x| x.to_string()))
                .map_err(|e| Error::csv("<encoded>", e))?;
        }
        wtr.flush().map_err(|e| Error::io("<encoded>", e))?;
        Ok(())
    }
}

fn passthrough(dataset: &Dataset) -> (Vec<EncodedColumn>, Vec<Vec<f64>>) {
    let schema = dataset.schema();
    let mut columns = Vec::new();
    let mut rows = vec![Vec::new(); dataset.len()];
    for (j, col) in schema.columns().iter().enumerate() {
        match col.kind {
            ColumnKind::WordSet => continue,
            ColumnKind::Continuous => {
                columns.push(EncodedColumn {
                    name: col.name.clone(),
                    domain: ColumnDomain::Continuous,
                });
                for (out, row) in rows.iter_mut().zip(dataset.rows()) {
                    out.push(row[j].as_number().expect("validated row"));
                }
            }
            ColumnKind::Categorical => {
                let mut labels: Vec<String> = dataset
                    .rows()
                    .iter()
                    .map(|r| r[j].as_token().expect("validated row").to_string())
                    .collect();
                labels.sort();
                labels.dedup();
                for (out, row) in rows.iter_mut().zip(dataset.rows()) {
                    let t = row[j].as_token().expect("validated row");
                    let idx = labels
                        .binary_search_by(|l| l.as_str().cmp(t))
                        .expect("label present");
                    out.push(idx as f64);
                }
                columns.push(EncodedColumn {
                    name: col.name.clone(),
                    domain: ColumnDomain::Categorical { labels },
                });
            }
        }
    }
    (columns, rows)
}

fn layout(dataset: &Dataset, kind: EncoderKind, columns: Vec<EncodedColumn>) -> EncodedLayout {
    EncodedLayout {
        kind,
        columns,
        source_schema: dataset.schema().clone(),
        mapper_hash: None,
    }
}

/// One binary column per distinct skillset (first-occurrence order).
pub fn encode_onehot_skillsets(dataset: &Dataset) -> Result<EncodedTable> {
    let (mut columns, mut rows) = passthrough(dataset);
    let delim = dataset.schema().delimiter();
    let mut signatures: Vec<String> = Vec::new();
    let mut sets: Vec<&WordSet> = Vec::new();
    let mut row_col = Vec::with_capacity(dataset.len());
    for set in dataset.wordsets() {
        let sig = set.signature(delim);
        let idx = match signatures.iter().position(|s| *s == sig) {
            Some(i) => i,
            None => {
                signatures.push(sig);
                sets.push(set);
                signatures.len() - 1
            }
        };
        row_col.push(idx);
    }
    for (i, set) in sets.iter().enumerate() {
        columns.push(EncodedColumn {
            name: format!("skillset_{}", i + 1),
            domain: ColumnDomain::OneHot {
                skillset: set.tokens().to_vec(),
            },
        });
    }
    let m = sets.len();
    for (row, &c) in rows.iter_mut().zip(&row_col) {
        let mut block = vec![0.0; m];
        block[c] = 1.0;
        row.extend(block);
    }
    EncodedTable::new(layout(dataset, EncoderKind::OneHot, columns), rows)
}

/// One binary column per vocabulary word, in vocabulary order.
pub fn encode_multihot(dataset: &Dataset, vocab: &Vocabulary) -> Result<EncodedTable> {
    let (mut columns, mut rows) = passthrough(dataset);
    for w in vocab.words() {
        columns.push(EncodedColumn {
            name: format!("skill:{w}"),
            domain: ColumnDomain::Binary { word: w.clone() },
        });
    }
    for (row, set) in rows.iter_mut().zip(dataset.wordsets()) {
        let mut block = vec![0.0; vocab.len()];
        for w in set.iter() {
            let i = vocab.index_of(w).ok_or_else(|| Error::Coverage(w.to_string()))?;
            block[i] = 1.0;
        }
        row.extend(block);
    }
    EncodedTable::new(layout(dataset, EncoderKind::MultiHot, columns), rows)
}

/// Per cluster, the number of the row's words that belong to it.
pub fn encode_cluster_counts(dataset: &Dataset, mapper: &ClusterMapper) -> Result<EncodedTable> {
    let (mut columns, mut rows) = passthrough(dataset);
    for (i, c) in mapper.clusters().iter().enumerate() {
        columns.push(EncodedColumn {
            name: format!("cul_{}", i + 1),
            domain: ColumnDomain::Count {
                cluster: i,
                size: c.len(),
            },
        });
    }
    for (row, set) in rows.iter_mut().zip(dataset.wordsets()) {
        row.extend(cluster_counts(set, mapper)?);
    }
    let mut layout = layout(dataset, EncoderKind::ClusterCount, columns);
    layout.mapper_hash = Some(mapper.text_hash());
    EncodedTable::new(layout, rows)
}

pub fn cluster_counts(set: &WordSet, mapper: &ClusterMapper) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; mapper.len()];
    for w in set.iter() {
        let c = mapper
            .cluster_of(w)
            .ok_or_else(|| Error::Coverage(w.to_string()))?;
        counts[c] += 1.0;
    }
    Ok(counts)
}

/// Draws `count` distinct indices, each draw proportional to the remaining
/// weights.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut remaining: Vec<(usize, f64)> = weights.iter().copied().enumerate().collect();
    let mut picked = Vec::with_capacity(count.min(weights.len()));
    while picked.len() < count && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        let mut x = rng.random::<f64>() * total;
        let mut slot = remaining.len() - 1;
        for (k, (_, w)) in remaining.iter().enumerate() {
            if x < *w {
                slot = k;
                break;
            }
            x -= w;
        }
        picked.push(remaining.remove(slot).0);
    }
    picked
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn decode_passthrough(layout: &EncodedLayout, row: &[f64]) -> Result<Vec<Value>> {
    let schema = &layout.source_schema;
    let mut values = Vec::with_capacity(schema.len());
    let mut k = 0;
    for col in schema.columns() {
        match col.kind {
            ColumnKind::WordSet => values.push(Value::Words(WordSet::new())),
            _ => {
                let enc = &layout.columns[k];
                let x = row[k];
                k += 1;
                values.push(match &enc.domain {
                    ColumnDomain::Continuous => Value::Number(x),
                    ColumnDomain::Categorical { labels } => {
                        if labels.is_empty() {
                            return Err(Error::Consistency(format!(
                                "categorical column `{}` has no labels",
                                enc.name
                            )));
                        }
                        let i = x.round().clamp(0.0, (labels.len() - 1) as f64) as usize;
                        Value::Token(labels[i].clone())
                    }
                    other => {
                        return Err(Error::Consistency(format!(
                            "unexpected passthrough domain {other:?}"
                        )))
                    }
                });
            }
        }
    }
    Ok(values)
}

/// Rebuilds skillsets from cluster counts by weighted draws within each
/// cluster. Counts above a cluster's size take every member. Each row uses
/// its own substream of `seed`.
pub fn decode_cluster_counts(encoded: &EncodedTable, mapper: &ClusterMapper, seed: u64) -> Result<Dataset> {
    if encoded.kind() != EncoderKind::ClusterCount {
        return Err(Error::Parameter(format!(
            "expected a cluster-count table, got {}",
            encoded.kind()
        )));
    }
    let skill_range = encoded.layout.skill_columns();
    if skill_range.len() != mapper.len() {
        return Err(Error::Consistency(format!(
            "table has {} cluster columns, mapper has {} clusters",
            skill_range.len(),
            mapper.len()
        )));
    }
    let schema = encoded.layout.source_schema.clone();
    let ws = schema.wordset_index();
    let mut out = Dataset::empty(schema);
    for (r, row) in encoded.rows.iter().enumerate() {
        let mut rng = row_rng(seed, r);
        let mut set = WordSet::new();
        for (ci, &raw) in row[skill_range.clone()].iter().enumerate() {
            if !raw.is_finite() || raw < 0.0 {
                return Err(Error::Domain(format!(
                    "row {r}, cluster {}: count {raw} is not a non-negative number",
                    ci + 1
                )));
            }
            let cluster = &mapper.clusters()[ci];
            let count = (raw.round() as usize).min(cluster.len());
            for i in weighted_sample_without_replacement(&cluster.membership, count, &mut rng) {
                set.insert(&cluster.words[i]);
            }
        }
        let mut values = decode_passthrough(&encoded.layout, row)?;
        values[ws] = Value::Words(set);
        out.push(values)?;
    }
    Ok(out)
}

/// Inverts one-hot (argmax column → its skillset) and multi-hot (every
/// column ≥ 0.5 → its word) tables.
pub fn decode_indicators(encoded: &EncodedTable) -> Result<Dataset> {
    let schema = encoded.layout.source_schema.clone();
    let ws = schema.wordset_index();
    let range = encoded.layout.skill_columns();
    let cols = &encoded.layout.columns[range.clone()];
    let mut out = Dataset::empty(schema);
    for row in &encoded.rows {
        let block = &row[range.clone()];
        let set = match encoded.kind() {
            EncoderKind::OneHot => {
                let best =
                    block
                        .iter()
                        .enumerate()
                        .fold(None, |acc: Option<(usize, f64)>, (i, &x)| match acc {
                            Some((_, b)) if b >= x => acc,
                            _ => Some((i, x)),
                        });
                match best.map(|(i, _)| &cols[i].domain) {
                    Some(ColumnDomain::OneHot { skillset }) => WordSet::from_tokens(skillset),
                    _ => WordSet::new(),
                }
            }
            EncoderKind::MultiHot => cols
                .iter()
                .zip(block)
                .filter(|(_, &x)| x >= 0.5)
                .filter_map(|(c, _)| match &c.domain {
                    ColumnDomain::Binary { word } => Some(word.as_str()),
                    _ => None,
                })
                .collect(),
            EncoderKind::ClusterCount => {
                return Err(Error::Parameter(
                    "cluster-count tables need a mapper to decode".into(),
                ))
            }
        };
        let mut values = decode_passthrough(&encoded.layout, row)?;
        values[ws] = Value::Words(set);
        out.push(values)?;
    }
    Ok(out)
}

pub fn decode(encoded: &EncodedTable, mapper: Option<&ClusterMapper>, seed: u64) -> Result<Dataset> {
    match (encoded.kind(), mapper) {
        (EncoderKind::ClusterCount, Some(m)) => decode_cluster_counts(encoded, m, seed),
        (EncoderKind::ClusterCount, None) => Err(Error::Parameter(
            "cluster-count tables need a mapper to decode".into(),
        )),
        _ => decode_indicators(encoded),
    }
}
