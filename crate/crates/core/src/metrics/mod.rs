//! Fidelity metrics comparing a source table with a synthetic one.

pub mod pca;

pub use pca::{pca_project3, write_pca_csv, PcaProjection};

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::embed::{cosine, EmbeddingModel};
use crate::error::{Error, Result};
use crate::schema::{ColumnKind, Dataset, WordSet};

/// Additive smoothing applied to the synthetic side before renormalising.
pub const KL_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDistribution {
    pub support: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl FrequencyDistribution {
    /// Normalises counts in first-seen order. Zero total yields an empty
    /// distribution.
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut support: Vec<String> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (k, c) in counts {
            let k = k.into();
            match index.get(&k) {
                Some(&i) => values[i] += c,
                None => {
                    index.insert(k.clone(), support.len());
                    support.push(k);
                    values.push(c);
                }
            }
        }
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            return FrequencyDistribution {
                support: Vec::new(),
                probabilities: Vec::new(),
            };
        }
        FrequencyDistribution {
            support,
            probabilities: values.iter().map(|v| v / total).collect(),
        }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.support
            .iter()
            .position(|k| k == key)
            .map_or(0.0, |i| self.probabilities[i])
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(&self.probabilities)
    }
}

/// Distribution of order-insensitive skillset signatures.
pub fn skillset_distribution(dataset: &Dataset) -> FrequencyDistribution {
    let delim = dataset.schema().delimiter();
    FrequencyDistribution::from_counts(dataset.wordsets().map(|w| (w.signature(delim), 1.0)))
}

/// Distribution of individual words over all skillsets.
pub fn skill_distribution(dataset: &Dataset) -> FrequencyDistribution {
    FrequencyDistribution::from_counts(
        dataset
            .wordsets()
            .flat_map(|w| w.iter().map(|t| (t.to_string(), 1.0)).collect::<Vec<_>>()),
    )
}

pub fn entropy_bits(probabilities: &[f64]) -> f64 {
    -probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

pub fn skillset_entropy(dataset: &Dataset) -> f64 {
    skillset_distribution(dataset).entropy_bits()
}

pub fn distinct_skillsets(dataset: &Dataset) -> usize {
    skillset_distribution(dataset).support.len()
}

/// `D_KL(P || Q)` in nats with `Q` smoothed by [`KL_EPSILON`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Parameter("distributions differ in support size".into()));
    }
    let norm = 1.0 + KL_EPSILON * q.len() as f64;
    let d = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / ((qi + KL_EPSILON) / norm)).ln())
        .sum::<f64>();
    Ok(d.max(0.0))
}

/// KL divergence of the synthetic word distribution from the source one,
/// over the union vocabulary.
pub fn skill_kl_divergence(source: &Dataset, synthetic: &Dataset) -> Result<f64> {
    if source.is_empty() || synthetic.is_empty() {
        return Err(Error::Parameter("KL divergence needs non-empty datasets".into()));
    }
    let p = skill_distribution(source);
    let q = skill_distribution(synthetic);
    let mut support = p.support.clone();
    for k in &q.support {
        if !support.contains(k) {
            support.push(k.clone());
        }
    }
    let pv: Vec<f64> = support.iter().map(|k| p.get(k)).collect();
    let qv: Vec<f64> = support.iter().map(|k| q.get(k)).collect();
    kl_divergence(&pv, &qv)
}

/// Symmetric word × word co-occurrence counts with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationMatrix {
    pub words: Vec<String>,
    counts: Vec<u64>,
}

impl AssociationMatrix {
    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn at(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.size() + j]
    }

    pub fn get(&self, a: &str, b: &str) -> Option<u64> {
        let i = self.words.iter().position(|w| w == a)?;
        let j = self.words.iter().position(|w| w == b)?;
        Some(self.at(i, j))
    }

    pub fn grand_total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Row-major flattening divided by the grand total (all zeros when the
    /// total is zero).
    pub fn normalized_flat(&self) -> Vec<f64> {
        let total = self.grand_total();
        self.counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }
}

fn vocabulary_order<'a>(sets: impl Iterator<Item = &'a WordSet>) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for set in sets {
        for w in set.iter() {
            if !words.iter().any(|x| x == w) {
                words.push(w.to_string());
            }
        }
    }
    words
}

pub fn association_matrix(dataset: &Dataset) -> AssociationMatrix {
    association_matrix_over(dataset, &vocabulary_order(dataset.wordsets()))
}

/// Co-occurrence counts over a fixed word order; words outside it are ignored.
pub fn association_matrix_over(dataset: &Dataset, words: &[String]) -> AssociationMatrix {
    let n = words.len();
    let index: HashMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut counts = vec![0u64; n * n];
    for set in dataset.wordsets() {
        let ids: Vec<usize> = set.iter().filter_map(|w| index.get(w).copied()).collect();
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                counts[i * n + j] += 1;
                counts[j * n + i] += 1;
            }
        }
    }
    AssociationMatrix {
        words: words.to_vec(),
        counts,
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Parameter(
            "pearson needs equal-length, non-empty vectors".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero-variance vector".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of the normalised association vectors, both built
/// over the union vocabulary (source order first).
pub fn association_pearson(source: &Dataset, synthetic: &Dataset) -> Result<f64> {
    let words = vocabulary_order(source.wordsets().chain(synthetic.wordsets()));
    let a = association_matrix_over(source, &words);
    let b = association_matrix_over(synthetic, &words);
    pearson(&a.normalized_flat(), &b.normalized_flat())
}

/// Maps a whole skillset to a vector.
pub trait SkillsetEmbedder {
    fn embed(&self, set: &WordSet) -> Result<Vec<f64>>;
}

/// Mean of the trained word vectors of the set's words.
pub struct MeanWordEmbedder<'a> {
    model: &'a EmbeddingModel,
}

impl<'a> MeanWordEmbedder<'a> {
    pub fn new(model: &'a EmbeddingModel) -> Self {
        MeanWordEmbedder { model }
    }
}

impl SkillsetEmbedder for MeanWordEmbedder<'_> {
    fn embed(&self, set: &WordSet) -> Result<Vec<f64>> {
        if set.is_empty() {
            return Err(Error::UndefinedSimilarity("empty skillset".into()));
        }
        let mut acc = vec![0.0; self.model.dim()];
        for w in set.iter() {
            for (a, x) in acc.iter_mut().zip(self.model.embed_word(w)?) {
                *a += x;
            }
        }
        let n = set.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }
}

/// Precomputed skillset vectors keyed by signature, e.g. from an external
/// sentence encoder. File format: `signature<TAB>v1 v2 ... vd` per line.
#[derive(Debug, Clone, Default)]
pub struct ExternalSkillsetEmbeddings {
    delimiter: char,
    vectors: HashMap<String, Vec<f64>>,
}

impl ExternalSkillsetEmbeddings {
    pub fn new(delimiter: char) -> Self {
        ExternalSkillsetEmbeddings {
            delimiter,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, set: &WordSet, vector: Vec<f64>) {
        self.vectors.insert(set.signature(self.delimiter), vector);
    }

    pub fn read_text<R: BufRead>(input: R, delimiter: char) -> Result<Self> {
        let mut out = ExternalSkillsetEmbeddings::new(delimiter);
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("<skillset embeddings>", e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (sig, nums) = line
                .split_once('\t')
                .ok_or_else(|| Error::Consistency(format!("bad embedding line `{line}`")))?;
            let v = nums
                .split_whitespace()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Consistency(format!("bad number in `{line}`")))?;
            // normalise the key through WordSet so token order does not matter
            let set = WordSet::parse(sig, delimiter);
            out.insert(&set, v);
        }
        Ok(out)
    }
}

impl SkillsetEmbedder for ExternalSkillsetEmbeddings {
    fn embed(&self, set: &WordSet) -> Result<Vec<f64>> {
        let sig = set.signature(self.delimiter);
        self.vectors.get(&sig).cloned().ok_or(Error::OutOfVocabulary(sig))
    }
}

pub fn best_match(scores: &[f64]) -> Option<f64> {
    scores.iter().copied().fold(None, |acc, s| match acc {
        Some(b) if b >= s => Some(b),
        _ => Some(s),
    })
}

/// Mean over synthetic skillsets of the best cosine similarity to any source
/// skillset.
pub fn skillset_matching(
    source: &Dataset,
    synthetic: &Dataset,
    embedder: &dyn SkillsetEmbedder,
) -> Result<f64> {
    if synthetic.is_empty() {
        return Err(Error::Parameter("synthetic dataset is empty".into()));
    }
    if source.is_empty() {
        return Err(Error::Parameter("source dataset is empty".into()));
    }
    let src: Vec<Vec<f64>> = source
        .wordsets()
        .map(|w| embedder.embed(w))
        .collect::<Result<_>>()?;
    let mut cache: HashMap<String, f64> = HashMap::new();
    let delim = synthetic.schema().delimiter();
    let mut total = 0.0;
    for set in synthetic.wordsets() {
        let sig = set.signature(delim);
        let score = match cache.get(&sig) {
            Some(&s) => s,
            None => {
                let v = embedder.embed(set)?;
                let scores = src.iter().map(|s| cosine(&v, s)).collect::<Result<Vec<f64>>>()?;
                let s = best_match(&scores).expect("source is non-empty");
                cache.insert(sig, s);
                s
            }
        };
        total += score;
    }
    Ok(total / synthetic.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeReport {
    pub column: String,
    pub kind: ColumnKind,
    /// Category labels, or `[lo,hi)` bin labels for continuous columns.
    pub bins: Vec<String>,
    pub source: Vec<f64>,
    pub synthetic: Vec<f64>,
    pub l1: f64,
}

/// Normalised per-category frequencies (categorical) or fixed-width
/// histograms over the pooled range (continuous) for every non-word-set
/// column.
pub fn attribute_fidelity(
    source: &Dataset,
    synthetic: &Dataset,
    bins: usize,
) -> Result<Vec<AttributeReport>> {
    if bins < 1 {
        return Err(Error::Parameter("bins must be >= 1".into()));
    }
    if source.schema().columns() != synthetic.schema().columns() {
        return Err(Error::Schema("source and synthetic schemas differ".into()));
    }
    let mut out = Vec::new();
    for (j, col) in source.schema().columns().iter().enumerate() {
        let report = match col.kind {
            ColumnKind::WordSet => continue,
            ColumnKind::Categorical => {
                let mut labels: Vec<String> = Vec::new();
                for r in source.rows().iter().chain(synthetic.rows()) {
                    let t = r[j].as_token().expect("validated row");
                    if !labels.iter().any(|l| l == t) {
                        labels.push(t.to_string());
                    }
                }
                let freq = |d: &Dataset| -> Vec<f64> {
                    let mut c = vec![0.0; labels.len()];
                    for r in d.rows() {
                        let t = r[j].as_token().expect("validated row");
                        c[labels.iter().position(|l| l == t).expect("label collected")] += 1.0;
                    }
                    normalise(c)
                };
                let (s, y) = (freq(source), freq(synthetic));
                AttributeReport {
                    column: col.name.clone(),
                    kind: col.kind,
                    l1: l1(&s, &y),
                    bins: labels,
                    source: s,
                    synthetic: y,
                }
            }
            ColumnKind::Continuous => {
                let values = |d: &Dataset| -> Vec<f64> {
                    d.rows()
                        .iter()
                        .map(|r| r[j].as_number().expect("validated row"))
                        .collect()
                };
                let (sv, yv) = (values(source), values(synthetic));
                let lo = sv.iter().chain(&yv).copied().fold(f64::INFINITY, f64::min);
                let hi = sv.iter().chain(&yv).copied().fold(f64::NEG_INFINITY, f64::max);
                let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
                let hist = |v: &[f64]| -> Vec<f64> {
                    let mut c = vec![0.0; bins];
                    for &x in v {
                        let b = (((x - lo) / width) as usize).min(bins - 1);
                        c[b] += 1.0;
                    }
                    normalise(c)
                };
                let (s, y) = (hist(&sv), hist(&yv));
                let labels = (0..bins)
                    .map(|b| format!("[{},{})", lo + b as f64 * width, lo + (b + 1) as f64 * width))
                    .collect();
                AttributeReport {
                    column: col.name.clone(),
                    kind: col.kind,
                    l1: l1(&s, &y),
                    bins: labels,
                    source: s,
                    synthetic: y,
                }
            }
        };
        out.push(report);
    }
    Ok(out)
}

fn normalise(mut c: Vec<f64>) -> Vec<f64> {
    let total: f64 = c.iter().sum();
    if total > 0.0 {
        c.iter_mut().for_each(|x| *x /= total);
    }
    c
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Rows of `(metric, dataset pair, value)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<(String, String, f64)>,
}

impl MetricReport {
    pub fn push(&mut self, metric: impl Into<String>, pair: impl Into<String>, value: f64) {
        self.rows.push((metric.into(), pair.into(), value));
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == metric).map(|r| r.2)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "pair", "value"])
            .map_err(|e| Error::csv("<report>", e))?;
        for (m, p, v) in &self.rows {
            w.write_record([m.as_str(), p.as_str(), &v.to_string()])
                .map_err(|e| Error::csv("<report>", e))?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }
}

/// Runs every scalar metric for one source/synthetic pair.
pub fn evaluate(
    source: &Dataset,
    synthetic: &Dataset,
    embedder: Option<&dyn SkillsetEmbedder>,
    pair: &str,
) -> Result<MetricReport> {
    let mut r = MetricReport::default();
    r.push("entropy_source_bits", pair, skillset_entropy(source));
    r.push("entropy_synthetic_bits", pair, skillset_entropy(synthetic));
    r.push(
        "distinct_skillsets_synthetic",
        pair,
        distinct_skillsets(synthetic) as f64,
    );
    r.push(
        "kl_divergence_nats",
        pair,
        skill_kl_divergence(source, synthetic)?,
    );
    match association_pearson(source, synthetic) {
        Ok(rho) => r.push("association_pearson", pair, rho),
        Err(Error::UndefinedCorrelation(_)) => r.push("association_pearson", pair, f64::NAN),
        Err(e) => return Err(e),
    }
    if let Some(e) = embedder {
        r.push(
            "skillset_matching",
            pair,
            skillset_matching(source, synthetic, e)?,
        );
    }
    for a in attribute_fidelity(source, synthetic, 10)? {
        r.push(format!("attribute_l1:{}", a.column), pair, a.l1);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(cells: &[&str]) -> Dataset {
        Dataset::from_wordsets(
            "skills",
            ',',
            cells.iter().map(|c| WordSet::parse(c, ',')).collect(),
        )
        .unwrap()
    }

    #[test]
    fn entropy_degenerate_and_uniform() {
        assert_eq!(skillset_entropy(&sets(&["A,B", "B,A", "A,B"])), 0.0);
        let h = skillset_entropy(&sets(&["A", "B", "C", "D"]));
        assert!((h - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kl_identity_and_nonnegative() {
        let d = sets(&["A,B", "C"]);
        assert!(skill_kl_divergence(&d, &d).unwrap().abs() < 1e-9);
        let other = sets(&["A", "Z"]);
        assert!(skill_kl_divergence(&d, &other).unwrap() >= 0.0);
    }

    #[test]
    fn single_pair_association() {
        let m = association_matrix(&sets(&["A,B"]));
        assert_eq!(m.at(0, 1), 1);
        assert_eq!(m.at(1, 0), 1);
        assert_eq!(m.at(0, 0), 0);
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        let anti: Vec<f64> = x.iter().map(|v| 7.0 - v).collect();
        assert!((pearson(&x, &anti).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            pearson(&x, &[1.0, 1.0, 1.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn best_match_picks_maximum() {
        let scores = [0.985, 0.847, 0.845, 0.817, 0.853, 0.568, 0.847];
        assert_eq!(best_match(&scores), Some(0.985));
    }

    #[test]
    fn external_embeddings_are_order_free() {
        let text = "C++,Java\t1 0\nPHP\t0 1\n";
        let e = ExternalSkillsetEmbeddings::read_text(text.as_bytes(), ',').unwrap();
        assert_eq!(
            e.embed(&WordSet::parse("Java, C++", ',')).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(e.embed(&WordSet::parse("Go", ',')).is_err());
    }

    #[test]
    fn single_source_and_synthetic_match_is_cosine() {
        let mut e = ExternalSkillsetEmbeddings::new(',');
        e.insert(&WordSet::parse("A", ','), vec![1.0, 0.0]);
        e.insert(&WordSet::parse("B", ','), vec![1.0, 1.0]);
        let s = skillset_matching(&sets(&["A"]), &sets(&["B"]), &e).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(skillset_matching(&sets(&["A"]), &sets(&[]), &e).is_err());
    }

    fn mixed(rows: &[(&str, &str, f64)]) -> Dataset {
        use crate::schema::{Schema, Value};
        let schema = Schema::parse_manifest(
            "column = skills : wordset\ncolumn = loc : categorical\ncolumn = price : continuous\n",
        )
        .unwrap();
        Dataset::new(
            schema,
            rows.iter()
                .map(|(s, l, p)| {
                    vec![
                        Value::Words(WordSet::parse(s, ',')),
                        Value::Token(l.to_string()),
                        Value::Number(*p),
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn attribute_fidelity_identity_and_bins() {
        let d = mixed(&[("A", "x", 1.0), ("B", "x", 5.0), ("A", "x", 9.5)]);
        let r = attribute_fidelity(&d, &d, 10).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|a| a.l1 == 0.0));
        assert_eq!(r[0].source, vec![1.0]);
        assert_eq!(r[1].source.len(), 10);
        assert!((r[1].source.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(attribute_fidelity(&d, &d, 0).is_err());
    }
}
