//! K-means over word embeddings, elbow-based choice of K, and the
//! cluster → (member words, membership probability) mapper.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{TaggedCorpus, Vocabulary};
use crate::embed::EmbeddingModel;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    /// Euclidean distance between unit-normalised vectors.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iterations: usize,
    pub distance: Distance,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iterations: MAX_ITERATIONS,
            distance: Distance::Euclidean,
            seed: 0,
        }
    }
}

/// A named point to cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub word: String,
    pub vector: Vec<f64>,
}

impl Point {
    pub fn new(word: impl Into<String>, vector: Vec<f64>) -> Self {
        Point {
            word: word.into(),
            vector,
        }
    }
}

/// Embedding rows for every vocabulary word, in vocabulary order. Tag tokens
/// never reach this list because the vocabulary is built from raw cells.
pub fn word_points(model: &EmbeddingModel, vocab: &Vocabulary) -> Result<Vec<Point>> {
    vocab
        .words()
        .iter()
        .filter(|w| !TaggedCorpus::is_tag(w))
        .map(|w| Ok(Point::new(w.clone(), model.embed_word(w)?.to_vec())))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub words: Vec<String>,
    /// Cluster id of `words[i]`.
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_of(&self, word: &str) -> Option<usize> {
        self.words
            .iter()
            .position(|w| w == word)
            .map(|i| self.assignment[i])
    }

    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.words
            .iter()
            .zip(&self.assignment)
            .filter(|(_, &c)| c == cluster)
            .map(|(w, _)| w.as_str())
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn kmeans(points: &[Point], k: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_with(
        points,
        k,
        &KMeansConfig {
            seed,
            ..Default::default()
        },
    )
}

pub fn kmeans_with(points: &[Point], k: usize, config: &KMeansConfig) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::Parameter(format!(
            "K = {k} exceeds the number of words ({})",
            points.len()
        )));
    }
    let dim = points[0].vector.len();
    if points.iter().any(|p| p.vector.len() != dim) {
        return Err(Error::Parameter("points have mixed dimensions".into()));
    }

    let data: Vec<Vec<f64>> = points
        .iter()
        .map(|p| match config.distance {
            Distance::Euclidean => p.vector.clone(),
            Distance::Cosine => {
                let norm = p.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    p.vector.iter().map(|x| x / norm).collect()
                } else {
                    p.vector.clone()
                }
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = plus_plus_init(&data, k, &mut rng);
    let mut assignment = vec![usize::MAX; data.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let mut changed = false;
        for (i, p) in data.iter().enumerate() {
            let (c, _) = nearest(&centroids, p);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        repair_empty_clusters(&data, &mut centroids, &mut assignment);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &c) in data.iter().zip(&assignment) {
            sizes[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        let inertia: f64 = data
            .iter()
            .zip(&assignment)
            .map(|(p, &c)| sq_dist(p, &centroids[c]))
            .sum();
        trace.push(inertia);

        if !changed || iterations >= config.max_iterations {
            break;
        }
    }

    Ok(ClusterModel {
        centroids,
        words: points.iter().map(|p| p.word.clone()).collect(),
        assignment,
        inertia: *trace.last().expect("at least one iteration"),
        inertia_trace: trace,
        iterations,
    })
}

fn plus_plus_init(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.random_range(0..data.len())];
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &data[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut x = rng.random::<f64>() * total;
            let mut pick = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if x < w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            pick
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..data.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &data[next]));
        }
    }
    chosen.into_iter().map(|i| data[i].clone()).collect()
}

/// Moves each empty cluster's centroid onto the point farthest from its
/// current centroid, taking that point from a cluster with > 1 member.
fn repair_empty_clusters(data: &[Vec<f64>], centroids: &mut [Vec<f64>], assignment: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignment.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = data
            .iter()
            .enumerate()
            .filter(|(i, _)| sizes[assignment[*i]] > 1)
            .map(|(i, p)| (i, sq_dist(p, &centroids[assignment[i]])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = donor else { return };
        centroids[empty] = data[i].clone();
        assignment[i] = empty;
    }
}

/// Picks the K that maximises `drop(K-1 -> K) - drop(K -> K+1)` over interior
/// points of the curve; ties go to the smallest K.
pub fn elbow_from_curve(ks: &[usize], inertia: &[f64]) -> Result<usize> {
    if ks.len() != inertia.len() {
        return Err(Error::Parameter(
            "K list and inertia curve differ in length".into(),
        ));
    }
    if ks.len() < 3 {
        return Err(Error::Parameter(format!(
            "elbow needs at least 3 K values, got {}",
            ks.len()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 1..ks.len() - 1 {
        let before = inertia[i - 1] - inertia[i];
        let after = inertia[i] - inertia[i + 1];
        let score = before - after;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((ks[i], score));
        }
    }
    Ok(best.expect("interior point exists").0)
}

pub fn inertia_curve(points: &[Point], range: RangeInclusive<usize>, seed: u64) -> Result<Vec<(usize, f64)>> {
    range
        .map(|k| kmeans(points, k, seed).map(|m| (k, m.inertia)))
        .collect()
}

pub fn elbow_select_k(points: &[Point], range: RangeInclusive<usize>, seed: u64) -> Result<usize> {
    let (lo, hi) = (*range.start(), *range.end());
    if lo < 1 || hi > points.len() || lo > hi {
        return Err(Error::Parameter(format!(
            "K range [{lo}, {hi}] is outside [1, {}]",
            points.len()
        )));
    }
    if hi - lo + 1 < 3 {
        return Err(Error::Parameter(format!(
            "K range [{lo}, {hi}] must span at least 3 values"
        )));
    }
    let curve = inertia_curve(points, range, seed)?;
    let (ks, inertia): (Vec<usize>, Vec<f64>) = curve.into_iter().unzip();
    elbow_from_curve(&ks, &inertia)
}

/// One cluster of the mapper: member words with their corpus counts and
/// membership probabilities (count / cluster total).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedCluster {
    pub words: Vec<String>,
    pub counts: Vec<u64>,
    pub membership: Vec<f64>,
}

impl MappedCluster {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn membership_of(&self, word: &str) -> Option<f64> {
        self.words
            .iter()
            .position(|w| w == word)
            .map(|i| self.membership[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMapper {
    clusters: Vec<MappedCluster>,
    lookup: HashMap<String, usize>,
}

impl ClusterMapper {
    /// Builds a mapper from explicit groups of `(word, count)`.
    pub fn from_groups<S: Into<String>>(groups: Vec<Vec<(S, u64)>>) -> Result<Self> {
        let mut clusters = Vec::with_capacity(groups.len());
        let mut lookup = HashMap::new();
        for (ci, group) in groups.into_iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Consistency(format!("cluster {ci} is empty")));
            }
            let (words, counts): (Vec<String>, Vec<u64>) =
                group.into_iter().map(|(w, c)| (w.into(), c)).unzip();
            for (w, &c) in words.iter().zip(&counts) {
                if c == 0 {
                    return Err(Error::Consistency(format!("word `{w}` has zero count")));
                }
                if lookup.insert(w.clone(), ci).is_some() {
                    return Err(Error::Consistency(format!(
                        "word `{w}` appears in more than one cluster"
                    )));
                }
            }
            let total: u64 = counts.iter().sum();
            let membership = counts.iter().map(|&c| c as f64 / total as f64).collect();
            clusters.push(MappedCluster {
                words,
                counts,
                membership,
            });
        }
        Ok(ClusterMapper { clusters, lookup })
    }

    pub fn clusters(&self) -> &[MappedCluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_of(&self, word: &str) -> Option<usize> {
        self.lookup.get(word).copied()
    }

    /// The most frequent word over all clusters (first on ties).
    pub fn most_frequent_word(&self) -> Option<&str> {
        let mut best: Option<(&str, u64)> = None;
        for c in &self.clusters {
            for (w, &n) in c.words.iter().zip(&c.counts) {
                if best.is_none_or(|(_, b)| n > b) {
                    best = Some((w, n));
                }
            }
        }
        best.map(|(w, _)| w)
    }

    /// Tab-separated `cluster word count membership` lines, membership to 9
    /// decimals. Readers rebuild membership from the counts.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<mapper>", e);
        writeln!(out, "# cluster\tword\tcount\tmembership").map_err(io)?;
        for (ci, c) in self.clusters.iter().enumerate() {
            for ((w, n), m) in c.words.iter().zip(&c.counts).zip(&c.membership) {
                if w.contains('\t') || w.contains('\n') {
                    return Err(Error::Consistency(format!(
                        "word `{w}` cannot be written to a mapper file"
                    )));
                }
                writeln!(out, "{ci}\t{w}\t{n}\t{m:.9}").map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut groups: Vec<Vec<(String, u64)>> = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("<mapper>", e))?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Consistency(format!("bad mapper line `{line}`")));
            }
            let ci: usize = fields[0]
                .parse()
                .map_err(|_| Error::Consistency(format!("bad cluster id in `{line}`")))?;
            let n: u64 = fields[2]
                .parse()
                .map_err(|_| Error::Consistency(format!("bad count in `{line}`")))?;
            if ci >= groups.len() {
                groups.resize_with(ci + 1, Vec::new);
            }
            groups[ci].push((fields[1].to_string(), n));
        }
        ClusterMapper::from_groups(groups)
    }

    pub fn text_hash(&self) -> String {
        let mut buf = Vec::new();
        // writing to memory cannot fail on a valid mapper
        let _ = self.write_text(&mut buf);
        let digest = Sha256::digest(&buf);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn build_mapper(model: &ClusterModel, vocab: &Vocabulary) -> Result<ClusterMapper> {
    let mut groups: Vec<Vec<(String, u64)>> = vec![Vec::new(); model.k()];
    for (w, &c) in model.words.iter().zip(&model.assignment) {
        let count = vocab
            .count(w)
            .ok_or_else(|| Error::Consistency(format!("no count for word `{w}`")))?;
        groups[c].push((w.clone(), count));
    }
    ClusterMapper::from_groups(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Point> {
        xs.iter()
            .enumerate()
            .map(|(i, &x)| Point::new(format!("w{i}"), vec![x]))
            .collect()
    }

    #[test]
    fn separates_two_obvious_groups() {
        let pts = line(&[0.0, 0.1, 10.0, 10.1]);
        let m = kmeans(&pts, 2, 3).unwrap();
        assert_eq!(m.assignment[0], m.assignment[1]);
        assert_eq!(m.assignment[2], m.assignment[3]);
        assert_ne!(m.assignment[0], m.assignment[2]);
        let mut cs: Vec<f64> = m.centroids.iter().map(|c| c[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert!((cs[0] - 0.05).abs() < 1e-12);
        assert!((cs[1] - 10.05).abs() < 1e-12);
    }

    #[test]
    fn k_equal_to_n_gives_zero_inertia() {
        let pts = line(&[0.0, 1.0, 2.5, 7.0, 7.5]);
        let m = kmeans(&pts, pts.len(), 11).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut ids = m.assignment.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), pts.len());
    }

    #[test]
    fn k_too_large_or_zero() {
        let pts = line(&[0.0, 1.0]);
        assert!(matches!(kmeans(&pts, 3, 0), Err(Error::Parameter(_))));
        assert!(matches!(kmeans(&pts, 0, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn elbow_rule_on_hand_curve() {
        let ks = [1, 2, 3, 4, 5, 6];
        let inertia = [100.0, 60.0, 20.0, 18.0, 17.0, 16.5];
        assert_eq!(elbow_from_curve(&ks, &inertia).unwrap(), 3);
    }

    #[test]
    fn elbow_ties_pick_smallest_k() {
        let ks = [1, 2, 3, 4, 5];
        let inertia = [50.0, 40.0, 30.0, 20.0, 10.0];
        assert_eq!(elbow_from_curve(&ks, &inertia).unwrap(), 2);
    }

    #[test]
    fn elbow_range_too_narrow() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(elbow_select_k(&pts, 2..=3, 0), Err(Error::Parameter(_))));
        assert!(elbow_select_k(&pts, 1..=4, 0).is_ok());
    }

    #[test]
    fn mapper_membership_from_counts() {
        let m = ClusterMapper::from_groups(vec![
            vec![("Python", 1), ("R", 1)],
            vec![("HTML", 4), ("JavaScript", 4)],
            vec![("Solo", 3)],
        ])
        .unwrap();
        assert_eq!(m.clusters()[0].membership, vec![0.5, 0.5]);
        assert_eq!(m.clusters()[1].membership, vec![0.5, 0.5]);
        assert_eq!(m.clusters()[2].membership, vec![1.0]);
        assert_eq!(m.cluster_of("JavaScript"), Some(1));
    }

    #[test]
    fn mapper_rejects_overlap() {
        let err = ClusterMapper::from_groups(vec![vec![("a", 1)], vec![("a", 2)]]).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn build_mapper_needs_counts() {
        let pts = line(&[0.0, 5.0]);
        let model = kmeans(&pts, 2, 0).unwrap();
        let vocab = Vocabulary::from_counts([("w0", 2)]).unwrap();
        assert!(matches!(build_mapper(&model, &vocab), Err(Error::Consistency(_))));
    }

    #[test]
    fn mapper_text_round_trip() {
        let m = ClusterMapper::from_groups(vec![
            vec![("C++", 1), ("C", 1), ("Java", 3)],
            vec![("Data Entry", 7)],
        ])
        .unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("0\tJava\t3\t0.600000000"));
        assert_eq!(ClusterMapper::read_text(buf.as_slice()).unwrap(), m);
    }
}
