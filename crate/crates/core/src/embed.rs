//! Skip-gram word embeddings with negative sampling, trained on the tagged
//! corpus with a context window of one.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TaggedCorpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 32,
            epochs: 200,
            learning_rate: 0.025,
            negatives: 5,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Parameter(format!("embedding dim {} < 2", self.dim)));
        }
        if self.epochs < 1 {
            return Err(Error::Parameter("epochs must be >= 1".into()));
        }
        if self.negatives < 1 {
            return Err(Error::Parameter("negatives must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Token vectors for every corpus token (words and tags).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    vectors: Vec<f64>,
    seed: u64,
}

impl EmbeddingModel {
    pub fn from_rows(tokens: Vec<String>, dim: usize, vectors: Vec<f64>, seed: u64) -> Result<Self> {
        if vectors.len() != tokens.len() * dim {
            return Err(Error::Consistency(format!(
                "{} tokens x {dim} dims does not match {} values",
                tokens.len(),
                vectors.len()
            )));
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::Consistency("non-finite embedding value".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Consistency(format!("duplicate token `{t}`")));
            }
        }
        Ok(EmbeddingModel {
            tokens,
            index,
            dim,
            vectors,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embed_word(&self, word: &str) -> Result<&[f64]> {
        self.index
            .get(word)
            .map(|&i| self.row(i))
            .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        cosine(self.embed_word(a)?, self.embed_word(b)?)
    }

    /// Header `count dim`, then `token v1 ... vd` per line. Tokens may contain
    /// spaces; readers split the numbers off the right.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.tokens.len(), self.dim)?;
        for (i, t) in self.tokens.iter().enumerate() {
            write!(out, "{t}")?;
            for x in self.row(i) {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R, seed: u64) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Consistency("empty embedding file".into()))?
            .map_err(|e| Error::io("<embeddings>", e))?;
        let mut parts = header.split_whitespace();
        let (count, dim): (usize, usize) = match (
            parts.next().and_then(|s| s.parse().ok()),
            parts.next().and_then(|s| s.parse().ok()),
        ) {
            (Some(c), Some(d)) => (c, d),
            _ => return Err(Error::Consistency(format!("bad embedding header `{header}`"))),
        };
        let mut tokens = Vec::with_capacity(count);
        let mut vectors = Vec::with_capacity(count * dim);
        for line in lines {
            let line = line.map_err(|e| Error::io("<embeddings>", e))?;
            if line.is_empty() {
                continue;
            }
            let mut rest = line.as_str();
            let mut row = Vec::with_capacity(dim);
            for _ in 0..dim {
                let (head, num) = rest
                    .rsplit_once(' ')
                    .ok_or_else(|| Error::Consistency(format!("short embedding line `{line}`")))?;
                row.push(
                    num.parse::<f64>()
                        .map_err(|_| Error::Consistency(format!("bad number `{num}` in embedding line")))?,
                );
                rest = head;
            }
            row.reverse();
            tokens.push(rest.to_string());
            vectors.extend(row);
        }
        if tokens.len() != count {
            return Err(Error::Consistency(format!(
                "embedding header says {count} tokens, found {}",
                tokens.len()
            )));
        }
        EmbeddingModel::from_rows(tokens, dim, vectors, seed)
    }
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Parameter(format!(
            "dimension mismatch {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity("zero vector".into()));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn train_word2vec(corpus: &TaggedCorpus, config: &EmbedConfig) -> Result<EmbeddingModel> {
    train_word2vec_logged(corpus, config).map(|(m, _)| m)
}

/// Trains and also returns the mean skip-gram loss of every epoch.
pub fn train_word2vec_logged(
    corpus: &TaggedCorpus,
    config: &EmbedConfig,
) -> Result<(EmbeddingModel, Vec<f64>)> {
    config.validate()?;

    let mut tokens: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut ids: Vec<Vec<usize>> = Vec::with_capacity(corpus.len());
    for seq in corpus.sequences() {
        let mut s = Vec::with_capacity(seq.len());
        for t in seq {
            let id = *index.entry(t.clone()).or_insert_with(|| {
                tokens.push(t.clone());
                counts.push(0.0);
                tokens.len() - 1
            });
            counts[id] += 1.0;
            s.push(id);
        }
        ids.push(s);
    }
    if tokens.len() < 2 {
        return Err(Error::InsufficientVocabulary(format!(
            "corpus has {} distinct tokens, need at least 2",
            tokens.len()
        )));
    }

    let dim = config.dim;
    let n = tokens.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut input: Vec<f64> = (0..n * dim)
        .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0; n * dim];

    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for c in &counts {
        acc += c.powf(0.75);
        cumulative.push(acc);
    }
    let draw_negative = |rng: &mut ChaCha8Rng| -> usize {
        let x = rng.random::<f64>() * acc;
        cumulative.partition_point(|&c| c <= x).min(n - 1)
    };

    let pairs_per_epoch: usize = ids.iter().map(|s| 2 * s.len().saturating_sub(1)).sum();
    let total = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut done = 0usize;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut grad = vec![0.0; dim];

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_pairs = 0usize;
        for &r in &order {
            let seq = &ids[r];
            for pos in 0..seq.len() {
                let center = seq[pos];
                let neighbours = [pos.checked_sub(1), Some(pos + 1).filter(|&p| p < seq.len())];
                for ctx in neighbours.into_iter().flatten().map(|p| seq[p]) {
                    let lr = config.learning_rate * (1.0 - done as f64 / total).max(1e-4);
                    done += 1;
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let (c0, c1) = (center * dim, center * dim + dim);

                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (ctx, 1.0)
                        } else {
                            let t = draw_negative(&mut rng);
                            if t == ctx {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let (t0, t1) = (target * dim, target * dim + dim);
                        let dot: f64 = input[c0..c1]
                            .iter()
                            .zip(&output[t0..t1])
                            .map(|(a, b)| a * b)
                            .sum();
                        let p = sigmoid(dot);
                        epoch_loss -= if label == 1.0 {
                            p.max(1e-12).ln()
                        } else {
                            (1.0 - p).max(1e-12).ln()
                        };
                        let g = (label - p) * lr;
                        for j in 0..dim {
                            grad[j] += g * output[t0 + j];
                            output[t0 + j] += g * input[c0 + j];
                        }
                    }
                    for j in 0..dim {
                        input[c0 + j] += grad[j];
                    }
                    epoch_pairs += 1;
                }
            }
        }
        losses.push(epoch_loss / epoch_pairs.max(1) as f64);
    }

    let model = EmbeddingModel::from_rows(tokens, dim, input, config.seed)?;
    Ok((model, losses))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_tagged_corpus;
    use crate::schema::{Dataset, WordSet};

    fn corpus(sets: &[&[&str]]) -> TaggedCorpus {
        let d = Dataset::from_wordsets(
            "skills",
            ',',
            sets.iter().map(|s| WordSet::from_tokens(s.iter())).collect(),
        )
        .unwrap();
        build_tagged_corpus(&d, "skills").unwrap()
    }

    #[test]
    fn cosine_identities() {
        let v = [0.3, -1.2, 2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedSimilarity(_))
        ));
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_token_corpus_is_rejected() {
        let c = corpus(&[&[]]);
        assert!(matches!(
            train_word2vec(&c, &EmbedConfig::default()),
            Err(Error::InsufficientVocabulary(_))
        ));
    }

    #[test]
    fn config_validation() {
        let c = corpus(&[&["a", "b"]]);
        for bad in [
            EmbedConfig {
                dim: 1,
                ..Default::default()
            },
            EmbedConfig {
                epochs: 0,
                ..Default::default()
            },
            EmbedConfig {
                negatives: 0,
                ..Default::default()
            },
            EmbedConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(train_word2vec(&c, &bad), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn text_export_round_trips_with_spaces_in_tokens() {
        let c = corpus(&[&["Data Entry", "Excel"], &["Excel", "Word"]]);
        let cfg = EmbedConfig {
            epochs: 3,
            dim: 4,
            ..Default::default()
        };
        let m = train_word2vec(&c, &cfg).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = EmbeddingModel::read_text(buf.as_slice(), cfg.seed).unwrap();
        assert_eq!(back, m);
        assert!(back.embed_word("Data Entry").is_ok());
    }
}
