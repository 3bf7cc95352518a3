//! End-to-end fit (embeddings, clusters, encoder, GAN) and generation
//! (sample, resample empty rows, decode).

use krew_core::{
    build_mapper, build_tagged_corpus, decode, elbow_select_k, encode_cluster_counts, encode_multihot,
    encode_onehot_skillsets, kmeans, train_word2vec, unique_words, word_points, ClusterMapper, Dataset,
    EmbedConfig, EmbeddingModel, EncodedTable, EncoderKind, Value, WordSet,
};
use krew_ctgan::{train, TrainConfig, TrainHooks};

use crate::bundle::ModelBundle;
use crate::error::{Error, Result};

/// Attempts at regenerating a row whose skillset came out empty before the
/// most frequent word is used instead.
pub const RESAMPLE_ATTEMPTS: u64 = 20;

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub label: String,
    pub encoder: EncoderKind,
    /// Cluster count; `None` picks it with the elbow rule over `1..=max_k`.
    pub k: Option<usize>,
    pub max_k: usize,
    pub embed: EmbedConfig,
    pub gan: TrainConfig,
    /// Overrides the seeds in `embed` and `gan` and seeds K-means.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            label: "task".into(),
            encoder: EncoderKind::ClusterCount,
            k: None,
            max_k: 10,
            embed: EmbedConfig::default(),
            gan: TrainConfig::default(),
            seed: 0,
        }
    }
}

/// Embeddings, mapper and encoded table for one dataset, before GAN training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub embeddings: EmbeddingModel,
    pub mapper: Option<ClusterMapper>,
    pub table: EncodedTable,
    pub fallback_word: String,
}

pub fn prepare(dataset: &Dataset, config: &FitConfig) -> Result<Prepared> {
    let column = dataset.schema().wordset_column().name.clone();
    let vocab = unique_words(dataset, &column)?;
    let fallback_word = vocab
        .most_frequent()
        .ok_or_else(|| Error::Invalid("the word-set column has no words".into()))?
        .to_string();
    let corpus = build_tagged_corpus(dataset, &column)?;
    let embed = EmbedConfig {
        seed: config.seed,
        ..config.embed.clone()
    };
    let embeddings = train_word2vec(&corpus, &embed)?;
    let (mapper, table) = match config.encoder {
        EncoderKind::ClusterCount => {
            let points = word_points(&embeddings, &vocab)?;
            let k = match config.k {
                Some(k) => k,
                None => elbow_select_k(&points, 1..=config.max_k.min(points.len()), config.seed)?,
            };
            let mapper = build_mapper(&kmeans(&points, k, config.seed)?, &vocab)?;
            let table = encode_cluster_counts(dataset, &mapper)?;
            (Some(mapper), table)
        }
        EncoderKind::MultiHot => (None, encode_multihot(dataset, &vocab)?),
        EncoderKind::OneHot => (None, encode_onehot_skillsets(dataset)?),
    };
    Ok(Prepared {
        embeddings,
        mapper,
        table,
        fallback_word,
    })
}

pub fn fit(dataset: &Dataset, config: &FitConfig, hooks: &mut dyn TrainHooks) -> Result<ModelBundle> {
    let prepared = prepare(dataset, config)?;
    let gan = TrainConfig {
        seed: config.seed,
        ..config.gan.clone()
    };
    let model = train(&prepared.table, &gan, hooks)?;
    Ok(ModelBundle {
        label: config.label.clone(),
        encoder: config.encoder,
        embeddings: prepared.embeddings,
        mapper: prepared.mapper,
        model,
        fallback_word: prepared.fallback_word,
    })
}

#[derive(Debug, Clone)]
pub struct Generated {
    /// Encoded rows after empty rows were regenerated.
    pub encoded: EncodedTable,
    pub dataset: Dataset,
    /// Rows that needed at least one regeneration.
    pub resampled: usize,
    /// Rows that fell back to the most frequent word.
    pub fallbacks: usize,
}

fn attempt_seed(seed: u64, attempt: u64) -> u64 {
    seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl ModelBundle {
    /// `rows` synthetic records; identical for identical seeds.
    pub fn generate(&self, rows: usize, seed: u64) -> Result<Generated> {
        let mut table = self.model.sample(rows, seed)?;
        let skill = table.layout.skill_columns();
        let is_empty = |row: &[f64]| row[skill.clone()].iter().all(|&x| x < 0.5);
        let mut pending: Vec<usize> = (0..table.len()).filter(|&i| is_empty(&table.rows[i])).collect();
        let resampled = pending.len();
        for attempt in 1..=RESAMPLE_ATTEMPTS {
            if pending.is_empty() {
                break;
            }
            let fresh = self.model.sample(pending.len(), attempt_seed(seed, attempt))?;
            for (&slot, row) in pending.iter().zip(fresh.rows) {
                table.rows[slot] = row;
            }
            pending.retain(|&i| is_empty(&table.rows[i]));
        }
        let decoded = decode(&table, self.mapper.as_ref(), seed)?;
        let dataset = if pending.is_empty() {
            decoded
        } else {
            let ws = decoded.schema().wordset_index();
            let mut out = decoded.rows().to_vec();
            for &i in &pending {
                out[i][ws] = Value::Words(WordSet::from_tokens([self.fallback_word.as_str()]));
            }
            Dataset::new(decoded.schema().clone(), out)?
        };
        Ok(Generated {
            encoded: table,
            dataset,
            resampled,
            fallbacks: pending.len(),
        })
    }

    pub fn generate_csv(&self, rows: usize, seed: u64) -> Result<String> {
        Ok(self.generate(rows, seed)?.dataset.to_csv_string()?)
    }
}
