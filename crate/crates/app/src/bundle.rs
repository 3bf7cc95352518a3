//! On-disk model bundle.
//!
//! A bundle is a directory:
//!
//! - `manifest.json`: format version, label, configs, transform, layout,
//!   network shapes, the tensor table and a SHA-256 per member file
//! - `weights.bin`: every tensor as little-endian `f64`, row-major, in
//!   tensor-table order
//! - `embeddings.txt`: word vectors in the plain text format
//! - `mapper.txt`: cluster membership table (cluster-count bundles only)
//!
//! Floats go through shortest round-trip formatting or raw bytes, so a
//! reloaded bundle equals the saved one bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use krew_core::{ClusterMapper, EmbeddingModel, EncodedLayout, EncoderKind, Schema};
use krew_ctgan::{Discriminator, Generator, Tensor, TrainConfig, TrainedModel, TransformSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS: &str = "weights.bin";
pub const EMBEDDINGS: &str = "embeddings.txt";
pub const MAPPER: &str = "mapper.txt";

/// Everything needed to regenerate data for one dataset kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    /// Dataset kind such as `task` or `worker`.
    pub label: String,
    pub encoder: EncoderKind,
    pub embeddings: EmbeddingModel,
    pub mapper: Option<ClusterMapper>,
    pub model: TrainedModel,
    /// Used when a generated row stays empty after every resample.
    pub fallback_word: String,
}

impl ModelBundle {
    pub fn schema(&self) -> &Schema {
        &self.model.layout.source_schema
    }

    pub fn seed(&self) -> u64 {
        self.model.config.seed
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GeneratorShape {
    input_width: usize,
    hidden: usize,
    output_width: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiscriminatorShape {
    row_width: usize,
    hidden: usize,
    pac: usize,
    dropout: f64,
    slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Offset into `weights.bin`, in `f64` elements.
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    label: String,
    encoder: EncoderKind,
    fallback_word: String,
    embedding_seed: u64,
    train_config: TrainConfig,
    transform: TransformSpec,
    layout: EncodedLayout,
    generator: GeneratorShape,
    discriminator: DiscriminatorShape,
    tensors: Vec<TensorEntry>,
    /// Member file name to lowercase hex SHA-256.
    members: BTreeMap<String, String>,
}

const GENERATOR_PARAMS: [&str; 10] = [
    "w1", "b1", "gamma1", "beta1", "w2", "b2", "gamma2", "beta2", "w3", "b3",
];
const GENERATOR_RUNNING: [&str; 4] = ["mean1", "var1", "mean2", "var2"];
const DISCRIMINATOR_PARAMS: [&str; 6] = ["w1", "b1", "w2", "b2", "w3", "b3"];

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn named_tensors(model: &TrainedModel) -> Vec<(String, &Tensor)> {
    let g = &model.generator;
    let d = &model.discriminator;
    GENERATOR_PARAMS
        .iter()
        .zip(&g.params)
        .map(|(n, t)| (format!("generator.{n}"), t))
        .chain(
            GENERATOR_RUNNING
                .iter()
                .zip(&g.running)
                .map(|(n, t)| (format!("generator.{n}"), t)),
        )
        .chain(
            DISCRIMINATOR_PARAMS
                .iter()
                .zip(&d.params)
                .map(|(n, t)| (format!("discriminator.{n}"), t)),
        )
        .collect()
}

pub fn save_bundle(bundle: &ModelBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut members = BTreeMap::new();
    let mut write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        members.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    };

    let mut tensors = Vec::new();
    let mut weights = Vec::new();
    for (name, t) in named_tensors(&bundle.model) {
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid(format!("tensor {name} has non-finite values")));
        }
        let (rows, cols) = t.dim();
        tensors.push(TensorEntry {
            name,
            rows,
            cols,
            offset: weights.len() / 8,
        });
        for x in t.iter() {
            weights.extend_from_slice(&x.to_le_bytes());
        }
    }
    write(WEIGHTS, &weights)?;

    let mut text = Vec::new();
    bundle
        .embeddings
        .write_text(&mut text)
        .map_err(|e| Error::io(dir.join(EMBEDDINGS), e))?;
    write(EMBEDDINGS, &text)?;
    if let Some(mapper) = &bundle.mapper {
        let mut text = Vec::new();
        mapper.write_text(&mut text)?;
        write(MAPPER, &text)?;
    }

    let m = &bundle.model;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        label: bundle.label.clone(),
        encoder: bundle.encoder,
        fallback_word: bundle.fallback_word.clone(),
        embedding_seed: bundle.embeddings.seed(),
        train_config: m.config.clone(),
        transform: m.transform.clone(),
        layout: m.layout.clone(),
        generator: GeneratorShape {
            input_width: m.generator.input_width,
            hidden: m.generator.hidden,
            output_width: m.generator.output_width,
        },
        discriminator: DiscriminatorShape {
            row_width: m.discriminator.row_width,
            hidden: m.discriminator.hidden,
            pac: m.discriminator.pac,
            dropout: m.discriminator.dropout,
            slope: m.discriminator.slope,
        },
        tensors,
        members,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

fn read_member(dir: &Path, name: &str, manifest: &Manifest) -> Result<Vec<u8>> {
    let want = manifest
        .members
        .get(name)
        .ok_or_else(|| Error::corrupt(name, "not listed in the manifest"))?;
    let bytes = fs::read(dir.join(name)).map_err(|e| Error::corrupt(name, format!("cannot read: {e}")))?;
    if &sha256_hex(&bytes) != want {
        return Err(Error::corrupt(name, "checksum mismatch"));
    }
    Ok(bytes)
}

fn take_tensors(manifest: &Manifest, weights: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    if !weights.len().is_multiple_of(8) {
        return Err(Error::corrupt(WEIGHTS, "length is not a multiple of 8"));
    }
    let values: Vec<f64> = weights
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut out = BTreeMap::new();
    for e in &manifest.tensors {
        let end = e.offset + e.rows * e.cols;
        let slice = values
            .get(e.offset..end)
            .ok_or_else(|| Error::corrupt(WEIGHTS, format!("tensor {} runs past the end", e.name)))?;
        if slice.iter().any(|x| !x.is_finite()) {
            return Err(Error::corrupt(
                WEIGHTS,
                format!("tensor {} has non-finite values", e.name),
            ));
        }
        let t = Tensor::from_shape_vec((e.rows, e.cols), slice.to_vec()).expect("length checked");
        out.insert(e.name.clone(), t);
    }
    Ok(out)
}

fn pull(tensors: &mut BTreeMap<String, Tensor>, prefix: &str, names: &[&str]) -> Result<Vec<Tensor>> {
    names
        .iter()
        .map(|n| {
            let key = format!("{prefix}.{n}");
            tensors
                .remove(&key)
                .ok_or_else(|| Error::corrupt(MANIFEST, format!("tensor {key} is missing")))
        })
        .collect()
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ModelBundle> {
    let dir = dir.as_ref();
    let raw =
        fs::read(dir.join(MANIFEST)).map_err(|e| Error::corrupt(MANIFEST, format!("cannot read: {e}")))?;
    // read the version alone first so newer layouts fail as incompatible
    let probe: serde_json::Value =
        serde_json::from_slice(&raw).map_err(|e| Error::corrupt(MANIFEST, e.to_string()))?;
    let found = probe
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::corrupt(MANIFEST, "no format_version"))?;
    if found != FORMAT_VERSION as u64 {
        return Err(Error::Incompatible {
            found: found.try_into().unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    let manifest: Manifest =
        serde_json::from_value(probe).map_err(|e| Error::corrupt(MANIFEST, e.to_string()))?;

    let weights = read_member(dir, WEIGHTS, &manifest)?;
    let mut tensors = take_tensors(&manifest, &weights)?;
    let embeddings = EmbeddingModel::read_text(
        BufReader::new(&read_member(dir, EMBEDDINGS, &manifest)?[..]),
        manifest.embedding_seed,
    )
    .map_err(|e| Error::corrupt(EMBEDDINGS, e.to_string()))?;
    let mapper = match manifest.encoder {
        EncoderKind::ClusterCount => {
            let text = read_member(dir, MAPPER, &manifest)?;
            let mapper = ClusterMapper::read_text(BufReader::new(&text[..]))
                .map_err(|e| Error::corrupt(MAPPER, e.to_string()))?;
            if manifest.layout.mapper_hash.as_deref() != Some(mapper.text_hash().as_str()) {
                return Err(Error::corrupt(MAPPER, "does not match the layout's mapper hash"));
            }
            if let Some(w) = mapper
                .clusters()
                .iter()
                .flat_map(|c| &c.words)
                .find(|w| !embeddings.contains(w))
            {
                return Err(Error::corrupt(MAPPER, format!("word `{w}` has no embedding")));
            }
            Some(mapper)
        }
        _ => None,
    };

    let g = &manifest.generator;
    let generator = Generator {
        params: pull(&mut tensors, "generator", &GENERATOR_PARAMS)?,
        running: pull(&mut tensors, "generator", &GENERATOR_RUNNING)?,
        input_width: g.input_width,
        hidden: g.hidden,
        output_width: g.output_width,
    };
    let d = &manifest.discriminator;
    let discriminator = Discriminator {
        params: pull(&mut tensors, "discriminator", &DISCRIMINATOR_PARAMS)?,
        row_width: d.row_width,
        hidden: d.hidden,
        pac: d.pac,
        dropout: d.dropout,
        slope: d.slope,
    };
    let model = TrainedModel::from_parts(
        manifest.transform,
        manifest.layout,
        generator,
        discriminator,
        manifest.train_config,
    )
    .map_err(|e| Error::corrupt(MANIFEST, e.to_string()))?;
    Ok(ModelBundle {
        label: manifest.label,
        encoder: manifest.encoder,
        embeddings,
        mapper,
        model,
        fallback_word: manifest.fallback_word,
    })
}
