#![allow(dead_code)]

use std::path::PathBuf;

use krew_app::{fit, FitConfig, ModelBundle};
use krew_core::{Dataset, EmbedConfig, EncoderKind, Schema};
use krew_ctgan::TrainConfig;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn load(name: &str) -> Dataset {
    let schema = Schema::load_manifest(fixtures().join(format!("{name}.schema"))).unwrap();
    Dataset::load_csv(fixtures().join(format!("{name}.csv")), &schema).unwrap()
}

pub fn quick_config(encoder: EncoderKind, epochs: usize, seed: u64) -> FitConfig {
    FitConfig {
        encoder,
        k: Some(4),
        embed: EmbedConfig {
            epochs: 50,
            ..EmbedConfig::default()
        },
        gan: TrainConfig {
            epochs,
            ..TrainConfig::default()
        },
        seed,
        ..FitConfig::default()
    }
}

/// The seven-row fixture repeated to `rows`, trained briefly.
pub fn quick_bundle(name: &str, rows: usize, encoder: EncoderKind, seed: u64) -> ModelBundle {
    let data = load(name).upsample(rows);
    fit(&data, &quick_config(encoder, 3, seed), &mut ()).unwrap()
}
