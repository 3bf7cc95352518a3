use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use krew_core::metrics::pca::{pca_project3, write_pca_csv};
use krew_core::metrics::{evaluate, MeanWordEmbedder, SkillsetEmbedder};
use krew_core::{Dataset, EmbedConfig, EncoderKind, Schema};
use krew_ctgan::{TrainConfig, TrainLog};

use crate::bench::{run_encoder_benchmark, synthetic_skill_dataset, BenchConfig};
use crate::bundle::{load_bundle, save_bundle};
use crate::error::{Error, Result};
use crate::http::{serve, Registry, ServiceConfig, ADDR_ENV, DEFAULT_ADDR, DEFAULT_ROW_CAP};
use crate::pipeline::{fit, FitConfig};

#[derive(Debug, Parser)]
#[command(name = "krew", version, about = "Synthetic tables with word-set columns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit embeddings, clusters, encoder and GAN, then write a bundle.
    Train(TrainArgs),
    /// Sample rows from a bundle and write them as CSV.
    Generate(GenerateArgs),
    /// Compare a synthetic CSV against its source.
    Evaluate(EvaluateArgs),
    /// Time and measure the three encoders on one dataset.
    Bench(BenchArgs),
    /// Serve bundles over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Bundle directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of skill clusters; chosen by the elbow rule when omitted.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub max_k: usize,
    #[arg(long, default_value_t = 350, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub embed_epochs: u64,
    #[arg(long, default_value_t = 60)]
    pub batch_size: usize,
    #[arg(long, default_value = "cluster-count")]
    pub encoder: EncoderKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset kind recorded in the bundle (task or worker).
    #[arg(long, default_value = "task")]
    pub label: String,
    /// Repeat each source row cyclically up to this many rows before training.
    #[arg(long)]
    pub upsample: Option<usize>,
    /// Per-epoch loss log (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub synthetic: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Bundle whose word vectors score skillset matching.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Report CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Three-component PCA projection of both tables (CSV).
    #[arg(long)]
    pub pca: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Source CSV; a synthetic dataset is generated when omitted.
    #[arg(long, requires = "schema")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub skills: usize,
    #[arg(long, default_value_t = 600)]
    pub rows: usize,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, default_value_t = 350, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// `DATASET:KIND=DIR`, for example `upwork:task=bundles/task`.
    #[arg(long = "bundle", required = true)]
    pub bundles: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_ROW_CAP, value_parser = clap::value_parser!(i64).range(1..))]
    pub cap: i64,
    /// Bind address; falls back to the environment, then the default.
    #[arg(long, env = ADDR_ENV, default_value = DEFAULT_ADDR)]
    pub addr: SocketAddr,
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn load_source(data: &PathBuf, schema: &PathBuf) -> Result<Dataset> {
    let schema = Schema::load_manifest(schema)?;
    Ok(Dataset::load_csv(data, &schema)?)
}

fn run_train(a: TrainArgs) -> Result<()> {
    let mut data = load_source(&a.data, &a.schema)?;
    if let Some(n) = a.upsample {
        data = data.upsample(n);
    }
    let config = FitConfig {
        label: a.label,
        encoder: a.encoder,
        k: a.k.map(|k| k as usize),
        max_k: a.max_k,
        embed: EmbedConfig {
            epochs: a.embed_epochs as usize,
            ..EmbedConfig::default()
        },
        gan: TrainConfig {
            epochs: a.epochs as usize,
            batch_size: a.batch_size,
            ..TrainConfig::default()
        },
        seed: a.seed,
    };
    let mut log = TrainLog::new();
    let bundle = fit(&data, &config, &mut log)?;
    save_bundle(&bundle, &a.out)?;
    if let Some(path) = &a.log {
        let mut w = create(path)?;
        log.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
    }
    let k = bundle
        .mapper
        .as_ref()
        .map(|m| m.len().to_string())
        .unwrap_or("-".into());
    eprintln!(
        "trained {} on {} rows: encoder {}, K {k}, width {}; bundle at {}",
        bundle.label,
        data.len(),
        bundle.encoder,
        bundle.model.layout.width(),
        a.out.display()
    );
    Ok(())
}

fn run_generate(a: GenerateArgs) -> Result<()> {
    let bundle = load_bundle(&a.bundle)?;
    let generated = bundle.generate(a.rows as usize, a.seed)?;
    generated.dataset.save_csv(&a.out)?;
    eprintln!(
        "wrote {} rows to {} ({} regenerated, {} fallback)",
        generated.dataset.len(),
        a.out.display(),
        generated.resampled,
        generated.fallbacks
    );
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let schema = Schema::load_manifest(&a.schema)?;
    let source = Dataset::load_csv(&a.source, &schema)?;
    let synthetic = Dataset::load_csv(&a.synthetic, &schema)?;
    let bundle = a.bundle.as_ref().map(load_bundle).transpose()?;
    let embedder = bundle.as_ref().map(|b| MeanWordEmbedder::new(&b.embeddings));
    let report = evaluate(
        &source,
        &synthetic,
        embedder.as_ref().map(|e| e as &dyn SkillsetEmbedder),
        "source/synthetic",
    )?;
    match &a.out {
        Some(path) => report.write_csv(create(path)?)?,
        None => report.write_csv(std::io::stdout().lock())?,
    }
    if let Some(path) = &a.pca {
        let (_, src, syn) = pca_project3(&source, &synthetic)?;
        write_pca_csv(create(path)?, &[("source", &src[..]), ("synthetic", &syn[..])])?;
    }
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<()> {
    let k = a.k as usize;
    let data = match (&a.data, &a.schema) {
        (Some(d), Some(s)) => load_source(d, s)?,
        _ => {
            if k > a.skills {
                return Err(Error::Invalid(format!("k {k} exceeds {} skills", a.skills)));
            }
            synthetic_skill_dataset(a.skills, k, a.rows, a.seed)?
        }
    };
    let config = BenchConfig {
        epochs: a.epochs as usize,
        k,
        seed: a.seed,
        ..BenchConfig::default()
    };
    let report = run_encoder_benchmark(&data, &config);
    for v in &report.variants {
        let peak = v
            .peak_bytes()
            .map(|b| format!("{b} B"))
            .unwrap_or("unavailable".into());
        match &v.failure {
            Some(f) => eprintln!("{:<14} width {:>5}  FAILED: {f}", v.kind.as_str(), v.width),
            None => eprintln!(
                "{:<14} width {:>5}  {:>10.2} ms/epoch  peak {peak}",
                v.kind.as_str(),
                v.width,
                v.per_epoch_ms()
            ),
        }
    }
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        report.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    if report.variants.iter().any(|v| v.failure.is_some()) {
        return Err(Error::Invalid("at least one variant failed".into()));
    }
    Ok(())
}

fn parse_bundle_spec(spec: &str) -> Result<(&str, &str, &str)> {
    let bad = || Error::Invalid(format!("expected DATASET:KIND=DIR, got `{spec}`"));
    let (key, dir) = spec.split_once('=').ok_or_else(bad)?;
    let (dataset, kind) = key.split_once(':').ok_or_else(bad)?;
    if dataset.is_empty() || dir.is_empty() {
        return Err(bad());
    }
    Ok((dataset, kind, dir))
}

fn run_serve(a: ServeArgs) -> Result<()> {
    let mut registry = Registry::new();
    for spec in &a.bundles {
        let (dataset, kind, dir) = parse_bundle_spec(spec)?;
        registry
            .insert(dataset, kind, load_bundle(dir)?)
            .map_err(Error::Invalid)?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    runtime
        .block_on(serve(registry, ServiceConfig { row_cap: a.cap }, a.addr))
        .map_err(|e| Error::io(a.addr.to_string(), e))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => run_train(a),
        Command::Generate(a) => run_generate(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Bench(a) => run_bench(a),
        Command::Serve(a) => run_serve(a),
    }
}
