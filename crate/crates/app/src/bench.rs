//! Encoder benchmark: encoded widths, per-epoch wall time and peak memory
//! for the one-hot, multi-hot and cluster-count variants.
//!
//! Peak memory comes from [`TrackingAllocator`] when a binary installs it as
//! the global allocator, otherwise from the kernel's resident-set high-water
//! mark (`VmHWM`, reset per section through `/proc/self/clear_refs`).

use std::alloc::{GlobalAlloc, Layout, System};
use std::fs;
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use krew_core::{Dataset, EmbedConfig, EncoderKind, WordSet};
use krew_ctgan::{train, EpochStats, TrainConfig, TrainHooks};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pipeline::{prepare, FitConfig};

static CURRENT: AtomicU64 = AtomicU64::new(0);
static PEAK: AtomicU64 = AtomicU64::new(0);
static INSTALLED: AtomicBool = AtomicBool::new(false);
// Peak seen by enclosing sections, carried across nested ones.
static CARRY: AtomicU64 = AtomicU64::new(0);

/// Counting wrapper around the system allocator.
pub struct TrackingAllocator;

fn grow(by: usize) {
    let now = CURRENT.fetch_add(by as u64, Ordering::Relaxed) + by as u64;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

fn shrink(by: usize) {
    CURRENT.fetch_sub(by as u64, Ordering::Relaxed);
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        INSTALLED.store(true, Ordering::Relaxed);
        let p = System.alloc(layout);
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        INSTALLED.store(true, Ordering::Relaxed);
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        shrink(layout.size());
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            if new_size > layout.size() {
                grow(new_size - layout.size());
            } else {
                shrink(layout.size() - new_size);
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemorySource {
    /// Live heap bytes counted by [`TrackingAllocator`].
    Allocator,
    /// Resident set size from `/proc/self/status`.
    ResidentSet,
}

impl MemorySource {
    pub fn detect() -> Option<MemorySource> {
        if INSTALLED.load(Ordering::Relaxed) {
            Some(MemorySource::Allocator)
        } else if proc_status_kib("VmHWM:").is_some() && fs::write("/proc/self/clear_refs", "5").is_ok() {
            Some(MemorySource::ResidentSet)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MemorySource::Allocator => "heap",
            MemorySource::ResidentSet => "rss",
        }
    }
}

fn proc_status_kib(key: &str) -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with(key))?;
    line[key.len()..].split_whitespace().next()?.parse().ok()
}

fn current(source: MemorySource) -> u64 {
    match source {
        MemorySource::Allocator => CURRENT.load(Ordering::Relaxed),
        MemorySource::ResidentSet => proc_status_kib("VmRSS:").unwrap_or(0) * 1024,
    }
}

fn high_water(source: MemorySource) -> u64 {
    match source {
        MemorySource::Allocator => PEAK.load(Ordering::Relaxed),
        MemorySource::ResidentSet => proc_status_kib("VmHWM:").unwrap_or(0) * 1024,
    }
}

fn reset_high_water(source: MemorySource) {
    match source {
        MemorySource::Allocator => PEAK.store(CURRENT.load(Ordering::Relaxed), Ordering::Relaxed),
        MemorySource::ResidentSet => {
            let _ = fs::write("/proc/self/clear_refs", "5");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryReading {
    pub source: MemorySource,
    /// Bytes in use when the section started.
    pub baseline: u64,
    /// Highest bytes in use while the section ran.
    pub peak: u64,
}

impl MemoryReading {
    pub fn above_baseline(&self) -> u64 {
        self.peak.saturating_sub(self.baseline)
    }
}

/// Runs `f` and reports its memory high-water mark, or `None` when neither
/// source is available. Sections nest; an outer peak is never below an inner
/// one. The counters are process wide, so concurrent sections see each
/// other's allocations.
pub fn peak_memory<T>(f: impl FnOnce() -> T) -> (T, Option<MemoryReading>) {
    let Some(source) = MemorySource::detect() else {
        return (f(), None);
    };
    CARRY.fetch_max(high_water(source), Ordering::SeqCst);
    let saved = CARRY.swap(0, Ordering::SeqCst);
    reset_high_water(source);
    let baseline = current(source);
    let out = f();
    let peak = high_water(source).max(CARRY.load(Ordering::SeqCst)).max(baseline);
    CARRY.store(saved.max(peak), Ordering::SeqCst);
    (
        out,
        Some(MemoryReading {
            source,
            baseline,
            peak,
        }),
    )
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub epochs: usize,
    /// Cluster count for the cluster-count variant.
    pub k: usize,
    pub embed: EmbedConfig,
    pub gan: TrainConfig,
    pub seed: u64,
    pub variants: Vec<EncoderKind>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            epochs: 350,
            k: 20,
            embed: EmbedConfig::default(),
            gan: TrainConfig::default(),
            seed: 0,
            variants: EncoderKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantReport {
    pub kind: EncoderKind,
    /// Encoded width `p + m`, `p + n` or `p + K`; zero if encoding failed.
    pub width: usize,
    pub rows: usize,
    pub epoch_ms: Vec<f64>,
    pub peak: Option<MemoryReading>,
    pub failure: Option<String>,
}

impl VariantReport {
    pub fn epochs_completed(&self) -> usize {
        self.epoch_ms.len()
    }

    pub fn total_ms(&self) -> f64 {
        self.epoch_ms.iter().sum()
    }

    pub fn per_epoch_ms(&self) -> f64 {
        if self.epoch_ms.is_empty() {
            0.0
        } else {
            self.total_ms() / self.epoch_ms.len() as f64
        }
    }

    pub fn peak_bytes(&self) -> Option<u64> {
        self.peak.map(|r| r.peak)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub variants: Vec<VariantReport>,
}

impl BenchReport {
    pub fn variant(&self, kind: EncoderKind) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.kind == kind)
    }

    /// `variant,width,epoch,epoch_ms,peak_bytes`, one line per epoch.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "variant,width,epoch,epoch_ms,peak_bytes")?;
        for v in &self.variants {
            let peak = v.peak_bytes().map(|b| b.to_string()).unwrap_or_default();
            for (e, ms) in v.epoch_ms.iter().enumerate() {
                writeln!(out, "{},{},{},{ms:.3},{peak}", v.kind, v.width, e + 1)?;
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct EpochTimes(Vec<f64>);

impl TrainHooks for EpochTimes {
    fn on_epoch(&mut self, stats: &EpochStats) {
        self.0.push(stats.millis);
    }
}

/// Trains every requested variant with the same GAN configuration; only the
/// encoder differs. A failing variant keeps its slot with a failure note.
pub fn run_encoder_benchmark(dataset: &Dataset, config: &BenchConfig) -> BenchReport {
    let gan = TrainConfig {
        epochs: config.epochs,
        seed: config.seed,
        ..config.gan.clone()
    };
    let mut variants = Vec::new();
    for &kind in &config.variants {
        let fit = FitConfig {
            encoder: kind,
            k: Some(config.k),
            embed: config.embed.clone(),
            gan: gan.clone(),
            seed: config.seed,
            ..FitConfig::default()
        };
        let mut report = VariantReport {
            kind,
            width: 0,
            rows: dataset.len(),
            epoch_ms: Vec::new(),
            peak: None,
            failure: None,
        };
        match prepare(dataset, &fit) {
            Err(e) => report.failure = Some(e.to_string()),
            Ok(prepared) => {
                report.width = prepared.table.width();
                drop(prepared.embeddings);
                let mut times = EpochTimes::default();
                let start = Instant::now();
                let (result, peak) = peak_memory(|| train(&prepared.table, &gan, &mut times).map(drop));
                if let Err(e) = result {
                    report.failure = Some(format!("{e} after {:.0} ms", start.elapsed().as_secs_f64() * 1e3));
                }
                report.epoch_ms = times.0;
                report.peak = peak;
            }
        }
        variants.push(report);
    }
    BenchReport { variants }
}

/// A word-set dataset over `skills` words named `skill000`, `skill001`, ...
/// Word `i` belongs to group `i % groups`; each row starts from word
/// `row % skills` and adds one to three more words of the same group, so
/// every word appears once `rows >= skills`.
pub fn synthetic_skill_dataset(
    skills: usize,
    groups: usize,
    rows: usize,
    seed: u64,
) -> krew_core::Result<Dataset> {
    assert!(skills > 0 && groups > 0 && groups <= skills);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members: Vec<Vec<usize>> = (0..groups)
        .map(|g| (0..skills).filter(|i| i % groups == g).collect())
        .collect();
    let name = |i: usize| format!("skill{i:03}");
    let sets = (0..rows)
        .map(|r| {
            let first = r % skills;
            let group = &members[first % groups];
            let mut set = WordSet::from_tokens([name(first)]);
            let extra = rng.random_range(1..=3).min(group.len() - 1);
            while set.len() < extra + 1 {
                let &w = group.choose(&mut rng).expect("group is non-empty");
                set.insert(&name(w));
            }
            set
        })
        .collect();
    Dataset::from_wordsets("skills", ',', sets)
}
