mod common;

use std::hint::black_box;
use std::sync::{Mutex, MutexGuard};

use common::load;
use krew_app::bench::{
    peak_memory, run_encoder_benchmark, synthetic_skill_dataset, BenchConfig, MemorySource, TrackingAllocator,
};
use krew_app::{prepare, FitConfig};
use krew_core::{unique_words, EmbedConfig, EncoderKind};
use krew_ctgan::TrainConfig;
use proptest::prelude::*;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

fn small_gan() -> TrainConfig {
    TrainConfig {
        batch_size: 20,
        hidden: 16,
        noise_dim: 8,
        ..TrainConfig::default()
    }
}

fn small_bench(epochs: usize, k: usize) -> BenchConfig {
    BenchConfig {
        epochs,
        k,
        embed: EmbedConfig {
            epochs: 20,
            ..EmbedConfig::default()
        },
        gan: small_gan(),
        ..BenchConfig::default()
    }
}

// The allocator counters are process wide; tests here take turns.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

#[test]
fn allocator_sections() {
    let _turn = serial();
    const SIZE: usize = 64 << 20;
    let (held, hold) = peak_memory(|| black_box(vec![1u8; SIZE]));
    let hold = hold.expect("allocator installed");
    assert_eq!(hold.source, MemorySource::Allocator);
    assert!(hold.above_baseline() >= SIZE as u64, "{hold:?}");
    drop(held);

    let (_, empty) = peak_memory(|| ());
    let empty = empty.unwrap();
    assert!(empty.above_baseline() < 1 << 20, "{empty:?}");

    let (inner, outer) = peak_memory(|| {
        let (_, inner) = peak_memory(|| black_box(vec![2u8; SIZE / 4]).len());
        let after = black_box(vec![3u8; SIZE / 8]);
        (inner.unwrap(), after.len())
    });
    let (inner, outer) = (inner.0, outer.unwrap());
    assert!(outer.peak >= inner.peak, "outer {outer:?} inner {inner:?}");
    assert!(outer.above_baseline() >= (SIZE / 4) as u64);
}

#[test]
fn fixture_widths_follow_the_encoders() {
    let _turn = serial();
    let data = load("table2").upsample(40);
    let report = run_encoder_benchmark(&data, &small_bench(1, 4));
    let widths: Vec<(EncoderKind, usize)> = report.variants.iter().map(|v| (v.kind, v.width)).collect();
    assert_eq!(
        widths,
        [
            (EncoderKind::OneHot, 6),
            (EncoderKind::MultiHot, 9),
            (EncoderKind::ClusterCount, 4)
        ]
    );
    for v in &report.variants {
        assert!(v.failure.is_none(), "{:?}", v.failure);
        assert_eq!(v.epochs_completed(), 1);
        assert_eq!(v.per_epoch_ms(), v.total_ms());
        assert!(v.total_ms() >= 0.0);
        assert!(v.peak_bytes().unwrap() > 0);
    }
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("variant,width,epoch,epoch_ms,peak_bytes")
    );
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn mixed_fixture_adds_passthrough_columns() {
    let _turn = serial();
    let data = load("tasks_mixed").upsample(40);
    let report = run_encoder_benchmark(&data, &small_bench(1, 4));
    let widths: Vec<usize> = report.variants.iter().map(|v| v.width).collect();
    // nine distinct skillsets over ten skills, plus location and price
    assert_eq!(widths, [2 + 9, 2 + 10, 2 + 4]);
}

#[test]
fn failing_variants_leave_a_note() {
    let _turn = serial();
    // twenty clusters cannot be formed from nine words; the other variants still run
    let report = run_encoder_benchmark(&load("table2").upsample(40), &small_bench(2, 20));
    assert_eq!(report.variants.len(), 3);
    for v in &report.variants {
        if v.kind == EncoderKind::ClusterCount {
            assert!(v.failure.is_some());
            assert_eq!(v.epochs_completed(), 0);
        } else {
            assert!(v.failure.is_none(), "{:?}", v.failure);
            assert_eq!(v.epochs_completed(), 2);
        }
    }
}

#[test]
fn synthetic_dataset_covers_every_skill() {
    let _turn = serial();
    let data = synthetic_skill_dataset(200, 20, 600, 3).unwrap();
    assert_eq!(data.len(), 600);
    let vocab = unique_words(&data, "skills").unwrap();
    assert_eq!(vocab.len(), 200);
    assert!(data.wordsets().all(|s| (2..=4).contains(&s.len())));
    assert_eq!(
        data.rows(),
        synthetic_skill_dataset(200, 20, 600, 3).unwrap().rows()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn width_ordering(skills in 6usize..40, groups in 2usize..6, k_gap in 1usize..4, seed in 0u64..1000) {
        let _turn = serial();
        let groups = groups.min(skills);
        let data = synthetic_skill_dataset(skills, groups, skills + 10, seed).unwrap();
        let n = skills;
        let k = (n - k_gap).clamp(1, 8);
        let fit = |encoder| FitConfig {
            encoder,
            k: Some(k),
            embed: EmbedConfig { epochs: 2, ..EmbedConfig::default() },
            seed,
            ..FitConfig::default()
        };
        let width = |encoder| prepare(&data, &fit(encoder)).unwrap().table.width();
        let (one, multi, cluster) = (
            width(EncoderKind::OneHot),
            width(EncoderKind::MultiHot),
            width(EncoderKind::ClusterCount),
        );
        prop_assert_eq!(multi, n);
        prop_assert_eq!(cluster, k);
        prop_assert!(cluster < multi);
        let m = krew_core::metrics::distinct_skillsets(&data);
        prop_assert_eq!(one, m);
        if m < n {
            prop_assert!(one < multi);
        }
    }
}
