use std::collections::HashMap;
use std::path::PathBuf;

use krew_core::metrics::{
    association_matrix, association_pearson, attribute_fidelity, entropy_bits, kl_divergence,
    pca::pca_project3, pearson, skill_distribution, skill_kl_divergence, skillset_entropy, skillset_matching,
    ExternalSkillsetEmbeddings, FrequencyDistribution,
};
use krew_core::{Dataset, Schema, WordSet};

fn table2() -> Dataset {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let schema = Schema::load_manifest(dir.join("table2.schema")).unwrap();
    Dataset::load_csv(dir.join("table2.csv"), &schema).unwrap()
}

fn sets(cells: &[&str]) -> Dataset {
    Dataset::from_wordsets(
        "skills",
        ',',
        cells.iter().map(|c| WordSet::parse(c, ',')).collect(),
    )
    .unwrap()
}

// independent oracle: direct sum over p log2 p
fn oracle_entropy(freqs: &[f64]) -> f64 {
    let total: f64 = freqs.iter().sum();
    -freqs
        .iter()
        .filter(|f| **f > 0.0)
        .map(|f| (f / total) * (f / total).log2())
        .sum::<f64>()
}

#[test]
fn uniform_entropy_is_k_bits() {
    for k in 0..8u32 {
        let n = 1usize << k;
        let p = vec![1.0 / n as f64; n];
        assert!((entropy_bits(&p) - k as f64).abs() < 1e-12);
    }
}

#[test]
fn entropy_of_skillset_frequency_table() {
    let freqs = [1.0, 2.0, 3.0, 4.0, 4.0, 2.0];
    let expected = oracle_entropy(&freqs);
    assert!((expected - 2.4528).abs() < 1e-3);
    let total: f64 = freqs.iter().sum();
    let p: Vec<f64> = freqs.iter().map(|f| f / total).collect();
    assert!((entropy_bits(&p) - expected).abs() < 1e-12);
}

#[test]
fn fixture_skillset_entropy_matches_oracle() {
    // the fixture itself: sizes (1,2,1,1,1,1) over six signatures
    let expected = oracle_entropy(&[1.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
    assert!((skillset_entropy(&table2()) - expected).abs() < 1e-12);
}

#[test]
fn kl_identity_and_nonnegativity() {
    let p = [0.1, 0.2, 0.3, 0.4];
    assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-9);
    let q = [0.25, 0.25, 0.25, 0.25];
    assert!(kl_divergence(&p, &q).unwrap() > 0.0);
}

#[test]
fn kl_over_skill_frequency_columns() {
    let src = [1.0, 1.0, 3.0, 4.0, 4.0, 2.0, 1.0, 1.0, 1.0];
    let syn = [2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 1.0, 2.0, 1.0];
    let sp: f64 = src.iter().sum();
    let sq: f64 = syn.iter().sum();
    let p: Vec<f64> = src.iter().map(|v| v / sp).collect();
    let q: Vec<f64> = syn.iter().map(|v| v / sq).collect();
    let oracle: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
    assert!((oracle - 0.1038).abs() < 1e-3);
    assert!((kl_divergence(&p, &q).unwrap() - oracle).abs() < 1e-7);
}

#[test]
fn kl_of_dataset_against_itself() {
    let d = table2();
    assert!(skill_kl_divergence(&d, &d).unwrap().abs() < 1e-9);
}

#[test]
fn skill_distribution_matches_counts() {
    let p = skill_distribution(&table2());
    assert!((p.get("HTML") - 4.0 / 18.0).abs() < 1e-12);
    assert!((p.get("Java") - 3.0 / 18.0).abs() < 1e-12);
    assert_eq!(p.get("Rust"), 0.0);
    let f = FrequencyDistribution::from_counts([("a", 1.0), ("b", 3.0)]);
    assert!((f.get("b") - 0.75).abs() < 1e-12);
}

#[test]
fn association_matrix_matches_pair_enumeration() {
    let d = table2();
    let m = association_matrix(&d);
    let mut oracle: HashMap<(String, String), u64> = HashMap::new();
    for set in d.wordsets() {
        let words: Vec<&str> = set.iter().collect();
        for a in &words {
            for b in &words {
                if a != b {
                    *oracle.entry((a.to_string(), b.to_string())).or_default() += 1;
                }
            }
        }
    }
    for a in &m.words {
        for b in &m.words {
            let expected = oracle.get(&(a.clone(), b.clone())).copied().unwrap_or(0);
            assert_eq!(m.get(a, b), Some(expected), "{a}-{b}");
        }
    }
    // rows 2, 3, 4 and 7 all hold both words
    assert_eq!(m.get("HTML", "JavaScript"), Some(4));
    assert_eq!(m.get("Java", "PHP"), Some(1));
    assert_eq!(m.get("Python", "R"), Some(1));
    assert_eq!(m.get("Java", "Java"), Some(0));
}

#[test]
fn pearson_identities() {
    let x = [1.0, 2.0, 3.5, -1.0];
    assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-9);
    let neg: Vec<f64> = x.iter().map(|v| -2.0 * v + 1.0).collect();
    assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-9);
    assert!(pearson(&[1.0, 1.0], &[0.0, 2.0]).is_err());
    let d = table2();
    assert!((association_pearson(&d, &d).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn matching_with_external_embeddings() {
    let mut emb = ExternalSkillsetEmbeddings::new(',');
    emb.insert(&WordSet::parse("A,B", ','), vec![1.0, 0.0]);
    emb.insert(&WordSet::parse("C", ','), vec![0.0, 1.0]);
    emb.insert(&WordSet::parse("A", ','), vec![1.0, 1.0]);
    let src = sets(&["A,B", "C"]);
    let syn = sets(&["B,A", "A"]);
    // first matches exactly, second has cosine 1/sqrt 2 to both
    let expected = (1.0 + 1.0 / 2f64.sqrt()) / 2.0;
    assert!((skillset_matching(&src, &syn, &emb).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn attribute_fidelity_identical_tables() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let schema = Schema::load_manifest(dir.join("tasks_mixed.schema")).unwrap();
    let d = Dataset::load_csv(dir.join("tasks_mixed.csv"), &schema).unwrap();
    let reports = attribute_fidelity(&d, &d, 10).unwrap();
    assert_eq!(reports.len(), 2);
    for r in reports {
        assert!(r.l1.abs() < 1e-12, "{}", r.column);
    }
}

#[test]
fn pca_reconstruction_residual_matches_discarded_variance() {
    // oracle: total variance minus the top-3 eigenvalues equals mean squared residual
    let src = table2();
    let (pca, coords, _) = pca_project3(&src, &src).unwrap();
    let n = src.len() as f64;
    let rows: Vec<Vec<f64>> = src
        .wordsets()
        .map(|s| {
            pca.words
                .iter()
                .map(|w| if s.contains(w) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let total_var: f64 = (0..pca.words.len())
        .map(|j| rows.iter().map(|r| (r[j] - pca.mean[j]).powi(2)).sum::<f64>() / n)
        .sum();
    let residual: f64 = rows
        .iter()
        .zip(&coords)
        .map(|(r, c)| {
            let back = pca.reconstruct(c);
            r.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        / n;
    let kept: f64 = pca.variances.iter().sum();
    assert!((total_var - kept - residual).abs() < 1e-9);
    for a in 0..3 {
        for b in 0..3 {
            let dot: f64 = pca.components[a]
                .iter()
                .zip(&pca.components[b])
                .map(|(x, y)| x * y)
                .sum();
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-9);
        }
    }
}

#[test]
fn best_match_picks_maximum_score() {
    let s1 = [0.985, 0.847, 0.845, 0.817, 0.853, 0.568, 0.847];
    let s2 = [0.896, 0.776, 0.761, 0.840, 0.874, 0.642, 0.776];
    assert_eq!(krew_core::metrics::best_match(&s1), Some(0.985));
    assert_eq!(krew_core::metrics::best_match(&s2), Some(0.896));
    assert_eq!(krew_core::metrics::best_match(&[]), None);
}
