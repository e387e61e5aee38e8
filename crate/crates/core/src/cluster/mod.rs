//! Note clustering: PCA, k-means with silhouette selection, class-based
//! TF-IDF labels and the cluster-ordered similarity matrix.

mod ctfidf;
mod kmeans;
mod pca;
mod similarity;

use std::collections::HashMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use ctfidf::{ctfidf_terms, ctfidf_weights, prune_terms, TermWeight};
pub use kmeans::{cluster_kmeans, silhouette, KMeansConfig, KMeansFit};
pub use pca::{reduce_dims, Pca};
pub use similarity::{block_means, heatmap_svg, similarity_csv, similarity_matrix, xml_escape};

use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub target_dim: usize,
    pub top_n: usize,
    /// Terms in a larger share of notes are left out of the term ranking.
    pub max_df: f64,
    pub kmeans: KMeansConfig,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            target_dim: 10,
            top_n: 10,
            max_df: 0.9,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster id per note; -1 would mark noise, which k-means never emits.
    pub assignments: Vec<i64>,
    pub k: usize,
    pub top_terms: Vec<Vec<TermWeight>>,
    /// Note indices grouped by cluster, original order within a cluster.
    pub ordering: Vec<usize>,
    pub silhouette: f64,
    pub silhouette_by_k: Vec<(usize, f64)>,
    pub explained_variance_ratio: Vec<f64>,
    pub degenerate: bool,
}

pub fn cluster_ordering(assignments: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..assignments.len()).collect();
    order.sort_by_key(|&i| (assignments[i], i));
    order
}

/// Reduction, clustering and term ranking in one pass. Embeddings with at
/// most `target_dim` columns are clustered as they are.
pub fn cluster_notes<T: Scalar, S: AsRef<str>>(
    embeddings: ArrayView2<'_, T>,
    tokens: &[Vec<S>],
    config: &ClusterConfig,
) -> Result<ClusterResult> {
    let (reduced, ratio) = if embeddings.ncols() > config.target_dim {
        let (z, pca) = reduce_dims(embeddings, config.target_dim)?;
        (z, pca.explained_variance_ratio)
    } else {
        (embeddings.mapv(|v| v.to_f64_lossy()), Vec::new())
    };
    let fit = cluster_kmeans(reduced.view(), &config.kmeans)?;
    let top_terms = if fit.k >= 2 {
        ctfidf_terms(
            &prune_terms(tokens, config.max_df),
            &fit.assignments,
            fit.k,
            config.top_n,
        )?
    } else {
        Vec::new()
    };
    Ok(ClusterResult {
        assignments: fit.assignments.iter().map(|a| *a as i64).collect(),
        k: fit.k,
        top_terms,
        ordering: cluster_ordering(&fit.assignments),
        silhouette: fit.silhouette,
        silhouette_by_k: fit.scores,
        explained_variance_ratio: ratio,
        degenerate: fit.degenerate,
    })
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((*x, *y)).or_default() += 1.0;
        *ra.entry(*x).or_default() += 1.0;
        *rb.entry(*y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|v| c2(*v)).sum();
    let sa: f64 = ra.values().map(|v| c2(*v)).sum();
    let sb: f64 = rb.values().map(|v| c2(*v)).sum();
    let expected = sa * sb / c2(n);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut pairs) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                pairs += 1.0;
                if sa && sb {
                    both += 1.0;
                }
                if sa {
                    only_a += 1.0;
                }
                if sb {
                    only_b += 1.0;
                }
            }
        }
        let expected = only_a * only_b / pairs;
        (both - expected) / ((only_a + only_b) / 2.0 - expected)
    }

    #[test]
    fn ari_matches_pair_counting() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.gen_range(5..60);
            let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            assert!((adjusted_rand_index(&a, &b) - brute_ari(&a, &b)).abs() < 1e-12);
        }
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
    }

    #[test]
    fn ordering_groups_clusters() {
        assert_eq!(cluster_ordering(&[2, 0, 1, 0, 2]), vec![1, 3, 2, 0, 4]);
    }

    #[test]
    fn end_to_end_on_planted_topics() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let vocab = [
            ["sepsis", "fever", "lactate"],
            ["insulin", "glucose", "metformin"],
            ["wheeze", "albuterol", "asthma"],
        ];
        let n = 90;
        let truth: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let mut emb = Array2::<f32>::zeros((n, 12));
        let mut tokens = Vec::new();
        for i in 0..n {
            let t = truth[i];
            for j in 0..12 {
                emb[[i, j]] = rng.gen_range(-0.2..0.2) + if j / 4 == t { 1.0 } else { 0.0 };
            }
            let mut doc: Vec<String> =
                vec!["patient".into(), "arrived".into(), format!("{}", i % 7)];
            doc.extend(vocab[t].iter().map(|s| s.to_string()));
            tokens.push(doc);
        }
        let cfg = ClusterConfig {
            target_dim: 4,
            ..Default::default()
        };
        let r = cluster_notes(emb.view(), &tokens, &cfg).unwrap();
        assert_eq!(r.k, 3);
        let assign: Vec<usize> = r.assignments.iter().map(|a| *a as usize).collect();
        assert_eq!(adjusted_rand_index(&assign, &truth), 1.0);
        for c in 0..3 {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            let topic = truth[members[0]];
            let top: Vec<&str> = r.top_terms[c]
                .iter()
                .take(3)
                .map(|t| t.term.as_str())
                .collect();
            for w in vocab[topic] {
                assert!(top.contains(&w), "{w} missing from {top:?}");
            }
        }
    }
}
