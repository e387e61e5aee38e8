use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k_min: 2,
            k_max: 10,
            restarts: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub k: usize,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub silhouette: f64,
    /// Mean silhouette per candidate k.
    pub scores: Vec<(usize, f64)>,
    /// All points coincide; a single cluster was returned.
    pub degenerate: bool,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(x: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    centroids.row_mut(0).assign(&x.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(x.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point already sits on a centroid
            Err(_) => rng.gen_range(0..n),
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(x.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn lloyd(
    x: ArrayView2<'_, f64>,
    mut centroids: Array2<f64>,
    max_iter: usize,
) -> (Vec<usize>, Array2<f64>, f64) {
    let (n, d) = x.dim();
    let k = centroids.nrows();
    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter.max(1) {
        let next: Vec<(usize, f64)> = (0..n).map(|i| nearest(x.row(i), &centroids)).collect();
        let changed = next.iter().zip(&assign).any(|(a, b)| a.0 != *b);
        for (i, (c, _)) in next.iter().enumerate() {
            assign[i] = *c;
        }
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut row = sums.row_mut(assign[i]);
            row += &x.row(i);
            counts[assign[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            } else {
                // reseed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| next[a].1.total_cmp(&next[b].1).then(b.cmp(&a)))
                    .unwrap();
                centroids.row_mut(c).assign(&x.row(far));
            }
        }
        if !changed && counts.iter().all(|c| *c > 0) {
            break;
        }
    }
    let assign: Vec<usize> = (0..n).map(|i| nearest(x.row(i), &centroids).0).collect();
    let inertia = (0..n)
        .map(|i| sq_dist(x.row(i), centroids.row(assign[i])))
        .sum();
    (assign, centroids, inertia)
}

/// Mean silhouette with Euclidean distance; points in singleton clusters
/// score 0.
pub fn silhouette(x: ArrayView2<'_, f64>, assign: &[usize], k: usize) -> f64 {
    let n = x.nrows();
    let mut sizes = vec![0usize; k];
    for &a in assign {
        sizes[a] += 1;
    }
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = assign[i];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[assign[j]] += sq_dist(x.row(i), x.row(j)).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total / n as f64
}

fn fit_k(
    x: ArrayView2<'_, f64>,
    k: usize,
    config: &KMeansConfig,
) -> (Vec<usize>, Array2<f64>, f64) {
    let runs: Vec<(Vec<usize>, Array2<f64>, f64)> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(((k as u64) << 32) | r as u64);
            let init = plus_plus_init(x, k, &mut rng);
            lloyd(x, init, config.max_iter)
        })
        .collect();
    runs.into_iter()
        .reduce(|best, run| if run.2 < best.2 { run } else { best })
        .unwrap()
}

/// k-means++ with restarts for each k in range; keeps the k with the best
/// mean silhouette.
pub fn cluster_kmeans(x: ArrayView2<'_, f64>, config: &KMeansConfig) -> Result<KMeansFit> {
    let n = x.nrows();
    if n < 4 {
        return Err(Error::Config(format!(
            "clustering needs at least 4 points, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("clustering input must be finite".into()));
    }
    let k_min = config.k_min.max(2);
    let k_max = config.k_max.min(n - 1);
    if k_min > k_max {
        return Err(Error::Config(format!(
            "empty k range [{}, {}]",
            config.k_min, config.k_max
        )));
    }
    let first = x.row(0);
    if (1..n).all(|i| x.row(i) == first) {
        tracing::warn!("all points identical; returning a single cluster");
        return Ok(KMeansFit {
            assignments: vec![0; n],
            k: 1,
            centroids: first.to_owned().insert_axis(ndarray::Axis(0)),
            inertia: 0.0,
            silhouette: 0.0,
            scores: Vec::new(),
            degenerate: true,
        });
    }
    let mut best: Option<(usize, Vec<usize>, Array2<f64>, f64, f64)> = None;
    let mut scores = Vec::new();
    for k in k_min..=k_max {
        let (assign, centroids, inertia) = fit_k(x, k, config);
        let s = silhouette(x, &assign, k);
        scores.push((k, s));
        if best.as_ref().map_or(true, |b| s > b.4) {
            best = Some((k, assign, centroids, inertia, s));
        }
    }
    let (k, assignments, centroids, inertia, silhouette) = best.unwrap();
    Ok(KMeansFit {
        assignments,
        k,
        centroids,
        inertia,
        silhouette,
        scores,
        degenerate: false,
    })
}
