//! Histogram gradient-boosted trees with logistic loss.

mod binning;
mod multilabel;
mod tree;

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use binning::{bin_value, fit_edges, MISSING_BIN};
pub use multilabel::{fit_multilabel, MultilabelModel};
pub use tree::{split_gain, Node, Tree};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use tree::{grow, Binned, GrowParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_samples_leaf: usize,
    pub l2_lambda: f64,
    pub max_bins: usize,
    pub feature_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_trees: 200,
            learning_rate: 0.1,
            num_leaves: 31,
            min_samples_leaf: 20,
            l2_lambda: 1.0,
            max_bins: 255,
            feature_fraction: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.num_trees < 1 {
            return bad("num_trees must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if self.num_leaves < 2 {
            return bad("num_leaves must be at least 2");
        }
        if !(2..=255).contains(&self.max_bins) {
            return bad("max_bins must lie in [2, 255]");
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return bad("feature_fraction must lie in (0, 1]");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be non-negative");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: TrainConfig,
    /// Prior log-odds of the training rows.
    pub base_score: f64,
    pub n_features: usize,
    pub bin_edges: Vec<Vec<f64>>,
    pub trees: Vec<Tree>,
    /// Mean training log-loss before the first tree and after each tree.
    pub train_loss: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn log_loss(raw: &[f64], y: &[f64]) -> f64 {
    let total: f64 = raw
        .iter()
        .zip(y)
        .map(|(z, y)| if *y > 0.5 { softplus(-z) } else { softplus(*z) })
        .sum();
    total / raw.len() as f64
}

fn check_finite_or_nan(v: f64) -> Result<f64> {
    if v.is_infinite() {
        Err(Error::Config(
            "features must be finite (NaN marks missing)".into(),
        ))
    } else {
        Ok(v)
    }
}

/// Fits on the rows where `mask` is set; other rows have no influence at
/// all, including on bin edges. NaN features are missing.
pub fn fit<T: Scalar>(
    features: ArrayView2<'_, T>,
    labels: &[bool],
    mask: &[bool],
    config: &TrainConfig,
) -> Result<ForestModel> {
    fit_with(features, labels, mask, config, |_, _| {})
}

/// [`fit`] with a callback receiving (round, mean training loss) after each
/// tree.
pub fn fit_with<T: Scalar, F: FnMut(usize, f64)>(
    features: ArrayView2<'_, T>,
    labels: &[bool],
    mask: &[bool],
    config: &TrainConfig,
    mut on_round: F,
) -> Result<ForestModel> {
    config.validate()?;
    let (n, d) = features.dim();
    if labels.len() != n || mask.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: if labels.len() != n {
                labels.len()
            } else {
                mask.len()
            },
        });
    }
    let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    let pos = rows.iter().filter(|&&i| labels[i]).count();
    if pos == 0 || pos == rows.len() {
        return Err(Error::SingleClass(format!(
            "{} training rows, {pos} positive; skip this target",
            rows.len()
        )));
    }
    let m = rows.len();
    let y: Vec<f64> = rows.iter().map(|&i| labels[i] as u8 as f64).collect();

    let cols: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|f| {
            rows.iter()
                .map(|&i| check_finite_or_nan(features[[i, f]].to_f64_lossy()))
                .collect()
        })
        .collect::<Result<_>>()?;
    let bin_edges: Vec<Vec<f64>> = cols
        .par_iter()
        .map(|c| fit_edges(c, config.max_bins))
        .collect();
    let columns: Vec<Vec<u8>> = cols
        .par_iter()
        .zip(&bin_edges)
        .map(|(c, e)| c.iter().map(|v| bin_value(e, *v)).collect())
        .collect();
    drop(cols);
    let n_bins: Vec<usize> = bin_edges.iter().map(|e| e.len() + 1).collect();
    let data = Binned::new(&columns, &n_bins, &bin_edges);

    let prior = pos as f64 / m as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut raw = vec![base_score; m];
    let mut train_loss = vec![log_loss(&raw, &y)];
    let params = GrowParams {
        num_leaves: config.num_leaves,
        min_samples_leaf: config.min_samples_leaf,
        lambda: config.l2_lambda,
        learning_rate: config.learning_rate,
    };
    let n_sampled = ((config.feature_fraction * d as f64).ceil() as usize).clamp(1.min(d), d);
    let mut trees = Vec::with_capacity(config.num_trees);
    let mut g = vec![0.0; m];
    let mut h = vec![0.0; m];
    for round in 0..config.num_trees {
        for i in 0..m {
            let p = sigmoid(raw[i]);
            g[i] = p - y[i];
            h[i] = p * (1.0 - p);
        }
        let feats: Vec<usize> = if n_sampled == d {
            (0..d).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(round as u64);
            let mut f = sample(&mut rng, d, n_sampled).into_vec();
            f.sort_unstable();
            f
        };
        let (tree, outputs) = grow(&data, &feats, (0..m as u32).collect(), &g, &h, &params);
        for (leaf_rows, v) in outputs {
            for r in leaf_rows {
                raw[r as usize] += v;
            }
        }
        let loss = log_loss(&raw, &y);
        train_loss.push(loss);
        on_round(round, loss);
        trees.push(tree);
    }
    Ok(ForestModel {
        config: config.clone(),
        base_score,
        n_features: d,
        bin_edges,
        trees,
        train_loss,
    })
}

impl ForestModel {
    /// Log-odds per row.
    pub fn predict_raw<T: Scalar>(&self, features: ArrayView2<'_, T>) -> Result<Vec<f64>> {
        if features.ncols() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                actual: features.ncols(),
            });
        }
        (0..features.nrows())
            .into_par_iter()
            .map(|i| {
                let row = features.row(i);
                let mut bins = Vec::with_capacity(self.n_features);
                for (f, v) in row.iter().enumerate() {
                    bins.push(bin_value(
                        &self.bin_edges[f],
                        check_finite_or_nan(v.to_f64_lossy())?,
                    ));
                }
                let mut z = self.base_score;
                for t in &self.trees {
                    z += t.eval_binned(|f| bins[f]);
                }
                Ok(z)
            })
            .collect()
    }

    pub fn predict_proba<T: Scalar>(&self, features: ArrayView2<'_, T>) -> Result<Vec<f64>> {
        Ok(self
            .predict_raw(features)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::roc_auc;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn small(cfg: TrainConfig) -> TrainConfig {
        TrainConfig {
            min_samples_leaf: 2,
            ..cfg
        }
    }

    /// Walks raw thresholds instead of bins.
    fn oracle_predict(model: &ForestModel, x: &Array2<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let mut z = model.base_score;
                for t in &model.trees {
                    let mut k = 0;
                    loop {
                        match &t.nodes[k] {
                            Node::Leaf { value } => {
                                z += value;
                                break;
                            }
                            Node::Split {
                                feature,
                                threshold,
                                default_left,
                                left,
                                right,
                                ..
                            } => {
                                let v = x[[i, *feature]];
                                let go_left = if v.is_nan() {
                                    *default_left
                                } else {
                                    v <= *threshold
                                };
                                k = if go_left { *left } else { *right };
                            }
                        }
                    }
                }
                sigmoid(z)
            })
            .collect()
    }

    #[test]
    fn constant_features_reduce_to_prior() {
        let x = Array2::<f64>::from_elem((100, 3), 1.0);
        let y: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let model = fit(x.view(), &y, &[true; 100], &TrainConfig::default()).unwrap();
        assert_eq!(model.trees.len(), 200);
        for p in model.predict_proba(x.view()).unwrap() {
            assert!((p - 0.30).abs() < 0.01);
        }
    }

    #[test]
    fn threshold_data_separates_within_ten_trees() {
        let x = Array2::from_shape_fn((80, 1), |(i, _)| i as f64);
        let y: Vec<bool> = (0..80).map(|i| i >= 37).collect();
        let cfg = small(TrainConfig {
            num_trees: 10,
            ..Default::default()
        });
        let model = fit(x.view(), &y, &[true; 80], &cfg).unwrap();
        let p = model.predict_proba(x.view()).unwrap();
        assert_eq!(roc_auc(&p, &y).unwrap(), 1.0);
    }

    #[test]
    fn xor_is_learned() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 400;
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let y: Vec<bool> = (0..n)
            .map(|i| (x[[i, 0]] > 0.0) ^ (x[[i, 1]] > 0.0))
            .collect();
        let cfg = small(TrainConfig {
            num_leaves: 4,
            num_trees: 100,
            learning_rate: 0.3,
            ..Default::default()
        });
        let model = fit(x.view(), &y, &vec![true; n], &cfg).unwrap();
        let p = model.predict_proba(x.view()).unwrap();
        let correct = p
            .iter()
            .zip(&y)
            .filter(|(p, y)| (**p >= 0.5) == **y)
            .count();
        assert!(correct as f64 / n as f64 >= 0.95, "{correct}");
    }

    #[test]
    fn binned_prediction_matches_threshold_walk() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 300;
        let mut x = Array2::from_shape_fn((n, 4), |_| rng.gen_range(-2.0..2.0));
        for i in 0..n {
            if rng.gen_bool(0.1) {
                x[[i, 2]] = f64::NAN;
            }
        }
        let y: Vec<bool> = (0..n)
            .map(|i| {
                x[[i, 0]] + if x[[i, 2]].is_nan() { 1.0 } else { x[[i, 2]] }
                    > rng.gen_range(-1.0..1.0)
            })
            .collect();
        let cfg = small(TrainConfig {
            num_trees: 30,
            max_bins: 16,
            ..Default::default()
        });
        let model = fit(x.view(), &y, &vec![true; n], &cfg).unwrap();
        let fast = model.predict_proba(x.view()).unwrap();
        let slow = oracle_predict(&model, &x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
        // unseen values between edges route identically
        let probe = Array2::from_shape_fn((50, 4), |_| rng.gen_range(-3.0..3.0));
        let fast = model.predict_proba(probe.view()).unwrap();
        let slow = oracle_predict(&model, &probe);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_tree_model_predicts_one_half() {
        let model = ForestModel {
            config: TrainConfig::default(),
            base_score: 0.0,
            n_features: 2,
            bin_edges: vec![vec![], vec![]],
            trees: vec![],
            train_loss: vec![],
        };
        let p = model
            .predict_proba(Array2::<f32>::zeros((5, 2)).view())
            .unwrap();
        assert!(p.iter().all(|v| *v == 0.5));
        assert!(model
            .predict_proba(Array2::<f32>::zeros((5, 3)).view())
            .is_err());
    }

    #[test]
    fn positive_tree_raises_every_probability() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let y: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let mut model = fit(
            x.view(),
            &y,
            &[true; 40],
            &small(TrainConfig {
                num_trees: 5,
                ..Default::default()
            }),
        )
        .unwrap();
        let before = model.predict_proba(x.view()).unwrap();
        let mut t = model.trees[0].clone();
        for node in &mut t.nodes {
            if let Node::Leaf { value } = node {
                *value = 0.25;
            }
        }
        model.trees.push(t);
        let after = model.predict_proba(x.view()).unwrap();
        assert!(before.iter().zip(&after).all(|(b, a)| a > b));
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Array2::<f64>::zeros((10, 1));
        let err = fit(x.view(), &[true; 10], &[true; 10], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SingleClass(_)));
        // masked-out negatives do not count
        let y: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let mask: Vec<bool> = (0..10).map(|i| i < 5).collect();
        assert!(fit(x.view(), &y, &mask, &TrainConfig::default()).is_err());
    }

    #[test]
    fn config_is_validated() {
        let x = Array2::<f64>::zeros((4, 1));
        let y = [true, false, true, false];
        for cfg in [
            TrainConfig {
                num_trees: 0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                num_leaves: 1,
                ..Default::default()
            },
            TrainConfig {
                max_bins: 256,
                ..Default::default()
            },
            TrainConfig {
                feature_fraction: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                fit(x.view(), &y, &[true; 4], &cfg),
                Err(Error::Config(_))
            ));
        }
    }

    fn random_dataset(seed: u64) -> (Array2<f64>, Vec<bool>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(60..300);
        let d = rng.gen_range(1..8);
        let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = (0..n)
            .map(|i| {
                let z: f64 = (0..d).map(|j| w[j] * x[[i, j]]).sum();
                rng.gen_bool(sigmoid(2.0 * z))
            })
            .collect();
        (x, y)
    }

    #[test]
    fn loss_never_increases() {
        for seed in 0..5 {
            let (x, y) = random_dataset(seed);
            let n = y.len();
            let model = fit(
                x.view(),
                &y,
                &vec![true; n],
                &small(TrainConfig {
                    num_trees: 40,
                    ..Default::default()
                }),
            )
            .unwrap();
            assert_eq!(model.train_loss.len(), 41);
            for w in model.train_loss.windows(2) {
                assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn masked_rows_have_no_influence() {
        let (x, y) = random_dataset(9);
        let n = y.len();
        let mask: Vec<bool> = (0..n).map(|i| i % 4 != 1).collect();
        let mut poisoned = x.clone();
        for i in (0..n).filter(|i| !mask[*i]) {
            poisoned.row_mut(i).fill(1e9);
        }
        let cfg = small(TrainConfig {
            num_trees: 20,
            ..Default::default()
        });
        let a = fit(x.view(), &y, &mask, &cfg).unwrap();
        let b = fit(poisoned.view(), &y, &mask, &cfg).unwrap();
        let keep: Vec<usize> = (0..n).filter(|i| mask[*i]).collect();
        let xs = x.select(ndarray::Axis(0), &keep);
        let ys: Vec<bool> = keep.iter().map(|&i| y[i]).collect();
        let c = fit(xs.view(), &ys, &vec![true; keep.len()], &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn deterministic_and_json_round_trip() {
        let (x, y) = random_dataset(2);
        let n = y.len();
        let cfg = small(TrainConfig {
            num_trees: 15,
            feature_fraction: 0.5,
            seed: 5,
            ..Default::default()
        });
        let a = fit(x.view(), &y, &vec![true; n], &cfg).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = serial.install(|| fit(x.view(), &y, &vec![true; n], &cfg).unwrap());
        assert_eq!(a, b);
        let back = ForestModel::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(
            back.predict_raw(x.view()).unwrap(),
            a.predict_raw(x.view()).unwrap()
        );
    }

    #[test]
    fn f32_features_match_f64() {
        let (x, y) = random_dataset(6);
        let x32 = x.mapv(|v| v as f32);
        let x64 = x32.mapv(|v| v as f64);
        let n = y.len();
        let cfg = small(TrainConfig {
            num_trees: 10,
            ..Default::default()
        });
        let a = fit(x32.view(), &y, &vec![true; n], &cfg).unwrap();
        let b = fit(x64.view(), &y, &vec![true; n], &cfg).unwrap();
        assert_eq!(a, b);
    }
}
