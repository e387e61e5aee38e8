use std::collections::BTreeMap;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, ForestModel, TrainConfig};
use crate::cohort::{Antibiotic, Partition, Targets};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One independent binary forest per antibiotic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilabelModel {
    pub models: BTreeMap<Antibiotic, ForestModel>,
    /// Antibiotics with labels but no usable model, with the reason.
    pub untrainable: BTreeMap<Antibiotic, String>,
    /// Training rows used per antibiotic.
    pub train_rows: BTreeMap<Antibiotic, usize>,
}

impl MultilabelModel {
    pub fn predict_proba<T: Scalar>(
        &self,
        antibiotic: Antibiotic,
        features: ArrayView2<'_, T>,
    ) -> Option<Result<Vec<f64>>> {
        self.models
            .get(&antibiotic)
            .map(|m| m.predict_proba(features))
    }
}

/// Trains each antibiotic on the train-partition rows carrying its label.
pub fn fit_multilabel<T: Scalar>(
    features: ArrayView2<'_, T>,
    targets: &Targets,
    config: &TrainConfig,
) -> Result<MultilabelModel> {
    config.validate()?;
    if features.nrows() != targets.partition.len() {
        return Err(Error::Dimension {
            expected: targets.partition.len(),
            actual: features.nrows(),
        });
    }
    let antibiotics: Vec<Antibiotic> = targets.labels.keys().copied().collect();
    let fitted: Vec<(Antibiotic, usize, Result<ForestModel>)> = antibiotics
        .par_iter()
        .map(|&ab| {
            let mask = targets.mask(ab, Partition::Train);
            let rows = mask.iter().filter(|m| **m).count();
            let result = if rows == 0 {
                Err(Error::SingleClass("no training rows".into()))
            } else {
                fit(features, &targets.dense(ab), &mask, config)
            };
            (ab, rows, result)
        })
        .collect();
    let mut out = MultilabelModel {
        models: BTreeMap::new(),
        untrainable: BTreeMap::new(),
        train_rows: BTreeMap::new(),
    };
    for (ab, rows, result) in fitted {
        out.train_rows.insert(ab, rows);
        match result {
            Ok(m) => {
                out.models.insert(ab, m);
            }
            Err(Error::SingleClass(reason)) => {
                tracing::warn!(antibiotic = %ab, %reason, "skipping antibiotic");
                out.untrainable.insert(ab, reason);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn targets(cols: Vec<(Antibiotic, Vec<Option<bool>>)>, partition: Vec<Partition>) -> Targets {
        Targets {
            labels: cols.into_iter().collect(),
            partition,
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            num_trees: 5,
            min_samples_leaf: 1,
            ..Default::default()
        }
    }

    #[test]
    fn one_model_per_trainable_antibiotic() {
        let n = 40;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * (j + 1)) as f64);
        let part = (0..n)
            .map(|i| {
                if i < 30 {
                    Partition::Train
                } else {
                    Partition::Test
                }
            })
            .collect();
        let t = targets(
            vec![(
                Antibiotic::Vancomycin,
                (0..n).map(|i| Some(i % 2 == 0)).collect(),
            )],
            part,
        );
        let m = fit_multilabel(x.view(), &t, &cfg()).unwrap();
        assert_eq!(m.models.len(), 1);
        assert_eq!(m.train_rows[&Antibiotic::Vancomycin], 30);
    }

    #[test]
    fn row_counts_follow_label_masks_and_single_class_is_recorded() {
        let n = 50;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let part: Vec<Partition> = (0..n)
            .map(|i| {
                if i % 5 == 0 {
                    Partition::Test
                } else {
                    Partition::Train
                }
            })
            .collect();
        let t = targets(
            vec![
                (
                    Antibiotic::Oxacillin,
                    (0..n).map(|i| (i % 3 != 0).then_some(i % 2 == 0)).collect(),
                ),
                (Antibiotic::Rifampin, (0..n).map(|_| Some(true)).collect()),
            ],
            part.clone(),
        );
        let m = fit_multilabel(x.view(), &t, &cfg()).unwrap();
        let expected = (0..n)
            .filter(|i| i % 3 != 0 && part[*i] == Partition::Train)
            .count();
        assert_eq!(m.train_rows[&Antibiotic::Oxacillin], expected);
        assert!(m.models.contains_key(&Antibiotic::Oxacillin));
        assert!(m.untrainable.contains_key(&Antibiotic::Rifampin));
    }

    #[test]
    fn identical_targets_give_identical_predictions() {
        let n = 60;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64);
        let col: Vec<Option<bool>> = (0..n).map(|i| Some((i * 7) % 17 > 8)).collect();
        let t = targets(
            vec![
                (Antibiotic::Tetracycline, col.clone()),
                (Antibiotic::Levofloxacin, col),
            ],
            vec![Partition::Train; n],
        );
        let m = fit_multilabel(x.view(), &t, &cfg()).unwrap();
        let a = m
            .predict_proba(Antibiotic::Tetracycline, x.view())
            .unwrap()
            .unwrap();
        let b = m
            .predict_proba(Antibiotic::Levofloxacin, x.view())
            .unwrap()
            .unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<MultilabelModel>(&json).unwrap(), m);
    }
}
