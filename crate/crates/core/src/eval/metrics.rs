use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "F1")]
    F1,
    #[serde(rename = "MCC")]
    Mcc,
    #[serde(rename = "ROC-AUC")]
    RocAuc,
    #[serde(rename = "PRC-AUC")]
    PrcAuc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::F1, Metric::Mcc, Metric::RocAuc, Metric::PrcAuc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::F1 => "F1",
            Metric::Mcc => "MCC",
            Metric::RocAuc => "ROC-AUC",
            Metric::PrcAuc => "PRC-AUC",
        }
    }

    pub fn compute<T: Scalar>(self, scores: &[T], labels: &[bool]) -> Result<f64> {
        match self {
            Metric::F1 => Ok(f1_and_mcc(scores, labels, DEFAULT_THRESHOLD)?.f1),
            Metric::Mcc => Ok(f1_and_mcc(scores, labels, DEFAULT_THRESHOLD)?.mcc),
            Metric::RocAuc => roc_auc(scores, labels),
            Metric::PrcAuc => pr_auc(scores, labels),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    let s: Vec<f64> = scores.iter().map(|v| v.to_f64_lossy()).collect();
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::UndefinedMetric("scores contain NaN".into()));
    }
    Ok(s)
}

/// Indices sorted by descending score, then runs of equal scores.
fn tie_groups(scores: &[f64], labels: &[bool]) -> Vec<(u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let (mut pos, mut neg) = (0u64, 0u64);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                pos += 1;
            } else {
                neg += 1;
            }
            i += 1;
        }
        groups.push((pos, neg));
    }
    groups
}

fn class_counts(labels: &[bool]) -> (u64, u64) {
    let p = labels.iter().filter(|l| **l).count() as u64;
    (p, labels.len() as u64 - p)
}

/// Area under the ROC curve as the Mann-Whitney statistic, ties counted
/// half.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64> {
    let s = check(scores, labels)?;
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC-AUC needs both classes ({p} positive, {n} negative)"
        )));
    }
    // doubled counts keep the arithmetic exact until the final division
    let mut twice = 0u128;
    let mut neg_below = n;
    for (gp, gn) in tie_groups(&s, labels) {
        neg_below -= gn;
        twice += 2 * gp as u128 * neg_below as u128 + gp as u128 * gn as u128;
    }
    Ok(twice as f64 / (2.0 * p as f64 * n as f64))
}

/// Average precision over descending distinct thresholds.
pub fn pr_auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64> {
    let s = check(scores, labels)?;
    let (p, _) = class_counts(labels);
    if p == 0 {
        return Err(Error::UndefinedMetric(
            "PRC-AUC needs at least one positive".into(),
        ));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut ap = 0.0;
    for (gp, gn) in tie_groups(&s, labels) {
        tp += gp;
        fp += gn;
        if gp > 0 {
            ap += (gp as f64 / p as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    /// Predicted positive when `score >= threshold`.
    pub fn at<T: Scalar>(scores: &[T], labels: &[bool], threshold: f64) -> Result<Self> {
        let s = check(scores, labels)?;
        let mut c = Confusion::default();
        for (v, l) in s.iter().zip(labels) {
            match (*v >= threshold, *l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / d as f64
        }
    }

    pub fn mcc(&self) -> f64 {
        let (tp, fp, fn_, tn) = (
            self.tp as f64,
            self.fp as f64,
            self.fn_ as f64,
            self.tn as f64,
        );
        let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        if factors.iter().any(|f| *f == 0.0) {
            return 0.0;
        }
        let num = tp * tn - fp * fn_;
        num / factors.iter().product::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Mcc {
    pub f1: f64,
    pub mcc: f64,
    pub confusion: Confusion,
}

pub fn f1_and_mcc<T: Scalar>(scores: &[T], labels: &[bool], threshold: f64) -> Result<F1Mcc> {
    let confusion = Confusion::at(scores, labels, threshold)?;
    Ok(F1Mcc {
        f1: confusion.f1(),
        mcc: confusion.mcc(),
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    /// +inf for the point before any score is accepted; null in JSON.
    #[serde(with = "inf_as_null")]
    pub threshold: f64,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// (FPR, TPR) points from (0,0) to (1,1), one per distinct score.
pub fn roc_curve<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<Vec<CurvePoint>> {
    let s = check(scores, labels)?;
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric(
            "ROC curve needs both classes".into(),
        ));
    }
    let mut sorted = s.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    let mut out = vec![CurvePoint {
        x: 0.0,
        y: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    for ((gp, gn), t) in tie_groups(&s, labels).into_iter().zip(sorted) {
        tp += gp;
        fp += gn;
        out.push(CurvePoint {
            x: fp as f64 / n as f64,
            y: tp as f64 / p as f64,
            threshold: t,
        });
    }
    Ok(out)
}

/// (recall, precision) points, one per distinct score, starting at recall 0
/// with precision 1.
pub fn pr_curve<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<Vec<CurvePoint>> {
    let s = check(scores, labels)?;
    let (p, _) = class_counts(labels);
    if p == 0 {
        return Err(Error::UndefinedMetric("PR curve needs a positive".into()));
    }
    let mut sorted = s.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    let mut out = vec![CurvePoint {
        x: 0.0,
        y: 1.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    for ((gp, gn), t) in tie_groups(&s, labels).into_iter().zip(sorted) {
        tp += gp;
        fp += gn;
        out.push(CurvePoint {
            x: tp as f64 / p as f64,
            y: tp as f64 / (tp + fp) as f64,
            threshold: t,
        });
    }
    Ok(out)
}
