//! Test-set metrics with percentile bootstrap intervals.

mod bootstrap;
mod metrics;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_ci, quantile, resample_rng, BootstrapConfig, Interval};
pub use metrics::{
    f1_and_mcc, pr_auc, pr_curve, roc_auc, roc_curve, Confusion, CurvePoint, F1Mcc, Metric,
    DEFAULT_THRESHOLD,
};

use crate::cohort::{Antibiotic, Partition, Targets};
use crate::error::{Error, Result};
use crate::gbdt::MultilabelModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub representation: String,
    pub antibiotic: Antibiotic,
    pub metric: Metric,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_test: usize,
    pub n_resamples: usize,
    pub n_undefined: usize,
    pub seed: u64,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub representation: String,
    pub antibiotic: Antibiotic,
    pub roc: Vec<CurvePoint>,
    pub pr: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    pub reports: Vec<MetricReport>,
    pub curves: Vec<Curves>,
    /// Antibiotic (or antibiotic/metric) → reason it was not reported.
    pub skipped: BTreeMap<String, String>,
}

/// Provenance attached to every report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportContext {
    pub representation: String,
    pub config_fingerprint: String,
    pub bootstrap: BootstrapConfig,
}

/// Reports for one antibiotic from test scores and labels.
pub fn evaluate_scores(
    antibiotic: Antibiotic,
    scores: &[f64],
    labels: &[bool],
    ctx: &ReportContext,
    out: &mut Evaluation,
) -> Result<()> {
    let pos = labels.iter().filter(|l| **l).count();
    if pos == 0 || pos == labels.len() {
        out.skipped.insert(
            antibiotic.name().to_owned(),
            format!(
                "single-class test labels ({pos} positive of {})",
                labels.len()
            ),
        );
        return Ok(());
    }
    for metric in Metric::ALL {
        match bootstrap_ci(scores, labels, metric, &ctx.bootstrap) {
            Ok(iv) => out.reports.push(MetricReport {
                representation: ctx.representation.clone(),
                antibiotic,
                metric,
                point: iv.point,
                ci_low: iv.ci_low,
                ci_high: iv.ci_high,
                n_test: labels.len(),
                n_resamples: iv.n_resamples,
                n_undefined: iv.n_undefined,
                seed: ctx.bootstrap.seed,
                config_fingerprint: ctx.config_fingerprint.clone(),
            }),
            Err(Error::UndefinedMetric(reason)) => {
                out.skipped
                    .insert(format!("{}/{}", antibiotic.name(), metric.name()), reason);
            }
            Err(e) => return Err(e),
        }
    }
    out.curves.push(Curves {
        representation: ctx.representation.clone(),
        antibiotic,
        roc: roc_curve(scores, labels)?,
        pr: pr_curve(scores, labels)?,
    });
    Ok(())
}

/// Four reports and ROC/PR curves per antibiotic on the masked test rows.
pub fn evaluate_all<T: Scalar>(
    model: &MultilabelModel,
    features: ArrayView2<'_, T>,
    targets: &Targets,
    ctx: &ReportContext,
) -> Result<Evaluation> {
    let mut out = Evaluation::default();
    for (ab, reason) in &model.untrainable {
        out.skipped
            .insert(ab.name().to_owned(), format!("not trained: {reason}"));
    }
    for (&ab, forest) in &model.models {
        let mask = targets.mask(ab, Partition::Test);
        let dense = targets.dense(ab);
        let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        if rows.is_empty() {
            out.skipped
                .insert(ab.name().to_owned(), "no test rows".into());
            continue;
        }
        let x = features.select(ndarray::Axis(0), &rows);
        let scores = forest.predict_proba(x.view())?;
        let labels: Vec<bool> = rows.iter().map(|&i| dense[i]).collect();
        evaluate_scores(ab, &scores, &labels, ctx, &mut out)?;
    }
    Ok(out)
}

fn cell(r: &MetricReport) -> String {
    format!("{:.4} [{:.4}, {:.4}]", r.point, r.ci_low, r.ci_high)
}

/// Appendix-style table: one row per (antibiotic, metric), one column per
/// representation.
pub fn metrics_table_csv(reports: &[MetricReport]) -> Result<String> {
    let reps: BTreeSet<&str> = reports.iter().map(|r| r.representation.as_str()).collect();
    let mut by_row: BTreeMap<(Antibiotic, Metric), BTreeMap<&str, &MetricReport>> = BTreeMap::new();
    for r in reports {
        by_row
            .entry((r.antibiotic, r.metric))
            .or_default()
            .insert(&r.representation, r);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["antibiotic", "metric"];
    header.extend(reps.iter().copied());
    w.write_record(&header)?;
    for ((ab, metric), cols) in by_row {
        let mut rec = vec![ab.name().to_owned(), metric.name().to_owned()];
        for rep in &reps {
            rec.push(cols.get(rep).map(|r| cell(r)).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn curves_csv(curves: &[Curves]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "representation",
        "antibiotic",
        "curve",
        "x",
        "y",
        "threshold",
    ])?;
    for c in curves {
        for (kind, pts) in [("roc", &c.roc), ("pr", &c.pr)] {
            for p in pts {
                let th = if p.threshold.is_finite() {
                    p.threshold.to_string()
                } else {
                    "inf".into()
                };
                w.write_record([
                    c.representation.as_str(),
                    c.antibiotic.name(),
                    kind,
                    &p.x.to_string(),
                    &p.y.to_string(),
                    &th,
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
