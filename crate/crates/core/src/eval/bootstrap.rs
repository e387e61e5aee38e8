use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::Metric;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_resamples: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Resamples that produced a value.
    pub n_resamples: usize,
    pub n_undefined: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// RNG for resample `index`; each resample owns its own stream so the
/// result does not depend on scheduling.
pub fn resample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Percentile bootstrap over (score, label) pairs.
pub fn bootstrap_ci<T: Scalar>(
    scores: &[T],
    labels: &[bool],
    metric: Metric,
    config: &BootstrapConfig,
) -> Result<Interval> {
    if config.n_resamples == 0 {
        return Err(Error::Config("n_resamples must be positive".into()));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::Config(format!(
            "confidence level {} outside (0, 1)",
            config.level
        )));
    }
    let point = metric.compute(scores, labels)?;
    let n = scores.len();
    let values: Vec<Option<f64>> = (0..config.n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = resample_rng(config.seed, i);
            let mut s = Vec::with_capacity(n);
            let mut l = Vec::with_capacity(n);
            for _ in 0..n {
                let j = rng.gen_range(0..n);
                s.push(scores[j]);
                l.push(labels[j]);
            }
            metric.compute(&s, &l).ok()
        })
        .collect();
    summarize(metric, point, values, config.level)
}

fn summarize(metric: Metric, point: f64, values: Vec<Option<f64>>, level: f64) -> Result<Interval> {
    let total = values.len();
    let mut defined: Vec<f64> = values.into_iter().flatten().collect();
    let n_undefined = total - defined.len();
    if 2 * n_undefined > total {
        return Err(Error::UndefinedMetric(format!(
            "{metric} undefined on {n_undefined} of {total} resamples"
        )));
    }
    defined.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(Interval {
        point,
        ci_low: quantile(&defined, alpha),
        ci_high: quantile(&defined, 1.0 - alpha),
        n_resamples: defined.len(),
        n_undefined,
    })
}
