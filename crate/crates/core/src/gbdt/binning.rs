/// Bin index reserved for missing (NaN) values.
pub const MISSING_BIN: u8 = 255;

/// Upper-inclusive bin edges for one feature: value `x` falls in the first
/// bin `b` with `x <= edges[b]`, or in bin `edges.len()` past the last edge.
pub fn fit_edges(values: &[f64], max_bins: usize) -> Vec<f64> {
    assert!((2..=255).contains(&max_bins));
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match distinct.last_mut() {
            Some((d, c)) if *d == v => *c += 1,
            _ => distinct.push((v, 1)),
        }
    }
    let cut_after: Vec<usize> = if distinct.len() <= max_bins {
        (0..distinct.len() - 1).collect()
    } else {
        let total: usize = distinct.iter().map(|d| d.1).sum();
        let mut cuts = Vec::with_capacity(max_bins - 1);
        let mut cum = 0usize;
        let mut k = 1usize;
        for (i, (_, c)) in distinct.iter().enumerate().take(distinct.len() - 1) {
            cum += c;
            if k < max_bins && cum * max_bins >= k * total {
                cuts.push(i);
                while k < max_bins && cum * max_bins >= k * total {
                    k += 1;
                }
            }
        }
        cuts
    };
    cut_after
        .into_iter()
        .map(|i| {
            let (a, b) = (distinct[i].0, distinct[i + 1].0);
            let mid = a + (b - a) / 2.0;
            // adjacent floats can round the midpoint up onto `b`
            if mid < b && mid.is_finite() {
                mid
            } else {
                a
            }
        })
        .collect()
}

pub fn bin_value(edges: &[f64], x: f64) -> u8 {
    if x.is_nan() {
        MISSING_BIN
    } else {
        edges.partition_point(|e| *e < x) as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn few_distinct_values_get_one_bin_each() {
        let e = fit_edges(&[3.0, 1.0, 2.0, 2.0, f64::NAN], 255);
        assert_eq!(e, vec![1.5, 2.5]);
        assert_eq!(bin_value(&e, 1.0), 0);
        assert_eq!(bin_value(&e, 2.0), 1);
        assert_eq!(bin_value(&e, 3.0), 2);
        assert_eq!(bin_value(&e, 2.5), 1);
        assert_eq!(bin_value(&e, f64::NAN), MISSING_BIN);
    }

    #[test]
    fn constant_or_empty_column_has_no_edges() {
        assert!(fit_edges(&[4.0; 10], 16).is_empty());
        assert!(fit_edges(&[f64::NAN; 3], 16).is_empty());
    }

    #[test]
    fn many_values_respect_max_bins() {
        let v: Vec<f64> = (0..10_000).map(|i| (i as f64).sqrt()).collect();
        let e = fit_edges(&v, 32);
        assert!(e.len() <= 31 && e.len() >= 28, "{}", e.len());
        let mut counts = vec![0usize; e.len() + 1];
        for x in &v {
            counts[bin_value(&e, *x) as usize] += 1;
        }
        let max = *counts.iter().max().unwrap();
        assert!(max < 10_000 / 32 * 2);
    }

    #[test]
    fn adjacent_floats_stay_separated() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let e = fit_edges(&[a, b], 255);
        assert_ne!(bin_value(&e, a), bin_value(&e, b));
    }

    proptest! {
        #[test]
        fn binning_is_monotone(mut v in proptest::collection::vec(-1e6f64..1e6, 1..300), bins in 2usize..=255) {
            let e = fit_edges(&v, bins);
            prop_assert!(e.len() < bins);
            prop_assert!(e.windows(2).all(|w| w[0] < w[1]));
            v.sort_by(f64::total_cmp);
            let b: Vec<u8> = v.iter().map(|x| bin_value(&e, *x)).collect();
            prop_assert!(b.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
