//! Statistical kernels shared by the Monte-Carlo layers.
//!
//! All reductions here are deterministic: sums are computed by strict
//! binary-tree (pairwise) summation in index order, so results do not depend
//! on thread counts or chunk sizes, and byte-identical re-runs stay
//! byte-identical.

use crate::error::{Error, Result};

/// Pairwise (binary-tree) summation: split at the midpoint down to single
/// elements. Deterministic for a given slice and more accurate than a
/// sequential fold.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (lo, hi) = xs.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Sample mean and its standard error.
pub fn mean_and_stderr(xs: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::EmptyInput("need at least two samples"));
    }
    let mean = pairwise_sum(xs) / n as f64;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n as f64 - 1.0);
    Ok((mean, (var / n as f64).sqrt()))
}

/// A sample point with nonnegative importance weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedSample {
    pub value: f64,
    pub weight: f64,
}

fn validate_weights(samples: &[WeightedSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("weighted samples"));
    }
    let mut total = 0.0;
    for s in samples {
        if !s.value.is_finite() || !s.weight.is_finite() {
            return Err(Error::NonFinite("weighted sample"));
        }
        if s.weight < 0.0 {
            return Err(Error::BadWeights { total: s.weight });
        }
        total += s.weight;
    }
    if total <= 0.0 {
        return Err(Error::BadWeights { total });
    }
    Ok(total)
}

/// First `k` weighted raw moments `Σ w v^j / Σ w`, `j = 1..=k`.
pub fn weighted_moments(samples: &[WeightedSample], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("moment order must be positive".into()));
    }
    validate_weights(samples)?;
    let total = pairwise_sum(&samples.iter().map(|s| s.weight).collect::<Vec<_>>());
    let mut out = Vec::with_capacity(k);
    for j in 1..=k {
        let terms: Vec<f64> = samples
            .iter()
            .map(|s| s.weight * s.value.powi(j as i32))
            .collect();
        out.push(pairwise_sum(&terms) / total);
    }
    Ok(out)
}

/// Weighted mean with the linearized (ratio-estimator) standard error
/// `sqrt(Σ w² (v - m)²) / Σ w`.
pub fn weighted_mean_and_stderr(samples: &[WeightedSample]) -> Result<(f64, f64)> {
    validate_weights(samples)?;
    let total = pairwise_sum(&samples.iter().map(|s| s.weight).collect::<Vec<_>>());
    let mean = pairwise_sum(&samples.iter().map(|s| s.weight * s.value).collect::<Vec<_>>()) / total;
    let dev: Vec<f64> = samples
        .iter()
        .map(|s| {
            let d = s.weight * (s.value - mean);
            d * d
        })
        .collect();
    Ok((mean, pairwise_sum(&dev).sqrt() / total))
}

/// Kolmogorov-Smirnov distance between an unweighted sample and a weighted
/// one: the sup-difference of the two right-continuous empirical CDFs, with
/// ties pooled (the sup is evaluated after all mass at a value is counted).
pub fn ks_distance(a: &[f64], b: &[WeightedSample]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyInput("first sample"));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("first sample"));
    }
    let b_total = validate_weights(b)?;

    let mut a_sorted = a.to_vec();
    a_sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut b_sorted = b.to_vec();
    b_sorted.sort_by(|x, y| x.value.partial_cmp(&y.value).unwrap());

    let a_step = 1.0 / a_sorted.len() as f64;
    let mut ia = 0;
    let mut ib = 0;
    let mut fa = 0.0;
    let mut fb = 0.0;
    let mut ks: f64 = 0.0;
    while ia < a_sorted.len() || ib < b_sorted.len() {
        let next_a = a_sorted.get(ia).copied().unwrap_or(f64::INFINITY);
        let next_b = b_sorted.get(ib).map(|s| s.value).unwrap_or(f64::INFINITY);
        let v = next_a.min(next_b);
        while ia < a_sorted.len() && a_sorted[ia] == v {
            fa += a_step;
            ia += 1;
        }
        while ib < b_sorted.len() && b_sorted[ib].value == v {
            fb += b_sorted[ib].weight / b_total;
            ib += 1;
        }
        ks = ks.max((fa - fb).abs());
    }
    // The running cumulative sums carry rounding drift of a few ulps, which
    // can push the supremum just past the exact range of the statistic.
    Ok(ks.clamp(0.0, 1.0))
}

/// Asymptotic two-sample Kolmogorov-Smirnov critical value at significance
/// `alpha`: `sqrt(-ln(alpha/2)/2) * sqrt((n+m)/(n m))`.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
