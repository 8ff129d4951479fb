//! Sample statistics of observed paths: iterated increments, power
//! variations, empirical characteristic functions and the two-step ratio
//! statistic for the self-similarity index.

use crate::error::{LfsmError, Result};
use crate::kernel::{signed_binom, IncrementSpec};
use crate::sim::{Frequency, SamplePath};

/// Smallest magnitude an increment may have before negative-power statistics
/// are declared degenerate.
pub const NEGATIVE_POWER_GUARD: f64 = 1e-30;

/// k-th order increments of a path at step r: all
/// `sum_j (-1)^j C(k,j) X_{i-rj}` for `i = rk..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSeries {
    pub values: Vec<f64>,
    pub spec: IncrementSpec,
    pub frequency: Frequency,
    /// Number of observed increments of the underlying path.
    pub n: usize,
}

/// Compute the k-th order, step-r increments of an observed path.
pub fn increments(path: &SamplePath, spec: IncrementSpec) -> Result<IncrementSeries> {
    let n = path.n();
    let span = (spec.r as usize) * (spec.k as usize);
    if n < span {
        return Err(LfsmError::Shape(format!(
            "order-{} step-{} increments need at least {} observations, path has {}",
            spec.k, spec.r, span, n
        )));
    }
    let coeffs = signed_binom(spec.k);
    let r = spec.r as usize;
    let mut values = Vec::with_capacity(n - span + 1);
    for i in span..=n {
        let mut acc = 0.0;
        for (j, &c) in coeffs.iter().enumerate() {
            acc += c * path.values[i - r * j];
        }
        values.push(acc);
    }
    Ok(IncrementSeries { values, spec, frequency: path.frequency, n })
}

/// Scale factor that brings increments of the given sampling scheme onto the
/// unit-step law: high-frequency increments must be blown back up by `n^H`.
fn frequency_scale(series: &IncrementSeries, hurst: Option<f64>) -> Result<f64> {
    match (series.frequency, hurst) {
        (Frequency::Low, None) => Ok(1.0),
        (Frequency::Low, Some(_)) => Err(LfsmError::Domain(
            "low-frequency statistics take no self-similarity plug-in".into(),
        )),
        (Frequency::High, Some(h)) => Ok((series.n as f64).powf(h)),
        (Frequency::High, None) => Err(LfsmError::Domain(
            "high-frequency statistics need a self-similarity plug-in".into(),
        )),
    }
}

/// Empirical absolute p-th moment of the (scheme-normalized) increments.
///
/// Negative orders fail with a degeneracy error when any increment sits at
/// zero within [`NEGATIVE_POWER_GUARD`].
pub fn power_variation(series: &IncrementSeries, p: f64, hurst: Option<f64>) -> Result<f64> {
    if p == 0.0 || !p.is_finite() {
        return Err(LfsmError::Domain(format!("power variation order must be nonzero, got {p}")));
    }
    let scale = frequency_scale(series, hurst)?;
    if p < 0.0 {
        let min = series.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if min * scale < NEGATIVE_POWER_GUARD {
            return Err(LfsmError::Degenerate(format!(
                "an increment of magnitude {min:.3e} defeats the negative power {p}"
            )));
        }
    }
    let sum: f64 = series.values.iter().map(|v| (v.abs() * scale).powf(p)).sum();
    Ok(sum / series.values.len() as f64)
}

/// Empirical characteristic function of unit-step k-th order increments of a
/// low-frequency path at argument `t`.
pub fn ecf_low(path: &SamplePath, t: f64, k: u32) -> Result<f64> {
    if path.frequency != Frequency::Low {
        return Err(LfsmError::Domain("ecf_low needs a low-frequency path".into()));
    }
    if !(t > 0.0) {
        return Err(LfsmError::Domain(format!("characteristic argument must be positive, got {t}")));
    }
    let series = increments(path, IncrementSpec::new(k, 1)?)?;
    let sum: f64 = series.values.iter().map(|v| (t * v).cos()).sum();
    Ok(sum / series.values.len() as f64)
}

/// Empirical characteristic function of `n^H`-rescaled k-th order increments
/// of a high-frequency path at argument `t`.
pub fn ecf_high(path: &SamplePath, t: f64, hurst: f64, k: u32) -> Result<f64> {
    if path.frequency != Frequency::High {
        return Err(LfsmError::Domain("ecf_high needs a high-frequency path".into()));
    }
    if !(t > 0.0) {
        return Err(LfsmError::Domain(format!("characteristic argument must be positive, got {t}")));
    }
    let series = increments(path, IncrementSpec::new(k, 1)?)?;
    let scale = (series.n as f64).powf(hurst);
    let sum: f64 = series.values.iter().map(|v| (t * scale * v).cos()).sum();
    Ok(sum / series.values.len() as f64)
}

/// Ratio estimate of the self-similarity index from step-doubled power sums:
/// `(1/p) log2( sum |step-2 increments|^p / sum |step-1 increments|^p )`.
///
/// Scale factors common to the path cancel, so the same formula serves both
/// sampling schemes and is immune to scale misspecification.
pub fn ratio_statistic(path: &SamplePath, p: f64, k: u32) -> Result<f64> {
    if p == 0.0 || !p.is_finite() {
        return Err(LfsmError::Domain(format!("ratio statistic order must be nonzero, got {p}")));
    }
    let wide = increments(path, IncrementSpec::new(k, 2)?)?;
    let narrow = increments(path, IncrementSpec::new(k, 1)?)?;
    if p < 0.0 {
        for series in [&wide, &narrow] {
            let min = series.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            if min < NEGATIVE_POWER_GUARD {
                return Err(LfsmError::Degenerate(format!(
                    "an increment of magnitude {min:.3e} defeats the negative power {p}"
                )));
            }
        }
    }
    let top: f64 = wide.values.iter().map(|v| v.abs().powf(p)).sum();
    let bottom: f64 = narrow.values.iter().map(|v| v.abs().powf(p)).sum();
    if !(top > 0.0) || !(bottom > 0.0) {
        return Err(LfsmError::Degenerate("a power sum vanished in the ratio statistic".into()));
    }
    Ok((top / bottom).log2() / p)
}
