//! Estimators of `(sigma, alpha, H)` from one observed path.
//!
//! Four routes are provided, split by sampling scheme and by whether the
//! stability index is assumed above the continuity threshold for the chosen
//! increment order:
//!
//! * [`estimate_continuous_low`] / [`estimate_continuous_high`] work at a
//!   fixed increment order (default 2) with a positive moment order and read
//!   `alpha` off the log-log slope of the empirical characteristic function.
//! * [`estimate_general_low`] / [`estimate_general_high`] first run a crude
//!   order-1 stage to pick an increment order high enough for the unknown
//!   `alpha`, then redo the estimate at that order; the high-frequency
//!   variant works entirely through negative-order moment ratios.
//!
//! All four report raw values plus clamp flags. A clamped estimate is still
//! returned, but flagged so that aggregation can treat it as unreliable.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{LfsmError, Result};
use crate::kernel::{h_norm_alpha_raw, IncrementSpec};
use crate::quad::QuadratureConfig;
use crate::stable::a_p;
use crate::stats::{ecf_high, ecf_low, increments, power_variation, ratio_statistic};
use crate::sim::{Frequency, SamplePath};

/// Empirical characteristic function values are kept inside
/// `[PHI_CLAMP_LO, 1 - PHI_CLAMP_LO]` before logarithms are taken.
pub const PHI_CLAMP_LO: f64 = 1e-8;
/// Stability estimates are kept strictly below 2 by this margin.
pub const ALPHA_CEIL_MARGIN: f64 = 1e-6;
/// Plug-in self-similarity values are pushed this far inside `(0, k)` before
/// kernel norms are evaluated.
pub const HURST_NORM_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Moment order: positive for the continuous-case estimators, negative
    /// for the general ones.
    pub p: f64,
    /// Second (negative) moment order of the general high-frequency route.
    pub p_prime: f64,
    /// Increment order for the continuous-case estimators (default 2). The
    /// general estimators choose their own order and ignore this.
    pub k: Option<u32>,
    /// Characteristic function arguments of the primary slope.
    pub t1: f64,
    pub t2: f64,
    /// Optional second argument pair enabling the regime decision rule of
    /// the characteristic-function estimators.
    pub t3: Option<f64>,
    pub t4: Option<f64>,
    /// Optional second moment-order pair enabling the regime decision rule
    /// of the general high-frequency estimator.
    pub p3: Option<f64>,
    pub p4: Option<f64>,
    /// Threshold shift of the decision rule.
    pub epsilon: f64,
    /// Smallest admissible stability estimate.
    pub alpha_floor: f64,
    /// Largest data-driven increment order.
    pub k_cap: u32,
    pub quad: QuadratureConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            p: 0.4,
            p_prime: -0.2,
            k: None,
            t1: 1.0,
            t2: 2.0,
            t3: None,
            t4: None,
            p3: None,
            p4: None,
            epsilon: 0.1,
            alpha_floor: 0.05,
            k_cap: 25,
            quad: QuadratureConfig::default(),
        }
    }
}

impl EstimatorConfig {
    fn validate_common(&self) -> Result<()> {
        if !(self.t1 > 0.0 && self.t2 > self.t1) {
            return Err(LfsmError::Domain(format!(
                "characteristic arguments need 0 < t1 < t2, got t1={}, t2={}",
                self.t1, self.t2
            )));
        }
        match (self.t3, self.t4) {
            (None, None) => {}
            (Some(t3), Some(t4)) => {
                if !(t3 > 0.0 && t4 > t3) {
                    return Err(LfsmError::Domain(format!(
                        "decision arguments need 0 < t3 < t4, got t3={t3}, t4={t4}"
                    )));
                }
                if t3 == self.t1 && t4 == self.t2 {
                    return Err(LfsmError::Domain(
                        "decision argument pair must differ from the primary pair".into(),
                    ));
                }
            }
            _ => {
                return Err(LfsmError::Domain(
                    "decision arguments t3 and t4 come as a pair".into(),
                ))
            }
        }
        if let (Some(p3), Some(p4)) = (self.p3, self.p4) {
            if !(p3 > -0.5 && p3 < 0.0 && p4 > -0.5 && p4 < 0.0 && p3 != p4) {
                return Err(LfsmError::Domain(format!(
                    "decision moment orders must be distinct values in (-1/2, 0), got {p3}, {p4}"
                )));
            }
        } else if self.p3.is_some() != self.p4.is_some() {
            return Err(LfsmError::Domain("decision moment orders p3 and p4 come as a pair".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(LfsmError::Domain(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.alpha_floor > 0.0 && self.alpha_floor < 2.0) {
            return Err(LfsmError::Domain(format!(
                "alpha floor must lie in (0, 2), got {}",
                self.alpha_floor
            )));
        }
        if self.k_cap < 2 {
            return Err(LfsmError::Domain(format!("order cap must be at least 2, got {}", self.k_cap)));
        }
        Ok(())
    }
}

/// Which guard rails fired while producing an estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampFlags {
    /// An empirical characteristic function value left `(0, 1)`.
    pub ecf: bool,
    /// The stability estimate left `[alpha_floor, 2)`.
    pub alpha: bool,
    /// The self-similarity plug-in left `(0, k)` and was pulled back for the
    /// kernel-norm evaluation only; the reported value stays raw.
    pub hurst_norm: bool,
    /// A moment-ratio target left the reachable range of the ratio curve.
    pub target: bool,
}

impl ClampFlags {
    pub fn any(&self) -> bool {
        self.ecf || self.alpha || self.hurst_norm || self.target
    }
}

/// Verdict of the regime decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Normal,
    Stable,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub sigma_hat: f64,
    pub alpha_hat: f64,
    pub hurst_hat: f64,
    /// Increment order the final estimate used.
    pub k_used: u32,
    /// First-stage stability estimate of the two-stage routes.
    pub alpha_prelim: Option<f64>,
    pub clamp: ClampFlags,
    /// Log-distance statistic of the decision rule, when one was requested.
    pub decision_value: Option<f64>,
    pub regime: Regime,
}

fn clamp_phi(phi: f64, flags: &mut ClampFlags) -> f64 {
    if phi < PHI_CLAMP_LO {
        flags.ecf = true;
        PHI_CLAMP_LO
    } else if phi > 1.0 - PHI_CLAMP_LO {
        flags.ecf = true;
        1.0 - PHI_CLAMP_LO
    } else {
        phi
    }
}

/// Slope of `ln(-ln phi)` against `ln t`: the stability index, free of both
/// the scale and the self-similarity index.
pub fn alpha_from_ecf(phi1: f64, phi2: f64, t1: f64, t2: f64) -> Result<f64> {
    if !(phi1 > 0.0 && phi1 < 1.0 && phi2 > 0.0 && phi2 < 1.0) {
        return Err(LfsmError::Domain(format!(
            "characteristic values must lie in (0, 1), got {phi1}, {phi2}"
        )));
    }
    if !(t1 > 0.0 && t2 > 0.0 && t1 != t2) {
        return Err(LfsmError::Domain(format!("need distinct positive arguments, got {t1}, {t2}")));
    }
    Ok(((-phi2.ln()).ln() - (-phi1.ln()).ln()) / (t2.ln() - t1.ln()))
}

fn clamp_alpha(raw: f64, floor: f64, flags: &mut ClampFlags) -> f64 {
    let hi = 2.0 - ALPHA_CEIL_MARGIN;
    if !(raw > floor) {
        flags.alpha = true;
        floor
    } else if raw > hi {
        flags.alpha = true;
        hi
    } else {
        raw
    }
}

fn hurst_for_norm(raw: f64, k: u32, flags: &mut ClampFlags) -> f64 {
    let lo = HURST_NORM_MARGIN;
    let hi = k as f64 - HURST_NORM_MARGIN;
    if !(raw > lo) {
        flags.hurst_norm = true;
        lo
    } else if raw > hi {
        flags.hurst_norm = true;
        hi
    } else {
        raw
    }
}

/// Map two clamped characteristic values to `(sigma, alpha)` at order k,
/// using a raw self-similarity plug-in for the kernel norm.
fn g_map(
    phi1: f64,
    phi2: f64,
    k: u32,
    hurst_raw: f64,
    cfg: &EstimatorConfig,
    flags: &mut ClampFlags,
) -> Result<(f64, f64)> {
    let alpha_raw = alpha_from_ecf(phi1, phi2, cfg.t1, cfg.t2)?;
    let alpha = clamp_alpha(alpha_raw, cfg.alpha_floor, flags);
    let h_plug = hurst_for_norm(hurst_raw, k, flags);
    let norm = h_norm_alpha_raw(alpha, h_plug, k, 1, &cfg.quad)?;
    let sigma = (-phi1.ln()).powf(1.0 / alpha) / (cfg.t1 * norm);
    Ok((sigma, alpha))
}

/// Raw ratio estimate of the self-similarity index at order k.
pub fn estimate_h(path: &SamplePath, p: f64, k: u32) -> Result<f64> {
    ratio_statistic(path, p, k)
}

/// Theoretical moment-ratio curve `m_{-p'}^p / m_{-p}^{p'}` as a function of
/// `alpha`, for positive orders `p, p'`. Scale-free, order-free, increasing.
pub fn phi_pp(alpha: f64, p: f64, p_prime: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(LfsmError::Domain(format!("alpha must lie in (0, 2), got {alpha}")));
    }
    if !(p > 0.0 && p < 0.5 && p_prime > 0.0 && p_prime < 0.5 && p != p_prime) {
        return Err(LfsmError::Domain(format!(
            "moment orders must be distinct values in (0, 1/2), got {p}, {p_prime}"
        )));
    }
    let v = (2.0 / alpha).powf(p - p_prime) * a_p(-p)?.powf(p_prime) * gamma(p_prime / alpha).powf(p)
        / (a_p(-p_prime)?.powf(p) * gamma(p / alpha).powf(p_prime));
    Ok(v)
}

/// Invert the moment-ratio curve by bisection over
/// `[alpha_floor, 2 - margin]`. Targets outside the reachable range clamp to
/// the nearer end and raise the target flag.
pub fn invert_phi_pp(
    target: f64,
    p: f64,
    p_prime: f64,
    alpha_floor: f64,
    flags: &mut ClampFlags,
) -> Result<f64> {
    let (mut lo, mut hi) = (alpha_floor, 2.0 - ALPHA_CEIL_MARGIN);
    if !(lo > 0.0 && lo < hi) {
        return Err(LfsmError::Domain(format!("alpha floor {alpha_floor} leaves no bracket")));
    }
    let f_lo = phi_pp(lo, p, p_prime)?;
    let f_hi = phi_pp(hi, p, p_prime)?;
    if target <= f_lo {
        flags.target = true;
        return Ok(lo);
    }
    if target >= f_hi {
        flags.target = true;
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi_pp(mid, p, p_prime)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Regime decision from two estimates of the stability index: their distance
/// shrinks polynomially when the driving noise is genuinely heavy-tailed and
/// collapses faster when a Gaussian limit is in charge.
pub fn decision_rule(alpha_a: f64, alpha_b: f64, n: usize, epsilon: f64) -> (f64, Regime) {
    let diff = (alpha_a - alpha_b).abs();
    let ln_n = (n as f64).ln();
    let d = if diff == 0.0 { f64::INFINITY } else { -diff.ln() / ln_n };
    let threshold = 0.5 - ln_n.powf(-1.0 + epsilon);
    if d > threshold {
        (d, Regime::Normal)
    } else {
        (d, Regime::Stable)
    }
}

fn require_frequency(path: &SamplePath, want: Frequency, who: &str) -> Result<()> {
    if path.frequency != want {
        return Err(LfsmError::Domain(format!(
            "{who} expects a {want}-frequency path, got {}",
            path.frequency
        )));
    }
    Ok(())
}

fn continuous_order(cfg: &EstimatorConfig) -> Result<u32> {
    let k = cfg.k.unwrap_or(2);
    if k < 2 {
        return Err(LfsmError::Domain(format!(
            "continuous-case estimators need increment order at least 2, got {k}"
        )));
    }
    Ok(k)
}

fn positive_order(cfg: &EstimatorConfig) -> Result<f64> {
    if !(cfg.p > 0.0 && cfg.p < 0.5) {
        return Err(LfsmError::Domain(format!(
            "continuous-case estimators need a moment order in (0, 1/2), got {}",
            cfg.p
        )));
    }
    Ok(cfg.p)
}

fn negative_order(p: f64, who: &str) -> Result<f64> {
    if !(p > -0.5 && p < 0.0) {
        return Err(LfsmError::Domain(format!(
            "{who} needs a moment order in (-1/2, 0), got {p}"
        )));
    }
    Ok(p)
}

/// Continuous-case estimator for unit-spaced observations.
pub fn estimate_continuous_low(path: &SamplePath, cfg: &EstimatorConfig) -> Result<EstimationResult> {
    cfg.validate_common()?;
    require_frequency(path, Frequency::Low, "the continuous-case low-frequency estimator")?;
    let p = positive_order(cfg)?;
    let k = continuous_order(cfg)?;
    let mut flags = ClampFlags::default();

    let hurst = ratio_statistic(path, p, k)?;
    let phi1 = clamp_phi(ecf_low(path, cfg.t1, k)?, &mut flags);
    let phi2 = clamp_phi(ecf_low(path, cfg.t2, k)?, &mut flags);
    let (sigma, alpha) = g_map(phi1, phi2, k, hurst, cfg, &mut flags)?;

    let (decision_value, regime) = match (cfg.t3, cfg.t4) {
        (Some(t3), Some(t4)) => {
            let mut scratch = ClampFlags::default();
            let q1 = clamp_phi(ecf_low(path, t3, k)?, &mut scratch);
            let q2 = clamp_phi(ecf_low(path, t4, k)?, &mut scratch);
            let alpha_a = alpha_from_ecf(phi1, phi2, cfg.t1, cfg.t2)?;
            let alpha_b = alpha_from_ecf(q1, q2, t3, t4)?;
            let (d, regime) = decision_rule(alpha_a, alpha_b, path.n(), cfg.epsilon);
            (Some(d), regime)
        }
        _ => (None, Regime::Unknown),
    };

    Ok(EstimationResult {
        sigma_hat: sigma,
        alpha_hat: alpha,
        hurst_hat: hurst,
        k_used: k,
        alpha_prelim: None,
        clamp: flags,
        decision_value,
        regime,
    })
}

/// Continuous-case estimator for in-fill observations, with the
/// self-similarity index plugged into the increment rescaling.
pub fn estimate_continuous_high(path: &SamplePath, cfg: &EstimatorConfig) -> Result<EstimationResult> {
    cfg.validate_common()?;
    require_frequency(path, Frequency::High, "the continuous-case high-frequency estimator")?;
    let p = positive_order(cfg)?;
    let k = continuous_order(cfg)?;
    let mut flags = ClampFlags::default();

    let hurst = ratio_statistic(path, p, k)?;
    let phi1 = clamp_phi(ecf_high(path, cfg.t1, hurst, k)?, &mut flags);
    let phi2 = clamp_phi(ecf_high(path, cfg.t2, hurst, k)?, &mut flags);
    let (sigma, alpha) = g_map(phi1, phi2, k, hurst, cfg, &mut flags)?;

    let (decision_value, regime) = match (cfg.t3, cfg.t4) {
        (Some(t3), Some(t4)) => {
            let mut scratch = ClampFlags::default();
            let q1 = clamp_phi(ecf_high(path, t3, hurst, k)?, &mut scratch);
            let q2 = clamp_phi(ecf_high(path, t4, hurst, k)?, &mut scratch);
            let alpha_a = alpha_from_ecf(phi1, phi2, cfg.t1, cfg.t2)?;
            let alpha_b = alpha_from_ecf(q1, q2, t3, t4)?;
            let (d, regime) = decision_rule(alpha_a, alpha_b, path.n(), cfg.epsilon);
            (Some(d), regime)
        }
        _ => (None, Regime::Unknown),
    };

    Ok(EstimationResult {
        sigma_hat: sigma,
        alpha_hat: alpha,
        hurst_hat: hurst,
        k_used: k,
        alpha_prelim: None,
        clamp: flags,
        decision_value,
        regime,
    })
}

/// Data-driven increment order: high enough for the central limit regime of
/// the first-stage stability estimate, capped for path-length sanity.
fn select_k(alpha_prelim: f64, cap: u32) -> u32 {
    let k = 2 + (1.0 / alpha_prelim).floor() as u32;
    k.min(cap)
}

/// General low-frequency estimator: an order-1 characteristic-function slope
/// picks the working increment order, the full map then runs at that order.
pub fn estimate_general_low(path: &SamplePath, cfg: &EstimatorConfig) -> Result<EstimationResult> {
    cfg.validate_common()?;
    require_frequency(path, Frequency::Low, "the general low-frequency estimator")?;
    let p = negative_order(cfg.p, "the general low-frequency estimator")?;
    let mut flags = ClampFlags::default();

    // Stage 1: order-1 slope. No kernel norm is evaluated here, so the large
    // truncation bias of first-order increments never enters: it is a pure
    // scale error and the slope is scale-free.
    let phi1 = clamp_phi(ecf_low(path, cfg.t1, 1)?, &mut flags);
    let phi2 = clamp_phi(ecf_low(path, cfg.t2, 1)?, &mut flags);
    let alpha_prelim_raw = alpha_from_ecf(phi1, phi2, cfg.t1, cfg.t2)?;
    let alpha_prelim = clamp_alpha(alpha_prelim_raw, cfg.alpha_floor, &mut flags);
    let k = select_k(alpha_prelim, cfg.k_cap);

    // Stage 2: the full map at the selected order.
    let hurst = ratio_statistic(path, p, k)?;
    let phi1 = clamp_phi(ecf_low(path, cfg.t1, k)?, &mut flags);
    let phi2 = clamp_phi(ecf_low(path, cfg.t2, k)?, &mut flags);
    let (sigma, alpha) = g_map(phi1, phi2, k, hurst, cfg, &mut flags)?;

    let (decision_value, regime) = match (cfg.t3, cfg.t4) {
        (Some(t3), Some(t4)) => {
            let mut scratch = ClampFlags::default();
            let q1 = clamp_phi(ecf_low(path, t3, k)?, &mut scratch);
            let q2 = clamp_phi(ecf_low(path, t4, k)?, &mut scratch);
            let alpha_a = alpha_from_ecf(phi1, phi2, cfg.t1, cfg.t2)?;
            let alpha_b = alpha_from_ecf(q1, q2, t3, t4)?;
            let (d, regime) = decision_rule(alpha_a, alpha_b, path.n(), cfg.epsilon);
            (Some(d), regime)
        }
        _ => (None, Regime::Unknown),
    };

    Ok(EstimationResult {
        sigma_hat: sigma,
        alpha_hat: alpha,
        hurst_hat: hurst,
        k_used: k,
        alpha_prelim: Some(alpha_prelim_raw),
        clamp: flags,
        decision_value,
        regime,
    })
}

/// One moment-ratio stability estimate at order k from a high-frequency path:
/// `target = V(-p')^p / V(-p)^{p'}` inverted through the ratio curve.
/// Plug-in scale errors cancel inside the target.
fn general_high_alpha(
    path: &SamplePath,
    k: u32,
    q: f64,
    q_prime: f64,
    cfg: &EstimatorConfig,
    flags: &mut ClampFlags,
) -> Result<(f64, f64, f64)> {
    let hurst = ratio_statistic(path, -q, k)?;
    let series = increments(path, IncrementSpec::new(k, 1)?)?;
    let v_p = power_variation(&series, -q, Some(hurst))?;
    let v_pp = power_variation(&series, -q_prime, Some(hurst))?;
    let target = v_pp.powf(q) / v_p.powf(q_prime);
    let alpha = invert_phi_pp(target, q, q_prime, cfg.alpha_floor, flags)?;
    Ok((alpha, hurst, v_p))
}

/// General high-frequency estimator, built entirely from negative-order
/// moments: an order-1 ratio stage picks the increment order, the final
/// stage inverts the ratio curve again and recovers the scale from the
/// negative-order moment.
pub fn estimate_general_high(path: &SamplePath, cfg: &EstimatorConfig) -> Result<EstimationResult> {
    cfg.validate_common()?;
    require_frequency(path, Frequency::High, "the general high-frequency estimator")?;
    let p = negative_order(cfg.p, "the general high-frequency estimator")?;
    let p_prime = negative_order(cfg.p_prime, "the general high-frequency estimator")?;
    if p == p_prime {
        return Err(LfsmError::Domain("the two moment orders must differ".into()));
    }
    let (q, q_prime) = (-p, -p_prime);
    let mut flags = ClampFlags::default();

    // Stage 1 at order 1; its clamp outcomes matter only through the order
    // choice, and the order-1 truncation bias cancels inside the target.
    let mut stage1_flags = ClampFlags::default();
    let (alpha_prelim, _h1, _) = general_high_alpha(path, 1, q, q_prime, cfg, &mut stage1_flags)?;
    let k = select_k(alpha_prelim, cfg.k_cap);

    // Stage 2 at the selected order.
    let (alpha, hurst, v_p) = general_high_alpha(path, k, q, q_prime, cfg, &mut flags)?;

    // Scale: invert E|Z|^{-q} = (sigma ||h||)^{-q} 2 Gamma(q/alpha) / (alpha a_{-q}).
    let h_plug = hurst_for_norm(hurst, k, &mut flags);
    let norm = h_norm_alpha_raw(alpha, h_plug, k, 1, &cfg.quad)?;
    let sigma = (alpha * a_p(p)? * v_p / (2.0 * gamma(q / alpha))).powf(-1.0 / q) / norm;

    let (decision_value, regime) = match (cfg.p3, cfg.p4) {
        (Some(p3), Some(p4)) => {
            let mut scratch = ClampFlags::default();
            let (alpha_b, _, _) = general_high_alpha(path, k, -p3, -p4, cfg, &mut scratch)?;
            let (d, regime) = decision_rule(alpha, alpha_b, path.n(), cfg.epsilon);
            (Some(d), regime)
        }
        _ => (None, Regime::Unknown),
    };

    Ok(EstimationResult {
        sigma_hat: sigma,
        alpha_hat: alpha,
        hurst_hat: hurst,
        k_used: k,
        alpha_prelim: Some(alpha_prelim),
        clamp: flags,
        decision_value,
        regime,
    })
}
