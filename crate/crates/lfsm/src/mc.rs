//! Monte Carlo studies of the estimators: replicated simulation plus
//! estimation over a grid of path lengths, with deterministic aggregation.
//!
//! Replication `i` always draws from noise stream `i` of the master seed, and
//! aggregation folds the replications in index order after an ordered
//! parallel collect, so results are bitwise identical for any worker count.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{LfsmError, Result};
use crate::est::{
    estimate_continuous_high, estimate_continuous_low, estimate_general_high,
    estimate_general_low, EstimationResult, EstimatorConfig,
};
use crate::kernel::LfsmParams;
use crate::seed::SeedSpec;
use crate::sim::{SimConfig, SimEngine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    ContinuousLow,
    ContinuousHigh,
    GeneralLow,
    GeneralHigh,
}

impl EstimatorKind {
    pub fn is_high_frequency(&self) -> bool {
        matches!(self, EstimatorKind::ContinuousHigh | EstimatorKind::GeneralHigh)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub params: LfsmParams,
    pub n_values: Vec<usize>,
    pub reps: u32,
    pub estimator: EstimatorKind,
    pub est: EstimatorConfig,
    pub sim: SimConfig,
    pub master_seed: u64,
    /// Worker threads; `None` uses the process-wide default pool.
    pub workers: Option<usize>,
}

/// Location and spread of one parameter's estimates across replications.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ParamSummary {
    pub bias: f64,
    pub std: f64,
    /// Monte Carlo standard error of the bias: `std / sqrt(used)`.
    pub mc_error: f64,
}

/// Histogram of standardized estimates on a fixed window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u32>,
}

pub const DENSITY_BINS: usize = 200;
pub const DENSITY_LO: f64 = -5.0;
pub const DENSITY_HI: f64 = 5.0;

/// Histogram of `(x - mean) / std` over `[lo, hi)`; values outside the
/// window are dropped. Degenerate samples produce empty counts.
pub fn standardized_histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Histogram {
    let mut counts = vec![0u32; bins];
    let m = values.len() as f64;
    if values.len() >= 2 {
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        let sd = var.sqrt();
        if sd > 0.0 {
            let width = (hi - lo) / bins as f64;
            for v in values {
                let z = (v - mean) / sd;
                if z >= lo && z < hi {
                    counts[((z - lo) / width) as usize] += 1;
                }
            }
        }
    }
    Histogram { lo, hi, counts }
}

/// Kolmogorov-Smirnov distance between the standardized sample and N(0, 1).
pub fn ks_against_standard_normal(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt();
    if !(sd > 0.0) {
        return 1.0;
    }
    let mut z: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = z.len();
    let mut d: f64 = 0.0;
    for (i, zi) in z.iter().enumerate() {
        let cdf = normal.cdf(*zi);
        d = d.max((cdf - i as f64 / n as f64).abs());
        d = d.max((cdf - (i + 1) as f64 / n as f64).abs());
    }
    d
}

/// Outcome of all replications at one path length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McRunResult {
    pub n: usize,
    /// Replications whose estimates entered the moments.
    pub used: usize,
    /// Replications that returned an error (degenerate statistics, ...).
    pub failures: usize,
    /// Replications that finished but tripped a clamp; excluded from moments.
    pub clamped: usize,
    pub sigma: ParamSummary,
    pub alpha: ParamSummary,
    pub hurst: ParamSummary,
    pub sigma_density: Histogram,
    pub alpha_density: Histogram,
    pub hurst_density: Histogram,
    /// Distribution of the increment order the estimator settled on,
    /// over all replications that produced an estimate.
    pub k_counts: BTreeMap<u32, usize>,
    /// Per-replication estimates in replication order (`None` = failure).
    /// Kept for in-memory analysis, not serialized.
    #[serde(skip)]
    pub estimates: Vec<Option<EstimationResult>>,
    /// Failure messages by replication index. Not serialized.
    #[serde(skip)]
    pub errors: Vec<(usize, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McResult {
    pub config: McConfig,
    pub runs: Vec<McRunResult>,
}

fn summarize(values: &[f64], truth: f64) -> ParamSummary {
    if values.len() < 2 {
        return ParamSummary { bias: f64::NAN, std: f64::NAN, mc_error: f64::NAN };
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    let std = var.sqrt();
    ParamSummary { bias: mean - truth, std, mc_error: std / m.sqrt() }
}

/// Run the full study: for each path length, simulate `reps` paths on
/// per-replication noise streams, estimate, and aggregate.
pub fn run_mc(cfg: &McConfig) -> Result<McResult> {
    if cfg.reps < 2 {
        return Err(LfsmError::Domain(format!("a study needs at least 2 replications, got {}", cfg.reps)));
    }
    if cfg.n_values.is_empty() {
        return Err(LfsmError::Domain("a study needs at least one path length".into()));
    }
    let pool = match cfg.workers {
        Some(w) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| LfsmError::Resource(format!("failed to build worker pool: {e}")))?,
        ),
        None => None,
    };

    let mut runs = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let engine = SimEngine::new(&cfg.params, n, &cfg.sim)?;
        let one = |rep: u32| -> std::result::Result<EstimationResult, String> {
            let seed = SeedSpec::new(cfg.master_seed, rep as u64);
            let run = || -> Result<EstimationResult> {
                match cfg.estimator {
                    EstimatorKind::ContinuousLow => estimate_continuous_low(&engine.generate(seed), &cfg.est),
                    EstimatorKind::ContinuousHigh => {
                        estimate_continuous_high(&engine.generate_high(seed), &cfg.est)
                    }
                    EstimatorKind::GeneralLow => estimate_general_low(&engine.generate(seed), &cfg.est),
                    EstimatorKind::GeneralHigh => {
                        estimate_general_high(&engine.generate_high(seed), &cfg.est)
                    }
                }
            };
            run().map_err(|e| e.to_string())
        };
        let outcomes: Vec<std::result::Result<EstimationResult, String>> = match &pool {
            Some(p) => p.install(|| (0..cfg.reps).into_par_iter().map(one).collect()),
            None => (0..cfg.reps).into_par_iter().map(one).collect(),
        };

        // Sequential fold in replication order: deterministic regardless of
        // how the parallel map was scheduled.
        let mut estimates = Vec::with_capacity(outcomes.len());
        let mut errors = Vec::new();
        let mut k_counts: BTreeMap<u32, usize> = BTreeMap::new();
        let (mut sigmas, mut alphas, mut hursts) = (Vec::new(), Vec::new(), Vec::new());
        let (mut clamped, mut failures) = (0usize, 0usize);
        for (rep, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(res) => {
                    *k_counts.entry(res.k_used).or_insert(0) += 1;
                    if res.clamp.any() {
                        clamped += 1;
                    } else {
                        sigmas.push(res.sigma_hat);
                        alphas.push(res.alpha_hat);
                        hursts.push(res.hurst_hat);
                    }
                    estimates.push(Some(res));
                }
                Err(msg) => {
                    failures += 1;
                    errors.push((rep, msg));
                    estimates.push(None);
                }
            }
        }

        runs.push(McRunResult {
            n,
            used: sigmas.len(),
            failures,
            clamped,
            sigma: summarize(&sigmas, cfg.params.sigma),
            alpha: summarize(&alphas, cfg.params.alpha),
            hurst: summarize(&hursts, cfg.params.hurst),
            sigma_density: standardized_histogram(&sigmas, DENSITY_BINS, DENSITY_LO, DENSITY_HI),
            alpha_density: standardized_histogram(&alphas, DENSITY_BINS, DENSITY_LO, DENSITY_HI),
            hurst_density: standardized_histogram(&hursts, DENSITY_BINS, DENSITY_LO, DENSITY_HI),
            k_counts,
            estimates,
            errors,
        });
    }
    Ok(McResult { config: cfg.clone(), runs })
}

/// Standard-deviation ratios (sigma, alpha, hurst) between two runs: the
/// empirical convergence rate over a length step.
pub fn rate_check(first: &McRunResult, second: &McRunResult) -> [f64; 3] {
    [
        second.sigma.std / first.sigma.std,
        second.alpha.std / first.alpha.std,
        second.hurst.std / first.hurst.std,
    ]
}

/// Summary table: one row per path length and parameter.
pub fn write_summary_csv<W: Write>(result: &McResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "n,parameter,bias,std,mc_error,used,clamped,failures")?;
    for run in &result.runs {
        for (name, s) in [("sigma", &run.sigma), ("alpha", &run.alpha), ("hurst", &run.hurst)] {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                run.n, name, s.bias, s.std, s.mc_error, run.used, run.clamped, run.failures
            )?;
        }
    }
    Ok(())
}

/// Standardized density of one parameter as `z,count` rows.
pub fn write_density_csv<W: Write>(hist: &Histogram, mut out: W) -> std::io::Result<()> {
    writeln!(out, "z,count")?;
    let width = (hist.hi - hist.lo) / hist.counts.len() as f64;
    for (i, c) in hist.counts.iter().enumerate() {
        let center = hist.lo + (i as f64 + 0.5) * width;
        writeln!(out, "{center},{c}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(estimator: EstimatorKind, workers: Option<usize>) -> McConfig {
        McConfig {
            params: LfsmParams::new(0.3, 1.8, 0.8).unwrap(),
            n_values: vec![64],
            reps: 8,
            estimator,
            est: EstimatorConfig::default(),
            sim: SimConfig { mesh_m: 16, truncation_m: 24, ..SimConfig::default() },
            master_seed: 99,
            workers,
        }
    }

    fn general_config(estimator: EstimatorKind, workers: Option<usize>) -> McConfig {
        McConfig {
            est: EstimatorConfig { p: -0.4, ..EstimatorConfig::default() },
            ..tiny_config(estimator, workers)
        }
    }

    #[test]
    fn accounting_adds_up_and_summaries_are_finite() {
        let cfg = tiny_config(EstimatorKind::ContinuousLow, None);
        let result = run_mc(&cfg).unwrap();
        let run = &result.runs[0];
        assert_eq!(run.used + run.clamped + run.failures, cfg.reps as usize);
        assert_eq!(run.estimates.len(), cfg.reps as usize);
        assert!(run.used >= 2, "tiny study lost too many replications");
        for s in [&run.sigma, &run.alpha, &run.hurst] {
            assert!(s.bias.is_finite() && s.std.is_finite() && s.mc_error > 0.0);
        }
        let total_k: usize = run.k_counts.values().sum();
        assert_eq!(total_k, run.used + run.clamped);
    }

    #[test]
    fn worker_count_leaves_results_bitwise_identical() {
        let base = run_mc(&tiny_config(EstimatorKind::GeneralLow, Some(1))).unwrap();
        let wide = run_mc(&tiny_config(EstimatorKind::GeneralLow, Some(4))).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_summary_csv(&base, &mut a).unwrap();
        write_summary_csv(&wide, &mut b).unwrap();
        assert_eq!(a, b);
        // And the default pool agrees with explicit pools.
        let free = run_mc(&tiny_config(EstimatorKind::GeneralLow, None)).unwrap();
        let mut c = Vec::new();
        write_summary_csv(&free, &mut c).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn high_frequency_study_runs_and_tracks_orders() {
        let result = run_mc(&general_config(EstimatorKind::GeneralHigh, Some(2))).unwrap();
        let run = &result.runs[0];
        assert!(!run.k_counts.is_empty());
        // At alpha = 1.8 the data-driven order should essentially always be 2.
        let at_two = run.k_counts.get(&2).copied().unwrap_or(0);
        let total: usize = run.k_counts.values().sum();
        assert!(at_two * 2 > total, "order 2 should dominate, got {:?}", run.k_counts);
    }

    #[test]
    fn histogram_and_ks_behave_on_known_samples() {
        // An equally spaced grid standardizes to something flat-ish: the
        // KS distance to a normal is moderate but the histogram is centered.
        let values: Vec<f64> = (0..400).map(|i| i as f64 / 40.0).collect();
        let hist = standardized_histogram(&values, DENSITY_BINS, DENSITY_LO, DENSITY_HI);
        let total: u32 = hist.counts.iter().sum();
        assert_eq!(total as usize, values.len());
        let ks = ks_against_standard_normal(&values);
        assert!(ks > 0.02 && ks < 0.2, "uniform sample KS {ks}");
        // Degenerate sample: everything collapses.
        let flat = vec![1.0; 50];
        assert_eq!(ks_against_standard_normal(&flat), 1.0);
        let hist = standardized_histogram(&flat, 10, -5.0, 5.0);
        assert!(hist.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn summary_csv_has_one_row_per_parameter() {
        let result = run_mc(&tiny_config(EstimatorKind::ContinuousLow, None)).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&result, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[0].starts_with("n,parameter,bias"));
        assert!(lines[1].starts_with("64,sigma,"));
        let mut dbuf = Vec::new();
        write_density_csv(&result.runs[0].alpha_density, &mut dbuf).unwrap();
        assert_eq!(String::from_utf8(dbuf).unwrap().trim().lines().count(), 1 + DENSITY_BINS);
    }

    #[test]
    fn bad_study_configs_are_rejected() {
        let mut cfg = tiny_config(EstimatorKind::ContinuousLow, None);
        cfg.reps = 1;
        assert!(run_mc(&cfg).is_err());
        let mut cfg = tiny_config(EstimatorKind::ContinuousLow, None);
        cfg.n_values.clear();
        assert!(run_mc(&cfg).is_err());
    }
}
