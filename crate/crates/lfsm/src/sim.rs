//! Exact-in-law discretized simulation of linear fractional stable motion.
//!
//! Unit-step increments of the motion are stable integrals of the first-order
//! kernel `h(x) = x_+^w - (x-1)_+^w`, `w = H - 1/alpha`. The engine places
//! `mesh_m` noise cells per unit of time, truncates the kernel memory after
//! `truncation_m` units, and evaluates the resulting moving average with one
//! FFT convolution per polyphase component, so a path costs
//! `O(mesh_m * (n + M) log(n + M))` instead of a quadratic sum.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LfsmError, Result};
use crate::kernel::LfsmParams;
use crate::quad::QuadratureConfig;
use crate::seed::SeedSpec;
use crate::stable::{sample_one, StableLaw};

/// Sampling scheme of an observed path: `Low` sees the motion at times
/// `1..=n`, `High` at times `1/n..=1` (equivalently a low-frequency path
/// shrunk by self-similarity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Low,
    High,
}

impl std::fmt::Display for Frequency {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Frequency::Low => write!(f, "low"),
            Frequency::High => write!(f, "high"),
        }
    }
}

impl std::str::FromStr for Frequency {
    type Err = LfsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Frequency::Low),
            "high" => Ok(Frequency::High),
            other => Err(LfsmError::Domain(format!("unknown frequency '{other}', expected low or high"))),
        }
    }
}

/// An observed path: `values[0] = 0` at the time origin plus `n` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub values: Vec<f64>,
    pub frequency: Frequency,
}

impl SamplePath {
    pub fn from_values(values: Vec<f64>, frequency: Frequency) -> Result<Self> {
        if values.len() < 2 {
            return Err(LfsmError::Shape(format!(
                "a path needs the origin plus at least one sample, got {} values",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(LfsmError::Shape(format!("path contains a non-finite value {bad}")));
        }
        Ok(Self { values, frequency })
    }

    /// Number of observed increments (values beyond the origin).
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }
}

/// Discretization controls for the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Noise cells per unit of time. More cells, finer marginal law.
    pub mesh_m: u32,
    /// Kernel memory kept, in units of time.
    pub truncation_m: u32,
    /// Upper bound on `mesh_m * (n + truncation_m)` noise draws per path.
    pub max_fine_cells: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { mesh_m: 256, truncation_m: 600, max_fine_cells: 1 << 27 }
    }
}

/// Below this kernel exponent the cells touching the kernel knots stop having
/// usable averages (the mean of `x^w` over a cell diverges as `w -> -1`), so
/// those two cells switch to taps matched in stable scale instead.
const ALPHA_MATCH_WIDTH: f64 = -0.98;

/// Reusable simulation state for one `(params, n, config)` triple: taps,
/// FFT plans and (memory permitting) per-phase tap spectra shared by every
/// path drawn from the engine.
pub struct SimEngine {
    params: LfsmParams,
    n: usize,
    config: SimConfig,
    stream_len: usize,
    fft_len: usize,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    /// taps of phase `phi`: fine cells `t = q * m + phi`, `q = 0..=M`.
    tap_phases: Vec<Vec<f64>>,
    /// Forward spectra of the zero-padded tap phases, pre-scaled by 1/L.
    spectra: Option<Vec<Vec<Complex64>>>,
    tail_fraction: f64,
}

/// Keep precomputed spectra only while they fit comfortably in memory.
const SPECTRA_BUDGET_COMPLEX: usize = 1 << 23;

impl SimEngine {
    pub fn new(params: &LfsmParams, n: usize, config: &SimConfig) -> Result<Self> {
        LfsmParams::new(params.sigma, params.alpha, params.hurst)?;
        if n == 0 {
            return Err(LfsmError::Shape("path length must be at least 1".into()));
        }
        if config.mesh_m < 16 {
            return Err(LfsmError::Domain(format!(
                "mesh must be at least 16 cells per unit, got {}",
                config.mesh_m
            )));
        }
        if config.truncation_m < 1 {
            return Err(LfsmError::Domain("kernel memory must be at least 1".into()));
        }
        let m = config.mesh_m as usize;
        let big_m = config.truncation_m as usize;
        let fine_cells = (m as u64) * ((n + big_m) as u64);
        if fine_cells > config.max_fine_cells {
            return Err(LfsmError::Resource(format!(
                "path needs {fine_cells} noise cells (mesh {} x (n {} + memory {})), above the cap {}",
                m, n, big_m, config.max_fine_cells
            )));
        }

        let taps = build_taps(params, m, big_m)?;
        let stream_len = n + big_m;
        let fft_len = (stream_len + big_m + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(fft_len);
        let fft_inv = planner.plan_fft_inverse(fft_len);

        let mut tap_phases = vec![Vec::with_capacity(big_m + 1); m];
        for (t, &c) in taps.iter().enumerate() {
            tap_phases[t % m].push(c);
        }

        let spectra = if m * fft_len <= SPECTRA_BUDGET_COMPLEX {
            let mut all = Vec::with_capacity(m);
            let mut scratch = vec![Complex64::default(); fft_fwd.get_inplace_scratch_len()];
            for phase in &tap_phases {
                all.push(phase_spectrum(phase, fft_len, &fft_fwd, &mut scratch));
            }
            Some(all)
        } else {
            None
        };

        let tail_fraction = truncated_tail_fraction(params, big_m)?;

        Ok(Self {
            params: *params,
            n,
            config: *config,
            stream_len,
            fft_len,
            fft_fwd,
            fft_inv,
            tap_phases,
            spectra,
            tail_fraction,
        })
    }

    pub fn params(&self) -> &LfsmParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Share of the kernel's stable mass lost to the memory truncation,
    /// `int_{M+1}^inf |h|^alpha / int_0^inf |h|^alpha`. A pure scale error:
    /// it cancels in the ratio and log-slope statistics downstream.
    pub fn truncated_tail_fraction(&self) -> f64 {
        self.tail_fraction
    }

    /// Draw one low-frequency path. Deterministic in the seed; worker counts
    /// and FFT internals never touch the noise order.
    pub fn generate(&self, seed: SeedSpec) -> SamplePath {
        let m = self.config.mesh_m as usize;
        let len = self.stream_len;

        // The noise enters in one fixed sequential order and is scattered
        // into phase-major streams: fine cell v lives in stream v mod m.
        let law = StableLaw::new(self.params.alpha, 1.0).expect("validated at engine build");
        let mut rng = seed.rng();
        let mut streams = vec![0.0f64; m * len];
        for v in 0..(m * len) {
            streams[(v % m) * len + v / m] = sample_one(&law, &mut rng);
        }

        let mut inc = vec![0.0f64; self.n];
        let mut buf = vec![Complex64::default(); self.fft_len];
        let mut scratch = vec![
            Complex64::default();
            self.fft_fwd.get_inplace_scratch_len().max(self.fft_inv.get_inplace_scratch_len())
        ];
        let big_m = self.config.truncation_m as usize;

        for phi in 0..m {
            // Tap phase phi pairs with noise phase m - 1 - phi: fine tap cell
            // t = q m + phi multiplies fine noise cell (i - q + M) m + psi.
            let psi = m - 1 - phi;
            let spectrum_storage;
            let spectrum = match &self.spectra {
                Some(all) => &all[phi],
                None => {
                    spectrum_storage =
                        phase_spectrum(&self.tap_phases[phi], self.fft_len, &self.fft_fwd, &mut scratch);
                    &spectrum_storage
                }
            };

            for slot in buf.iter_mut() {
                *slot = Complex64::default();
            }
            for (j, slot) in streams[psi * len..(psi + 1) * len].iter().enumerate() {
                buf[j].re = *slot;
            }
            self.fft_fwd.process_with_scratch(&mut buf, &mut scratch);
            for (b, s) in buf.iter_mut().zip(spectrum.iter()) {
                *b *= *s;
            }
            self.fft_inv.process_with_scratch(&mut buf, &mut scratch);
            for i in 0..self.n {
                inc[i] += buf[i + 1 + big_m].re;
            }
        }

        let mut values = Vec::with_capacity(self.n + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for y in inc {
            acc += y;
            values.push(acc);
        }
        SamplePath { values, frequency: Frequency::Low }
    }

    /// Draw one high-frequency path: by self-similarity it is the
    /// low-frequency path of the same seed scaled by `n^{-H}`.
    pub fn generate_high(&self, seed: SeedSpec) -> SamplePath {
        let mut path = self.generate(seed);
        let scale = (self.n as f64).powf(-self.params.hurst);
        for v in &mut path.values {
            *v *= scale;
        }
        path.frequency = Frequency::High;
        path
    }
}

fn phase_spectrum(
    taps: &[f64],
    fft_len: usize,
    fft_fwd: &Arc<dyn Fft<f64>>,
    scratch: &mut Vec<Complex64>,
) -> Vec<Complex64> {
    let mut buf = vec![Complex64::default(); fft_len];
    for (slot, &c) in buf.iter_mut().zip(taps.iter()) {
        slot.re = c;
    }
    let need = fft_fwd.get_inplace_scratch_len();
    if scratch.len() < need {
        scratch.resize(need, Complex64::default());
    }
    fft_fwd.process_with_scratch(&mut buf, scratch);
    let norm = 1.0 / fft_len as f64;
    for slot in &mut buf {
        *slot *= norm;
    }
    buf
}

#[inline]
fn pow_plus(x: f64, e: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.powf(e)
    }
}

/// Fine-cell taps `t = 0 .. m (M + 1) - 1`, scaled by `sigma m^{-1/alpha}`.
///
/// Each tap is the cell average of the first-order kernel, taken in closed
/// form from its antiderivative. The two cells whose left edge is a kernel
/// knot (`t = 0` and `t = m`) switch to stable-scale-matched values once the
/// exponent is so negative that averages misstate (or lose) the local mass.
fn build_taps(params: &LfsmParams, m: usize, big_m: usize) -> Result<Vec<f64>> {
    let w = params.width();
    let w1 = w + 1.0;
    let mf = m as f64;
    let alpha = params.alpha;
    let count = m * (big_m + 1);

    // Antiderivative of x_+^w - (x-1)_+^w vanishing at 0, with the log branch
    // at w = -1 (only ever used away from the knots, where it is finite).
    let hint = |x: f64| -> f64 {
        if w1.abs() < 1e-9 {
            let a = if x > 0.0 { x.ln() } else { 0.0 };
            let b = if x > 1.0 { (x - 1.0).ln() } else { 0.0 };
            a - b
        } else {
            (pow_plus(x, w1) - pow_plus(x - 1.0, w1)) / w1
        }
    };

    let mut taps = Vec::with_capacity(count);
    for t in 0..count {
        taps.push(mf * (hint((t + 1) as f64 / mf) - hint(t as f64 / mf)));
    }

    if w <= ALPHA_MATCH_WIDTH {
        // Cell 0 holds x^w alone; its alpha-mass has a closed form.
        let aw1 = alpha * w + 1.0; // positive whenever H > 0
        taps[0] = mf.powf(-w) * aw1.powf(-1.0 / alpha);
        // Cell m holds x^w - (x-1)^w with the singular term switching on at
        // the left edge; match its alpha-mass by quadrature. The kernel panel
        // integrator keeps knot offsets exact and switches to a closed-form
        // head when the singularity is too deep for abscissae to resolve.
        let cfg = QuadratureConfig::default();
        let mass = crate::kernel::panel_abs_pow_raw(alpha, w, 1, 1, 1.0, 1.0 + 1.0 / mf, &cfg)?;
        taps[m] = -(mf * mass).powf(1.0 / alpha);
    }

    let scale = params.sigma * mf.powf(-1.0 / alpha);
    for c in &mut taps {
        *c *= scale;
    }
    Ok(taps)
}

/// Stable-mass fraction of the first-order kernel beyond the kept memory.
fn truncated_tail_fraction(params: &LfsmParams, big_m: usize) -> Result<f64> {
    let cfg = QuadratureConfig::default();
    let total = crate::kernel::h_norm_pow_raw(params.alpha, params.hurst, 1, 1, &cfg)?;
    let beyond = crate::kernel::h_tail_pow_raw(
        params.alpha,
        params.hurst,
        1,
        1,
        (big_m + 1) as f64,
        &cfg,
    )?;
    Ok(beyond / total)
}

/// Convenience wrapper: build a one-shot engine and draw a low-frequency path.
pub fn simulate_low(params: &LfsmParams, n: usize, config: &SimConfig, seed: SeedSpec) -> Result<SamplePath> {
    Ok(SimEngine::new(params, n, config)?.generate(seed))
}

/// Convenience wrapper: build a one-shot engine and draw a high-frequency path.
pub fn simulate_high(params: &LfsmParams, n: usize, config: &SimConfig, seed: SeedSpec) -> Result<SamplePath> {
    Ok(SimEngine::new(params, n, config)?.generate_high(seed))
}

/// Write a path as `index,value` CSV, one row per observation time.
pub fn write_csv<W: Write>(path: &SamplePath, mut out: W) -> std::io::Result<()> {
    writeln!(out, "index,value")?;
    for (i, v) in path.values.iter().enumerate() {
        writeln!(out, "{i},{v}")?;
    }
    Ok(())
}

/// Read the values column of an `index,value` CSV produced by [`write_csv`].
pub fn read_values_csv<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| LfsmError::Shape(format!("failed to read CSV: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if lineno == 0 && trimmed.starts_with("index") {
            continue;
        }
        let field = trimmed.split(',').nth(1).ok_or_else(|| {
            LfsmError::Shape(format!("CSV line {} lacks a value column: '{trimmed}'", lineno + 1))
        })?;
        let v: f64 = field.trim().parse().map_err(|_| {
            LfsmError::Shape(format!("CSV line {} has a non-numeric value '{field}'", lineno + 1))
        })?;
        values.push(v);
    }
    Ok(values)
}
