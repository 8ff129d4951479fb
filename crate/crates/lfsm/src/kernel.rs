//! The moving-average kernel of linear fractional stable motion and the
//! population quantities built from it: alpha-norms, power moments of
//! increments, the theoretical characteristic function of increments, and the
//! covariance-type integrals that drive asymptotic variances.

use statrs::function::gamma::gamma;

use crate::error::{LfsmError, Result};
use crate::quad::{fixed_nodes, tanh_sinh, tanh_sinh_tail, QuadratureConfig};
use crate::stable::a_p;

/// Parameters of a linear fractional stable motion: scale `sigma > 0`,
/// stability index `alpha` in (0, 2), self-similarity index `hurst` in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LfsmParams {
    pub sigma: f64,
    pub alpha: f64,
    pub hurst: f64,
}

impl LfsmParams {
    pub fn new(sigma: f64, alpha: f64, hurst: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(LfsmError::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(LfsmError::Domain(format!("alpha must lie in (0, 2), got {alpha}")));
        }
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(LfsmError::Domain(format!("hurst must lie in (0, 1), got {hurst}")));
        }
        Ok(Self { sigma, alpha, hurst })
    }

    /// Kernel exponent `H - 1/alpha`.
    pub fn width(&self) -> f64 {
        self.hurst - 1.0 / self.alpha
    }
}

/// Order `k` and step `r` of an iterated increment filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IncrementSpec {
    pub k: u32,
    pub r: u32,
}

impl IncrementSpec {
    pub fn new(k: u32, r: u32) -> Result<Self> {
        if k == 0 || r == 0 {
            return Err(LfsmError::Domain(format!(
                "increment order and step must be at least 1, got k={k}, r={r}"
            )));
        }
        Ok(Self { k, r })
    }
}

/// Signed binomial coefficients `(-1)^j C(k, j)` for `j = 0..=k`.
pub(crate) fn signed_binom(k: u32) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(k as usize + 1);
    let mut c = 1.0f64;
    for j in 0..=k {
        coeffs.push(if j % 2 == 0 { c } else { -c });
        c = c * (k - j) as f64 / (j + 1) as f64;
    }
    coeffs
}

/// Kernel of the k-th order increment at step r:
/// `h(x) = sum_j (-1)^j C(k,j) (x - r j)_+^w`.
pub fn h_kr(x: f64, k: u32, r: u32, width: f64) -> f64 {
    let mut c = 1.0f64;
    let mut acc = 0.0;
    for j in 0..=k {
        let y = x - (j * r) as f64;
        if y <= 0.0 {
            break;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * c * y.powf(width);
        c = c * (k - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// Kernel with precomputed coefficients, for quadrature loops.
struct Kernel {
    k: u32,
    r: f64,
    width: f64,
    coeffs: Vec<f64>,
}

impl Kernel {
    fn new(k: u32, r: u32, width: f64) -> Self {
        Self { k, r: r as f64, width, coeffs: signed_binom(k) }
    }

    /// Past the knot span the direct alternating sum is a k-th difference of
    /// a slowly varying power and cancellation eats ~k digits per octave;
    /// beyond twice the span, switch to the series form.
    fn far_threshold(&self) -> f64 {
        2.0 * self.r * self.k as f64
    }

    /// `h(x)` for `x >= far_threshold()`, written as
    /// `x^w sum_j (-1)^j C(k,j) R_j(r j / x)` where `R_j(z)` is the order->=k
    /// remainder of the binomial series of `(1 - z)^w`. The polynomial part
    /// of degree < k cancels exactly across j, so dropping it analytically
    /// removes the catastrophic subtraction; each `R_j` series has terms of
    /// one sign for any `w < 1`, and the residual j-sum cancellation stays at
    /// the scale of the answer itself.
    /// `(ln |h(x)|, sign)` in the far zone. Returned in log form because the
    /// value itself can underflow long before `|h|^q` does: the tail carries
    /// `x^{(w-k) q}` mass out to abscissae where `x^{w-k}` is subnormal.
    fn eval_far_parts(&self, x: f64) -> (f64, f64) {
        let w = self.width;
        let mut b_k = 1.0; // binom(w, k)
        for m in 0..self.k {
            b_k *= (w - m as f64) / (m as f64 + 1.0);
        }
        // Each remainder is scaled by its leading power (r j / x)^k, which
        // underflows long before the log of the value does; accumulate the
        // order-one factors and restore the power in log space at the end.
        let mut acc = 0.0;
        for (j, &c) in self.coeffs.iter().enumerate().skip(1) {
            let z = -(self.r * j as f64) / x;
            let mut term = b_k;
            let first = term.abs();
            let mut s_j = 0.0;
            let mut m = self.k as f64;
            while term != 0.0 {
                s_j += term;
                if term.abs() <= 1e-18 * (s_j.abs() + first) || m > 600.0 {
                    break;
                }
                term *= (w - m) / (m + 1.0) * z;
                m += 1.0;
            }
            acc += c * (j as f64).powi(self.k as i32) * s_j;
        }
        if acc == 0.0 {
            return (f64::NEG_INFINITY, 0.0);
        }
        let sign = if self.k.is_multiple_of(2) { acc.signum() } else { -acc.signum() };
        let ln_mag = w * x.ln() + self.k as f64 * (self.r.ln() - x.ln()) + acc.abs().ln();
        (ln_mag, sign)
    }

    /// Coefficient of the far-field asymptote `h(x) ~ sign * exp(c) *
    /// x^(width - k)`, assembled through the same summation as
    /// `eval_far_parts` so the two agree to roundoff deep in the tail.
    fn far_asym_parts(&self) -> (f64, f64) {
        let w = self.width;
        let mut b_k = 1.0;
        for m in 0..self.k {
            b_k *= (w - m as f64) / (m as f64 + 1.0);
        }
        let mut acc = 0.0;
        for (j, &c) in self.coeffs.iter().enumerate().skip(1) {
            acc += c * (j as f64).powi(self.k as i32) * b_k;
        }
        let sign = if self.k.is_multiple_of(2) { acc.signum() } else { -acc.signum() };
        (self.k as f64 * self.r.ln() + acc.abs().ln(), sign)
    }

    fn eval_far(&self, x: f64) -> f64 {
        let (ln_mag, sign) = self.eval_far_parts(x);
        sign * ln_mag.exp()
    }

    fn eval(&self, x: f64) -> f64 {
        if x >= self.far_threshold() {
            return self.eval_far(x);
        }
        let mut acc = 0.0;
        for (j, &c) in self.coeffs.iter().enumerate() {
            let y = x - self.r * j as f64;
            if y <= 0.0 {
                break;
            }
            acc += c * y.powf(self.width);
        }
        acc
    }

    /// `h(base + u)` with knot distances formed as `(base - r j) + u`. When
    /// `base` is itself a knot, the distance to it is `u` exactly, so offsets
    /// far below `ulp(base)` keep full precision; distances to other knots
    /// are at least `r` and safe either way.
    fn eval_offset(&self, base: f64, u: f64) -> f64 {
        let x = base + u;
        if x >= self.far_threshold() {
            return self.eval_far(x);
        }
        let mut acc = 0.0;
        for (j, &c) in self.coeffs.iter().enumerate() {
            let y = (base - self.r * j as f64) + u;
            if y <= 0.0 {
                break;
            }
            acc += c * y.powf(self.width);
        }
        acc
    }

    /// `|h(base + u)|^q` in offset coordinates, overflow-safe like `abs_pow`.
    fn abs_pow_offset(&self, base: f64, u: f64, q: f64) -> f64 {
        let x = base + u;
        if x >= self.far_threshold() {
            let (ln_mag, sign) = self.eval_far_parts(x);
            if sign == 0.0 {
                return 0.0;
            }
            return (q * ln_mag).exp();
        }
        let h = self.eval_offset(base, u);
        if h == 0.0 {
            return 0.0;
        }
        if h.is_finite() {
            return (q * h.abs().ln()).exp();
        }
        // h overflowed next to a knot: the term with the smallest positive
        // distance dwarfs the rest, so its logarithm stands in exactly.
        let mut j_dom = 0usize;
        let mut y_dom = base + u;
        for j in 0..self.coeffs.len() {
            let y = (base - self.r * j as f64) + u;
            if y <= 0.0 {
                break;
            }
            j_dom = j;
            y_dom = y;
        }
        (q * (self.coeffs[j_dom].abs().ln() + self.width * y_dom.ln())).exp()
    }

    /// Index of the kernel knot sitting at `x`, if any.
    fn knot_at(&self, x: f64) -> Option<usize> {
        let j = (x / self.r).round();
        if j < 0.0 || j > self.k as f64 {
            return None;
        }
        if (x - self.r * j).abs() <= 1e-9 * x.abs().max(1.0) {
            Some(j as usize)
        } else {
            None
        }
    }

    /// `|h(x)|^q`, stable against overflow of `h` itself next to a knot when
    /// the exponent `w` is a large negative number. In that regime the term
    /// anchored at the nearest knot to the left dwarfs all others, so its
    /// logarithm is an exact stand-in.
    fn abs_pow(&self, x: f64, q: f64) -> f64 {
        if x >= self.far_threshold() {
            let (ln_mag, sign) = self.eval_far_parts(x);
            if sign == 0.0 {
                return 0.0;
            }
            return (q * ln_mag).exp();
        }
        let h = self.eval(x);
        if h == 0.0 {
            return 0.0;
        }
        if h.is_finite() {
            return (q * h.abs().ln()).exp();
        }
        let j = ((x / self.r).floor() as u32).min(self.k);
        let d = x - self.r * j as f64;
        (q * (self.coeffs[j as usize].abs().ln() + self.width * d.ln())).exp()
    }

    /// Zeros of `h` strictly inside `(a, b)`, located by a sign scan plus
    /// bisection. The integrand `|h|^q` has kinks there, so panels are split
    /// at these points before tanh-sinh integration.
    fn zeros_in(&self, a: f64, b: f64) -> Vec<f64> {
        const SCAN: usize = 128;
        let width = b - a;
        let mut zeros = Vec::new();
        // Uniform midpoint scan for interior sign changes.
        let step = width / SCAN as f64;
        let mut prev_x = a + 0.5 * step;
        let mut prev = self.eval(prev_x);
        for i in 1..SCAN {
            let x = a + (i as f64 + 0.5) * step;
            let v = self.eval(x);
            if prev.is_finite() && v.is_finite() && prev * v < 0.0 {
                let (mut lo, mut hi) = (prev_x, x);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if self.eval(mid) * prev < 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                zeros.push(0.5 * (lo + hi));
            }
            prev_x = x;
            prev = v;
        }
        // When the kernel exponent is near zero, a sign change sits
        // exponentially close to a knot (at offset ~ 2^(-1/|w|)), invisible
        // to any uniform scan: hunt each edge on a halving ladder in offset
        // coordinates. Zeros below representable offsets need no cut — the
        // node weights there are already smaller than any tolerance.
        for right in [false, true] {
            let at =
                |u: f64| if right { self.eval_offset(b, -u) } else { self.eval_offset(a, u) };
            let mut u_hi = 0.5 * step;
            let mut v_hi = at(u_hi);
            while u_hi > 1e-18 * width {
                let u_lo = 0.5 * u_hi;
                let v_lo = at(u_lo);
                if v_lo.is_finite() && v_hi.is_finite() && v_lo * v_hi < 0.0 {
                    let (mut lo, mut hi) = (u_lo, u_hi);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if at(mid) * v_lo < 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let u = 0.5 * (lo + hi);
                    let z = if right { b - u } else { a + u };
                    if z > a && z < b {
                        zeros.push(z);
                    }
                }
                u_hi = u_lo;
                v_hi = v_lo;
            }
        }
        zeros.sort_by(|x, y| x.partial_cmp(y).unwrap());
        zeros.dedup_by(|x, y| (*x - *y).abs() <= 1e-13 * width);
        zeros
    }
}

/// Below this value of `q w + 1` the singularity at a knot is treated in
/// closed form: the mass of `u^{q w}` then concentrates at offsets no float
/// can represent (for `q w + 1 = 0.001`, half of it sits below `exp(-693)`),
/// so no quadrature node placement can see it.
const DEEP_SINGULARITY: f64 = 0.05;

/// Below this tail-decay margin `s` (integrand ~ `x^(-1-s)`) the mapped tail
/// is split into a closed-form asymptote plus a residual.
const SLOW_TAIL: f64 = 0.05;

/// `int_a^b |h|^q` with the panel split at interior zeros of `h`.
///
/// Each piece is integrated in offset coordinates `u = x - left`, so a knot
/// at the left edge sees node distances at full precision. For very deep
/// singularities the leading term `|c_j|^q u^{q w}` is integrated exactly and
/// only the remainder is sampled; the remainder reuses the same log-space
/// expression as `abs_pow_offset`, so it cancels bit-for-bit where `h`
/// overflows and the leading term is the whole story.
fn panel_abs_pow(kern: &Kernel, a: f64, b: f64, q: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let mut cuts = vec![a];
    cuts.extend(kern.zeros_in(a, b));
    cuts.push(b);
    let mut total = 0.0;
    let qw1 = q * kern.width + 1.0;
    for pair in cuts.windows(2) {
        let (s, e) = (pair[0], pair[1]);
        if e <= s {
            continue;
        }
        let width = e - s;
        match kern.knot_at(s) {
            Some(j) if qw1 < DEEP_SINGULARITY => {
                let c_abs = kern.coeffs[j].abs();
                let head = (q * c_abs.ln()).exp() * width.powf(qw1) / qw1;
                let resid_cfg = QuadratureConfig {
                    abs_tol: cfg.abs_tol.max(1e-12 * head),
                    ..*cfg
                };
                let resid = tanh_sinh(
                    &|u| {
                        kern.abs_pow_offset(s, u, q)
                            - (q * (c_abs.ln() + kern.width * u.ln())).exp()
                    },
                    0.0,
                    width,
                    &resid_cfg,
                )?;
                total += head + resid;
            }
            _ => {
                total += tanh_sinh(&|u| kern.abs_pow_offset(s, u, q), 0.0, width, cfg)?;
            }
        }
    }
    Ok(total)
}

/// One-panel `int_a^b |h_{k,r}|^alpha` for external callers (the simulator's
/// finest-cell alpha matching); same deep-singularity handling as the norms.
pub(crate) fn panel_abs_pow_raw(
    alpha: f64,
    width: f64,
    k: u32,
    r: u32,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let kern = Kernel::new(k, r, width);
    panel_abs_pow(&kern, a, b, alpha, cfg)
}

/// `int_0^inf |h_{k,r}|^alpha`, decomposed into knot panels plus a mapped
/// tail. Accepts `hurst` anywhere in `(0, k)`: plugged-in estimates of H can
/// leave the model range `(0, 1)` while the integral still exists.
pub(crate) fn h_norm_pow_raw(
    alpha: f64,
    hurst: f64,
    k: u32,
    r: u32,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(LfsmError::Domain(format!("alpha must lie in (0, 2), got {alpha}")));
    }
    if !(hurst > 0.0 && hurst < k as f64) {
        return Err(LfsmError::Domain(format!(
            "kernel norm needs hurst in (0, k), got hurst={hurst}, k={k}"
        )));
    }
    if k == 0 || r == 0 {
        return Err(LfsmError::Domain("increment order and step must be at least 1".into()));
    }
    let kern = Kernel::new(k, r, hurst - 1.0 / alpha);
    let rf = r as f64;
    let mut total = 0.0;
    for j in 0..k {
        total += panel_abs_pow(&kern, rf * j as f64, rf * (j + 1) as f64, alpha, cfg)?;
    }
    // Past the last knot the kernel is smooth with one possible sign change;
    // integrate one more unit panel, then map the algebraic tail.
    let t0 = rf * k as f64;
    total += panel_abs_pow(&kern, t0, t0 + 1.0, alpha, cfg)?;
    total += h_tail_pow_raw(alpha, hurst, k, r, t0 + 1.0, cfg)?;
    Ok(total)
}

/// `int_from^inf |h_{k,r}|^alpha` for `from` past the kernel's sign changes.
///
/// The integrand decays like `x^(-1-s)` with `s = alpha (k - hurst)`.
/// Clamped plug-in values can push `s` towards zero, where the mass spreads
/// over so many decades that no node set can carry it: there the asymptote
/// is integrated in closed form, leaving only the faster residual to nodes.
pub(crate) fn h_tail_pow_raw(
    alpha: f64,
    hurst: f64,
    k: u32,
    r: u32,
    from: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let kern = Kernel::new(k, r, hurst - 1.0 / alpha);
    let s = alpha * (k as f64 - hurst);
    if s >= SLOW_TAIL {
        return tanh_sinh_tail(&|x| kern.abs_pow(x, alpha), from, cfg);
    }
    let t_far = kern.far_threshold().max(from);
    let mut total = 0.0;
    if t_far > from {
        total += tanh_sinh(&|x| kern.abs_pow(x, alpha), from, t_far, cfg)?;
    }
    let (far_coef, _) = kern.far_asym_parts();
    let head = (alpha * far_coef - s * t_far.ln()).exp() / s;
    let drop = kern.width - k as f64;
    let resid = |x: f64| {
        let (ln_mag, _) = kern.eval_far_parts(x);
        let ln_asym = far_coef + drop * x.ln();
        (alpha * ln_asym).exp() * (alpha * (ln_mag - ln_asym)).exp_m1()
    };
    let resid_cfg = QuadratureConfig { abs_tol: cfg.abs_tol.max(1e-12 * head), ..*cfg };
    total += head + tanh_sinh_tail(&resid, t_far, &resid_cfg)?;
    Ok(total)
}

pub(crate) fn h_norm_alpha_raw(
    alpha: f64,
    hurst: f64,
    k: u32,
    r: u32,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    Ok(h_norm_pow_raw(alpha, hurst, k, r, cfg)?.powf(1.0 / alpha))
}

/// The alpha-norm of the increment kernel, `(int |h_{k,r}|^alpha)^{1/alpha}`.
pub fn h_norm_alpha(params: &LfsmParams, spec: IncrementSpec, cfg: &QuadratureConfig) -> Result<f64> {
    LfsmParams::new(params.sigma, params.alpha, params.hurst)?;
    h_norm_alpha_raw(params.alpha, params.hurst, spec.k, spec.r, cfg)
}

/// Absolute p-th moment of a unit-step k-th order increment of the motion:
/// `E |Delta_{k} X|^p` for `p` in `(-1/2, 0) U (0, 1/2)`.
///
/// The positive branch requires `p < alpha`; the negative branch is finite
/// for every `alpha` in (0, 2).
pub fn m_pk(params: &LfsmParams, p: f64, k: u32, cfg: &QuadratureConfig) -> Result<f64> {
    let scale = params.sigma * h_norm_alpha(params, IncrementSpec::new(k, 1)?, cfg)?;
    moment_from_scale(scale, params.alpha, p)
}

/// `E |Z|^p` for a symmetric alpha-stable `Z` with the given scale.
pub(crate) fn moment_from_scale(scale: f64, alpha: f64, p: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(LfsmError::Domain(format!("moment needs a positive scale, got {scale}")));
    }
    if p > 0.0 && p < 0.5 {
        if p >= alpha {
            return Err(LfsmError::Infeasible(format!(
                "moment order p={p} is infinite for alpha={alpha}; need p < alpha"
            )));
        }
        Ok(scale.powf(p) * 2.0 * gamma(1.0 - p / alpha) / (p * a_p(p)?))
    } else if p > -0.5 && p < 0.0 {
        let q = -p;
        Ok(scale.powf(p) * 2.0 * gamma(q / alpha) / (alpha * a_p(p)?))
    } else {
        Err(LfsmError::Domain(format!(
            "moment order must lie in (-1/2, 0) or (0, 1/2), got {p}"
        )))
    }
}

/// Real characteristic function of a unit-step k-th order increment at
/// argument `t`: `exp(-(t sigma ||h_{k,1}||_alpha)^alpha)`.
pub fn phi_theoretical(params: &LfsmParams, t: f64, k: u32, cfg: &QuadratureConfig) -> Result<f64> {
    if !(t > 0.0) {
        return Err(LfsmError::Domain(format!("characteristic argument must be positive, got {t}")));
    }
    let scale = params.sigma * h_norm_alpha(params, IncrementSpec::new(k, 1)?, cfg)?;
    Ok((-(t * scale).powf(params.alpha)).exp())
}

/// Dependence kernel of two jointly stable integrals:
/// `U(u, v) = E e^{i(uA + vB)} - E e^{iuA} E e^{ivB}` expressed through the
/// precomputed alpha-power integrals `mixed = int |u g + v h|^alpha`,
/// `ng = int |g|^alpha`, `nh = int |h|^alpha`.
pub fn u_gh(u: f64, v: f64, sigma: f64, alpha: f64, mixed_pow: f64, ng_pow: f64, nh_pow: f64) -> f64 {
    let sa = sigma.powf(alpha);
    (-sa * mixed_pow).exp() - (-sa * (u.abs().powf(alpha) * ng_pow + v.abs().powf(alpha) * nh_pow)).exp()
}

/// Overlap integral `sigma^alpha int |h(x)|^{alpha/2} |h(x + lag)|^{alpha/2} dx`
/// for the k-th order kernel at step r. Bounds the dependence kernel via
/// `|U(u,v)| <= 2 |uv|^{alpha/2} rho` and decays polynomially in the lag.
pub fn rho_l(
    params: &LfsmParams,
    spec: IncrementSpec,
    lag: i64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    LfsmParams::new(params.sigma, params.alpha, params.hurst)?;
    let kern = Kernel::new(spec.k, spec.r, params.width());
    let q = params.alpha / 2.0;
    let lagf = lag as f64;
    let s_lo = 0f64.max(-lagf);

    // Knots of either factor, i.e. of h(x) and of h(x + lag).
    let rf = spec.r as f64;
    let mut knots: Vec<f64> = Vec::new();
    for j in 0..=spec.k {
        knots.push(rf * j as f64);
        knots.push(rf * j as f64 - lagf);
    }
    knots.retain(|&x| x >= s_lo);
    knots.push(s_lo);
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    // One padding panel past the last knot, then the mapped tail.
    let t0 = *knots.last().unwrap() + 1.0;
    knots.push(t0);

    let f = |x: f64| kern.abs_pow(x, q) * kern.abs_pow(x + lagf, q);
    let mut total = 0.0;
    for pair in knots.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        // Split at kinks contributed by either factor.
        let mut cuts = vec![a];
        cuts.extend(kern.zeros_in(a, b));
        cuts.extend(kern.zeros_in(a + lagf, b + lagf).iter().map(|z| z - lagf));
        cuts.push(b);
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for sub in cuts.windows(2) {
            if sub[1] > sub[0] + 1e-14 {
                // Offset coordinates keep both factors' knots (at s and at
                // s + lag, both on the integer grid) exact near the edge.
                let (s, shifted) = (sub[0], sub[0] + lagf);
                total += tanh_sinh(
                    &|u| kern.abs_pow_offset(s, u, q) * kern.abs_pow_offset(shifted, u, q),
                    0.0,
                    sub[1] - sub[0],
                    cfg,
                )?;
            }
        }
    }
    total += tanh_sinh_tail(&f, t0, cfg)?;
    Ok(params.sigma.powf(params.alpha) * total)
}

const THETA_INNER_LEVEL: u32 = 6;

/// Covariance of p-th absolute powers of two k-th order increments `lag`
/// steps apart:
/// `theta = 2 a_p^{-2} int int_{(0,inf)^2} |xy|^{-1-p} [U(x,y) + U(x,-y)]`.
///
/// The double integral is never discretized as written: because the joint
/// alpha-mass is homogeneous, `int |x g + y h|^alpha = x^alpha M_+(y/x)`,
/// substituting `y = t x` and integrating out `x` with
/// `int_0^inf u^{-1-2p} (e^{-a u^alpha} - e^{-b u^alpha}) du
///  = Gamma(1 - s) (b^s - a^s) / (alpha s)`, `s = 2p/alpha`, reduces it to a
/// single integral over the mixture ratio `t`:
///
/// `theta = (2 / a_p^2) (Gamma(1-s) / (alpha s)) sigma^{2p}
///          int_0^inf t^{-1-p} B(t) dt`,
/// `B(t) = 2 (ng + t^alpha nh)^s - M_+(t)^s - M_-(t)^s`,
/// `M_pm(t) = int |g(x) pm t h(x + lag)|^alpha dx`.
///
/// This keeps the `|x - y|^alpha`-type ridge of the integrand (exact at lag
/// zero, softened otherwise) at the single point t = 1, where a panel break
/// restores exponential quadrature convergence, and makes theta even in the
/// lag by construction.
///
/// At lag 0 this is the variance of `|Delta_k X|^p`. Requires `p < alpha/2`.
pub fn theta_gh_p(
    params: &LfsmParams,
    k: u32,
    lag: i64,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    LfsmParams::new(params.sigma, params.alpha, params.hurst)?;
    if !(p > 0.0 && p < 0.5) {
        return Err(LfsmError::Domain(format!("theta needs p in (0, 1/2), got {p}")));
    }
    if p >= params.alpha / 2.0 {
        return Err(LfsmError::Infeasible(format!(
            "theta diverges for p={p} at alpha={}; need p < alpha/2",
            params.alpha
        )));
    }
    let alpha = params.alpha;
    let kern = Kernel::new(k, 1, params.width());
    let lagf = lag as f64;
    let s_lo = 0f64.max(-lagf);

    // One-sided stretches where only one factor is alive contribute
    // separable alpha-mass; both factors share the node table past s_lo.
    // Lags are integers and the r = 1 knots sit at integers, so unit panels
    // always break at the kinks.
    let unit_panel_mass = |top: f64| -> Result<f64> {
        let mut acc = 0.0;
        let mut a = 0.0f64;
        while a < top - 1e-12 {
            let b = (a + 1.0).min(top);
            acc += panel_abs_pow(&kern, a, b, alpha, cfg)?;
            a = b;
        }
        Ok(acc)
    };
    let head_g = if lag < 0 { unit_panel_mass(s_lo)? } else { 0.0 };
    // int_{-lag}^{0} |h(s + lag)|^alpha ds = int_0^lag |h|^alpha
    let head_h = if lag > 0 { unit_panel_mass(lagf)? } else { 0.0 };

    // Inner node table over (s_lo, inf): knot panels then a mapped tail.
    let mut knots: Vec<f64> = Vec::new();
    for j in 0..=k {
        knots.push(j as f64);
        knots.push(j as f64 - lagf);
    }
    knots.retain(|&x| x > s_lo + 1e-12);
    knots.push(s_lo);
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let t0 = knots.last().copied().unwrap() + 1.0;
    knots.push(t0);

    let mut nodes: Vec<(f64, f64)> = Vec::new();
    for pair in knots.windows(2) {
        if pair[1] > pair[0] + 1e-12 {
            nodes.extend(fixed_nodes(pair[0], pair[1], THETA_INNER_LEVEL));
        }
    }
    for (v, w) in fixed_nodes(0.0, 1.0, THETA_INNER_LEVEL) {
        // Divide twice: v*v underflows to zero at the deepest nodes (v ~ 1e-276)
        // and would turn the mapped weight into infinity, while w / v is order
        // one by construction (weight and distance both scale with exp(-2q)).
        nodes.push((t0 / v, (w / v) * (t0 / v)));
    }
    // Nodes can sit at distances like exp(-600) from a knot, where the
    // kernel value or its alpha-power overflows while carrying negligible
    // weighted mass (weight ~ distance, so w |g|^alpha ~ distance^{alpha H}).
    // Rows are dropped when the power is unrepresentable, consistently for
    // the marginal masses and the mixed sums below.
    let table: Vec<(f64, f64, f64)> = nodes
        .iter()
        .map(|&(s, w)| (w, kern.eval(s), kern.eval(s + lagf)))
        .filter(|t| {
            t.0.is_finite()
                && t.1.is_finite()
                && t.2.is_finite()
                && t.1.abs().powf(alpha).is_finite()
                && t.2.abs().powf(alpha).is_finite()
        })
        .collect();

    let ng_pow = head_g + table.iter().map(|&(w, g, _)| w * g.abs().powf(alpha)).sum::<f64>();
    let nh_pow = head_h + table.iter().map(|&(w, _, h)| w * h.abs().powf(alpha)).sum::<f64>();

    let s = 2.0 * p / alpha;

    // B(t) = ng^s [2 e0(t) - e_+(t) - e_-(t)] with
    //   e0 = (1 + t^alpha nh/ng)^s - 1,  e_pm = (M_pm(t)/ng)^s - 1,
    // every factor written through ln_1p/exp_m1 and the mass differences
    // M_pm - ng accumulated row by row, so the constant parts cancel in exact
    // arithmetic and small-t values keep full relative precision. The shared
    // table makes the discretization error of M_pm cancel against ng/nh; the
    // one-sided head stretches carry no cross terms and add separably
    // (head_g drops out of the differences entirely).
    let delta_sums = |t: f64| -> (f64, f64) {
        let mut dp = 0.0;
        let mut dm = 0.0;
        for &(w, g, h) in &table {
            let th = t * h;
            if th == 0.0 {
                continue;
            }
            let ga = g.abs().powf(alpha);
            if th.abs() > 0.5 * g.abs() {
                // Order-one perturbation: direct differences are stable.
                dp += w * ((g + th).abs().powf(alpha) - ga);
                dm += w * ((g - th).abs().powf(alpha) - ga);
            } else {
                let r = th / g;
                dp += w * ga * (alpha * r.ln_1p()).exp_m1();
                dm += w * ga * (alpha * (-r).ln_1p()).exp_m1();
            }
        }
        (dp, dm)
    };
    let b_stable = |t: f64| {
        let ta = t.powf(alpha);
        let (dp, dm) = delta_sums(t);
        let e0 = (s * (ta * nh_pow / ng_pow).ln_1p()).exp_m1();
        let ep = (s * ((ta * head_h + dp) / ng_pow).ln_1p()).exp_m1();
        let em = (s * ((ta * head_h + dm) / ng_pow).ln_1p()).exp_m1();
        ng_pow.powf(s) * (2.0 * e0 - ep - em)
    };
    // B(t) ~ 2 s ng^{s-1} nh t^alpha as t -> 0 and, by the t <-> 1/t mirror
    // with g and h swapped, ~ 2 s nh^{s-1} ng t^{2p-alpha} as t -> infinity.
    // For alpha > 1 the small-t rounding noise of the stable form (~eps t)
    // still outruns the true t^alpha signal at extreme depths, so below
    // 10^{-13/(alpha-1)} the asymptote takes over; the mirrored seam guards
    // nodes past the log-panel cut, which panels never actually reach.
    let b_zero = 2.0 * s * ng_pow.powf(s - 1.0) * nh_pow;
    let b_inf = 2.0 * s * nh_pow.powf(s - 1.0) * ng_pow;
    let t_left = if alpha > 1.0 { 10f64.powf(-13.0 / (alpha - 1.0)) } else { 0.0 };
    let t_right = 10f64.powf(13.0 / alpha);
    let f = |t: f64| {
        let b = if t < t_left {
            b_zero * t.powf(alpha)
        } else if t > t_right {
            b_inf * t.powf(2.0 * p - alpha)
        } else {
            b_stable(t)
        };
        t.powf(-1.0 - p) * b
    };

    // B(t) is a difference of order-ng^s quantities, so its evaluations carry
    // an irreducible rounding floor of roughly 1e-12 relative to that scale;
    // chasing the caller's tolerance below the floor would never terminate.
    // Theta consumers are asymptotic-variance reports, comfortably served by
    // eight digits.
    let tcfg = QuadratureConfig {
        rel_tol: cfg.rel_tol.max(3e-9),
        abs_tol: cfg.abs_tol.max(1e-11 * ng_pow.powf(s)),
        max_level: cfg.max_level,
    };
    // Panels: break at the t = 1 ridge; past t = 2 integrate in log
    // coordinates (the integrand decays like t^{p-alpha-1}, which can stay
    // slow for small alpha, so the cut point grows as alpha shrinks); the
    // remainder beyond big_t is the closed-form integral of the asymptote.
    let big_t = 10f64.powf(12.0 / alpha);
    let mut j = tanh_sinh(&f, 0.0, 1.0, &tcfg)?;
    j += tanh_sinh(&f, 1.0, 2.0, &tcfg)?;
    j += tanh_sinh(
        &|u: f64| {
            let t = 2.0 * u.exp();
            t * f(t)
        },
        0.0,
        (big_t / 2.0).ln(),
        &tcfg,
    )?;
    j += b_inf * big_t.powf(p - alpha) / (alpha - p);

    let ap = a_p(p)?;
    let scale = params.sigma.powf(2.0 * p) * gamma(1.0 - s) / (alpha * s);
    Ok(2.0 * scale * j / (ap * ap))
}
