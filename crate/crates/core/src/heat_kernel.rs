//! Gaussian density, periodized torus heat kernel for the generator ½∂²,
//! the constant Λ(θ), kernel convolution and the increment-variance
//! integrals.
//!
//! Every increment integral has two independent evaluation routes: a
//! one-dimensional form obtained from the semigroup identity
//! `∫_𝕋 G(s, x - y) G(s, y - z) dy = G(2s, x - z)`, and a direct nested
//! two-dimensional quadrature. The second exists to check the first.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::{integrate, integrate_sqrt_lower, integrate_sqrt_upper};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig<R> {
    /// Minimum number of lattice images `K` in `Σ_{|k| ≤ K} p(t, x + k)`.
    /// The effective count is raised adaptively until `p(t, K - 1)` falls
    /// below `quad_abs_tol / 10`.
    pub periodization_terms: usize,
    pub quad_abs_tol: R,
    pub quad_max_subdiv: usize,
}

impl<R: Real> KernelConfig<R> {
    pub fn new(periodization_terms: usize, quad_abs_tol: R, quad_max_subdiv: usize) -> Result<Self> {
        if periodization_terms < 1 {
            return domain("periodization_terms must be at least 1");
        }
        if !(quad_abs_tol > R::zero()) {
            return domain("quad_abs_tol must be positive");
        }
        if quad_max_subdiv < 1 {
            return domain("quad_max_subdiv must be at least 1");
        }
        Ok(Self { periodization_terms, quad_abs_tol, quad_max_subdiv })
    }

    /// Effective lattice truncation at time `t`.
    pub fn lattice_terms(&self, t: R) -> usize {
        let cutoff = self.quad_abs_tol / R::lit(10.0);
        let mut k = self.periodization_terms.max(1);
        while gaussian_unchecked(t, R::from_usize_exact(k - 1)) >= cutoff {
            k += 1;
        }
        k
    }
}

impl Default for KernelConfig<f64> {
    fn default() -> Self {
        Self { periodization_terms: 1, quad_abs_tol: 1e-10, quad_max_subdiv: 4000 }
    }
}

impl Default for KernelConfig<f32> {
    fn default() -> Self {
        Self { periodization_terms: 1, quad_abs_tol: 1e-5, quad_max_subdiv: 4000 }
    }
}

#[inline]
fn gaussian_unchecked<R: Real>(t: R, x: R) -> R {
    let two = R::lit(2.0);
    (-(x * x) / (two * t)).exp() / (two * R::PI() * t).sqrt()
}

/// `p(t, x) = (2πt)^{-1/2} exp(-x² / 2t)`.
pub fn gaussian_density<R: Real>(t: R, x: R) -> Result<R> {
    if !(t > R::zero()) {
        return domain(format!("gaussian_density needs t > 0, got {t}"));
    }
    Ok(gaussian_unchecked(t, x))
}

/// Representative of `x` in `[0, 1)`.
#[inline]
pub fn wrap_unit<R: Real>(x: R) -> R {
    let r = x - x.floor();
    if r >= R::one() {
        R::zero()
    } else {
        r
    }
}

#[inline]
fn torus_unchecked<R: Real>(t: R, x: R, terms: usize) -> R {
    let x = wrap_unit(x);
    let mut sum = gaussian_unchecked(t, x);
    for k in 1..=terms {
        let kf = R::from_usize_exact(k);
        sum = sum + gaussian_unchecked(t, x + kf) + gaussian_unchecked(t, x - kf);
    }
    sum
}

/// Heat kernel on the unit torus, `G(t, x) = Σ_k p(t, x + k)`.
///
/// `x` may be any real; it is reduced to `[0, 1)` first.
pub fn torus_kernel<R: Real>(t: R, x: R, cfg: &KernelConfig<R>) -> Result<R> {
    if !(t > R::zero()) {
        return domain(format!("torus_kernel needs t > 0, got {t}"));
    }
    Ok(torus_unchecked(t, x, cfg.lattice_terms(t)))
}

/// Evaluator with the lattice truncation fixed for one time value.
#[derive(Debug, Clone, Copy)]
pub struct TorusKernelAt<R> {
    t: R,
    terms: usize,
}

impl<R: Real> TorusKernelAt<R> {
    pub fn new(t: R, cfg: &KernelConfig<R>) -> Result<Self> {
        if !(t > R::zero()) {
            return domain(format!("torus kernel needs t > 0, got {t}"));
        }
        Ok(Self { t, terms: cfg.lattice_terms(t) })
    }

    #[inline]
    pub fn eval(&self, x: R) -> R {
        torus_unchecked(self.t, x, self.terms)
    }
}

// Kernel evaluation inside quadrature loops where t > 0 is guaranteed by
// construction (t = 0 only at measure-zero endpoints, handled as 0).
#[inline]
fn g_at<R: Real>(t: R, x: R, cfg: &KernelConfig<R>) -> R {
    if t > R::zero() {
        torus_unchecked(t, x, cfg.lattice_terms(t))
    } else {
        R::zero()
    }
}

fn check_theta<R: Real>(theta: R) -> Result<()> {
    if !(theta > R::zero() && theta <= R::lit(0.5)) {
        return domain(format!("theta must lie in (0, 1/2], got {theta}"));
    }
    Ok(())
}

/// `Λ(θ) = ∫_ℝ p(1, w) |w|^{1/2-θ} dw = E|Z|^a = 2^{a/2} Γ((1 + a)/2) / √π`
/// with `a = 1/2 - θ`.
pub fn lambda_theta<R: Real>(theta: R) -> Result<R> {
    check_theta(theta)?;
    let th = theta.to_f64_lossy();
    if th == 0.5 {
        return Ok(R::one());
    }
    let a = 0.5 - th;
    let v = 2f64.powf(0.5 * a) * statrs::function::gamma::gamma(0.5 * (1.0 + a)) / std::f64::consts::PI.sqrt();
    Ok(R::lit(v))
}

/// The expression `2^{1/2-θ} Γ(1-θ) / √π`. It agrees with [`lambda_theta`]
/// only at `θ = 1/2`; kept for comparison.
pub fn lambda_theta_gamma_form<R: Real>(theta: R) -> Result<R> {
    check_theta(theta)?;
    let th = theta.to_f64_lossy();
    if th == 0.5 {
        return Ok(R::one());
    }
    let v = 2f64.powf(0.5 - th) * statrs::function::gamma::gamma(1.0 - th) / std::f64::consts::PI.sqrt();
    Ok(R::lit(v))
}

/// `Λ(θ) = ∫_ℝ p(1, w) |w|^{1/2-θ} dw` by quadrature (substitution `w = r²`
/// on the half line).
pub fn lambda_theta_quadrature<R: Real>(theta: R, cfg: &KernelConfig<R>) -> Result<R> {
    check_theta(theta)?;
    let a = R::lit(0.5) - theta;
    let two = R::lit(2.0);
    // p(1, w) < 1e-300 beyond w = 37, i.e. r = √37 < 6.1.
    let r = integrate(
        |r: R| {
            let w = r * r;
            two * two * r * gaussian_unchecked(R::one(), w) * w.powf(a)
        },
        R::zero(),
        R::lit(6.5),
        &[],
        cfg.quad_abs_tol,
        cfg.quad_max_subdiv,
    );
    Ok(r.value)
}

/// Circulant weights `w_m ∝ G(t, m/n)`, normalized to unit mass.
pub fn kernel_weights<R: Real>(n: usize, t: R, cfg: &KernelConfig<R>) -> Result<Vec<R>> {
    if n == 0 {
        return domain("kernel_weights needs at least one grid point");
    }
    if t < R::zero() {
        return domain(format!("kernel convolution needs t >= 0, got {t}"));
    }
    let mut w = vec![R::zero(); n];
    if t == R::zero() {
        w[0] = R::one();
        return Ok(w);
    }
    let g = TorusKernelAt::new(t, cfg)?;
    let nf = R::from_usize_exact(n);
    for (m, wm) in w.iter_mut().enumerate() {
        *wm = g.eval(R::from_usize_exact(m) / nf);
    }
    let total: R = w.iter().copied().sum();
    if !(total > R::zero()) {
        // kernel narrower than the grid resolves; identity
        w.iter_mut().for_each(|v| *v = R::zero());
        w[0] = R::one();
        return Ok(w);
    }
    w.iter_mut().for_each(|v| *v = *v / total);
    Ok(w)
}

/// Apply circulant weights: `out_i = Σ_m w_m f_{i-m}`.
pub fn circulant_apply<R: Real>(weights: &[R], f: &[R]) -> Vec<R> {
    let n = f.len();
    debug_assert_eq!(weights.len(), n);
    (0..n)
        .map(|i| {
            let mut acc = R::zero();
            for (m, &w) in weights.iter().enumerate() {
                let j = (i + n - m) % n;
                acc = acc + w * f[j];
            }
            acc
        })
        .collect()
}

/// `(G_t * u0)` on the uniform torus grid carrying `u0`.
///
/// The kernel is sampled on the grid and renormalized to unit mass, so the
/// result is a convex combination of grid shifts of `u0`: constants and the
/// spatial mean are preserved exactly and the torus-metric Hölder semi-norm
/// cannot increase. `t = 0` returns `u0` unchanged.
pub fn kernel_convolve<R: Real>(u0: &[R], t: R, cfg: &KernelConfig<R>) -> Result<Vec<R>> {
    if u0.is_empty() {
        return domain("kernel_convolve needs a non-empty grid function");
    }
    if t == R::zero() {
        return Ok(u0.to_vec());
    }
    let w = kernel_weights(u0.len(), t, cfg)?;
    Ok(circulant_apply(&w, u0))
}

/// The three increment-variance integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncrementIntegral<R> {
    /// `∫_0^{t1} ∫_𝕋 [G(s, y + δ) - G(s, y)]² dy ds`
    SpatialShift { t1: R, delta: R },
    /// `∫_s^t ∫_𝕋 G(r, x)² dx dr`
    TimeWindow { s: R, t: R },
    /// `∫_0^s ∫_𝕋 [G(t - r, z) - G(s - r, z)]² dz dr`
    TimeCross { s: R, t: R },
}

impl<R: Real> IncrementIntegral<R> {
    fn validate(&self) -> Result<()> {
        match *self {
            IncrementIntegral::SpatialShift { t1, delta } => {
                if t1 < R::zero() || !delta.is_finite() {
                    return domain("spatial_shift needs t1 >= 0 and finite delta");
                }
            }
            IncrementIntegral::TimeWindow { s, t } | IncrementIntegral::TimeCross { s, t } => {
                if s < R::zero() || t < s {
                    return domain(format!("time integrals need 0 <= s <= t, got s = {s}, t = {t}"));
                }
            }
        }
        Ok(())
    }
}

/// Increment integral through the semigroup reduction to one dimension.
pub fn increment_variance_quadrature<R: Real>(kind: IncrementIntegral<R>, cfg: &KernelConfig<R>) -> Result<R> {
    kind.validate()?;
    let tol = cfg.quad_abs_tol;
    let max = cfg.quad_max_subdiv;
    let two = R::lit(2.0);
    let v = match kind {
        IncrementIntegral::SpatialShift { t1, delta } => {
            let delta = wrap_unit(delta);
            if delta == R::zero() || t1 == R::zero() {
                return Ok(R::zero());
            }
            integrate_sqrt_lower(
                |s: R| two * (g_at(two * s, R::zero(), cfg) - g_at(two * s, delta, cfg)),
                R::zero(),
                t1,
                tol,
                max,
            )
            .value
        }
        IncrementIntegral::TimeWindow { s, t } => {
            integrate_sqrt_lower(|r: R| g_at(two * r, R::zero(), cfg), s, t, tol, max).value
        }
        IncrementIntegral::TimeCross { s, t } => {
            if s == t || s == R::zero() {
                return Ok(R::zero());
            }
            let gap = t - s;
            integrate_sqrt_lower(
                |u: R| {
                    g_at(two * (gap + u), R::zero(), cfg) + g_at(two * u, R::zero(), cfg)
                        - two * g_at(gap + two * u, R::zero(), cfg)
                },
                R::zero(),
                s,
                tol,
                max,
            )
            .value
        }
    };
    Ok(v)
}

// ∫ over one period of a 1-periodic integrand concentrated near `peaks`
// with width `width`; breakpoints at fixed multiples of the width keep the
// Kronrod nodes from stepping over a narrow peak.
fn periodic_inner<R: Real, F: FnMut(R) -> R>(f: F, peaks: &[R], width: R, tol: R, max: usize) -> R {
    let half = R::lit(0.5);
    let centre = peaks[0];
    let (lo, hi) = (centre - half, centre + half);
    let mut breaks = Vec::new();
    for &p in peaks {
        let p = lo + wrap_unit(p - lo);
        for m in [-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0] {
            breaks.push(p + R::lit(m) * width);
        }
    }
    integrate(f, lo, hi, &breaks, tol, max).value
}

/// Increment integral by direct nested quadrature over time and space.
pub fn increment_variance_direct<R: Real>(kind: IncrementIntegral<R>, cfg: &KernelConfig<R>) -> Result<R> {
    kind.validate()?;
    let tol = cfg.quad_abs_tol;
    let max = cfg.quad_max_subdiv;
    let inner_tol = tol * R::lit(0.05);
    let at = |t: R| TorusKernelAt { t, terms: cfg.lattice_terms(t) };
    let v = match kind {
        IncrementIntegral::SpatialShift { t1, delta } => {
            let delta = wrap_unit(delta);
            if delta == R::zero() || t1 == R::zero() {
                return Ok(R::zero());
            }
            integrate_sqrt_lower(
                |s: R| {
                    if s <= R::zero() {
                        return R::zero();
                    }
                    let g = at(s);
                    periodic_inner(
                        |y: R| {
                            let d = g.eval(y + delta) - g.eval(y);
                            d * d
                        },
                        &[R::zero(), -delta],
                        s.sqrt(),
                        inner_tol,
                        max,
                    )
                },
                R::zero(),
                t1,
                tol,
                max,
            )
            .value
        }
        IncrementIntegral::TimeWindow { s, t } => {
            integrate_sqrt_lower(
                |r: R| {
                    if r <= R::zero() {
                        return R::zero();
                    }
                    let g = at(r);
                    periodic_inner(
                        |x: R| {
                            let v = g.eval(x);
                            v * v
                        },
                        &[R::zero()],
                        r.sqrt(),
                        inner_tol,
                        max,
                    )
                },
                s,
                t,
                tol,
                max,
            )
            .value
        }
        IncrementIntegral::TimeCross { s, t } => {
            if s == t || s == R::zero() {
                return Ok(R::zero());
            }
            integrate_sqrt_upper(
                |r: R| {
                    let late_t = s - r;
                    if late_t <= R::zero() {
                        return R::zero();
                    }
                    let early = at(t - r);
                    let late = at(late_t);
                    periodic_inner(
                        |z: R| {
                            let d = early.eval(z) - late.eval(z);
                            d * d
                        },
                        &[R::zero()],
                        late_t.sqrt(),
                        inner_tol,
                        max,
                    )
                },
                R::zero(),
                s,
                tol,
                max,
            )
            .value
        }
    };
    Ok(v)
}
