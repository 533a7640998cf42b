//! Covariance structure of the spatial noise increments
//! `Δ̃_k = N(t1, x_k + δ) - N(t1, x_k)` on the lattice
//! `δ = ε^{1/θ}`, `t1 = c0 δ²`, `x_j = j c1 δ`, `J = ⌊1 / (c1 δ)⌋`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::heat_kernel::{wrap_unit, KernelConfig, TorusKernelAt};
use crate::quadrature::{integrate, integrate_sqrt_lower};
use crate::solver::{SigmaKind, SigmaSpec};
use crate::stats::normal_central_mass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementScheme {
    pub epsilon: f64,
    pub theta: f64,
    pub c0: f64,
    pub c1: f64,
}

impl IncrementScheme {
    pub fn new(epsilon: f64, theta: f64, c0: f64, c1: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return domain(format!("epsilon must lie in (0, 1), got {epsilon}"));
        }
        if !(theta > 0.0 && theta <= 0.5) {
            return domain(format!("theta must lie in (0, 1/2], got {theta}"));
        }
        if !(c0 > 0.0) || !(c1 > 0.0) {
            return domain("c0 and c1 must be positive");
        }
        let me = Self { epsilon, theta, c0, c1 };
        if me.j_count() < 1 {
            return domain("c1·δ exceeds the torus: J = 0");
        }
        Ok(me)
    }

    pub fn delta(&self) -> f64 {
        self.epsilon.powf(1.0 / self.theta)
    }

    pub fn t1(&self) -> f64 {
        self.c0 * self.delta() * self.delta()
    }

    pub fn j_count(&self) -> usize {
        (1.0 / (self.c1 * self.delta())).floor() as usize
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 * self.c1 * self.delta()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.j_count()).map(|j| self.point(j)).collect()
    }

    /// Threshold `ε^{1/(2θ)} = √δ` of the events `|Δ_j| ≤ ε^{1/(2θ)}`.
    pub fn threshold(&self) -> f64 {
        self.epsilon.powf(0.5 / self.theta)
    }
}

fn require_gaussian(sigma: &SigmaSpec<f64>) -> Result<()> {
    if sigma.kind() == SigmaKind::UDependent {
        return Err(Error::Precondition("increment covariances need σ independent of u".into()));
    }
    Ok(())
}

/// `∫_0^{t1} [2G(2r, a) - G(2r, a + δ) - G(2r, a - δ)] dr`, the covariance
/// of two increments at offset `a` for `σ ≡ 1`.
pub fn unit_covariance_reduced(t1: f64, delta: f64, a: f64, cfg: &KernelConfig<f64>) -> f64 {
    let g = |t: f64, x: f64| {
        if t <= 0.0 {
            0.0
        } else {
            TorusKernelAt::new(t, cfg).expect("t > 0").eval(x)
        }
    };
    integrate_sqrt_lower(
        |r| 2.0 * g(2.0 * r, a) - g(2.0 * r, a + delta) - g(2.0 * r, a - delta),
        0.0,
        t1,
        cfg.quad_abs_tol,
        cfg.quad_max_subdiv,
    )
    .value
}

/// `∫_0^{t1} ∫_𝕋 σ(s, y)² K_k(s, y) K_l(s, y) dy ds` with
/// `K_j(s, y) = G(t1 - s, x_j + δ - y) - G(t1 - s, x_j - y)`.
pub fn weighted_covariance_direct(
    t1: f64,
    delta: f64,
    xk: f64,
    xl: f64,
    sigma: &SigmaSpec<f64>,
    cfg: &KernelConfig<f64>,
) -> Result<f64> {
    require_gaussian(sigma)?;
    let tol = cfg.quad_abs_tol;
    let max = cfg.quad_max_subdiv;
    let peaks = [xk, xk + delta, xl, xl + delta];
    let v = integrate_sqrt_lower(
        |r| {
            if r <= 0.0 {
                return 0.0;
            }
            let g = TorusKernelAt::new(r, cfg).expect("r > 0");
            let s = t1 - r;
            let w = r.sqrt();
            let lo = xk - 0.5;
            let mut breaks = Vec::with_capacity(28);
            for &p in &peaks {
                let p = lo + wrap_unit(p - lo);
                for m in [-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0] {
                    breaks.push(p + m * w);
                }
            }
            integrate(
                |y| {
                    let kk = g.eval(xk + delta - y) - g.eval(xk - y);
                    let kl = g.eval(xl + delta - y) - g.eval(xl - y);
                    let sg = sigma.eval(s, wrap_unit(y), 0.0);
                    sg * sg * kk * kl
                },
                lo,
                lo + 1.0,
                &breaks,
                tol * 0.05,
                max,
            )
            .value
        },
        0.0,
        t1,
        tol,
        max,
    )
    .value;
    Ok(v)
}

/// `Cov(Δ̃_k, Δ̃_l)` for a `(t, x)`-dependent σ. Constant σ goes through the
/// one-dimensional semigroup form; anything else through the direct
/// two-dimensional quadrature.
pub fn increment_covariance(
    k: usize,
    l: usize,
    scheme: &IncrementScheme,
    sigma: &SigmaSpec<f64>,
    cfg: &KernelConfig<f64>,
) -> Result<f64> {
    require_gaussian(sigma)?;
    let j = scheme.j_count();
    if k > j || l > j {
        return domain(format!("increment indices ({k}, {l}) exceed J = {j}"));
    }
    let (xk, xl) = (scheme.point(k), scheme.point(l));
    match sigma.constant_value() {
        Some(c) => Ok(c * c * unit_covariance_reduced(scheme.t1(), scheme.delta(), xk - xl, cfg)),
        None => weighted_covariance_direct(scheme.t1(), scheme.delta(), xk, xl, sigma, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub j: usize,
    pub delta: f64,
    pub t1: f64,
    /// `S_{kl} = Cov(Δ̃_k, Δ̃_l)`, row-major.
    pub s: Vec<Vec<f64>>,
    /// Standard deviations, the diagonal of `D`.
    pub d: Vec<f64>,
    /// `A = I - D^{-1} S D^{-1}`.
    pub a: Vec<Vec<f64>>,
    pub a_norm_11: f64,
    /// `‖S^{-1}‖_{1,1}` from the computed inverse.
    pub s_inv_norm_11: Option<f64>,
    /// `‖D^{-1}‖² / (1 - ‖A‖)`, present when `‖A‖_{1,1} < 1`.
    pub s_inv_neumann_bound: Option<f64>,
    /// `Var(Δ̃_j | Δ̃_0, …, Δ̃_{j-1})`.
    pub conditional_variances: Vec<f64>,
    pub singular: bool,
}

/// Induced `ℓ¹` norm: the largest absolute column sum.
pub fn norm_11(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Pivots of an in-place Cholesky factorization, `L_jj²`, which are the
/// successive conditional variances. Stops at the first non-positive pivot.
pub fn schur_conditional_variances(s: &DMatrix<f64>) -> (Vec<f64>, bool) {
    let n = s.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut out = Vec::with_capacity(n);
    let scale = (0..n).map(|i| s[(i, i)].abs()).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 1e-14 * scale {
            out.push(d.max(0.0));
            out.extend(std::iter::repeat_n(0.0, n - j - 1));
            return (out, true);
        }
        out.push(d);
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    (out, false)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Covariance matrix of `Δ̃_0, …, Δ̃_{J-1}` and derived quantities.
pub fn covariance_matrix(scheme: &IncrementScheme, sigma: &SigmaSpec<f64>, cfg: &KernelConfig<f64>) -> Result<DMatrix<f64>> {
    require_gaussian(sigma)?;
    let j = scheme.j_count();
    let mut s = DMatrix::zeros(j, j);
    if sigma.constant_value().is_some() {
        // stationary in x: one entry per lag
        let lags: Vec<f64> = (0..j)
            .into_par_iter()
            .map(|m| increment_covariance(m, 0, scheme, sigma, cfg))
            .collect::<Result<_>>()?;
        for a in 0..j {
            for b in 0..j {
                s[(a, b)] = lags[a.abs_diff(b)];
            }
        }
    } else {
        let pairs: Vec<(usize, usize)> = (0..j).flat_map(|a| (a..j).map(move |b| (a, b))).collect();
        let vals: Vec<f64> = pairs
            .par_iter()
            .map(|&(a, b)| increment_covariance(a, b, scheme, sigma, cfg))
            .collect::<Result<_>>()?;
        for (&(a, b), v) in pairs.iter().zip(vals) {
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    Ok(s)
}

pub fn covariance_report(scheme: &IncrementScheme, sigma: &SigmaSpec<f64>, cfg: &KernelConfig<f64>) -> Result<CovarianceReport> {
    let s = covariance_matrix(scheme, sigma, cfg)?;
    Ok(report_from_matrix(scheme, s))
}

pub fn report_from_matrix(scheme: &IncrementScheme, s: DMatrix<f64>) -> CovarianceReport {
    let j = s.nrows();
    let d: Vec<f64> = (0..j).map(|i| s[(i, i)].max(0.0).sqrt()).collect();
    let mut a = DMatrix::identity(j, j);
    for r in 0..j {
        for c in 0..j {
            a[(r, c)] -= s[(r, c)] / (d[r] * d[c]);
        }
    }
    let a_norm = norm_11(&a);
    let (cond, singular) = schur_conditional_variances(&s);
    let s_inv_norm_11 = if singular { None } else { s.clone().try_inverse().map(|inv| norm_11(&inv)) };
    let dinv = d.iter().map(|v| 1.0 / v).fold(0.0, f64::max);
    let s_inv_neumann_bound = (a_norm < 1.0).then(|| dinv * dinv / (1.0 - a_norm));
    CovarianceReport {
        j,
        delta: scheme.delta(),
        t1: scheme.t1(),
        s: to_rows(&s),
        d,
        a: to_rows(&a),
        a_norm_11: a_norm,
        s_inv_norm_11,
        s_inv_neumann_bound,
        conditional_variances: cond,
        singular: singular || s_inv_norm_11.is_none(),
    }
}

/// `η = P(|Z| ≤ ε^{1/(2θ)} / √(min_j Var(Δ̃_j | Δ̃_{<j})))`.
pub fn eta_from_variances(scheme: &IncrementScheme, conditional_variances: &[f64]) -> Result<f64> {
    let min = conditional_variances.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || !min.is_finite() {
        return Err(Error::Insufficient(format!("degenerate conditional variance {min}")));
    }
    Ok(normal_central_mass(scheme.threshold() / min.sqrt()))
}

pub fn eta_bound(scheme: &IncrementScheme, sigma: &SigmaSpec<f64>, cfg: &KernelConfig<f64>) -> Result<f64> {
    let report = covariance_report(scheme, sigma, cfg)?;
    eta_from_variances(scheme, &report.conditional_variances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scheme_geometry() {
        let s = IncrementScheme::new(0.4, 0.35, 1.0, 4.0).unwrap();
        assert_abs_diff_eq!(s.delta(), 0.4f64.powf(1.0 / 0.35), epsilon = 1e-15);
        assert_eq!(s.j_count(), 3);
        assert_abs_diff_eq!(s.threshold() * s.threshold(), s.delta(), epsilon = 1e-15);
        assert!(IncrementScheme::new(1.2, 0.3, 1.0, 4.0).is_err());
        assert!(IncrementScheme::new(0.9, 0.5, 1.0, 4.0).is_err());
    }

    #[test]
    fn cholesky_pivots_are_conditional_variances() {
        // 2×2: Var(X2 | X1) = s22 - s12² / s11
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let (c, singular) = schur_conditional_variances(&s);
        assert!(!singular);
        assert_abs_diff_eq!(c[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1], 1.0 - 0.36 / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_matrix_reported() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(schur_conditional_variances(&s).1);
    }

    #[test]
    fn eta_one_sigma() {
        let s = IncrementScheme::new(0.3, 0.3, 1.0, 4.0).unwrap();
        let eta = eta_from_variances(&s, &[s.delta(), 2.0 * s.delta()]).unwrap();
        assert_abs_diff_eq!(eta, 0.682_689_492_137_086, epsilon = 1e-10);
        assert!(eta_from_variances(&s, &[1e12]).unwrap() < 1e-6);
        assert!(eta_from_variances(&s, &[0.0]).is_err());
    }

    #[test]
    fn u_dependent_sigma_refused() {
        let s = IncrementScheme::new(0.3, 0.3, 1.0, 4.0).unwrap();
        let sig = SigmaSpec::sin_u(1.0, 0.2).unwrap();
        assert!(increment_covariance(0, 0, &s, &sig, &KernelConfig::default()).is_err());
    }
}
