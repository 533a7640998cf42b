//! Path solvers.
//!
//! `solve_fd` is the semi-implicit scheme
//!
//! ```text
//!     (I - dt/2 Δ_h) u^{n+1} = u^n + dt g(t_n, ·) + σ(t_n, ·, u^n) ΔW_n / dx
//! ```
//!
//! with the periodic three-point Laplacian, solved exactly by a cyclic
//! Thomas sweep. `solve_spectral_constant` samples the Fourier-mode system
//! of the constant-σ equation exactly in law at the grid times.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{stream_rng, FieldPath, Grid, NoiseField, SeedRecord};
use crate::heat_kernel::{kernel_convolve, KernelConfig};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    Constant,
    TxDependent,
    UDependent,
}

pub type SigmaFn<R> = Arc<dyn Fn(R, R, R) -> R + Send + Sync>;
pub type DriftFn<R> = Arc<dyn Fn(R, R) -> R + Send + Sync>;

/// Named noise coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum SigmaPreset {
    /// `σ ≡ value`
    Const { value: f64 },
    /// `σ(t, x) = a + b cos(2π(x - t))`
    TxCos { a: f64, b: f64 },
    /// `σ(u) = a + b sin(u)`
    SinU { a: f64, b: f64 },
}

impl SigmaPreset {
    pub fn build<R: Real>(&self) -> Result<SigmaSpec<R>> {
        match *self {
            SigmaPreset::Const { value } => SigmaSpec::constant(R::lit(value)),
            SigmaPreset::TxCos { a, b } => SigmaSpec::tx_cos(R::lit(a), R::lit(b)),
            SigmaPreset::SinU { a, b } => SigmaSpec::sin_u(R::lit(a), R::lit(b)),
        }
    }
}

/// Noise coefficient `σ(t, x, u)` with ellipticity bounds `c1 ≤ σ ≤ c2`
/// and Lipschitz constant `lip` in `u`.
#[derive(Clone)]
pub struct SigmaSpec<R> {
    kind: SigmaKind,
    evaluator: SigmaFn<R>,
    c1: R,
    c2: R,
    lip: R,
}

impl<R: Real> fmt::Debug for SigmaSpec<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigmaSpec")
            .field("kind", &self.kind)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("lip", &self.lip)
            .finish_non_exhaustive()
    }
}

const LATTICE_T: usize = 20;
const LATTICE_X: usize = 20;
const LATTICE_U: usize = 25;
const LATTICE_U_RANGE: f64 = 10.0;

impl<R: Real> SigmaSpec<R> {
    /// Build a coefficient and check the declared bounds on a
    /// `20 × 20 × 25` lattice of `(t, x, u) ∈ [0, 1] × [0, 1) × [-10, 10]`.
    pub fn new(kind: SigmaKind, evaluator: SigmaFn<R>, c1: R, c2: R, lip: R) -> Result<Self> {
        if !(c1 > R::zero()) || c2 < c1 {
            return domain(format!("need 0 < c1 <= c2, got c1 = {c1}, c2 = {c2}"));
        }
        if lip < R::zero() {
            return domain("lip must be non-negative");
        }
        if kind == SigmaKind::Constant && lip != R::zero() {
            return domain("a constant sigma has lip = 0");
        }
        let spec = Self { kind, evaluator, c1, c2, lip };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let slack = R::lit(1e-9) * (R::one() + self.c2);
        let us: Vec<R> = (0..LATTICE_U)
            .map(|k| R::lit(-LATTICE_U_RANGE + 2.0 * LATTICE_U_RANGE * k as f64 / (LATTICE_U - 1) as f64))
            .collect();
        for i in 0..LATTICE_T {
            let t = R::lit(i as f64 / (LATTICE_T - 1) as f64);
            for j in 0..LATTICE_X {
                let x = R::lit(j as f64 / LATTICE_X as f64);
                let vals: Vec<R> = us.iter().map(|&u| self.eval(t, x, u)).collect();
                for (k, &v) in vals.iter().enumerate() {
                    if !(v >= self.c1 - slack && v <= self.c2 + slack) {
                        return domain(format!(
                            "sigma({t}, {x}, {}) = {v} outside [{}, {}]",
                            us[k], self.c1, self.c2
                        ));
                    }
                }
                for k in 0..LATTICE_U {
                    for l in (k + 1)..LATTICE_U {
                        let bound = self.lip * (us[l] - us[k]).abs() + slack;
                        if (vals[l] - vals[k]).abs() > bound {
                            return domain(format!(
                                "sigma violates lip = {} between u = {} and u = {}",
                                self.lip, us[k], us[l]
                            ));
                        }
                    }
                }
                if self.kind != SigmaKind::UDependent && vals.iter().any(|&v| v != vals[0]) {
                    return domain("sigma declared independent of u depends on u");
                }
            }
        }
        Ok(())
    }

    pub fn constant(value: R) -> Result<Self> {
        Self::new(SigmaKind::Constant, Arc::new(move |_, _, _| value), value, value, R::zero())
    }

    pub fn tx_cos(a: R, b: R) -> Result<Self> {
        let two_pi = R::lit(2.0) * R::PI();
        Self::new(
            SigmaKind::TxDependent,
            Arc::new(move |t, x, _| a + b * (two_pi * (x - t)).cos()),
            a - b.abs(),
            a + b.abs(),
            R::zero(),
        )
    }

    pub fn sin_u(a: R, b: R) -> Result<Self> {
        Self::new(SigmaKind::UDependent, Arc::new(move |_, _, u| a + b * u.sin()), a - b.abs(), a + b.abs(), b.abs())
    }

    /// `σ̃(t, x, v) = σ(t, x, v + h(t, x))`, the coefficient of `u - h`.
    pub fn shifted(&self, h: DriftFn<R>) -> Result<Self> {
        let inner = self.evaluator.clone();
        let kind = if self.kind == SigmaKind::UDependent { SigmaKind::UDependent } else { self.kind };
        let spec = Self {
            kind,
            evaluator: Arc::new(move |t, x, v| inner(t, x, v + h(t, x))),
            c1: self.c1,
            c2: self.c2,
            lip: self.lip,
        };
        Ok(spec)
    }

    #[inline]
    pub fn eval(&self, t: R, x: R, u: R) -> R {
        (self.evaluator)(t, x, u)
    }

    pub fn kind(&self) -> SigmaKind {
        self.kind
    }

    pub fn c1(&self) -> R {
        self.c1
    }

    pub fn c2(&self) -> R {
        self.c2
    }

    pub fn lip(&self) -> R {
        self.lip
    }

    /// The constant value, when `kind` is `Constant`.
    pub fn constant_value(&self) -> Option<R> {
        (self.kind == SigmaKind::Constant).then_some(self.c1)
    }
}

/// Bounded deterministic drift `g(t, x)`, `|g| ≤ bound`.
#[derive(Clone)]
pub struct DriftSpec<R> {
    evaluator: DriftFn<R>,
    bound: R,
}

impl<R: Real> fmt::Debug for DriftSpec<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec").field("bound", &self.bound).finish_non_exhaustive()
    }
}

impl<R: Real> DriftSpec<R> {
    /// Build a drift and check `|g| ≤ bound` on a `100 × 100` lattice of
    /// `[0, 1] × [0, 1)`.
    pub fn new(evaluator: DriftFn<R>, bound: R) -> Result<Self> {
        if bound < R::zero() {
            return domain("drift bound must be non-negative");
        }
        let slack = R::lit(1e-9) * (R::one() + bound);
        for i in 0..100 {
            for j in 0..100 {
                let t = R::lit(i as f64 / 99.0);
                let x = R::lit(j as f64 / 100.0);
                let g = evaluator(t, x);
                if !(g.abs() <= bound + slack) {
                    return domain(format!("|g({t}, {x})| = {} exceeds bound {bound}", g.abs()));
                }
            }
        }
        Ok(Self { evaluator, bound })
    }

    /// Drift tabulated on a grid: `table[[n, j]]` is used for
    /// `t ∈ [t_n, t_{n+1})` at cell `j`. Skips the lattice check; the bound
    /// is the table's sup.
    pub fn tabulated(grid: &Grid, table: Array2<R>) -> Result<Self> {
        if table.dim() != (grid.n_t(), grid.n_x()) {
            return Err(Error::GridMismatch("drift table shape does not match grid".into()));
        }
        let bound = table.iter().fold(R::zero(), |m, v| m.max(v.abs()));
        let dt = R::lit(grid.dt());
        let n_x = grid.n_x();
        let n_t = grid.n_t();
        let table = Arc::new(table);
        let evaluator: DriftFn<R> = Arc::new(move |t, x| {
            let n = (t / dt + R::lit(1e-9)).floor().to_usize().unwrap_or(0).min(n_t - 1);
            let j = (x * R::from_usize_exact(n_x) + R::lit(0.5)).floor().to_usize().unwrap_or(0) % n_x;
            table[[n, j]]
        });
        Ok(Self { evaluator, bound })
    }

    #[inline]
    pub fn eval(&self, t: R, x: R) -> R {
        (self.evaluator)(t, x)
    }

    pub fn bound(&self) -> R {
        self.bound
    }
}

/// Named drifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum DriftPreset {
    Const { value: f64 },
    /// `g(t, x) = amp sin(2πx)`
    SinX { amp: f64 },
}

impl DriftPreset {
    pub fn build<R: Real>(&self) -> Result<DriftSpec<R>> {
        match *self {
            DriftPreset::Const { value } => {
                let v = R::lit(value);
                DriftSpec::new(Arc::new(move |_, _| v), v.abs())
            }
            DriftPreset::SinX { amp } => {
                let a = R::lit(amp);
                let two_pi = R::lit(2.0) * R::PI();
                DriftSpec::new(Arc::new(move |_, x| a * (two_pi * x).sin()), a.abs())
            }
        }
    }
}

/// Exact solver for the constant-coefficient cyclic tridiagonal system with
/// diagonal `d` and both off-diagonals `e` (Sherman–Morrison around a
/// Thomas sweep).
#[derive(Debug, Clone)]
struct CyclicTridiagonal<R> {
    n: usize,
    off: R,
    gamma: R,
    // Thomas forward factors for the modified matrix
    cprime: Vec<R>,
    denom: Vec<R>,
    z: Vec<R>,
    z_fact: R,
}

impl<R: Real> CyclicTridiagonal<R> {
    fn new(n: usize, d: R, e: R) -> Self {
        let gamma = -d;
        let mut diag = vec![d; n];
        diag[0] = d - gamma;
        diag[n - 1] = d - e * e / gamma;
        let mut cprime = vec![R::zero(); n];
        let mut denom = vec![R::zero(); n];
        denom[0] = diag[0];
        cprime[0] = e / denom[0];
        for i in 1..n {
            denom[i] = diag[i] - e * cprime[i - 1];
            cprime[i] = e / denom[i];
        }
        let mut me = Self { n, off: e, gamma, cprime, denom, z: vec![], z_fact: R::zero() };
        let mut u = vec![R::zero(); n];
        u[0] = gamma;
        u[n - 1] = e;
        let z = me.thomas(&u);
        me.z_fact = R::one() + z[0] + e * z[n - 1] / gamma;
        me.z = z;
        me
    }

    fn thomas(&self, rhs: &[R]) -> Vec<R> {
        let n = self.n;
        let e = self.off;
        let mut y = vec![R::zero(); n];
        y[0] = rhs[0] / self.denom[0];
        for i in 1..n {
            y[i] = (rhs[i] - e * y[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            y[i] = y[i] - self.cprime[i] * y[i + 1];
        }
        y
    }

    fn solve(&self, rhs: &[R]) -> Vec<R> {
        let mut x = self.thomas(rhs);
        let n = self.n;
        let fact = (x[0] + self.off * x[n - 1] / self.gamma) / self.z_fact;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi = *xi - fact * *zi;
        }
        x
    }
}

/// One step of the semi-implicit scheme, reusable across blocks.
#[derive(Clone)]
pub struct FdStepper<R> {
    grid: Grid,
    sigma: SigmaSpec<R>,
    drift: Option<DriftSpec<R>>,
    system: CyclicTridiagonal<R>,
    inv_dx: R,
    dt: R,
    xs: Vec<R>,
}

impl<R: Real> FdStepper<R> {
    pub fn new(grid: &Grid, sigma: &SigmaSpec<R>, drift: Option<&DriftSpec<R>>) -> Self {
        let dt = R::lit(grid.dt());
        let dx = R::lit(grid.dx());
        let r = dt / (dx * dx);
        let half = R::lit(0.5);
        let system = CyclicTridiagonal::new(grid.n_x(), R::one() + r, -half * r);
        Self {
            grid: *grid,
            sigma: sigma.clone(),
            drift: drift.cloned(),
            system,
            inv_dx: R::one() / dx,
            dt,
            xs: grid.points().into_iter().map(R::lit).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Advance `u = u^n` to `u^{n+1}` using the noise row `dw`.
    pub fn step(&self, n: usize, u: &[R], dw: &[f64]) -> Result<Vec<R>> {
        let t = R::lit(self.grid.time(n));
        let mut rhs: Vec<R> = u
            .iter()
            .zip(&self.xs)
            .zip(dw)
            .map(|((&ui, &x), &w)| ui + self.sigma.eval(t, x, ui) * R::lit(w) * self.inv_dx)
            .collect();
        if let Some(g) = &self.drift {
            for (ri, &x) in rhs.iter_mut().zip(&self.xs) {
                *ri = *ri + self.dt * g.eval(t, x);
            }
        }
        let next = self.system.solve(&rhs);
        if let Some(j) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical { step: n + 1, detail: format!("non-finite value at cell {j}") });
        }
        Ok(next)
    }

    /// Deterministic step `A u = (I - dt/2 Δ_h)^{-1} u`.
    pub fn heat_step(&self, u: &[R]) -> Vec<R> {
        self.system.solve(u)
    }
}

pub fn solve_fd<R: Real>(
    grid: &Grid,
    sigma: &SigmaSpec<R>,
    u0: &[R],
    drift: Option<&DriftSpec<R>>,
    noise: &NoiseField,
) -> Result<FieldPath<R>> {
    if noise.grid() != grid {
        return Err(Error::GridMismatch("noise field lives on a different grid".into()));
    }
    check_profile(grid, u0)?;
    let stepper = FdStepper::new(grid, sigma, drift);
    let mut values = Array2::zeros((grid.n_t() + 1, grid.n_x()));
    values.row_mut(0).assign(&ndarray::ArrayView1::from(u0));
    let mut u = u0.to_vec();
    for n in 0..grid.n_t() {
        let dw = noise.row(n);
        u = stepper.step(n, &u, dw.as_slice().expect("contiguous row"))?;
        values.row_mut(n + 1).assign(&ndarray::ArrayView1::from(&u[..]));
    }
    FieldPath::new(*grid, values, noise.seed())
}

fn check_profile<R: Real>(grid: &Grid, u0: &[R]) -> Result<()> {
    if u0.len() != grid.n_x() {
        return Err(Error::GridMismatch(format!("profile has {} points, grid {}", u0.len(), grid.n_x())));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return domain("initial profile must be finite");
    }
    Ok(())
}

/// Single-step multiplier of the scheme on the Fourier mode `k`,
/// `1 / (1 + 2 (dt / dx²) sin²(πk / n_x))`.
pub fn fd_symbol(grid: &Grid, k: usize) -> f64 {
    let r = grid.dt() / (grid.dx() * grid.dx());
    let s = (std::f64::consts::PI * k as f64 / grid.n_x() as f64).sin();
    1.0 / (1.0 + 2.0 * r * s * s)
}

/// Variance of `u^n_j` for `σ ≡ 1`, `u0 ≡ 0`, exact for the scheme.
pub fn fd_variance(grid: &Grid, n: usize) -> f64 {
    let nx = grid.n_x();
    // Σ_p (dt/dx) Σ_i (a^{(p)}_i)² with Parseval Σ_i a_i² = (1/n) Σ_k ρ_k^{2p}
    let dt = grid.dt();
    (0..nx)
        .map(|k| {
            let rho = fd_symbol(grid, k);
            let rho2 = rho * rho;
            let geom = if (1.0 - rho2).abs() < 1e-300 { n as f64 } else { rho2 * (1.0 - rho2.powi(n as i32)) / (1.0 - rho2) };
            dt * geom
        })
        .sum::<f64>()
}

/// Row kernel of the discrete semigroup: `(A^m f)_i = Σ_j a_{(i-j) mod n} f_j`.
pub fn discrete_kernel(grid: &Grid, m: usize) -> Vec<f64> {
    let n = grid.n_x();
    let mut spec: Vec<Complex<f64>> =
        (0..n).map(|k| Complex::new(fd_symbol(grid, k).powi(m as i32), 0.0)).collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// Deterministic part `A^m u0` of the scheme.
pub fn discrete_semigroup<R: Real>(grid: &Grid, u0: &[R], m: usize) -> Vec<R> {
    let stepper = FdStepper::new(grid, &SigmaSpec::constant(R::one()).expect("unit sigma"), None);
    let mut u = u0.to_vec();
    for _ in 0..m {
        u = stepper.heat_step(&u);
    }
    u
}

/// `N(t_i, ·) = u(t_i, ·) - (G_{t_i} * u0)`.
pub fn noise_term<R: Real>(path: &FieldPath<R>, u0: &[R], t_index: usize, cfg: &KernelConfig<R>) -> Result<Vec<R>> {
    let grid = path.grid();
    if t_index > grid.n_t() {
        return domain(format!("t_index {t_index} beyond n_t = {}", grid.n_t()));
    }
    check_profile(grid, u0)?;
    let row = path.row(t_index);
    if u0.iter().all(|v| *v == R::zero()) {
        return Ok(row.to_vec());
    }
    let det = kernel_convolve(u0, R::lit(grid.time(t_index)), cfg)?;
    Ok(row.iter().zip(det).map(|(&u, d)| u - d).collect())
}

/// Real orthonormal Fourier basis on the grid, indexed `0..n_x`:
/// `0 ↦ 1`, `2k - 1 ↦ √2 cos(2πkx)`, `2k ↦ √2 sin(2πkx)` for `k < n/2`,
/// and `n - 1 ↦ cos(πn x)` (the Nyquist mode, unit norm on the grid).
fn mode_wavenumber(m: usize) -> usize {
    m.div_ceil(2)
}

/// Decay rate `½ (2πk)²` of mode `k` under `½∂²`.
fn mode_rate(k: usize) -> f64 {
    2.0 * std::f64::consts::PI * std::f64::consts::PI * (k * k) as f64
}

/// Per-step transition of one Ornstein–Uhlenbeck mode over `dt`:
/// `(decay, innovation sd / σ0)`.
fn ou_step(k: usize, dt: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, dt.sqrt());
    }
    let lam = mode_rate(k);
    let decay = (-lam * dt).exp();
    (decay, ((1.0 - decay * decay) / (2.0 * lam)).sqrt())
}

/// Project a grid function onto the real basis (coefficients w.r.t. the
/// continuum-normalized modes).
fn project_modes(u0: &[f64]) -> Vec<f64> {
    let n = u0.len();
    let mut buf: Vec<Complex<f64>> = u0.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let inv_n = 1.0 / n as f64;
    let s2 = std::f64::consts::SQRT_2;
    let mut a = vec![0.0; n];
    a[0] = buf[0].re * inv_n;
    for k in 1..n / 2 {
        // u_j = Σ c_k e^{2πi kj/n}; c_k = F_k / n; √2 cos, √2 sin coefficients
        a[2 * k - 1] = s2 * buf[k].re * inv_n;
        a[2 * k] = -s2 * buf[k].im * inv_n;
    }
    a[n - 1] = buf[n / 2].re * inv_n;
    a
}

/// Synthesize grid values from mode coefficients.
fn synthesize(a: &[f64], planner: &dyn rustfft::Fft<f64>, scratch: &mut Vec<Complex<f64>>) -> Vec<f64> {
    let n = a.len();
    scratch.clear();
    scratch.resize(n, Complex::new(0.0, 0.0));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    scratch[0] = Complex::new(a[0], 0.0);
    for k in 1..n / 2 {
        // √2 (a_c cos + a_s sin) = c e^{iθ} + c̄ e^{-iθ}, c = (a_c - i a_s)/√2
        let c = Complex::new(a[2 * k - 1] * h, -a[2 * k] * h);
        scratch[k] = c;
        scratch[n - k] = c.conj();
    }
    scratch[n / 2] = Complex::new(a[n - 1], 0.0);
    planner.process(scratch);
    scratch.iter().map(|c| c.re).collect()
}

/// Exact-in-law sampler of the Fourier-truncated constant-σ equation,
/// driven by the ChaCha stream `(base_seed, stream_id)`.
pub fn solve_spectral_constant<R: Real>(
    grid: &Grid,
    sigma0: R,
    u0: &[R],
    base_seed: u64,
    stream_id: u64,
) -> Result<FieldPath<R>> {
    if !(sigma0 > R::zero()) {
        return domain(format!("spectral sampler needs sigma0 > 0, got {sigma0}"));
    }
    check_profile(grid, u0)?;
    let n = grid.n_x();
    let s0 = sigma0.to_f64_lossy();
    let mut steps: Vec<(f64, f64)> = (0..n).map(|m| ou_step(mode_wavenumber(m).min(n / 2), grid.dt())).collect();
    // the Nyquist pair collapses to 2·cos² on the grid
    steps[n - 1].1 *= std::f64::consts::SQRT_2;
    let u0f: Vec<f64> = u0.iter().map(|v| v.to_f64_lossy()).collect();
    let mut a = project_modes(&u0f);
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let mut scratch = Vec::with_capacity(n);
    let mut rng = stream_rng(base_seed, stream_id);
    let mut values = Array2::zeros((grid.n_t() + 1, n));
    for (j, v) in u0.iter().enumerate() {
        values[[0, j]] = *v;
    }
    for i in 1..=grid.n_t() {
        for (am, &(decay, sd)) in a.iter_mut().zip(&steps) {
            let z: f64 = rng.sample(StandardNormal);
            *am = decay * *am + s0 * sd * z;
        }
        let row = synthesize(&a, fft.as_ref(), &mut scratch);
        for (j, v) in row.into_iter().enumerate() {
            values[[i, j]] = R::lit(v);
        }
    }
    FieldPath::new(*grid, values, Some(SeedRecord { base_seed, stream_id }))
}

/// Random spatial profile `x ↦ u(t, x)` of the constant-σ equation started
/// from zero, with modes `|k| ≤ k_max`, evaluable at arbitrary points.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    mean: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl SpectralProfile {
    pub fn sample<G: Rng + ?Sized>(sigma0: f64, t: f64, k_max: usize, rng: &mut G) -> Self {
        let mut draw = |k: usize| -> f64 {
            let sd = if k == 0 {
                t.sqrt()
            } else {
                let lam = mode_rate(k);
                ((1.0 - (-2.0 * lam * t).exp()) / (2.0 * lam)).sqrt()
            };
            let z: f64 = rng.sample(StandardNormal);
            sigma0 * sd * z
        };
        let mean = draw(0);
        let mut cos = Vec::with_capacity(k_max);
        let mut sin = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            cos.push(draw(k));
            sin.push(draw(k));
        }
        Self { mean, cos, sin }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        let w = 2.0 * std::f64::consts::PI * x;
        let (s1, c1) = w.sin_cos();
        let (mut s, mut c) = (s1, c1);
        let mut acc = self.mean;
        for (a, b) in self.cos.iter().zip(&self.sin) {
            acc += s2 * (a * c + b * s);
            let cn = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = cn;
        }
        acc
    }

    /// Variance of `u(t, x)` under the truncated law, for `σ0 = 1`.
    pub fn variance(t: f64, k_max: usize) -> f64 {
        let mut v = t;
        for k in 1..=k_max {
            let lam = mode_rate(k);
            v += 2.0 * (1.0 - (-2.0 * lam * t).exp()) / (2.0 * lam);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid() -> Grid {
        Grid::new(32, 16, 0.05).unwrap()
    }

    #[test]
    fn cyclic_solver_matches_dense_product() {
        let n = 16;
        let sys = CyclicTridiagonal::new(n, 3.0f64, -1.0);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let rhs: Vec<f64> = (0..n).map(|i| 3.0 * x[i] - x[(i + 1) % n] - x[(i + n - 1) % n]).collect();
        let y = sys.solve(&rhs);
        for (a, b) in x.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn sigma_presets_validate() {
        assert!(SigmaSpec::<f64>::constant(1.0).is_ok());
        assert!(SigmaSpec::<f64>::tx_cos(1.0, 0.5).is_ok());
        assert!(SigmaSpec::<f64>::sin_u(1.0, 0.25).is_ok());
        assert!(SigmaSpec::<f64>::constant(0.0).is_err());
        assert!(SigmaSpec::<f64>::sin_u(0.2, 0.5).is_err());
    }

    #[test]
    fn wrong_declared_bounds_rejected() {
        let f: SigmaFn<f64> = Arc::new(|_, _, u| 1.0 + 0.5 * u.sin());
        assert!(SigmaSpec::new(SigmaKind::UDependent, f.clone(), 0.5, 1.5, 0.1).is_err());
        assert!(SigmaSpec::new(SigmaKind::UDependent, f.clone(), 0.6, 1.5, 0.5).is_err());
        assert!(SigmaSpec::new(SigmaKind::TxDependent, f, 0.5, 1.5, 0.0).is_err());
    }

    #[test]
    fn drift_bound_checked() {
        assert!(DriftSpec::<f64>::new(Arc::new(|_, x| x), 0.5).is_err());
        assert!(DriftPreset::SinX { amp: 2.0 }.build::<f64>().is_ok());
    }

    #[test]
    fn zero_noise_cosine_decay() {
        let g = grid();
        let u0: Vec<f64> = g.points().iter().map(|x| (2.0 * std::f64::consts::PI * x).cos()).collect();
        let p = solve_fd(&g, &SigmaSpec::constant(1.0).unwrap(), &u0, None, &NoiseField::zeros(g)).unwrap();
        let rho = fd_symbol(&g, 1);
        for i in 0..=g.n_t() {
            for j in 0..g.n_x() {
                assert_abs_diff_eq!(p.values()[[i, j]], rho.powi(i as i32) * u0[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn discrete_kernel_matches_stepping() {
        let g = grid();
        let u0: Vec<f64> = (0..g.n_x()).map(|j| ((j * 7) % 5) as f64).collect();
        let stepped = discrete_semigroup(&g, &u0, 5);
        let a = discrete_kernel(&g, 5);
        let n = g.n_x();
        for i in 0..n {
            let conv: f64 = (0..n).map(|j| a[(i + n - j) % n] * u0[j]).sum();
            assert_abs_diff_eq!(conv, stepped[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_roundtrip() {
        let n = 16;
        let u: Vec<f64> = (0..n).map(|j| (j as f64).sqrt() - 1.3).collect();
        let a = project_modes(&u);
        let fft = FftPlanner::new().plan_fft_inverse(n);
        let back = synthesize(&a, fft.as_ref(), &mut Vec::new());
        for (x, y) in u.iter().zip(back) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectral_zero_sigma_rejected() {
        let g = grid();
        assert!(solve_spectral_constant(&g, 0.0, &vec![0.0; 32], 1, 1).is_err());
    }

    #[test]
    fn noise_term_identity_for_zero_profile() {
        let g = grid();
        let noise = crate::grid::sample_noise(&g, 3, 9);
        let u0 = vec![0.0; g.n_x()];
        let p = solve_fd(&g, &SigmaSpec::constant(1.0).unwrap(), &u0, None, &noise).unwrap();
        let n = noise_term(&p, &u0, 7, &KernelConfig::default()).unwrap();
        assert_eq!(n, p.row(7).to_vec());
    }
}
