//! Hölder semi-norms of grid functions and paths, normalized increment
//! fields, and mollification of `C^{γ,β}` functions.
//!
//! Semi-norms are exact maxima over grid pairs, evaluated by double loops.
//! Lag denominators are tabulated once per call, but each ratio is formed
//! with the same operations a naive pairwise loop would use, so results
//! agree with a brute-force evaluation bit for bit.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{FieldPath, Grid};
use crate::quadrature::integrate;
use crate::real::Real;

/// Distance between grid points of the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `|x - y|` for representatives in `[0, 1)`.
    #[default]
    Representative,
    /// `min(|x - y|, 1 - |x - y|)`.
    Torus,
}

impl Metric {
    /// Distance between grid indices `i` and `j` with spacing `dx`.
    #[inline]
    pub fn grid_distance<R: Real>(&self, i: usize, j: usize, n: usize, dx: R) -> R {
        let lag = i.abs_diff(j);
        let lag = match self {
            Metric::Representative => lag,
            Metric::Torus => lag.min(n - lag),
        };
        R::from_usize_exact(lag) * dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeminormKind {
    Spatial,
    Temporal,
    Combined,
}

/// Grid point `(time index, space index)`.
pub type GridPoint = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormResult<R> {
    pub value: R,
    /// Maximizing pair; `None` when every ratio is zero.
    pub arg_pair: Option<(GridPoint, GridPoint)>,
    pub theta: R,
    pub metric: Metric,
    pub stride: usize,
    pub kind: SeminormKind,
}

/// Default temporal stride: 1 up to 1024 steps, then 4. A stride above 1
/// evaluates a subset of pairs and so under-reports the semi-norm.
pub fn default_stride(n_t: usize) -> usize {
    if n_t <= 1024 {
        1
    } else {
        4
    }
}

fn check_theta<R: Real>(theta: R) -> Result<()> {
    if !(theta > R::zero() && theta <= R::lit(0.5)) {
        return domain(format!("theta must lie in (0, 1/2], got {theta}"));
    }
    Ok(())
}

/// Spatial exponent `1/2 - θ`.
#[inline]
pub fn spatial_exponent<R: Real>(theta: R) -> R {
    R::lit(0.5) - theta
}

/// Temporal exponent `1/4 - θ/2`.
#[inline]
pub fn temporal_exponent<R: Real>(theta: R) -> R {
    R::lit(0.25) - R::lit(0.5) * theta
}

// d^a for every lag 0..n (entry 0 unused).
fn spatial_denominators<R: Real>(n: usize, a: R, metric: Metric) -> Vec<R> {
    let dx = R::one() / R::from_usize_exact(n);
    (0..n).map(|lag| metric.grid_distance(0, lag, n, dx).powf(a)).collect()
}

fn temporal_denominators<R: Real>(len: usize, dt: R, b: R) -> Vec<R> {
    (0..len).map(|lag| (R::from_usize_exact(lag) * dt).powf(b)).collect()
}

#[derive(Debug, Clone, Copy)]
struct Best<R> {
    value: R,
    pair: Option<(GridPoint, GridPoint)>,
}

impl<R: Real> Best<R> {
    fn new() -> Self {
        Self { value: R::zero(), pair: None }
    }

    #[inline]
    fn offer(&mut self, r: R, p: GridPoint, q: GridPoint) {
        if r > self.value {
            self.value = r;
            self.pair = Some((p, q));
        }
    }

    fn merge(&mut self, other: Best<R>) {
        if other.value > self.value {
            *self = other;
        }
    }
}

fn row_best<R: Real>(row: ArrayView1<'_, R>, denom: &[R], t_index: usize) -> Best<R> {
    let n = row.len();
    let mut best = Best::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let r = (row[i] - row[j]).abs() / denom[j - i];
            best.offer(r, (t_index, i), (t_index, j));
        }
    }
    best
}

fn row_best_torus<R: Real>(row: ArrayView1<'_, R>, denom: &[R], t_index: usize) -> Best<R> {
    let n = row.len();
    let mut best = Best::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let lag = (j - i).min(n - (j - i));
            let r = (row[i] - row[j]).abs() / denom[lag];
            best.offer(r, (t_index, i), (t_index, j));
        }
    }
    best
}

fn column_best<R: Real>(col: ArrayView1<'_, R>, denom: &[R], stride: usize, x_index: usize) -> Best<R> {
    let len = col.len();
    let mut best = Best::new();
    let mut i = 0;
    while i < len {
        let mut j = i + stride;
        while j < len {
            let r = (col[i] - col[j]).abs() / denom[j - i];
            best.offer(r, (i, x_index), (j, x_index));
            j += stride;
        }
        i += stride;
    }
    best
}

fn row_best_metric<R: Real>(row: ArrayView1<'_, R>, denom: &[R], t_index: usize, metric: Metric) -> Best<R> {
    match metric {
        Metric::Representative => row_best(row, denom, t_index),
        Metric::Torus => row_best_torus(row, denom, t_index),
    }
}

/// `max_{x ≠ y} |f(x) - f(y)| / d(x, y)^{1/2-θ}` over a uniform torus grid.
pub fn spatial_seminorm<R: Real>(row: &[R], theta: R, metric: Metric) -> Result<SeminormResult<R>> {
    check_theta(theta)?;
    if row.len() < 2 {
        return domain("a semi-norm needs at least two points");
    }
    if row.iter().any(|v| !v.is_finite()) {
        return domain("row must be finite");
    }
    let denom = spatial_denominators(row.len(), spatial_exponent(theta), metric);
    let best = row_best_metric(ArrayView1::from(row), &denom, 0, metric);
    Ok(SeminormResult { value: best.value, arg_pair: best.pair, theta, metric, stride: 1, kind: SeminormKind::Spatial })
}

/// `max_{s ≠ t} |f(t) - f(s)| / |t - s|^{1/4-θ/2}` over `t_i = i T / (len - 1)`
/// restricted to indices divisible by `stride`.
pub fn temporal_seminorm<R: Real>(column: &[R], theta: R, horizon: R, stride: usize) -> Result<SeminormResult<R>> {
    check_theta(theta)?;
    if column.len() < 2 {
        return domain("a semi-norm needs at least two points");
    }
    if stride < 1 {
        return domain("stride must be at least 1");
    }
    if !(horizon > R::zero()) {
        return domain("horizon must be positive");
    }
    let dt = horizon / R::from_usize_exact(column.len() - 1);
    let denom = temporal_denominators(column.len(), dt, temporal_exponent(theta));
    let best = column_best(ArrayView1::from(column), &denom, stride, 0);
    Ok(SeminormResult {
        value: best.value,
        arg_pair: best.pair,
        theta,
        metric: Metric::Representative,
        stride,
        kind: SeminormKind::Temporal,
    })
}

/// `sup_t 𝓗_t` of a path: the largest row semi-norm.
pub fn spatial_sup<R: Real>(values: &Array2<R>, theta: R, metric: Metric) -> Result<SeminormResult<R>> {
    check_theta(theta)?;
    let n = values.ncols();
    if n < 2 {
        return domain("a semi-norm needs at least two points");
    }
    let denom = spatial_denominators(n, spatial_exponent(theta), metric);
    let mut best = Best::new();
    for (i, row) in values.axis_iter(Axis(0)).enumerate() {
        best.merge(row_best_metric(row, &denom, i, metric));
    }
    Ok(SeminormResult { value: best.value, arg_pair: best.pair, theta, metric, stride: 1, kind: SeminormKind::Spatial })
}

/// `sup_x 𝓗_x` of a path: the largest column semi-norm.
pub fn temporal_sup<R: Real>(values: &Array2<R>, theta: R, horizon: R, stride: usize) -> Result<SeminormResult<R>> {
    check_theta(theta)?;
    if values.nrows() < 2 {
        return domain("a semi-norm needs at least two points");
    }
    if stride < 1 {
        return domain("stride must be at least 1");
    }
    let dt = horizon / R::from_usize_exact(values.nrows() - 1);
    let denom = temporal_denominators(values.nrows(), dt, temporal_exponent(theta));
    let mut best = Best::new();
    for (j, col) in values.axis_iter(Axis(1)).enumerate() {
        best.merge(column_best(col, &denom, stride, j));
    }
    Ok(SeminormResult {
        value: best.value,
        arg_pair: best.pair,
        theta,
        metric: Metric::Representative,
        stride,
        kind: SeminormKind::Temporal,
    })
}

/// Space-time semi-norm
/// `sup |u(t,x) - u(s,y)| / (d(x,y)^{1/2-θ} + |t-s|^{1/4-θ/2})`.
///
/// On a product grid the supremum is attained on a pair sharing a time or a
/// space coordinate, since a mixed increment splits through `(t, y)` into a
/// spatial and a temporal one. The value is therefore the larger of
/// [`spatial_sup`] and [`temporal_sup`].
pub fn combined_values<R: Real>(
    values: &Array2<R>,
    theta: R,
    horizon: R,
    stride: usize,
    metric: Metric,
) -> Result<SeminormResult<R>> {
    let s = spatial_sup(values, theta, metric)?;
    let t = temporal_sup(values, theta, horizon, stride)?;
    let (value, arg_pair) = if t.value > s.value { (t.value, t.arg_pair) } else { (s.value, s.arg_pair) };
    Ok(SeminormResult { value, arg_pair, theta, metric, stride, kind: SeminormKind::Combined })
}

pub fn combined_seminorm<R: Real>(
    path: &FieldPath<R>,
    theta: R,
    stride: usize,
    metric: Metric,
) -> Result<SeminormResult<R>> {
    combined_values(path.values(), theta, R::lit(path.grid().horizon()), stride, metric)
}

/// Semi-norm of the requested kind for a value array on `grid`.
pub fn seminorm_of<R: Real>(
    values: &Array2<R>,
    grid: &Grid,
    theta: R,
    kind: SeminormKind,
    stride: usize,
    metric: Metric,
) -> Result<SeminormResult<R>> {
    let horizon = R::lit(grid.horizon());
    match kind {
        SeminormKind::Spatial => spatial_sup(values, theta, metric),
        SeminormKind::Temporal => temporal_sup(values, theta, horizon, stride),
        SeminormKind::Combined => combined_values(values, theta, horizon, stride, metric),
    }
}

/// Which normalized increment field to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementKind {
    /// `Ñ(t, x, y) = (u(t,x) - u(t,y)) / d(x,y)^{1/2-θ}`
    Spatial,
    /// `N^#(s, t, x) = (u(t,x) - u(s,x)) / |t-s|^{1/4-θ/2}`
    Temporal,
}

/// Absolute normalized increments.
///
/// Spatial: row `i` holds `|Ñ(t_i, x_a, x_b)|` for pairs `a < b` in
/// lexicographic order. Temporal: row `j` holds `|N^#(s_a, t_b, x_j)|` for
/// time pairs `a < b`. The maximum of the field is the matching semi-norm.
pub fn normalized_increments<R: Real>(
    values: &Array2<R>,
    theta: R,
    horizon: R,
    kind: IncrementKind,
    metric: Metric,
) -> Result<Array2<R>> {
    check_theta(theta)?;
    let (rows, cols) = values.dim();
    match kind {
        IncrementKind::Spatial => {
            let denom = spatial_denominators(cols, spatial_exponent(theta), metric);
            let pairs = cols * (cols - 1) / 2;
            let mut out = Array2::zeros((rows, pairs));
            for (i, row) in values.axis_iter(Axis(0)).enumerate() {
                let mut k = 0;
                for a in 0..cols {
                    for b in (a + 1)..cols {
                        let lag = match metric {
                            Metric::Representative => b - a,
                            Metric::Torus => (b - a).min(cols - (b - a)),
                        };
                        out[[i, k]] = (row[a] - row[b]).abs() / denom[lag];
                        k += 1;
                    }
                }
            }
            Ok(out)
        }
        IncrementKind::Temporal => {
            let dt = horizon / R::from_usize_exact(rows - 1);
            let denom = temporal_denominators(rows, dt, temporal_exponent(theta));
            let pairs = rows * (rows - 1) / 2;
            let mut out = Array2::zeros((cols, pairs));
            for (j, col) in values.axis_iter(Axis(1)).enumerate() {
                let mut k = 0;
                for a in 0..rows {
                    for b in (a + 1)..rows {
                        out[[j, k]] = (col[a] - col[b]).abs() / denom[b - a];
                        k += 1;
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Sampled `f ∈ C^{γ,β}` on a grid, with
/// `‖f‖ = |f(0,0)| + sup |f(t,x) - f(s,y)| / (|t-s|^γ + |x-y|^β)`
/// measured in the torus distance.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderFunction<R> {
    values: Array2<R>,
    grid: Grid,
    gamma: R,
    beta: R,
    norm_bound: R,
}

impl<R: Real> HolderFunction<R> {
    /// Wrap samples, checking that the declared norm bounds the sampled one.
    pub fn new(grid: Grid, values: Array2<R>, gamma: R, beta: R, norm_bound: R) -> Result<Self> {
        let me = Self::unchecked(grid, values, gamma, beta)?;
        let sampled = me.sampled_norm();
        if sampled > norm_bound + R::lit(1e-9) {
            return domain(format!("sampled C^(γ,β) norm {sampled} exceeds declared bound {norm_bound}"));
        }
        Ok(Self { norm_bound, ..me })
    }

    /// Wrap samples and take the sampled norm as the bound.
    pub fn from_samples(grid: Grid, values: Array2<R>, gamma: R, beta: R) -> Result<Self> {
        let me = Self::unchecked(grid, values, gamma, beta)?;
        let norm_bound = me.sampled_norm();
        Ok(Self { norm_bound, ..me })
    }

    pub fn from_fn(grid: Grid, gamma: R, beta: R, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let times = grid.times();
        let xs = grid.points();
        let values = Array2::from_shape_fn((grid.n_t() + 1, grid.n_x()), |(i, j)| R::lit(f(times[i], xs[j])));
        Self::from_samples(grid, values, gamma, beta)
    }

    fn unchecked(grid: Grid, values: Array2<R>, gamma: R, beta: R) -> Result<Self> {
        let one = R::one();
        if !(gamma > R::zero() && gamma <= one && beta > R::zero() && beta <= one) {
            return domain(format!("need γ, β in (0, 1], got γ = {gamma}, β = {beta}"));
        }
        if values.dim() != (grid.n_t() + 1, grid.n_x()) {
            return Err(Error::GridMismatch("Hölder function shape does not match grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("Hölder function samples must be finite");
        }
        Ok(Self { values, grid, gamma, beta, norm_bound: R::zero() })
    }

    /// Exact sampled norm; mixed pairs never exceed the pure-pair maximum.
    pub fn sampled_norm(&self) -> R {
        let n = self.grid.n_x();
        let dx = R::lit(self.grid.dx());
        let sp: Vec<R> = (0..n).map(|lag| Metric::Torus.grid_distance(0, lag, n, dx).powf(self.beta)).collect();
        let rows = self.values.nrows();
        let dt = R::lit(self.grid.dt());
        let tp: Vec<R> = (0..rows).map(|lag| (R::from_usize_exact(lag) * dt).powf(self.gamma)).collect();
        let mut best = Best::new();
        for (i, row) in self.values.axis_iter(Axis(0)).enumerate() {
            best.merge(row_best_torus(row, &sp, i));
        }
        for (j, col) in self.values.axis_iter(Axis(1)).enumerate() {
            best.merge(column_best(col, &tp, 1, j));
        }
        self.values[[0, 0]].abs() + best.value
    }

    pub fn values(&self) -> &Array2<R> {
        &self.values
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gamma(&self) -> R {
        self.gamma
    }

    pub fn beta(&self) -> R {
        self.beta
    }

    pub fn norm_bound(&self) -> R {
        self.norm_bound
    }
}

/// Standard bump `exp(-1/(1-x²))` on `(-1, 1)`, normalized to unit mass.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    inv_mass: f64,
}

impl Bump {
    pub fn new() -> Self {
        let mass = integrate(Self::raw, -1.0, 1.0, &[0.0], 1e-14, 200).value;
        Self { inv_mass: 1.0 / mass }
    }

    fn raw(x: f64) -> f64 {
        if x.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - x * x)).exp()
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        Self::raw(x) * self.inv_mass
    }

    /// Weights `ψ_n(k h) h` for lags `|k| < 1/(n h)`, renormalized to sum 1.
    /// Index `K + k` holds lag `k`, with `K` the half-width.
    pub fn weights(&self, n: usize, h: f64) -> Vec<f64> {
        let scale = n as f64;
        let half = ((1.0 / (scale * h)).ceil() as usize).max(1);
        let mut w: Vec<f64> = (0..=2 * half)
            .map(|i| {
                let k = i as f64 - half as f64;
                scale * self.eval(scale * k * h) * h
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            // support narrower than one cell
            w.iter_mut().for_each(|v| *v = 0.0);
            w[half] = 1.0;
        } else {
            w.iter_mut().for_each(|v| *v /= total);
        }
        w
    }
}

impl Default for Bump {
    fn default() -> Self {
        Self::new()
    }
}

/// `f_n = f̃ * (ψ_n ⊗ ψ_n)` on the grid of `f`, with `f̃` periodic in space
/// and frozen at `f(0, ·)` before time 0 and `f(T, ·)` after `T`.
pub fn mollify<R: Real>(f: &HolderFunction<R>, n: usize) -> Result<Array2<R>> {
    if n < 1 {
        return domain("mollification index n must be at least 1");
    }
    let grid = f.grid();
    let bump = Bump::new();
    let wx: Vec<R> = bump.weights(n, grid.dx()).into_iter().map(R::lit).collect();
    let wt: Vec<R> = bump.weights(n, grid.dt()).into_iter().map(R::lit).collect();
    let (rows, cols) = f.values.dim();

    let hx = (wx.len() - 1) / 2;
    let mut tmp = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = R::zero();
            for (m, &w) in wx.iter().enumerate() {
                // y = x - k dx with k = m - hx
                let k = m as isize - hx as isize;
                let jj = (j as isize - k).rem_euclid(cols as isize) as usize;
                acc = acc + w * f.values[[i, jj]];
            }
            tmp[[i, j]] = acc;
        }
    }

    let ht = (wt.len() - 1) / 2;
    let mut out = Array2::zeros((rows, cols));
    for i in 0..rows {
        for (m, &w) in wt.iter().enumerate() {
            let k = m as isize - ht as isize;
            let ii = (i as isize - k).clamp(0, rows as isize - 1) as usize;
            for j in 0..cols {
                out[[i, j]] = out[[i, j]] + w * tmp[[ii, j]];
            }
        }
    }
    Ok(out)
}

/// Semi-norm of `u - h`.
pub fn seminorm_diff<R: Real>(
    path: &FieldPath<R>,
    h: &HolderFunction<R>,
    theta: R,
    kind: SeminormKind,
    stride: usize,
    metric: Metric,
) -> Result<SeminormResult<R>> {
    if path.grid() != h.grid() {
        return Err(Error::GridMismatch("path and h live on different grids".into()));
    }
    let diff = path.values() - h.values();
    seminorm_of(&diff, path.grid(), theta, kind, stride, metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_example() {
        // f(0) = 0, f(0.5) = 1 on a two-cell grid
        let r = spatial_seminorm(&[0.0f64, 1.0], 0.25, Metric::Representative).unwrap();
        assert_abs_diff_eq!(r.value, 2f64.powf(0.25), epsilon = 1e-15);
        assert_eq!(r.arg_pair, Some(((0, 0), (0, 1))));
    }

    #[test]
    fn unit_horizon_column() {
        let r = temporal_seminorm(&[0.0f64, 1.0], 0.25, 1.0, 1).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn constants_vanish() {
        let row = vec![3.0f64; 16];
        assert_eq!(spatial_seminorm(&row, 0.3, Metric::Torus).unwrap().value, 0.0);
        assert_eq!(temporal_seminorm(&row, 0.3, 2.0, 3).unwrap().arg_pair, None);
    }

    #[test]
    fn domain_errors() {
        assert!(spatial_seminorm(&[1.0f64], 0.3, Metric::Representative).is_err());
        assert!(spatial_seminorm(&[1.0f64, 2.0], 0.0, Metric::Representative).is_err());
        assert!(spatial_seminorm(&[1.0f64, 2.0], 0.7, Metric::Representative).is_err());
        assert!(temporal_seminorm(&[1.0f64, 2.0], 0.3, 1.0, 0).is_err());
    }

    #[test]
    fn torus_distance_wraps() {
        assert_eq!(Metric::Torus.grid_distance(0, 7, 8, 0.125f64), 0.125);
        assert_eq!(Metric::Representative.grid_distance(0, 7, 8, 0.125f64), 0.875);
    }

    #[test]
    fn bump_has_unit_mass() {
        let b = Bump::new();
        let m = integrate(|x| b.eval(x), -1.0, 1.0, &[0.0], 1e-13, 200).value;
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
        let w = b.weights(4, 1.0 / 64.0);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_eq!(w.len(), 2 * 16 + 1);
    }

    #[test]
    fn mollify_constant() {
        let g = Grid::new(32, 16, 1.0).unwrap();
        let f = HolderFunction::<f64>::from_fn(g, 0.5, 0.5, |_, _| 2.5).unwrap();
        for n in [1, 3, 8] {
            let out = mollify(&f, n).unwrap();
            for v in out.iter() {
                assert_abs_diff_eq!(*v, 2.5, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn declared_norm_checked() {
        let g = Grid::new(16, 8, 1.0).unwrap();
        let f = HolderFunction::<f64>::from_fn(g, 1.0, 1.0, |t, x| t + x).unwrap();
        assert!(HolderFunction::new(g, f.values().clone(), 1.0, 1.0, f.norm_bound() * 0.5).is_err());
        assert!(HolderFunction::new(g, f.values().clone(), 1.0, 1.0, f.norm_bound()).is_ok());
    }
}
