//! Truncated mild equation and its Picard iterates on the scheme's lattice.
//!
//! `V^{β,l}(t_n, x_i) = (A^n u0)_i + Σ_{m<n} Σ_{|i-j| ≤ h_n} a^{(n-m)}_{i-j} σ(t_m, x_j, V^{β,l-1}(t_m, x_j)) dW^m_j / dx`
//! where `a^{(p)}` is the row kernel of `A^p` and `h_n = ⌈√(β t_n) / dx⌉`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{sample_noise, stream_key, FieldPath, Grid, NoiseField};
use crate::solver::{discrete_kernel, solve_fd, FdStepper, SigmaSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationParams {
    pub beta: f64,
    pub level: usize,
    pub p: f64,
}

impl LocalizationParams {
    pub fn new(beta: f64, level: usize, p: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return domain(format!("beta must be positive, got {beta}"));
        }
        if !(p >= 2.0) {
            return domain(format!("moment order p must be at least 2, got {p}"));
        }
        Ok(Self { beta, level, p })
    }

    /// `β = l = ⌊α |log ε|⌋`, `p = ⌊√(|log ε| / δ²)⌋` with `δ = ε^{1/θ}`.
    pub fn from_epsilon(epsilon: f64, theta: f64, alpha: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) || !(theta > 0.0 && theta <= 0.5) || !(alpha > 0.0) {
            return domain("need ε ∈ (0, 1), θ ∈ (0, 1/2], α > 0");
        }
        let le = epsilon.ln().abs();
        let l = (alpha * le).floor();
        if l < 1.0 {
            return domain("α |log ε| < 1 gives β = 0");
        }
        let delta = epsilon.powf(1.0 / theta);
        let p = (le / (delta * delta)).sqrt().floor().max(2.0);
        Self::new(l, l as usize, p)
    }

    pub fn window(&self, t: f64) -> f64 {
        (self.beta * t).sqrt()
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if self.beta * t >= 0.25 {
            return Err(Error::Precondition(format!("β·t = {} must stay below 1/4", self.beta * t)));
        }
        Ok(())
    }

    /// Radius `2 l √(β t)` beyond which iterates are independent.
    pub fn independence_radius(&self, t: f64) -> f64 {
        2.0 * self.level as f64 * self.window(t)
    }
}

/// Outward-rounded half-width in cells, `None` once the window wraps the torus.
fn half_width(grid: &Grid, beta: f64, t: f64) -> Option<usize> {
    let h = ((beta * t).sqrt() / grid.dx() - 1e-9).ceil().max(0.0) as usize;
    (2 * h + 1 < grid.n_x()).then_some(h)
}

struct Kernels {
    rows: Vec<Vec<f64>>,
}

impl Kernels {
    fn new(grid: &Grid) -> Self {
        Self { rows: (0..=grid.n_t()).map(|p| discrete_kernel(grid, p)).collect() }
    }
}

fn deterministic(grid: &Grid, u0: &[f64]) -> Array2<f64> {
    let stepper = FdStepper::new(grid, &SigmaSpec::constant(1.0).expect("unit sigma"), None);
    let mut out = Array2::zeros((grid.n_t() + 1, grid.n_x()));
    let mut u = u0.to_vec();
    out.row_mut(0).assign(&ndarray::ArrayView1::from(&u[..]));
    for n in 1..=grid.n_t() {
        u = stepper.heat_step(&u);
        out.row_mut(n).assign(&ndarray::ArrayView1::from(&u[..]));
    }
    out
}

fn picard_step(
    grid: &Grid,
    sigma: &SigmaSpec<f64>,
    beta: f64,
    det: &Array2<f64>,
    prev: &Array2<f64>,
    noise: &NoiseField,
    kernels: &Kernels,
) -> Array2<f64> {
    let (nt, nx) = (grid.n_t(), grid.n_x());
    let inv_dx = 1.0 / grid.dx();
    let xs = grid.points();
    let mut src = Array2::zeros((nt, nx));
    for m in 0..nt {
        let t = grid.time(m);
        let dw = noise.row(m);
        for j in 0..nx {
            src[[m, j]] = sigma.eval(t, xs[j], prev[[m, j]]) * dw[j] * inv_dx;
        }
    }
    let mut out = det.clone();
    for n in 1..=nt {
        let window = half_width(grid, beta, grid.time(n));
        if window.is_none() {
            log::warn!("window at t = {} covers the torus; clamped", grid.time(n));
        }
        for i in 0..nx {
            let mut acc = 0.0;
            for m in 0..n {
                let a = &kernels.rows[n - m];
                let s = src.row(m);
                match window {
                    Some(h) => {
                        for d in -(h as isize)..=(h as isize) {
                            let k = d.rem_euclid(nx as isize) as usize;
                            let j = (i as isize - d).rem_euclid(nx as isize) as usize;
                            acc += a[k] * s[j];
                        }
                    }
                    None => {
                        for (j, sj) in s.iter().enumerate() {
                            acc += a[(i + nx - j) % nx] * sj;
                        }
                    }
                }
            }
            out[[n, i]] += acc;
        }
    }
    out
}

/// Iterates `V^{β,0}, …, V^{β,l}` driven by one noise field.
pub fn picard_levels(
    grid: &Grid,
    sigma: &SigmaSpec<f64>,
    u0: &[f64],
    params: &LocalizationParams,
    noise: &NoiseField,
) -> Result<Vec<FieldPath<f64>>> {
    if noise.grid() != grid {
        return Err(Error::GridMismatch("noise field lives on a different grid".into()));
    }
    if u0.len() != grid.n_x() || u0.iter().any(|v| !v.is_finite()) {
        return domain("initial profile must be finite with one value per cell");
    }
    params.check_time(grid.horizon())?;
    let kernels = Kernels::new(grid);
    let det = deterministic(grid, u0);
    let mut levels = vec![det.clone()];
    for _ in 0..params.level {
        let next = picard_step(grid, sigma, params.beta, &det, levels.last().expect("level 0"), noise, &kernels);
        levels.push(next);
    }
    levels.into_iter().map(|v| FieldPath::new(*grid, v, noise.seed())).collect()
}

pub fn picard_path(
    grid: &Grid,
    sigma: &SigmaSpec<f64>,
    u0: &[f64],
    params: &LocalizationParams,
    noise: &NoiseField,
) -> Result<FieldPath<f64>> {
    Ok(picard_levels(grid, sigma, u0, params, noise)?.pop().expect("nonempty"))
}

/// `sup_x` of the sample mean of `|u(T, x) - v(T, x)|^p` over coupled pairs.
pub fn moment_error(u: &[FieldPath<f64>], v: &[FieldPath<f64>], p: f64) -> Result<f64> {
    Ok(moment_error_with_se(u, v, p)?.0)
}

/// Same as [`moment_error`], with the standard error at the maximizing cell.
pub fn moment_error_with_se(u: &[FieldPath<f64>], v: &[FieldPath<f64>], p: f64) -> Result<(f64, f64)> {
    if !(p >= 1.0) {
        return domain(format!("moment order must be at least 1, got {p}"));
    }
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::Insufficient("need equally many nonempty coupled samples".into()));
    }
    let grid = *u[0].grid();
    if u.iter().chain(v).any(|q| *q.grid() != grid) {
        return Err(Error::GridMismatch("coupled paths live on different grids".into()));
    }
    let last = grid.n_t();
    let rows: Vec<Vec<f64>> = u
        .iter()
        .zip(v)
        .map(|(a, b)| a.row(last).iter().zip(b.row(last)).map(|(x, y)| (x - y).abs().powf(p)).collect())
        .collect();
    Ok(sup_mean(&rows))
}

fn sup_mean(rows: &[Vec<f64>]) -> (f64, f64) {
    let n = rows.len() as f64;
    let nx = rows[0].len();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for j in 0..nx {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = col.iter().sum::<f64>() / n;
        if m > best.0 {
            let se = if rows.len() > 1 { (crate::stats::variance(&col) / n).sqrt() } else { 0.0 };
            best = (m, se);
        }
    }
    best
}

fn sample_stream(sample: usize) -> u64 {
    stream_key(&[sample as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub level: usize,
    pub moment: f64,
    pub stderr: f64,
}

/// `sup_x E|V^{β,l+1} - V^{β,l}|^p` at the final time for `l = 0, …, max_level - 1`.
pub fn level_sweep(
    grid: &Grid,
    sigma: &SigmaSpec<f64>,
    u0: &[f64],
    beta: f64,
    max_level: usize,
    p: f64,
    n_samples: usize,
    base_seed: u64,
) -> Result<Vec<LevelError>> {
    let params = LocalizationParams::new(beta, max_level, p)?;
    let last = grid.n_t();
    let per_sample: Vec<Vec<Vec<f64>>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let noise = sample_noise(grid, sample_stream(s), base_seed);
            let lv = picard_levels(grid, sigma, u0, &params, &noise)?;
            Ok(lv
                .windows(2)
                .map(|w| w[1].row(last).iter().zip(w[0].row(last)).map(|(a, b)| (a - b).abs().powf(p)).collect())
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..max_level)
        .map(|l| {
            let rows: Vec<Vec<f64>> = per_sample.iter().map(|s| s[l].clone()).collect();
            let (moment, stderr) = sup_mean(&rows);
            LevelError { level: l, moment, stderr }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaError {
    pub beta: f64,
    pub moment: f64,
    pub stderr: f64,
}

/// `sup_x E|u - V^{β,l}|^p` at the final time, `u` the untruncated scheme on the same noise.
pub fn beta_sweep(
    grid: &Grid,
    sigma: &SigmaSpec<f64>,
    u0: &[f64],
    betas: &[f64],
    level: usize,
    p: f64,
    n_samples: usize,
    base_seed: u64,
) -> Result<Vec<BetaError>> {
    let params: Vec<LocalizationParams> = betas.iter().map(|&b| LocalizationParams::new(b, level, p)).collect::<Result<_>>()?;
    let last = grid.n_t();
    let per_sample: Vec<Vec<Vec<f64>>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let noise = sample_noise(grid, sample_stream(s), base_seed);
            let u = solve_fd(grid, sigma, u0, None, &noise)?;
            params
                .iter()
                .map(|pr| {
                    let v = picard_path(grid, sigma, u0, pr, &noise)?;
                    Ok(u.row(last).iter().zip(v.row(last)).map(|(a, b)| (a - b).abs().powf(p)).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<_>>()?;
    Ok(betas
        .iter()
        .enumerate()
        .map(|(k, &beta)| {
            let rows: Vec<Vec<f64>> = per_sample.iter().map(|s| s[k].clone()).collect();
            let (moment, stderr) = sup_mean(&rows);
            BetaError { beta, moment, stderr }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub indices: Vec<usize>,
    pub points: Vec<f64>,
    pub distances: Vec<Vec<f64>>,
    pub correlation: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub radius: f64,
    pub n_samples: usize,
}

/// Sample correlations of `V^{β,l}(T, x_j)` with `x_j` snapped to the nearest cell.
pub fn independence_probe(
    grid: &Grid,
    sigma: &SigmaSpec<f64>,
    u0: &[f64],
    points: &[f64],
    params: &LocalizationParams,
    n_samples: usize,
    base_seed: u64,
) -> Result<ProbeResult> {
    if n_samples < 100 {
        return Err(Error::Insufficient(format!("independence probe needs at least 100 samples, got {n_samples}")));
    }
    let nx = grid.n_x();
    let indices: Vec<usize> = points.iter().map(|&x| ((x.rem_euclid(1.0) / grid.dx()).round() as usize) % nx).collect();
    let snapped: Vec<f64> = indices.iter().map(|&i| grid.space(i)).collect();
    let last = grid.n_t();
    let values: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let noise = sample_noise(grid, sample_stream(s), base_seed);
            let v = picard_path(grid, sigma, u0, params, &noise)?;
            Ok(indices.iter().map(|&i| v.values()[[last, i]]).collect())
        })
        .collect::<Result<_>>()?;
    let k = indices.len();
    let cols: Vec<Vec<f64>> = (0..k).map(|a| values.iter().map(|r| r[a]).collect()).collect();
    let mut correlation = vec![vec![0.0; k]; k];
    let mut stderr = vec![vec![0.0; k]; k];
    let mut distances = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let r = crate::stats::correlation(&cols[a], &cols[b]);
            correlation[a][b] = r;
            stderr[a][b] = (1.0 - r * r).max(0.0) / (n_samples as f64).sqrt();
            let d = (snapped[a] - snapped[b]).abs();
            distances[a][b] = d.min(1.0 - d);
        }
    }
    Ok(ProbeResult {
        indices,
        points: snapped,
        distances,
        correlation,
        stderr,
        radius: params.independence_radius(grid.horizon()),
        n_samples,
    })
}
