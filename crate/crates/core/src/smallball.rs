//! Small-ball events of solution paths and their probability estimators.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{fill_gaussian, sample_noise, stream_key, stream_rng, FieldPath, Grid, NoiseField};
use crate::heat_kernel::{kernel_convolve, lambda_theta, KernelConfig};
use crate::holder::{seminorm_diff, spatial_seminorm, spatial_sup, temporal_seminorm, temporal_sup, HolderFunction, Metric, SeminormKind};
use crate::quadrature::integrate;
use crate::solver::{discrete_semigroup, noise_term, solve_fd, DriftSpec, FdStepper, SigmaKind, SigmaSpec};
use crate::stats::{linear_fit, weighted_linear_fit, LinearFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// `sup_t 𝓗_t(u) ≤ ε`
    SpatialSup,
    /// `sup_x 𝓗_x(u) ≤ ε`
    TemporalSup,
    /// space-time semi-norm `≤ ε`
    Combined,
    /// `𝓗_T(u) ≤ ε`
    FixedTime,
    /// `𝓗_X(u) ≤ ε` at the cell `x_index`
    FixedPoint { x_index: usize },
    /// `‖u‖_∞ ≤ ε^{1/(2θ)}` and space-time semi-norm `≤ ε`
    JointWithSupnorm,
    /// sup-norm restriction `U_i` on one block
    BlockU { block: usize },
    /// Hölder restriction `H_i` on one block
    BlockH { block: usize },
    /// `U_i ∩ H_i`
    BlockB { block: usize },
    /// `∩_i (U_i ∩ H_i)` over every block
    BlockChain,
    /// `∩_i (U^#_i ∩ H^#_i ∩ T^#_i)` over every block, Λ-scaled thresholds
    BlockChainTemporal,
    /// semi-norm of `u - h` `≤ ε`
    DiffH { seminorm: SeminormKind },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    pub epsilon: f64,
    pub theta: f64,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "one")]
    pub stride: usize,
    /// Rows per time block; defaults to `round(ε^{2/θ} / dt)`.
    #[serde(default)]
    pub block_rows: Option<usize>,
    #[serde(skip)]
    pub h: Option<Arc<HolderFunction<f64>>>,
}

fn one() -> usize {
    1
}

impl EventSpec {
    pub fn new(kind: EventKind, epsilon: f64, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 0.5) {
            return domain(format!("theta must lie in (0, 1/2], got {theta}"));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return domain(format!("epsilon must be finite and non-negative, got {epsilon}"));
        }
        Ok(Self { kind, epsilon, theta, metric: Metric::default(), stride: 1, block_rows: None, h: None })
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn with_block_rows(mut self, rows: usize) -> Self {
        self.block_rows = Some(rows.max(1));
        self
    }

    pub fn with_h(mut self, h: HolderFunction<f64>) -> Self {
        self.h = Some(Arc::new(h));
        self
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    /// `ε^{1/(2θ)}`, the sup-norm scale.
    pub fn sup_scale(&self) -> f64 {
        self.epsilon.powf(0.5 / self.theta)
    }

    pub fn block_rows_on(&self, grid: &Grid) -> usize {
        self.block_rows
            .unwrap_or_else(|| ((self.epsilon.powf(2.0 / self.theta) / grid.dt()).round() as usize).max(1))
            .min(grid.n_t())
    }

    fn block_count(&self, grid: &Grid) -> usize {
        grid.n_t().div_ceil(self.block_rows_on(grid))
    }

    /// Kinds whose event is `{statistic ≤ ε}` for an ε-free statistic.
    pub fn has_statistic(&self) -> bool {
        matches!(
            self.kind,
            EventKind::SpatialSup
                | EventKind::TemporalSup
                | EventKind::Combined
                | EventKind::FixedTime
                | EventKind::FixedPoint { .. }
                | EventKind::DiffH { .. }
        )
    }
}

/// The ε-free statistic of threshold-type events.
pub fn event_statistic(path: &FieldPath<f64>, spec: &EventSpec) -> Result<f64> {
    let v = path.values();
    let horizon = path.grid().horizon();
    let th = spec.theta;
    Ok(match spec.kind {
        EventKind::SpatialSup => spatial_sup(v, th, spec.metric)?.value,
        EventKind::TemporalSup => temporal_sup(v, th, horizon, spec.stride)?.value,
        EventKind::Combined => spatial_sup(v, th, spec.metric)?.value.max(temporal_sup(v, th, horizon, spec.stride)?.value),
        EventKind::FixedTime => spatial_seminorm(&v.row(v.nrows() - 1).to_vec(), th, spec.metric)?.value,
        EventKind::FixedPoint { x_index } => {
            if x_index >= v.ncols() {
                return domain(format!("x_index {x_index} outside the grid"));
            }
            temporal_seminorm(&v.column(x_index).to_vec(), th, horizon, spec.stride)?.value
        }
        EventKind::DiffH { seminorm } => {
            let h = spec.h.as_ref().ok_or_else(|| Error::Precondition("diff_h event needs a reference h".into()))?;
            seminorm_diff(path, h, th, seminorm, spec.stride, spec.metric)?.value
        }
        _ => return Err(Error::Precondition("event kind has no scalar statistic".into())),
    })
}

fn sup_abs(rows: ArrayView2<f64>) -> f64 {
    rows.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn last_row(rows: ArrayView2<f64>) -> Vec<f64> {
    rows.row(rows.nrows() - 1).to_vec()
}

fn row_max_seminorm(rows: ArrayView2<f64>, theta: f64, metric: Metric) -> Result<f64> {
    Ok(spatial_sup(&rows.to_owned(), theta, metric)?.value)
}

fn holds_u(rows: ArrayView2<f64>, a: f64) -> bool {
    let last = last_row(rows).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    last <= a / 6.0 && sup_abs(rows) <= 2.0 * a / 3.0
}

fn holds_h(rows: ArrayView2<f64>, spec: &EventSpec) -> Result<bool> {
    let last = spatial_seminorm(&last_row(rows), spec.theta, spec.metric)?.value;
    Ok(last <= spec.epsilon / 6.0 && row_max_seminorm(rows, spec.theta, spec.metric)? <= 2.0 * spec.epsilon / 3.0)
}

fn holds_temporal_block(rows: ArrayView2<f64>, spec: &EventSpec, duration: f64) -> Result<bool> {
    let th = spec.theta;
    let eps = spec.epsilon;
    let lam = lambda_theta(th)?;
    let c2 = duration / eps.powf(2.0 / th);
    let scale = spec.sup_scale() / c2.powf(th / 2.0 - 0.25);
    let last = last_row(rows).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(last <= scale / 8.0 && sup_abs(rows) <= scale / 4.0) {
        return Ok(false);
    }
    let h_last = spatial_seminorm(&last_row(rows), th, spec.metric)?.value;
    if !(h_last <= eps / (8.0 * lam) && row_max_seminorm(rows, th, spec.metric)? <= eps / (2.0 * lam)) {
        return Ok(false);
    }
    Ok(temporal_sup(&rows.to_owned(), th, duration, spec.stride)?.value <= eps / 2.0)
}

/// Whether block `index` (rows `[t_i, t_{i+1}]`, both ends included)
/// satisfies its share of a decomposable event.
fn block_holds(spec: &EventSpec, rows: ArrayView2<f64>, index: usize, n_blocks: usize, duration: f64) -> Result<bool> {
    match spec.kind {
        EventKind::SpatialSup => Ok(row_max_seminorm(rows, spec.theta, spec.metric)? <= spec.epsilon),
        EventKind::FixedTime => {
            if index + 1 < n_blocks {
                Ok(true)
            } else {
                Ok(spatial_seminorm(&last_row(rows), spec.theta, spec.metric)?.value <= spec.epsilon)
            }
        }
        EventKind::BlockU { block } => Ok(index != block || holds_u(rows, spec.sup_scale())),
        EventKind::BlockH { block } => Ok(index != block || holds_h(rows, spec)?),
        EventKind::BlockB { block } => Ok(index != block || (holds_u(rows, spec.sup_scale()) && holds_h(rows, spec)?)),
        EventKind::BlockChain => Ok(holds_u(rows, spec.sup_scale()) && holds_h(rows, spec)?),
        EventKind::BlockChainTemporal => holds_temporal_block(rows, spec, duration),
        _ => Err(Error::NotDecomposable(format!("{:?} does not split over time blocks", spec.kind))),
    }
}

pub fn is_decomposable(kind: EventKind) -> bool {
    matches!(
        kind,
        EventKind::SpatialSup
            | EventKind::FixedTime
            | EventKind::BlockU { .. }
            | EventKind::BlockH { .. }
            | EventKind::BlockB { .. }
            | EventKind::BlockChain
            | EventKind::BlockChainTemporal
    )
}

/// Exact evaluation of the event on one path.
pub fn event_check(path: &FieldPath<f64>, spec: &EventSpec) -> Result<bool> {
    if spec.has_statistic() {
        return Ok(event_statistic(path, spec)? <= spec.epsilon);
    }
    let grid = path.grid();
    if spec.kind == EventKind::JointWithSupnorm {
        if sup_abs(path.values().view()) > spec.sup_scale() {
            return Ok(false);
        }
        let c = EventSpec { kind: EventKind::Combined, ..spec.clone() };
        return Ok(event_statistic(path, &c)? <= spec.epsilon);
    }
    let b = spec.block_rows_on(grid);
    let n_blocks = spec.block_count(grid);
    if let EventKind::BlockU { block } | EventKind::BlockH { block } | EventKind::BlockB { block } = spec.kind {
        if block >= n_blocks {
            return domain(format!("block {block} beyond the {n_blocks} blocks of the grid"));
        }
    }
    for i in 0..n_blocks {
        let (lo, hi) = (i * b, ((i + 1) * b).min(grid.n_t()));
        let rows = path.values().slice(s![lo..=hi, ..]);
        let duration = grid.time(hi) - grid.time(lo);
        if !block_holds(spec, rows, i, n_blocks, duration)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Refuses initial profiles outside the hypotheses of the matching result.
pub fn check_initial_profile(spec: &EventSpec, u0: &[f64]) -> Result<()> {
    let h = spatial_seminorm(u0, spec.theta, spec.metric)?.value;
    let sup = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lam = lambda_theta(spec.theta)?;
    let eps = spec.epsilon;
    let (h_bound, sup_bound) = match spec.kind {
        EventKind::SpatialSup | EventKind::FixedTime => (eps / 2.0, f64::INFINITY),
        EventKind::TemporalSup | EventKind::FixedPoint { .. } => (eps / (2.0 * lam), f64::INFINITY),
        EventKind::Combined => (eps / 2.0 * (1.0f64).min(1.0 / lam), f64::INFINITY),
        EventKind::JointWithSupnorm => (eps / 2.0 * (1.0f64).min(1.0 / lam), spec.sup_scale() / 2.0),
        EventKind::BlockU { .. } | EventKind::BlockH { .. } | EventKind::BlockB { .. } | EventKind::BlockChain => {
            (eps / 3.0, spec.sup_scale() / 3.0)
        }
        EventKind::BlockChainTemporal => (eps / (8.0 * lam), f64::INFINITY),
        EventKind::DiffH { .. } => return Ok(()),
    };
    if h > h_bound {
        return Err(Error::Precondition(format!("initial semi-norm {h} exceeds {h_bound}")));
    }
    if sup > sup_bound {
        return Err(Error::Precondition(format!("initial sup-norm {sup} exceeds {sup_bound}")));
    }
    Ok(())
}

/// Reduced path `v = u - G_t * u0`, row by row.
pub fn reduced_path(path: &FieldPath<f64>, u0: &[f64], cfg: &KernelConfig<f64>) -> Result<FieldPath<f64>> {
    let grid = *path.grid();
    let mut v = Array2::zeros(path.values().dim());
    for i in 0..=grid.n_t() {
        let row = noise_term(path, u0, i, cfg)?;
        v.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    FieldPath::new(grid, v, path.seed())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plain,
    Splitting,
    Importance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub p_hat: f64,
    pub n: usize,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub method: Method,
    pub base_seed: u64,
    /// Sample (or replication) indices `first..first + count`.
    pub samples: (u64, u64),
    #[serde(default)]
    pub ess: Option<f64>,
    #[serde(default)]
    pub low_confidence: bool,
}

fn interval(p_hat: f64, stderr: f64, n: usize, zero: bool) -> (f64, f64) {
    if zero {
        // rule of three
        (0.0, (3.0 / n as f64).min(1.0))
    } else {
        ((p_hat - 1.96 * stderr).max(0.0), (p_hat + 1.96 * stderr).min(1.0_f64.max(p_hat)))
    }
}

/// Monte Carlo ensemble: `n` paths of the scheme started at `u0`.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub grid: Grid,
    pub sigma: SigmaSpec<f64>,
    pub u0: Vec<f64>,
    pub n: usize,
    pub base_seed: u64,
}

impl Ensemble {
    pub fn new(grid: Grid, sigma: SigmaSpec<f64>, u0: Vec<f64>, n: usize, base_seed: u64) -> Result<Self> {
        if u0.len() != grid.n_x() || u0.iter().any(|v| !v.is_finite()) {
            return domain("initial profile must be finite with one value per cell");
        }
        Ok(Self { grid, sigma, u0, n, base_seed })
    }

    pub fn noise(&self, i: usize) -> NoiseField {
        sample_noise(&self.grid, stream_key(&[i as u64]), self.base_seed)
    }

    pub fn path(&self, i: usize) -> Result<FieldPath<f64>> {
        solve_fd(&self.grid, &self.sigma, &self.u0, None, &self.noise(i))
    }
}

fn require_samples(n: usize) -> Result<()> {
    if n < 100 {
        return Err(Error::Insufficient(format!("need at least 100 samples, got {n}")));
    }
    Ok(())
}

/// Mean and standard error of per-sample weights, population variance.
fn weighted_moments(weights: &[f64]) -> (f64, f64) {
    let n = weights.len() as f64;
    let p = weights.iter().sum::<f64>() / n;
    let var = weights.iter().map(|w| (w - p).powi(2)).sum::<f64>() / n;
    (p, (var / n).sqrt())
}

fn binomial(outcomes: &[bool], base_seed: u64) -> MCEstimate {
    let n = outcomes.len();
    let weights: Vec<f64> = outcomes.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    let (p, se) = weighted_moments(&weights);
    let zero = !outcomes.contains(&true);
    MCEstimate {
        p_hat: p,
        n,
        stderr: se,
        ci95: interval(p, se, n, zero),
        method: Method::Plain,
        base_seed,
        samples: (0, n as u64),
        ess: None,
        low_confidence: zero,
    }
}

pub fn estimate_plain(spec: &EventSpec, ens: &Ensemble) -> Result<MCEstimate> {
    Ok(estimate_plain_many(std::slice::from_ref(spec), ens)?.pop().expect("one spec"))
}

/// Plain estimates of several events on common paths.
pub fn estimate_plain_many(specs: &[EventSpec], ens: &Ensemble) -> Result<Vec<MCEstimate>> {
    require_samples(ens.n)?;
    let hits: Vec<Vec<bool>> = (0..ens.n)
        .into_par_iter()
        .map(|i| {
            let path = ens.path(i)?;
            specs.iter().map(|s| event_check(&path, s)).collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..specs.len())
        .map(|k| binomial(&hits.iter().map(|h| h[k]).collect::<Vec<_>>(), ens.base_seed))
        .collect())
}

/// ε-free statistics of threshold-type events, one vector per spec, on common paths.
pub fn sample_statistics(specs: &[EventSpec], ens: &Ensemble) -> Result<Vec<Vec<f64>>> {
    if let Some(s) = specs.iter().find(|s| !s.has_statistic()) {
        return Err(Error::Precondition(format!("{:?} has no scalar statistic", s.kind)));
    }
    let per_path: Vec<Vec<f64>> = (0..ens.n)
        .into_par_iter()
        .map(|i| {
            let path = ens.path(i)?;
            specs.iter().map(|s| event_statistic(&path, s)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..specs.len()).map(|k| per_path.iter().map(|r| r[k]).collect()).collect())
}

/// Plain estimate of `P(statistic ≤ ε)` from precomputed statistics.
pub fn estimate_from_statistics(stats: &[f64], epsilon: f64, base_seed: u64) -> Result<MCEstimate> {
    require_samples(stats.len())?;
    Ok(binomial(&stats.iter().map(|&v| v <= epsilon).collect::<Vec<_>>(), base_seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingConfig {
    /// Particles per block.
    pub m: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingEstimate {
    pub estimate: MCEstimate,
    /// Survival fraction of each block, per replication.
    pub fractions: Vec<Vec<f64>>,
    /// Per-replication products.
    pub replicate_estimates: Vec<f64>,
    pub extinct: usize,
}

const SPLIT_NOISE: u64 = 1;
const SPLIT_RESAMPLE: u64 = 2;

/// Fixed-effort multilevel splitting over the time blocks of a decomposable event.
pub fn estimate_splitting(spec: &EventSpec, ens: &Ensemble, cfg: &SplittingConfig) -> Result<SplittingEstimate> {
    if !is_decomposable(spec.kind) {
        return Err(Error::NotDecomposable(format!("{:?} does not split over time blocks", spec.kind)));
    }
    if cfg.m < 2 || cfg.replications < 1 {
        return Err(Error::Insufficient("splitting needs m ≥ 2 and at least one replication".into()));
    }
    let grid = ens.grid;
    let b = spec.block_rows_on(&grid);
    let n_blocks = spec.block_count(&grid);
    let stepper = FdStepper::new(&grid, &ens.sigma, None);
    let var = grid.dt() * grid.dx();
    let n_x = grid.n_x();

    let run = |r: usize| -> Result<Vec<f64>> {
        let mut states: Vec<Vec<f64>> = vec![ens.u0.clone(); cfg.m];
        let mut fractions = Vec::with_capacity(n_blocks);
        for blk in 0..n_blocks {
            let (lo, hi) = (blk * b, ((blk + 1) * b).min(grid.n_t()));
            let duration = grid.time(hi) - grid.time(lo);
            let outcomes: Vec<Option<Vec<f64>>> = states
                .par_iter()
                .enumerate()
                .map(|(k, u_start)| {
                    let mut rng = stream_rng(ens.base_seed, stream_key(&[SPLIT_NOISE, r as u64, blk as u64, k as u64]));
                    let mut rows = Array2::zeros((hi - lo + 1, n_x));
                    rows.row_mut(0).assign(&ndarray::ArrayView1::from(&u_start[..]));
                    let mut u = u_start.clone();
                    let mut dw = vec![0.0; n_x];
                    for n in lo..hi {
                        fill_gaussian(&mut rng, var, &mut dw);
                        u = stepper.step(n, &u, &dw)?;
                        rows.row_mut(n + 1 - lo).assign(&ndarray::ArrayView1::from(&u[..]));
                    }
                    Ok(block_holds(spec, rows.view(), blk, n_blocks, duration)?.then_some(u))
                })
                .collect::<Result<_>>()?;
            let survivors: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
            fractions.push(survivors.len() as f64 / cfg.m as f64);
            if survivors.is_empty() {
                break;
            }
            let mut rng = stream_rng(ens.base_seed, stream_key(&[SPLIT_RESAMPLE, r as u64, blk as u64]));
            states = (0..cfg.m).map(|_| survivors[rng.random_range(0..survivors.len())].clone()).collect();
        }
        Ok(fractions)
    };

    let fractions: Vec<Vec<f64>> = (0..cfg.replications).map(run).collect::<Result<_>>()?;
    let products: Vec<f64> = fractions.iter().map(|f| f.iter().product::<f64>()).collect();
    let extinct = fractions.iter().filter(|f| f.last() == Some(&0.0)).count();
    let r = cfg.replications as f64;
    let p_hat = products.iter().sum::<f64>() / r;
    let stderr = if cfg.replications > 1 {
        (crate::stats::variance(&products) / r).sqrt()
    } else {
        let f = &fractions[0];
        if f.contains(&0.0) {
            0.0
        } else {
            p_hat * f.iter().map(|&q| (1.0 - q) / (q * cfg.m as f64)).sum::<f64>().sqrt()
        }
    };
    let n = cfg.m * cfg.replications;
    let estimate = MCEstimate {
        p_hat,
        n,
        stderr,
        ci95: interval(p_hat, stderr, n, p_hat == 0.0),
        method: Method::Splitting,
        base_seed: ens.base_seed,
        samples: (0, cfg.replications as u64),
        ess: None,
        low_confidence: extinct > 0,
    };
    Ok(SplittingEstimate { estimate, fractions, replicate_estimates: products, extinct })
}

/// Change of measure that steers the deterministic part of the scheme to
/// zero at `t1`: under `Q` the noise is `dW̃ = dW + h dt dx` with
/// `h_{n,j} = (A^n u0)_j / (σ(t_n, x_j) t1)` for `t_n < t1`.
#[derive(Debug, Clone)]
pub struct GirsanovTilt {
    grid: Grid,
    steps: usize,
    h: Array2<f64>,
    drift: DriftSpec<f64>,
}

impl GirsanovTilt {
    pub fn drift(&self) -> &DriftSpec<f64> {
        &self.drift
    }

    /// Number of tilted steps, `t1 / dt`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `Σ h² dt dx`, the discrete `Z^{(2)}`.
    pub fn quadratic(&self) -> f64 {
        self.h.iter().map(|v| v * v).sum::<f64>() * self.grid.dt() * self.grid.dx()
    }

    fn linear(&self, noise: &NoiseField) -> f64 {
        let mut acc = 0.0;
        for n in 0..self.steps {
            for (hv, w) in self.h.row(n).iter().zip(noise.row(n)) {
                acc += hv * w;
            }
        }
        acc
    }

    /// `log dP/dQ` evaluated on noise simulated under `Q`.
    pub fn log_dp_dq(&self, noise_q: &NoiseField) -> f64 {
        self.linear(noise_q) - 0.5 * self.quadratic()
    }

    /// `log dQ/dP = Z^{(1)} - Z^{(2)}/2` evaluated on noise simulated under `P`.
    pub fn log_dq_dp(&self, noise_p: &NoiseField) -> f64 {
        -self.linear(noise_p) - 0.5 * self.quadratic()
    }
}

pub fn girsanov_tilt(grid: &Grid, u0: &[f64], t1: f64, sigma: &SigmaSpec<f64>) -> Result<GirsanovTilt> {
    if sigma.kind() == SigmaKind::UDependent {
        return Err(Error::Precondition("the tilt needs σ independent of u".into()));
    }
    if u0.len() != grid.n_x() || u0.iter().any(|v| !v.is_finite()) {
        return domain("initial profile must be finite with one value per cell");
    }
    let ratio = t1 / grid.dt();
    let steps = ratio.round() as usize;
    if !(t1 > 0.0) || (ratio - steps as f64).abs() > 1e-6 || steps > grid.n_t() || steps == 0 {
        return domain(format!("t1 = {t1} must be a positive multiple of dt within the horizon"));
    }
    let xs = grid.points();
    let mut h = Array2::zeros((steps, grid.n_x()));
    let mut table = Array2::zeros((grid.n_t(), grid.n_x()));
    let mut det = u0.to_vec();
    for n in 0..steps {
        let t = grid.time(n);
        for j in 0..grid.n_x() {
            h[[n, j]] = det[j] / (sigma.eval(t, xs[j], 0.0) * t1);
            table[[n, j]] = -det[j] / t1;
        }
        det = discrete_semigroup(grid, &det, 1);
    }
    let drift = DriftSpec::tabulated(grid, table)?;
    Ok(GirsanovTilt { grid: *grid, steps, h, drift })
}

/// `exp(∫_0^{t1} ∫_𝕋 |(G_s * u0)(y) / (σ(s, y) t1)|² dy ds)` by quadrature in
/// `s`, with the spatial integral taken on the grid of `u0`.
pub fn rn_second_moment(u0: &[f64], sigma: &SigmaSpec<f64>, t1: f64, cfg: &KernelConfig<f64>) -> Result<f64> {
    if sigma.kind() == SigmaKind::UDependent {
        return Err(Error::Precondition("the tilt needs σ independent of u".into()));
    }
    if !(t1 > 0.0) {
        return domain("t1 must be positive");
    }
    let n = u0.len();
    let c1 = sigma.c1();
    let mut failure: Option<Error> = None;
    let q = integrate(
        |s| {
            let conv = match kernel_convolve(u0, s, cfg) {
                Ok(c) => c,
                Err(e) => {
                    failure.get_or_insert(e);
                    return 0.0;
                }
            };
            let mut acc = 0.0;
            for (j, g) in conv.iter().enumerate() {
                let sg = sigma.eval(s, j as f64 / n as f64, 0.0);
                if sg < c1 * (1.0 - 1e-12) {
                    failure.get_or_insert(Error::Domain(format!("σ({s}, {}) = {sg} below 𝒞₁ = {c1}", j as f64 / n as f64)));
                }
                acc += (g / (sg * t1)).powi(2);
            }
            acc / n as f64
        },
        0.0,
        t1,
        &[],
        1e-12,
        cfg.quad_max_subdiv,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(q.value.exp())
}

/// Importance-sampling estimate of `P(A) = E_Q[(dP/dQ) 1_A]`, simulating
/// under the tilted dynamics. Uses the same noise streams as [`estimate_plain`].
pub fn estimate_importance(spec: &EventSpec, tilt: &GirsanovTilt, ens: &Ensemble) -> Result<MCEstimate> {
    require_samples(ens.n)?;
    if tilt.grid != ens.grid {
        return Err(Error::GridMismatch("tilt and ensemble grids differ".into()));
    }
    let weighted: Vec<f64> = (0..ens.n)
        .into_par_iter()
        .map(|i| {
            let noise = ens.noise(i);
            let path = solve_fd(&ens.grid, &ens.sigma, &ens.u0, Some(&tilt.drift), &noise)?;
            Ok(if event_check(&path, spec)? { tilt.log_dp_dq(&noise).exp() } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    let (p_hat, stderr) = weighted_moments(&weighted);
    let hits: Vec<f64> = weighted.iter().copied().filter(|&w| w > 0.0).collect();
    let ess = if hits.is_empty() {
        0.0
    } else {
        hits.iter().sum::<f64>().powi(2) / hits.iter().map(|w| w * w).sum::<f64>()
    };
    let low = ess < 30.0;
    if low {
        log::warn!("importance sampling effective sample size {ess:.1} below 30");
    }
    Ok(MCEstimate {
        p_hat,
        n: ens.n,
        stderr,
        ci95: interval(p_hat, stderr, ens.n, hits.is_empty()),
        method: Method::Importance,
        base_seed: ens.base_seed,
        samples: (0, ens.n as u64),
        ess: Some(ess),
        low_confidence: low,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub epsilon: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
    pub rows: Vec<FitRow>,
}

/// Weighted least squares of `log(-log p̂)` on `log ε`. Weights come from the
/// delta method, `sd = stderr / (p̂ |log p̂|)`; without positive standard
/// errors the fit is unweighted.
pub fn exponent_fit(table: &[(f64, f64, f64)]) -> Result<ExponentFit> {
    let mut rows = Vec::with_capacity(table.len());
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for &(eps, p, se) in table {
        let used = p > 0.0 && p < 1.0 && eps > 0.0;
        if !used {
            log::warn!("excluding ε = {eps} with p̂ = {p} from the exponent fit");
        } else {
            xs.push(eps.ln());
            ys.push((-p.ln()).ln());
            let sd = se / (p * p.ln().abs());
            ws.push(if sd > 0.0 { 1.0 / (sd * sd) } else { 0.0 });
        }
        rows.push(FitRow { epsilon: eps, p_hat: p, stderr: se, used });
    }
    if xs.len() < 4 {
        return Err(Error::Insufficient(format!("exponent fit needs 4 usable ε values, got {}", xs.len())));
    }
    let fit = if ws.iter().all(|&w| w > 0.0 && w.is_finite()) { weighted_linear_fit(&xs, &ys, &ws)? } else { linear_fit(&xs, &ys)? };
    Ok(ExponentFit { slope: fit.slope, intercept: fit.intercept, r2: fit.r2, slope_stderr: fit.slope_stderr, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailStatistic {
    /// `sup |N| / ε^{1/(2θ)}`
    SupN,
    /// `sup |Ñ| / ε`
    SupNTilde,
    /// `sup |N^#| / ε`
    SupNHash,
}

/// Box `[0, α ε^{2/θ}] × [a, a + ε^{1/θ}]` and its resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBox {
    pub epsilon: f64,
    pub theta: f64,
    pub alpha: f64,
    pub a: f64,
    pub n_x: usize,
    pub n_t: usize,
}

impl TailBox {
    pub fn grid(&self) -> Result<Grid> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) || !(self.theta > 0.0 && self.theta <= 0.5) || !(self.alpha > 0.0) {
            return domain("need ε ∈ (0, 1), θ ∈ (0, 1/2], α > 0");
        }
        Grid::new(self.n_x, self.n_t, self.alpha * self.epsilon.powf(2.0 / self.theta))
    }

    fn columns(&self, grid: &Grid) -> Result<Vec<usize>> {
        let w = self.epsilon.powf(1.0 / self.theta);
        if !(self.a >= 0.0 && self.a + w < 1.0) {
            return domain("box must satisfy 0 ≤ a and a + ε^{1/θ} < 1");
        }
        let cols: Vec<usize> =
            (0..grid.n_x()).filter(|&j| grid.space(j) >= self.a - 1e-12 && grid.space(j) <= self.a + w + 1e-12).collect();
        if cols.len() < 2 {
            return domain("box narrower than two grid cells");
        }
        Ok(cols)
    }
}

fn box_statistic(stat: TailStatistic, bx: &TailBox, grid: &Grid, cols: &[usize], v: &Array2<f64>) -> Result<f64> {
    let th = bx.theta;
    Ok(match stat {
        TailStatistic::SupN => cols.iter().map(|&j| v.column(j).iter().fold(0.0f64, |m, x| m.max(x.abs()))).fold(0.0, f64::max)
            / bx.epsilon.powf(0.5 / th),
        TailStatistic::SupNTilde => {
            let a = 0.5 - th;
            let mut best = 0.0f64;
            for row in v.axis_iter(Axis(0)) {
                for (p, &i) in cols.iter().enumerate() {
                    for &j in &cols[p + 1..] {
                        let d = ((j - i) as f64 * grid.dx()).powf(a);
                        best = best.max((row[i] - row[j]).abs() / d);
                    }
                }
            }
            best / bx.epsilon
        }
        TailStatistic::SupNHash => {
            let mut best = 0.0f64;
            for &j in cols {
                best = best.max(temporal_seminorm(&v.column(j).to_vec(), th, grid.horizon(), 1)?.value);
            }
            best / bx.epsilon
        }
    })
}

/// Normalized box statistics of `N` (the solution started at zero).
pub fn tail_samples(
    stat: TailStatistic,
    bx: &TailBox,
    sigma: &SigmaSpec<f64>,
    n_samples: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    let grid = bx.grid()?;
    let cols = bx.columns(&grid)?;
    let ens = Ensemble::new(grid, sigma.clone(), vec![0.0; grid.n_x()], n_samples, base_seed)?;
    (0..n_samples)
        .into_par_iter()
        .map(|i| box_statistic(stat, bx, &grid, &cols, ens.path(i)?.values()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub lambda: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Empirical `P(statistic > λ)` on a λ grid.
pub fn tail_curve(samples: &[f64], lambdas: &[f64]) -> Vec<TailRow> {
    let n = samples.len();
    lambdas
        .iter()
        .map(|&lambda| {
            let hits = samples.iter().filter(|&&s| s > lambda).count();
            let p = hits as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let (ci_lo, ci_hi) = interval(p, se, n, hits == 0);
            TailRow { lambda, p_hat: p, stderr: se, ci_lo, ci_hi }
        })
        .collect()
}

/// Least squares of `log p̂` on `λ²` over rows with `p̂ ∈ [p_min, p_max]`.
pub fn tail_fit(rows: &[TailRow], p_min: f64, p_max: f64) -> Result<LinearFit> {
    let used: Vec<&TailRow> = rows.iter().filter(|r| r.p_hat >= p_min && r.p_hat <= p_max && r.p_hat > 0.0).collect();
    if used.len() < 3 {
        return Err(Error::Insufficient(format!("tail fit needs 3 rows in range, got {}", used.len())));
    }
    let x: Vec<f64> = used.iter().map(|r| r.lambda * r.lambda).collect();
    let y: Vec<f64> = used.iter().map(|r| r.p_hat.ln()).collect();
    linear_fit(&x, &y)
}
