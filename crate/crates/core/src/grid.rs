//! Space-time lattice, discrete white noise and solution paths.

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::real::Real;

/// Uniform lattice on `[0, T] × 𝕋`: `n_t` steps of `dt = T / n_t` and
/// `n_x` cells of `dx = 1 / n_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_x: usize,
    n_t: usize,
    horizon: f64,
}

impl Grid {
    pub fn new(n_x: usize, n_t: usize, horizon: f64) -> Result<Self> {
        if n_x < 8 || !n_x.is_power_of_two() {
            return domain(format!("n_x must be a power of two >= 8, got {n_x}"));
        }
        if n_t < 8 {
            return domain(format!("n_t must be >= 8, got {n_t}"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon must be positive and finite, got {horizon}"));
        }
        Ok(Self { n_x, n_t, horizon })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    /// Exact, since `n_x` is a power of two.
    pub fn dx(&self) -> f64 {
        1.0 / self.n_x as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_t {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn space(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_t).map(|i| self.time(i)).collect()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_x).map(|j| self.space(j)).collect()
    }

    /// Same spatial resolution and step, shorter horizon.
    pub fn truncated(&self, n_t: usize) -> Result<Self> {
        Grid::new(self.n_x, n_t, self.dt() * n_t as f64)
    }
}

/// Provenance of a stochastic path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedRecord {
    pub base_seed: u64,
    pub stream_id: u64,
}

/// Generator for one `(base_seed, stream_id)` pair.
///
/// Streams are ChaCha8 streams of the key derived from `base_seed`, so any
/// sample can be regenerated without replaying the others.
pub fn stream_rng(base_seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(stream_id);
    rng
}

/// Mix several counters into one stream identifier (splitmix64 finalizer
/// applied to a running combination).
pub fn stream_key(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// Cell increments `W([t_n, t_{n+1}) × [x_j, x_j + dx))`, each centered
/// Gaussian with variance `dt · dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    increments: Array2<f64>,
    grid: Grid,
    seed: Option<SeedRecord>,
}

impl NoiseField {
    pub fn from_increments(grid: Grid, increments: Array2<f64>) -> Result<Self> {
        if increments.dim() != (grid.n_t(), grid.n_x()) {
            return Err(Error::GridMismatch(format!(
                "noise shape {:?} does not match grid ({}, {})",
                increments.dim(),
                grid.n_t(),
                grid.n_x()
            )));
        }
        Ok(Self { increments, grid, seed: None })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { increments: Array2::zeros((grid.n_t(), grid.n_x())), grid, seed: None }
    }

    pub fn increments(&self) -> &Array2<f64> {
        &self.increments
    }

    pub fn increments_mut(&mut self) -> &mut Array2<f64> {
        &mut self.increments
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.increments.row(n)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn seed(&self) -> Option<SeedRecord> {
        self.seed
    }
}

/// Fill `out` with i.i.d. `N(0, variance)` draws from `rng`.
pub fn fill_gaussian(rng: &mut ChaCha8Rng, variance: f64, out: &mut [f64]) {
    let sd = variance.sqrt();
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = sd * z;
    }
}

pub fn sample_noise(grid: &Grid, stream_id: u64, base_seed: u64) -> NoiseField {
    let mut rng = stream_rng(base_seed, stream_id);
    let mut inc = Array2::zeros((grid.n_t(), grid.n_x()));
    fill_gaussian(&mut rng, grid.dt() * grid.dx(), inc.as_slice_mut().expect("standard layout"));
    NoiseField { increments: inc, grid: *grid, seed: Some(SeedRecord { base_seed, stream_id }) }
}

/// One sampled trajectory: row `i` is `u(t_i, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath<R> {
    values: Array2<R>,
    grid: Grid,
    seed: Option<SeedRecord>,
}

impl<R: Real> FieldPath<R> {
    pub fn new(grid: Grid, values: Array2<R>, seed: Option<SeedRecord>) -> Result<Self> {
        if values.dim() != (grid.n_t() + 1, grid.n_x()) {
            return Err(Error::GridMismatch(format!(
                "path shape {:?} does not match grid ({}, {})",
                values.dim(),
                grid.n_t() + 1,
                grid.n_x()
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numerical { step: i, detail: format!("non-finite value {v} at cell {j}") });
        }
        Ok(Self { values, grid, seed })
    }

    /// Path equal to `u0` at every time.
    pub fn constant_in_time(grid: Grid, u0: &[R]) -> Result<Self> {
        if u0.len() != grid.n_x() {
            return Err(Error::GridMismatch(format!("profile has {} points, grid {}", u0.len(), grid.n_x())));
        }
        let values = Array2::from_shape_fn((grid.n_t() + 1, grid.n_x()), |(_, j)| u0[j]);
        Self::new(grid, values, None)
    }

    pub fn values(&self) -> &Array2<R> {
        &self.values
    }

    pub fn into_values(self) -> Array2<R> {
        self.values
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn seed(&self) -> Option<SeedRecord> {
        self.seed
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, R> {
        self.values.row(i)
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, R> {
        self.values.column(j)
    }

    pub fn initial(&self) -> Vec<R> {
        self.values.row(0).to_vec()
    }

    /// Pointwise difference, requiring equal grids.
    pub fn sub(&self, other: &FieldPath<R>) -> Result<FieldPath<R>> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("paths live on different grids".into()));
        }
        Ok(FieldPath { values: &self.values - &other.values, grid: self.grid, seed: self.seed })
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Result<FieldPath<R>> {
        FieldPath::new(self.grid, self.values.mapv(f), self.seed)
    }
}

/// Sample a named initial profile on `grid`.
pub fn profile<R: Real>(grid: &Grid, f: impl Fn(f64) -> f64) -> Vec<R> {
    grid.points().into_iter().map(|x| R::lit(f(x))).collect()
}
