//! Seeded Gaussian increment streams and the one-dimensional building blocks
//! of the skew-product construction: the 2-D Bessel radius, reflected
//! Brownian motion on `[0, π]`, and the clock `σ(t) = ∫ R⁻² ds`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("radius at index {0} is not positive")]
    ZeroRadius(usize),
    #[error("clock value {value} at index {index} lies outside the sampled range")]
    ClockOutOfRange { index: usize, value: f64 },
    #[error("increment buffer has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("expected a {expected}-dimensional stream, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Identifies one independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    #[serde(rename = "seed")]
    pub master_seed: u64,
    pub trial: u64,
    #[serde(default)]
    pub stream: u32,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub const fn new(master_seed: u64, trial: u64, stream: u32) -> Self {
        SeedSpec {
            master_seed,
            trial,
            stream,
        }
    }

    pub const fn with_stream(self, stream: u32) -> Self {
        SeedSpec { stream, ..self }
    }

    /// 256-bit key mixing all three fields.
    pub fn key(&self) -> [u8; 32] {
        let mut state = self.master_seed;
        let a = splitmix64(&mut state);
        state ^= self.trial.wrapping_mul(0xd134_2543_de82_ef95);
        let b = splitmix64(&mut state);
        state ^= u64::from(self.stream).wrapping_mul(0xa076_1d64_78bd_642f);
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let w = splitmix64(&mut state) ^ a.rotate_left(i as u32 * 16) ^ b;
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}

/// Uniform time grid `t_k = k·dt`, `k = 0..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub dt: f64,
    pub n: usize,
    pub dim: usize,
}

impl PathGrid {
    pub fn new(dt: f64, n: usize, dim: usize) -> Result<Self, NoiseError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(NoiseError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if n == 0 {
            return Err(NoiseError::InvalidGrid("need at least one step".into()));
        }
        if dim == 0 {
            return Err(NoiseError::InvalidGrid("dimension must be positive".into()));
        }
        Ok(PathGrid { dt, n, dim })
    }

    /// Grid with `round(horizon/dt)` steps.
    pub fn from_horizon(dt: f64, horizon: f64, dim: usize) -> Result<Self, NoiseError> {
        if !(horizon >= dt) {
            return Err(NoiseError::InvalidGrid(format!(
                "horizon {horizon} shorter than dt {dt}"
            )));
        }
        PathGrid::new(dt, (horizon / dt).round() as usize, dim)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    pub fn with_dim(self, dim: usize) -> Self {
        PathGrid { dim, ..self }
    }
}

/// `n` Gaussian increments of dimension `dim`, each component `N(0, dt)`,
/// stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementStream {
    grid: PathGrid,
    data: Vec<f64>,
}

impl IncrementStream {
    /// Wraps caller-supplied increments, e.g. to force a specific driver.
    pub fn from_raw(grid: PathGrid, data: Vec<f64>) -> Result<Self, NoiseError> {
        let expected = grid.n * grid.dim;
        if data.len() != expected {
            return Err(NoiseError::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(IncrementStream { grid, data })
    }

    pub fn zeros(grid: PathGrid) -> Self {
        IncrementStream {
            data: vec![0.0; grid.n * grid.dim],
            grid,
        }
    }

    pub fn grid(&self) -> PathGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.n
    }

    pub fn is_empty(&self) -> bool {
        self.grid.n == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Increment `k` as a slice of length `dim`.
    pub fn row(&self, k: usize) -> &[f64] {
        let d = self.grid.dim;
        &self.data[k * d..(k + 1) * d]
    }

    /// Increment `k` of a planar stream.
    #[inline]
    pub fn point(&self, k: usize) -> Point {
        Point::new(self.data[2 * k], self.data[2 * k + 1])
    }

    pub fn expect_dim(&self, dim: usize) -> Result<(), NoiseError> {
        if self.grid.dim == dim {
            Ok(())
        } else {
            Err(NoiseError::DimensionMismatch {
                expected: dim,
                got: self.grid.dim,
            })
        }
    }

    /// Running sums `Σ_{j<k} ΔB_j` for `k = 0..=n`, flattened.
    pub fn cumulative(&self) -> Vec<f64> {
        let d = self.grid.dim;
        let mut out = vec![0.0; (self.grid.n + 1) * d];
        for k in 0..self.grid.n {
            for c in 0..d {
                out[(k + 1) * d + c] = out[k * d + c] + self.data[k * d + c];
            }
        }
        out
    }
}

pub fn sample_increments(seed: SeedSpec, grid: PathGrid) -> IncrementStream {
    let mut rng = seed.rng();
    let sd = grid.dt.sqrt();
    let data = (0..grid.n * grid.dim)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    IncrementStream { grid, data }
}

/// Unbounded stream of standard normals from one seed.
pub struct GaussianSource {
    rng: ChaCha8Rng,
}

impl GaussianSource {
    pub fn new(seed: SeedSpec) -> Self {
        GaussianSource { rng: seed.rng() }
    }

    #[inline]
    pub fn standard(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// `R_k = ‖(r0, 0) + Σ_{j<k} ΔB_j‖` for `k = 0..=n`.
pub fn bessel2_from_increments(r0: f64, noise: &IncrementStream) -> Result<Vec<f64>, NoiseError> {
    noise.expect_dim(2)?;
    let mut p = Point::new(r0, 0.0);
    let mut out = Vec::with_capacity(noise.len() + 1);
    out.push(p.norm());
    for k in 0..noise.len() {
        p += noise.point(k);
        out.push(p.norm());
    }
    Ok(out)
}

/// Radius of a planar Brownian motion started at distance `r0`.
pub fn simulate_bessel2(r0: f64, seed: SeedSpec, grid: PathGrid) -> Vec<f64> {
    let noise = sample_increments(seed, grid.with_dim(2));
    bessel2_from_increments(r0, &noise).expect("planar stream")
}

/// One step of the two-sided Skorokhod map on `[0, π]` by reflection
/// folding. Returns the new position and the pushes at 0 and at π.
#[inline]
pub fn fold_step(theta: f64, delta: f64) -> (f64, f64, f64) {
    let mut p = theta + delta;
    let mut lower = 0.0;
    let mut upper = 0.0;
    loop {
        if p < 0.0 {
            lower -= 2.0 * p;
            p = -p;
        } else if p > PI {
            upper += 2.0 * (p - PI);
            p = 2.0 * PI - p;
        } else {
            return (p, lower, upper);
        }
    }
}

/// Reflected walk on `[0, π]` with cumulative pushes at each wall.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalPath {
    pub path: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn skorokhod_interval(start: f64, driver: &IncrementStream) -> Result<IntervalPath, NoiseError> {
    driver.expect_dim(1)?;
    let n = driver.len();
    let mut path = Vec::with_capacity(n + 1);
    let mut lower = Vec::with_capacity(n + 1);
    let mut upper = Vec::with_capacity(n + 1);
    let (mut th, mut lo, mut up) = (start.clamp(0.0, PI), 0.0, 0.0);
    path.push(th);
    lower.push(lo);
    upper.push(up);
    for &d in driver.as_slice() {
        let (next, pl, pu) = fold_step(th, d);
        th = next;
        lo += pl;
        up += pu;
        path.push(th);
        lower.push(lo);
        upper.push(up);
    }
    Ok(IntervalPath { path, lower, upper })
}

/// Clock values `σ(t_k) = Σ_{j<k} R_j⁻²·dt`, `σ(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClockPath {
    pub values: Vec<f64>,
}

pub const MIN_RADIUS: f64 = 1e-12;

pub fn clock_sigma(radii: &[f64], dt: f64) -> Result<ClockPath, NoiseError> {
    if let Some(i) = radii.iter().position(|&r| !(r > MIN_RADIUS)) {
        return Err(NoiseError::ZeroRadius(i));
    }
    let mut values = Vec::with_capacity(radii.len());
    let mut s = 0.0;
    values.push(0.0);
    for r in radii.iter().take(radii.len().saturating_sub(1)) {
        s += dt / (r * r);
        values.push(s);
    }
    Ok(ClockPath { values })
}

/// Evaluates a path given on the σ-grid `j·dsigma` at the clock values, by
/// linear interpolation.
pub fn sample_at_clock(path: &[f64], dsigma: f64, clock: &ClockPath) -> Result<Vec<f64>, NoiseError> {
    let span = dsigma * (path.len().saturating_sub(1)) as f64;
    clock
        .values
        .iter()
        .enumerate()
        .map(|(index, &s)| {
            let slack = 1e-12 * span.max(1.0);
            if path.is_empty() || s < -slack || s > span + slack {
                return Err(NoiseError::ClockOutOfRange { index, value: s });
            }
            let u = (s / dsigma).max(0.0);
            let j = (u.floor() as usize).min(path.len() - 1);
            if j + 1 >= path.len() {
                return Ok(path[path.len() - 1]);
            }
            let w = u - j as f64;
            Ok(path[j] + w * (path[j + 1] - path[j]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(dt: f64, n: usize, dim: usize) -> PathGrid {
        PathGrid::new(dt, n, dim).unwrap()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let g = grid(1e-3, 1000, 2);
        let a = sample_increments(SeedSpec::new(7, 0, 0), g);
        let b = sample_increments(SeedSpec::new(7, 0, 0), g);
        assert_eq!(a, b);
        let c = sample_increments(SeedSpec::new(7, 1, 0), g);
        assert_ne!(a.as_slice()[0], c.as_slice()[0]);
        let d = sample_increments(SeedSpec::new(7, 0, 1), g);
        assert_ne!(a.as_slice(), d.as_slice());
    }

    #[test]
    fn sample_moments() {
        let n = 100_000;
        let dt = 1e-3;
        let s = sample_increments(SeedSpec::new(11, 3, 0), grid(dt, n, 1));
        let mean = s.as_slice().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt(), "mean {mean}");
        let var = s.as_slice().iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - dt).abs() < 5.0 * dt * (2.0 / n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn bessel_examples() {
        let g = grid(0.1, 5, 2);
        let r = bessel2_from_increments(0.7, &IncrementStream::zeros(g)).unwrap();
        assert!(r.iter().all(|&x| x == 0.7));
        let one = IncrementStream::from_raw(grid(1.0, 1, 2), vec![3.0, 4.0]).unwrap();
        assert_eq!(bessel2_from_increments(0.0, &one).unwrap(), vec![0.0, 5.0]);
    }

    #[test]
    fn interval_examples() {
        let g = grid(1.0, 1, 1);
        let d = |x: f64| IncrementStream::from_raw(g, vec![x]).unwrap();
        let r = skorokhod_interval(0.5, &d(0.2)).unwrap();
        assert!((r.path[1] - 0.7).abs() < 1e-15);
        assert_eq!((r.lower[1], r.upper[1]), (0.0, 0.0));
        let r = skorokhod_interval(0.5, &d(-1.0)).unwrap();
        assert!((r.path[1] - 0.5).abs() < 1e-15);
        assert!((r.lower[1] - 1.0).abs() < 1e-15);
        let r = skorokhod_interval(PI, &d(0.3)).unwrap();
        assert!((r.path[1] - (PI - 0.3)).abs() < 1e-15);
        assert!((r.upper[1] - 0.6).abs() < 1e-15);
        // several folds in one step
        let (p, lo, up) = fold_step(0.1, -7.0);
        assert!((0.0..=PI).contains(&p));
        assert!((p - lo + up - (0.1 - 7.0)).abs() < 1e-12);
    }

    /// Exact Skorokhod map on [0, π] of the piecewise linear interpolation,
    /// approximated with `sub` clamped sub-steps per coarse step.
    fn fine_grid_oracle(start: f64, incr: &[f64], sub: usize) -> (Vec<f64>, Vec<f64>) {
        let mut th = start;
        let mut lo = 0.0;
        let mut path = vec![th];
        let mut lower = vec![0.0];
        for &d in incr {
            let h = d / sub as f64;
            for _ in 0..sub {
                let p = th + h;
                if p < 0.0 {
                    lo -= p;
                    th = 0.0;
                } else if p > PI {
                    th = PI;
                } else {
                    th = p;
                }
            }
            path.push(th);
            lower.push(lo);
        }
        (path, lower)
    }

    #[test]
    fn fold_converges_to_fine_grid_oracle() {
        let mut prev = f64::INFINITY;
        for &dt in &[1e-2, 1e-3, 1e-4] {
            let n = (0.5 / dt) as usize;
            let s = sample_increments(SeedSpec::new(5, 0, 9), grid(dt, n, 1));
            let coarse = skorokhod_interval(0.05, &s).unwrap();
            let (fine, fine_lower) = fine_grid_oracle(0.05, s.as_slice(), 1000);
            let max_step = s.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let sup = coarse
                .path
                .iter()
                .zip(&fine)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let lt = coarse
                .lower
                .iter()
                .zip(&fine_lower)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(sup <= 2.0 * max_step + 1e-9, "dt {dt}: sup {sup} vs step {max_step}");
            assert!(lt <= 2.0 * max_step + 1e-9, "dt {dt}: local time gap {lt}");
            assert!(sup < prev);
            prev = sup;
        }
    }

    #[test]
    fn clock_examples() {
        let dt = 0.01;
        let c = clock_sigma(&[1.0; 11], dt).unwrap();
        for (k, v) in c.values.iter().enumerate() {
            assert!((v - k as f64 * dt).abs() < 1e-14);
        }
        let c = clock_sigma(&[2.0; 11], dt).unwrap();
        assert!((c.values[10] - 0.1 / 4.0).abs() < 1e-14);
        assert_eq!(clock_sigma(&[1.0, 0.0], dt), Err(NoiseError::ZeroRadius(1)));

        let n = 10_000;
        let dt = 1e-3;
        let radii: Vec<f64> = (0..=n).map(|k| (1.0 + k as f64 * dt).sqrt()).collect();
        let c = clock_sigma(&radii, dt).unwrap();
        let t = n as f64 * dt;
        // left-endpoint rule on a decreasing integrand: error at most dt·(f(0) − f(T))
        assert!((c.values[n] - (1.0 + t).ln()).abs() <= dt * (1.0 - 1.0 / (1.0 + t)) + 1e-12);
    }

    #[test]
    fn clock_sampling_examples() {
        let path: Vec<f64> = (0..=100).map(|j| j as f64 * 0.01).collect();
        let id = ClockPath {
            values: path.clone(),
        };
        let out = sample_at_clock(&path, 0.01, &id).unwrap();
        for (a, b) in out.iter().zip(&path) {
            assert!((a - b).abs() < 1e-14);
        }
        let quarter = ClockPath {
            values: path.iter().map(|t| t / 4.0).collect(),
        };
        let out = sample_at_clock(&path, 0.01, &quarter).unwrap();
        for (a, t) in out.iter().zip(&path) {
            assert!((a - t / 4.0).abs() < 1e-14);
        }
        let constant = vec![2.5; 11];
        let out = sample_at_clock(&constant, 0.1, &quarter).unwrap();
        assert!(out.iter().all(|&v| v == 2.5));
        let short = vec![2.5; 2];
        assert!(matches!(
            sample_at_clock(&short, 0.1, &quarter),
            Err(NoiseError::ClockOutOfRange { index: 41, .. })
        ));
    }

    proptest! {
        #[test]
        fn interval_invariants(seed in 0u64..1000, start in 0.0f64..PI, scale in 0.01f64..3.0) {
            let s = sample_increments(SeedSpec::new(seed, 0, 0), grid(scale * scale, 200, 1));
            let r = skorokhod_interval(start, &s).unwrap();
            let mut free = start;
            for k in 0..=200 {
                prop_assert!((0.0..=PI).contains(&r.path[k]));
                if k > 0 {
                    prop_assert!(r.lower[k] >= r.lower[k - 1]);
                    prop_assert!(r.upper[k] >= r.upper[k - 1]);
                    free += s.as_slice()[k - 1];
                }
                let rebuilt = r.path[k] - (r.lower[k] - r.upper[k]);
                prop_assert!((rebuilt - free).abs() < 1e-10 * (1.0 + r.lower[k] + r.upper[k]));
            }
        }

        #[test]
        fn clock_monotone(radii in proptest::collection::vec(0.01f64..10.0, 2..50)) {
            let c = clock_sigma(&radii, 0.01).unwrap();
            for w in c.values.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }
    }
}
