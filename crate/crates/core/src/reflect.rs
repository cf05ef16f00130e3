//! Discrete reflected Brownian motion by Euclidean projection, synchronous
//! flows sharing one driver, and boundary-event diagnostics.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{DomainSpec, GeometryError, Point, PreparedDomain};
use crate::noise::{IncrementStream, NoiseError, PathGrid};

/// Slack allowed when checking that a start point lies in the closure.
pub const START_TOL: f64 = 1e-9;
/// Default boundary band for unit-scale domains.
pub const DEFAULT_EPS_BD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReflectError {
    #[error("start ({0}, {1}) lies outside the domain")]
    StartOutsideDomain(f64, f64),
    #[error("input is degenerate: {0}")]
    DegenerateInput(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Outcome of one projected step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub point: Point,
    /// `|q − p|`, the local-time increment.
    pub local_time: f64,
    /// `q − p`, along the inward normal away from corners.
    pub push: Point,
    pub corner: bool,
}

#[inline]
pub(crate) fn project_step(d: &PreparedDomain, x: Point, db: Point) -> Step {
    let p = x + db;
    let pr = d.project(p);
    if pr.point == p {
        Step {
            point: p,
            local_time: 0.0,
            push: Point::ORIGIN,
            corner: false,
        }
    } else {
        let push = pr.point - p;
        Step {
            point: pr.point,
            local_time: push.norm(),
            push,
            corner: pr.corner,
        }
    }
}

/// One step of the discrete Skorokhod map: propose `x + db`, project back
/// onto the closed domain if it left.
pub fn step_reflect(d: &DomainSpec, x: Point, db: Point) -> Result<Step, ReflectError> {
    step_reflect_prepared(&d.prepare(), x, db)
}

pub fn step_reflect_prepared(d: &PreparedDomain, x: Point, db: Point) -> Result<Step, ReflectError> {
    if d.signed_distance(x) < -START_TOL {
        return Err(ReflectError::StartOutsideDomain(x.x, x.y));
    }
    Ok(project_step(d, x, db))
}

/// A reflected trajectory on `n + 1` grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectedPath {
    pub grid: PathGrid,
    pub positions: Vec<Point>,
    /// Cumulative local time, `local_time[0] = 0`.
    pub local_time: Vec<f64>,
    pub boundary_flags: Vec<bool>,
    /// Cumulative push vector `Σ (q − p)`.
    pub pushes: Vec<Point>,
    /// Step indices whose projection landed on a corner.
    pub corner_steps: Vec<usize>,
}

impl ReflectedPath {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Per-step local-time increments, `n` entries.
    pub fn local_time_increments(&self) -> Vec<f64> {
        self.local_time.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Columns `t,x,y,L,onBoundary`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,y,L,onBoundary")?;
        for k in 0..self.positions.len() {
            let p = self.positions[k];
            writeln!(
                w,
                "{},{},{},{},{}",
                self.grid.time(k),
                p.x,
                p.y,
                self.local_time[k],
                u8::from(self.boundary_flags[k])
            )?;
        }
        Ok(())
    }
}

pub fn simulate_reflected(
    d: &DomainSpec,
    x0: Point,
    noise: &IncrementStream,
    eps_bd: f64,
) -> Result<ReflectedPath, ReflectError> {
    simulate_reflected_prepared(&PreparedDomain::new(d)?, x0, noise, eps_bd)
}

pub fn simulate_reflected_prepared(
    d: &PreparedDomain,
    x0: Point,
    noise: &IncrementStream,
    eps_bd: f64,
) -> Result<ReflectedPath, ReflectError> {
    noise.expect_dim(2)?;
    if d.signed_distance(x0) < -START_TOL {
        return Err(ReflectError::StartOutsideDomain(x0.x, x0.y));
    }
    let n = noise.len();
    let mut positions = Vec::with_capacity(n + 1);
    let mut local_time = Vec::with_capacity(n + 1);
    let mut boundary_flags = Vec::with_capacity(n + 1);
    let mut pushes = Vec::with_capacity(n + 1);
    let mut corner_steps = Vec::new();

    let mut x = x0;
    let mut l = 0.0;
    let mut push = Point::ORIGIN;
    positions.push(x);
    local_time.push(l);
    boundary_flags.push(d.signed_distance(x) <= eps_bd);
    pushes.push(push);
    for k in 0..n {
        let s = project_step(d, x, noise.point(k));
        x = s.point;
        l += s.local_time;
        push += s.push;
        if s.corner {
            corner_steps.push(k + 1);
        }
        positions.push(x);
        local_time.push(l);
        boundary_flags.push(d.signed_distance(x) <= eps_bd);
        pushes.push(push);
    }
    Ok(ReflectedPath {
        grid: noise.grid(),
        positions,
        local_time,
        boundary_flags,
        pushes,
        corner_steps,
    })
}

/// Reflected paths from several starts, all driven by the same increments.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub noise: IncrementStream,
    pub members: Vec<ReflectedPath>,
}

pub fn simulate_flow(
    d: &DomainSpec,
    starts: &[Point],
    noise: &IncrementStream,
    eps_bd: f64,
) -> Result<FlowState, ReflectError> {
    let pd = PreparedDomain::new(d)?;
    let members = starts
        .par_iter()
        .map(|&x0| simulate_reflected_prepared(&pd, x0, noise, eps_bd))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FlowState {
        noise: noise.clone(),
        members,
    })
}

/// Smallest index at which every member lies within `eps_bd` of the
/// boundary.
pub fn detect_simultaneous_boundary(flow: &FlowState, d: &DomainSpec, eps_bd: f64) -> Option<usize> {
    let pd = d.prepare();
    let n = flow.members.iter().map(|m| m.positions.len()).min()?;
    (0..n).find(|&k| {
        flow.members
            .iter()
            .all(|m| pd.signed_distance(m.positions[k]) <= eps_bd)
    })
}

/// Ordinary least squares `y ≈ a + b·x`; returns `(intercept, slope)`.
pub(crate) fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Hölder exponent of a non-decreasing path from the growth of its maximal
/// oscillation over dyadic windows up to 1/32 of the path.
pub fn holder_exponent_estimate(l: &[f64], dt: f64) -> Result<f64, ReflectError> {
    if l.len() < 16 {
        return Err(ReflectError::DegenerateInput("need at least 16 samples".into()));
    }
    let n = l.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut w = 1usize;
    while w <= n / 32 {
        let osc = (0..=n - w).map(|k| l[k + w] - l[k]).fold(0.0f64, f64::max);
        if osc > 0.0 {
            xs.push((w as f64 * dt).ln());
            ys.push(osc.ln());
        }
        w *= 2;
    }
    if xs.len() < 2 {
        return Err(ReflectError::DegenerateInput("path is constant".into()));
    }
    Ok(least_squares(&xs, &ys).1)
}
