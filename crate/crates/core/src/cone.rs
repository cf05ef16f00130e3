//! Cone points of discrete paths: times whose past (entire, or a recent
//! window) lies in a translated open cone with vertex at the current
//! position.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

use crate::geometry::{cone_slope, in_cone, Point, UnitVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConeError {
    #[error("index {index} outside 1..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid cone query: {0}")]
    InvalidQuery(String),
    #[error("angle {0} outside [0, π)")]
    AngleOutOfRange(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeMode {
    /// Every earlier node must lie in the cone.
    Global,
    /// The `min_steps` nodes immediately before `t` must lie in the cone.
    Windowed { min_steps: usize },
}

impl ConeMode {
    pub const WINDOWED: ConeMode = ConeMode::Windowed { min_steps: 1 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConePointQuery {
    half_angle: f64,
    axis: Vec<f64>,
    pub mode: ConeMode,
}

impl ConePointQuery {
    pub fn new(half_angle: f64, axis: Vec<f64>, mode: ConeMode) -> Result<Self, ConeError> {
        if !(half_angle > 0.0 && half_angle < PI) {
            return Err(ConeError::InvalidQuery(format!("half-angle {half_angle} outside (0, π)")));
        }
        if let ConeMode::Windowed { min_steps: 0 } = mode {
            return Err(ConeError::InvalidQuery("window must cover at least one step".into()));
        }
        let n = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(ConeError::InvalidQuery("axis must be non-zero".into()));
        }
        Ok(ConePointQuery {
            half_angle,
            axis: axis.into_iter().map(|a| a / n).collect(),
            mode,
        })
    }

    pub fn planar(half_angle: f64, axis: UnitVector, mode: ConeMode) -> Result<Self, ConeError> {
        ConePointQuery::new(half_angle, vec![axis.ux(), axis.uy()], mode)
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    fn planar_axis(&self) -> Result<Point, ConeError> {
        match self.axis.as_slice() {
            [x, y] => Ok(Point::new(*x, *y)),
            _ => Err(ConeError::InvalidQuery(format!(
                "planar path with a {}-dimensional axis",
                self.axis.len()
            ))),
        }
    }
}

fn check_index(t: usize, len: usize) -> Result<(), ConeError> {
    if t == 0 || t >= len {
        Err(ConeError::IndexOutOfRange { index: t, len })
    } else {
        Ok(())
    }
}

fn window_start(t: usize, mode: ConeMode) -> Option<usize> {
    match mode {
        ConeMode::Global => Some(0),
        ConeMode::Windowed { min_steps } => t.checked_sub(min_steps),
    }
}

/// Cone-point test in any dimension; `path[k]` are the coordinates of node
/// `k`.
pub fn is_cone_point_nd(path: &[Vec<f64>], t: usize, q: &ConePointQuery) -> Result<bool, ConeError> {
    check_index(t, path.len())?;
    let dim = q.axis.len();
    if path.iter().any(|p| p.len() != dim) {
        return Err(ConeError::InvalidQuery("path and axis dimensions differ".into()));
    }
    let Some(start) = window_start(t, q.mode) else {
        return Ok(false);
    };
    let slope = cone_slope(q.half_angle);
    let mut rel = vec![0.0; dim];
    Ok((start..t).all(|s| {
        for (i, r) in rel.iter_mut().enumerate() {
            *r = path[s][i] - path[t][i];
        }
        in_cone(&rel, &q.axis, slope)
    }))
}

pub fn find_cone_points_nd(path: &[Vec<f64>], q: &ConePointQuery) -> Result<Vec<usize>, ConeError> {
    let mut out = Vec::new();
    for t in 1..path.len() {
        if is_cone_point_nd(path, t, q)? {
            out.push(t);
        }
    }
    Ok(out)
}

#[inline]
fn planar_in_cone(rel: Point, axis: Point, slope: f64) -> bool {
    rel.dot(axis) > slope * rel.cross(axis).abs()
}

pub fn is_cone_point(path: &[Point], t: usize, q: &ConePointQuery) -> Result<bool, ConeError> {
    check_index(t, path.len())?;
    let axis = q.planar_axis()?;
    let Some(start) = window_start(t, q.mode) else {
        return Ok(false);
    };
    let slope = cone_slope(q.half_angle);
    Ok((start..t).all(|s| planar_in_cone(path[s] - path[t], axis, slope)))
}

/// Total-order integer key for finite floats.
fn ord_key(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    b ^ ((((b >> 63) as u64) >> 1) as i64)
}

/// All indices `t ≥ 1` that are cone points. Global mode runs in
/// `O(n log n)` using the two half-plane coordinates of the cone.
pub fn find_cone_points(path: &[Point], q: &ConePointQuery) -> Result<Vec<usize>, ConeError> {
    let axis = q.planar_axis()?;
    match q.mode {
        ConeMode::Windowed { .. } => {
            let mut out = Vec::new();
            for t in 1..path.len() {
                if is_cone_point(path, t, q)? {
                    out.push(t);
                }
            }
            Ok(out)
        }
        ConeMode::Global => Ok(global_cone_points(path, axis, q.half_angle)),
    }
}

fn global_cone_points(path: &[Point], axis: Point, half_angle: f64) -> Vec<usize> {
    let perp = axis.perp();
    let slope = cone_slope(half_angle);
    let mut out = Vec::new();
    if path.len() < 2 {
        return out;
    }
    let proj = |p: Point, c: f64| (p.dot(axis) - c * p.dot(perp), p.dot(axis) + c * p.dot(perp));
    if half_angle <= FRAC_PI_2 {
        // s is inside iff it is strictly above t in both coordinates
        let (mut min_a, mut min_b) = proj(path[0], slope);
        for (t, &p) in path.iter().enumerate().skip(1) {
            let (a, b) = proj(p, slope);
            if min_a > a && min_b > b {
                out.push(t);
            }
            min_a = min_a.min(a);
            min_b = min_b.min(b);
        }
    } else {
        // s is outside iff it is weakly below t in both coordinates; keep the
        // lower-left staircase of past points
        let c = -slope;
        let mut stair: BTreeMap<i64, f64> = BTreeMap::new();
        for (t, &p) in path.iter().enumerate() {
            let (a, b) = proj(p, c);
            let ka = ord_key(a);
            let dominated = stair.range(..=ka).next_back().is_some_and(|(_, &bmin)| bmin <= b);
            if t > 0 && !dominated {
                out.push(t);
            }
            if !dominated {
                let stale: Vec<i64> = stair
                    .range(ka..)
                    .take_while(|(_, &bb)| bb >= b)
                    .map(|(&k, _)| k)
                    .collect();
                for k in stale {
                    stair.remove(&k);
                }
                stair.insert(ka, b);
            }
        }
    }
    out
}

/// Times whose recent past lies in the intersection of the cones of
/// half-angle `half_angle` around `v` and around `w`.
pub fn find_two_cone_times(
    path: &[Point],
    half_angle: f64,
    v: UnitVector,
    w: UnitVector,
    min_steps: usize,
) -> Result<Vec<usize>, ConeError> {
    ConePointQuery::planar(half_angle, v, ConeMode::Windowed { min_steps })?;
    let slope = cone_slope(half_angle);
    let (va, wa) = (v.as_point(), w.as_point());
    Ok((1..path.len())
        .filter(|&t| {
            t >= min_steps
                && (t - min_steps..t).all(|s| {
                    let rel = path[s] - path[t];
                    planar_in_cone(rel, va, slope) && planar_in_cone(rel, wa, slope)
                })
        })
        .collect())
}

/// `1 − π / (2(π − angle))`.
pub fn dim_formula(angle: f64) -> Result<f64, ConeError> {
    if !(0.0..PI).contains(&angle) {
        return Err(ConeError::AngleOutOfRange(angle));
    }
    Ok(1.0 - PI / (2.0 * (PI - angle)))
}

/// Number of cone points and the first one, over indices `1..len−1`
/// (the final node is excluded).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeCensus {
    pub count: usize,
    pub first: Option<usize>,
}

pub fn cone_census(path: &[Point], q: &ConePointQuery) -> Result<ConeCensus, ConeError> {
    let last = path.len().saturating_sub(1);
    let pts: Vec<usize> = find_cone_points(path, q)?
        .into_iter()
        .filter(|&t| t < last)
        .collect();
    Ok(ConeCensus {
        count: pts.len(),
        first: pts.first().copied(),
    })
}
