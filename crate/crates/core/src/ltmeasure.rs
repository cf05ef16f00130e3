//! Local-time measures of reflected paths: the stopping time at which two
//! paths sit on the boundary with aligned normals, a binned overlap
//! statistic between two measures, and common-edge windows in polygons.

use thiserror::Error;

use crate::geometry::{angle_between, DomainSpec, PreparedDomain};
use crate::reflect::ReflectedPath;

/// Default angular tolerance for aligned normals.
pub const DEFAULT_EPS_ANG: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LtError {
    #[error("paths are on different grids")]
    GridMismatch,
    #[error("both measures vanish on the window")]
    EmptyMeasure,
    #[error("negative local-time increment at step {0}")]
    NegativeIncrement(usize),
    #[error("bin width {h} is below the grid step {dt}")]
    BinTooNarrow { h: f64, dt: f64 },
    #[error("window end {up_to} exceeds {len} increments")]
    WindowOutOfRange { up_to: usize, len: usize },
    #[error("domain has no straight edges")]
    WrongDomain,
}

/// The measure `μ([t_s, t_e]) = L_e − L_s` carried by per-step increments.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTimeMeasure {
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl LocalTimeMeasure {
    pub fn new(dt: f64, increments: Vec<f64>) -> Result<Self, LtError> {
        if let Some(k) = increments.iter().position(|&x| !(x >= 0.0)) {
            return Err(LtError::NegativeIncrement(k));
        }
        Ok(LocalTimeMeasure { dt, increments })
    }

    pub fn from_path(p: &ReflectedPath) -> Self {
        LocalTimeMeasure {
            dt: p.grid.dt,
            increments: p.local_time_increments(),
        }
    }

    /// Mass of the steps `from..to`.
    pub fn mass(&self, from: usize, to: usize) -> f64 {
        self.increments[from..to].iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        LocalTimeMeasure {
            dt: self.dt,
            increments: self.increments.iter().map(|x| x * c).collect(),
        }
    }
}

/// First index at which both paths are within `eps_bd` of the boundary and
/// the inward normals at their nearest boundary points differ by less than
/// `eps_ang`.
pub fn stopping_time_t(
    px: &ReflectedPath,
    py: &ReflectedPath,
    d: &DomainSpec,
    eps_bd: f64,
    eps_ang: f64,
) -> Result<Option<usize>, LtError> {
    if px.grid != py.grid || px.len() != py.len() {
        return Err(LtError::GridMismatch);
    }
    let pd = d.prepare();
    Ok((0..px.len()).find(|&k| {
        let (x, y) = (px.positions[k], py.positions[k]);
        pd.signed_distance(x) <= eps_bd
            && pd.signed_distance(y) <= eps_bd
            && angle_between(pd.nearest_boundary(x).normal, pd.nearest_boundary(y).normal) < eps_ang
    }))
}

/// `Σ_bins min(m̂x, m̂y)` over bins of width `h` covering steps `0..up_to`,
/// with both measures normalized to unit mass on the window. A window on
/// which exactly one measure vanishes scores 0.
pub fn overlap_statistic(
    mx: &LocalTimeMeasure,
    my: &LocalTimeMeasure,
    h: f64,
    up_to: usize,
) -> Result<f64, LtError> {
    if mx.dt != my.dt {
        return Err(LtError::GridMismatch);
    }
    let dt = mx.dt;
    if h < dt {
        return Err(LtError::BinTooNarrow { h, dt });
    }
    let len = mx.increments.len().min(my.increments.len());
    if up_to > len {
        return Err(LtError::WindowOutOfRange { up_to, len });
    }
    let tx = mx.mass(0, up_to);
    let ty = my.mass(0, up_to);
    if tx == 0.0 && ty == 0.0 {
        return Err(LtError::EmptyMeasure);
    }
    if tx == 0.0 || ty == 0.0 {
        return Ok(0.0);
    }
    let bin = |k: usize| (k as f64 * dt / h + 1e-9).floor() as usize;
    let nbins = if up_to == 0 { 0 } else { bin(up_to - 1) + 1 };
    let mut bx = vec![0.0; nbins];
    let mut by = vec![0.0; nbins];
    for k in 0..up_to {
        bx[bin(k)] += mx.increments[k];
        by[bin(k)] += my.increments[k];
    }
    let s: f64 = bx
        .iter()
        .zip(&by)
        .map(|(a, b)| (a / tx).min(b / ty))
        .sum();
    Ok(s.clamp(0.0, 1.0))
}

/// Edge whose band alone contains the point, away from corners.
fn sole_edge(pd: &PreparedDomain, p: crate::geometry::Point, eps_bd: f64) -> Option<usize> {
    let mask = pd.band_mask(p, eps_bd);
    if mask.count_ones() != 1 || pd.nearest_boundary(p).corner {
        return None;
    }
    Some(mask.trailing_zeros() as usize)
}

/// First maximal run of indices on which both paths lie in the band of one
/// common edge and of no other. Returns `(start, end, edge)` with `end`
/// inclusive.
pub fn same_edge_window(
    px: &ReflectedPath,
    py: &ReflectedPath,
    d: &DomainSpec,
    eps_bd: f64,
) -> Result<Option<(usize, usize, usize)>, LtError> {
    if px.grid != py.grid || px.len() != py.len() {
        return Err(LtError::GridMismatch);
    }
    let pd = d.prepare();
    if pd.edges().is_empty() {
        return Err(LtError::WrongDomain);
    }
    let common = |k: usize| match (
        sole_edge(&pd, px.positions[k], eps_bd),
        sole_edge(&pd, py.positions[k], eps_bd),
    ) {
        (Some(a), Some(b)) if a == b => Some(a),
        _ => None,
    };
    let n = px.len();
    let Some((start, edge)) = (0..n).find_map(|k| common(k).map(|e| (k, e))) else {
        return Ok(None);
    };
    let mut end = start;
    while end + 1 < n && common(end + 1) == Some(edge) {
        end += 1;
    }
    Ok(Some((start, end, edge)))
}
