//! Config-driven Monte Carlo runs with per-trial substreams.
//!
//! Trial `i` draws from `SeedSpec::new(seed, i, stream)`, trials run on a
//! rayon pool of the requested size, and results are folded in trial
//! order, so outputs do not depend on the worker count.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cone::{cone_census, find_cone_points, ConeMode, ConePointQuery};
use crate::geometry::{reflect_across, DomainSpec, Point, UnitVector};
use crate::ltmeasure::{overlap_statistic, stopping_time_t, LocalTimeMeasure, DEFAULT_EPS_ANG};
use crate::mirror::{
    detect_theorem3_event, simulate_halfplane_mirror, simulate_polygon_mirror, EndReason, MirrorTrajectory,
    DEFAULT_K_MAX,
};
use crate::noise::{sample_increments, PathGrid, SeedSpec};
use crate::reflect::{detect_simultaneous_boundary, simulate_flow, simulate_reflected, DEFAULT_EPS_BD};
use crate::stats::{ks_critical_1pct, ks_two_sample, linear_fit, mean, wilson_interval};
use crate::stripmap::{build_frame, drift_bound_check, frames_along, DriftReport};

/// Trials whose paths are written when path dumps are requested.
pub const DUMP_LIMIT: usize = 16;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("trial {trial}: {message}")]
    Simulation { trial: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn invalid(field: &'static str, message: impl Into<String>) -> HarnessError {
    HarnessError::InvalidConfig {
        field,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ExperimentKind {
    SyncFlow,
    ConeCensus,
    SingularityTrend,
    MirrorHalfplane,
    Theorem3,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SyncFlow => "syncFlow",
            ExperimentKind::ConeCensus => "coneCensus",
            ExperimentKind::SingularityTrend => "singularityTrend",
            ExperimentKind::MirrorHalfplane => "mirrorHalfplane",
            ExperimentKind::Theorem3 => "theorem3",
        }
    }
}

/// Starting configurations. `Sweep` places `x = (A + along, height)` for
/// the wedge frame with the given hinge and mirror angle, and `y` at the
/// mirror image of `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", rename_all_fields = "camelCase")]
pub enum StartSpec {
    Points {
        points: Vec<Point>,
    },
    Grid {
        center: Point,
        radius: f64,
        per_side: usize,
    },
    Sweep {
        hinge: f64,
        beta: f64,
        along: Vec<f64>,
        height: Vec<f64>,
    },
}

fn default_eps_bd() -> f64 {
    DEFAULT_EPS_BD
}
fn default_eps_ang() -> f64 {
    DEFAULT_EPS_ANG
}
fn default_delta() -> f64 {
    0.05
}
fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    pub dt: f64,
    pub horizon: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_eps_bd")]
    pub eps_bd: f64,
    #[serde(default = "default_eps_ang")]
    pub eps_ang: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_spec: Option<StartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Cone half-angle for `coneCensus`; defaults to `2π/3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_angle: Option<f64>,
    /// Cone axis for `coneCensus`; defaults to `(1, 0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<UnitVector>,
    /// Bin widths for `singularityTrend`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_values: Option<Vec<f64>>,
    /// Mirror-angle window for the drift check in `theorem3`; defaults to
    /// `(α, π/4 + α/2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_window: Option<(f64, f64)>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(s).map_err(|e| invalid("config", e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn grid(&self) -> Result<PathGrid, HarnessError> {
        PathGrid::from_horizon(self.dt, self.horizon, 2).map_err(|e| invalid("dt", e.to_string()))
    }

    fn domain(&self) -> Result<&DomainSpec, HarnessError> {
        self.domain.as_ref().ok_or_else(|| invalid("domain", "required for this experiment"))
    }

    /// Start points; for the mirror experiments these come in `(x, y)`
    /// pairs.
    pub fn starts(&self) -> Result<Vec<Point>, HarnessError> {
        match &self.start_spec {
            None => Err(invalid("startSpec", "required for this experiment")),
            Some(StartSpec::Points { points }) => Ok(points.clone()),
            Some(StartSpec::Grid {
                center,
                radius,
                per_side,
            }) => {
                if *per_side == 0 || !(*radius >= 0.0) {
                    return Err(invalid("startSpec", "grid needs perSide ≥ 1 and radius ≥ 0"));
                }
                // square inscribed in the ball
                let half = radius / 2f64.sqrt();
                let off = |i: usize| {
                    if *per_side == 1 {
                        0.0
                    } else {
                        -half + 2.0 * half * i as f64 / (*per_side - 1) as f64
                    }
                };
                Ok((0..per_side * per_side)
                    .map(|i| *center + Point::new(off(i % per_side), off(i / per_side)))
                    .collect())
            }
            Some(StartSpec::Sweep {
                hinge,
                beta,
                along,
                height,
            }) => {
                let Some(DomainSpec::Wedge { alpha }) = self.domain else {
                    return Err(invalid("startSpec", "sweep starts need a wedge domain"));
                };
                let frame = build_frame(alpha, *hinge, *beta).map_err(|e| invalid("startSpec", e.to_string()))?;
                let mut out = Vec::new();
                for &hgt in height {
                    for &a in along {
                        let x = Point::new(frame.a + a, hgt);
                        out.push(x);
                        out.push(reflect_across(&frame.mirror(), x));
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be at least dt"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if !(self.eps_bd >= 0.0) {
            return Err(invalid("epsBd", "must be non-negative"));
        }
        if !(self.eps_ang > 0.0) {
            return Err(invalid("epsAng", "must be positive"));
        }
        if !(self.delta >= 0.0) {
            return Err(invalid("delta", "must be non-negative"));
        }
        if self.k_max == 0 {
            return Err(invalid("kMax", "must be at least 1"));
        }
        if let Some(d) = &self.domain {
            d.validate().map_err(|e| invalid("domain", e.to_string()))?;
        }
        match self.experiment {
            ExperimentKind::ConeCensus => {
                let a = self.half_angle.unwrap_or(2.0 * PI / 3.0);
                if !(a > 0.0 && a < PI) {
                    return Err(invalid("halfAngle", "must lie in (0, π)"));
                }
            }
            ExperimentKind::SyncFlow => {
                let d = self.domain()?;
                let s = self.starts()?;
                if s.is_empty() {
                    return Err(invalid("startSpec", "no start points"));
                }
                if s.iter().any(|p| !d.contains(*p, 1e-9)) {
                    return Err(invalid("startSpec", "start point outside the domain"));
                }
            }
            ExperimentKind::SingularityTrend => {
                let d = self.domain()?;
                let s = self.starts()?;
                if s.len() != 2 || s.iter().any(|p| !d.contains(*p, 1e-9)) {
                    return Err(invalid("startSpec", "needs two start points in the domain"));
                }
                let hs = self.h_values.as_deref().unwrap_or(&[]);
                if hs.len() < 3 || hs.iter().any(|&h| !(h >= self.dt)) {
                    return Err(invalid("hValues", "needs at least three bin widths, each ≥ dt"));
                }
            }
            ExperimentKind::MirrorHalfplane => {
                if !matches!(self.domain()?, DomainSpec::HalfPlane { .. }) {
                    return Err(invalid("domain", "mirrorHalfplane needs a half-plane"));
                }
                if self.starts()?.len() != 2 {
                    return Err(invalid("startSpec", "needs exactly one (x, y) pair"));
                }
            }
            ExperimentKind::Theorem3 => {
                let d = self.domain()?;
                let DomainSpec::Wedge { alpha } = d else {
                    return Err(invalid("domain", "theorem3 needs a wedge"));
                };
                if *alpha >= PI / 2.0 {
                    return Err(invalid("domain", "theorem3 needs a wedge angle below π/2"));
                }
                let s = self.starts()?;
                if s.is_empty() || s.len() % 2 != 0 {
                    return Err(invalid("startSpec", "needs (x, y) pairs"));
                }
                let pd = d.prepare();
                if s.iter().any(|p| pd.signed_distance(*p) <= 0.0) {
                    return Err(invalid("startSpec", "start point not interior to the wedge"));
                }
            }
        }
        Ok(())
    }
}

/// Aggregate outcome of a run, written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub experiment: ExperimentKind,
    pub trials: usize,
    pub successes: usize,
    pub estimate: f64,
    pub wilson_low95: f64,
    pub wilson_high95: f64,
    /// Kept out of `summary.json` so reruns compare byte for byte; see
    /// `timing.json`.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
    pub details: Value,
    pub config_echo: ExperimentConfig,
}

/// Execution settings that do not affect results.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Write per-path CSVs for the first [`DUMP_LIMIT`] trials.
    pub dump_paths: bool,
}

/// One row of `trials.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub start: usize,
    pub success: bool,
    pub step: Option<usize>,
    pub values: Vec<f64>,
    extra: TrialExtra,
}

#[derive(Clone, Debug, PartialEq)]
enum TrialExtra {
    None,
    Mirror { coupled_dist: f64, reflected_dist: f64, invariants: MirrorInvariants },
    Wedge { end: EndReason, drift: Option<DriftReport> },
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MirrorInvariants {
    pub max_symmetry_residual: f64,
    pub max_hinge_drift: f64,
    pub max_distance_gap: f64,
    pub max_angle_increase: f64,
}

impl MirrorInvariants {
    fn merge(&mut self, o: &MirrorInvariants) {
        self.max_symmetry_residual = self.max_symmetry_residual.max(o.max_symmetry_residual);
        self.max_hinge_drift = self.max_hinge_drift.max(o.max_hinge_drift);
        self.max_distance_gap = self.max_distance_gap.max(o.max_distance_gap);
        self.max_angle_increase = self.max_angle_increase.max(o.max_angle_increase);
    }
}

/// Mirror symmetry, hinge constancy, equal hinge distances and the
/// monotone mirror angle along an uncoupled stretch of a half-plane
/// coupling.
pub fn mirror_invariants(tr: &MirrorTrajectory) -> MirrorInvariants {
    let mut inv = MirrorInvariants::default();
    let h0 = tr.hinge.first().copied().flatten();
    let mut prev_tilt: Option<f64> = None;
    for k in 0..tr.len() {
        let Some(m) = tr.mirror[k] else { break };
        let (x, y) = (tr.x[k], tr.y[k]);
        inv.max_symmetry_residual = inv.max_symmetry_residual.max(reflect_across(&m, x).dist(y));
        if let (Some(h), Some(h0)) = (tr.hinge[k], h0) {
            inv.max_hinge_drift = inv.max_hinge_drift.max(h.dist(h0));
            inv.max_distance_gap = inv.max_distance_gap.max((x.dist(h) - y.dist(h)).abs());
        }
        if let Some(b) = tr.beta[k] {
            let tilt = (b - PI / 2.0).abs();
            if let Some(p) = prev_tilt {
                inv.max_angle_increase = inv.max_angle_increase.max(tilt - p);
            }
            prev_tilt = Some(tilt);
        }
    }
    inv
}

fn value_names(cfg: &ExperimentConfig) -> Vec<String> {
    match cfg.experiment {
        ExperimentKind::SyncFlow => vec!["hitTime".into()],
        ExperimentKind::ConeCensus => vec!["count".into(), "firstTime".into(), "countAfterBurnIn".into()],
        ExperimentKind::SingularityTrend => cfg
            .h_values
            .iter()
            .flatten()
            .map(|h| format!("overlap_h{h}"))
            .collect(),
        ExperimentKind::MirrorHalfplane => vec![
            "couplingTime".into(),
            "xBoundaryDistT".into(),
            "reflectedBoundaryDistT".into(),
        ],
        ExperimentKind::Theorem3 => vec![
            "eventTime".into(),
            "radialGap".into(),
            "phases".into(),
        ],
    }
}

fn sim_err(trial: usize, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Simulation {
        trial,
        message: e.to_string(),
    }
}

fn dump<F>(dir: &Option<PathBuf>, trial: usize, write: F) -> Result<(), HarnessError>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    if let Some(dir) = dir {
        if trial < DUMP_LIMIT {
            let mut w = BufWriter::new(File::create(dir.join(format!("trial_{trial:05}.csv")))?);
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

struct Prepared {
    grid: PathGrid,
    starts: Vec<Point>,
    paths_dir: Option<PathBuf>,
}

fn run_trial(cfg: &ExperimentConfig, p: &Prepared, trial: usize) -> Result<TrialOutcome, HarnessError> {
    let seed = |stream: u32| SeedSpec::new(cfg.seed, trial as u64, stream);
    let dt = cfg.dt;
    let time = |k: Option<usize>| k.map_or(f64::NAN, |k| k as f64 * dt);
    let mut out = TrialOutcome {
        trial,
        start: 0,
        success: false,
        step: None,
        values: Vec::new(),
        extra: TrialExtra::None,
    };
    match cfg.experiment {
        ExperimentKind::SyncFlow => {
            let d = cfg.domain()?;
            let noise = sample_increments(seed(0), p.grid);
            let flow = simulate_flow(d, &p.starts, &noise, cfg.eps_bd).map_err(|e| sim_err(trial, e))?;
            let hit = detect_simultaneous_boundary(&flow, d, cfg.eps_bd);
            dump(&p.paths_dir, trial, |w| flow.members[0].write_csv(w))?;
            out.success = hit.is_some();
            out.step = hit;
            out.values = vec![time(hit)];
        }
        ExperimentKind::ConeCensus => {
            let noise = sample_increments(seed(0), p.grid);
            let flat = noise.cumulative();
            let path: Vec<Point> = flat.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
            let q = ConePointQuery::planar(
                cfg.half_angle.unwrap_or(2.0 * PI / 3.0),
                cfg.axis.unwrap_or(UnitVector::E1),
                ConeMode::Global,
            )
            .map_err(|e| sim_err(trial, e))?;
            let census = cone_census(&path, &q).map_err(|e| sim_err(trial, e))?;
            let burn_in = path.len() / 10;
            let late = find_cone_points(&path, &q)
                .map_err(|e| sim_err(trial, e))?
                .into_iter()
                .filter(|&t| t >= burn_in && t + 1 < path.len())
                .count();
            dump(&p.paths_dir, trial, |w| {
                writeln!(w, "t,x,y")?;
                path.iter()
                    .enumerate()
                    .try_for_each(|(k, q)| writeln!(w, "{},{},{}", k as f64 * dt, q.x, q.y))
            })?;
            out.success = census.count > 0;
            out.step = census.first;
            out.values = vec![census.count as f64, time(census.first), late as f64];
        }
        ExperimentKind::SingularityTrend => {
            let d = cfg.domain()?;
            let px = simulate_reflected(d, p.starts[0], &sample_increments(seed(0), p.grid), cfg.eps_bd)
                .map_err(|e| sim_err(trial, e))?;
            let py = simulate_reflected(d, p.starts[1], &sample_increments(seed(1), p.grid), cfg.eps_bd)
                .map_err(|e| sim_err(trial, e))?;
            let stop = stopping_time_t(&px, &py, d, cfg.eps_bd, cfg.eps_ang).map_err(|e| sim_err(trial, e))?;
            let up_to = stop.unwrap_or(px.len() - 1);
            let (mx, my) = (LocalTimeMeasure::from_path(&px), LocalTimeMeasure::from_path(&py));
            out.values = cfg
                .h_values
                .iter()
                .flatten()
                .map(|&h| overlap_statistic(&mx, &my, h, up_to).unwrap_or(f64::NAN))
                .collect();
            dump(&p.paths_dir, trial, |w| px.write_csv(w))?;
            out.step = stop;
            let (first, last) = (out.values[0], out.values[out.values.len() - 1]);
            out.success = last < first;
        }
        ExperimentKind::MirrorHalfplane => {
            let d = cfg.domain()?;
            let tr = simulate_halfplane_mirror(d, p.starts[0], p.starts[1], seed(0), p.grid)
                .map_err(|e| sim_err(trial, e))?;
            let reference = simulate_reflected(d, p.starts[0], &sample_increments(seed(2), p.grid), 0.0)
                .map_err(|e| sim_err(trial, e))?;
            let pd = d.prepare();
            let coupled_dist = pd.signed_distance(tr.x[tr.len() - 1]);
            let reflected_dist = pd.signed_distance(reference.positions[reference.len() - 1]);
            dump(&p.paths_dir, trial, |w| tr.write_csv(w))?;
            out.success = tr.coupled_at.is_some();
            out.step = tr.coupled_at;
            out.values = vec![time(tr.coupled_at), coupled_dist, reflected_dist];
            out.extra = TrialExtra::Mirror {
                coupled_dist,
                reflected_dist,
                invariants: mirror_invariants(&tr),
            };
        }
        ExperimentKind::Theorem3 => {
            let d = cfg.domain()?;
            let DomainSpec::Wedge { alpha } = *d else {
                return Err(invalid("domain", "theorem3 needs a wedge"));
            };
            let pairs = p.starts.len() / 2;
            out.start = trial % pairs;
            let (x, y) = (p.starts[2 * out.start], p.starts[2 * out.start + 1]);
            let tr = simulate_polygon_mirror(d, x, y, seed(0), p.grid, cfg.eps_bd, cfg.k_max)
                .map_err(|e| sim_err(trial, e))?;
            let ev = detect_theorem3_event(&tr, d, cfg.eps_bd, cfg.delta).map_err(|e| sim_err(trial, e))?;
            dump(&p.paths_dir, trial, |w| tr.write_csv(w))?;
            let drift = if ev.occurred {
                let frames = frames_along(&tr, alpha);
                let window = cfg.beta_window.unwrap_or((alpha, FRAC_PI_4 + alpha / 2.0));
                Some(drift_bound_check(&tr, &frames, window).map_err(|e| sim_err(trial, e))?)
            } else {
                None
            };
            out.success = ev.occurred;
            out.step = ev.step_index;
            out.values = vec![
                time(ev.step_index),
                if ev.occurred { ev.radial_gap } else { f64::NAN },
                tr.phases.len() as f64,
            ];
            let end = tr.phases.last().map_or(EndReason::HorizonEnd, |ph| ph.end_reason);
            out.extra = TrialExtra::Wedge { end, drift };
        }
    }
    Ok(out)
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Writes the per-trial table.
pub fn write_trials_csv<W: Write>(cfg: &ExperimentConfig, rows: &[TrialOutcome], mut w: W) -> io::Result<()> {
    let names = value_names(cfg);
    write!(w, "trial,start,success,step")?;
    for n in &names {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for r in rows {
        write!(
            w,
            "{},{},{},{}",
            r.trial,
            r.start,
            u8::from(r.success),
            r.step.map_or(String::new(), |s| s.to_string())
        )?;
        for v in &r.values {
            write!(w, ",{}", fmt_value(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// JSON numbers cannot hold NaN or infinities; those become `null`.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn details(cfg: &ExperimentConfig, p: &Prepared, rows: &[TrialOutcome]) -> Result<Value, HarnessError> {
    Ok(match cfg.experiment {
        ExperimentKind::SyncFlow => {
            let times: Vec<f64> = rows.iter().map(|r| r.values[0]).filter(|v| v.is_finite()).collect();
            json!({
                "startPoints": p.starts.len(),
                "meanHitTime": num(mean(&times)),
            })
        }
        ExperimentKind::ConeCensus => {
            let counts: Vec<f64> = rows.iter().map(|r| r.values[0]).collect();
            // cone points after the first tenth of the horizon
            let late = rows.iter().filter(|r| r.values[2] > 0.0).count();
            json!({
                "halfAngle": cfg.half_angle.unwrap_or(2.0 * PI / 3.0),
                "meanCount": num(mean(&counts)),
                "pathsWithConePointAfterBurnIn": late,
            })
        }
        ExperimentKind::SingularityTrend => {
            let hs = cfg.h_values.clone().unwrap_or_default();
            let mut means = Vec::with_capacity(hs.len());
            let mut valid = Vec::with_capacity(hs.len());
            for j in 0..hs.len() {
                let v: Vec<f64> = rows.iter().map(|r| r.values[j]).filter(|v| v.is_finite()).collect();
                valid.push(v.len());
                means.push(mean(&v));
            }
            let logs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
            let fit = linear_fit(&logs, &means);
            let decreasing = means.windows(2).all(|w| w[1] < w[0]);
            let stopped = rows.iter().filter(|r| r.step.is_some()).count();
            json!({
                "hValues": hs,
                "meanOverlap": means.iter().map(|m| num(*m)).collect::<Vec<_>>(),
                "validTrials": valid,
                "stoppedTrials": stopped,
                "slopeVsLogH": fit.map_or(Value::Null, |f| num(f.slope)),
                "slopeTStat": fit.map_or(Value::Null, |f| num(f.t_stat)),
                "strictlyDecreasing": decreasing,
            })
        }
        ExperimentKind::MirrorHalfplane => {
            let mut inv = MirrorInvariants::default();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for r in rows {
                if let TrialExtra::Mirror {
                    coupled_dist,
                    reflected_dist,
                    invariants,
                } = &r.extra
                {
                    inv.merge(invariants);
                    a.push(*coupled_dist);
                    b.push(*reflected_dist);
                }
            }
            let ks = ks_two_sample(&a, &b);
            let crit = ks_critical_1pct(a.len(), b.len());
            json!({
                "invariants": inv,
                "ksStatistic": ks,
                "ksCritical1pct": crit,
                "ksPass": ks < crit,
            })
        }
        ExperimentKind::Theorem3 => {
            let pairs = p.starts.len() / 2;
            let mut per_start = Vec::with_capacity(pairs);
            for s in 0..pairs {
                let n = rows.iter().filter(|r| r.start == s).count();
                let k = rows.iter().filter(|r| r.start == s && r.success).count();
                let w = if n > 0 { Some(wilson_interval(k, n, 0.95).map_err(|e| sim_err(0, e))?) } else { None };
                per_start.push(json!({
                    "x": p.starts[2 * s],
                    "y": p.starts[2 * s + 1],
                    "trials": n,
                    "successes": k,
                    "wilsonLow95": w.map_or(Value::Null, |w| num(w.low)),
                    "wilsonHigh95": w.map_or(Value::Null, |w| num(w.high)),
                }));
            }
            let mut ends = std::collections::BTreeMap::<&str, usize>::new();
            let mut drift = DriftReport {
                ratio_min: f64::INFINITY,
                ratio_max: f64::NEG_INFINITY,
                ..DriftReport::default()
            };
            let mut nonpositive = 0.0;
            for r in rows {
                if let TrialExtra::Wedge { end, drift: d } = &r.extra {
                    *ends.entry(end.as_str()).or_default() += 1;
                    if let Some(d) = d {
                        let checked = (d.x_steps + d.y_steps) as f64;
                        nonpositive += d.nonpositive_fraction * checked;
                        drift.x_steps += d.x_steps;
                        drift.y_steps += d.y_steps;
                        drift.out_of_range += d.out_of_range;
                        drift.relation_max_err = drift.relation_max_err.max(d.relation_max_err);
                        drift.ratio_min = drift.ratio_min.min(d.ratio_min);
                        drift.ratio_max = drift.ratio_max.max(d.ratio_max);
                    }
                }
            }
            let checked = (drift.x_steps + drift.y_steps) as f64;
            drift.nonpositive_fraction = if checked > 0.0 { (nonpositive / checked).min(1.0) } else { 1.0 };
            let best_low = per_start
                .iter()
                .filter_map(|s| s["wilsonLow95"].as_f64())
                .fold(0.0, f64::max);
            json!({
                "perStart": per_start,
                "bestWilsonLow95": best_low,
                "endReasons": ends,
                "drift": {
                    "xSteps": drift.x_steps,
                    "ySteps": drift.y_steps,
                    "outOfRange": drift.out_of_range,
                    "relationMaxErr": num(drift.relation_max_err),
                    "ratioMin": num(drift.ratio_min),
                    "ratioMax": num(drift.ratio_max),
                    "nonpositiveFraction": drift.nonpositive_fraction,
                },
            })
        }
    })
}

/// Runs every trial and aggregates, without touching the file system
/// (unless path dumps are requested and an output directory is set).
pub fn execute(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(RunSummary, Vec<TrialOutcome>), HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let paths_dir = match (&cfg.output_dir, opts.dump_paths) {
        (Some(dir), true) => {
            let d = dir.join("paths");
            fs::create_dir_all(&d)?;
            Some(d)
        }
        _ => None,
    };
    let prepared = Prepared {
        grid: cfg.grid()?,
        starts: if cfg.experiment == ExperimentKind::ConeCensus {
            Vec::new()
        } else {
            cfg.starts()?
        },
        paths_dir,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        if w == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| invalid("workers", e.to_string()))?;
    let rows = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| run_trial(cfg, &prepared, i))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let successes = rows.iter().filter(|r| r.success).count();
    let w = wilson_interval(successes, cfg.trials, 0.95).map_err(|e| sim_err(0, e))?;
    let summary = RunSummary {
        experiment: cfg.experiment,
        trials: cfg.trials,
        successes,
        estimate: w.estimate,
        wilson_low95: w.low,
        wilson_high95: w.high,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        details: details(cfg, &prepared, &rows)?,
        config_echo: cfg.clone(),
    };
    Ok((summary, rows))
}

/// Runs the experiment and writes `summary.json`, `trials.csv` and
/// `timing.json` into the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, HarnessError> {
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| invalid("outputDir", "required to write results"))?;
    fs::create_dir_all(&dir)?;
    let (summary, rows) = execute(cfg, opts)?;
    let mut s = serde_json::to_string_pretty(&summary)?;
    s.push('\n');
    fs::write(dir.join("summary.json"), s)?;
    let mut w = BufWriter::new(File::create(dir.join("trials.csv"))?);
    write_trials_csv(cfg, &rows, &mut w)?;
    w.flush()?;
    let timing = json!({ "wallClockSeconds": summary.wall_clock_seconds });
    fs::write(dir.join("timing.json"), format!("{}\n", serde_json::to_string_pretty(&timing)?))?;
    Ok(summary)
}
