//! Logarithmic maps of the moving wedges of a wedge mirror coupling onto
//! the strip `U = {0 ≤ Im z ≤ π}`.
//!
//! A frame is fixed by the wedge angle `α`, the hinge `H` on the real axis
//! and the mirror angle `β`. The mirror meets the other edge at `H'`; the
//! wedge `W` has vertex `A` on the real axis with sides through `H` and
//! `H'`, and `W'` is its mirror image with vertex `A'` on the edge at angle
//! `α`. `f` sends `W` onto `U` and `g` sends `W'` onto `U`, and
//! `g(z) = f(S(z))` where `S` is the reflection in the mirror.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{reflect_across, Line, Point};
use crate::mirror::{MirrorTrajectory, PhaseKind, EDGE_X, EDGE_Y};
use crate::noise::SeedSpec;

/// Slack on the angular membership test for `W` and `W'`.
pub const WEDGE_ANGLE_TOL: f64 = 1e-9;
/// Distance to the vertex below which the maps are not evaluated.
pub const VERTEX_CUTOFF: f64 = 1e-14;
const BETA_UPPER_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StripError {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("point lies outside the wedge W")]
    OutsideWedgeW,
    #[error("point lies outside the wedge W'")]
    OutsideWedgeWprime,
    #[error("point is at the wedge vertex")]
    VertexSingularity,
    #[error("radius {r} outside ({lo}, {hi})")]
    RangeError { r: f64, lo: f64, hi: f64 },
    #[error("{frames} frames for a trajectory of {nodes} nodes")]
    LengthMismatch { frames: usize, nodes: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WedgeMirrorFrame {
    pub alpha: f64,
    /// Hinge on the real axis, `(h, 0)`.
    pub h: f64,
    pub beta: f64,
    pub gamma: f64,
    pub h_prime: Point,
    /// Vertex of `W`, `(a, 0)`.
    pub a: f64,
    pub a_prime: Point,
}

fn check_angles(alpha: f64, beta: f64) -> Result<(), StripError> {
    if !(alpha > 0.0 && alpha < PI / 2.0) {
        return Err(StripError::ParameterOutOfRange(format!("alpha {alpha} outside (0, π/2)")));
    }
    // the upper end is closed: 2β − α = π/2 is still a proper frame
    if !(beta > alpha && beta <= FRAC_PI_4 + alpha / 2.0 + BETA_UPPER_SLACK) {
        return Err(StripError::ParameterOutOfRange(format!(
            "beta {beta} outside ({alpha}, {}]",
            FRAC_PI_4 + alpha / 2.0
        )));
    }
    Ok(())
}

/// Frame from the hinge `(h, 0)` and mirror angle `beta`.
pub fn build_frame(alpha: f64, h: f64, beta: f64) -> Result<WedgeMirrorFrame, StripError> {
    check_angles(alpha, beta)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(StripError::ParameterOutOfRange(format!("hinge {h} must be positive")));
    }
    let gamma = beta - alpha;
    // triangle (0, H, H'): angle α at 0, π − β at H, γ at H'
    let hp_len = h * beta.sin() / gamma.sin();
    Ok(assemble(alpha, h, beta, hp_len))
}

/// Frame from the distance `|H'|` along the edge at angle `alpha` and the
/// angle `gamma` between that edge and the mirror.
pub fn frame_from_hprime(alpha: f64, hp_len: f64, gamma: f64) -> Result<WedgeMirrorFrame, StripError> {
    let beta = gamma + alpha;
    check_angles(alpha, beta)?;
    if !(hp_len > 0.0 && hp_len.is_finite()) {
        return Err(StripError::ParameterOutOfRange(format!("|H'| {hp_len} must be positive")));
    }
    let h = hp_len * gamma.sin() / beta.sin();
    Ok(assemble(alpha, h, beta, hp_len))
}

fn assemble(alpha: f64, h: f64, beta: f64, hp_len: f64) -> WedgeMirrorFrame {
    let gamma = beta - alpha;
    let a = h * (1.0 + alpha.sin() / (2.0 * beta - alpha).sin());
    let ap_len = hp_len * (1.0 - alpha.sin() / (2.0 * gamma + alpha).sin());
    WedgeMirrorFrame {
        alpha,
        h,
        beta,
        gamma,
        h_prime: Point::polar(hp_len, alpha),
        a,
        a_prime: Point::polar(ap_len, alpha),
    }
}

impl WedgeMirrorFrame {
    pub fn mirror(&self) -> Line {
        Line::new(Point::new(self.h, 0.0), self.beta)
    }

    pub fn hp_len(&self) -> f64 {
        self.h_prime.norm()
    }

    pub fn ap_len(&self) -> f64 {
        self.a_prime.norm()
    }

    /// `π / (π + α − 2β)`, the common scale of `f` and `g`.
    pub fn scale(&self) -> f64 {
        PI / (PI + self.alpha - 2.0 * self.beta)
    }

    /// Argument of `z − A` on the branch whose cut bisects the exterior
    /// of `W`, and whether it lies in `W`.
    fn arg_w(&self, z: Point) -> (f64, bool) {
        let lo = 2.0 * self.beta - self.alpha;
        let cut = 0.5 * (lo - PI);
        let mut phi = (z - Point::new(self.a, 0.0)).arg();
        if phi < cut {
            phi += 2.0 * PI;
        }
        (phi, phi >= lo - WEDGE_ANGLE_TOL && phi <= PI + WEDGE_ANGLE_TOL)
    }

    fn arg_wprime(&self, z: Point) -> (f64, bool) {
        let lo = 2.0 * self.beta - PI;
        let cut = 0.5 * (self.alpha + 2.0 * self.beta - 3.0 * PI);
        let mut phi = (z - self.a_prime).arg();
        if phi < cut {
            phi += 2.0 * PI;
        } else if phi >= cut + 2.0 * PI {
            phi -= 2.0 * PI;
        }
        (phi, phi >= lo - WEDGE_ANGLE_TOL && phi <= self.alpha + WEDGE_ANGLE_TOL)
    }

    pub fn in_w(&self, z: Point) -> bool {
        self.arg_w(z).1
    }

    pub fn in_wprime(&self, z: Point) -> bool {
        self.arg_wprime(z).1
    }
}

/// `f(z) = (log(z − A) + i(α − 2β))·π/(π + α − 2β)`.
pub fn eval_f(frame: &WedgeMirrorFrame, z: Point) -> Result<Complex64, StripError> {
    let rho = z.dist(Point::new(frame.a, 0.0));
    if rho < VERTEX_CUTOFF {
        return Err(StripError::VertexSingularity);
    }
    let (phi, inside) = frame.arg_w(z);
    if !inside {
        return Err(StripError::OutsideWedgeW);
    }
    let log = Complex64::new(rho.ln(), phi);
    Ok((log + Complex64::new(0.0, frame.alpha - 2.0 * frame.beta)) * frame.scale())
}

/// `g(z) = conj((log(z − A') − iα)·π/(π − α − 2γ))`.
pub fn eval_g(frame: &WedgeMirrorFrame, z: Point) -> Result<Complex64, StripError> {
    let rho = z.dist(frame.a_prime);
    if rho < VERTEX_CUTOFF {
        return Err(StripError::VertexSingularity);
    }
    let (phi, inside) = frame.arg_wprime(z);
    if !inside {
        return Err(StripError::OutsideWedgeWprime);
    }
    let k = PI / (PI - frame.alpha - 2.0 * frame.gamma);
    Ok(((Complex64::new(rho.ln(), phi) - Complex64::new(0.0, frame.alpha)) * k).conj())
}

/// `|g(z) − f(S(z))|` with `S` the reflection in the mirror.
pub fn symmetry_check(frame: &WedgeMirrorFrame, z: Point) -> Result<f64, StripError> {
    let g = eval_g(frame, z)?;
    let f = eval_f(frame, reflect_across(&frame.mirror(), z))?;
    Ok((g - f).norm())
}

fn range(r: f64, lo: f64, hi: f64) -> Result<(), StripError> {
    if r > lo && r < hi {
        Ok(())
    } else {
        Err(StripError::RangeError { r, lo, hi })
    }
}

/// `∂/∂β Re f` at the real point `r ∈ (H, A)` with `α` and `H` fixed.
pub fn dfdbeta(frame: &WedgeMirrorFrame, r: f64) -> Result<f64, StripError> {
    range(r, frame.h, frame.a)?;
    let (al, be, h) = (frame.alpha, frame.beta, frame.h);
    let open = PI + al - 2.0 * be;
    let t = 2.0 * be - al;
    let cot_csc = t.cos() / (t.sin() * t.sin());
    Ok(-2.0 * PI * h * al.sin() * cot_csc / (open * (frame.a - r))
        + 2.0 * PI * (frame.a - r).ln() / (open * open))
}

/// `|f'|` on the segment `(H, A)`: `π/(π + α − 2β) · (A − r)⁻¹`.
pub fn dfdtheta_abs(frame: &WedgeMirrorFrame, r: f64) -> Result<f64, StripError> {
    range(r, frame.h, frame.a)?;
    Ok(frame.scale() / (frame.a - r))
}

/// `∂/∂γ Re g` at `r·e^{iα}`, `r ∈ (|A'|, |H'|)`, with `α` and `|H'|` fixed.
pub fn dgdgamma(frame: &WedgeMirrorFrame, r: f64) -> Result<f64, StripError> {
    let (ap, hp) = (frame.ap_len(), frame.hp_len());
    range(r, ap, hp)?;
    let (al, ga) = (frame.alpha, frame.gamma);
    let open = PI - al - 2.0 * ga;
    let t = 2.0 * ga + al;
    let cot_csc = t.cos() / (t.sin() * t.sin());
    Ok(2.0 * PI * (r - ap).ln() / (open * open) - 2.0 * PI * hp * al.sin() * cot_csc / (open * (r - ap)))
}

/// `|g'|` on the segment `(A', H')`: `π/(π − α − 2γ) · (r − |A'|)⁻¹`.
pub fn dgdtheta_abs(frame: &WedgeMirrorFrame, r: f64) -> Result<f64, StripError> {
    let (ap, hp) = (frame.ap_len(), frame.hp_len());
    range(r, ap, hp)?;
    Ok(PI / (PI - frame.alpha - 2.0 * frame.gamma) / (r - ap))
}

/// Per-step frames along a wedge coupling: from the hinge and mirror angle
/// of each half-plane phase on either edge; `None` where the coupling is
/// in its free phase, coupled, or the angle is outside the admissible
/// range.
pub fn frames_along(tr: &MirrorTrajectory, alpha: f64) -> Vec<Option<WedgeMirrorFrame>> {
    (0..tr.len())
        .map(|k| {
            let ph = tr.phases.get(tr.phase_id[k])?;
            let (hinge, beta) = (tr.hinge[k]?, tr.beta[k]?);
            match ph.kind {
                PhaseKind::HalfPlane { edge: EDGE_X, .. } => build_frame(alpha, hinge.x, beta).ok(),
                PhaseKind::HalfPlane { edge: EDGE_Y, .. } => frame_from_hprime(alpha, hinge.norm(), beta).ok(),
                _ => None,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StripProcess {
    /// `f(X_k)` where a frame exists and `X_k ∈ W`.
    pub z_star: Vec<Option<Complex64>>,
    /// `ρ̃_k = Σ_{j<k} |f'(X_j)|²·dt` over evaluated steps.
    pub rho_tilde: Vec<f64>,
    /// `|g(Y_k) − f(X_k)|` where both are defined.
    pub residual: Vec<Option<f64>>,
    /// Steps with a frame where `X` lay outside `W`.
    pub skipped: Vec<usize>,
}

pub fn strip_process(
    tr: &MirrorTrajectory,
    frames: &[Option<WedgeMirrorFrame>],
) -> Result<StripProcess, StripError> {
    strip_process_points(&tr.x, &tr.y, tr.grid.dt, frames)
}

/// [`strip_process`] on bare position arrays.
pub fn strip_process_points(
    x: &[Point],
    y: &[Point],
    dt: f64,
    frames: &[Option<WedgeMirrorFrame>],
) -> Result<StripProcess, StripError> {
    if frames.len() != x.len() || y.len() != x.len() {
        return Err(StripError::LengthMismatch {
            frames: frames.len(),
            nodes: x.len(),
        });
    }
    let n = x.len();
    let mut z_star = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);
    let mut rho_tilde = Vec::with_capacity(n);
    let mut skipped = Vec::new();
    let mut rho = 0.0;
    for k in 0..n {
        rho_tilde.push(rho);
        let Some(fr) = frames[k] else {
            z_star.push(None);
            residual.push(None);
            continue;
        };
        match eval_f(&fr, x[k]) {
            Ok(z) => {
                z_star.push(Some(z));
                residual.push(eval_g(&fr, y[k]).ok().map(|g| (g - z).norm()));
                let dz = fr.scale() / x[k].dist(Point::new(fr.a, 0.0));
                rho += dz * dz * dt;
            }
            Err(_) => {
                z_star.push(None);
                residual.push(None);
                skipped.push(k);
            }
        }
    }
    Ok(StripProcess {
        z_star,
        rho_tilde,
        residual,
        skipped,
    })
}

/// Summary of the oblique-reflection diagnostics at push steps.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DriftReport {
    /// Push steps on the real-axis edge that entered the check.
    pub x_steps: usize,
    /// Push steps on the edge at angle `α` that entered the check.
    pub y_steps: usize,
    /// Push steps skipped because the radius was outside the segment.
    pub out_of_range: usize,
    /// Largest `|Δβ − ΔL/(2|P − hinge|)|` over checked steps.
    pub relation_max_err: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Fraction of checked steps with a non-positive ratio; 1 when none
    /// were checked.
    pub nonpositive_fraction: f64,
}

/// Checks, at every step where exactly one path is pushed in a half-plane
/// phase with the mirror angle in `window`, that the mirror angle moved by
/// `ΔL/(2|P − hinge|)` and that the reflection direction in the strip
/// points backwards: `∂_β Re f / (|P − H|·|f'|) ≤ 0` on the real-axis
/// edge and the analogue with `g` on the other edge.
pub fn drift_bound_check(
    tr: &MirrorTrajectory,
    frames: &[Option<WedgeMirrorFrame>],
    window: (f64, f64),
) -> Result<DriftReport, StripError> {
    if frames.len() != tr.len() {
        return Err(StripError::LengthMismatch {
            frames: frames.len(),
            nodes: tr.len(),
        });
    }
    let mut rep = DriftReport {
        ratio_min: f64::INFINITY,
        ratio_max: f64::NEG_INFINITY,
        ..DriftReport::default()
    };
    let mut nonpositive = 0usize;
    for k in 0..tr.len().saturating_sub(1) {
        if tr.phase_id[k] != tr.phase_id[k + 1] {
            continue;
        }
        let (Some(fr), Some(b0), Some(b1), Some(hinge)) = (frames[k], tr.beta[k], tr.beta[k + 1], tr.hinge[k + 1]) else {
            continue;
        };
        if !(fr.beta >= window.0 && fr.beta <= window.1) {
            continue;
        }
        let dlx = tr.lx[k + 1] - tr.lx[k];
        let dly = tr.ly[k + 1] - tr.ly[k];
        let (dl, p) = match (dlx > 0.0, dly > 0.0) {
            (true, false) => (dlx, tr.x[k + 1]),
            (false, true) => (dly, tr.y[k + 1]),
            _ => continue,
        };
        let on_x_edge = matches!(tr.phases[tr.phase_id[k]].kind, PhaseKind::HalfPlane { edge: EDGE_X, .. });
        let r = p.norm();
        let ratio = if on_x_edge {
            match (dfdbeta(&fr, r), dfdtheta_abs(&fr, r)) {
                (Ok(a), Ok(b)) => a / (p.dist(hinge) * b),
                _ => {
                    rep.out_of_range += 1;
                    continue;
                }
            }
        } else {
            match (dgdgamma(&fr, r), dgdtheta_abs(&fr, r)) {
                (Ok(a), Ok(b)) => a / (p.dist(hinge) * b),
                _ => {
                    rep.out_of_range += 1;
                    continue;
                }
            }
        };
        if on_x_edge {
            rep.x_steps += 1;
        } else {
            rep.y_steps += 1;
        }
        let err = ((b1 - b0) - dl / (2.0 * p.dist(hinge))).abs();
        rep.relation_max_err = rep.relation_max_err.max(err);
        rep.ratio_min = rep.ratio_min.min(ratio);
        rep.ratio_max = rep.ratio_max.max(ratio);
        if ratio <= 0.0 {
            nonpositive += 1;
        }
    }
    let checked = rep.x_steps + rep.y_steps;
    rep.nonpositive_fraction = if checked == 0 {
        1.0
    } else {
        nonpositive as f64 / checked as f64
    };
    Ok(rep)
}

/// Random admissible frame: `α ∈ [0.05, 1.5]`, `H ∈ [0.1, 5]`, and `β`
/// spread over `(α, π/4 + α/2)`.
pub fn random_frame<R: Rng + ?Sized>(rng: &mut R) -> WedgeMirrorFrame {
    loop {
        let alpha = rng.random_range(0.05..1.5);
        let h = rng.random_range(0.1..5.0);
        let u: f64 = rng.random_range(0.01..1.0);
        if let Ok(f) = build_frame(alpha, h, alpha + u * (FRAC_PI_4 - alpha / 2.0)) {
            return f;
        }
    }
}

/// Random point of `W'` at distance up to `3|H'|` from its vertex.
pub fn random_point_wprime<R: Rng + ?Sized>(fr: &WedgeMirrorFrame, rng: &mut R) -> Point {
    let rho = fr.hp_len() * rng.random_range(1e-3..3.0);
    let phi = rng.random_range((2.0 * fr.beta - PI)..=fr.alpha);
    fr.a_prime + Point::polar(rho, phi)
}

/// Results of [`strip_self_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StripCheckReport {
    pub frames_tested: usize,
    pub points_per_frame: usize,
    pub max_symmetry_residual: f64,
    /// Largest relative gap between a closed-form derivative and its
    /// central difference.
    pub derivative_max_relerr: f64,
    /// Samples where `dfdbeta` or `dgdgamma` was not negative.
    pub negativity_violations: usize,
}

fn rel_err(exact: f64, approx: f64) -> f64 {
    (exact - approx).abs() / exact.abs().max(f64::MIN_POSITIVE)
}

/// Sweeps random frames, checking `g = f∘S` on random points of `W'`, the
/// four derivative forms against central differences, and the sign of
/// the two angle derivatives within unit distance of the vertices.
pub fn strip_self_check(frames: usize, points: usize, seed: u64) -> StripCheckReport {
    const STEP: f64 = 1e-5;
    let mut rng = SeedSpec::new(seed, 0, 0).rng();
    let mut rep = StripCheckReport {
        frames_tested: frames,
        points_per_frame: points,
        max_symmetry_residual: 0.0,
        derivative_max_relerr: 0.0,
        negativity_violations: 0,
    };
    for _ in 0..frames {
        let fr = random_frame(&mut rng);
        for _ in 0..points {
            let z = random_point_wprime(&fr, &mut rng);
            if let Ok(res) = symmetry_check(&fr, z) {
                rep.max_symmetry_residual = rep.max_symmetry_residual.max(res);
            } else {
                rep.max_symmetry_residual = f64::INFINITY;
            }
        }
        let u: f64 = rng.random_range(0.05..0.95);
        // radii within unit distance of the vertex, away from the far end
        let r = fr.a - u * (fr.a - fr.h).min(1.0);
        let rp = fr.ap_len() + u * (fr.hp_len() - fr.ap_len()).min(1.0);
        let re_f = |b: f64| eval_f(&build_frame(fr.alpha, fr.h, b).unwrap(), Point::new(r, 0.0)).unwrap().re;
        let re_g = |g: f64| {
            let f2 = frame_from_hprime(fr.alpha, fr.hp_len(), g).unwrap();
            eval_g(&f2, Point::polar(rp, fr.alpha)).unwrap().re
        };
        let (db, dg) = (dfdbeta(&fr, r).unwrap(), dgdgamma(&fr, rp).unwrap());
        // angle steps small against the rate at which the vertex moves
        let margin = (0.5 * (FRAC_PI_4 + fr.alpha / 2.0 - fr.beta)).min(0.5 * fr.gamma);
        let tiny = 1e-9 * margin.min(1.0);
        let a_at = |b: f64| build_frame(fr.alpha, fr.h, b).unwrap().a;
        let va = ((a_at(fr.beta + tiny) - a_at(fr.beta - tiny)) / (2.0 * tiny)).abs();
        let sb = STEP.min(STEP * (fr.a - r) / va).min(margin);
        let ap_at = |g: f64| frame_from_hprime(fr.alpha, fr.hp_len(), g).unwrap().ap_len();
        let vap = ((ap_at(fr.gamma + tiny) - ap_at(fr.gamma - tiny)) / (2.0 * tiny)).abs();
        let sg = STEP.min(STEP * (rp - fr.ap_len()) / vap).min(margin);
        let mut errs = vec![
            rel_err(db, (re_f(fr.beta + sb) - re_f(fr.beta - sb)) / (2.0 * sb)),
            rel_err(dg, (re_g(fr.gamma + sg) - re_g(fr.gamma - sg)) / (2.0 * sg)),
        ];
        let h = STEP * (fr.a - r);
        let fd = (eval_f(&fr, Point::new(r + h, 0.0)).unwrap() - eval_f(&fr, Point::new(r - h, 0.0)).unwrap()).norm() / (2.0 * h);
        errs.push(rel_err(dfdtheta_abs(&fr, r).unwrap(), fd));
        let h = STEP * (rp - fr.ap_len());
        let gd = (eval_g(&fr, Point::polar(rp + h, fr.alpha)).unwrap() - eval_g(&fr, Point::polar(rp - h, fr.alpha)).unwrap()).norm()
            / (2.0 * h);
        errs.push(rel_err(dgdtheta_abs(&fr, rp).unwrap(), gd));
        for e in errs {
            rep.derivative_max_relerr = rep.derivative_max_relerr.max(e);
        }
        if !(db < 0.0) {
            rep.negativity_violations += 1;
        }
        if !(dg < 0.0) {
            rep.negativity_violations += 1;
        }
    }
    rep
}
