//! Mirror couplings: two Brownian paths kept mirror images of each other
//! across a moving line until they meet.
//!
//! * In the whole plane the mirror is fixed and the pair couples when the
//!   free path reaches it.
//! * In a half-plane the pair is written in polar coordinates around the
//!   hinge (mirror ∩ boundary line). Both share the radius, a 2-D Bessel
//!   process, and the angles are reflected Brownian motions on `[0, π]` run
//!   on the clock `σ = ∫ R⁻² dt`, driven by opposite increments.
//! * In a wedge or convex polygon the construction switches between these,
//!   starting a new half-plane phase whenever one path enters the boundary
//!   band of a new edge, and stopping once both are in a band.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};

use thiserror::Error;

use crate::geometry::{
    intersect, mirror_line, reflect_across, DomainSpec, GeometryError, Line, Point, PreparedDomain,
    UnitVector,
};
use crate::noise::{fold_step, GaussianSource, IncrementStream, NoiseError, PathGrid, SeedSpec};
use crate::reflect::project_step;

/// Relative tolerance on `|x − H| = |y − H|` at the start of a half-plane
/// coupling.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Default cap on the number of phases.
pub const DEFAULT_K_MAX: usize = 10_000;
/// Stream label of the planar driver.
pub const PLANAR_STREAM: u32 = 0;
/// Stream label of the angular driver.
pub const ANGULAR_STREAM: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MirrorError {
    #[error("start points coincide")]
    CoincidentPoints,
    #[error("start points are not equidistant from the hinge ({0} vs {1})")]
    AsymmetricStart(f64, f64),
    #[error("mirror is parallel to the boundary line")]
    MirrorParallelBoundary,
    #[error("start point ({0}, {1}) is not interior")]
    StartOnBoundary(f64, f64),
    #[error("operation needs a {0} domain")]
    WrongDomain(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseKind {
    FreePlane,
    /// Coupling relative to the line of `edge`.
    HalfPlane { edge: usize, line: Line },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndReason {
    Coupled,
    /// Both paths are in a boundary band; the run stops here.
    BothOnBoundary,
    /// One path entered the band of another edge; a new phase follows.
    NewEdge,
    /// Two consecutive switch times less than two steps apart.
    Accumulation,
    PhaseCap,
    HorizonEnd,
    MirrorParallel,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EndReason::Coupled => "coupled",
            EndReason::BothOnBoundary => "bothOnBoundary",
            EndReason::NewEdge => "newEdge",
            EndReason::Accumulation => "accumulation",
            EndReason::PhaseCap => "phaseCap",
            EndReason::HorizonEnd => "horizonEnd",
            EndReason::MirrorParallel => "mirrorParallel",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase {
    pub start: usize,
    pub end: usize,
    pub kind: PhaseKind,
    pub end_reason: EndReason,
}

/// A coupled pair on the grid nodes `0..len`; runs that stop early are
/// shorter than `grid.n + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MirrorTrajectory {
    pub grid: PathGrid,
    pub x: Vec<Point>,
    pub y: Vec<Point>,
    /// Cumulative local times.
    pub lx: Vec<f64>,
    pub ly: Vec<f64>,
    /// `None` once coupled.
    pub mirror: Vec<Option<Line>>,
    pub hinge: Vec<Option<Point>>,
    /// Angle from the active boundary line, oriented with the domain on the
    /// left, to the mirror, in `[0, π]`; set in half-plane phases.
    pub beta: Vec<Option<f64>>,
    pub phase_id: Vec<usize>,
    pub phases: Vec<Phase>,
    pub coupled_at: Option<usize>,
}

impl MirrorTrajectory {
    fn with_capacity(grid: PathGrid, cap: usize) -> Self {
        MirrorTrajectory {
            grid,
            x: Vec::with_capacity(cap),
            y: Vec::with_capacity(cap),
            lx: Vec::with_capacity(cap),
            ly: Vec::with_capacity(cap),
            mirror: Vec::with_capacity(cap),
            hinge: Vec::with_capacity(cap),
            beta: Vec::with_capacity(cap),
            phase_id: Vec::with_capacity(cap),
            phases: Vec::new(),
            coupled_at: None,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn last(&self) -> usize {
        self.x.len() - 1
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        x: Point,
        y: Point,
        dlx: f64,
        dly: f64,
        mirror: Option<Line>,
        hinge: Option<Point>,
        beta: Option<f64>,
    ) {
        let (lx, ly) = match (self.lx.last(), self.ly.last()) {
            (Some(a), Some(b)) => (a + dlx, b + dly),
            _ => (dlx, dly),
        };
        self.x.push(x);
        self.y.push(y);
        self.lx.push(lx);
        self.ly.push(ly);
        self.mirror.push(mirror);
        self.hinge.push(hinge);
        self.beta.push(beta);
        self.phase_id.push(self.phases.len());
    }

    fn close_phase(&mut self, start: usize, kind: PhaseKind, end_reason: EndReason) {
        let end = self.last();
        self.phases.push(Phase {
            start,
            end,
            kind,
            end_reason,
        });
    }

    /// Phase index of node `k`; tail nodes after the last phase map to it.
    pub fn phase_of(&self, k: usize) -> Option<&Phase> {
        let id = self.phase_id[k].min(self.phases.len().checked_sub(1)?);
        self.phases.get(id)
    }

    /// Columns `t,Xx,Xy,Yx,Yy,Lx,Ly,hingeX,hingeY,beta,phaseId`; undefined
    /// values are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,Xx,Xy,Yx,Yy,Lx,Ly,hingeX,hingeY,beta,phaseId")?;
        for k in 0..self.len() {
            let (hx, hy) = match self.hinge[k] {
                Some(h) => (h.x.to_string(), h.y.to_string()),
                None => (String::new(), String::new()),
            };
            let b = self.beta[k].map(|b| b.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.grid.time(k),
                self.x[k].x,
                self.x[k].y,
                self.y[k].x,
                self.y[k].y,
                self.lx[k],
                self.ly[k],
                hx,
                hy,
                b,
                self.phase_id[k]
            )?;
        }
        Ok(())
    }
}

/// Reflection coupling in the whole plane with a fixed mirror.
pub fn simulate_plane_mirror(x: Point, y: Point, noise: &IncrementStream) -> Result<MirrorTrajectory, MirrorError> {
    noise.expect_dim(2)?;
    let m = mirror_line(x, y).map_err(|_| MirrorError::CoincidentPoints)?;
    let grid = noise.grid();
    let tol = grid.dt.sqrt() * 1e-3;
    let side = m.signed_distance(x).signum();
    let mut tr = MirrorTrajectory::with_capacity(grid, grid.n + 1);
    tr.push(x, y, 0.0, 0.0, Some(m), None, None);
    let mut cur = x;
    for k in 0..noise.len() {
        cur += noise.point(k);
        if tr.coupled_at.is_none() {
            let d = m.signed_distance(cur);
            if d * side <= 0.0 || d.abs() <= tol {
                tr.coupled_at = Some(k + 1);
            }
        }
        if tr.coupled_at.is_some() {
            tr.push(cur, cur, 0.0, 0.0, None, None, None);
        } else {
            tr.push(cur, reflect_across(&m, cur), 0.0, 0.0, Some(m), None, None);
        }
    }
    let reason = if tr.coupled_at.is_some() {
        EndReason::Coupled
    } else {
        EndReason::HorizonEnd
    };
    tr.close_phase(0, PhaseKind::FreePlane, reason);
    Ok(tr)
}

/// Rigid motion taking a boundary line with hinge `h` to the real axis with
/// the domain above and the hinge at the origin.
#[derive(Clone, Copy, Debug)]
struct Canonical {
    hinge: Point,
    rot: f64,
}

impl Canonical {
    fn new(hinge: Point, inward: UnitVector) -> Self {
        Canonical {
            hinge,
            rot: FRAC_PI_2 - inward.angle(),
        }
    }

    fn to_local(self, p: Point) -> Point {
        (p - self.hinge).rotate(self.rot)
    }

    fn to_world(self, p: Point) -> Point {
        p.rotate(-self.rot) + self.hinge
    }

    fn mirror(self, angle: f64) -> Line {
        Line::new(self.hinge, angle - self.rot)
    }
}

/// Polar angle in `(−π/2, 3π/2]` so points just outside either half of the
/// boundary get angles just outside `[0, π]`.
fn half_plane_angle(p: Point) -> f64 {
    let a = p.arg();
    if a < -FRAC_PI_2 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// State of the skew-product pair in canonical coordinates.
struct AngularPair {
    frame: Canonical,
    r: f64,
    theta_x: f64,
    theta_y: f64,
    coupled: bool,
}

/// One step's output in world coordinates.
struct PairStep {
    x: Point,
    y: Point,
    dlx: f64,
    dly: f64,
    /// Canonical mirror angle, `None` once coupled.
    beta: Option<f64>,
    coupled_now: bool,
}

impl AngularPair {
    fn new(x: Point, y: Point, hinge: Point, inward: UnitVector) -> Result<Self, MirrorError> {
        let frame = Canonical::new(hinge, inward);
        let (xl, yl) = (frame.to_local(x), frame.to_local(y));
        let (rx, ry) = (xl.norm(), yl.norm());
        if (rx - ry).abs() > SYMMETRY_TOL * rx.max(1.0) {
            return Err(MirrorError::AsymmetricStart(rx, ry));
        }
        Ok(AngularPair {
            frame,
            r: rx,
            theta_x: half_plane_angle(xl),
            theta_y: half_plane_angle(yl),
            coupled: false,
        })
    }

    fn beta(&self) -> f64 {
        0.5 * (self.theta_x + self.theta_y)
    }

    /// Advances by one grid step given the planar increment and a standard
    /// normal for the angular driver.
    fn step(&mut self, db: Point, xi: f64, dt: f64) -> PairStep {
        let r0 = self.r.max(1e-12);
        let dsigma = dt / (r0 * r0);
        let dtheta = dsigma.sqrt() * xi;
        let r1 = Point::new(r0 + db.x, db.y).norm();
        let (tx, lox, upx) = fold_step(self.theta_x, dtheta);
        let mut coupled_now = false;
        let (ty, loy, upy) = if self.coupled {
            (tx, lox, upx)
        } else {
            let (ty, loy, upy) = fold_step(self.theta_y, -dtheta);
            let before = self.theta_x - self.theta_y;
            let after = tx - ty;
            if after.abs() <= 2.0 * dsigma.sqrt() || before * after <= 0.0 {
                coupled_now = true;
                self.coupled = true;
                (tx, lox, upx)
            } else {
                (ty, loy, upy)
            }
        };
        self.r = r1;
        self.theta_x = tx;
        self.theta_y = ty;
        let x = self.frame.to_world(Point::polar(r1, tx));
        let y = if self.coupled {
            x
        } else {
            self.frame.to_world(Point::polar(r1, ty))
        };
        PairStep {
            x,
            y,
            dlx: r1 * (lox + upx),
            dly: r1 * (loy + upy),
            beta: (!self.coupled).then(|| self.beta()),
            coupled_now,
        }
    }

    fn mirror(&self) -> Line {
        self.frame.mirror(self.beta())
    }
}

struct Drivers {
    planar: GaussianSource,
    angular: GaussianSource,
    sd: f64,
}

impl Drivers {
    fn new(seed: SeedSpec, dt: f64) -> Self {
        Drivers {
            planar: GaussianSource::new(seed.with_stream(PLANAR_STREAM)),
            angular: GaussianSource::new(seed.with_stream(ANGULAR_STREAM)),
            sd: dt.sqrt(),
        }
    }

    /// Planar increment and angular normal for one step; both streams
    /// advance every step so draws stay aligned with step indices.
    fn next(&mut self) -> (Point, f64) {
        let db = Point::new(self.planar.standard() * self.sd, self.planar.standard() * self.sd);
        (db, self.angular.standard())
    }
}

fn hinge_for(x: Point, y: Point, boundary: &Line) -> Result<(Line, Point), MirrorError> {
    let m = mirror_line(x, y).map_err(|_| MirrorError::CoincidentPoints)?;
    let h = intersect(&m, boundary).map_err(|_| MirrorError::MirrorParallelBoundary)?;
    Ok((m, h))
}

/// Mirror coupling in a half-plane via the skew product around the hinge.
pub fn simulate_halfplane_mirror(
    hp: &DomainSpec,
    x: Point,
    y: Point,
    seed: SeedSpec,
    grid: PathGrid,
) -> Result<MirrorTrajectory, MirrorError> {
    let DomainSpec::HalfPlane {
        boundary,
        inward_normal,
    } = hp
    else {
        return Err(MirrorError::WrongDomain("half-plane"));
    };
    let (m, h) = hinge_for(x, y, boundary)?;
    let mut pair = AngularPair::new(x, y, h, *inward_normal)?;
    let mut drivers = Drivers::new(seed, grid.dt);
    let mut tr = MirrorTrajectory::with_capacity(grid, grid.n + 1);
    tr.push(x, y, 0.0, 0.0, Some(m), Some(h), Some(pair.beta()));
    for k in 0..grid.n {
        let (db, xi) = drivers.next();
        let s = pair.step(db, xi, grid.dt);
        if s.coupled_now {
            tr.coupled_at = Some(k + 1);
        }
        let (mirror, hinge) = if pair.coupled {
            (None, None)
        } else {
            (Some(pair.mirror()), Some(h))
        };
        tr.push(s.x, s.y, s.dlx, s.dly, mirror, hinge, s.beta);
    }
    let reason = if tr.coupled_at.is_some() {
        EndReason::Coupled
    } else {
        EndReason::HorizonEnd
    };
    tr.close_phase(
        0,
        PhaseKind::HalfPlane {
            edge: 0,
            line: *boundary,
        },
        reason,
    );
    Ok(tr)
}

/// Picks the band edge of the in-band path, preferring edges other than
/// `current` and then the nearest.
fn pick_edge(pd: &PreparedDomain, p: Point, mask: u64, current: Option<usize>) -> usize {
    (0..pd.edges().len())
        .filter(|&i| mask >> i & 1 == 1 && Some(i) != current)
        .min_by(|&a, &b| pd.edge_distance(a, p).total_cmp(&pd.edge_distance(b, p)))
        .or(current)
        .expect("non-empty band mask")
}

/// Phase machine for wedges and convex polygons.
pub fn simulate_polygon_mirror(
    d: &DomainSpec,
    x: Point,
    y: Point,
    seed: SeedSpec,
    grid: PathGrid,
    eps_bd: f64,
    k_max: usize,
) -> Result<MirrorTrajectory, MirrorError> {
    if !matches!(d, DomainSpec::Wedge { .. } | DomainSpec::ConvexPolygon { .. }) {
        return Err(MirrorError::WrongDomain("wedge or polygon"));
    }
    let pd = PreparedDomain::new(d)?;
    for p in [x, y] {
        if pd.signed_distance(p) <= 0.0 {
            return Err(MirrorError::StartOnBoundary(p.x, p.y));
        }
    }
    let m0 = mirror_line(x, y).map_err(|_| MirrorError::CoincidentPoints)?;
    let mut drivers = Drivers::new(seed, grid.dt);
    let mut tr = MirrorTrajectory::with_capacity(grid, grid.n + 1);
    tr.push(x, y, 0.0, 0.0, Some(m0), None, None);

    // free phase until the first band entry
    let tol = grid.dt.sqrt() * 1e-3;
    let side = m0.signed_distance(x).signum();
    let mut cur = x;
    let mut k = 0;
    let mut switch: Option<(u64, u64)> = None;
    let mx0 = pd.band_mask(x, eps_bd);
    let my0 = pd.band_mask(y, eps_bd);
    if mx0 != 0 || my0 != 0 {
        switch = Some((mx0, my0));
    }
    while switch.is_none() && k < grid.n {
        let (db, _) = drivers.next();
        cur += db;
        k += 1;
        let dist = m0.signed_distance(cur);
        if dist * side <= 0.0 || dist.abs() <= tol {
            tr.coupled_at = Some(k);
            tr.push(cur, cur, 0.0, 0.0, None, None, None);
            tr.close_phase(0, PhaseKind::FreePlane, EndReason::Coupled);
            coupled_tail(&pd, &mut tr, &mut drivers, k, grid.n);
            return Ok(tr);
        }
        let ycur = reflect_across(&m0, cur);
        tr.push(cur, ycur, 0.0, 0.0, Some(m0), None, None);
        let (mx, my) = (pd.band_mask(cur, eps_bd), pd.band_mask(ycur, eps_bd));
        if mx != 0 || my != 0 {
            switch = Some((mx, my));
        }
    }
    let Some(mut masks) = switch else {
        tr.close_phase(0, PhaseKind::FreePlane, EndReason::HorizonEnd);
        return Ok(tr);
    };
    let mut phase_start = 0;
    let mut kind = PhaseKind::FreePlane;
    let mut current_edge: Option<usize> = None;

    loop {
        let (mx, my) = masks;
        let here = tr.last();
        if mx != 0 && my != 0 {
            tr.close_phase(phase_start, kind, EndReason::BothOnBoundary);
            return Ok(tr);
        }
        if current_edge.is_some() && here - phase_start < 2 {
            tr.close_phase(phase_start, kind, EndReason::Accumulation);
            return Ok(tr);
        }
        if tr.phases.len() + 1 >= k_max {
            tr.close_phase(phase_start, kind, EndReason::PhaseCap);
            return Ok(tr);
        }
        let (xk, yk) = (tr.x[here], tr.y[here]);
        let edge = if mx != 0 {
            pick_edge(&pd, xk, mx, current_edge)
        } else {
            pick_edge(&pd, yk, my, current_edge)
        };
        let e = pd.edges()[edge];
        let line = e.line();
        let Ok((_, h)) = hinge_for(xk, yk, &line) else {
            tr.close_phase(phase_start, kind, EndReason::MirrorParallel);
            return Ok(tr);
        };
        tr.close_phase(phase_start, kind, EndReason::NewEdge);
        // the switch node belongs to the new phase
        *tr.phase_id.last_mut().expect("node") = tr.phases.len();
        phase_start = here;
        kind = PhaseKind::HalfPlane { edge, line };
        current_edge = Some(edge);
        let mut pair = AngularPair::new(xk, yk, h, e.inward)?;
        *tr.hinge.last_mut().expect("node") = Some(h);
        *tr.beta.last_mut().expect("node") = Some(pair.beta());

        let mut next: Option<(u64, u64)> = None;
        while next.is_none() && k < grid.n {
            let (db, xi) = drivers.next();
            let s = pair.step(db, xi, grid.dt);
            k += 1;
            if s.coupled_now {
                tr.coupled_at = Some(k);
                tr.push(s.x, s.x, s.dlx, s.dlx, None, None, None);
                tr.close_phase(phase_start, kind, EndReason::Coupled);
                coupled_tail(&pd, &mut tr, &mut drivers, k, grid.n);
                return Ok(tr);
            }
            tr.push(s.x, s.y, s.dlx, s.dly, Some(pair.mirror()), Some(h), s.beta);
            let (bx, by) = (pd.band_mask(s.x, eps_bd), pd.band_mask(s.y, eps_bd));
            let other = !(1u64 << edge);
            if (bx != 0 && by != 0) || (bx | by) & other != 0 {
                next = Some((bx, by));
            }
        }
        match next {
            Some(m) => masks = m,
            None => {
                tr.close_phase(phase_start, kind, EndReason::HorizonEnd);
                return Ok(tr);
            }
        }
    }
}

/// After coupling both paths follow one reflected path in the domain.
fn coupled_tail(pd: &PreparedDomain, tr: &mut MirrorTrajectory, drivers: &mut Drivers, mut k: usize, n: usize) {
    let mut cur = tr.x[tr.last()];
    while k < n {
        let (db, _) = drivers.next();
        let s = project_step(pd, cur, db);
        cur = s.point;
        k += 1;
        tr.push(cur, cur, s.local_time, s.local_time, None, None, None);
    }
}

/// Outcome of scanning a wedge trajectory for paths sitting on different
/// edges at distinct distances from the vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem3Event {
    pub occurred: bool,
    pub step_index: Option<usize>,
    pub x_edge_dist: f64,
    pub y_edge_dist: f64,
    pub radial_gap: f64,
}

/// Edge ids of a wedge.
pub const EDGE_X: usize = 0;
pub const EDGE_Y: usize = 1;

/// First index with one path in the band of `E_X` and the other in the
/// band of `E_Y`, radial gap and separation above `delta`, and a mirror
/// staying more than `delta` from the vertex.
pub fn detect_theorem3_event(
    tr: &MirrorTrajectory,
    wedge: &DomainSpec,
    eps_bd: f64,
    delta: f64,
) -> Result<Theorem3Event, MirrorError> {
    if !matches!(wedge, DomainSpec::Wedge { .. }) {
        return Err(MirrorError::WrongDomain("wedge"));
    }
    let pd = wedge.prepare();
    let dist = |e: usize, p: Point| pd.edge_distance(e, p);
    for k in 0..tr.len() {
        let (x, y) = (tr.x[k], tr.y[k]);
        let Some(m) = tr.mirror[k] else { continue };
        let (dxx, dyy) = (dist(EDGE_X, x), dist(EDGE_Y, y));
        let (dxy, dyx) = (dist(EDGE_Y, x), dist(EDGE_X, y));
        let pair = if dxx <= eps_bd && dyy <= eps_bd {
            Some((dxx, dyy))
        } else if dxy <= eps_bd && dyx <= eps_bd {
            Some((dxy, dyx))
        } else {
            None
        };
        let Some((a, b)) = pair else { continue };
        let gap = (x.norm() - y.norm()).abs();
        if gap > delta && x.dist(y) > delta && m.distance(Point::ORIGIN) > delta {
            return Ok(Theorem3Event {
                occurred: true,
                step_index: Some(k),
                x_edge_dist: a,
                y_edge_dist: b,
                radial_gap: gap,
            });
        }
    }
    let k = tr.last();
    Ok(Theorem3Event {
        occurred: false,
        step_index: None,
        x_edge_dist: dist(EDGE_X, tr.x[k]),
        y_edge_dist: dist(EDGE_Y, tr.y[k]),
        radial_gap: (tr.x[k].norm() - tr.y[k].norm()).abs(),
    })
}
