//! Planar geometric primitives shared by every simulator: points, undirected
//! lines, cones, and the convex domains (half-plane, disk, wedge, convex
//! polygon) together with their boundary queries.
//!
//! Points double as complex numbers through [`Point::to_complex`] and
//! [`Point::from_complex`]; the strip maps work in complex form while the
//! simulators work in vector form.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance within which a point counts as lying on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;
/// Minimal angular separation for two lines to be considered non-parallel.
pub const PARALLEL_TOL: f64 = 1e-12;
/// Minimal separation for two points to define a mirror.
pub const COINCIDENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("lines are parallel")]
    ParallelLines,
    #[error("point ({0}, {1}) is not on the boundary")]
    NotOnBoundary(f64, f64),
    #[error("point ({0}, {1}) is a corner of the domain")]
    CornerPoint(f64, f64),
    #[error("points coincide")]
    CoincidentPoints,
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
}

/// A point (or vector) in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn polar(r: f64, theta: f64) -> Self {
        Point::new(r * theta.cos(), r * theta.sin())
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn arg(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Counterclockwise rotation about the origin.
    #[inline]
    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    #[inline]
    pub fn from_complex(z: Complex64) -> Self {
        Point::new(z.re, z.im)
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point {
    #[inline]
    fn add_assign(&mut self, o: Point) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// A unit-length direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct UnitVector {
    ux: f64,
    uy: f64,
}

impl TryFrom<[f64; 2]> for UnitVector {
    type Error = String;
    fn try_from(v: [f64; 2]) -> Result<Self, String> {
        UnitVector::normalize(Point::new(v[0], v[1]))
            .ok_or_else(|| "unit vector must be non-zero and finite".to_string())
    }
}

impl From<UnitVector> for [f64; 2] {
    fn from(u: UnitVector) -> Self {
        [u.ux, u.uy]
    }
}

impl UnitVector {
    pub const E1: UnitVector = UnitVector { ux: 1.0, uy: 0.0 };
    pub const E2: UnitVector = UnitVector { ux: 0.0, uy: 1.0 };

    /// Normalizes `v`; `None` for zero or non-finite input.
    pub fn normalize(v: Point) -> Option<Self> {
        let n = v.norm();
        if n > 0.0 && n.is_finite() {
            Some(UnitVector {
                ux: v.x / n,
                uy: v.y / n,
            })
        } else {
            None
        }
    }

    #[inline]
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        UnitVector { ux: c, uy: s }
    }

    #[inline]
    pub fn ux(self) -> f64 {
        self.ux
    }

    #[inline]
    pub fn uy(self) -> f64 {
        self.uy
    }

    #[inline]
    pub fn as_point(self) -> Point {
        Point::new(self.ux, self.uy)
    }

    #[inline]
    pub fn dot(self, o: UnitVector) -> f64 {
        self.ux * o.ux + self.uy * o.uy
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.uy.atan2(self.ux)
    }
}

impl Neg for UnitVector {
    type Output = UnitVector;
    fn neg(self) -> UnitVector {
        UnitVector {
            ux: -self.ux,
            uy: -self.uy,
        }
    }
}

/// Reduces an angle into `[0, π)`.
pub fn normalize_line_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(PI);
    if a >= PI {
        a -= PI;
    }
    a
}

/// Undirected line `{base + r·e^{i·angle} : r ∈ ℝ}` with `angle ∈ [0, π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "LineRepr", into = "LineRepr")]
pub struct Line {
    pub base: Point,
    angle: f64,
}

#[derive(Serialize, Deserialize)]
struct LineRepr {
    base: Point,
    angle: f64,
}

impl From<LineRepr> for Line {
    fn from(r: LineRepr) -> Self {
        Line::new(r.base, r.angle)
    }
}

impl From<Line> for LineRepr {
    fn from(l: Line) -> Self {
        LineRepr {
            base: l.base,
            angle: l.angle,
        }
    }
}

impl Line {
    pub fn new(base: Point, angle: f64) -> Self {
        Line {
            base,
            angle: normalize_line_angle(angle),
        }
    }

    pub fn through(a: Point, b: Point) -> Self {
        Line::new(a, (b - a).arg())
    }

    #[inline]
    pub fn angle(&self) -> f64 {
        self.angle
    }

    #[inline]
    pub fn direction(&self) -> Point {
        Point::polar(1.0, self.angle)
    }

    /// Signed distance, positive on the left of the direction `e^{i·angle}`.
    #[inline]
    pub fn signed_distance(&self, p: Point) -> f64 {
        self.direction().cross(p - self.base)
    }

    #[inline]
    pub fn distance(&self, p: Point) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Orthogonal projection of `p` onto the line.
    pub fn foot(&self, p: Point) -> Point {
        let u = self.direction();
        self.base + u * u.dot(p - self.base)
    }
}

/// Mirror image of `p` across `line`.
pub fn reflect_across(line: &Line, p: Point) -> Point {
    let u = line.direction();
    let d = p - line.base;
    line.base + u * (2.0 * u.dot(d)) - d
}

/// Angular separation of two undirected lines, in `[0, π/2]`.
fn line_angle_gap(a: &Line, b: &Line) -> f64 {
    let d = (a.angle - b.angle).abs();
    d.min(PI - d)
}

/// Intersection point of two non-parallel lines.
pub fn intersect(a: &Line, b: &Line) -> Result<Point, GeometryError> {
    if line_angle_gap(a, b) <= PARALLEL_TOL {
        return Err(GeometryError::ParallelLines);
    }
    let ua = a.direction();
    let ub = b.direction();
    let s = (b.base - a.base).cross(ub) / ua.cross(ub);
    Ok(a.base + ua * s)
}

/// Perpendicular bisector of `x` and `y`: the line across which they are
/// mirror images.
pub fn mirror_line(x: Point, y: Point) -> Result<Line, GeometryError> {
    let d = y - x;
    if d.norm() <= COINCIDENT_TOL {
        return Err(GeometryError::CoincidentPoints);
    }
    Ok(Line::new((x + y) * 0.5, d.arg() + FRAC_PI_2))
}

/// Angle between two unit vectors, in `[0, π]`.
pub fn angle_between(v: UnitVector, w: UnitVector) -> f64 {
    v.dot(w).clamp(-1.0, 1.0).acos()
}

/// Open circular cone `vertex + C(halfAngle)` around `axis` in any
/// dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSpec {
    vertex: Vec<f64>,
    axis: Vec<f64>,
    half_angle: f64,
}

impl ConeSpec {
    /// `axis` is normalized; returns `None` when the half-angle is outside
    /// `(0, π)`, the axis is zero, or dimensions disagree.
    pub fn new(vertex: Vec<f64>, axis: Vec<f64>, half_angle: f64) -> Option<Self> {
        if !(half_angle > 0.0 && half_angle < PI) || vertex.len() != axis.len() || axis.is_empty()
        {
            return None;
        }
        let n = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return None;
        }
        let axis = axis.into_iter().map(|a| a / n).collect();
        Some(ConeSpec {
            vertex,
            axis,
            half_angle,
        })
    }

    pub fn dim(&self) -> usize {
        self.axis.len()
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn vertex(&self) -> &[f64] {
        &self.vertex
    }
}

/// `cot(halfAngle)`, exact zero at a right angle so `C(π/2)` is the open
/// half-space.
pub fn cone_slope(half_angle: f64) -> f64 {
    if half_angle == FRAC_PI_2 {
        0.0
    } else {
        half_angle.cos() / half_angle.sin()
    }
}

/// Tests `rel ∈ C(α)` for a displacement `rel` from the vertex.
pub fn in_cone(rel: &[f64], axis: &[f64], slope: f64) -> bool {
    let along: f64 = rel.iter().zip(axis).map(|(r, a)| r * a).sum();
    let orth_sq: f64 = rel
        .iter()
        .zip(axis)
        .map(|(r, a)| {
            let o = r - along * a;
            o * o
        })
        .sum();
    along > slope * orth_sq.sqrt()
}

/// Strict membership `p ∈ vertex + C(halfAngle)`.
pub fn cone_contains(c: &ConeSpec, p: &[f64]) -> bool {
    assert_eq!(p.len(), c.dim(), "point and cone dimensions differ");
    let rel: Vec<f64> = p.iter().zip(&c.vertex).map(|(a, b)| a - b).collect();
    in_cone(&rel, &c.axis, cone_slope(c.half_angle))
}

/// A straight boundary piece `{start + t·dir : t ∈ [t_min, t_max]}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub start: Point,
    pub dir: Point,
    pub t_min: f64,
    pub t_max: f64,
    pub inward: UnitVector,
}

impl Edge {
    pub fn line(&self) -> Line {
        Line::new(self.start, self.dir.arg())
    }

    /// Closest point on the edge together with its parameter.
    pub fn closest(&self, p: Point) -> (Point, f64) {
        let t = self.dir.dot(p - self.start).clamp(self.t_min, self.t_max);
        (self.start + self.dir * t, t)
    }

    pub fn distance(&self, p: Point) -> f64 {
        self.closest(p).0.dist(p)
    }

    /// Whether parameter `t` sits at a finite endpoint (a corner).
    fn at_end(&self, t: f64, tol: f64) -> bool {
        (self.t_min.is_finite() && t <= self.t_min + tol)
            || (self.t_max.is_finite() && t >= self.t_max - tol)
    }

    /// Distance from `p` to the supporting line, positive on the inside.
    pub fn inner_distance(&self, p: Point) -> f64 {
        self.inward.as_point().dot(p - self.start)
    }
}

/// Result of projecting a point onto the closure of a domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub point: Point,
    /// The projection landed on a wedge or polygon vertex.
    pub corner: bool,
    pub edge: Option<usize>,
}

/// Nearest boundary point with its inward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub point: Point,
    pub normal: UnitVector,
    pub edge: Option<usize>,
    pub corner: bool,
}

/// The planar domains the simulators support. All are convex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", rename_all_fields = "camelCase")]
pub enum DomainSpec {
    #[serde(rename = "halfplane")]
    HalfPlane {
        boundary: Line,
        inward_normal: UnitVector,
    },
    Disk {
        center: Point,
        radius: f64,
    },
    /// `{r·e^{iθ} : r > 0, 0 < θ < alpha}` with edges `E_X` (id 0) on the
    /// positive real axis and `E_Y` (id 1) on the ray at angle `alpha`.
    Wedge {
        alpha: f64,
    },
    /// Counterclockwise, strictly convex.
    #[serde(rename = "polygon")]
    ConvexPolygon {
        vertices: Vec<Point>,
    },
}

impl DomainSpec {
    pub fn upper_half_plane() -> Self {
        DomainSpec::HalfPlane {
            boundary: Line::new(Point::ORIGIN, 0.0),
            inward_normal: UnitVector::E2,
        }
    }

    /// Half-plane bounded by `boundary`, on the side containing `inside`.
    pub fn half_plane(boundary: Line, inside: Point) -> Result<Self, GeometryError> {
        let s = boundary.signed_distance(inside);
        if s == 0.0 {
            return Err(GeometryError::InvalidDomain(
                "reference point lies on the boundary line".into(),
            ));
        }
        let left = UnitVector::normalize(boundary.direction().perp()).expect("unit direction");
        let inward_normal = if s > 0.0 { left } else { -left };
        Ok(DomainSpec::HalfPlane {
            boundary,
            inward_normal,
        })
    }

    pub fn unit_disk() -> Self {
        DomainSpec::Disk {
            center: Point::ORIGIN,
            radius: 1.0,
        }
    }

    pub fn wedge(alpha: f64) -> Self {
        DomainSpec::Wedge { alpha }
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let d = DomainSpec::ConvexPolygon { vertices };
        d.validate()?;
        Ok(d)
    }

    /// `[0, side]²`.
    pub fn square(side: f64) -> Self {
        DomainSpec::ConvexPolygon {
            vertices: vec![
                Point::new(0.0, 0.0),
                Point::new(side, 0.0),
                Point::new(side, side),
                Point::new(0.0, side),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidDomain(m.to_string()));
        match self {
            DomainSpec::HalfPlane {
                boundary,
                inward_normal,
            } => {
                if !boundary.base.is_finite() {
                    return bad("half-plane base must be finite");
                }
                if boundary.direction().dot(inward_normal.as_point()).abs() > 1e-9 {
                    return bad("inward normal must be orthogonal to the boundary line");
                }
            }
            DomainSpec::Disk { center, radius } => {
                if !center.is_finite() || !(*radius > 0.0 && radius.is_finite()) {
                    return bad("disk needs a finite center and positive radius");
                }
            }
            DomainSpec::Wedge { alpha } => {
                if !(*alpha > 0.0 && *alpha < PI) {
                    return bad("wedge angle must lie in (0, π)");
                }
            }
            DomainSpec::ConvexPolygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return bad("polygon needs at least three vertices");
                }
                if vertices.iter().any(|v| !v.is_finite()) {
                    return bad("polygon vertices must be finite");
                }
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = vertices[(i + 2) % n];
                    if (b - a).cross(c - b) <= 0.0 {
                        return bad("polygon must be strictly convex and counterclockwise");
                    }
                }
            }
        }
        Ok(())
    }

    /// Straight boundary pieces; empty for the disk.
    pub fn edges(&self) -> Vec<Edge> {
        match self {
            DomainSpec::HalfPlane {
                boundary,
                inward_normal,
            } => vec![Edge {
                id: 0,
                start: boundary.base,
                dir: boundary.direction(),
                t_min: f64::NEG_INFINITY,
                t_max: f64::INFINITY,
                inward: *inward_normal,
            }],
            DomainSpec::Disk { .. } => Vec::new(),
            DomainSpec::Wedge { alpha } => vec![
                Edge {
                    id: 0,
                    start: Point::ORIGIN,
                    dir: Point::new(1.0, 0.0),
                    t_min: 0.0,
                    t_max: f64::INFINITY,
                    inward: UnitVector::E2,
                },
                Edge {
                    id: 1,
                    start: Point::ORIGIN,
                    dir: Point::polar(1.0, *alpha),
                    t_min: 0.0,
                    t_max: f64::INFINITY,
                    inward: UnitVector::from_angle(alpha - FRAC_PI_2),
                },
            ],
            DomainSpec::ConvexPolygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| {
                        let a = vertices[i];
                        let b = vertices[(i + 1) % n];
                        let len = a.dist(b);
                        let dir = (b - a) * (1.0 / len);
                        Edge {
                            id: i,
                            start: a,
                            dir,
                            t_min: 0.0,
                            t_max: len,
                            inward: UnitVector::normalize(dir.perp()).expect("non-degenerate edge"),
                        }
                    })
                    .collect()
            }
        }
    }

    /// Corner points (wedge vertex or polygon vertices).
    pub fn corners(&self) -> Vec<Point> {
        match self {
            DomainSpec::Wedge { .. } => vec![Point::ORIGIN],
            DomainSpec::ConvexPolygon { vertices } => vertices.clone(),
            _ => Vec::new(),
        }
    }

    /// Caches edges and corners for repeated queries. Does not validate.
    pub fn prepare(&self) -> PreparedDomain {
        PreparedDomain {
            edges: self.edges(),
            corners: self.corners(),
            spec: self.clone(),
        }
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        signed_boundary_distance(self, p) >= -tol
    }

    /// Euclidean projection onto the closed domain.
    pub fn project(&self, p: Point) -> Projection {
        self.prepare().project(p)
    }

    pub fn nearest_boundary(&self, p: Point) -> BoundaryPoint {
        self.prepare().nearest_boundary(p)
    }

    pub fn band_edges(&self, p: Point, eps: f64) -> Vec<usize> {
        self.prepare().band_edges(p, eps)
    }
}

/// A domain with its edges precomputed; all per-step queries of the
/// simulators go through this type.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDomain {
    spec: DomainSpec,
    edges: Vec<Edge>,
    corners: Vec<Point>,
}

impl PreparedDomain {
    /// Validates and prepares.
    pub fn new(spec: &DomainSpec) -> Result<Self, GeometryError> {
        spec.validate()?;
        Ok(spec.prepare())
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn corners(&self) -> &[Point] {
        &self.corners
    }

    /// Positive inside, negative outside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match &self.spec {
            DomainSpec::HalfPlane {
                boundary,
                inward_normal,
            } => inward_normal.as_point().dot(p - boundary.base),
            DomainSpec::Disk { center, radius } => radius - (p - *center).norm(),
            DomainSpec::Wedge { .. } | DomainSpec::ConvexPolygon { .. } => {
                let inner = self
                    .edges
                    .iter()
                    .map(|e| e.inner_distance(p))
                    .fold(f64::INFINITY, f64::min);
                if inner >= 0.0 {
                    // convex: distance to the complement is the nearest supporting line
                    inner
                } else {
                    -nearest_on_edges(&self.edges, p).1.dist(p)
                }
            }
        }
    }

    pub fn project(&self, p: Point) -> Projection {
        let inside = Projection {
            point: p,
            corner: false,
            edge: None,
        };
        match &self.spec {
            DomainSpec::HalfPlane {
                inward_normal,
                boundary,
            } => {
                let d = inward_normal.as_point().dot(p - boundary.base);
                if d >= 0.0 {
                    inside
                } else {
                    Projection {
                        point: p - inward_normal.as_point() * d,
                        corner: false,
                        edge: Some(0),
                    }
                }
            }
            DomainSpec::Disk { center, radius } => {
                let rel = p - *center;
                let r = rel.norm();
                if r <= *radius {
                    inside
                } else {
                    Projection {
                        point: *center + rel * (radius / r),
                        corner: false,
                        edge: None,
                    }
                }
            }
            DomainSpec::Wedge { .. } | DomainSpec::ConvexPolygon { .. } => {
                if self.edges.iter().all(|e| e.inner_distance(p) >= 0.0) {
                    return inside;
                }
                let (e, q, t) = nearest_on_edges(&self.edges, p);
                Projection {
                    point: q,
                    corner: e.at_end(t, 1e-12),
                    edge: Some(e.id),
                }
            }
        }
    }

    /// Nearest boundary point and the inward normal there. At a corner the
    /// normal of the nearest edge (lowest id on ties) is reported.
    pub fn nearest_boundary(&self, p: Point) -> BoundaryPoint {
        match &self.spec {
            DomainSpec::HalfPlane {
                boundary,
                inward_normal,
            } => BoundaryPoint {
                point: boundary.foot(p),
                normal: *inward_normal,
                edge: Some(0),
                corner: false,
            },
            DomainSpec::Disk { center, radius } => {
                let out = UnitVector::normalize(p - *center).unwrap_or(UnitVector::E1);
                BoundaryPoint {
                    point: *center + out.as_point() * *radius,
                    normal: -out,
                    edge: None,
                    corner: false,
                }
            }
            DomainSpec::Wedge { .. } | DomainSpec::ConvexPolygon { .. } => {
                let (e, q, t) = nearest_on_edges(&self.edges, p);
                BoundaryPoint {
                    point: q,
                    normal: e.inward,
                    edge: Some(e.id),
                    corner: e.at_end(t, BOUNDARY_TOL),
                }
            }
        }
    }

    /// Distance from `p` to edge `id`.
    pub fn edge_distance(&self, id: usize, p: Point) -> f64 {
        self.edges[id].distance(p)
    }

    /// Edges whose ε-band contains `p`, as a bit mask. A point outside the
    /// domain always reports at least its nearest edge.
    pub fn band_mask(&self, p: Point, eps: f64) -> u64 {
        let mut mask = 0u64;
        for e in &self.edges {
            if e.distance(p) <= eps {
                mask |= 1 << e.id;
            }
        }
        if mask == 0 && !self.edges.is_empty() && self.signed_distance(p) < 0.0 {
            mask |= 1 << nearest_on_edges(&self.edges, p).0.id;
        }
        mask
    }

    pub fn band_edges(&self, p: Point, eps: f64) -> Vec<usize> {
        let mask = self.band_mask(p, eps);
        (0..self.edges.len()).filter(|i| mask >> i & 1 == 1).collect()
    }
}

fn nearest_on_edges(edges: &[Edge], p: Point) -> (Edge, Point, f64) {
    let mut best: Option<(Edge, Point, f64, f64)> = None;
    for e in edges {
        let (q, t) = e.closest(p);
        let d = q.dist(p);
        if best.as_ref().is_none_or(|b| d < b.3) {
            best = Some((*e, q, t, d));
        }
    }
    let (e, q, t, _) = best.expect("domain has edges");
    (e, q, t)
}

/// Inward unit normal at a boundary point.
pub fn inward_normal(d: &DomainSpec, p: Point) -> Result<UnitVector, GeometryError> {
    let pd = d.prepare();
    if pd.signed_distance(p).abs() > BOUNDARY_TOL {
        return Err(GeometryError::NotOnBoundary(p.x, p.y));
    }
    if pd.corners().iter().any(|c| c.dist(p) <= BOUNDARY_TOL) {
        return Err(GeometryError::CornerPoint(p.x, p.y));
    }
    Ok(pd.nearest_boundary(p).normal)
}

/// Positive inside, negative outside, magnitude equal to the Euclidean
/// distance to the boundary.
pub fn signed_boundary_distance(d: &DomainSpec, p: Point) -> f64 {
    d.prepare().signed_distance(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    const SQ3: f64 = 1.732_050_807_568_877_2;

    fn close(a: Point, b: Point, tol: f64) -> bool {
        a.dist(b) <= tol
    }

    #[test]
    fn reflect_examples() {
        let vertical = Line::new(Point::ORIGIN, FRAC_PI_2);
        assert!(close(reflect_across(&vertical, Point::new(1.0, 0.0)), Point::new(-1.0, 0.0), 1e-15));
        let on = Point::new(0.0, 3.0);
        assert!(close(reflect_across(&vertical, on), on, 1e-15));
    }

    #[test]
    fn reflect_matches_base_change() {
        // translate, rotate onto the x-axis, negate y, rotate back
        let m = Line::new(Point::new(1.0, 0.0), PI / 3.0);
        let p = Point::new(1.5, 0.0);
        let local = (p - m.base).rotate(-m.angle());
        let oracle = Point::new(local.x, -local.y).rotate(m.angle()) + m.base;
        let got = reflect_across(&m, p);
        assert!(close(got, oracle, 1e-14));
        // lands on E_Y at distance √3/2
        assert!((got.norm() - SQ3 / 2.0).abs() < 1e-14);
        assert!((got.arg() - PI / 6.0).abs() < 1e-14);
    }

    #[test]
    fn intersect_examples() {
        let xaxis = Line::new(Point::ORIGIN, 0.0);
        let yaxis = Line::new(Point::ORIGIN, FRAC_PI_2);
        assert!(close(intersect(&xaxis, &yaxis).unwrap(), Point::ORIGIN, 1e-15));

        let m = Line::new(Point::new(1.0, 0.0), PI / 3.0);
        let ey = Line::new(Point::ORIGIN, PI / 6.0);
        let h = intersect(&m, &ey).unwrap();
        assert!(close(h, Point::new(1.5, SQ3 / 2.0), 1e-12));

        let other = Line::new(Point::new(0.0, 1.0), PI / 3.0);
        assert_eq!(intersect(&m, &other), Err(GeometryError::ParallelLines));
        // angles 0 and π−tiny are the same undirected direction
        let almost = Line::new(Point::new(0.0, 1.0), PI - 1e-13);
        assert_eq!(intersect(&xaxis, &almost), Err(GeometryError::ParallelLines));
    }

    #[test]
    fn inward_normal_examples() {
        let n = inward_normal(&DomainSpec::unit_disk(), Point::new(1.0, 0.0)).unwrap();
        assert!((n.ux() + 1.0).abs() < 1e-15 && n.uy().abs() < 1e-15);

        let w = DomainSpec::wedge(PI / 4.0);
        let n = inward_normal(&w, Point::new(2.0, 0.0)).unwrap();
        assert!(n.ux().abs() < 1e-15 && (n.uy() - 1.0).abs() < 1e-15);
        assert!(matches!(inward_normal(&w, Point::ORIGIN), Err(GeometryError::CornerPoint(..))));
        assert!(matches!(
            inward_normal(&w, Point::new(1.0, 0.1)),
            Err(GeometryError::NotOnBoundary(..))
        ));

        // E_Y normal points back into the wedge
        let q = Point::polar(2.0, PI / 4.0);
        let n = inward_normal(&w, q).unwrap();
        assert!(signed_boundary_distance(&w, q + n.as_point() * 0.01) > 0.0);
    }

    #[test]
    fn cone_examples() {
        let half = ConeSpec::new(vec![0.0, 0.0], vec![1.0, 0.0], FRAC_PI_2).unwrap();
        assert!(cone_contains(&half, &[1.0, 5.0]));
        let quarter = ConeSpec::new(vec![0.0, 0.0], vec![1.0, 0.0], PI / 4.0).unwrap();
        assert!(!cone_contains(&quarter, &[1.0, 2.0]));
        assert!(!cone_contains(&quarter, &[0.0, 0.0]));
        assert!(ConeSpec::new(vec![0.0], vec![1.0], PI).is_none());
        let wide3 = ConeSpec::new(vec![0.0; 3], vec![0.0, 0.0, 2.0], 2.0 * PI / 3.0).unwrap();
        assert!(cone_contains(&wide3, &[1.0, 0.0, 0.0]));
        assert!(!cone_contains(&wide3, &[0.0, 0.0, -1.0]));
    }

    #[test]
    fn mirror_line_examples() {
        let m = mirror_line(Point::new(0.0, 1.0), Point::new(0.0, -1.0)).unwrap();
        assert!(m.angle().abs() < 1e-15 && m.distance(Point::ORIGIN) < 1e-15);
        let m = mirror_line(Point::new(1.0, 0.0), Point::new(0.0, 1.0)).unwrap();
        assert!((m.angle() - PI / 4.0).abs() < 1e-15);
        assert!(m.distance(Point::new(0.5, 0.5)) < 1e-15);
        assert_eq!(
            mirror_line(Point::new(1.0, 1.0), Point::new(1.0, 1.0)),
            Err(GeometryError::CoincidentPoints)
        );
    }

    #[test]
    fn signed_distance_examples() {
        assert_eq!(signed_boundary_distance(&DomainSpec::unit_disk(), Point::ORIGIN), 1.0);
        assert_eq!(
            signed_boundary_distance(&DomainSpec::upper_half_plane(), Point::new(3.0, -2.0)),
            -2.0
        );
        let q = DomainSpec::wedge(FRAC_PI_2);
        assert!((signed_boundary_distance(&q, Point::new(1.0, 2.0)) - 1.0).abs() < 1e-15);
        // outside beyond the vertex: distance to the corner
        assert!((signed_boundary_distance(&q, Point::new(-3.0, -4.0)) + 5.0).abs() < 1e-12);
        let sq = DomainSpec::square(1.0);
        assert!((signed_boundary_distance(&sq, Point::new(0.5, 0.25)) - 0.25).abs() < 1e-15);
        assert!((signed_boundary_distance(&sq, Point::new(1.5, 0.5)) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn angle_between_examples() {
        let e1 = UnitVector::E1;
        assert_eq!(angle_between(e1, e1), 0.0);
        assert!((angle_between(e1, UnitVector::E2) - FRAC_PI_2).abs() < 1e-15);
        assert!((angle_between(e1, -e1) - PI).abs() < 1e-15);
    }

    #[test]
    fn projection_flags_corners() {
        let sq = DomainSpec::square(1.0);
        let pr = sq.project(Point::new(1.2, 1.3));
        assert!(pr.corner);
        assert!(close(pr.point, Point::new(1.0, 1.0), 1e-15));
        let pr = sq.project(Point::new(0.5, -0.2));
        assert!(!pr.corner);
        assert_eq!(pr.edge, Some(0));
        assert!(close(pr.point, Point::new(0.5, 0.0), 1e-15));
    }

    #[test]
    fn domain_json_shape() {
        let d: DomainSpec = serde_json::from_str(r#"{"kind":"wedge","alpha":0.5}"#).unwrap();
        assert_eq!(d, DomainSpec::wedge(0.5));
        let d: DomainSpec =
            serde_json::from_str(r#"{"kind":"disk","center":[0,0],"radius":2}"#).unwrap();
        assert_eq!(d, DomainSpec::Disk { center: Point::ORIGIN, radius: 2.0 });
        let hp = DomainSpec::upper_half_plane();
        let s = serde_json::to_string(&hp).unwrap();
        assert!(s.contains(r#""kind":"halfplane""#) && s.contains("inwardNormal"));
        assert_eq!(serde_json::from_str::<DomainSpec>(&s).unwrap(), hp);
        let sq = DomainSpec::square(1.0);
        let s = serde_json::to_string(&sq).unwrap();
        assert!(s.contains(r#""kind":"polygon""#));
        assert!(DomainSpec::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 0.0)
        ])
        .is_err());
    }

    fn pt() -> impl Strategy<Value = Point> {
        (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #[test]
        fn reflection_is_involution(b in pt(), a in 0.0f64..PI, p in pt()) {
            let l = Line::new(b, a);
            prop_assert!(reflect_across(&l, reflect_across(&l, p)).dist(p) < 1e-10);
        }

        #[test]
        fn intersection_lies_on_both(b1 in pt(), a1 in 0.0f64..PI, b2 in pt(), a2 in 0.0f64..PI) {
            let l1 = Line::new(b1, a1);
            let l2 = Line::new(b2, a2);
            prop_assume!(line_angle_gap(&l1, &l2) > 1e-3);
            let p = intersect(&l1, &l2).unwrap();
            prop_assert!(l1.distance(p) < 1e-10 && l2.distance(p) < 1e-10);
        }

        #[test]
        fn mirror_line_round_trip(x in pt(), y in pt()) {
            prop_assume!(x.dist(y) > 1e-6);
            let m = mirror_line(x, y).unwrap();
            prop_assert!(reflect_across(&m, x).dist(y) < 1e-10);
        }

        #[test]
        fn cone_scale_invariant(v in pt(), p in pt(), a in 0.01f64..3.13, th in 0.0f64..TAU) {
            let c = ConeSpec::new(vec![v.x, v.y], vec![th.cos(), th.sin()], a).unwrap();
            let inside = cone_contains(&c, &[p.x, p.y]);
            let rel = p - v;
            // skip points within rounding of the cone surface
            let along = rel.dot(Point::polar(1.0, th));
            let orth = rel.cross(Point::polar(1.0, th)).abs();
            prop_assume!((along - cone_slope(a) * orth).abs() > 1e-9 * (1.0 + rel.norm()));
            for t in [0.5, 2.0, 10.0] {
                let q = v + rel * t;
                prop_assert_eq!(cone_contains(&c, &[q.x, q.y]), inside);
            }
        }

        #[test]
        fn convex_midpoints_stay_inside(p in pt(), q in pt(), which in 0usize..4) {
            let d = match which {
                0 => DomainSpec::unit_disk(),
                1 => DomainSpec::wedge(1.0),
                2 => DomainSpec::square(2.0),
                _ => DomainSpec::upper_half_plane(),
            };
            let p = d.project(p).point;
            let q = d.project(q).point;
            let mid = (p + q) * 0.5;
            prop_assert!(signed_boundary_distance(&d, mid) >= -1e-9);
        }

        #[test]
        fn polygon_edge_normal_constant(t1 in 0.01f64..0.99, t2 in 0.01f64..0.99, e in 0usize..5) {
            let verts: Vec<Point> = (0..5).map(|k| Point::polar(1.0, 2.0 * PI * k as f64 / 5.0)).collect();
            let d = DomainSpec::polygon(verts.clone()).unwrap();
            let a = verts[e];
            let b = verts[(e + 1) % 5];
            let n1 = inward_normal(&d, a + (b - a) * t1).unwrap();
            let n2 = inward_normal(&d, a + (b - a) * t2).unwrap();
            prop_assert!(angle_between(n1, n2) < 1e-9);
        }

        #[test]
        fn projection_is_nearest_in_closure(p in pt(), which in 0usize..4) {
            let d = match which {
                0 => DomainSpec::unit_disk(),
                1 => DomainSpec::wedge(0.7),
                2 => DomainSpec::square(1.0),
                _ => DomainSpec::upper_half_plane(),
            };
            let pr = d.project(p);
            prop_assert!(d.contains(pr.point, 1e-12));
            let sd = signed_boundary_distance(&d, p);
            if sd < 0.0 {
                prop_assert!((pr.point.dist(p) + sd).abs() < 1e-9);
            } else {
                prop_assert_eq!(pr.point, p);
            }
        }
    }
}
