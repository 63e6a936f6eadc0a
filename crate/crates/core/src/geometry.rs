//! Domains, states, tangent cones, boundary margins and the restricted
//! supports `Θ_r`.
//!
//! Positions and velocities are stored as `[f64; 2]`; one-dimensional
//! domains only use the first component and keep the second at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Boundary classification tolerance (absolute, in length units).
pub const BOUNDARY_EPS: f64 = 1e-12;

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn norm(a: &Point) -> f64 {
    a[0].hypot(a[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: Point,
    pub v: Point,
}

impl State {
    pub fn new_1d(x: f64, v: f64) -> Self {
        State { x: [x, 0.0], v: [v, 0.0] }
    }

    pub fn new_2d(x: Point, v: Point) -> Self {
        State { x, v }
    }

    pub fn rest(x: Point) -> Self {
        State { x, v: [0.0; 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
    /// `normals[j]` is the outward normal of the edge from vertex `j` to `j + 1`.
    normals: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidDomain("polygon needs at least 3 vertices".into()));
        }
        let mut normals = Vec::with_capacity(n);
        for j in 0..n {
            let a = vertices[j];
            let b = vertices[(j + 1) % n];
            let c = vertices[(j + 2) % n];
            let e = sub(&b, &a);
            let len = norm(&e);
            if len == 0.0 {
                return Err(Error::InvalidDomain(format!("repeated vertex {j}")));
            }
            let f = sub(&c, &b);
            let cross = e[0] * f[1] - e[1] * f[0];
            // Counter-clockwise and strictly convex: every turn is a strict left turn.
            if cross <= 1e-14 * len * norm(&f) {
                return Err(Error::InvalidDomain(format!(
                    "vertices {j}..{} are not a strictly convex counter-clockwise turn",
                    j + 2
                )));
            }
            normals.push([e[1] / len, -e[0] / len]);
        }
        Ok(Polygon { vertices, normals })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn normals(&self) -> &[Point] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Normals of the two edges meeting at vertex `j`: the edge leaving it,
    /// then the edge arriving at it.
    pub fn vertex_normals(&self, j: usize) -> [Point; 2] {
        let n = self.len();
        [self.normals[j], self.normals[(j + n - 1) % n]]
    }

    /// Signed offsets `n_j · (x − ν_j)` of `x` from every edge line.
    pub fn edge_offsets(&self, x: &Point) -> impl Iterator<Item = f64> + '_ {
        let x = *x;
        self.vertices
            .iter()
            .zip(&self.normals)
            .map(move |(p, n)| dot(n, &sub(&x, p)))
    }

    fn segment_distance(&self, j: usize, x: &Point) -> (f64, Point) {
        let a = self.vertices[j];
        let b = self.vertices[(j + 1) % self.len()];
        let e = sub(&b, &a);
        let s = (dot(&sub(x, &a), &e) / dot(&e, &e)).clamp(0.0, 1.0);
        let q = add(&a, &scale(&e, s));
        (norm(&sub(x, &q)), q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Disc { center: Point, radius: f64 },
    Polygon(Polygon),
}

/// Outward normal information at a boundary query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normal {
    Smooth(Point),
    /// At a polygon vertex: normals of the leaving and arriving edges.
    Vertex { index: usize, normals: [Point; 2] },
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidDomain(format!("interval needs a < b, got [{a}, {b}]")));
        }
        Ok(Domain::Interval { a, b })
    }

    pub fn unit_interval() -> Self {
        Domain::Interval { a: -1.0, b: 0.0 }
    }

    pub fn disc(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidDomain(format!("disc radius must be positive, got {radius}")));
        }
        Ok(Domain::Disc { center, radius })
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        Ok(Domain::Polygon(Polygon::new(vertices)?))
    }

    pub fn unit_square() -> Self {
        Domain::polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Checks the invariants again, e.g. after deserialization.
    pub fn validated(self) -> Result<Self> {
        match self {
            Domain::Interval { a, b } => Domain::interval(a, b),
            Domain::Disc { center, radius } => Domain::disc(center, radius),
            Domain::Polygon(p) => Domain::polygon(p.vertices),
        }
    }

    /// Half the diameter of a bounding box, used to scale tolerances.
    /// Axis-aligned box `(lo, hi)` around the domain; 1D uses the first
    /// coordinate and zeros elsewhere.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            Domain::Interval { a, b } => ([*a, 0.0], [*b, 0.0]),
            Domain::Disc { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Domain::Polygon(p) => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in p.vertices() {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn length_scale(&self) -> f64 {
        match self {
            Domain::Interval { a, b } => b - a,
            Domain::Disc { radius, .. } => 2.0 * radius,
            Domain::Polygon(p) => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for q in p.vertices() {
                    for k in 0..2 {
                        lo[k] = lo[k].min(q[k]);
                        hi[k] = hi[k].max(q[k]);
                    }
                }
                norm(&sub(&hi, &lo))
            }
        }
    }

    pub fn signed_distance(&self, x: &Point) -> f64 {
        match self {
            Domain::Interval { a, b } => (a - x[0]).max(x[0] - b),
            Domain::Disc { center, radius } => norm(&sub(x, center)) - radius,
            Domain::Polygon(p) => {
                let inside = p.edge_offsets(x).fold(f64::NEG_INFINITY, f64::max);
                if inside <= 0.0 {
                    inside
                } else {
                    (0..p.len())
                        .map(|j| p.segment_distance(j, x).0)
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    /// Gradient of the signed distance, with polygon vertices reported as
    /// the pair of adjacent edge normals. Interval and disc queries are
    /// answered everywhere (the disc center excepted); polygon queries must lie
    /// within `band` of the boundary.
    pub fn outward_normal(&self, x: &Point, band: f64) -> Result<Normal> {
        match self {
            Domain::Interval { a, b } => {
                let n = if x[0] - a < b - x[0] { -1.0 } else { 1.0 };
                Ok(Normal::Smooth([n, 0.0]))
            }
            Domain::Disc { center, .. } => {
                let r = sub(x, center);
                let len = norm(&r);
                if len == 0.0 {
                    return Err(Error::QueryTooDeepInside {
                        depth: -self.signed_distance(x),
                        band,
                    });
                }
                Ok(Normal::Smooth(scale(&r, 1.0 / len)))
            }
            Domain::Polygon(p) => {
                let d = self.signed_distance(x);
                if d < -band {
                    return Err(Error::QueryTooDeepInside { depth: -d, band });
                }
                if let Some(j) = p
                    .vertices()
                    .iter()
                    .position(|q| norm(&sub(x, q)) <= BOUNDARY_EPS)
                {
                    return Ok(Normal::Vertex { index: j, normals: p.vertex_normals(j) });
                }
                if d <= 0.0 {
                    // Nearest edge line from inside is the one with the largest offset.
                    let (j, _) = p
                        .edge_offsets(x)
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (j, o)| if o > acc.1 { (j, o) } else { acc });
                    Ok(Normal::Smooth(p.normals()[j]))
                } else {
                    let (dist, q) = (0..p.len())
                        .map(|j| p.segment_distance(j, x))
                        .fold((f64::INFINITY, [0.0; 2]), |acc, c| if c.0 < acc.0 { c } else { acc });
                    Ok(Normal::Smooth(scale(&sub(x, &q), 1.0 / dist)))
                }
            }
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.signed_distance(x) <= BOUNDARY_EPS
    }

    /// Membership in `Ξ^ad`: a closed-domain position, with the velocity in
    /// the tangent cone when the position is on the boundary.
    pub fn is_admissible_state(&self, s: &State) -> bool {
        if !(s.x.iter().chain(&s.v).all(|c| c.is_finite())) {
            return false;
        }
        let vtol = BOUNDARY_EPS * norm(&s.v).max(1.0);
        match self {
            Domain::Interval { a, b } => {
                let x = s.x[0];
                if x < a - BOUNDARY_EPS || x > b + BOUNDARY_EPS {
                    return false;
                }
                if x >= b - BOUNDARY_EPS && s.v[0] > vtol {
                    return false;
                }
                if x <= a + BOUNDARY_EPS && s.v[0] < -vtol {
                    return false;
                }
                true
            }
            Domain::Disc { center, radius } => {
                let r = sub(&s.x, center);
                let d = norm(&r) - radius;
                if d > BOUNDARY_EPS {
                    return false;
                }
                d < -BOUNDARY_EPS || dot(&s.v, &r) / norm(&r) <= vtol
            }
            Domain::Polygon(p) => {
                let mut ok = true;
                for (o, n) in p.edge_offsets(&s.x).zip(p.normals()) {
                    if o > BOUNDARY_EPS {
                        return false;
                    }
                    if o >= -BOUNDARY_EPS && dot(&s.v, n) > vtol {
                        ok = false;
                    }
                }
                ok
            }
        }
    }

    /// The quantity whose vanishing along a sequence of states is the
    /// closed-graph condition: `((v·∇d)_+)^{2p−1} / |d|^{p−1}`, or, near a
    /// polygon vertex with `vertex_mode`,
    /// `max_k (v·n_k)_+ (|x−ν|^{2/3} + |v|²) / |(x−ν)·n_k|`.
    /// Conventions: `0/0 = 0`, `c/0 = ∞`.
    pub fn boundary_margin(&self, s: &State, p: f64, vertex_mode: bool) -> f64 {
        if let (true, Domain::Polygon(poly)) = (vertex_mode, self) {
            let (j, _) = poly
                .vertices()
                .iter()
                .enumerate()
                .map(|(j, q)| (j, norm(&sub(&s.x, q))))
                .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
            let nu = poly.vertices()[j];
            let rel = sub(&s.x, &nu);
            let spread = norm(&rel).powf(2.0 / 3.0) + dot(&s.v, &s.v);
            return poly
                .vertex_normals(j)
                .iter()
                .map(|n| ratio(dot(&s.v, n).max(0.0) * spread, dot(&rel, n).abs()))
                .fold(0.0, f64::max);
        }
        let d = self.signed_distance(&s.x).min(0.0);
        let n = match self.outward_normal(&s.x, f64::INFINITY) {
            Ok(Normal::Smooth(n)) => n,
            Ok(Normal::Vertex { normals, .. }) => {
                // On a vertex the outward rate is the worse of the two edges.
                let k = if dot(&s.v, &normals[0]) >= dot(&s.v, &normals[1]) { 0 } else { 1 };
                normals[k]
            }
            Err(_) => return 0.0,
        };
        let vn = dot(&s.v, &n).max(0.0);
        ratio(vn.powf(2.0 * p - 1.0), d.abs().powf(p - 1.0))
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThetaMode {
    /// `−r(x − a) ≤ v³ ≤ r(b − x)` on an interval `[a, b]`.
    #[serde(rename = "interval_1d")]
    Interval1D,
    /// Admissible states with `|v| ≤ r` and `v·n ≤ dist(x, boundary line)^{ρ/3}`
    /// for every edge (the disc uses `|d|`), polygon vertices excluded.
    MarginSets { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRSpec {
    pub domain: Domain,
    pub r: f64,
    pub mode: ThetaMode,
}

impl ThetaRSpec {
    pub fn new(domain: Domain, r: f64, mode: ThetaMode) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
        }
        if let ThetaMode::MarginSets { rho } = mode {
            if !(rho > 1.0) {
                return Err(Error::InvalidArgument(format!("rho must exceed 1, got {rho}")));
            }
        }
        let spec = ThetaRSpec { domain, r, mode };
        spec.check_mode()?;
        Ok(spec)
    }

    fn check_mode(&self) -> Result<()> {
        match (self.mode, &self.domain) {
            (ThetaMode::Interval1D, Domain::Interval { .. }) => Ok(()),
            (ThetaMode::Interval1D, _) => Err(Error::ModeDomainMismatch),
            _ => Ok(()),
        }
    }

    pub fn with_r(&self, r: f64) -> Self {
        ThetaRSpec { r, ..self.clone() }
    }

    pub fn contains(&self, s: &State) -> Result<bool> {
        self.check_mode()?;
        let r = self.r;
        match (self.mode, &self.domain) {
            (ThetaMode::Interval1D, Domain::Interval { a, b }) => {
                let (x, v) = (s.x[0], s.v[0]);
                if x < *a || x > *b {
                    return Ok(false);
                }
                let v3 = v * v * v;
                Ok(-r * (x - a) <= v3 && v3 <= r * (b - x))
            }
            (ThetaMode::MarginSets { rho }, domain) => {
                if !domain.is_admissible_state(s) || norm(&s.v) > r {
                    return Ok(false);
                }
                let e = rho / 3.0;
                Ok(match domain {
                    Domain::Interval { a, b } => {
                        let (x, v) = (s.x[0], s.v[0]);
                        v <= (b - x).powf(e) && -v <= (x - a).powf(e)
                    }
                    Domain::Disc { center, radius } => {
                        let rel = sub(&s.x, center);
                        let len = norm(&rel);
                        len == 0.0 || dot(&s.v, &rel) / len <= (radius - len).abs().powf(e)
                    }
                    Domain::Polygon(p) => {
                        let at_vertex = p.vertices().iter().any(|q| s.x == *q);
                        !at_vertex
                            && p
                                .edge_offsets(&s.x)
                                .zip(p.normals())
                                .all(|(o, n)| dot(&s.v, n) <= o.abs().powf(e))
                    }
                })
            }
            _ => Err(Error::ModeDomainMismatch),
        }
    }
}
