//! Pairwise separation geometry in the relative-velocity plane.
//!
//! Everything here is a pure function of the aircraft states and control
//! bounds. Velocities are in NM/h, positions in NM, angles in radians.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Relative speeds below this are treated as zero.
pub const TOL_V: f64 = 1e-9;
/// Relative tolerance on `g`, scaled by `d² |v|²`.
pub const TOL_G: f64 = 1e-6;
/// Time tolerance in hours.
pub const TOL_T: f64 = 1e-9;
/// Feasibility tolerance for the extreme-point test of the pair LP.
pub const LP_FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("aircraft {i} and {j} are {dist:.6} NM apart, below the separation norm {d} NM")]
    InitialLossOfSeparation { i: usize, j: usize, dist: f64, d: f64 },
    #[error("invalid aircraft state: {0}")]
    InvalidAircraft(String),
    #[error("invalid control bounds: {0}")]
    InvalidBounds(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
    pub fl: Option<i32>,
    pub fl_set: Option<Vec<i32>>,
}

impl AircraftState {
    pub fn new(x: f64, y: f64, speed: f64, heading: f64) -> Result<Self, GeometryError> {
        let a = Self { x, y, speed, heading: wrap_angle(heading), fl: None, fl_set: None };
        a.validate()?;
        Ok(a)
    }

    pub fn with_fl(mut self, fl: i32, fl_set: Vec<i32>) -> Result<Self, GeometryError> {
        self.fl = Some(fl);
        self.fl_set = Some(fl_set);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(GeometryError::InvalidAircraft("non-finite position".into()));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(GeometryError::InvalidAircraft(format!("speed {} must be positive", self.speed)));
        }
        if !(self.heading > -PI && self.heading <= PI) {
            return Err(GeometryError::InvalidAircraft(format!("heading {} outside (-pi, pi]", self.heading)));
        }
        match (&self.fl, &self.fl_set) {
            (Some(fl), Some(set)) if !set.contains(fl) => {
                Err(GeometryError::InvalidAircraft(format!("base level {fl} not in its reachable set")))
            }
            (Some(_), None) | (None, Some(_)) => {
                Err(GeometryError::InvalidAircraft("fl and fl_set must be given together".into()))
            }
            _ => Ok(()),
        }
    }

    /// Velocity vector under speed rate `q` and heading deviation `theta`.
    pub fn velocity(&self, q: f64, theta: f64) -> (f64, f64) {
        let h = self.heading + theta;
        (q * self.speed * h.cos(), q * self.speed * h.sin())
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub q_lo: f64,
    pub q_hi: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl ControlBounds {
    pub fn new(q_lo: f64, q_hi: f64, theta_lo: f64, theta_hi: f64) -> Result<Self, GeometryError> {
        let cb = Self { q_lo, q_hi, theta_lo, theta_hi };
        cb.validate()?;
        Ok(cb)
    }

    /// Speed range in percent (e.g. -6, +3) and symmetric heading range in degrees.
    pub fn from_percent_deg(speed_lo_pct: f64, speed_hi_pct: f64, heading_deg: f64) -> Result<Self, GeometryError> {
        let t = heading_deg.to_radians();
        Self::new(1.0 + speed_lo_pct / 100.0, 1.0 + speed_hi_pct / 100.0, -t, t)
    }

    /// q in [0.94, 1.03], heading deviation within 30 degrees.
    pub fn standard() -> Self {
        Self::from_percent_deg(-6.0, 3.0, 30.0).expect("standard bounds are valid")
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok_q = self.q_lo > 0.0 && self.q_lo <= 1.0 && 1.0 <= self.q_hi && self.q_hi.is_finite();
        if !ok_q {
            return Err(GeometryError::InvalidBounds(format!("need 0 < q_lo <= 1 <= q_hi, got [{}, {}]", self.q_lo, self.q_hi)));
        }
        let ok_t = self.theta_lo <= 0.0
            && 0.0 <= self.theta_hi
            && self.theta_lo.abs() < PI / 2.0
            && self.theta_hi.abs() < PI / 2.0;
        if !ok_t {
            return Err(GeometryError::InvalidBounds(format!(
                "need theta_lo <= 0 <= theta_hi and |theta| < pi/2, got [{}, {}]",
                self.theta_lo, self.theta_hi
            )));
        }
        Ok(())
    }

    pub fn max_abs_theta(&self) -> f64 {
        self.theta_lo.abs().max(self.theta_hi.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityBox {
    pub vx_lo: f64,
    pub vx_hi: f64,
    pub vy_lo: f64,
    pub vy_hi: f64,
}

impl VelocityBox {
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.vx_lo, self.vy_lo),
            (self.vx_hi, self.vy_lo),
            (self.vx_hi, self.vy_hi),
            (self.vx_lo, self.vy_hi),
        ]
    }

    pub fn contains(&self, vx: f64, vy: f64, tol: f64) -> bool {
        vx >= self.vx_lo - tol && vx <= self.vx_hi + tol && vy >= self.vy_lo - tol && vy <= self.vy_hi + tol
    }

    /// Largest absolute coordinate over the box, at least 1.
    pub fn scale(&self) -> f64 {
        [self.vx_lo, self.vx_hi, self.vy_lo, self.vy_hi]
            .iter()
            .fold(1.0_f64, |m, v| m.max(v.abs()))
    }

    /// Maximum of `a*vx + b*vy` over the box.
    pub fn max_linear(&self, a: f64, b: f64) -> f64 {
        let x = if a >= 0.0 { self.vx_hi } else { self.vx_lo };
        let y = if b >= 0.0 { self.vy_hi } else { self.vy_lo };
        a * x + b * y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairClass {
    ConflictFree,
    Separable,
    NonSeparable,
}

/// A line through the origin of the velocity plane, `gamma * vy - phi * vx = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootLine {
    pub gamma: f64,
    pub phi: f64,
}

impl RootLine {
    pub fn eval(&self, vx: f64, vy: f64) -> f64 {
        self.gamma * vy - self.phi * vx
    }

    /// Direction angle of the line, folded into [0, pi).
    pub fn angle(&self) -> f64 {
        self.phi.atan2(self.gamma).rem_euclid(PI)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub x: f64,
    pub y: f64,
    pub d: f64,
    /// Line P: `x * vx + y * vy = 0`.
    pub p_coeffs: [f64; 2],
    /// Line N: `x * vy - y * vx = 0`.
    pub n_coeffs: [f64; 2],
    /// Separation with z = 1 requires `lower.eval(v) <= 0`.
    pub lower: RootLine,
    /// Separation with z = 0 requires `upper.eval(v) >= 0`.
    pub upper: RootLine,
    pub bbox: Option<VelocityBox>,
}

/// The two root lines of `g = 0`, from the quadratic in `vy/vx` or in
/// `vx/vy`, without any orientation. Of the two equivalent pairs, keeps the one whose shorter
/// coefficient vector is longer, so a vanishing leading coefficient never
/// produces a degenerate line.
pub fn root_lines_raw(x: f64, y: f64, d: f64) -> [RootLine; 2] {
    let s = (x * x + y * y - d * d).max(0.0).sqrt();
    let cx = x * x - d * d;
    let cy = y * y - d * d;
    let by_x = [RootLine { gamma: cx, phi: x * y + d * s }, RootLine { gamma: cx, phi: x * y - d * s }];
    let by_y = [RootLine { gamma: x * y + d * s, phi: cy }, RootLine { gamma: x * y - d * s, phi: cy }];
    let weakest = |p: &[RootLine; 2]| p[0].gamma.hypot(p[0].phi).min(p[1].gamma.hypot(p[1].phi));
    if weakest(&by_x) >= weakest(&by_y) {
        by_x
    } else {
        by_y
    }
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn rotate(v: (f64, f64), ang: f64) -> (f64, f64) {
    let (s, c) = ang.sin_cos();
    (c * v.0 - s * v.1, s * v.0 + c * v.1)
}

/// Geometry of pair (a, b) with relative position `a - b`.
pub fn relative_state(a: &AircraftState, b: &AircraftState, d: f64) -> Result<PairGeometry, GeometryError> {
    pair_geometry_raw(a.x - b.x, a.y - b.y, d)
}

pub fn pair_geometry_raw(x: f64, y: f64, d: f64) -> Result<PairGeometry, GeometryError> {
    let r2 = x * x + y * y;
    if r2 < d * d {
        return Err(GeometryError::InitialLossOfSeparation { i: 0, j: 1, dist: r2.sqrt(), d });
    }
    let r = r2.sqrt();
    let axis = (-x / r, -y / r);
    let alpha = (d / r).min(1.0).asin();
    let b1 = rotate(axis, alpha);
    let b2 = rotate(axis, -alpha);

    let raw = root_lines_raw(x, y, d);
    let unit = |l: &RootLine| {
        let n = l.gamma.hypot(l.phi);
        (l.gamma / n, l.phi / n)
    };
    let u0 = unit(&raw[0]);
    let u1 = unit(&raw[1]);
    // Match each line to the boundary ray it is parallel to.
    let (mut l1, mut l2) = if cross(u0, b1).abs() + cross(u1, b2).abs() <= cross(u0, b2).abs() + cross(u1, b1).abs() {
        (u0, u1)
    } else {
        (u1, u0)
    };
    if l1.0 * b1.0 + l1.1 * b1.1 < 0.0 {
        l1 = (-l1.0, -l1.1);
    }
    if l2.0 * b2.0 + l2.1 * b2.1 < 0.0 {
        l2 = (-l2.0, -l2.1);
    }
    Ok(PairGeometry {
        x,
        y,
        d,
        p_coeffs: [x, y],
        n_coeffs: [x, y],
        lower: RootLine { gamma: -l1.0, phi: -l1.1 },
        upper: RootLine { gamma: -l2.0, phi: -l2.1 },
        bbox: None,
    })
}

/// Relative geometry plus velocity box for aircraft `i < j` of a list.
pub fn pair_with_box(
    aircraft: &[AircraftState],
    i: usize,
    j: usize,
    cb: &ControlBounds,
    d: f64,
) -> Result<PairGeometry, GeometryError> {
    let mut pg = relative_state(&aircraft[i], &aircraft[j], d).map_err(|e| match e {
        GeometryError::InitialLossOfSeparation { dist, d, .. } => GeometryError::InitialLossOfSeparation { i, j, dist, d },
        other => other,
    })?;
    pg.bbox = Some(velocity_box(&aircraft[i], &aircraft[j], cb, cb));
    Ok(pg)
}

impl PairGeometry {
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Half-angle of the conflict cone.
    pub fn half_angle(&self) -> f64 {
        (self.d / self.norm()).min(1.0).asin()
    }

    /// Unit vector pointing from the relative position toward the origin.
    pub fn axis(&self) -> (f64, f64) {
        let r = self.norm();
        (-self.x / r, -self.y / r)
    }

    /// `x * vy - y * vx`, the signed side of line N.
    pub fn n_eval(&self, vx: f64, vy: f64) -> f64 {
        self.n_coeffs[0] * vy - self.n_coeffs[1] * vx
    }

    /// Disjunct selected by z = 1 holds (with tolerance `tol` in NM/h units).
    pub fn disjunct_one(&self, vx: f64, vy: f64, tol: f64) -> bool {
        self.n_eval(vx, vy) / self.norm() <= tol && self.lower.eval(vx, vy) <= tol
    }

    /// Disjunct selected by z = 0 holds.
    pub fn disjunct_zero(&self, vx: f64, vy: f64, tol: f64) -> bool {
        self.n_eval(vx, vy) / self.norm() >= -tol && self.upper.eval(vx, vy) >= -tol
    }

    /// Point lies in the closed conflict wedge (both reversed inequalities).
    pub fn in_conflict_region(&self, vx: f64, vy: f64, tol: f64) -> bool {
        self.lower.eval(vx, vy) >= -tol && self.upper.eval(vx, vy) <= tol
    }
}

pub fn g_value(pg: &PairGeometry, vx: f64, vy: f64) -> f64 {
    let d2 = pg.d * pg.d;
    vx * vx * (pg.y * pg.y - d2) + vy * vy * (pg.x * pg.x - d2) - 2.0 * vx * vy * pg.x * pg.y
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TMin {
    At(f64),
    /// Zero relative velocity: the pair keeps its initial (separated) distance.
    AtRest,
}

pub fn t_min(pg: &PairGeometry, vx: f64, vy: f64) -> TMin {
    let v2 = vx * vx + vy * vy;
    if v2 < TOL_V * TOL_V {
        TMin::AtRest
    } else {
        TMin::At(-(pg.x * vx + pg.y * vy) / v2)
    }
}

pub fn is_conflict(pg: &PairGeometry, vx: f64, vy: f64) -> bool {
    match t_min(pg, vx, vy) {
        TMin::AtRest => false,
        TMin::At(t) => {
            let scale = pg.d * pg.d * (vx * vx + vy * vy);
            g_value(pg, vx, vy) < -TOL_G * scale && t > TOL_T
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval(f64, f64);

impl Interval {
    fn mul(self, o: Interval) -> Interval {
        let p = [self.0 * o.0, self.0 * o.1, self.1 * o.0, self.1 * o.1];
        Interval(p.iter().copied().fold(f64::INFINITY, f64::min), p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }
    fn scale(self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval(c * self.0, c * self.1)
        } else {
            Interval(c * self.1, c * self.0)
        }
    }
    fn add(self, o: Interval) -> Interval {
        Interval(self.0 + o.0, self.1 + o.1)
    }
}

fn cos_range(lo: f64, hi: f64) -> Interval {
    let cmin = lo.abs().max(hi.abs()).cos();
    let cmax = if lo <= 0.0 && hi >= 0.0 { 1.0 } else { lo.abs().min(hi.abs()).cos() };
    Interval(cmin, cmax)
}

/// Interval enclosure of the velocity contribution `s * q * (cos(h + t), sin(h + t))`.
fn velocity_terms(a: &AircraftState, cb: &ControlBounds, sign: f64) -> (Interval, Interval) {
    let q = Interval(cb.q_lo, cb.q_hi);
    let qc = q.mul(cos_range(cb.theta_lo, cb.theta_hi));
    let qs = q.mul(Interval(cb.theta_lo.sin(), cb.theta_hi.sin()));
    let (sh, ch) = a.heading.sin_cos();
    let v = sign * a.speed;
    let vx = qc.scale(v * ch).add(qs.scale(-v * sh));
    let vy = qc.scale(v * sh).add(qs.scale(v * ch));
    (vx, vy)
}

/// Per-monomial interval enclosure of the relative velocity `v_a - v_b`.
pub fn velocity_box(a: &AircraftState, b: &AircraftState, cb_a: &ControlBounds, cb_b: &ControlBounds) -> VelocityBox {
    let (ax, ay) = velocity_terms(a, cb_a, 1.0);
    let (bx, by) = velocity_terms(b, cb_b, -1.0);
    let vx = ax.add(bx);
    let vy = ay.add(by);
    VelocityBox { vx_lo: vx.0, vx_hi: vx.1, vy_lo: vy.0, vy_hi: vy.1 }
}

/// Candidate extreme points of the pair LP: box corners, root-line/edge
/// intersections and the apex.
pub fn lp_candidates(pg: &PairGeometry, bx: &VelocityBox) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = bx.corners().to_vec();
    for line in [pg.lower, pg.upper] {
        for c in [bx.vx_lo, bx.vx_hi] {
            if line.gamma.abs() > 1e-15 {
                pts.push((c, line.phi * c / line.gamma));
            }
        }
        for c in [bx.vy_lo, bx.vy_hi] {
            if line.phi.abs() > 1e-15 {
                pts.push((line.gamma * c / line.phi, c));
            }
        }
    }
    pts.push((0.0, 0.0));
    pts
}

/// Classifies a pair from its velocity box.
///
/// The closed LP region may touch the wedge only at its boundary or apex
/// (grazing or zero relative velocity); that case is conflict-free, so the
/// centroid of the feasible extreme points is re-tested against the open wedge.
pub fn classify_pair(pg: &PairGeometry) -> PairClass {
    let bx = pg.bbox.expect("classify_pair needs a velocity box");
    let tol = LP_FEAS_TOL * bx.scale();
    let feasible: Vec<(f64, f64)> = lp_candidates(pg, &bx)
        .into_iter()
        .filter(|&(vx, vy)| bx.contains(vx, vy, tol) && pg.in_conflict_region(vx, vy, tol))
        .collect();
    if feasible.is_empty() {
        return PairClass::ConflictFree;
    }
    let n = feasible.len() as f64;
    let cx = feasible.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = feasible.iter().map(|p| p.1).sum::<f64>() / n;
    if !is_conflict(pg, cx, cy) {
        return PairClass::ConflictFree;
    }
    if bx.corners().iter().all(|&(vx, vy)| is_conflict(pg, vx, vy)) {
        PairClass::NonSeparable
    } else {
        PairClass::Separable
    }
}

/// Classification of all pairs `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub all: Vec<(usize, usize)>,
    pub free: Vec<(usize, usize)>,
    pub separable: Vec<(usize, usize)>,
    pub nonseparable: Vec<(usize, usize)>,
}

impl Partition {
    pub fn pf_ratio(&self) -> f64 {
        ratio(self.free.len(), self.all.len())
    }
    pub fn pi_ratio(&self) -> f64 {
        ratio(self.nonseparable.len(), self.all.len())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Classifies every pair. Pairs are listed in lexicographic `(i, j)` order.
pub fn preprocess(aircraft: &[AircraftState], cb: &ControlBounds, d: f64) -> Result<Partition, GeometryError> {
    let mut part = Partition { all: vec![], free: vec![], separable: vec![], nonseparable: vec![] };
    for i in 0..aircraft.len() {
        for j in i + 1..aircraft.len() {
            let pg = pair_with_box(aircraft, i, j, cb, d)?;
            part.all.push((i, j));
            match classify_pair(&pg) {
                PairClass::ConflictFree => part.free.push((i, j)),
                PairClass::Separable => part.separable.push((i, j)),
                PairClass::NonSeparable => part.nonseparable.push((i, j)),
            }
        }
    }
    Ok(part)
}

/// Relative motion of `a - b` under the given controls.
fn relative_motion(a: &AircraftState, b: &AircraftState, qa: f64, ta: f64, qb: f64, tb: f64) -> ((f64, f64), (f64, f64)) {
    let va = a.velocity(qa, ta);
    let vb = b.velocity(qb, tb);
    ((a.x - b.x, a.y - b.y), (va.0 - vb.0, va.1 - vb.1))
}

/// Minimum distance over `t in [0, horizon]` under uniform motion, closed form.
pub fn min_distance_oracle(
    a: &AircraftState,
    b: &AircraftState,
    qa: f64,
    ta: f64,
    qb: f64,
    tb: f64,
    horizon: f64,
) -> f64 {
    let (p, v) = relative_motion(a, b, qa, ta, qb, tb);
    min_distance_relative(p, v, horizon)
}

pub fn min_distance_relative(p: (f64, f64), v: (f64, f64), horizon: f64) -> f64 {
    let v2 = v.0 * v.0 + v.1 * v.1;
    let t = if v2 == 0.0 { 0.0 } else { (-(p.0 * v.0 + p.1 * v.1) / v2).clamp(0.0, horizon) };
    (p.0 + v.0 * t).hypot(p.1 + v.1 * t)
}

/// Same quantity by sampling at step `dt`; for cross-checking the closed form.
pub fn min_distance_sampled(
    a: &AircraftState,
    b: &AircraftState,
    qa: f64,
    ta: f64,
    qb: f64,
    tb: f64,
    horizon: f64,
    dt: f64,
) -> f64 {
    assert!(dt > 0.0 && horizon > 0.0);
    let (p, v) = relative_motion(a, b, qa, ta, qb, tb);
    let steps = (horizon / dt).ceil() as usize;
    (0..=steps)
        .map(|k| {
            let t = (k as f64 * dt).min(horizon);
            (p.0 + v.0 * t).hypot(p.1 + v.1 * t)
        })
        .fold(f64::INFINITY, f64::min)
}
