//! Formulation-agnostic mixed-integer model container and the builders for
//! the 2D disjunctive, shadow and flight-level models.

use crate::geometry::{pair_with_box, ControlBounds, GeometryError, PairGeometry};
use crate::instances::Instance;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("preference weight {0} must lie in (0, 1)")]
    BadWeight(f64),
    #[error("aircraft {0} has no flight-level data")]
    MissingFLData(usize),
    #[error("degenerate control (q close to zero) for aircraft {0}")]
    DegenerateControl(usize),
    #[error("model lint: {0}")]
    Lint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// What a variable stands for; each tag occurs at most once per model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Meaning {
    DeltaX(usize),
    DeltaY(usize),
    TildeDx(usize),
    TildeDy(usize),
    Vx(usize, usize),
    Vy(usize, usize),
    Z(usize, usize),
    Sigma(usize, usize, u8),
    Rho(usize, i32),
    Phi(usize, usize),
    SegX(usize, usize),
    SegY(usize, usize),
    DRho(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Var {
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
    pub meaning: Meaning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(name: impl Into<String>, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { name: name.into(), terms, sense, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let l = self.lhs(x);
        match self.sense {
            Sense::Le => (l - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - l).max(0.0),
            Sense::Eq => (l - self.rhs).abs(),
        }
    }
}

/// `sum c x_i x_j + linear <= rhs` with a positive semidefinite quadratic part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadConstraint {
    pub name: String,
    pub quad: Vec<(VarId, VarId, f64)>,
    pub linear: Vec<(VarId, f64)>,
    pub rhs: f64,
}

impl QuadConstraint {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let q: f64 = self.quad.iter().map(|&(a, b, c)| c * x[a.0] * x[b.0]).sum();
        let l: f64 = self.linear.iter().map(|&(v, c)| c * x[v.0]).sum();
        q + l - self.rhs
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        self.eval(x).max(0.0)
    }

    /// Gradient of the left-hand side as sparse terms.
    pub fn gradient(&self, x: &[f64]) -> Vec<(VarId, f64)> {
        let mut g: Vec<(VarId, f64)> = self.linear.clone();
        for &(a, b, c) in &self.quad {
            g.push((a, c * x[b.0]));
            g.push((b, c * x[a.0]));
        }
        merge_terms(g)
    }
}

/// Linear constraint enforced only when every condition `(binary, value)` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorConstraint {
    pub conditions: Vec<(VarId, bool)>,
    pub constraint: LinearConstraint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub quad: Vec<(VarId, VarId, f64)>,
    pub linear: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Objective {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let q: f64 = self.quad.iter().map(|&(a, b, c)| c * x[a.0] * x[b.0]).sum();
        let l: f64 = self.linear.iter().map(|&(v, c)| c * x[v.0]).sum();
        q + l + self.constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formulation {
    Disjunctive2D,
    Shadow2D,
    MiqpRelax,
    Miqcp,
    FlAssign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AircraftVars {
    pub dx: VarId,
    pub dy: VarId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVars {
    pub i: usize,
    pub j: usize,
    pub vx: VarId,
    pub vy: VarId,
    pub binaries: Vec<VarId>,
}

/// The nonconvex lower speed bound `dx^2 + dy^2 >= q_lo^2`; it never enters
/// the constraint lists and is handled by the solver's refinement loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedLower {
    pub aircraft: usize,
    pub dx: VarId,
    pub dy: VarId,
    pub q_lo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedIntegerModel {
    pub formulation: Formulation,
    pub vars: Vec<Var>,
    pub linear: Vec<LinearConstraint>,
    pub quad: Vec<QuadConstraint>,
    pub indicators: Vec<IndicatorConstraint>,
    pub objective: Objective,
    pub aircraft: Vec<AircraftVars>,
    pub pairs: Vec<PairVars>,
    pub speed_lower: Vec<SpeedLower>,
}

impl MixedIntegerModel {
    pub fn new(formulation: Formulation) -> Self {
        Self {
            formulation,
            vars: vec![],
            linear: vec![],
            quad: vec![],
            indicators: vec![],
            objective: Objective::default(),
            aircraft: vec![],
            pairs: vec![],
            speed_lower: vec![],
        }
    }

    pub fn add_var(&mut self, kind: VarKind, lo: f64, hi: f64, meaning: Meaning) -> VarId {
        let (lo, hi) = match kind {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Continuous => (lo, hi),
        };
        self.vars.push(Var { kind, lo, hi, meaning });
        VarId(self.vars.len() - 1)
    }

    pub fn find(&self, meaning: Meaning) -> Option<VarId> {
        self.vars.iter().position(|v| v.meaning == meaning).map(VarId)
    }

    pub fn binaries(&self) -> Vec<VarId> {
        (0..self.vars.len()).filter(|&k| self.vars[k].kind == VarKind::Binary).map(VarId).collect()
    }

    pub fn count(&self, kind: VarKind) -> usize {
        self.vars.iter().filter(|v| v.kind == kind).count()
    }

    /// Largest violation over bounds, linear, quadratic and active indicator
    /// constraints at `x`; binaries must be within `tol` of 0 or 1.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, v) in self.vars.iter().enumerate() {
            worst = worst.max(v.lo - x[k]).max(x[k] - v.hi);
            if v.kind == VarKind::Binary {
                worst = worst.max(x[k].min(1.0 - x[k]).max(0.0));
            }
        }
        for c in &self.linear {
            worst = worst.max(c.violation(x));
        }
        for q in &self.quad {
            worst = worst.max(q.violation(x));
        }
        for ind in &self.indicators {
            let on = ind.conditions.iter().all(|&(b, val)| (x[b.0] > 0.5) == val);
            if on {
                worst = worst.max(ind.constraint.violation(x));
            }
        }
        worst
    }

    /// Checks structural invariants: unique meanings, valid references,
    /// binary bounds and positive semidefinite quadratic parts.
    pub fn lint(&self) -> Result<(), ModelError> {
        let n = self.vars.len();
        let mut seen = HashSet::new();
        for v in &self.vars {
            if !seen.insert(v.meaning) {
                return Err(ModelError::Lint(format!("duplicate meaning {:?}", v.meaning)));
            }
            if v.kind == VarKind::Binary && (v.lo != 0.0 || v.hi != 1.0) {
                return Err(ModelError::Lint(format!("binary {:?} with bounds [{}, {}]", v.meaning, v.lo, v.hi)));
            }
            if v.lo > v.hi {
                return Err(ModelError::Lint(format!("empty bounds on {:?}", v.meaning)));
            }
        }
        let check = |terms: &[(VarId, f64)], what: &str| -> Result<(), ModelError> {
            match terms.iter().find(|t| t.0 .0 >= n) {
                Some(t) => Err(ModelError::Lint(format!("{what} references missing variable {}", t.0 .0))),
                None => Ok(()),
            }
        };
        for c in &self.linear {
            check(&c.terms, &c.name)?;
        }
        for ind in &self.indicators {
            check(&ind.constraint.terms, &ind.constraint.name)?;
            for &(b, _) in &ind.conditions {
                if b.0 >= n || self.vars[b.0].kind != VarKind::Binary {
                    return Err(ModelError::Lint(format!("indicator {} conditions on a non-binary", ind.constraint.name)));
                }
            }
        }
        for q in &self.quad {
            check(&q.linear, &q.name)?;
            if !quad_is_psd(&q.quad, n) {
                return Err(ModelError::Lint(format!("quadratic constraint {} is not convex", q.name)));
            }
        }
        if !quad_is_psd(&self.objective.quad, n) {
            return Err(ModelError::Lint("objective is not convex".into()));
        }
        Ok(())
    }

    /// Human-readable LP-style dump, one constraint per line.
    pub fn to_lp_string(&self) -> String {
        let name = |v: VarId| meaning_name(self.vars[v.0].meaning);
        let lin = |terms: &[(VarId, f64)]| {
            let mut s = String::new();
            for &(v, c) in terms {
                let _ = write!(s, " {} {:.9} {}", if c < 0.0 { "-" } else { "+" }, c.abs(), name(v));
            }
            s
        };
        let sense = |s: Sense| match s {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let mut out = String::new();
        let _ = writeln!(out, "\\ formulation {:?}", self.formulation);
        let _ = writeln!(out, "minimize");
        let mut obj = lin(&self.objective.linear);
        for &(a, b, c) in &self.objective.quad {
            let _ = write!(obj, " + {:.9} {} * {}", c, name(a), name(b));
        }
        let _ = writeln!(out, "  obj:{} + {:.9}", obj, self.objective.constant);
        let _ = writeln!(out, "subject to");
        for c in &self.linear {
            let _ = writeln!(out, "  {}:{} {} {:.9}", c.name, lin(&c.terms), sense(c.sense), c.rhs);
        }
        for q in &self.quad {
            let mut s = lin(&q.linear);
            for &(a, b, c) in &q.quad {
                let _ = write!(s, " + {:.9} {} * {}", c, name(a), name(b));
            }
            let _ = writeln!(out, "  {}:{} <= {:.9}", q.name, s, q.rhs);
        }
        for ind in &self.indicators {
            let cond: Vec<String> = ind.conditions.iter().map(|&(b, v)| format!("{} = {}", name(b), v as u8)).collect();
            let c = &ind.constraint;
            let _ = writeln!(out, "  {}: {} ->{} {} {:.9}", c.name, cond.join(" and "), lin(&c.terms), sense(c.sense), c.rhs);
        }
        let _ = writeln!(out, "bounds");
        for (k, v) in self.vars.iter().enumerate() {
            if v.kind == VarKind::Continuous {
                let _ = writeln!(out, "  {:.9} <= {} <= {:.9}", v.lo, name(VarId(k)), v.hi);
            }
        }
        let _ = writeln!(out, "binaries");
        for b in self.binaries() {
            let _ = writeln!(out, "  {}", name(b));
        }
        let _ = writeln!(out, "end");
        out
    }
}

pub fn meaning_name(m: Meaning) -> String {
    match m {
        Meaning::DeltaX(i) => format!("dx_{i}"),
        Meaning::DeltaY(i) => format!("dy_{i}"),
        Meaning::TildeDx(i) => format!("tdx_{i}"),
        Meaning::TildeDy(i) => format!("tdy_{i}"),
        Meaning::Vx(i, j) => format!("vx_{i}_{j}"),
        Meaning::Vy(i, j) => format!("vy_{i}_{j}"),
        Meaning::Z(i, j) => format!("z_{i}_{j}"),
        Meaning::Sigma(i, j, k) => format!("sigma{k}_{i}_{j}"),
        Meaning::Rho(i, k) => format!("rho_{i}_{k}"),
        Meaning::Phi(i, j) => format!("phi_{i}_{j}"),
        Meaning::SegX(i, k) => format!("sx_{i}_{k}"),
        Meaning::SegY(i, k) => format!("sy_{i}_{k}"),
        Meaning::DRho(i) => format!("drho_{i}"),
    }
}

pub fn merge_terms(mut terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

fn quad_is_psd(quad: &[(VarId, VarId, f64)], n: usize) -> bool {
    if quad.is_empty() {
        return true;
    }
    if quad.iter().any(|&(a, b, _)| a.0 >= n || b.0 >= n) {
        return false;
    }
    let mut idx: Vec<usize> = quad.iter().flat_map(|&(a, b, _)| [a.0, b.0]).collect();
    idx.sort_unstable();
    idx.dedup();
    let m = idx.len();
    let pos = |k: usize| idx.binary_search(&k).unwrap();
    let mut h = nalgebra::DMatrix::<f64>::zeros(m, m);
    for &(a, b, c) in quad {
        let (i, j) = (pos(a.0), pos(b.0));
        h[(i, j)] += c / 2.0;
        h[(j, i)] += c / 2.0;
    }
    let scale = h.amax().max(1.0);
    h.symmetric_eigenvalues().iter().all(|&e| e >= -1e-10 * scale)
}

/// Adds the per-aircraft control variables, bounds, heading constraints,
/// optional speed constraints and objective terms.
fn add_controls(m: &mut MixedIntegerModel, n: usize, w: f64, cb: &ControlBounds, relax_speed: bool) {
    let c = cb.max_abs_theta().cos();
    for i in 0..n {
        let dx = m.add_var(VarKind::Continuous, cb.q_lo * c, cb.q_hi, Meaning::DeltaX(i));
        let dy = m.add_var(VarKind::Continuous, cb.q_hi * cb.theta_lo.sin(), cb.q_hi * cb.theta_hi.sin(), Meaning::DeltaY(i));
        m.aircraft.push(AircraftVars { dx, dy });
        m.linear.push(LinearConstraint::new(format!("head_lo_{i}"), vec![(dy, 1.0), (dx, -cb.theta_lo.tan())], Sense::Ge, 0.0));
        m.linear.push(LinearConstraint::new(format!("head_hi_{i}"), vec![(dy, 1.0), (dx, -cb.theta_hi.tan())], Sense::Le, 0.0));
        if !relax_speed {
            m.quad.push(QuadConstraint {
                name: format!("speed_hi_{i}"),
                quad: vec![(dx, dx, 1.0), (dy, dy, 1.0)],
                linear: vec![],
                rhs: cb.q_hi * cb.q_hi,
            });
            m.speed_lower.push(SpeedLower { aircraft: i, dx, dy, q_lo: cb.q_lo });
        }
        m.objective.quad.push((dy, dy, w));
        m.objective.quad.push((dx, dx, 1.0 - w));
        m.objective.linear.push((dx, -2.0 * (1.0 - w)));
        m.objective.constant += 1.0 - w;
    }
}

/// Adds relative-velocity variables and the linear motion equations for a pair.
fn add_pair_motion(m: &mut MixedIntegerModel, inst: &Instance, i: usize, j: usize, pg: &PairGeometry) -> (VarId, VarId) {
    let bx = pg.bbox.expect("pair geometry built with a box");
    let vx = m.add_var(VarKind::Continuous, bx.vx_lo, bx.vx_hi, Meaning::Vx(i, j));
    let vy = m.add_var(VarKind::Continuous, bx.vy_lo, bx.vy_hi, Meaning::Vy(i, j));
    let (a, b) = (&inst.aircraft[i], &inst.aircraft[j]);
    let (ai, bi) = (m.aircraft[i], m.aircraft[j]);
    let (sa, ca) = a.heading.sin_cos();
    let (sb, cb) = b.heading.sin_cos();
    let (va, vb) = (a.speed, b.speed);
    m.linear.push(LinearConstraint::new(
        format!("motion_x_{i}_{j}"),
        vec![(vx, 1.0), (ai.dx, -va * ca), (ai.dy, va * sa), (bi.dx, vb * cb), (bi.dy, -vb * sb)],
        Sense::Eq,
        0.0,
    ));
    m.linear.push(LinearConstraint::new(
        format!("motion_y_{i}_{j}"),
        vec![(vy, 1.0), (ai.dx, -va * sa), (ai.dy, -va * ca), (bi.dx, vb * sb), (bi.dy, vb * cb)],
        Sense::Eq,
        0.0,
    ));
    (vx, vy)
}

fn check_weight(w: f64) -> Result<(), ModelError> {
    if w > 0.0 && w < 1.0 {
        Ok(())
    } else {
        Err(ModelError::BadWeight(w))
    }
}

/// Disjunctive separation constraints for one pair as indicator constraints.
pub fn disjunctive_indicators(pg: &PairGeometry, i: usize, j: usize, vx: VarId, vy: VarId, z: VarId) -> Vec<IndicatorConstraint> {
    let r = pg.norm();
    let (nx, ny) = (-pg.n_coeffs[1] / r, pg.n_coeffs[0] / r);
    let n_terms = vec![(vx, nx), (vy, ny)];
    let lo = vec![(vx, -pg.lower.phi), (vy, pg.lower.gamma)];
    let up = vec![(vx, -pg.upper.phi), (vy, pg.upper.gamma)];
    vec![
        IndicatorConstraint {
            conditions: vec![(z, true)],
            constraint: LinearConstraint::new(format!("side_n1_{i}_{j}"), n_terms.clone(), Sense::Le, 0.0),
        },
        IndicatorConstraint {
            conditions: vec![(z, true)],
            constraint: LinearConstraint::new(format!("root_l_{i}_{j}"), lo, Sense::Le, 0.0),
        },
        IndicatorConstraint {
            conditions: vec![(z, false)],
            constraint: LinearConstraint::new(format!("side_n0_{i}_{j}"), n_terms, Sense::Ge, 0.0),
        },
        IndicatorConstraint {
            conditions: vec![(z, false)],
            constraint: LinearConstraint::new(format!("root_u_{i}_{j}"), up, Sense::Ge, 0.0),
        },
    ]
}

/// Shadow constraints in the frame of the conflict cone: `u` along the cone
/// axis, `w` across it. Returns `(sigma index, vx coeff, vy coeff)` rows of
/// the form `coeffs . v <= 0`, two per sigma.
pub fn shadow_rows(pg: &PairGeometry) -> Vec<(u8, f64, f64)> {
    let (ax, ay) = pg.axis();
    let (ex, ey) = (-ay, ax);
    let half = pg.half_angle();
    let (s, c) = half.sin_cos();
    // u = a.v, w = e.v; rows scaled by cos(alpha) so tan never appears.
    let u = |k: f64| (k * ax, k * ay);
    let tu_minus_w = (s * ax - c * ex, s * ay - c * ey);
    let tu_plus_w = (s * ax + c * ex, s * ay + c * ey);
    let neg_u = u(-1.0);
    let pos_u = u(1.0);
    vec![
        (1, neg_u.0, neg_u.1),
        (1, tu_minus_w.0, tu_minus_w.1),
        (2, neg_u.0, neg_u.1),
        (2, tu_plus_w.0, tu_plus_w.1),
        (3, pos_u.0, pos_u.1),
        (3, tu_plus_w.0, tu_plus_w.1),
        (4, pos_u.0, pos_u.1),
        (4, tu_minus_w.0, tu_minus_w.1),
    ]
}

/// Tight big-M constants: the maximum of each shadow row's left-hand side
/// over the pair's velocity box, as `(M^s, M^tanl, M^tanr)`.
pub fn shadow_big_ms(pg: &PairGeometry) -> (f64, f64, f64) {
    let bx = pg.bbox.expect("pair geometry built with a box");
    let rows = shadow_rows(pg);
    let m = |r: &(u8, f64, f64)| bx.max_linear(r.1, r.2).max(0.0);
    let ms = m(&rows[0]).max(m(&rows[4]));
    (ms, m(&rows[1]).max(m(&rows[7])), m(&rows[3]).max(m(&rows[5])))
}

/// A velocity satisfies at least one shadow sigma block.
pub fn shadow_feasible(pg: &PairGeometry, vx: f64, vy: f64, tol: f64) -> bool {
    let rows = shadow_rows(pg);
    (1..=4).any(|k| rows.iter().filter(|r| r.0 == k).all(|r| r.1 * vx + r.2 * vy <= tol))
}

fn pair_geometries(inst: &Instance, pairs: &[(usize, usize)], cb: &ControlBounds) -> Result<Vec<PairGeometry>, ModelError> {
    pairs.iter().map(|&(i, j)| Ok(pair_with_box(&inst.aircraft, i, j, cb, inst.d)?)).collect()
}

pub fn build_2d_disjunctive(
    inst: &Instance,
    separable: &[(usize, usize)],
    w: f64,
    cb: &ControlBounds,
    relax_speed: bool,
) -> Result<MixedIntegerModel, ModelError> {
    check_weight(w)?;
    let pgs = pair_geometries(inst, separable, cb)?;
    let mut m = MixedIntegerModel::new(if relax_speed { Formulation::MiqpRelax } else { Formulation::Disjunctive2D });
    add_controls(&mut m, inst.aircraft.len(), w, cb, relax_speed);
    for (&(i, j), pg) in separable.iter().zip(&pgs) {
        let (vx, vy) = add_pair_motion(&mut m, inst, i, j, pg);
        let z = m.add_var(VarKind::Binary, 0.0, 1.0, Meaning::Z(i, j));
        m.indicators.extend(disjunctive_indicators(pg, i, j, vx, vy, z));
        m.pairs.push(PairVars { i, j, vx, vy, binaries: vec![z] });
    }
    Ok(m)
}

pub fn build_2d_shadow(
    inst: &Instance,
    separable: &[(usize, usize)],
    w: f64,
    cb: &ControlBounds,
    relax_speed: bool,
) -> Result<MixedIntegerModel, ModelError> {
    check_weight(w)?;
    let pgs = pair_geometries(inst, separable, cb)?;
    let mut m = MixedIntegerModel::new(Formulation::Shadow2D);
    add_controls(&mut m, inst.aircraft.len(), w, cb, relax_speed);
    for (&(i, j), pg) in separable.iter().zip(&pgs) {
        let (vx, vy) = add_pair_motion(&mut m, inst, i, j, pg);
        let sig: Vec<VarId> = (1..=4u8).map(|k| m.add_var(VarKind::Binary, 0.0, 1.0, Meaning::Sigma(i, j, k))).collect();
        for (n, (k, cx, cy)) in shadow_rows(pg).into_iter().enumerate() {
            m.indicators.push(IndicatorConstraint {
                conditions: vec![(sig[k as usize - 1], true)],
                constraint: LinearConstraint::new(format!("shadow{k}_{}_{i}_{j}", n % 2), vec![(vx, cx), (vy, cy)], Sense::Le, 0.0),
            });
        }
        m.linear.push(LinearConstraint::new(format!("shadow_any_{i}_{j}"), sig.iter().map(|&s| (s, 1.0)).collect(), Sense::Ge, 1.0));
        m.pairs.push(PairVars { i, j, vx, vy, binaries: sig });
    }
    Ok(m)
}

/// Extends a disjunctive model with flight-level assignment variables so that
/// pair separation applies only to pairs sharing a level. `pairs` lists the
/// non-conflict-free pairs whose reachable level sets intersect.
pub fn build_fl_model(m: &mut MixedIntegerModel, inst: &Instance, pairs: &[(usize, usize)]) -> Result<(), ModelError> {
    let sets: Vec<Vec<i32>> = inst
        .aircraft
        .iter()
        .enumerate()
        .map(|(i, a)| a.fl_set.clone().ok_or(ModelError::MissingFLData(i)))
        .collect::<Result<_, _>>()?;
    let mut rho = Vec::new();
    for (i, set) in sets.iter().enumerate() {
        let vars: Vec<(i32, VarId)> = set.iter().map(|&k| (k, m.add_var(VarKind::Binary, 0.0, 1.0, Meaning::Rho(i, k)))).collect();
        m.linear.push(LinearConstraint::new(format!("one_level_{i}"), vars.iter().map(|&(_, v)| (v, 1.0)).collect(), Sense::Eq, 1.0));
        rho.push(vars);
    }
    for &(i, j) in pairs {
        let phi = m.add_var(VarKind::Binary, 0.0, 1.0, Meaning::Phi(i, j));
        for &(k, ri) in &rho[i] {
            if let Some(&(_, rj)) = rho[j].iter().find(|e| e.0 == k) {
                m.linear.push(LinearConstraint::new(
                    format!("share_{i}_{j}_{k}"),
                    vec![(ri, 1.0), (rj, 1.0), (phi, -1.0)],
                    Sense::Le,
                    1.0,
                ));
            }
        }
        for ind in m.indicators.iter_mut() {
            let on_pair = m.pairs.iter().any(|p| p.i == i && p.j == j && ind.conditions.iter().any(|c| p.binaries.contains(&c.0)));
            if on_pair {
                ind.conditions.push((phi, true));
            }
        }
    }
    Ok(())
}

/// Speed rate and heading deviation from the Cartesian control variables.
pub fn recover_controls(dx: f64, dy: f64) -> Result<(f64, f64), ModelError> {
    let q = dx.hypot(dy);
    if q < 1e-12 {
        return Err(ModelError::DegenerateControl(0));
    }
    Ok((q, dy.atan2(dx)))
}
