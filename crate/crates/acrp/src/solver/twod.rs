//! The 2D solution loop: MIQP relaxation, speed-bound checks, MIQCP
//! refinement and local upper bounding with fixed binaries.

use super::bnb::{branch_and_bound, relative_gap, BnbParams, BnbStatus, Event};
use super::partition::{add_tilde_machinery, PiecewisePartition};
use crate::geometry::{is_conflict, preprocess, relative_state, ControlBounds, GeometryError, Partition};
use crate::instances::Instance;
use crate::model::{
    build_2d_disjunctive, build_2d_shadow, recover_controls, Formulation, LinearConstraint, MixedIntegerModel, ModelError,
    QuadConstraint, Sense, VarKind,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Speed and heading bounds are checked to this tolerance.
pub const CONTROL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeparationKind {
    Disjunctive,
    Shadow,
}

#[derive(Debug, Clone)]
pub struct SolveParams {
    pub formulation: SeparationKind,
    pub w: f64,
    pub eps: f64,
    pub time_limit: Duration,
    pub cb: ControlBounds,
    pub max_iterations: usize,
}

impl SolveParams {
    pub fn new(cb: ControlBounds) -> Self {
        Self { formulation: SeparationKind::Disjunctive, w: 0.5, eps: 0.01, time_limit: Duration::from_secs(600), cb, max_iterations: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub q: f64,
    pub theta: f64,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    /// Per aircraft; empty when no verified solution exists.
    pub controls: Vec<Control>,
    /// Binary values per separable pair.
    pub binaries: Vec<((usize, usize), Vec<u8>)>,
    pub n_i: usize,
    pub nodes: usize,
    pub wall_time: f64,
    pub n_pairs: usize,
    pub n_free: usize,
    pub n_separable: usize,
    pub nonseparable: Vec<(usize, usize)>,
    pub preprocess_time: f64,
    pub events: Vec<Event>,
}

impl SolveOutcome {
    fn empty(status: SolveStatus, part: &Partition) -> Self {
        Self {
            status,
            lb: if status == SolveStatus::Infeasible { f64::INFINITY } else { 0.0 },
            ub: f64::INFINITY,
            gap: f64::INFINITY,
            controls: vec![],
            binaries: vec![],
            n_i: 0,
            nodes: 0,
            wall_time: 0.0,
            n_pairs: part.all.len(),
            n_free: part.free.len(),
            n_separable: part.separable.len(),
            nonseparable: part.nonseparable.clone(),
            preprocess_time: 0.0,
            events: vec![],
        }
    }

    /// Sum of squared speed deviations `(1 - q)^2`.
    pub fn sigma_q(&self) -> f64 {
        self.controls.iter().map(|c| (1.0 - c.q).powi(2)).sum()
    }

    /// Sum of squared heading deviations.
    pub fn sigma_theta(&self) -> f64 {
        self.controls.iter().map(|c| c.theta * c.theta).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedViolationKind {
    UpperViolated,
    LowerViolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedViolation {
    pub aircraft: usize,
    pub kind: SpeedViolationKind,
    pub dx: f64,
    pub dy: f64,
    pub q: f64,
}

/// Aircraft whose `(dx, dy)` breaks the speed bounds by more than 1e-6.
pub fn check_speed_violations(deltas: &[(f64, f64)], cb: &ControlBounds) -> Vec<SpeedViolation> {
    let mut out = Vec::new();
    for (i, &(dx, dy)) in deltas.iter().enumerate() {
        let q = dx.hypot(dy);
        let kind = if q > cb.q_hi + CONTROL_TOL {
            SpeedViolationKind::UpperViolated
        } else if q < cb.q_lo - CONTROL_TOL {
            SpeedViolationKind::LowerViolated
        } else {
            continue;
        };
        out.push(SpeedViolation { aircraft: i, kind, dx, dy, q });
    }
    out
}

/// Model objective at Cartesian controls.
pub fn objective_of(deltas: &[(f64, f64)], w: f64) -> f64 {
    deltas.iter().map(|&(dx, dy)| w * dy * dy + (1.0 - w) * (dx - 1.0) * (dx - 1.0)).sum()
}

/// Checks bounds on `(q, theta)` and that no pair of the instance conflicts.
pub fn verify_controls(inst: &Instance, controls: &[Control], cb: &ControlBounds) -> bool {
    if controls.len() != inst.aircraft.len() {
        return false;
    }
    for c in controls {
        if c.q < cb.q_lo - CONTROL_TOL || c.q > cb.q_hi + CONTROL_TOL {
            return false;
        }
        if c.theta < cb.theta_lo - CONTROL_TOL || c.theta > cb.theta_hi + CONTROL_TOL {
            return false;
        }
    }
    let a = &inst.aircraft;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let Ok(pg) = relative_state(&a[i], &a[j], inst.d) else { return false };
            let vi = a[i].velocity(controls[i].q, controls[i].theta);
            let vj = a[j].velocity(controls[j].q, controls[j].theta);
            if is_conflict(&pg, vi.0 - vj.0, vi.1 - vj.1) {
                return false;
            }
        }
    }
    true
}

fn deltas_of(m: &MixedIntegerModel, x: &[f64]) -> Vec<(f64, f64)> {
    m.aircraft.iter().map(|a| (x[a.dx.0], x[a.dy.0])).collect()
}

fn controls_of(deltas: &[(f64, f64)]) -> Option<Vec<Control>> {
    deltas
        .iter()
        .map(|&(dx, dy)| recover_controls(dx, dy).ok().map(|(q, theta)| Control { q, theta, dx, dy }))
        .collect()
}

/// A verified point of the full nonconvex model.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpPoint {
    pub controls: Vec<Control>,
    pub objective: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("local solve found no feasible improvement")]
pub struct NoImprovement;

/// Copy of `m` with every binary fixed to its value in `x` and the active
/// indicator constraints turned into plain rows.
fn fix_binaries(m: &MixedIntegerModel, x: &[f64]) -> MixedIntegerModel {
    let mut f = m.clone();
    for (k, v) in f.vars.iter_mut().enumerate() {
        if v.kind == VarKind::Binary {
            let b = if x[k] > 0.5 { 1.0 } else { 0.0 };
            v.lo = b;
            v.hi = b;
        }
    }
    let inds = std::mem::take(&mut f.indicators);
    for ind in inds {
        if ind.conditions.iter().all(|&(b, want)| (x[b.0] > 0.5) == want) {
            f.linear.push(ind.constraint);
        }
    }
    f.indicators.clear();
    f
}

/// Local solve of the nonconvex model with the binaries of `x` fixed.
///
/// The lower speed bound `|delta| >= q_lo` is replaced by its linearization
/// at the current point, which lies inside the nonconvex set, and the convex
/// upper bound is kept exactly; each step is a convex problem whose solution
/// is feasible for the original model and no worse than the last.
pub fn local_nlp_fixed_z(
    inst: &Instance,
    m: &MixedIntegerModel,
    x: &[f64],
    w: f64,
    cb: &ControlBounds,
    deadline: Option<Instant>,
) -> Result<NlpPoint, NoImprovement> {
    let mut base = fix_binaries(m, x);
    base.formulation = Formulation::Disjunctive2D;
    base.quad.retain(|q| !q.name.starts_with("speed_hi_"));
    for (i, a) in base.aircraft.clone().iter().enumerate() {
        base.quad.push(QuadConstraint {
            name: format!("speed_hi_{i}"),
            quad: vec![(a.dx, a.dx, 1.0), (a.dy, a.dy, 1.0)],
            linear: vec![],
            rhs: cb.q_hi * cb.q_hi,
        });
    }
    let start = deltas_of(m, x);
    let project = |d: &[(f64, f64)]| -> Vec<(f64, f64)> {
        d.iter()
            .map(|&(dx, dy)| {
                let r = dx.hypot(dy);
                if r < 1e-9 {
                    (cb.q_lo, 0.0)
                } else if r < cb.q_lo {
                    (dx * cb.q_lo / r, dy * cb.q_lo / r)
                } else {
                    (dx, dy)
                }
            })
            .collect()
    };
    let nominal: Vec<(f64, f64)> = vec![(cb.q_lo, 0.0); start.len()];
    let mut best: Option<NlpPoint> = None;
    for seed in [project(&start), nominal] {
        let mut cur = seed;
        let mut last = f64::INFINITY;
        for _ in 0..40 {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            let mut mm = base.clone();
            for (i, a) in mm.aircraft.clone().iter().enumerate() {
                // |d|^2 >= 2 c.d - |c|^2 >= q_lo^2
                let (cx, cy) = cur[i];
                mm.linear.push(LinearConstraint::new(
                    format!("speed_lin_{i}"),
                    vec![(a.dx, 2.0 * cx), (a.dy, 2.0 * cy)],
                    Sense::Ge,
                    cb.q_lo * cb.q_lo + cx * cx + cy * cy,
                ));
            }
            let params = BnbParams { rel_gap: 0.0, abs_gap: 0.0, ..BnbParams::default() };
            let r = branch_and_bound(&mm, &params, &[]);
            let Some(xs) = r.x else { break };
            let d = deltas_of(&mm, &xs);
            let obj = objective_of(&d, w);
            if let Some(ctrl) = controls_of(&d) {
                if verify_controls(inst, &ctrl, cb) && best.as_ref().is_none_or(|b| obj < b.objective) {
                    best = Some(NlpPoint { controls: ctrl, objective: obj });
                }
            }
            cur = d;
            if last - obj <= 1e-12 * (1.0 + obj.abs()) {
                break;
            }
            last = obj;
        }
    }
    best.ok_or(NoImprovement)
}

fn build(inst: &Instance, sep: &[(usize, usize)], p: &SolveParams) -> Result<MixedIntegerModel, ModelError> {
    match p.formulation {
        SeparationKind::Disjunctive => build_2d_disjunctive(inst, sep, p.w, &p.cb, true),
        SeparationKind::Shadow => build_2d_shadow(inst, sep, p.w, &p.cb, true),
    }
}

/// Values of `x` (a point of `from`) for the variables of `to`, matched by meaning.
fn transfer(from: &MixedIntegerModel, x: &[f64], to: &MixedIntegerModel) -> Vec<f64> {
    let idx: HashMap<_, _> = from.vars.iter().enumerate().map(|(k, v)| (v.meaning, k)).collect();
    to.vars.iter().map(|v| idx.get(&v.meaning).map_or(0.0, |&k| x[k])).collect()
}

fn pair_binaries(m: &MixedIntegerModel, x: &[f64]) -> Vec<((usize, usize), Vec<u8>)> {
    m.pairs.iter().map(|p| ((p.i, p.j), p.binaries.iter().map(|b| (x[b.0] > 0.5) as u8).collect())).collect()
}

/// Solves the 2D problem: MIQP relaxation first, then MIQCP refinements of
/// the speed bounds until the gap closes.
pub fn solve_2d(inst: &Instance, p: &SolveParams) -> Result<SolveOutcome, SolveError> {
    let t0 = Instant::now();
    let deadline = t0 + p.time_limit;
    let part = preprocess(&inst.aircraft, &p.cb, inst.d)?;
    let pre_time = t0.elapsed().as_secs_f64();
    if !part.nonseparable.is_empty() {
        let mut out = SolveOutcome::empty(SolveStatus::Infeasible, &part);
        out.preprocess_time = pre_time;
        out.wall_time = t0.elapsed().as_secs_f64();
        return Ok(out);
    }
    let sep = part.separable.clone();
    let m3 = build(inst, &sep, p)?;
    let bnb = |m: &MixedIntegerModel, cutoff: f64| {
        let left = deadline.saturating_duration_since(Instant::now());
        let params = BnbParams { rel_gap: p.eps, time_limit: Some(left), cutoff, ..BnbParams::default() };
        branch_and_bound(m, &params, &[])
    };

    let mut out = SolveOutcome::empty(SolveStatus::TimeOut, &part);
    out.preprocess_time = pre_time;
    let finish = |mut out: SolveOutcome| {
        out.gap = relative_gap(out.lb, out.ub);
        out.wall_time = t0.elapsed().as_secs_f64();
        out
    };

    let r = bnb(&m3, f64::INFINITY);
    out.nodes += r.nodes;
    out.events.extend(r.events.iter().cloned());
    match r.status {
        BnbStatus::Infeasible => {
            out.status = SolveStatus::Infeasible;
            out.lb = f64::INFINITY;
            return Ok(finish(out));
        }
        _ if r.x.is_none() => {
            out.lb = r.lb;
            return Ok(finish(out));
        }
        _ => {}
    }
    let x = r.x.clone().unwrap();
    out.lb = r.lb;
    let deltas = deltas_of(&m3, &x);
    let mut viol = check_speed_violations(&deltas, &p.cb);
    if viol.is_empty() {
        if let Some(ctrl) = controls_of(&deltas).filter(|c| verify_controls(inst, c, &p.cb)) {
            out.controls = ctrl;
            out.ub = r.ub;
            out.binaries = pair_binaries(&m3, &x);
            out.status = if r.status == BnbStatus::Optimal { SolveStatus::Optimal } else { SolveStatus::TimeOut };
            return Ok(finish(out));
        }
    }

    let accept = |out: &mut SolveOutcome, pt: NlpPoint, bins: Vec<((usize, usize), Vec<u8>)>| {
        if pt.objective < out.ub {
            out.ub = pt.objective;
            out.controls = pt.controls;
            out.binaries = bins;
        }
    };
    if let Ok(pt) = local_nlp_fixed_z(inst, &m3, &x, p.w, &p.cb, Some(deadline)) {
        accept(&mut out, pt, pair_binaries(&m3, &x));
    }

    let n = inst.aircraft.len();
    let mut upper = vec![false; n];
    let mut parts: BTreeMap<usize, (PiecewisePartition, PiecewisePartition)> = BTreeMap::new();
    let c = p.cb.max_abs_theta().cos();
    let mut k = 0;
    loop {
        for v in &viol {
            match v.kind {
                SpeedViolationKind::UpperViolated => upper[v.aircraft] = true,
                SpeedViolationKind::LowerViolated => match parts.get_mut(&v.aircraft) {
                    None => {
                        let px = PiecewisePartition::new(p.cb.q_lo * c, p.cb.q_hi).expect("nonempty speed range");
                        let py = PiecewisePartition::new(p.cb.q_hi * p.cb.theta_lo.sin(), p.cb.q_hi * p.cb.theta_hi.sin())
                            .unwrap_or(PiecewisePartition { knots: vec![-1e-9, 1e-9] });
                        parts.insert(v.aircraft, (px, py));
                    }
                    Some((px, py)) => {
                        for (axis, part, at) in [('x', px, v.dx), ('y', py, v.dy)] {
                            if part.refine(at).is_ok() {
                                out.events.push(Event::Refine { k, aircraft: v.aircraft, axis, at });
                            }
                        }
                    }
                },
            }
        }
        if relative_gap(out.lb, out.ub) <= p.eps {
            out.status = SolveStatus::Optimal;
            break;
        }
        if Instant::now() >= deadline {
            out.status = SolveStatus::TimeOut;
            break;
        }
        if k >= p.max_iterations {
            out.status = if out.ub.is_finite() { SolveStatus::Feasible } else { SolveStatus::TimeOut };
            break;
        }
        k += 1;
        let mut m4 = build(inst, &sep, p)?;
        m4.formulation = Formulation::Miqcp;
        for i in 0..n {
            if upper[i] {
                let a = m4.aircraft[i];
                m4.quad.push(QuadConstraint {
                    name: format!("speed_hi_{i}"),
                    quad: vec![(a.dx, a.dx, 1.0), (a.dy, a.dy, 1.0)],
                    linear: vec![],
                    rhs: p.cb.q_hi * p.cb.q_hi,
                });
            }
        }
        for (&i, (px, py)) in &parts {
            add_tilde_machinery(&mut m4, i, px, py, p.cb.q_lo);
        }
        let r = bnb(&m4, out.ub);
        out.nodes += r.nodes;
        out.n_i = k;
        match r.status {
            BnbStatus::Infeasible => {
                out.status = SolveStatus::Infeasible;
                out.lb = f64::INFINITY;
                out.controls.clear();
                out.ub = f64::INFINITY;
                return Ok(finish(out));
            }
            BnbStatus::TimeOut | BnbStatus::NodeLimit => {
                out.lb = out.lb.max(r.lb.min(out.ub));
                out.status = SolveStatus::TimeOut;
                break;
            }
            BnbStatus::Optimal => {}
        }
        out.lb = out.lb.max(r.lb.min(out.ub));
        out.events.push(Event::Iteration { k, lb: out.lb, ub: out.ub });
        let Some(x) = r.x else {
            // Nothing beats the incumbent within the gap.
            continue;
        };
        let deltas = deltas_of(&m4, &x);
        viol = check_speed_violations(&deltas, &p.cb);
        if viol.is_empty() {
            if let Some(ctrl) = controls_of(&deltas).filter(|c| verify_controls(inst, c, &p.cb)) {
                accept(&mut out, NlpPoint { controls: ctrl, objective: r.ub }, pair_binaries(&m4, &x));
            }
        } else {
            let x3 = transfer(&m4, &x, &m3);
            if let Ok(pt) = local_nlp_fixed_z(inst, &m3, &x3, p.w, &p.cb, Some(deadline)) {
                accept(&mut out, pt, pair_binaries(&m3, &x3));
            }
        }
    }
    Ok(finish(out))
}
