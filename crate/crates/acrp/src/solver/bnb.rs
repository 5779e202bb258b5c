//! Branch-and-bound over the binaries of a [`MixedIntegerModel`].
//!
//! Node relaxations are convex QPs in the continuous variables and the
//! "structural" binaries (those coupled to continuous rows or the objective).
//! The remaining "logic" binaries only switch indicator constraints or appear
//! in pure-binary rows; an indicator enters the node QP once all of its
//! conditions are fixed to their active values, and is otherwise left out.
//! A node whose QP point can be completed by a logic-binary assignment that
//! satisfies every indicator is integer feasible; otherwise the algorithm
//! branches on a binary whose indicators are violated on both sides.
//! Convex quadratic constraints are enforced by outer-approximation cuts.

use crate::model::{IndicatorConstraint, LinearConstraint, MixedIntegerModel, Sense, VarId, VarKind};
use crate::solver::qp::{solve_qp, QpError, QpProblem};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

/// Binaries closer than this to 0 or 1 are integral.
pub const INT_TOL: f64 = 1e-6;
/// Normalized indicator violation regarded as satisfied.
pub const IND_TOL: f64 = 1e-7;
/// Quadratic constraint violation that triggers a cut.
pub const QUAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BnbParams {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
    pub max_cut_rounds: usize,
    /// Largest number of assignments tried when completing logic binaries.
    pub repair_limit: usize,
    /// Objective value of a known solution elsewhere; nodes that cannot beat
    /// it (within the gap) are discarded.
    pub cutoff: f64,
}

impl Default for BnbParams {
    fn default() -> Self {
        Self {
            rel_gap: 1e-4,
            abs_gap: 1e-10,
            time_limit: None,
            node_limit: usize::MAX,
            max_cut_rounds: 60,
            repair_limit: 20_000,
            cutoff: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    TimeOut,
    NodeLimit,
}

/// Solver event, written as one JSON object per line by the bench harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Incumbent { node: usize, ub: f64 },
    Progress { node: usize, lb: f64, ub: f64, open: usize },
    Cuts { node: usize, count: usize },
    Done { nodes: usize, lb: f64, ub: f64, status: BnbStatus },
    Iteration { k: usize, lb: f64, ub: f64 },
    Refine { k: usize, aircraft: usize, axis: char, at: f64 },
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    pub status: BnbStatus,
    /// Incumbent in the model's variable space.
    pub x: Option<Vec<f64>>,
    pub ub: f64,
    pub lb: f64,
    pub nodes: usize,
    pub cuts: usize,
    pub qp_failures: usize,
    pub events: Vec<Event>,
}

impl BnbResult {
    pub fn gap(&self) -> f64 {
        relative_gap(self.lb, self.ub)
    }
}

pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if !ub.is_finite() {
        return f64::INFINITY;
    }
    let d = (ub - lb).max(0.0);
    if d <= 1e-12 {
        0.0
    } else {
        d / ub.abs().max(1e-12)
    }
}

/// Affine expression over QP columns.
#[derive(Debug, Clone)]
struct Affine {
    c0: f64,
    terms: Vec<(usize, f64)>,
}

/// A row `a.x (sense) b` over QP columns.
#[derive(Debug, Clone)]
struct DenseRow {
    a: Vec<f64>,
    b: f64,
    sense: Sense,
}

impl DenseRow {
    fn push_into(&self, qp: &mut QpProblem) {
        match self.sense {
            Sense::Ge => qp.add_ge(self.a.clone(), self.b),
            Sense::Le => qp.add_le(self.a.clone(), self.b),
            Sense::Eq => qp.add_eq(self.a.clone(), self.b),
        }
    }
}

/// The model restated over the QP columns.
struct Reduced {
    ncols: usize,
    col: Vec<Option<usize>>,
    expr: Vec<Option<Affine>>,
    /// Position in `bins` of each binary variable.
    bin_pos: Vec<Option<usize>>,
    bins: Vec<usize>,
    structural: Vec<bool>,
    logic_rows: Vec<usize>,
    ind_rows: Vec<Vec<DenseRow>>,
    base: QpProblem,
}

fn reduce_terms(red_col: &[Option<usize>], expr: &[Option<Affine>], ncols: usize, terms: &[(VarId, f64)]) -> (Vec<f64>, f64) {
    let mut a = vec![0.0; ncols];
    let mut c0 = 0.0;
    for &(v, c) in terms {
        if let Some(k) = red_col[v.0] {
            a[k] += c;
        } else if let Some(e) = &expr[v.0] {
            c0 += c * e.c0;
            for &(k, ck) in &e.terms {
                a[k] += c * ck;
            }
        } else {
            panic!("variable {} has no QP column", v.0);
        }
    }
    (a, c0)
}

fn reduce_row(r: &Reduced, c: &LinearConstraint) -> DenseRow {
    let (a, c0) = reduce_terms(&r.col, &r.expr, r.ncols, &c.terms);
    DenseRow { a, b: c.rhs - c0, sense: c.sense }
}

fn build_reduced(m: &MixedIntegerModel) -> Reduced {
    let nv = m.vars.len();
    let is_bin = |k: usize| m.vars[k].kind == VarKind::Binary;

    // Binaries coupled to the continuous part become QP columns.
    let mut structural = vec![false; nv];
    for &(a, b, _) in &m.objective.quad {
        structural[a.0] = true;
        structural[b.0] = true;
    }
    for &(v, _) in &m.objective.linear {
        structural[v.0] = true;
    }
    for q in &m.quad {
        for &(a, b, _) in &q.quad {
            structural[a.0] = true;
            structural[b.0] = true;
        }
        for &(v, _) in &q.linear {
            structural[v.0] = true;
        }
    }
    for ind in &m.indicators {
        for &(v, _) in &ind.constraint.terms {
            structural[v.0] = true;
        }
    }
    loop {
        let mut changed = false;
        for c in &m.linear {
            let coupled = c.terms.iter().any(|&(v, _)| !is_bin(v.0) || structural[v.0]);
            if coupled {
                for &(v, _) in &c.terms {
                    if !structural[v.0] {
                        structural[v.0] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let logic_rows: Vec<usize> = (0..m.linear.len()).filter(|&r| m.linear[r].terms.iter().all(|&(v, _)| is_bin(v.0) && !structural[v.0])).collect();

    // Continuous variables defined by a single equality are substituted out.
    let mut in_nonlinear = vec![false; nv];
    for &(a, b, _) in &m.objective.quad {
        in_nonlinear[a.0] = true;
        in_nonlinear[b.0] = true;
    }
    for &(v, _) in &m.objective.linear {
        in_nonlinear[v.0] = true;
    }
    for q in &m.quad {
        for &(a, b, _) in &q.quad {
            in_nonlinear[a.0] = true;
            in_nonlinear[b.0] = true;
        }
        for &(v, _) in &q.linear {
            in_nonlinear[v.0] = true;
        }
    }
    let mut eq_count = vec![0usize; nv];
    for c in &m.linear {
        if c.sense == Sense::Eq {
            for &(v, _) in &c.terms {
                eq_count[v.0] += 1;
            }
        }
    }
    let mut defined_by: Vec<Option<usize>> = vec![None; nv];
    let mut defining_row = vec![false; m.linear.len()];
    for (r, c) in m.linear.iter().enumerate() {
        if c.sense != Sense::Eq || c.terms.iter().any(|&(v, _)| is_bin(v.0)) {
            continue;
        }
        if let Some(&(v, _)) = c.terms.iter().find(|&&(v, coef)| eq_count[v.0] == 1 && !in_nonlinear[v.0] && coef.abs() > 1e-12) {
            defined_by[v.0] = Some(r);
            defining_row[r] = true;
        }
    }
    let mut col = vec![None; nv];
    let mut ncols = 0;
    for k in 0..nv {
        let keep = if is_bin(k) { structural[k] } else { defined_by[k].is_none() };
        if keep {
            col[k] = Some(ncols);
            ncols += 1;
        }
    }
    let mut expr: Vec<Option<Affine>> = vec![None; nv];
    for k in 0..nv {
        if let Some(r) = defined_by[k] {
            let c = &m.linear[r];
            let coef = c.terms.iter().filter(|t| t.0 .0 == k).map(|t| t.1).sum::<f64>();
            let terms = c
                .terms
                .iter()
                .filter(|t| t.0 .0 != k)
                .map(|&(v, ck)| (col[v.0].expect("defining row uses kept variables"), -ck / coef))
                .collect();
            expr[k] = Some(Affine { c0: c.rhs / coef, terms });
        }
    }

    let bins: Vec<usize> = (0..nv).filter(|&k| is_bin(k)).collect();
    let mut bin_pos = vec![None; nv];
    for (p, &k) in bins.iter().enumerate() {
        bin_pos[k] = Some(p);
    }

    let mut base = QpProblem::new(ncols);
    for &(a, b, c) in &m.objective.quad {
        let (i, j) = (col[a.0].unwrap(), col[b.0].unwrap());
        base.h[(i, j)] += c;
        base.h[(j, i)] += c;
    }
    for &(v, c) in &m.objective.linear {
        base.c[col[v.0].unwrap()] += c;
    }
    base.constant = m.objective.constant;
    for k in 0..nv {
        if let Some(c) = col[k] {
            base.lo[c] = m.vars[k].lo;
            base.hi[c] = m.vars[k].hi;
        }
    }
    let mut red = Reduced { ncols, col, expr, bin_pos, bins, structural, logic_rows, ind_rows: vec![], base };
    let mut rows = Vec::new();
    for (r, c) in m.linear.iter().enumerate() {
        if defining_row[r] || red.logic_rows.contains(&r) {
            continue;
        }
        rows.push(reduce_row(&red, c));
    }
    for k in 0..nv {
        if let Some(e) = &red.expr[k] {
            let mut a = vec![0.0; ncols];
            for &(j, cj) in &e.terms {
                a[j] += cj;
            }
            if m.vars[k].lo.is_finite() {
                rows.push(DenseRow { a: a.clone(), b: m.vars[k].lo - e.c0, sense: Sense::Ge });
            }
            if m.vars[k].hi.is_finite() {
                rows.push(DenseRow { a, b: m.vars[k].hi - e.c0, sense: Sense::Le });
            }
        }
    }
    for row in &rows {
        row.push_into(&mut red.base);
    }
    red.ind_rows = m.indicators.iter().map(|ind| vec![reduce_row(&red, &ind.constraint)]).collect();
    red
}

impl Reduced {
    /// Full model vector from QP columns; logic binaries are taken from `logic`.
    fn expand(&self, m: &MixedIntegerModel, y: &[f64], logic: &[i8]) -> Vec<f64> {
        let nv = m.vars.len();
        let mut x = vec![0.0; nv];
        for k in 0..nv {
            if let Some(c) = self.col[k] {
                x[k] = y[c];
            } else if let Some(e) = &self.expr[k] {
                x[k] = e.c0 + e.terms.iter().map(|&(j, cj)| cj * y[j]).sum::<f64>();
            } else if let Some(p) = self.bin_pos[k] {
                x[k] = if logic[p] > 0 { 1.0 } else { 0.0 };
            }
        }
        x
    }
}

fn normalized_violation(c: &LinearConstraint, x: &[f64]) -> f64 {
    let norm = c.terms.iter().map(|t| t.1 * t.1).sum::<f64>().sqrt().max(1e-300);
    c.violation(x) / norm
}

/// Can the pure-binary row still be satisfied given a partial assignment?
fn row_satisfiable(c: &LinearConstraint, val: &[i8], bin_pos: &[Option<usize>]) -> bool {
    let (mut lo, mut hi) = (0.0, 0.0);
    for &(v, coef) in &c.terms {
        match val[bin_pos[v.0].unwrap()] {
            1 => {
                lo += coef;
                hi += coef;
            }
            0 => {}
            _ => {
                if coef > 0.0 {
                    hi += coef;
                } else {
                    lo += coef;
                }
            }
        }
    }
    let tol = 1e-9;
    match c.sense {
        Sense::Le => lo <= c.rhs + tol,
        Sense::Ge => hi >= c.rhs - tol,
        Sense::Eq => lo <= c.rhs + tol && hi >= c.rhs - tol,
    }
}

#[derive(Clone)]
struct Node {
    bound: f64,
    id: usize,
    depth: usize,
    fix: Vec<i8>,
    warm: Option<Vec<f64>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

enum NodeOutcome {
    Pruned,
    Cutoff(f64),
    Feasible { x: Vec<f64>, obj: f64 },
    /// Children as lists of fixings, preferred child first.
    Branch { kids: Vec<Vec<(usize, i8)>>, bound: f64, y: Vec<f64> },
}

fn two_way(p: usize, prefer: i8) -> Vec<Vec<(usize, i8)>> {
    vec![vec![(p, prefer)], vec![(p, 1 - prefer)]]
}

struct Search<'a> {
    m: &'a MixedIntegerModel,
    red: Reduced,
    params: &'a BnbParams,
    cuts: Vec<DenseRow>,
    qp_failures: usize,
}

impl<'a> Search<'a> {
    fn node_qp(&self, fix: &[i8]) -> QpProblem {
        let mut qp = self.red.base.clone();
        for (p, &k) in self.red.bins.iter().enumerate() {
            if fix[p] >= 0 {
                if let Some(c) = self.red.col[k] {
                    qp.lo[c] = fix[p] as f64;
                    qp.hi[c] = fix[p] as f64;
                }
            }
        }
        for (ind, rows) in self.m.indicators.iter().zip(&self.red.ind_rows) {
            if active_under(ind, fix, &self.red.bin_pos) {
                for r in rows {
                    r.push_into(&mut qp);
                }
            }
        }
        for c in &self.cuts {
            c.push_into(&mut qp);
        }
        qp
    }

    fn process(&mut self, node: &Node, cutoff: f64, events: &mut Vec<Event>, node_no: usize) -> NodeOutcome {
        let m = self.m;
        for &r in &self.red.logic_rows {
            if !row_satisfiable(&m.linear[r], &node.fix, &self.red.bin_pos) {
                return NodeOutcome::Pruned;
            }
        }
        // An indicator contradicted by fixings is gone for good; those fully
        // active are in the QP.
        let mut qp = self.node_qp(&node.fix);
        let mut rounds = 0;
        let (y, obj) = loop {
            let sol = match solve_qp(&qp, node.warm.as_deref()) {
                Ok(s) => s,
                Err(QpError::Infeasible(_)) => return NodeOutcome::Pruned,
                Err(_) => {
                    self.qp_failures += 1;
                    return NodeOutcome::Pruned;
                }
            };
            if sol.objective >= cutoff {
                return NodeOutcome::Cutoff(sol.objective);
            }
            let x = self.red.expand(m, &sol.x, &node.fix);
            let mut added = 0;
            if rounds < self.params.max_cut_rounds {
                for q in &m.quad {
                    let g = q.eval(&x);
                    if g > QUAD_TOL {
                        let grad = q.gradient(&x);
                        let rhs = grad.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>() - g;
                        let (a, c0) = reduce_terms(&self.red.col, &self.red.expr, self.red.ncols, &grad);
                        let row = DenseRow { a, b: rhs - c0, sense: Sense::Le };
                        row.push_into(&mut qp);
                        self.cuts.push(row);
                        added += 1;
                    }
                }
            }
            if added == 0 {
                break (sol.x, sol.objective);
            }
            events.push(Event::Cuts { node: node_no, count: added });
            rounds += 1;
        };

        // Structural binaries must come out integral.
        let mut frac_best: Option<(usize, f64)> = None;
        for (p, &k) in self.red.bins.iter().enumerate() {
            if node.fix[p] >= 0 || !self.red.structural[k] {
                continue;
            }
            let v = y[self.red.col[k].unwrap()];
            let f = (v - v.round()).abs();
            if f > INT_TOL && frac_best.is_none_or(|(_, bf)| f > bf + 1e-12) {
                frac_best = Some((p, f));
            }
        }
        if let Some((p, _)) = frac_best {
            let v = y[self.red.col[self.red.bins[p]].unwrap()];
            return NodeOutcome::Branch { kids: two_way(p, if v >= 0.5 { 1 } else { 0 }), bound: obj, y };
        }

        let mut val = node.fix.clone();
        for (p, &k) in self.red.bins.iter().enumerate() {
            if val[p] < 0 && self.red.structural[k] {
                val[p] = y[self.red.col[k].unwrap()].round() as i8;
            }
        }
        let x = self.red.expand(m, &y, &val);
        let bad: Vec<usize> = (0..m.indicators.len())
            .filter(|&k| normalized_violation(&m.indicators[k].constraint, &x) > IND_TOL)
            .filter(|&k| !contradicted(&m.indicators[k], &val, &self.red.bin_pos))
            .collect();
        if let Some(done) = self.repair(&val, &bad) {
            let xf = self.red.expand(m, &y, &done);
            return NodeOutcome::Feasible { x: xf, obj };
        }

        // Largest violation of switched-on constraints per (binary, value).
        let nb = self.red.bins.len();
        let mut side = vec![[0.0f64; 2]; nb];
        let mut touched = vec![false; nb];
        for &b in &bad {
            let viol = normalized_violation(&m.indicators[b].constraint, &x);
            for &(v, want) in &m.indicators[b].conditions {
                let p = self.red.bin_pos[v.0].unwrap();
                touched[p] = true;
                let s = &mut side[p][want as usize];
                *s = s.max(viol);
            }
        }
        // A logic binary whose indicators are violated on both sides.
        let mut best: Option<(f64, Vec<Vec<(usize, i8)>>)> = None;
        for (p, &k) in self.red.bins.iter().enumerate() {
            if val[p] >= 0 || self.red.structural[k] {
                continue;
            }
            let score = side[p][0].min(side[p][1]);
            if score > 0.0 && best.as_ref().is_none_or(|(bs, _)| score > *bs) {
                // Dive toward the side that needs the smaller move.
                best = Some((score, two_way(p, if side[p][1] <= side[p][0] { 1 } else { 0 })));
            }
        }
        // An open cover row `sum b >= 1` none of whose members can be 1 at x.
        for &r in &self.red.logic_rows {
            let c = &m.linear[r];
            if !is_cover(c) {
                continue;
            }
            let members: Vec<usize> = c.terms.iter().map(|&(v, _)| self.red.bin_pos[v.0].unwrap()).collect();
            if members.iter().any(|&q| val[q] == 1) {
                continue;
            }
            let mut open: Vec<(usize, f64)> = members.iter().filter(|&&q| val[q] < 0).map(|&q| (q, side[q][1])).collect();
            let score = open.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
            if open.len() < 2 || score <= 0.0 || best.as_ref().is_some_and(|(bs, _)| score <= *bs) {
                continue;
            }
            // One child per member: it is 1 and the members before it are 0.
            open.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let kids = (0..open.len())
                .map(|j| {
                    let mut f: Vec<(usize, i8)> = open[..j].iter().map(|&(q, _)| (q, 0)).collect();
                    f.push((open[j].0, 1));
                    f
                })
                .collect();
            best = Some((score, kids));
        }
        if let Some((_, kids)) = best {
            return NodeOutcome::Branch { kids, bound: obj, y };
        }
        let pick = (0..nb).find(|&p| touched[p] && val[p] < 0 && !self.red.structural[self.red.bins[p]]).or_else(|| {
            self.red.logic_rows.iter().flat_map(|&r| m.linear[r].terms.iter()).map(|t| self.red.bin_pos[t.0 .0].unwrap()).filter(|&p| val[p] < 0).min()
        });
        match pick {
            Some(p) => NodeOutcome::Branch { kids: two_way(p, 1), bound: obj, y },
            None => NodeOutcome::Pruned,
        }
    }

    /// Depth-first completion of the free logic binaries.
    fn repair(&self, val: &[i8], bad: &[usize]) -> Option<Vec<i8>> {
        let m = self.m;
        let bp = &self.red.bin_pos;
        let mut free: Vec<usize> = (0..val.len()).filter(|&p| val[p] < 0).collect();
        let mut pref = vec![1i8; val.len()];
        let mut relevant = vec![false; val.len()];
        for &b in bad {
            for &(v, want) in &m.indicators[b].conditions {
                let p = bp[v.0].unwrap();
                relevant[p] = true;
                pref[p] = if want { 0 } else { 1 };
            }
        }
        for &r in &self.red.logic_rows {
            for &(v, _) in &m.linear[r].terms {
                relevant[bp[v.0].unwrap()] = true;
            }
        }
        let mut cur = val.to_vec();
        // Irrelevant binaries take any value.
        free.retain(|&p| {
            if relevant[p] {
                true
            } else {
                cur[p] = 0;
                false
            }
        });
        let ok = |cur: &[i8]| -> bool {
            for &b in bad {
                let ind = &m.indicators[b];
                let all_true = ind.conditions.iter().all(|&(v, want)| cur[bp[v.0].unwrap()] == want as i8);
                if all_true {
                    return false;
                }
            }
            self.red.logic_rows.iter().all(|&r| row_satisfiable(&m.linear[r], cur, bp))
        };
        if !ok(&cur) {
            return None;
        }
        let mut steps = 0usize;
        // Explicit stack of (depth, tried values).
        let mut tried = vec![0u8; free.len()];
        let mut d = 0usize;
        while d < free.len() {
            let p = free[d];
            let first = pref[p];
            let next = match tried[d] {
                0 => Some(first),
                1 => Some(1 - first),
                _ => None,
            };
            match next {
                Some(v) => {
                    tried[d] += 1;
                    steps += 1;
                    if steps > self.params.repair_limit {
                        return None;
                    }
                    cur[p] = v;
                    if ok(&cur) {
                        d += 1;
                    }
                }
                None => {
                    cur[p] = -1;
                    tried[d] = 0;
                    if d == 0 {
                        return None;
                    }
                    d -= 1;
                }
            }
        }
        Some(cur)
    }
}

fn is_cover(c: &LinearConstraint) -> bool {
    c.sense == Sense::Ge && (c.rhs - 1.0).abs() < 1e-12 && c.terms.iter().all(|&(_, a)| a == 1.0)
}

fn active_under(ind: &IndicatorConstraint, fix: &[i8], bin_pos: &[Option<usize>]) -> bool {
    ind.conditions.iter().all(|&(v, want)| fix[bin_pos[v.0].unwrap()] == want as i8)
}

fn contradicted(ind: &IndicatorConstraint, val: &[i8], bin_pos: &[Option<usize>]) -> bool {
    ind.conditions.iter().any(|&(v, want)| {
        let s = val[bin_pos[v.0].unwrap()];
        s >= 0 && s != want as i8
    })
}

/// Solves `m` to relative gap `params.rel_gap`. Binaries listed in `fixed`
/// are fixed at the root.
pub fn branch_and_bound(m: &MixedIntegerModel, params: &BnbParams, fixed: &[(VarId, bool)]) -> BnbResult {
    let start = Instant::now();
    let red = build_reduced(m);
    let nb = red.bins.len();
    let mut root_fix = vec![-1i8; nb];
    for &(v, b) in fixed {
        if let Some(p) = red.bin_pos[v.0] {
            root_fix[p] = b as i8;
        }
    }
    let mut s = Search { m, red, params, cuts: vec![], qp_failures: 0 };
    let mut events = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut next_id = 1usize;
    let mut dive: Option<Node> = Some(Node { bound: f64::NEG_INFINITY, id: 0, depth: 0, fix: root_fix, warm: None });
    let mut inc: Option<Vec<f64>> = None;
    let mut ub = f64::INFINITY;
    // Smallest bound among nodes discarded only because of the gap tolerance.
    let mut gap_floor = f64::INFINITY;
    let mut nodes = 0usize;
    let mut status = BnbStatus::Optimal;

    let cutoff_of = |ub: f64| {
        let ub = ub.min(params.cutoff);
        if ub.is_finite() {
            ub - (params.rel_gap * ub.abs()).max(params.abs_gap)
        } else {
            f64::INFINITY
        }
    };

    loop {
        let node = match dive.take() {
            Some(n) => n,
            None => match heap.pop() {
                Some(n) => n,
                None => break,
            },
        };
        let cutoff = cutoff_of(ub);
        if node.bound >= cutoff {
            gap_floor = gap_floor.min(node.bound);
            continue;
        }
        if params.time_limit.is_some_and(|t| start.elapsed() >= t) {
            heap.push(node);
            status = BnbStatus::TimeOut;
            break;
        }
        if nodes >= params.node_limit {
            heap.push(node);
            status = BnbStatus::NodeLimit;
            break;
        }
        nodes += 1;
        if nodes % 2000 == 0 {
            let lb = heap.peek().map_or(ub, |n: &Node| n.bound).min(node.bound).min(gap_floor);
            events.push(Event::Progress { node: nodes, lb, ub, open: heap.len() });
        }
        match s.process(&node, cutoff, &mut events, nodes) {
            NodeOutcome::Pruned => {}
            NodeOutcome::Cutoff(b) => gap_floor = gap_floor.min(b),
            NodeOutcome::Feasible { x, obj } => {
                if obj < ub {
                    ub = obj;
                    inc = Some(x);
                    events.push(Event::Incumbent { node: nodes, ub });
                }
            }
            NodeOutcome::Branch { kids, bound, y } => {
                if bound >= cutoff_of(ub) {
                    gap_floor = gap_floor.min(bound);
                    continue;
                }
                let mut children: Vec<Node> = kids
                    .into_iter()
                    .map(|f| {
                        let mut fix = node.fix.clone();
                        for (p, v) in f {
                            fix[p] = v;
                        }
                        let id = next_id;
                        next_id += 1;
                        Node { bound, id, depth: node.depth + 1, fix, warm: Some(y.clone()) }
                    })
                    .collect();
                if inc.is_none() {
                    dive = Some(children.remove(0));
                }
                heap.extend(children);
            }
        }
    }

    let open_min = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let lb = open_min.min(gap_floor).min(ub);
    if status == BnbStatus::Optimal && inc.is_none() && !gap_floor.is_finite() {
        status = BnbStatus::Infeasible;
    }
    let lb = if status == BnbStatus::Infeasible { f64::INFINITY } else { lb };
    events.push(Event::Done { nodes, lb, ub, status });
    BnbResult { status, x: inc, ub, lb, nodes, cuts: s.cuts.len(), qp_failures: s.qp_failures, events }
}
