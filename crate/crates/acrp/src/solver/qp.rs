//! Dense convex QP solver.
//!
//! Goldfarb-Idnani dual active-set method for strictly convex objectives.
//! Objectives that are only positive semidefinite are handled by an outer
//! proximal-point loop, each step of which is strictly convex.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Feasibility tolerance on unit-normalized constraint rows.
pub const FEAS_TOL: f64 = 1e-9;
const DEP_TOL: f64 = 1e-12;

/// `min 0.5 x'Hx + c'x + constant` subject to equalities, `>=` rows and bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub constant: f64,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub ge: Vec<(Vec<f64>, f64)>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub mult_eq: Vec<f64>,
    pub mult_ge: Vec<f64>,
    pub mult_lo: Vec<f64>,
    pub mult_hi: Vec<f64>,
    pub iterations: usize,
}

/// Which original row a violated or active constraint came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRef {
    Eq(usize),
    Ge(usize),
    Lo(usize),
    Hi(usize),
}

/// The violated row is a nonnegative combination of active rows whose
/// right-hand sides it cannot reach, so no point satisfies all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityWitness {
    pub violated: RowRef,
    pub active: Vec<(RowRef, f64)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("QP is infeasible (violated row {:?})", .0.violated)]
    Infeasible(InfeasibilityWitness),
    #[error("QP iteration limit reached")]
    MaxIterations,
    #[error("objective is not positive semidefinite")]
    NotConvex,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        Self {
            h: DMatrix::zeros(n, n),
            c: DVector::zeros(n),
            constant: 0.0,
            eq: vec![],
            ge: vec![],
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn add_eq(&mut self, a: Vec<f64>, b: f64) {
        self.eq.push((a, b));
    }

    pub fn add_ge(&mut self, a: Vec<f64>, b: f64) {
        self.ge.push((a, b));
    }

    pub fn add_le(&mut self, a: Vec<f64>, b: f64) {
        self.ge.push((a.into_iter().map(|v| -v).collect(), -b));
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.h * &xv)) + self.c.dot(&xv) + self.constant
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.n();
        if self.h.nrows() != n || self.h.ncols() != n || self.lo.len() != n || self.hi.len() != n {
            return Err(QpError::Dimension("objective and bounds must agree".into()));
        }
        if self.eq.iter().chain(self.ge.iter()).any(|(a, _)| a.len() != n) {
            return Err(QpError::Dimension("constraint row length".into()));
        }
        Ok(())
    }
}

struct Row {
    a: DVector<f64>,
    b: f64,
    eq: bool,
    origin: RowRef,
}

fn build_rows(qp: &QpProblem) -> (Vec<Row>, Vec<(RowRef, f64)>) {
    let n = qp.n();
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    let mut push = |a: DVector<f64>, b: f64, eq: bool, origin: RowRef, rows: &mut Vec<Row>| {
        let norm = a.norm();
        if norm == 0.0 {
            dropped.push((origin, b));
            return;
        }
        rows.push(Row { a: a / norm, b: b / norm, eq, origin });
    };
    for (k, (a, b)) in qp.eq.iter().enumerate() {
        push(DVector::from_column_slice(a), *b, true, RowRef::Eq(k), &mut rows);
    }
    for i in 0..n {
        if qp.lo[i] == qp.hi[i] {
            let mut a = DVector::zeros(n);
            a[i] = 1.0;
            push(a, qp.lo[i], true, RowRef::Lo(i), &mut rows);
        }
    }
    for (k, (a, b)) in qp.ge.iter().enumerate() {
        push(DVector::from_column_slice(a), *b, false, RowRef::Ge(k), &mut rows);
    }
    for i in 0..n {
        if qp.lo[i] == qp.hi[i] {
            continue;
        }
        if qp.lo[i].is_finite() {
            let mut a = DVector::zeros(n);
            a[i] = 1.0;
            push(a, qp.lo[i], false, RowRef::Lo(i), &mut rows);
        }
        if qp.hi[i].is_finite() {
            let mut a = DVector::zeros(n);
            a[i] = -1.0;
            push(a, -qp.hi[i], false, RowRef::Hi(i), &mut rows);
        }
    }
    (rows, dropped)
}

/// Strictly convex solve. `h` must be positive definite.
fn goldfarb_idnani(
    chol: &Cholesky<f64, Dyn>,
    c: &DVector<f64>,
    rows: &[Row],
) -> Result<(DVector<f64>, Vec<(usize, f64)>, usize), QpError> {
    let n = c.len();
    let mut x = -chol.solve(c);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    // Equalities are entered with a sign flip when violated from above.
    let mut sign: Vec<f64> = vec![1.0; rows.len()];
    let mut hinv_n: Vec<DVector<f64>> = Vec::new();
    let mut is_active = vec![false; rows.len()];
    let max_iter = 50 * (rows.len() + n) + 200;
    let mut iter = 0usize;

    let step_dirs = |p_vec: &DVector<f64>, hinv_n: &[DVector<f64>], active: &[usize], sign: &[f64]| {
        let w = chol.solve(p_vec);
        let k = active.len();
        if k == 0 {
            return (w, DVector::zeros(0));
        }
        let mut m = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for a in 0..k {
            let na = &rows[active[a]].a * sign[active[a]];
            rhs[a] = na.dot(&w);
            for b in 0..=a {
                let v = na.dot(&hinv_n[b]);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        let r = match Cholesky::new(m.clone()) {
            Some(ch) => ch.solve(&rhs),
            None => m.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(k)),
        };
        let mut z = w;
        for a in 0..k {
            z -= &hinv_n[a] * r[a];
        }
        (z, r)
    };

    let eq_idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].eq).collect();
    for &p in &eq_idx {
        iter += 1;
        let s = rows[p].a.dot(&x) - rows[p].b;
        if s > 0.0 {
            sign[p] = -1.0;
        }
        let np = &rows[p].a * sign[p];
        let s = np.dot(&x) - rows[p].b * sign[p];
        let (z, r) = step_dirs(&np, &hinv_n, &active, &sign);
        let curv = z.dot(&np);
        let base = np.dot(&chol.solve(&np));
        if curv <= DEP_TOL * base {
            if s.abs() <= FEAS_TOL * (1.0 + rows[p].b.abs()) {
                continue;
            }
            let mut act: Vec<(RowRef, f64)> = active.iter().zip(r.iter()).map(|(&j, &rj)| (rows[j].origin, rj * sign[j])).collect();
            act.retain(|e| e.1 != 0.0);
            return Err(QpError::Infeasible(InfeasibilityWitness { violated: rows[p].origin, active: act }));
        }
        let t = -s / curv;
        x += &z * t;
        for a in 0..active.len() {
            u[a] -= t * r[a];
        }
        active.push(p);
        u.push(t);
        hinv_n.push(chol.solve(&np));
        is_active[p] = true;
    }

    loop {
        // Most violated inactive inequality.
        let mut p = usize::MAX;
        let mut worst = 0.0;
        for (i, row) in rows.iter().enumerate() {
            if row.eq || is_active[i] {
                continue;
            }
            let s = row.a.dot(&x) - row.b;
            if s < -FEAS_TOL * (1.0 + row.b.abs()) && s < worst {
                worst = s;
                p = i;
            }
        }
        if p == usize::MAX {
            break;
        }
        let np = rows[p].a.clone();
        let mut up = 0.0;
        loop {
            iter += 1;
            if iter > max_iter {
                return Err(QpError::MaxIterations);
            }
            let (z, r) = step_dirs(&np, &hinv_n, &active, &sign);
            let mut t1 = f64::INFINITY;
            let mut kdrop = usize::MAX;
            for a in 0..active.len() {
                if rows[active[a]].eq {
                    continue;
                }
                if r[a] > 0.0 {
                    let ratio = u[a] / r[a];
                    if ratio < t1 {
                        t1 = ratio;
                        kdrop = a;
                    }
                }
            }
            let curv = z.dot(&np);
            let base = np.dot(&chol.solve(&np));
            let s = np.dot(&x) - rows[p].b;
            let t2 = if curv > DEP_TOL * base { -s / curv } else { f64::INFINITY };
            if t1.is_infinite() && t2.is_infinite() {
                let act = active
                    .iter()
                    .zip(r.iter())
                    .filter(|(_, &rj)| rj != 0.0)
                    .map(|(&j, &rj)| (rows[j].origin, rj * sign[j]))
                    .collect();
                return Err(QpError::Infeasible(InfeasibilityWitness { violated: rows[p].origin, active: act }));
            }
            if t2.is_infinite() {
                for a in 0..active.len() {
                    u[a] -= t1 * r[a];
                }
                up += t1;
                drop_active(&mut active, &mut u, &mut hinv_n, &mut is_active, kdrop);
                continue;
            }
            let t = t1.min(t2);
            x += &z * t;
            for a in 0..active.len() {
                u[a] -= t * r[a];
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                hinv_n.push(chol.solve(&np));
                is_active[p] = true;
                break;
            }
            drop_active(&mut active, &mut u, &mut hinv_n, &mut is_active, kdrop);
        }
    }
    let mult = active.iter().zip(u.iter()).map(|(&j, &uj)| (j, uj * sign[j])).collect();
    Ok((x, mult, iter))
}

fn drop_active(active: &mut Vec<usize>, u: &mut Vec<f64>, hinv_n: &mut Vec<DVector<f64>>, is_active: &mut [bool], k: usize) {
    is_active[active[k]] = false;
    active.remove(k);
    u.remove(k);
    hinv_n.remove(k);
}

fn pd_cholesky(h: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(1.0_f64, f64::max);
    let ch = Cholesky::new(h.clone())?;
    let l = ch.l_dirty();
    let min_piv = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if n > 0 && min_piv < 1e-10 * scale {
        return None;
    }
    Some(ch)
}

fn is_psd(h: &DMatrix<f64>) -> bool {
    let n = h.nrows();
    if n == 0 {
        return true;
    }
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(1.0_f64, f64::max);
    let eig = h.clone().symmetric_eigenvalues();
    eig.iter().all(|&e| e >= -1e-9 * scale)
}

fn assemble(qp: &QpProblem, rows: &[Row], x: DVector<f64>, mult: &[(usize, f64)], iterations: usize) -> QpSolution {
    let n = qp.n();
    let mut sol = QpSolution {
        objective: 0.0,
        x: x.iter().copied().collect(),
        mult_eq: vec![0.0; qp.eq.len()],
        mult_ge: vec![0.0; qp.ge.len()],
        mult_lo: vec![0.0; n],
        mult_hi: vec![0.0; n],
        iterations,
    };
    for &(j, m) in mult {
        // Rows were scaled to unit norm; undo the scaling on the multiplier.
        let norm = match rows[j].origin {
            RowRef::Eq(k) => DVector::from_column_slice(&qp.eq[k].0).norm(),
            RowRef::Ge(k) => DVector::from_column_slice(&qp.ge[k].0).norm(),
            _ => 1.0,
        };
        let m = m / norm;
        match rows[j].origin {
            RowRef::Eq(k) => sol.mult_eq[k] += m,
            RowRef::Ge(k) => sol.mult_ge[k] += m,
            RowRef::Lo(i) => sol.mult_lo[i] += m,
            RowRef::Hi(i) => sol.mult_hi[i] += m,
        }
    }
    sol.objective = qp.objective(&sol.x);
    sol
}

/// Solves a convex QP. The returned point satisfies the KKT conditions to
/// about 1e-8; `warm_start` seeds the proximal loop for semidefinite problems.
pub fn solve_qp(qp: &QpProblem, warm_start: Option<&[f64]>) -> Result<QpSolution, QpError> {
    qp.check()?;
    let n = qp.n();
    let (rows, dropped) = build_rows(qp);
    for (origin, b) in dropped {
        let bad = match origin {
            RowRef::Eq(_) => b.abs() > FEAS_TOL,
            _ => b > FEAS_TOL,
        };
        if bad {
            return Err(QpError::Infeasible(InfeasibilityWitness { violated: origin, active: vec![] }));
        }
    }
    if let Some(ch) = pd_cholesky(&qp.h) {
        let (x, mult, it) = goldfarb_idnani(&ch, &qp.c, &rows)?;
        return Ok(assemble(qp, &rows, x, &mult, it));
    }
    if !is_psd(&qp.h) {
        return Err(QpError::NotConvex);
    }
    let scale = (0..n).map(|i| qp.h[(i, i)].abs()).fold(0.0_f64, f64::max).max(1.0);
    let rho = 1e-4 * scale;
    let hr = &qp.h + DMatrix::identity(n, n) * rho;
    let ch = Cholesky::new(hr).ok_or(QpError::NotConvex)?;
    let mut xk = match warm_start {
        Some(w) if w.len() == n => DVector::from_column_slice(w),
        _ => DVector::zeros(n),
    };
    // Clamp the prox center into the bounds; it need not be feasible otherwise.
    for i in 0..n {
        xk[i] = xk[i].clamp(qp.lo[i].min(qp.hi[i]), qp.hi[i].max(qp.lo[i]));
    }
    let cscale = qp.c.amax().max(1.0);
    let mut total_it = 0;
    for _ in 0..500 {
        let ck = &qp.c - &xk * rho;
        let (x, mult, it) = goldfarb_idnani(&ch, &ck, &rows)?;
        total_it += it;
        let dx = (&x - &xk).amax();
        xk = x;
        if rho * dx <= 1e-11 * cscale {
            return Ok(assemble(qp, &rows, xk, &mult, total_it));
        }
    }
    Err(QpError::MaxIterations)
}

/// Stationarity, primal infeasibility, dual infeasibility, complementarity.
pub fn kkt_residuals(qp: &QpProblem, sol: &QpSolution) -> [f64; 4] {
    let n = qp.n();
    let x = DVector::from_column_slice(&sol.x);
    let mut grad = &qp.h * &x + &qp.c;
    for (k, (a, _)) in qp.eq.iter().enumerate() {
        grad -= DVector::from_column_slice(a) * sol.mult_eq[k];
    }
    for (k, (a, _)) in qp.ge.iter().enumerate() {
        grad -= DVector::from_column_slice(a) * sol.mult_ge[k];
    }
    for i in 0..n {
        grad[i] -= sol.mult_lo[i] - sol.mult_hi[i];
    }
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (a, b) in &qp.eq {
        primal = primal.max((DVector::from_column_slice(a).dot(&x) - b).abs());
    }
    for (k, (a, b)) in qp.ge.iter().enumerate() {
        let s = DVector::from_column_slice(a).dot(&x) - b;
        primal = primal.max(-s);
        comp = comp.max((sol.mult_ge[k] * s).abs());
    }
    for i in 0..n {
        primal = primal.max(qp.lo[i] - x[i]).max(x[i] - qp.hi[i]);
        if qp.lo[i] != qp.hi[i] {
            if qp.lo[i].is_finite() {
                comp = comp.max((sol.mult_lo[i] * (x[i] - qp.lo[i])).abs());
            }
            if qp.hi[i].is_finite() {
                comp = comp.max((sol.mult_hi[i] * (qp.hi[i] - x[i])).abs());
            }
        }
    }
    let dual = sol
        .mult_ge
        .iter()
        .chain(sol.mult_lo.iter().zip(qp.lo.iter().zip(qp.hi.iter())).filter(|(_, (l, h))| l != h).map(|(m, _)| m))
        .chain(sol.mult_hi.iter().zip(qp.lo.iter().zip(qp.hi.iter())).filter(|(_, (l, h))| l != h).map(|(m, _)| m))
        .fold(0.0_f64, |acc, &m| acc.max(-m));
    [grad.amax(), primal.max(0.0), dual, comp]
}
