//! Lexicographic 2D+FL resolution: flight-level assignment first, then one
//! 2D problem per level, with non-separable subsets fed back as cuts.

use crate::geometry::{is_conflict, preprocess, relative_state};
use crate::instances::Instance;
use crate::model::{LinearConstraint, Meaning, MixedIntegerModel, Formulation, Sense, VarId, VarKind};
use crate::solver::bnb::{branch_and_bound, BnbParams, BnbStatus};
use crate::solver::twod::{solve_2d, Control, SolveError, SolveOutcome, SolveParams, SolveStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlError {
    #[error("aircraft {0} has no flight-level data")]
    MissingFLData(usize),
    #[error("no flight-level assignment separates every non-separable subset")]
    Infeasible,
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlAssignment {
    pub levels: Vec<i32>,
    /// Total number of levels moved, `sum |level - initial|`.
    pub objective: u32,
}

/// Aircraft subsets that cannot share a level. Each subset is sorted and
/// stored once.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonSeparableFamily {
    pub sets: BTreeSet<Vec<usize>>,
}

impl NonSeparableFamily {
    /// Returns false when `set` was already present.
    pub fn insert(&mut self, mut set: Vec<usize>) -> bool {
        set.sort_unstable();
        set.dedup();
        self.sets.insert(set)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct FlParams {
    /// Per-level 2D settings; `time_limit` is the budget of each level.
    pub solve: SolveParams,
    pub max_iterations: usize,
}

impl FlParams {
    pub fn new(solve: SolveParams) -> Self {
        Self { solve, max_iterations: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlStatus {
    Solved,
    Infeasible,
    GlobalTimeOut,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub level: i32,
    /// Global aircraft indices on this level.
    pub aircraft: Vec<usize>,
    pub outcome: SolveOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlSolution {
    pub status: FlStatus,
    pub assignment: Option<FlAssignment>,
    pub per_level: Vec<LevelOutcome>,
    /// Per aircraft; empty unless every level was solved.
    pub controls: Vec<Control>,
    pub family: NonSeparableFamily,
    pub iterations: usize,
}

impl FlSolution {
    /// `(level changes, total 2D deviation)`.
    pub fn objective(&self) -> (u32, f64) {
        let fl = self.assignment.as_ref().map_or(u32::MAX, |a| a.objective);
        (fl, self.per_level.iter().map(|l| l.outcome.ub).sum())
    }
}

fn level_sets(inst: &Instance) -> Result<Vec<(i32, Vec<i32>)>, FlError> {
    inst.aircraft
        .iter()
        .enumerate()
        .map(|(i, a)| match (a.fl, a.fl_set.clone()) {
            (Some(fl), Some(set)) if !set.is_empty() => Ok((fl, set)),
            _ => Err(FlError::MissingFLData(i)),
        })
        .collect()
}

struct AssignmentModel {
    m: MixedIntegerModel,
    rho: Vec<Vec<(i32, VarId)>>,
}

fn assignment_model(sets: &[(i32, Vec<i32>)], family: &NonSeparableFamily) -> AssignmentModel {
    let mut m = MixedIntegerModel::new(Formulation::FlAssign);
    let mut rho = Vec::new();
    for (i, (home, set)) in sets.iter().enumerate() {
        let vars: Vec<(i32, VarId)> = set.iter().map(|&k| (k, m.add_var(VarKind::Binary, 0.0, 1.0, Meaning::Rho(i, k)))).collect();
        let span = set.iter().map(|&k| (k - home).abs()).max().unwrap_or(0) as f64;
        let d = m.add_var(VarKind::Continuous, 0.0, span, Meaning::DRho(i));
        m.linear.push(LinearConstraint::new(format!("one_level_{i}"), vars.iter().map(|&(_, v)| (v, 1.0)).collect(), Sense::Eq, 1.0));
        let mut up: Vec<(VarId, f64)> = vars.iter().map(|&(k, v)| (v, k as f64)).collect();
        up.push((d, -1.0));
        let down: Vec<(VarId, f64)> = up.iter().map(|&(v, c)| if v == d { (v, c) } else { (v, -c) }).collect();
        m.linear.push(LinearConstraint::new(format!("drho_up_{i}"), up, Sense::Le, *home as f64));
        m.linear.push(LinearConstraint::new(format!("drho_down_{i}"), down, Sense::Le, -*home as f64));
        m.objective.linear.push((d, 1.0));
        rho.push(vars);
    }
    for (n, omega) in family.sets.iter().enumerate() {
        let common: BTreeSet<i32> = omega
            .iter()
            .map(|&i| sets[i].1.iter().copied().collect::<BTreeSet<i32>>())
            .reduce(|a, b| a.intersection(&b).copied().collect())
            .unwrap_or_default();
        for k in common {
            let terms = omega.iter().map(|&i| (rho[i].iter().find(|e| e.0 == k).unwrap().1, 1.0)).collect();
            m.linear.push(LinearConstraint::new(format!("split_{n}_{k}"), terms, Sense::Le, omega.len() as f64 - 1.0));
        }
    }
    AssignmentModel { m, rho }
}

fn read_levels(am: &AssignmentModel, x: &[f64]) -> Vec<i32> {
    am.rho.iter().map(|vars| vars.iter().find(|&&(_, v)| x[v.0] > 0.5).map_or(0, |e| e.0)).collect()
}

/// Minimum number of level changes keeping every subset of `family` off a
/// shared level. Ties go to the lexicographically smallest level vector.
pub fn solve_fl_assignment(inst: &Instance, family: &NonSeparableFamily) -> Result<FlAssignment, FlError> {
    let sets = level_sets(inst)?;
    let mut am = assignment_model(&sets, family);
    // The objective is integral at integral points, so a node must beat the
    // incumbent by a whole unit to matter.
    let params = BnbParams { rel_gap: 0.0, abs_gap: 1.0 - 1e-6, ..BnbParams::default() };
    let r = branch_and_bound(&am.m, &params, &[]);
    if r.status == BnbStatus::Infeasible || r.x.is_none() {
        return Err(FlError::Infeasible);
    }
    let best = r.ub.round();
    let mut levels = read_levels(&am, r.x.as_ref().unwrap());
    if best > 0.0 {
        let terms = am.m.objective.linear.clone();
        am.m.linear.push(LinearConstraint::new("optimal", terms, Sense::Le, best + 0.5));
        let mut fixed: Vec<(VarId, bool)> = Vec::new();
        for i in 0..sets.len() {
            let cands: Vec<(i32, VarId)> = am.rho[i].clone();
            for &(k, v) in &cands {
                if levels[i] != k {
                    let mut trial = fixed.clone();
                    trial.push((v, true));
                    let r = branch_and_bound(&am.m, &params, &trial);
                    let Some(x) = r.x else { continue };
                    levels = read_levels(&am, &x);
                }
                fixed.push((v, true));
                break;
            }
        }
    }
    let objective = levels.iter().zip(&sets).map(|(&l, (home, _))| (l - home).unsigned_abs()).sum();
    Ok(FlAssignment { levels, objective })
}

/// Pairs on a common level at `controls` that still conflict.
fn same_level_conflicts(inst: &Instance, levels: &[i32], controls: &[Control]) -> usize {
    let a = &inst.aircraft;
    let mut n = 0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if levels[i] != levels[j] {
                continue;
            }
            let Ok(pg) = relative_state(&a[i], &a[j], inst.d) else { return usize::MAX };
            let vi = a[i].velocity(controls[i].q, controls[i].theta);
            let vj = a[j].velocity(controls[j].q, controls[j].theta);
            if is_conflict(&pg, vi.0 - vj.0, vi.1 - vj.1) {
                n += 1;
            }
        }
    }
    n
}

/// Assigns levels, solves every level in 2D, and adds each level that turns
/// out 2D-infeasible to the family before trying again.
pub fn solve_2dfl(inst: &Instance, params: &FlParams) -> Result<FlSolution, FlError> {
    let sets = level_sets(inst)?;
    let part = preprocess(&inst.aircraft, &params.solve.cb, inst.d).map_err(SolveError::from)?;
    let mut family = NonSeparableFamily::default();
    for &(i, j) in &part.nonseparable {
        if sets[i].1.iter().any(|k| sets[j].1.contains(k)) {
            family.insert(vec![i, j]);
        }
    }
    let mut sol = FlSolution { status: FlStatus::IterationLimit, assignment: None, per_level: vec![], controls: vec![], family: family.clone(), iterations: 0 };
    for it in 1..=params.max_iterations {
        sol.iterations = it;
        let asg = match solve_fl_assignment(inst, &family) {
            Ok(a) => a,
            Err(FlError::Infeasible) => {
                sol.status = FlStatus::Infeasible;
                sol.family = family;
                return Ok(sol);
            }
            Err(e) => return Err(e),
        };
        let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in asg.levels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        let groups: Vec<(i32, Vec<usize>)> = groups.into_iter().collect();
        let results: Vec<Result<SolveOutcome, SolveError>> =
            groups.par_iter().map(|(_, idx)| solve_2d(&inst.subset(idx), &params.solve)).collect();
        let mut per_level = Vec::with_capacity(groups.len());
        for ((level, idx), r) in groups.into_iter().zip(results) {
            per_level.push(LevelOutcome { level, aircraft: idx, outcome: r? });
        }
        sol.assignment = Some(asg);
        let mut grew = false;
        for l in &per_level {
            if l.outcome.status == SolveStatus::Infeasible {
                grew |= family.insert(l.aircraft.clone());
            }
        }
        sol.per_level = per_level;
        sol.family = family.clone();
        if grew {
            continue;
        }
        if sol.per_level.iter().any(|l| l.outcome.controls.is_empty()) {
            // A level neither solved nor proven infeasible.
            sol.status = FlStatus::GlobalTimeOut;
            return Ok(sol);
        }
        let mut controls = vec![Control { q: 1.0, theta: 0.0, dx: 1.0, dy: 0.0 }; inst.aircraft.len()];
        for l in &sol.per_level {
            for (&g, c) in l.aircraft.iter().zip(&l.outcome.controls) {
                controls[g] = *c;
            }
        }
        let levels = &sol.assignment.as_ref().unwrap().levels;
        if same_level_conflicts(inst, levels, &controls) > 0 {
            sol.status = FlStatus::GlobalTimeOut;
            return Ok(sol);
        }
        sol.controls = controls;
        sol.status = FlStatus::Solved;
        return Ok(sol);
    }
    Ok(sol)
}
