//! Experiment harness: benchmark suites and CSV records, preference-weight
//! sweeps, solution files, SVG figures and event logs.

use crate::fl::FlSolution;
use crate::geometry::{is_conflict, pair_with_box, preprocess, relative_state, ControlBounds, GeometryError};
use crate::instances::{gen_cp, gen_fp, gen_gp, gen_rcp, Instance, InstanceError};
use crate::solver::bnb::Event;
use crate::solver::twod::{solve_2d, verify_controls, Control, SeparationKind, SolveError, SolveOutcome, SolveParams, SolveStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown suite {0}")]
    UnknownSuite(String),
    #[error("unknown pair ({0}, {1})")]
    UnknownPair(usize, usize),
    #[error("solution has {got} aircraft, instance has {want}")]
    SolutionMismatch { got: usize, want: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One CSV row. Empty cells mean "not run" or "no finite value".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub instance: String,
    pub n_aircraft: usize,
    pub n_c: usize,
    pub pf_pct: f64,
    pub pi_pct: f64,
    pub preprocess_s: f64,
    pub disj_lb: Option<f64>,
    pub disj_ub: Option<f64>,
    pub disj_gap_pct: Option<f64>,
    pub disj_time_s: Option<f64>,
    pub disj_n_i: Option<usize>,
    pub disj_timeout: Option<bool>,
    pub shadow_lb: Option<f64>,
    pub shadow_ub: Option<f64>,
    pub shadow_gap_pct: Option<f64>,
    pub shadow_time_s: Option<f64>,
    pub shadow_n_i: Option<usize>,
    pub shadow_timeout: Option<bool>,
    pub delta_ub: Option<f64>,
    pub gain_pct: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SuiteSpec {
    pub name: String,
    pub instances: Vec<Instance>,
    pub cb: ControlBounds,
    pub formulations: Vec<SeparationKind>,
}

#[derive(Debug, Clone)]
pub struct BenchParams {
    pub w: f64,
    pub eps: f64,
    pub time_limit: Duration,
    /// Directory for per-run JSON-lines event logs.
    pub events_dir: Option<PathBuf>,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self { w: 0.5, eps: 0.01, time_limit: Duration::from_secs(600), events_dir: None }
    }
}

pub const SUITES: [&str; 7] = ["cp", "cp15", "fp", "gp", "golden", "rcp30", "smoke"];

/// Named suites: `cp` (CP-4..8), `cp15` (the same at 15 degrees), `fp`
/// (FP-4..6), `gp` (GP-4..5), `golden` (cp, fp and gp), `rcp30` (RCP-30,
/// seeds 0..9, 15 degrees) and `smoke` (CP-4, CP-5).
pub fn suite(name: &str) -> Result<SuiteSpec, BenchError> {
    let both = vec![SeparationKind::Disjunctive, SeparationKind::Shadow];
    let narrow = ControlBounds::from_percent_deg(-6.0, 3.0, 15.0)?;
    let cp = || (4..=8).map(gen_cp).collect::<Result<Vec<_>, _>>();
    let (instances, cb) = match name {
        "cp" => (cp()?, ControlBounds::standard()),
        "cp15" => (cp()?, narrow),
        "fp" => ((4..=6).map(gen_fp).collect::<Result<_, _>>()?, ControlBounds::standard()),
        "gp" => ((4..=5).map(gen_gp).collect::<Result<_, _>>()?, ControlBounds::standard()),
        "golden" => {
            let mut v = cp()?;
            for n in 4..=6 {
                v.push(gen_fp(n)?);
            }
            for n in 4..=5 {
                v.push(gen_gp(n)?);
            }
            (v, ControlBounds::standard())
        }
        "rcp30" => ((0..10).map(|s| gen_rcp(30, s)).collect::<Result<_, _>>()?, narrow),
        "smoke" => (vec![gen_cp(4)?, gen_cp(5)?], ControlBounds::standard()),
        other => return Err(BenchError::UnknownSuite(other.into())),
    };
    let instances = instances.into_iter().map(|i| i.with_bounds(cb)).collect();
    Ok(SuiteSpec { name: name.into(), instances, cb, formulations: both })
}

/// Separable pairs that conflict at nominal controls.
pub fn nominal_conflicts(inst: &Instance, cb: &ControlBounds) -> Result<usize, GeometryError> {
    let part = preprocess(&inst.aircraft, cb, inst.d)?;
    let a = &inst.aircraft;
    let mut n = 0;
    for &(i, j) in &part.separable {
        let pg = relative_state(&a[i], &a[j], inst.d)?;
        let (vi, vj) = (a[i].velocity(1.0, 0.0), a[j].velocity(1.0, 0.0));
        if is_conflict(&pg, vi.0 - vj.0, vi.1 - vj.1) {
            n += 1;
        }
    }
    Ok(n)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn gap_pct(o: &SolveOutcome) -> Option<f64> {
    (o.ub.is_finite() && o.ub > 0.0 && o.lb.is_finite()).then(|| 100.0 * (o.ub - o.lb) / o.ub)
}

/// JSON lines, one event per line.
pub fn events_jsonl(events: &[Event]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("events serialize"));
        s.push('\n');
    }
    s
}

fn formulation_tag(f: SeparationKind) -> &'static str {
    match f {
        SeparationKind::Disjunctive => "disjunctive",
        SeparationKind::Shadow => "shadow",
    }
}

fn run_one(inst: &Instance, spec: &SuiteSpec, p: &BenchParams) -> BenchmarkRecord {
    let mut rec = BenchmarkRecord {
        instance: inst.id(),
        n_aircraft: inst.aircraft.len(),
        n_c: 0,
        pf_pct: 0.0,
        pi_pct: 0.0,
        preprocess_s: 0.0,
        disj_lb: None,
        disj_ub: None,
        disj_gap_pct: None,
        disj_time_s: None,
        disj_n_i: None,
        disj_timeout: None,
        shadow_lb: None,
        shadow_ub: None,
        shadow_gap_pct: None,
        shadow_time_s: None,
        shadow_n_i: None,
        shadow_timeout: None,
        delta_ub: None,
        gain_pct: None,
        error: None,
    };
    let fail = |mut rec: BenchmarkRecord, e: String| {
        rec.error = Some(e);
        rec
    };
    match nominal_conflicts(inst, &spec.cb) {
        Ok(n) => rec.n_c = n,
        Err(e) => return fail(rec, e.to_string()),
    }
    let mut times = [None, None];
    let mut ubs = [None, None];
    let mut timeouts = [false, false];
    for &f in &spec.formulations {
        let mut sp = SolveParams::new(spec.cb);
        sp.formulation = f;
        sp.w = p.w;
        sp.eps = p.eps;
        sp.time_limit = p.time_limit;
        let o = match solve_2d(inst, &sp) {
            Ok(o) => o,
            Err(e) => return fail(rec, e.to_string()),
        };
        if let Some(dir) = &p.events_dir {
            let path = dir.join(format!("{}-{}.jsonl", inst.id(), formulation_tag(f)));
            if let Err(e) = std::fs::write(&path, events_jsonl(&o.events)) {
                return fail(rec, e.to_string());
            }
        }
        let pf = o.n_free as f64 / o.n_pairs.max(1) as f64;
        let pi = o.nonseparable.len() as f64 / o.n_pairs.max(1) as f64;
        rec.pf_pct = 100.0 * pf;
        rec.pi_pct = 100.0 * pi;
        rec.preprocess_s = o.preprocess_time;
        // A reported UB must come with controls the oracle accepts.
        let verified = !o.controls.is_empty() && verify_controls(inst, &o.controls, &spec.cb);
        if o.ub.is_finite() && !verified {
            return fail(rec, format!("{} controls failed verification", formulation_tag(f)));
        }
        let k = (f == SeparationKind::Shadow) as usize;
        let timeout = o.status == SolveStatus::TimeOut;
        times[k] = Some(o.wall_time);
        ubs[k] = finite(o.ub);
        timeouts[k] = timeout;
        let fields = (finite(o.lb), finite(o.ub), gap_pct(&o), Some(o.wall_time), Some(o.n_i), Some(timeout));
        if k == 0 {
            (rec.disj_lb, rec.disj_ub, rec.disj_gap_pct, rec.disj_time_s, rec.disj_n_i, rec.disj_timeout) = fields;
        } else {
            (rec.shadow_lb, rec.shadow_ub, rec.shadow_gap_pct, rec.shadow_time_s, rec.shadow_n_i, rec.shadow_timeout) = fields;
        }
    }
    if let (Some(a), Some(b)) = (ubs[0], ubs[1]) {
        rec.delta_ub = Some(b - a);
    }
    if let (Some(td), Some(ts), false, false) = (times[0], times[1], timeouts[0], timeouts[1]) {
        if ts > 0.0 {
            rec.gain_pct = Some(100.0 * (ts - td) / ts);
        }
    }
    rec
}

/// Runs every instance of the suite; rows come back sorted by instance id.
pub fn run_suite(spec: &SuiteSpec, p: &BenchParams) -> Vec<BenchmarkRecord> {
    let mut rows: Vec<BenchmarkRecord> = spec.instances.par_iter().map(|inst| run_one(inst, spec, p)).collect();
    rows.sort_by(|a, b| a.instance.cmp(&b.instance));
    rows
}

pub fn records_to_csv(rows: &[BenchmarkRecord]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn records_from_csv(text: &str) -> Result<Vec<BenchmarkRecord>, BenchError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w: f64,
    pub sigma_q: f64,
    pub sigma_theta: f64,
    pub objective: f64,
    pub status: SolveStatus,
}

/// Solves `inst` once per weight.
pub fn sweep_w(inst: &Instance, ws: &[f64], base: &SolveParams) -> Result<Vec<SweepRow>, SolveError> {
    ws.iter()
        .map(|&w| {
            let mut p = base.clone();
            p.w = w;
            let o = solve_2d(inst, &p)?;
            Ok(SweepRow { w, sigma_q: o.sigma_q(), sigma_theta: o.sigma_theta(), objective: o.ub, status: o.status })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftSolution {
    pub q: f64,
    pub theta_rad: f64,
    pub fl: Option<i32>,
}

/// Solution file. Non-finite bounds are written as null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub aircraft: Vec<AircraftSolution>,
    pub objective: Option<f64>,
    pub status: String,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl_changes: Option<u32>,
}

impl SolutionFile {
    pub fn from_outcome(inst: &Instance, o: &SolveOutcome) -> Self {
        let aircraft = o.controls.iter().zip(&inst.aircraft).map(|(c, a)| AircraftSolution { q: c.q, theta_rad: c.theta, fl: a.fl }).collect();
        Self {
            aircraft,
            objective: finite(o.ub),
            status: format!("{:?}", o.status),
            lb: finite(o.lb),
            ub: finite(o.ub),
            gap: finite(o.gap),
            fl_changes: None,
        }
    }

    pub fn from_fl(s: &FlSolution) -> Self {
        let levels = s.assignment.as_ref().map(|a| a.levels.clone()).unwrap_or_default();
        let aircraft = s
            .controls
            .iter()
            .enumerate()
            .map(|(i, c)| AircraftSolution { q: c.q, theta_rad: c.theta, fl: levels.get(i).copied() })
            .collect();
        let (changes, dev) = s.objective();
        let lb: f64 = s.per_level.iter().map(|l| l.outcome.lb).sum();
        let solved = !s.controls.is_empty();
        Self {
            aircraft,
            objective: solved.then_some(dev),
            status: format!("{:?}", s.status),
            lb: finite(lb).filter(|_| solved),
            ub: solved.then_some(dev),
            gap: solved.then(|| if dev > 0.0 { (dev - lb) / dev } else { 0.0 }),
            fl_changes: s.assignment.as_ref().map(|_| changes),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn controls(&self) -> Vec<Control> {
        self.aircraft
            .iter()
            .map(|a| {
                let (s, c) = a.theta_rad.sin_cos();
                Control { q: a.q, theta: a.theta_rad, dx: a.q * c, dy: a.q * s }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMode {
    Trajectories,
    /// Relative-velocity plane of pair `(i, j)`, `i < j`.
    VelocityPlane(usize, usize),
}

const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;

struct Frame {
    x0: f64,
    y0: f64,
    k: f64,
}

impl Frame {
    fn fit(pts: &[(f64, f64)]) -> Self {
        let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            lo_x = lo_x.min(x);
            hi_x = hi_x.max(x);
            lo_y = lo_y.min(y);
            hi_y = hi_y.max(y);
        }
        let span = (hi_x - lo_x).max(hi_y - lo_y).max(1e-9);
        let k = (SIZE - 2.0 * MARGIN) / span;
        Frame { x0: lo_x - ((span - (hi_x - lo_x)) / 2.0), y0: hi_y + ((span - (hi_y - lo_y)) / 2.0), k }
    }

    fn map(&self, p: (f64, f64)) -> (f64, f64) {
        (MARGIN + (p.0 - self.x0) * self.k, MARGIN + (self.y0 - p.1) * self.k)
    }
}

fn svg_open(out: &mut String) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE:.0}" height="{SIZE:.0}" viewBox="0 0 {SIZE:.0} {SIZE:.0}">"#);
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{SIZE:.0}" height="{SIZE:.0}" fill="#ffffff"/>"##);
}

fn line(out: &mut String, f: &Frame, a: (f64, f64), b: (f64, f64), style: &str) {
    let (p, q) = (f.map(a), f.map(b));
    let _ = writeln!(out, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" {style}/>"#, p.0, p.1, q.0, q.1);
}

const COLOURS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// Deterministic SVG of the instance. `controls` defaults to nominal.
pub fn plot(inst: &Instance, controls: Option<&[Control]>, mode: PlotMode) -> Result<String, BenchError> {
    let n = inst.aircraft.len();
    let nominal = vec![Control { q: 1.0, theta: 0.0, dx: 1.0, dy: 0.0 }; n];
    let ctrl = controls.unwrap_or(&nominal);
    if ctrl.len() != n {
        return Err(BenchError::SolutionMismatch { got: ctrl.len(), want: n });
    }
    let mut out = String::new();
    svg_open(&mut out);
    match mode {
        PlotMode::Trajectories => {
            let extent = inst.aircraft.iter().map(|a| a.x.hypot(a.y)).fold(1.0, f64::max);
            let slowest = inst.aircraft.iter().map(|a| a.speed).fold(f64::INFINITY, f64::min);
            let horizon = 2.0 * extent / slowest;
            let ends = |c: &[Control]| -> Vec<((f64, f64), (f64, f64))> {
                inst.aircraft
                    .iter()
                    .zip(c)
                    .map(|(a, c)| {
                        let v = a.velocity(c.q, c.theta);
                        ((a.x, a.y), (a.x + v.0 * horizon, a.y + v.1 * horizon))
                    })
                    .collect()
            };
            let base = ends(&nominal);
            let moved = ends(ctrl);
            let pts: Vec<(f64, f64)> = base.iter().chain(&moved).flat_map(|&(a, b)| [a, b]).collect();
            let f = Frame::fit(&pts);
            for (k, (&(a, b), &(_, m))) in base.iter().zip(&moved).enumerate() {
                let col = COLOURS[k % COLOURS.len()];
                line(&mut out, &f, a, b, r##"stroke="#999999" stroke-width="1" stroke-dasharray="4 4""##);
                line(&mut out, &f, a, m, &format!(r#"stroke="{col}" stroke-width="1.5""#));
                let p = f.map(a);
                let _ = writeln!(out, r#"<circle cx="{:.3}" cy="{:.3}" r="4" fill="{col}"/>"#, p.0, p.1);
                let _ = writeln!(out, r#"<text x="{:.3}" y="{:.3}" font-size="12" font-family="monospace">{k}</text>"#, p.0 + 6.0, p.1 - 6.0);
            }
        }
        PlotMode::VelocityPlane(i, j) => {
            if i >= j || j >= n {
                return Err(BenchError::UnknownPair(i, j));
            }
            let pg = pair_with_box(&inst.aircraft, i, j, &inst.bounds, inst.d)?;
            let bx = pg.bbox.expect("box attached");
            let (a, b) = (&inst.aircraft[i], &inst.aircraft[j]);
            let rel = |ci: &Control, cj: &Control| {
                let (vi, vj) = (a.velocity(ci.q, ci.theta), b.velocity(cj.q, cj.theta));
                (vi.0 - vj.0, vi.1 - vj.1)
            };
            let v_nom = rel(&nominal[i], &nominal[j]);
            let v_sol = rel(&ctrl[i], &ctrl[j]);
            let reach = 1.2 * [bx.vx_lo, bx.vx_hi, bx.vy_lo, bx.vy_hi, v_nom.0, v_nom.1, v_sol.0, v_sol.1].iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let f = Frame::fit(&[(-reach, -reach), (reach, reach)]);
            let axis = pg.axis();
            let alpha = pg.half_angle();
            let rot = |t: f64| {
                let (s, c) = t.sin_cos();
                (reach * 2.0 * (c * axis.0 - s * axis.1), reach * 2.0 * (s * axis.0 + c * axis.1))
            };
            let (r1, r2) = (rot(alpha), rot(-alpha));
            let poly = [(0.0, 0.0), r1, r2].map(|p| f.map(p));
            let _ = writeln!(
                out,
                r##"<polygon points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="#f4cccc" stroke="none"/>"##,
                poly[0].0, poly[0].1, poly[1].0, poly[1].1, poly[2].0, poly[2].1
            );
            let c = bx.corners().map(|p| f.map(p));
            let _ = writeln!(
                out,
                r##"<polygon points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="none" stroke="#000000" stroke-width="1.5"/>"##,
                c[0].0, c[0].1, c[1].0, c[1].1, c[2].0, c[2].1, c[3].0, c[3].1
            );
            let through = |dir: (f64, f64)| {
                let nrm = dir.0.hypot(dir.1).max(1e-300);
                let s = 2.0 * reach / nrm;
                ((-dir.0 * s, -dir.1 * s), (dir.0 * s, dir.1 * s))
            };
            // P is normal to the relative position, N runs along it.
            let lines = [
                ("P", (-pg.y, pg.x), "#7f7f7f"),
                ("N", (pg.x, pg.y), "#1f77b4"),
                ("R1", (pg.lower.gamma, pg.lower.phi), "#d62728"),
                ("R2", (pg.upper.gamma, pg.upper.phi), "#2ca02c"),
            ];
            for (name, dir, col) in lines {
                let (p, q) = through(dir);
                line(&mut out, &f, p, q, &format!(r#"stroke="{col}" stroke-width="1""#));
                let t = f.map((q.0 * 0.45, q.1 * 0.45));
                let _ = writeln!(out, r#"<text x="{:.3}" y="{:.3}" font-size="12" font-family="monospace" fill="{col}">{name}</text>"#, t.0 + 4.0, t.1 - 4.0);
            }
            for (p, col) in [(v_nom, "#999999"), (v_sol, "#000000")] {
                let m = f.map(p);
                let _ = writeln!(out, r#"<circle cx="{:.3}" cy="{:.3}" r="4" fill="{col}"/>"#, m.0, m.1);
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Pixel position of the solution point in a velocity-plane plot.
pub fn velocity_plane_point(svg: &str) -> Option<(f64, f64)> {
    let last = svg.lines().rev().find(|l| l.starts_with("<circle"))?;
    let num = |key: &str| -> Option<f64> {
        let s = last.split(&format!("{key}=\"")).nth(1)?;
        s.split('"').next()?.parse().ok()
    };
    Some((num("cx")?, num("cy")?))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), BenchError> {
    Ok(std::fs::write(path, text)?)
}
