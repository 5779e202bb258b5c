//! Benchmark instance generators and the instance file format.

use crate::geometry::{wrap_angle, AircraftState, ControlBounds, GeometryError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

pub const DEFAULT_D: f64 = 5.0;
pub const RADIUS: f64 = 200.0;
pub const SPEED: f64 = 500.0;
pub const SPACING: f64 = 15.0;
/// Random-stream offset separating flight-level draws from aircraft draws.
const FL_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("generation failed: {0}")]
    GenerationFailed(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("instance file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub family: String,
    pub seed: Option<u64>,
    pub d: f64,
    pub bounds: ControlBounds,
    pub aircraft: Vec<AircraftState>,
}

impl Instance {
    pub fn new(family: impl Into<String>, seed: Option<u64>, aircraft: Vec<AircraftState>) -> Result<Self, InstanceError> {
        let inst = Self { family: family.into(), seed, d: DEFAULT_D, bounds: ControlBounds::standard(), aircraft };
        inst.validate()?;
        Ok(inst)
    }

    /// Size label such as `CP-4`, `FP-5` (aircraft per stream) or `RCP-50-3`.
    pub fn id(&self) -> String {
        let n = self.aircraft.len();
        let per = match self.family.as_str() {
            "FP" => n / 2,
            "GP" => n / 4,
            _ => n,
        };
        let mut s = format!("{}-{}", self.family, per);
        if let Some(levels) = self.fl_count() {
            let _ = write!(s, "-{levels}");
        }
        if let Some(seed) = self.seed {
            let _ = write!(s, "#{seed}");
        }
        s
    }

    pub fn fl_count(&self) -> Option<i32> {
        self.aircraft.iter().filter_map(|a| a.fl_set.as_ref().and_then(|s| s.iter().max().copied())).max()
    }

    pub fn has_fl(&self) -> bool {
        !self.aircraft.is_empty() && self.aircraft.iter().all(|a| a.fl.is_some())
    }

    /// Validates every aircraft and the initial separation of every pair.
    pub fn validate(&self) -> Result<(), InstanceError> {
        self.bounds.validate()?;
        for a in &self.aircraft {
            a.validate()?;
        }
        if let Some((i, j, dist)) = first_violation(&self.aircraft, self.d) {
            return Err(GeometryError::InitialLossOfSeparation { i, j, dist, d: self.d }.into());
        }
        Ok(())
    }

    pub fn with_bounds(mut self, cb: ControlBounds) -> Self {
        self.bounds = cb;
        self
    }

    /// Sub-instance on the listed aircraft (in the given order).
    pub fn subset(&self, idx: &[usize]) -> Instance {
        Instance {
            family: self.family.clone(),
            seed: self.seed,
            d: self.d,
            bounds: self.bounds,
            aircraft: idx.iter().map(|&i| self.aircraft[i].clone()).collect(),
        }
    }

    /// JSON with fixed key order and 17 significant digits per float.
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n");
        let _ = writeln!(s, "  \"family\": {},", serde_json::to_string(&self.family).unwrap());
        let _ = writeln!(s, "  \"seed\": {},", self.seed.map_or("null".to_string(), |v| v.to_string()));
        let _ = writeln!(s, "  \"d_nm\": {},", fmt_f64(self.d));
        let _ = writeln!(
            s,
            "  \"bounds\": {{\"q\": [{}, {}], \"theta_deg\": [{}, {}]}},",
            fmt_f64(self.bounds.q_lo),
            fmt_f64(self.bounds.q_hi),
            fmt_f64(self.bounds.theta_lo.to_degrees()),
            fmt_f64(self.bounds.theta_hi.to_degrees())
        );
        s.push_str("  \"aircraft\": [");
        for (k, a) in self.aircraft.iter().enumerate() {
            s.push_str(if k == 0 { "\n" } else { ",\n" });
            let fl = a.fl.map_or("null".to_string(), |v| v.to_string());
            let set = a.fl_set.as_ref().map_or("null".to_string(), |v| {
                format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "))
            });
            let _ = write!(
                s,
                "    {{\"x\": {}, \"y\": {}, \"speed\": {}, \"heading\": {}, \"fl\": {}, \"fl_set\": {}}}",
                fmt_f64(a.x),
                fmt_f64(a.y),
                fmt_f64(a.speed),
                fmt_f64(a.heading),
                fl,
                set
            );
        }
        s.push_str(if self.aircraft.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
        s
    }

    pub fn from_json(text: &str) -> Result<Instance, InstanceError> {
        let f: InstanceFile = serde_json::from_str(text)?;
        let bounds = ControlBounds::new(f.bounds.q[0], f.bounds.q[1], f.bounds.theta_deg[0].to_radians(), f.bounds.theta_deg[1].to_radians())?;
        let aircraft = f
            .aircraft
            .into_iter()
            .map(|a| AircraftState { x: a.x, y: a.y, speed: a.speed, heading: a.heading, fl: a.fl, fl_set: a.fl_set })
            .collect();
        let inst = Instance { family: f.family, seed: f.seed, d: f.d_nm, bounds, aircraft };
        inst.validate()?;
        Ok(inst)
    }
}

/// Scientific notation with 17 significant digits; round-trips every f64.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // Normalizes negative zero so regenerated files compare equal.
        return "0.0000000000000000e0".to_string();
    }
    format!("{v:.16e}")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    family: String,
    seed: Option<u64>,
    d_nm: f64,
    bounds: BoundsFile,
    aircraft: Vec<AircraftFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    q: [f64; 2],
    theta_deg: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AircraftFile {
    x: f64,
    y: f64,
    speed: f64,
    heading: f64,
    fl: Option<i32>,
    fl_set: Option<Vec<i32>>,
}

fn first_violation(aircraft: &[AircraftState], d: f64) -> Option<(usize, usize, f64)> {
    for i in 0..aircraft.len() {
        for j in i + 1..aircraft.len() {
            let dist = (aircraft[i].x - aircraft[j].x).hypot(aircraft[i].y - aircraft[j].y);
            if dist < d {
                return Some((i, j, dist));
            }
        }
    }
    None
}

fn check_n(n: usize, min: usize) -> Result<(), InstanceError> {
    if n < min {
        return Err(InstanceError::BadParameter(format!("need at least {min} aircraft, got {n}")));
    }
    Ok(())
}

fn circle_point(k: usize, n: usize, radius: f64) -> (f64, f64, f64) {
    let ang = 2.0 * PI * k as f64 / n as f64;
    (radius * ang.cos(), radius * ang.sin(), wrap_angle(ang + PI))
}

/// Circle problem: `n` aircraft evenly spaced on a circle, all heading to its centre.
pub fn gen_cp(n: usize) -> Result<Instance, InstanceError> {
    gen_cp_with(n, RADIUS, SPEED)
}

pub fn gen_cp_with(n: usize, radius: f64, speed: f64) -> Result<Instance, InstanceError> {
    check_n(n, 2)?;
    let aircraft = (0..n)
        .map(|k| {
            let (x, y, h) = circle_point(k, n, radius);
            AircraftState::new(x, y, speed, h)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Instance::new("CP", None, aircraft)
}

/// Random circle problem: the circle layout with speeds uniform in
/// [486, 594] NM/h and headings perturbed uniformly within 30 degrees.
///
/// Aircraft `k` draws speed then heading perturbation from ChaCha8 seeded
/// with `seed` on stream `k`, so every aircraft is independent of `n`.
pub fn gen_rcp(n: usize, seed: u64) -> Result<Instance, InstanceError> {
    gen_rcp_with(n, seed, RADIUS, (486.0, 594.0), PI / 6.0)
}

pub fn gen_rcp_with(n: usize, seed: u64, radius: f64, speeds: (f64, f64), jitter: f64) -> Result<Instance, InstanceError> {
    check_n(n, 2)?;
    let mut aircraft: Vec<AircraftState> = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let (x, y, h) = circle_point(k, n, radius);
        let speed = rng.gen_range(speeds.0..=speeds.1);
        let dh = rng.gen_range(-jitter..=jitter);
        // Positions do not depend on the draws, so a clash cannot be resampled away.
        if aircraft.iter().any(|a| (a.x - x).hypot(a.y - y) < DEFAULT_D) {
            return Err(InstanceError::GenerationFailed(format!("aircraft {k} starts within {DEFAULT_D} NM of another")));
        }
        aircraft.push(AircraftState::new(x, y, speed, h + dh)?);
    }
    Instance::new("RCP", Some(seed), aircraft)
}

/// One stream flying along `heading` toward `centre`. Aircraft 0 sits on the
/// circle and each next one is `spacing` closer to `centre`.
fn stream(n: usize, heading: f64, centre: (f64, f64), radius: f64, spacing: f64, speed: f64) -> Result<Vec<AircraftState>, GeometryError> {
    (0..n)
        .map(|k| {
            let r = radius - spacing * k as f64;
            AircraftState::new(centre.0 - r * heading.cos(), centre.1 - r * heading.sin(), speed, heading)
        })
        .collect()
}

fn flow(n: usize, alpha: f64, centre: (f64, f64)) -> Result<Vec<AircraftState>, GeometryError> {
    let mut list = stream(n, 0.0, centre, RADIUS, SPACING, SPEED)?;
    list.extend(stream(n, alpha, centre, RADIUS, SPACING, SPEED)?);
    Ok(list)
}

/// Flow problem: two streams of `n` aircraft flying east and at `alpha`
/// to it, crossing at the origin.
pub fn gen_fp(n: usize) -> Result<Instance, InstanceError> {
    gen_fp_with(n, PI / 6.0)
}

pub fn gen_fp_with(n: usize, alpha: f64) -> Result<Instance, InstanceError> {
    check_n(n, 2)?;
    Instance::new("FP", None, flow(n, alpha, (0.0, 0.0))?)
}

/// Grid problem: two perpendicular flows, the second shifted by 15 NM along
/// each axis (towards +45 degrees).
pub fn gen_gp(n: usize) -> Result<Instance, InstanceError> {
    check_n(n, 2)?;
    let mut list = flow(n, PI / 2.0, (0.0, 0.0))?;
    list.extend(flow(n, PI / 2.0, (SPACING, SPACING))?);
    Instance::new("GP", None, list)
}

/// Draws a base level uniformly from `1..=fl_count` for every aircraft and
/// sets its reachable levels to the neighbouring ones that exist.
pub fn assign_fls(inst: &Instance, fl_count: i32, seed: u64) -> Result<Instance, InstanceError> {
    if fl_count < 1 {
        return Err(InstanceError::BadParameter("fl_count must be at least 1".into()));
    }
    let mut out = inst.clone();
    for (k, a) in out.aircraft.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(FL_STREAM_BASE + k as u64);
        let fl = rng.gen_range(1..=fl_count);
        let set: Vec<i32> = (fl - 1..=fl + 1).filter(|&l| l >= 1 && l <= fl_count).collect();
        a.fl = Some(fl);
        a.fl_set = Some(set);
    }
    if out.seed.is_none() {
        out.seed = Some(seed);
    }
    out.validate()?;
    Ok(out)
}

/// Generates a named family; `n` is aircraft per stream for FP and GP.
pub fn generate(family: &str, n: usize, seed: u64, fl_count: Option<i32>) -> Result<Instance, InstanceError> {
    let base = match family.to_ascii_uppercase().as_str() {
        "CP" => gen_cp(n)?,
        "RCP" => gen_rcp(n, seed)?,
        "FP" => gen_fp(n)?,
        "GP" => gen_gp(n)?,
        other => return Err(InstanceError::BadParameter(format!("unknown family {other}"))),
    };
    match fl_count {
        Some(c) => assign_fls(&base, c, seed),
        None => Ok(base),
    }
}
