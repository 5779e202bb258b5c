use acrp::bench::{self, BenchParams, PlotMode, SolutionFile};
use acrp::fl::{solve_2dfl, FlParams, FlStatus};
use acrp::geometry::{preprocess, ControlBounds};
use acrp::instances::{generate, Instance};
use acrp::model::{build_2d_disjunctive, build_2d_shadow};
use acrp::solver::{SeparationKind, SolveParams, SolveStatus};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "acrp", version, about = "Aircraft conflict resolution by speed, heading and flight-level control")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Disjunctive,
    Shadow,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Trajectories,
    VelocityPlane,
}

#[derive(clap::Args)]
struct Bounds {
    /// Heading range in degrees, symmetric.
    #[arg(long, default_value_t = 30.0)]
    heading_deg: f64,
    /// Speed range in percent as LO:HI.
    #[arg(long, default_value = "-6:3", allow_hyphen_values = true)]
    speed_pct: String,
}

impl Bounds {
    fn parse(&self) -> Result<ControlBounds, String> {
        let (lo, hi) = self.speed_pct.split_once(':').ok_or("--speed-pct expects LO:HI")?;
        let lo: f64 = lo.trim().parse().map_err(|_| format!("bad speed percent {lo}"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| format!("bad speed percent {hi}"))?;
        ControlBounds::from_percent_deg(lo, hi, self.heading_deg).map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a benchmark instance (CP, FP, GP or RCP).
    Gen {
        family: String,
        /// Aircraft count (per stream for FP and GP).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        fl_count: Option<i32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an instance in 2D, or with flight levels under --fl.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Form::Disjunctive)]
        formulation: Form,
        #[arg(long, default_value_t = 0.5)]
        w: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        /// Seconds (per flight level under --fl).
        #[arg(long, default_value_t = 600.0)]
        time_limit: f64,
        #[command(flatten)]
        bounds: Bounds,
        #[arg(long)]
        fl: bool,
        /// Solution JSON path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the 2D model in LP-style text.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
        /// Write solver events as JSON lines.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run a named benchmark suite to CSV.
    Bench {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 600.0)]
        time_limit: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        /// Directory for per-run event logs.
        #[arg(long)]
        events_dir: Option<PathBuf>,
    },
    /// Solve for w = 0.1, 0.2, ..., 0.9 and tabulate both deviation totals.
    SweepW {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 600.0)]
        time_limit: f64,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Draw an instance and optionally a solution as SVG.
    Plot {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Trajectories)]
        mode: Mode,
        /// Pair `I,J` for the velocity plane.
        #[arg(long)]
        pair: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_instance(p: &Path) -> Result<Instance, String> {
    let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    Instance::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))
}

fn write(p: &Path, text: &str) -> Result<(), String> {
    std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))
}

fn secs(s: f64) -> Result<Duration, String> {
    Duration::try_from_secs_f64(s).map_err(|_| format!("bad time limit {s}"))
}

fn run(cmd: Cmd) -> Result<u8, String> {
    match cmd {
        Cmd::Gen { family, n, seed, fl_count, out } => {
            let inst = generate(&family, n, seed, fl_count).map_err(|e| e.to_string())?;
            write(&out, &inst.to_json())?;
            Ok(0)
        }
        Cmd::Solve { instance, formulation, w, eps, time_limit, bounds, fl, out, dump_lp, events } => {
            let inst = read_instance(&instance)?;
            let cb = bounds.parse()?;
            let inst = inst.with_bounds(cb);
            let mut sp = SolveParams::new(cb);
            sp.formulation = match formulation {
                Form::Disjunctive => SeparationKind::Disjunctive,
                Form::Shadow => SeparationKind::Shadow,
            };
            sp.w = w;
            sp.eps = eps;
            sp.time_limit = secs(time_limit)?;
            if let Some(path) = dump_lp {
                let part = preprocess(&inst.aircraft, &cb, inst.d).map_err(|e| e.to_string())?;
                let m = match sp.formulation {
                    SeparationKind::Disjunctive => build_2d_disjunctive(&inst, &part.separable, w, &cb, true),
                    SeparationKind::Shadow => build_2d_shadow(&inst, &part.separable, w, &cb, true),
                }
                .map_err(|e| e.to_string())?;
                write(&path, &m.to_lp_string())?;
            }
            let (file, code, log) = if fl {
                let s = solve_2dfl(&inst, &FlParams::new(sp)).map_err(|e| e.to_string())?;
                let code = match s.status {
                    FlStatus::Solved => 0,
                    FlStatus::Infeasible => 2,
                    FlStatus::GlobalTimeOut | FlStatus::IterationLimit => 3,
                };
                let ev: Vec<_> = s.per_level.iter().flat_map(|l| l.outcome.events.iter().cloned()).collect();
                (SolutionFile::from_fl(&s), code, ev)
            } else {
                let o = acrp::solver::solve_2d(&inst, &sp).map_err(|e| e.to_string())?;
                let code = match o.status {
                    SolveStatus::Optimal | SolveStatus::Feasible => 0,
                    SolveStatus::Infeasible => 2,
                    SolveStatus::TimeOut => 3,
                };
                (SolutionFile::from_outcome(&inst, &o), code, o.events)
            };
            if let Some(path) = events {
                write(&path, &bench::events_jsonl(&log))?;
            }
            match out {
                Some(path) => write(&path, &file.to_json())?,
                None => print!("{}", file.to_json()),
            }
            Ok(code)
        }
        Cmd::Bench { suite, out, time_limit, eps, events_dir } => {
            let spec = bench::suite(&suite).map_err(|e| e.to_string())?;
            if let Some(dir) = &events_dir {
                std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            }
            let p = BenchParams { eps, time_limit: secs(time_limit)?, events_dir, ..BenchParams::default() };
            let rows = bench::run_suite(&spec, &p);
            write(&out, &bench::records_to_csv(&rows).map_err(|e| e.to_string())?)?;
            Ok(0)
        }
        Cmd::SweepW { instance, out, eps, time_limit, bounds } => {
            let inst = read_instance(&instance)?;
            let cb = bounds.parse()?;
            let mut sp = SolveParams::new(cb);
            sp.eps = eps;
            sp.time_limit = secs(time_limit)?;
            let ws: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
            let rows = bench::sweep_w(&inst.with_bounds(cb), &ws, &sp).map_err(|e| e.to_string())?;
            write(&out, &bench::sweep_to_csv(&rows).map_err(|e| e.to_string())?)?;
            Ok(0)
        }
        Cmd::Plot { instance, solution, mode, pair, out } => {
            let inst = read_instance(&instance)?;
            let sol = match solution {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                    Some(SolutionFile::from_json(&text).map_err(|e| e.to_string())?.controls())
                }
                None => None,
            };
            let mode = match mode {
                Mode::Trajectories => PlotMode::Trajectories,
                Mode::VelocityPlane => {
                    let spec = pair.ok_or("--pair I,J is required for the velocity plane")?;
                    let (i, j) = spec.split_once(',').ok_or("--pair expects I,J")?;
                    let i = i.trim().parse().map_err(|_| format!("bad pair index {i}"))?;
                    let j = j.trim().parse().map_err(|_| format!("bad pair index {j}"))?;
                    PlotMode::VelocityPlane(i, j)
                }
            };
            let svg = bench::plot(&inst, sol.as_deref().filter(|c| !c.is_empty()), mode).map_err(|e| e.to_string())?;
            write(&out, &svg)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
