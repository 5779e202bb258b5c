use acrp::geometry::{pair_geometry_raw, relative_state, AircraftState, ControlBounds, VelocityBox};
use acrp::instances::{gen_cp, gen_rcp, Instance};
use acrp::model::*;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Full variable vector for per-aircraft controls, with binaries chosen to
/// satisfy whichever separation block holds.
fn point(m: &MixedIntegerModel, inst: &Instance, ctrl: &[(f64, f64)]) -> Vec<f64> {
    let mut x = vec![0.0; m.vars.len()];
    for (a, &(q, t)) in m.aircraft.iter().zip(ctrl) {
        x[a.dx.0] = q * t.cos();
        x[a.dy.0] = q * t.sin();
    }
    for p in &m.pairs {
        let (a, b) = (&inst.aircraft[p.i], &inst.aircraft[p.j]);
        let (va, vb) = (a.velocity(ctrl[p.i].0, ctrl[p.i].1), b.velocity(ctrl[p.j].0, ctrl[p.j].1));
        let (vx, vy) = (va.0 - vb.0, va.1 - vb.1);
        x[p.vx.0] = vx;
        x[p.vy.0] = vy;
        let pg = relative_state(a, b, inst.d).unwrap();
        if p.binaries.len() == 1 {
            x[p.binaries[0].0] = pg.disjunct_one(vx, vy, 0.0) as u8 as f64;
        } else {
            let rows = shadow_rows(&pg);
            for (k, &s) in p.binaries.iter().enumerate() {
                let on = rows.iter().filter(|r| r.0 as usize == k + 1).all(|r| r.1 * vx + r.2 * vy <= 0.0);
                x[s.0] = on as u8 as f64;
            }
        }
    }
    x
}

#[test]
fn cp4_variable_counts() {
    let inst = gen_cp(4).unwrap();
    let cb = ControlBounds::standard();
    let m = build_2d_disjunctive(&inst, &all_pairs(4), 0.5, &cb, true).unwrap();
    let count = |f: fn(&Meaning) -> bool| m.vars.iter().filter(|v| f(&v.meaning)).count();
    assert_eq!(count(|k| matches!(k, Meaning::DeltaX(_) | Meaning::DeltaY(_))), 8);
    assert_eq!(count(|k| matches!(k, Meaning::Vx(..) | Meaning::Vy(..))), 12);
    assert_eq!(m.binaries().len(), 6);
    assert!(m.lint().is_ok());
    let s = build_2d_shadow(&inst, &all_pairs(4), 0.5, &cb, false).unwrap();
    assert_eq!(s.binaries().len(), 24);
    assert_eq!(s.quad.len(), 4);
    assert!(s.lint().is_ok());
}

#[test]
fn objective_values() {
    let inst = gen_cp(5).unwrap();
    let m = build_2d_disjunctive(&inst, &all_pairs(5), 0.3, &ControlBounds::standard(), true).unwrap();
    let x = point(&m, &inst, &[(1.0, 0.0); 5]);
    assert_eq!(m.objective.eval(&x), 0.0);

    let one = Instance::new("CP", None, vec![AircraftState::new(0.0, 0.0, 500.0, 0.0).unwrap()]).unwrap();
    let m = build_2d_disjunctive(&one, &[], 0.5, &ControlBounds::standard(), true).unwrap();
    let mut x = vec![0.0; m.vars.len()];
    x[m.aircraft[0].dx.0] = 0.97;
    x[m.aircraft[0].dy.0] = 0.1;
    assert_abs_diff_eq!(m.objective.eval(&x), 0.00545, epsilon = 1e-15);
    assert!(matches!(build_2d_disjunctive(&one, &[], 1.0, &ControlBounds::standard(), true), Err(ModelError::BadWeight(_))));
}

#[test]
fn shadow_tangent_and_big_m() {
    let pg = pair_geometry_raw(30.0, 0.0, 5.0).unwrap();
    let alpha = pg.half_angle();
    assert_abs_diff_eq!(alpha, (1.0f64 / 6.0).asin(), epsilon = 1e-15);
    assert_abs_diff_eq!(alpha, 0.16745, epsilon = 1e-5);
    // Each cone edge, drawn from the relative position, is tangent to the
    // protection circle.
    let (ax, ay) = pg.axis();
    for s in [alpha, -alpha] {
        let (bx, by) = (ax * s.cos() - ay * s.sin(), ax * s.sin() + ay * s.cos());
        assert_abs_diff_eq!((pg.x * by - pg.y * bx).abs(), 5.0, epsilon = 1e-12);
    }
    let mut pg = pair_geometry_raw(-30.0, 0.0, 5.0).unwrap();
    pg.bbox = Some(VelocityBox { vx_lo: -1100.0, vx_hi: 1100.0, vy_lo: -1100.0, vy_hi: 1100.0 });
    assert_abs_diff_eq!(shadow_big_ms(&pg).0, 1100.0, epsilon = 1e-9);
}

#[test]
fn shadow_and_disjunctive_agree_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 10_000 {
        let r = rng.gen_range(5.5..200.0);
        let ang = rng.gen_range(-PI..PI);
        let pg = pair_geometry_raw(r * ang.cos(), r * ang.sin(), 5.0).unwrap();
        let (vx, vy): (f64, f64) = (rng.gen_range(-1100.0..1100.0), rng.gen_range(-1100.0..1100.0));
        let v = (vx * vx + vy * vy).sqrt();
        // Points on a wedge edge are decided by rounding alone.
        if pg.lower.eval(vx, vy).abs() < 1e-9 * v || pg.upper.eval(vx, vy).abs() < 1e-9 * v {
            continue;
        }
        let disj = pg.disjunct_one(vx, vy, 0.0) || pg.disjunct_zero(vx, vy, 0.0);
        assert_eq!(disj, shadow_feasible(&pg, vx, vy, 0.0), "p=({}, {}) v=({vx}, {vy})", pg.x, pg.y);
        checked += 1;
    }
}

#[test]
fn model_feasibility_tracks_the_conflict_oracle() {
    let inst = gen_rcp(6, 2).unwrap();
    let cb = ControlBounds::standard();
    let pairs = all_pairs(6);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for build in [build_2d_disjunctive, build_2d_shadow] {
        let m = build(&inst, &pairs, 0.5, &cb, false).unwrap();
        let (mut sep, mut conf) = (0, 0);
        for _ in 0..2000 {
            let ctrl: Vec<(f64, f64)> = (0..6).map(|_| (rng.gen_range(cb.q_lo..cb.q_hi), rng.gen_range(cb.theta_lo..cb.theta_hi))).collect();
            let x = point(&m, &inst, &ctrl);
            let a = &inst.aircraft;
            let clash = pairs.iter().any(|&(i, j)| {
                let pg = relative_state(&a[i], &a[j], inst.d).unwrap();
                let (vi, vj) = (a[i].velocity(ctrl[i].0, ctrl[i].1), a[j].velocity(ctrl[j].0, ctrl[j].1));
                acrp::geometry::is_conflict(&pg, vi.0 - vj.0, vi.1 - vj.1)
            });
            let ok = m.max_violation(&x) <= 1e-9;
            assert_eq!(ok, !clash);
            if clash {
                conf += 1;
            } else {
                sep += 1;
            }
        }
        assert!(sep > 0 && conf > 0, "{sep} {conf}");
    }
}

#[test]
fn relaxation_contains_full_model() {
    let inst = gen_cp(4).unwrap();
    let cb = ControlBounds::standard();
    let full = build_2d_disjunctive(&inst, &all_pairs(4), 0.5, &cb, false).unwrap();
    let relax = build_2d_disjunctive(&inst, &all_pairs(4), 0.5, &cb, true).unwrap();
    assert_eq!(full.vars, relax.vars);
    assert_eq!(full.speed_lower.len(), 4);
    assert!(relax.quad.is_empty() && relax.speed_lower.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3000 {
        let x: Vec<f64> = full.vars.iter().map(|v| rng.gen_range(v.lo..=v.hi)).collect();
        if full.max_violation(&x) <= 1e-9 {
            assert!(relax.max_violation(&x) <= 1e-9);
        }
        assert!(relax.max_violation(&x) <= full.max_violation(&x));
    }
}

#[test]
fn linter_rejects_broken_models() {
    let mut m = MixedIntegerModel::new(Formulation::Disjunctive2D);
    m.add_var(VarKind::Continuous, 0.0, 1.0, Meaning::DeltaX(0));
    m.add_var(VarKind::Continuous, 0.0, 1.0, Meaning::DeltaX(0));
    assert!(m.lint().is_err());

    let mut m = MixedIntegerModel::new(Formulation::Disjunctive2D);
    let b = m.add_var(VarKind::Continuous, 0.0, 1.0, Meaning::DeltaY(0));
    m.quad.push(QuadConstraint { name: "bad".into(), quad: vec![(b, b, -1.0)], linear: vec![], rhs: 0.0 });
    assert!(matches!(m.lint(), Err(ModelError::Lint(s)) if s.contains("bad")));

    let mut m = MixedIntegerModel::new(Formulation::Disjunctive2D);
    let c = m.add_var(VarKind::Continuous, 0.0, 1.0, Meaning::DeltaX(0));
    m.indicators.push(IndicatorConstraint { conditions: vec![(c, true)], constraint: LinearConstraint::new("i", vec![(c, 1.0)], Sense::Le, 0.0) });
    assert!(m.lint().is_err());
}

#[test]
fn lp_dump_names_every_constraint() {
    let inst = gen_cp(3).unwrap();
    let cb = ControlBounds::standard();
    let d = build_2d_disjunctive(&inst, &all_pairs(3), 0.5, &cb, true).unwrap();
    let s = build_2d_shadow(&inst, &all_pairs(3), 0.5, &cb, true).unwrap();
    let (td, ts) = (d.to_lp_string(), s.to_lp_string());
    assert_eq!(td, d.to_lp_string());
    for c in d.linear.iter().map(|c| &c.name).chain(d.indicators.iter().map(|i| &i.constraint.name)) {
        assert!(td.contains(&format!("  {c}:")), "{c}");
    }
    assert!(td.contains("z_0_1 = 1 ->") && ts.contains("sigma3_0_1 = 1 ->"));
    assert!(ts.contains("shadow_any_1_2: + 1.000000000 sigma1_1_2"));
}

fn fl_pair() -> Instance {
    let a = AircraftState::new(-100.0, 0.0, 500.0, 0.0).unwrap().with_fl(3, vec![2, 3, 4]).unwrap();
    let b = AircraftState::new(100.0, 0.0, 500.0, PI).unwrap().with_fl(3, vec![2, 3, 4]).unwrap();
    Instance::new("CP", None, vec![a, b]).unwrap()
}

#[test]
fn flight_level_extension() {
    let inst = fl_pair();
    let cb = ControlBounds::standard();
    let mut m = build_2d_disjunctive(&inst, &[(0, 1)], 0.5, &cb, true).unwrap();
    build_fl_model(&mut m, &inst, &[(0, 1)]).unwrap();
    assert!(m.lint().is_ok());
    let one = m.linear.iter().find(|c| c.name == "one_level_0").unwrap();
    assert_eq!((one.terms.len(), one.sense, one.rhs), (3, Sense::Eq, 1.0));

    let phi = m.find(Meaning::Phi(0, 1)).unwrap();
    let mut x = point(&m, &inst, &[(1.0, 0.0); 2]);
    x[m.find(Meaning::Rho(0, 3)).unwrap().0] = 1.0;
    x[m.find(Meaning::Rho(1, 3)).unwrap().0] = 1.0;
    let share = m.linear.iter().find(|c| c.name == "share_0_1_3").unwrap();
    assert!(share.violation(&x) > 0.5);
    x[phi.0] = 1.0;
    assert_eq!(share.violation(&x), 0.0);
    // Head-on at nominal: separation is violated while both share a level...
    assert!(m.max_violation(&x) > 1.0);
    // ...and inactive once they do not.
    x[m.find(Meaning::Rho(1, 3)).unwrap().0] = 0.0;
    x[m.find(Meaning::Rho(1, 4)).unwrap().0] = 1.0;
    x[phi.0] = 0.0;
    assert!(m.max_violation(&x) <= 1e-12);

    let plain = gen_cp(2).unwrap();
    let mut m = build_2d_disjunctive(&plain, &[(0, 1)], 0.5, &cb, true).unwrap();
    assert_eq!(build_fl_model(&mut m, &plain, &[(0, 1)]), Err(ModelError::MissingFLData(0)));
}

#[test]
fn control_recovery() {
    assert_eq!(recover_controls(1.0, 0.0).unwrap(), (1.0, 0.0));
    let (q, t) = recover_controls(0.94 * (PI / 6.0).cos(), 0.94 * (PI / 6.0).sin()).unwrap();
    assert_abs_diff_eq!(q, 0.94, epsilon = 1e-15);
    assert_abs_diff_eq!(t, PI / 6.0, epsilon = 1e-15);
    assert!(recover_controls(0.0, 0.0).is_err());
}

proptest! {
    #[test]
    fn controls_round_trip(q in 0.94f64..1.03, t in -PI / 6.0..PI / 6.0) {
        let (q2, t2) = recover_controls(q * t.cos(), q * t.sin()).unwrap();
        prop_assert!((q - q2).abs() <= 1e-12 && (t - t2).abs() <= 1e-12);
    }

    #[test]
    fn nominal_controls_cost_nothing(n in 2usize..7, w in 0.01f64..0.99) {
        let inst = gen_cp(n).unwrap();
        let m = build_2d_shadow(&inst, &all_pairs(n), w, &ControlBounds::standard(), false).unwrap();
        let x = point(&m, &inst, &vec![(1.0, 0.0); n]);
        prop_assert_eq!(m.objective.eval(&x), 0.0);
    }
}
