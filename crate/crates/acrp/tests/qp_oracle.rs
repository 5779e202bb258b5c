use acrp::solver::qp::{kkt_residuals, solve_qp, QpError, QpProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive active-set oracle: every subset of inequality rows is tried as
/// a set of equalities; KKT points that are primal and dual feasible are
/// optimal for a convex QP, and the best objective among them is returned.
fn brute_force(h: &DMatrix<f64>, c: &DVector<f64>, rows: &[(DVector<f64>, f64)]) -> Option<f64> {
    let n = c.len();
    let m = rows.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        let act: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let k = act.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for i in 0..n {
            rhs[i] = -c[i];
        }
        for (a, &r) in act.iter().enumerate() {
            for i in 0..n {
                kkt[(i, n + a)] = -rows[r].0[i];
                kkt[(n + a, i)] = rows[r].0[i];
            }
            rhs[n + a] = rows[r].1;
        }
        let svd = kkt.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-11) else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-7 {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let lam = sol.rows(n, k).into_owned();
        if lam.iter().any(|&l| l < -1e-8) {
            continue;
        }
        if rows.iter().any(|(a, b)| a.dot(&x) < b - 1e-8) {
            continue;
        }
        let obj = 0.5 * x.dot(&(h * &x)) + c.dot(&x);
        best = Some(best.map_or(obj, |b: f64| b.min(obj)));
    }
    best
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, rank: usize, m: usize) -> (QpProblem, Vec<(DVector<f64>, f64)>) {
    let b = DMatrix::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = b.transpose() * b;
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let mut qp = QpProblem::new(n);
    qp.h = h;
    qp.c = c;
    let mut rows = Vec::new();
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rhs = rng.gen_range(-1.0..0.5);
        rows.push((DVector::from_column_slice(&a), rhs));
        qp.add_ge(a, rhs);
    }
    // Box bounds keep semidefinite instances bounded.
    for i in 0..n {
        qp.lo[i] = -2.0;
        qp.hi[i] = 2.0;
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        rows.push((e.clone(), -2.0));
        rows.push((-e, -2.0));
    }
    (qp, rows)
}

#[test]
fn matches_exhaustive_active_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut solved = 0;
    for trial in 0..300 {
        let n = rng.gen_range(1..=4);
        let rank = if trial % 3 == 0 { rng.gen_range(0..n) } else { n + 1 };
        let m = rng.gen_range(0..=4);
        let (qp, rows) = random_problem(&mut rng, n, rank, m);
        let oracle = brute_force(&qp.h, &qp.c, &rows);
        match solve_qp(&qp, None) {
            Ok(s) => {
                let want = oracle.expect("oracle found no KKT point for a solved QP");
                assert!((s.objective - want).abs() <= 1e-7 * (1.0 + want.abs()), "trial {trial}: {} vs {want}", s.objective);
                let r = kkt_residuals(&qp, &s);
                assert!(r.iter().all(|&v| v <= 1e-8), "trial {trial}: residuals {r:?}");
                solved += 1;
            }
            Err(QpError::Infeasible(_)) => assert!(oracle.is_none(), "trial {trial}: solver says infeasible"),
            Err(e) => panic!("trial {trial}: {e}"),
        }
    }
    assert!(solved > 150);
}

#[test]
fn larger_problems_meet_kkt_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..100 {
        let n = rng.gen_range(5..=10);
        let rank = if trial % 2 == 0 { n / 2 } else { n + 2 };
        let (qp, _) = random_problem(&mut rng, n, rank, 12);
        match solve_qp(&qp, None) {
            Ok(s) => {
                let r = kkt_residuals(&qp, &s);
                assert!(r.iter().all(|&v| v <= 1e-8), "trial {trial}: residuals {r:?}");
                let again = solve_qp(&qp, None).unwrap();
                assert_eq!(s.x, again.x);
            }
            Err(QpError::Infeasible(_)) => {}
            Err(e) => panic!("trial {trial}: {e}"),
        }
    }
}
