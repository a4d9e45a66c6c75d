use super::*;
use alloc::vec;

const INF: f64 = f64::INFINITY;

#[test]
fn active_bound() {
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(3.0, INF, 0.0);
    qp.add_quadratic(x, x, 2.0);
    let r = solve_continuous(&qp).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x[0] - 3.0).abs() < 1e-7);
    assert!((r.objective - 9.0).abs() < 1e-6);
    assert!(verify_kkt(&qp, &r.x) < 1e-6);
}

#[test]
fn active_bound_as_row() {
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(-INF, INF, 0.0);
    let y = qp.add_variable(-INF, INF, 0.0);
    qp.add_quadratic(x, x, 2.0);
    qp.add_quadratic(y, y, 2.0);
    qp.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Ge, 6.0);
    let r = solve_continuous(&qp).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x[0] - 3.0).abs() < 1e-7 && (r.x[1] - 3.0).abs() < 1e-7);
    assert!((r.objective - 18.0).abs() < 1e-6);
    assert!(r.kkt_residual < 1e-6);
}

#[test]
fn equality_constrained_projection() {
    // (x-1)² + (y-2)² = ½(2x² + 2y²) - 2x - 4y + 5
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(-INF, INF, -2.0);
    let y = qp.add_variable(-INF, INF, -4.0);
    qp.add_quadratic(x, x, 2.0);
    qp.add_quadratic(y, y, 2.0);
    qp.constant = 5.0;
    qp.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.0);
    let r = solve_continuous(&qp).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.x[0].abs() < 1e-7 && (r.x[1] - 1.0).abs() < 1e-7);
    assert!((r.objective - 2.0).abs() < 1e-6);
    assert!(verify_kkt(&qp, &r.x) < 1e-6);
}

#[test]
fn unbounded_detection() {
    let mut qp = QuadraticProgram::new();
    qp.add_variable(-INF, INF, 1.0);
    let r = solve_continuous(&qp).unwrap();
    assert_eq!(r.status, SolveStatus::Unbounded);

    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(0.0, INF, -1.0);
    let y = qp.add_variable(0.0, INF, 0.0);
    qp.add_constraint(vec![(x, 1.0), (y, -1.0)], Sense::Le, 2.0);
    let r = solve_continuous(&qp).unwrap();
    assert_eq!(r.status, SolveStatus::Unbounded);
}

#[test]
fn infeasible_detection() {
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(0.0, INF, 1.0);
    let y = qp.add_variable(0.0, INF, 1.0);
    qp.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
    qp.add_constraint(vec![(x, 1.0), (y, 2.0)], Sense::Ge, 3.0);
    let r = solve_continuous(&qp).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);

    let mut qp = QuadraticProgram::new();
    qp.add_variable(2.0, 1.0, 0.0);
    assert_eq!(solve_continuous(&qp).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn linear_program() {
    // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0 -> (1.6, 1.2)
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(0.0, INF, -1.0);
    let y = qp.add_variable(0.0, INF, -1.0);
    qp.add_constraint(vec![(x, 1.0), (y, 2.0)], Sense::Le, 4.0);
    qp.add_constraint(vec![(x, 3.0), (y, 1.0)], Sense::Le, 6.0);
    let r = solve_continuous(&qp).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x[0] - 1.6).abs() < 1e-7 && (r.x[1] - 1.2).abs() < 1e-7);
    assert!((r.objective + 2.8).abs() < 1e-7);
    assert!(r.duals.iter().all(|&d| d >= -1e-9));
    assert!(verify_kkt(&qp, &r.x) < 1e-6);
}

#[test]
fn feasibility_problem_with_zero_objective() {
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(0.0, 10.0, 0.0);
    let y = qp.add_variable(0.0, 10.0, 0.0);
    qp.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 3.0);
    let r = solve_continuous(&qp).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x[0] + r.x[1] - 3.0).abs() < 1e-7);
}

#[test]
fn non_convex_rejected() {
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(-1.0, 1.0, 0.0);
    let y = qp.add_variable(-1.0, 1.0, 0.0);
    qp.add_quadratic(x, x, 1.0);
    qp.add_quadratic(y, y, 1.0);
    qp.add_quadratic(x, y, 2.0);
    assert!(matches!(solve_continuous(&qp), Err(Error::NotConvex(_))));
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(-1.0, 1.0, 0.0);
    qp.add_quadratic(x, x, -1.0);
    assert!(matches!(solve_continuous(&qp), Err(Error::NotConvex(_))));
}

#[test]
fn zero_binaries_match_continuous() {
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(3.0, INF, 0.0);
    qp.add_quadratic(x, x, 2.0);
    let a = solve_continuous(&qp).unwrap();
    let b = solve_with_binaries(&qp).unwrap();
    assert_eq!(a, b);
}

#[test]
fn complementarity_branch() {
    // x⁺ ≤ M(1-φ), x⁻ ≤ Mφ, reward x⁻, x⁺ + x⁻ ≤ 1 keeps it bounded.
    let m = 10.0;
    let mut qp = QuadraticProgram::new();
    let xp = qp.add_variable(0.0, INF, -0.5);
    let xn = qp.add_variable(0.0, INF, -1.0);
    let phi = qp.add_binary(0.0);
    qp.big_m = m;
    qp.add_constraint(vec![(xp, 1.0), (phi, m)], Sense::Le, m);
    qp.add_constraint(vec![(xn, 1.0), (phi, -m)], Sense::Le, 0.0);
    qp.add_constraint(vec![(xp, 1.0), (xn, 1.0)], Sense::Le, 1.0);
    let r = solve_with_binaries(&qp).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x[phi] - 1.0).abs() < 1e-9);
    assert!((r.x[xn] - 1.0).abs() < 1e-7 && r.x[xp].abs() < 1e-7);
    assert!((r.objective + 1.0).abs() < 1e-7);
}

#[test]
fn three_binaries_match_enumeration() {
    // Each binary gates a continuous variable with a different payoff.
    let mut qp = QuadraticProgram::new();
    let xs: Vec<usize> = (0..3).map(|k| qp.add_variable(0.0, 2.0, -(k as f64) - 1.0)).collect();
    let bs: Vec<usize> = (0..3).map(|k| qp.add_binary(1.2 + 0.9 * k as f64)).collect();
    for k in 0..3 {
        qp.add_quadratic(xs[k], xs[k], 1.0);
        qp.add_constraint(vec![(xs[k], 1.0), (bs[k], -2.0)], Sense::Le, 0.0);
    }
    qp.add_constraint(bs.iter().map(|&b| (b, 1.0)).collect(), Sense::Le, 2.0);
    let r = solve_with_binaries(&qp).unwrap();
    let mut best = f64::INFINITY;
    for mask in 0..8u32 {
        let mut fixed = qp.clone();
        for k in 0..3 {
            let v = ((mask >> k) & 1) as f64;
            fixed.lower[bs[k]] = v;
            fixed.upper[bs[k]] = v;
        }
        let s = solve_continuous(&fixed).unwrap();
        if s.status == SolveStatus::Optimal {
            best = best.min(s.objective);
        }
    }
    assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
    assert!((r.objective - best).abs() < 1e-6, "{} vs {best}", r.objective);
}

#[test]
fn too_many_binaries() {
    let mut qp = QuadraticProgram::new();
    for _ in 0..65 {
        qp.add_binary(1.0);
    }
    assert!(matches!(
        solve_with_binaries(&qp),
        Err(Error::TooManyBinaries { count: 65, limit: 64 })
    ));
}

#[test]
fn verify_kkt_examples() {
    // ½(2x² + 4y²) - 4x - 8y, minimum at (2, 2).
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(-INF, INF, -4.0);
    let y = qp.add_variable(-INF, INF, -8.0);
    qp.add_quadratic(x, x, 2.0);
    qp.add_quadratic(y, y, 4.0);
    assert_eq!(verify_kkt(&qp, &[2.0, 2.0]), 0.0);
    assert!(verify_kkt(&qp, &[2.1, 2.1]) > 0.0);

    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(3.0, INF, 0.0);
    qp.add_quadratic(x, x, 2.0);
    let r = solve_continuous(&qp).unwrap();
    assert!(verify_kkt(&qp, &r.x) <= 1e-6);
    assert!(verify_kkt(&qp, &[r.x[0] + 0.1]) > 0.0);
}

#[test]
fn argmin_invariant_under_cost_scaling() {
    let mut qp = QuadraticProgram::new();
    let x = qp.add_variable(0.0, 4.0, -3.0);
    let y = qp.add_variable(0.0, 4.0, 1.0);
    qp.add_quadratic(x, x, 1.0);
    qp.add_quadratic(x, y, 0.5);
    qp.add_quadratic(y, y, 2.0);
    qp.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Ge, 1.0);
    let base = solve_continuous(&qp).unwrap();
    for scale in [1e-3, 0.5, 7.0, 1e4] {
        let mut s = qp.clone();
        s.cost.iter_mut().for_each(|c| *c *= scale);
        s.quad.iter_mut().for_each(|e| e.2 *= scale);
        let r = solve_continuous(&s).unwrap();
        for j in 0..2 {
            assert!((r.x[j] - base.x[j]).abs() < 1e-6);
        }
    }
}
