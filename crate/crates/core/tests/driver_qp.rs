use dip_core::driver::{initial_points, solve, SolverOptions, Status};
use dip_core::oracle::{solve_centralized, REFERENCE_TOL};
use dip_core::{CooMatrix, PartitionedNlp, QuadraticFunction, QuadraticSubsystem, Subsystem};

/// min 1/2 x1^2 + 1/2 x2^2  s.t.  x1 + x2 = 2,  x1 <= 0.8, one variable per
/// subsystem. By hand: x = (0.8, 1.2), lambda = -1.2, mu = 0.4, f = 1.04.
fn hand_qp() -> PartitionedNlp {
    let mut f1 = QuadraticFunction::new();
    f1.add_product(0, 0, 0.5);
    let mut h1 = QuadraticFunction::constant(-0.8);
    h1.add_linear(0, 1.0);
    let mut f2 = QuadraticFunction::new();
    f2.add_product(0, 0, 0.5);
    let s1 = QuadraticSubsystem::new(1, f1, vec![], vec![h1]);
    let s2 = QuadraticSubsystem::new(1, f2, vec![], vec![]);
    let a = || CooMatrix::from_triplets(1, 1, vec![(0, 0, 1.0)]);
    PartitionedNlp::new(
        vec![
            Subsystem::new(Box::new(s1), a()).unwrap(),
            Subsystem::new(Box::new(s2), a()).unwrap(),
        ],
        vec![2.0],
    )
    .unwrap()
}

fn options() -> SolverOptions {
    SolverOptions {
        tol: 1e-8,
        ..SolverOptions::default()
    }
}

#[test]
fn hand_solvable_qp_converges_to_the_hand_solution() {
    let p = hand_qp();
    let o = options();
    let start = initial_points(&p, vec![vec![0.0], vec![0.0]], o.delta0).unwrap();
    let r = solve(&p, &o, start, vec![0.0], None).unwrap();
    assert_eq!(r.status, Status::Converged);
    assert!(r.iterations() <= 30, "{} iterations", r.iterations());
    assert!(r.final_metrics.kkt0_inf <= 1e-8);
    assert!((r.points[0].x[0] - 0.8).abs() < 1e-7);
    assert!((r.points[1].x[0] - 1.2).abs() < 1e-7);
    assert!((r.final_metrics.objective - 1.04).abs() < 1e-7);
    assert!((r.lambda[0] + 1.2).abs() < 1e-6);
    assert!((r.points[0].mu[0] - 0.4).abs() < 1e-6);
}

#[test]
fn iterates_stay_interior_and_barrier_decreases() {
    let p = hand_qp();
    let o = options();
    let start = initial_points(&p, vec![vec![0.0], vec![0.0]], o.delta0).unwrap();
    let r = solve(&p, &o, start, vec![0.0], None).unwrap();
    for rec in &r.records {
        assert!(rec.metrics.min_interior > 0.0);
    }
    for w in r.records.windows(2) {
        assert!(w[1].delta < w[0].delta || w[1].delta == o.delta_min);
    }
}

#[test]
fn default_initialization_of_slacks_and_multipliers() {
    let p = hand_qp();
    // h(3) = 2.2 > 0, so v = max(1, 1 - 2.2) = 1; h(-4) = -4.8, v = 5.8
    let pts = initial_points(&p, vec![vec![3.0], vec![0.0]], 0.1).unwrap();
    assert_eq!(pts[0].v, vec![1.0]);
    assert_eq!(pts[0].mu, vec![0.1]);
    let pts = initial_points(&p, vec![vec![-4.0], vec![0.0]], 0.1).unwrap();
    assert!((pts[0].v[0] - 5.8).abs() < 1e-15);
    assert!((pts[0].mu[0] - 0.1 / 5.8).abs() < 1e-15);
    assert!(pts[1].v.is_empty() && pts[1].gamma.is_empty());
}

#[test]
fn centralized_oracle_agrees() {
    let p = hand_qp();
    let o = SolverOptions {
        tol: REFERENCE_TOL,
        ..SolverOptions::default()
    };
    let start = initial_points(&p, vec![vec![0.0], vec![0.0]], o.delta0).unwrap();
    let c = solve_centralized(&p, &o, start, vec![0.0], None).unwrap();
    assert_eq!(c.status, Status::Converged);
    assert!((c.final_metrics.objective - 1.04).abs() < 1e-7);
    assert_eq!(c.total_inner_iterations(), 0);
}

#[test]
fn runs_are_deterministic() {
    let p = hand_qp();
    let o = options();
    let run = || {
        let start = initial_points(&p, vec![vec![0.0], vec![0.0]], o.delta0).unwrap();
        solve(&p, &o, start, vec![0.0], None).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.records, b.records);
    assert_eq!(a.bus.log(), b.bus.log());
}

#[test]
fn iteration_limit_is_reported() {
    let p = hand_qp();
    let o = SolverOptions {
        max_outer: 2,
        ..options()
    };
    let start = initial_points(&p, vec![vec![0.0], vec![0.0]], o.delta0).unwrap();
    let r = solve(&p, &o, start, vec![0.0], None).unwrap();
    assert_eq!(r.status, Status::IterationLimit);
    assert_eq!(r.records.len(), 2);
}

#[test]
fn derivative_check_on_quadratic_constraints() {
    let mut g = QuadraticFunction::constant(-1.0);
    g.add_product(0, 0, 1.0).add_product(0, 1, 2.0);
    let mut h = QuadraticFunction::new();
    h.add_product(1, 1, -0.5).add_linear(0, 3.0);
    let mut f = QuadraticFunction::new();
    f.add_product(0, 1, 1.5).add_linear(1, -2.0);
    let s = QuadraticSubsystem::new(2, f, vec![g], vec![h]);
    let p = PartitionedNlp::new(
        vec![Subsystem::new(Box::new(s), CooMatrix::from_triplets(1, 2, vec![(0, 0, 1.0)])).unwrap()],
        vec![0.0],
    )
    .unwrap();
    let rep = p.check_derivatives_fd(0, &[0.3, -1.1], &[0.7], &[1.3], 1e-6).unwrap();
    assert!(rep.passed, "{rep:?}");
}
