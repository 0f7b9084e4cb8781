#![allow(dead_code)]

use dip_core::agent::{assemble_local_kkt, back_substitute, schur_contribution, LocalKkt, RegularizationPolicy};
use dip_core::coordination::{dcg_solve, MessageBus};
use dip_core::oracle::{assemble_full_kkt, direct_newton_step};
use dip_core::{CooMatrix, PartitionedNlp, QuadraticFunction, QuadraticSubsystem, Subsystem, SubsystemPoint};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random strictly convex partitioned QP with a random strictly interior
/// primal-dual point.
pub struct RandomInstance {
    pub problem: PartitionedNlp,
    pub points: Vec<SubsystemPoint>,
    pub lambda: Vec<f64>,
}

pub fn random_convex_qp(rng: &mut ChaCha8Rng) -> RandomInstance {
    let n_s = rng.gen_range(2..=4);
    let n_c = rng.gen_range(1..=8);
    let mut subsystems = Vec::new();
    let mut points = Vec::new();
    for sub in 0..n_s {
        let n = rng.gen_range(4..=20);
        let n_g = rng.gen_range(0..=n / 3);
        let n_h = rng.gen_range(0..=n);
        // Q = M'M + I/10
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut f = QuadraticFunction::new();
        for i in 0..n {
            for j in 0..n {
                let q: f64 = (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
                f.add_hessian_entry(i, j, q);
            }
            f.add_linear(i, rng.gen_range(-1.0..1.0));
        }
        let affine = |rng: &mut ChaCha8Rng| {
            let mut q = QuadraticFunction::constant(rng.gen_range(-1.0..1.0));
            for j in 0..n {
                q.add_linear(j, rng.gen_range(-1.0..1.0));
            }
            q
        };
        let eq: Vec<_> = (0..n_g).map(|_| affine(rng)).collect();
        let ineq: Vec<_> = (0..n_h).map(|_| affine(rng)).collect();
        let mut a = CooMatrix::new(n_c, n);
        // distinct (subsystem, column) per row keeps the stacked A full rank
        for r in (sub..n_c).step_by(n_s) {
            a.push(r, r / n_s, rng.gen_range(0.5..1.5));
        }
        for r in 0..n_c {
            for c in 0..n {
                if rng.gen_bool(0.3) {
                    a.push(r, c, rng.gen_range(-1.0..1.0));
                }
            }
        }
        let ev = QuadraticSubsystem::new(n, f, eq, ineq);
        subsystems.push(Subsystem::new(Box::new(ev), a).unwrap());
        points.push(SubsystemPoint {
            x: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            v: (0..n_h).map(|_| rng.gen_range(0.1..2.0)).collect(),
            gamma: (0..n_g).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            mu: (0..n_h).map(|_| rng.gen_range(0.1..2.0)).collect(),
        });
    }
    let b = (0..n_c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lambda = (0..n_c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RandomInstance {
        problem: PartitionedNlp::new(subsystems, b).unwrap(),
        points,
        lambda,
    }
}

pub fn local_blocks(inst: &RandomInstance, delta: f64) -> (Vec<LocalKkt>, Vec<Vec<f64>>) {
    let mut kkts = Vec::new();
    let mut residuals = Vec::new();
    for (i, (sub, p)) in inst.problem.subsystems().iter().zip(&inst.points).enumerate() {
        let local = inst.problem.local_residual(i, p, &inst.lambda).unwrap();
        let mut kkt = assemble_local_kkt(i, sub.dims(), &local.derivatives, p, delta).unwrap();
        kkt.factorize(&RegularizationPolicy::default()).unwrap();
        kkts.push(kkt);
        residuals.push(local.stacked_newton_form(delta));
    }
    (kkts, residuals)
}

/// Decomposed Newton step with CG run essentially to exactness.
pub fn decomposed_step(inst: &RandomInstance, delta: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (kkts, residuals) = local_blocks(inst, delta);
    let problem = &inst.problem;
    let contributions: Vec<_> = problem
        .subsystems()
        .iter()
        .enumerate()
        .map(|(i, sub)| {
            schur_contribution(
                &kkts[i],
                sub.coupling(),
                &residuals[i],
                &inst.points[i].x,
                problem.coupling_rhs(),
                problem.len(),
            )
        })
        .collect();
    let mut bus = MessageBus::new(problem.len());
    let cg = dcg_solve(&contributions, &mut bus, 1e-14, 10 * problem.n_c(), None).unwrap();
    let steps = problem
        .subsystems()
        .iter()
        .enumerate()
        .map(|(i, sub)| back_substitute(&kkts[i], &residuals[i], sub.coupling(), &cg.iterate))
        .collect();
    (steps, cg.iterate)
}

pub fn direct_step(inst: &RandomInstance, delta: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (kkts, residuals) = local_blocks(inst, delta);
    let full = assemble_full_kkt(&inst.problem, &kkts, true).unwrap();
    direct_newton_step(&inst.problem, &full, &residuals, &inst.points).unwrap()
}

pub fn stacked(steps: &[Vec<f64>], dlambda: &[f64]) -> Vec<f64> {
    steps.iter().flatten().chain(dlambda).copied().collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}
