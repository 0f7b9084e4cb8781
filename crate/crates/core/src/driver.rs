//! The outer interior point loop.
//!
//! One Newton step on the barrier optimality conditions per outer iteration:
//! agents factor their local blocks and publish Schur contributions, d-CG
//! solves the coupling system to a forcing tolerance, agents back-substitute,
//! and two scalar reductions pick the stepsizes and the next barrier
//! parameter. How the Newton system is solved is abstracted by
//! [`StepEngine`], so the centralized oracle runs the very same loop.

use alloc::vec;
use alloc::vec::Vec;

use crate::agent::{
    assemble_local_kkt, back_substitute, local_barrier_candidate, local_fraction_to_boundary,
    schur_contribution, RegularizationPolicy,
};
use crate::coordination::{dcg_solve, CommReport, MessageBus};
use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::problem::{LocalResidual, PartitionedNlp, SubsystemPoint};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerTolerance {
    /// Inexact Newton forcing on `||F^delta||_inf`, see [`forcing_tolerance`].
    Forcing,
    /// The same absolute tolerance at every outer iteration.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Outer tolerance on `||F^0||_inf`.
    pub tol: f64,
    pub delta0: f64,
    pub delta_min: f64,
    /// Centering factor of the barrier candidates.
    pub sigma: f64,
    /// Fraction-to-boundary factor.
    pub tau: f64,
    pub kappa_eta: f64,
    pub theta_eta: f64,
    pub max_outer: usize,
    /// CG iterations per outer iteration; `None` means `20 n_c`.
    pub inner_cap: Option<usize>,
    pub inner_tolerance: InnerTolerance,
    /// Upper bound applied to the forcing tolerance. Every unit of CG
    /// residual left over becomes consensus violation after a full step.
    pub inner_tol_cap: f64,
    pub warm_start: bool,
    pub regularization: RegularizationPolicy,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            delta0: 0.1,
            delta_min: 1e-12,
            sigma: 0.1,
            tau: 0.995,
            kappa_eta: 0.5,
            theta_eta: 1.0,
            max_outer: 200,
            inner_cap: None,
            inner_tolerance: InnerTolerance::Forcing,
            inner_tol_cap: 1e-6,
            warm_start: true,
            regularization: RegularizationPolicy::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Options("tol must be positive"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Options("tau must lie in (0, 1)"));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Options("sigma must lie in (0, 1)"));
        }
        if !(self.delta_min > 0.0 && self.delta0 > self.delta_min) {
            return Err(Error::Options("need delta0 > delta_min > 0"));
        }
        if !(self.kappa_eta > 0.0) || self.theta_eta.is_nan() || self.theta_eta < 0.0 {
            return Err(Error::Options("forcing parameters must be positive"));
        }
        if let InnerTolerance::Fixed(t) = self.inner_tolerance {
            if !(t > 0.0) {
                return Err(Error::Options("fixed inner tolerance must be positive"));
            }
        }
        if !(self.inner_tol_cap > 0.0) {
            return Err(Error::Options("inner tolerance cap must be positive"));
        }
        Ok(())
    }

    pub fn inner_cap_for(&self, n_c: usize) -> usize {
        self.inner_cap.unwrap_or(20 * n_c)
    }
}

/// `kappa * min(1, r^theta) * r`, floored at `1e-14`.
pub fn forcing_tolerance(residual_inf: f64, options: &SolverOptions) -> f64 {
    let r = residual_inf.max(0.0);
    let eta = options.kappa_eta * libm::pow(r, options.theta_eta).min(1.0);
    (eta * r).max(1e-14)
}

/// `max(delta_min, min(0.9 delta, candidate))`
pub fn update_barrier(delta: f64, candidate: f64, options: &SolverOptions) -> f64 {
    options.delta_min.max((0.9 * delta).min(candidate))
}

/// Primal parts `(x, v)` move by `alpha_p`, dual parts `(gamma, mu, lambda)`
/// by `alpha_d`.
pub fn apply_step(
    points: &[SubsystemPoint],
    lambda: &[f64],
    steps: &[SubsystemPoint],
    dlambda: &[f64],
    alpha_p: f64,
    alpha_d: f64,
) -> Result<(Vec<SubsystemPoint>, Vec<f64>)> {
    fn advance(a: &[f64], d: &[f64], t: f64) -> Vec<f64> {
        a.iter().zip(d).map(|(a, d)| a + t * d).collect()
    }
    let mut next = Vec::with_capacity(points.len());
    for (i, (p, d)) in points.iter().zip(steps).enumerate() {
        let q = SubsystemPoint {
            x: advance(&p.x, &d.x, alpha_p),
            v: advance(&p.v, &d.v, alpha_p),
            gamma: advance(&p.gamma, &d.gamma, alpha_d),
            mu: advance(&p.mu, &d.mu, alpha_d),
        };
        if !q.is_strictly_interior() {
            return Err(Error::Invariant(alloc::format!(
                "step left the interior in subsystem {i}"
            )));
        }
        next.push(q);
    }
    Ok((next, advance(lambda, dlambda, alpha_d)))
}

/// Default initialization: `v = max(1, 1 - h(x))`, `mu = delta0 / v`,
/// `gamma = 0`.
pub fn initial_points(problem: &PartitionedNlp, x0: Vec<Vec<f64>>, delta0: f64) -> Result<Vec<SubsystemPoint>> {
    if x0.len() != problem.len() {
        return Err(Error::LengthMismatch {
            expected: problem.len(),
            got: x0.len(),
        });
    }
    let mut out = Vec::with_capacity(x0.len());
    for (i, x) in x0.into_iter().enumerate() {
        let d = problem.subsystems()[i].dims();
        let h = problem.evaluate(i, &x)?.h;
        let v: Vec<f64> = h.iter().map(|h| (1.0 - h).max(1.0)).collect();
        let mu = v.iter().map(|v| delta0 / v).collect();
        out.push(SubsystemPoint {
            x,
            v,
            gamma: vec![0.0; d.n_g],
            mu,
        });
    }
    Ok(out)
}

/// Reference solution for the distance and suboptimality columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub x: Vec<Vec<f64>>,
    pub objective: f64,
}

/// Convergence quantities at one iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub kkt0_inf: f64,
    pub kkt_delta_inf: f64,
    pub consensus_violation: f64,
    pub eq_infeasibility: f64,
    /// `||max(0, h(x))||_inf`, exactly zero when feasible.
    pub ineq_infeasibility: f64,
    pub objective: f64,
    pub objective_rel_error: Option<f64>,
    pub x_distance: Option<f64>,
    pub min_interior: f64,
}

pub fn convergence_metrics(
    problem: &PartitionedNlp,
    points: &[SubsystemPoint],
    lambda: &[f64],
    delta: f64,
    reference: Option<&Reference>,
) -> Result<Metrics> {
    let locals = local_residuals(problem, points, lambda)?;
    Ok(metrics_from(problem, points, &locals, delta, reference))
}

fn local_residuals(
    problem: &PartitionedNlp,
    points: &[SubsystemPoint],
    lambda: &[f64],
) -> Result<Vec<LocalResidual>> {
    if points.len() != problem.len() {
        return Err(Error::LengthMismatch {
            expected: problem.len(),
            got: points.len(),
        });
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| problem.local_residual(i, p, lambda))
        .collect()
}

fn metrics_from(
    problem: &PartitionedNlp,
    points: &[SubsystemPoint],
    locals: &[LocalResidual],
    delta: f64,
    reference: Option<&Reference>,
) -> Metrics {
    let consensus = problem.consensus_violation(points);
    let mut kkt0 = consensus;
    let mut kktd = consensus;
    let mut eq = 0.0_f64;
    let mut ineq = 0.0_f64;
    let mut objective = 0.0;
    for l in locals {
        kkt0 = kkt0.max(inf_norm(&l.stacked_product_form(0.0)));
        kktd = kktd.max(inf_norm(&l.stacked_product_form(delta)));
        eq = eq.max(inf_norm(&l.g));
        ineq = l.h.iter().fold(ineq, |m, &h| m.max(h.max(0.0)));
        objective += l.objective;
    }
    let (objective_rel_error, x_distance) = match reference {
        Some(r) => {
            let scale = if r.objective != 0.0 { r.objective.abs() } else { 1.0 };
            let dist = points
                .iter()
                .zip(&r.x)
                .flat_map(|(p, x)| p.x.iter().zip(x).map(|(a, b)| (a - b).abs()))
                .fold(0.0_f64, f64::max);
            (Some((objective - r.objective).abs() / scale), Some(dist))
        }
        None => (None, None),
    };
    Metrics {
        kkt0_inf: kkt0,
        kkt_delta_inf: kktd,
        consensus_violation: consensus,
        eq_infeasibility: eq,
        ineq_infeasibility: ineq,
        objective,
        objective_rel_error,
        x_distance,
        min_interior: points
            .iter()
            .map(SubsystemPoint::min_interior)
            .fold(f64::INFINITY, f64::min),
    }
}

/// One row of the per-iteration diagnostics: metrics at iterate `k` together
/// with the step taken from it.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub metrics: Metrics,
    pub inner_iterations: usize,
    pub inner_inexact: bool,
    pub inner_tolerance: f64,
    /// Barrier parameter used for the step.
    pub delta: f64,
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    pub comm_floats: u64,
    pub max_regularization: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    IterationLimit,
    Diverged,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::IterationLimit => "iteration_limit",
            Status::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: Status,
    pub points: Vec<SubsystemPoint>,
    pub lambda: Vec<f64>,
    pub delta: f64,
    pub records: Vec<IterationRecord>,
    /// Metrics at the returned iterate.
    pub final_metrics: Metrics,
    pub comm: CommReport,
    pub bus: MessageBus,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }
}

/// What a [`StepEngine`] sees of the current iterate.
pub struct StepRequest<'a> {
    pub problem: &'a PartitionedNlp,
    pub points: &'a [SubsystemPoint],
    pub lambda: &'a [f64],
    pub delta: f64,
    pub residuals: &'a [LocalResidual],
    pub kkt_delta_inf: f64,
    pub options: &'a SolverOptions,
}

/// A computed Newton direction plus bookkeeping about how it was obtained.
#[derive(Clone, Debug)]
pub struct NewtonStep {
    pub steps: Vec<SubsystemPoint>,
    pub dlambda: Vec<f64>,
    pub inner_iterations: usize,
    pub inner_inexact: bool,
    pub inner_tolerance: f64,
    pub max_regularization: f64,
}

pub trait StepEngine {
    fn compute(&mut self, request: &StepRequest<'_>, bus: &mut MessageBus) -> Result<NewtonStep>;
}

/// Newton steps by local factorization, Schur exchange and d-CG.
#[derive(Clone, Debug, Default)]
pub struct DecentralizedEngine {
    previous_dlambda: Option<Vec<f64>>,
}

impl DecentralizedEngine {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Inner tolerance used at an iterate with `||F^delta||_inf = kkt_delta_inf`.
pub fn inner_tolerance(kkt_delta_inf: f64, options: &SolverOptions) -> f64 {
    match options.inner_tolerance {
        InnerTolerance::Forcing => forcing_tolerance(kkt_delta_inf, options).min(options.inner_tol_cap),
        InnerTolerance::Fixed(t) => t,
    }
}

impl StepEngine for DecentralizedEngine {
    fn compute(&mut self, req: &StepRequest<'_>, bus: &mut MessageBus) -> Result<NewtonStep> {
        let problem = req.problem;
        let n_s = problem.len();
        let mut kkts = Vec::with_capacity(n_s);
        let mut newton_residuals = Vec::with_capacity(n_s);
        let mut contributions = Vec::with_capacity(n_s);
        let mut max_reg = 0.0_f64;
        for (i, (sub, point)) in problem.subsystems().iter().zip(req.points).enumerate() {
            let local = &req.residuals[i];
            let f = local.stacked_newton_form(req.delta);
            let mut kkt = assemble_local_kkt(i, sub.dims(), &local.derivatives, point, req.delta)?;
            kkt.factorize(&req.options.regularization)?;
            max_reg = max_reg.max(kkt.regularization_applied());
            contributions.push(schur_contribution(
                &kkt,
                sub.coupling(),
                &f,
                &point.x,
                problem.coupling_rhs(),
                n_s,
            ));
            kkts.push(kkt);
            newton_residuals.push(f);
        }
        let tol = inner_tolerance(req.kkt_delta_inf, req.options);
        let warm = if req.options.warm_start {
            self.previous_dlambda.as_deref()
        } else {
            None
        };
        let cg = dcg_solve(
            &contributions,
            bus,
            tol,
            req.options.inner_cap_for(problem.n_c()),
            warm,
        )?;
        let dlambda = cg.iterate;
        let mut steps = Vec::with_capacity(n_s);
        for (i, sub) in problem.subsystems().iter().enumerate() {
            let dp = back_substitute(&kkts[i], &newton_residuals[i], sub.coupling(), &dlambda);
            steps.push(SubsystemPoint::from_stacked(sub.dims(), &dp)?);
        }
        self.previous_dlambda = Some(dlambda.clone());
        Ok(NewtonStep {
            steps,
            dlambda,
            inner_iterations: cg.iterations,
            inner_inexact: cg.inexact,
            inner_tolerance: tol,
            max_regularization: max_reg,
        })
    }
}

/// Runs the decentralized interior point method from `start`.
pub fn solve(
    problem: &PartitionedNlp,
    options: &SolverOptions,
    start: Vec<SubsystemPoint>,
    lambda0: Vec<f64>,
    reference: Option<&Reference>,
) -> Result<SolveResult> {
    run_interior_point(
        problem,
        options,
        start,
        lambda0,
        reference,
        &mut DecentralizedEngine::new(),
    )
}

/// The outer loop, generic over how Newton steps are computed.
pub fn run_interior_point(
    problem: &PartitionedNlp,
    options: &SolverOptions,
    start: Vec<SubsystemPoint>,
    lambda0: Vec<f64>,
    reference: Option<&Reference>,
    engine: &mut dyn StepEngine,
) -> Result<SolveResult> {
    options.validate()?;
    if lambda0.len() != problem.n_c() {
        return Err(Error::LengthMismatch {
            expected: problem.n_c(),
            got: lambda0.len(),
        });
    }
    let mut bus = MessageBus::new(problem.len());
    let mut points = start;
    let mut lambda = lambda0;
    let mut delta = options.delta0;
    let mut records = Vec::new();
    let (status, final_metrics) = loop {
        let residuals = local_residuals(problem, &points, &lambda)?;
        let metrics = metrics_from(problem, &points, &residuals, delta, reference);
        if metrics.kkt0_inf <= options.tol {
            break (Status::Converged, metrics);
        }
        if records.len() >= options.max_outer {
            break (Status::IterationLimit, metrics);
        }
        let floats_before = bus.comm_report().total_floats();
        let request = StepRequest {
            problem,
            points: &points,
            lambda: &lambda,
            delta,
            residuals: &residuals,
            kkt_delta_inf: metrics.kkt_delta_inf,
            options,
        };
        let step = engine.compute(&request, &mut bus)?;
        let finite = step.dlambda.iter().all(|v| v.is_finite())
            && step
                .steps
                .iter()
                .all(|s| s.to_stacked().iter().all(|v| v.is_finite()));
        if !finite {
            break (Status::Diverged, metrics);
        }
        let (alpha_p, alpha_d): (Vec<f64>, Vec<f64>) = points
            .iter()
            .zip(&step.steps)
            .map(|(p, d)| local_fraction_to_boundary(p, d, options.tau))
            .unzip();
        let alpha_p = bus.global_min(&alpha_p)?;
        let alpha_d = bus.global_min(&alpha_d)?;
        let (next, next_lambda) = apply_step(&points, &lambda, &step.steps, &step.dlambda, alpha_p, alpha_d)?;
        let candidates: Vec<f64> = next
            .iter()
            .map(|p| local_barrier_candidate(p, options.sigma))
            .collect();
        let candidate = bus.global_max(&candidates)?;
        let next_delta = update_barrier(delta, candidate, options);
        records.push(IterationRecord {
            k: records.len(),
            metrics,
            inner_iterations: step.inner_iterations,
            inner_inexact: step.inner_inexact,
            inner_tolerance: step.inner_tolerance,
            delta,
            alpha_primal: alpha_p,
            alpha_dual: alpha_d,
            comm_floats: bus.comm_report().total_floats() - floats_before,
            max_regularization: step.max_regularization,
        });
        points = next;
        lambda = next_lambda;
        delta = next_delta;
    };
    Ok(SolveResult {
        status,
        points,
        lambda,
        delta,
        records,
        final_metrics,
        comm: bus.comm_report(),
        bus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forcing_examples() {
        let o = SolverOptions::default();
        assert_eq!(forcing_tolerance(1.0, &o), 0.5);
        assert!((forcing_tolerance(1e-4, &o) - 5e-9).abs() < 1e-22);
        assert_eq!(forcing_tolerance(0.0, &o), 1e-14);
    }

    #[test]
    fn barrier_update_examples() {
        let o = SolverOptions::default();
        assert_eq!(update_barrier(0.1, 0.05, &o), 0.05);
        assert!((update_barrier(0.1, 0.2, &o) - 0.09).abs() < 1e-16);
        assert_eq!(update_barrier(2e-12, 0.0, &o), 1e-12);
    }

    #[test]
    fn step_application() {
        let p = SubsystemPoint {
            x: vec![1.0],
            v: vec![1.0],
            gamma: vec![],
            mu: vec![2.0],
        };
        let zero = SubsystemPoint {
            x: vec![0.0],
            v: vec![0.0],
            gamma: vec![],
            mu: vec![0.0],
        };
        let (same, l) = apply_step(&[p.clone()], &[3.0], &[zero], &[0.0], 1.0, 1.0).unwrap();
        assert_eq!(same[0], p);
        assert_eq!(l, vec![3.0]);

        let d = SubsystemPoint {
            x: vec![0.0],
            v: vec![-0.5],
            gamma: vec![],
            mu: vec![0.0],
        };
        let (moved, _) = apply_step(&[p.clone()], &[0.0], &[d], &[0.0], 1.0, 1.0).unwrap();
        assert_eq!(moved[0].v, vec![0.5]);

        let bad = SubsystemPoint {
            x: vec![0.0],
            v: vec![-2.0],
            gamma: vec![],
            mu: vec![0.0],
        };
        assert!(matches!(
            apply_step(&[p], &[0.0], &[bad], &[0.0], 1.0, 1.0),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().validate().is_ok());
        let bad = SolverOptions {
            tau: 1.0,
            ..SolverOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverOptions {
            delta0: 1e-13,
            ..SolverOptions::default()
        };
        assert!(bad.validate().is_err());
    }
}
