//! Centralized reference computations.
//!
//! [`assemble_full_kkt`] builds the whole arrowhead Newton matrix densely and
//! [`direct_newton_step`] solves it by LU, the yardstick for the decomposed
//! step. [`solve_centralized`] runs the outer loop with Newton steps from one
//! global condensed factorization instead of Schur exchange and d-CG.

use alloc::vec;
use alloc::vec::Vec;

use crate::agent::{assemble_local_kkt, LocalKkt};
use crate::coordination::MessageBus;
use crate::driver::{run_interior_point, NewtonStep, Reference, SolveResult, SolverOptions, StepEngine, StepRequest};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Lu};
use crate::problem::{PartitionedNlp, SubsystemPoint};

/// The assembled arrowhead system `[blockdiag(K_i), A~'; A~, 0]`.
#[derive(Clone, Debug)]
pub struct FullKkt {
    pub matrix: DenseMatrix,
    /// Row offset of each subsystem block; the coupling rows start at
    /// `offsets[len]`.
    pub offsets: Vec<usize>,
}

impl FullKkt {
    pub fn order(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Assembles the full matrix from local blocks. With `regularized` the
/// Hessian shifts chosen during local factorization are included.
pub fn assemble_full_kkt(problem: &PartitionedNlp, locals: &[LocalKkt], regularized: bool) -> Result<FullKkt> {
    if locals.len() != problem.len() {
        return Err(Error::LengthMismatch {
            expected: problem.len(),
            got: locals.len(),
        });
    }
    let mut offsets = Vec::with_capacity(locals.len() + 1);
    let mut n = 0;
    for k in locals {
        offsets.push(n);
        n += k.order();
    }
    offsets.push(n);
    let n_c = problem.n_c();
    let mut m = DenseMatrix::zeros(n + n_c, n + n_c);
    for (i, (k, sub)) in locals.iter().zip(problem.subsystems()).enumerate() {
        let block = if regularized {
            k.regularized_matrix()
        } else {
            k.matrix()
        };
        let o = offsets[i];
        m.set_block(o, o, &block);
        for &(r, c, a) in sub.coupling().triplets() {
            m[(n + r, o + c)] += a;
            m[(o + c, n + r)] += a;
        }
    }
    Ok(FullKkt { matrix: m, offsets })
}

/// Newton step `(dp_1, .., dp_S, dlambda)` from a direct LU solve of the full
/// system with right-hand side `-(F_1, .., F_S, sum A_i x_i - b)`.
pub fn direct_newton_step(
    problem: &PartitionedNlp,
    full: &FullKkt,
    newton_residuals: &[Vec<f64>],
    points: &[SubsystemPoint],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = full.offsets[problem.len()];
    let mut rhs = vec![0.0; full.order()];
    for (i, f) in newton_residuals.iter().enumerate() {
        let o = full.offsets[i];
        if f.len() != full.offsets[i + 1] - o {
            return Err(Error::LengthMismatch {
                expected: full.offsets[i + 1] - o,
                got: f.len(),
            });
        }
        for (r, v) in rhs[o..o + f.len()].iter_mut().zip(f) {
            *r = -v;
        }
    }
    let xs: Vec<&[f64]> = points.iter().map(|p| p.x.as_slice()).collect();
    for (r, v) in rhs[n..].iter_mut().zip(problem.coupling_residual(&xs)) {
        *r = -v;
    }
    let lu = Lu::factor(full.matrix.clone()).map_err(Error::CentralFactorization)?;
    let z = lu.solve(&rhs);
    let steps = (0..problem.len())
        .map(|i| z[full.offsets[i]..full.offsets[i + 1]].to_vec())
        .collect();
    Ok((steps, z[n..].to_vec()))
}

/// Newton steps from a single LU of the globally condensed system
/// `[blockdiag([W_i, Jg_i'; Jg_i, 0]), A'; A, 0]`.
#[derive(Clone, Debug, Default)]
pub struct CentralizedEngine;

impl StepEngine for CentralizedEngine {
    fn compute(&mut self, req: &StepRequest<'_>, _bus: &mut MessageBus) -> Result<NewtonStep> {
        let problem = req.problem;
        let mut kkts = Vec::with_capacity(problem.len());
        let mut offsets = Vec::with_capacity(problem.len() + 1);
        let mut n = 0;
        let mut max_reg = 0.0_f64;
        for (i, (sub, point)) in problem.subsystems().iter().zip(req.points).enumerate() {
            let mut kkt = assemble_local_kkt(i, sub.dims(), &req.residuals[i].derivatives, point, req.delta)?;
            // local factorization only to pick the same shift as the agents
            kkt.factorize(&req.options.regularization)?;
            max_reg = max_reg.max(kkt.regularization_applied());
            offsets.push(n);
            n += sub.dims().n_x + sub.dims().n_g;
            kkts.push(kkt);
        }
        let n_c = problem.n_c();
        let mut m = DenseMatrix::zeros(n + n_c, n + n_c);
        let mut rhs = vec![0.0; n + n_c];
        let mut full_rhs = Vec::with_capacity(problem.len());
        for (i, (kkt, sub)) in kkts.iter().zip(problem.subsystems()).enumerate() {
            let o = offsets[i];
            m.set_block(o, o, &kkt.condensed_matrix(kkt.regularization_applied()));
            for &(r, c, a) in sub.coupling().triplets() {
                m[(n + r, o + c)] += a;
                m[(o + c, n + r)] += a;
            }
            let r: Vec<f64> = req.residuals[i]
                .stacked_newton_form(req.delta)
                .iter()
                .map(|v| -v)
                .collect();
            let c = kkt.condense_rhs(&r);
            rhs[o..o + c.len()].copy_from_slice(&c);
            full_rhs.push(r);
        }
        let xs: Vec<&[f64]> = req.points.iter().map(|p| p.x.as_slice()).collect();
        for (r, v) in rhs[n..].iter_mut().zip(problem.coupling_residual(&xs)) {
            *r = -v;
        }
        let lu = Lu::factor(m).map_err(Error::CentralFactorization)?;
        let z = lu.solve(&rhs);
        let mut steps = Vec::with_capacity(problem.len());
        for (i, sub) in problem.subsystems().iter().enumerate() {
            let d = sub.dims();
            let o = offsets[i];
            let dp = kkts[i].expand_solution(&full_rhs[i], &z[o..o + d.n_x + d.n_g]);
            steps.push(SubsystemPoint::from_stacked(d, &dp)?);
        }
        Ok(NewtonStep {
            steps,
            dlambda: z[n..].to_vec(),
            inner_iterations: 0,
            inner_inexact: false,
            inner_tolerance: 0.0,
            max_regularization: max_reg,
        })
    }
}

/// Default outer tolerance of the centralized reference solve.
pub const REFERENCE_TOL: f64 = 1e-8;

/// Centralized interior point solve with the same outer loop, stepsizes and
/// barrier rule as the decentralized method.
pub fn solve_centralized(
    problem: &PartitionedNlp,
    options: &SolverOptions,
    start: Vec<SubsystemPoint>,
    lambda0: Vec<f64>,
    reference: Option<&Reference>,
) -> Result<SolveResult> {
    run_interior_point(problem, options, start, lambda0, reference, &mut CentralizedEngine)
}
