//! Bulk-synchronous message fabric and the decentralized CG solve of the
//! coupling system `S dlambda = s`.
//!
//! Each round, every agent contributes one payload; the bus sums (or takes
//! min/max of) the payloads in fixed agent order and makes the result
//! available to all agents at the round boundary. The bus only simulates the
//! exchange, but it records every message so communication volume can be
//! measured and transcripts compared across runs.

use alloc::vec;
use alloc::vec::Vec;

use crate::agent::SchurContribution;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    /// Summation of the `s_i` vectors.
    SchurExchange,
    /// Matrix-vector products inside d-CG.
    ConjugateGradient,
    /// Scalar min/max reductions (stepsizes, barrier parameter).
    Reduction,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::SchurExchange, Phase::ConjugateGradient, Phase::Reduction];

    pub fn name(self) -> &'static str {
        match self {
            Phase::SchurExchange => "schur_exchange",
            Phase::ConjugateGradient => "cg",
            Phase::Reduction => "reduction",
        }
    }

    fn slot(self) -> usize {
        match self {
            Phase::SchurExchange => 0,
            Phase::ConjugateGradient => 1,
            Phase::Reduction => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Message {
    pub round: u64,
    pub phase: Phase,
    pub sender: usize,
    /// `None` means broadcast to all agents.
    pub receiver: Option<usize>,
    pub floats: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseTotals {
    pub messages: u64,
    pub floats: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommReport {
    pub rounds: u64,
    pub schur_exchange: PhaseTotals,
    pub cg: PhaseTotals,
    pub reduction: PhaseTotals,
}

impl CommReport {
    pub fn total_floats(&self) -> u64 {
        self.schur_exchange.floats + self.cg.floats + self.reduction.floats
    }

    pub fn total_messages(&self) -> u64 {
        self.schur_exchange.messages + self.cg.messages + self.reduction.messages
    }

    pub fn phase(&self, phase: Phase) -> PhaseTotals {
        match phase {
            Phase::SchurExchange => self.schur_exchange,
            Phase::ConjugateGradient => self.cg,
            Phase::Reduction => self.reduction,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MessageBus {
    agents: usize,
    round: u64,
    log: Vec<Message>,
    totals: [PhaseTotals; 3],
}

impl MessageBus {
    pub fn new(agents: usize) -> Self {
        assert!(agents > 0, "a bus needs at least one agent");
        Self {
            agents,
            round: 0,
            log: Vec::new(),
            totals: [PhaseTotals::default(); 3],
        }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn log(&self) -> &[Message] {
        &self.log
    }

    fn deliver(&mut self, phase: Phase, floats: usize) {
        for sender in 0..self.agents {
            self.log.push(Message {
                round: self.round,
                phase,
                sender,
                receiver: None,
                floats,
            });
        }
        let t = &mut self.totals[phase.slot()];
        t.messages += self.agents as u64;
        t.floats += (self.agents * floats) as u64;
        self.round += 1;
    }

    /// Sum of one vector per agent, accumulated in agent order.
    pub fn global_sum(&mut self, phase: Phase, vectors: &[&[f64]]) -> Result<Vec<f64>> {
        self.check_agents(vectors.len())?;
        let n = vectors[0].len();
        let mut sum = vec![0.0; n];
        for v in vectors {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            axpy(1.0, v, &mut sum);
        }
        self.deliver(phase, n);
        Ok(sum)
    }

    pub fn global_min(&mut self, values: &[f64]) -> Result<f64> {
        self.check_agents(values.len())?;
        self.deliver(Phase::Reduction, 1);
        Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn global_max(&mut self, values: &[f64]) -> Result<f64> {
        self.check_agents(values.len())?;
        self.deliver(Phase::Reduction, 1);
        Ok(values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn check_agents(&self, n: usize) -> Result<()> {
        if n != self.agents {
            return Err(Error::LengthMismatch {
                expected: self.agents,
                got: n,
            });
        }
        Ok(())
    }

    pub fn comm_report(&self) -> CommReport {
        CommReport {
            rounds: self.round,
            schur_exchange: self.totals[Phase::SchurExchange.slot()],
            cg: self.totals[Phase::ConjugateGradient.slot()],
            reduction: self.totals[Phase::Reduction.slot()],
        }
    }
}

/// Relative size of `|q'Sq|` against `||q|| ||Sq||` treated as breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// Final state of a d-CG run.
#[derive(Clone, Debug, PartialEq)]
pub struct CgState {
    pub iterate: Vec<f64>,
    pub residual: Vec<f64>,
    pub direction: Vec<f64>,
    pub iterations: usize,
    /// `||r_k||_2` for `k = 0..=iterations`.
    pub history: Vec<f64>,
    /// The iteration cap was hit before the tolerance.
    pub inexact: bool,
}

/// Conjugate gradients on `(sum S_i) dlambda = sum s_i`, where every product
/// `S q` is assembled by a global sum of the local products `S_i q`.
///
/// Starts from `warm_start` if given (one extra product to form the initial
/// residual), otherwise from zero.
///
/// `S` need not be definite. Without inertia correction a region with no
/// angle reference contributes a negative eigenvalue, and the recurrence is
/// run as is; only a vanishing `q'Sq` stops it.
pub fn dcg_solve(
    contributions: &[SchurContribution],
    bus: &mut MessageBus,
    tol_abs: f64,
    max_iter: usize,
    warm_start: Option<&[f64]>,
) -> Result<CgState> {
    let locals: Vec<&[f64]> = contributions.iter().map(|c| c.vector.as_slice()).collect();
    let s = bus.global_sum(Phase::SchurExchange, &locals)?;
    let n = s.len();

    let mat_vec = |bus: &mut MessageBus, q: &[f64]| -> Result<Vec<f64>> {
        let products: Vec<Vec<f64>> = contributions.iter().map(|c| c.matrix.mul_vec(q)).collect();
        let refs: Vec<&[f64]> = products.iter().map(Vec::as_slice).collect();
        bus.global_sum(Phase::ConjugateGradient, &refs)
    };

    let (mut x, mut r) = match warm_start {
        Some(w) if w.iter().any(|&v| v != 0.0) => {
            if w.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: w.len(),
                });
            }
            let sw = mat_vec(bus, w)?;
            let r = s.iter().zip(&sw).map(|(a, b)| a - b).collect();
            (w.to_vec(), r)
        }
        _ => (vec![0.0; n], s.clone()),
    };
    let mut q = r.clone();
    let mut rr = dot(&r, &r);
    let mut history = vec![libm::sqrt(rr)];
    let mut iterations = 0;
    while libm::sqrt(rr) > tol_abs && iterations < max_iter {
        let sq = mat_vec(bus, &q)?;
        let curvature = dot(&q, &sq);
        if !curvature.is_finite() || curvature.abs() <= BREAKDOWN_TOL * norm2(&q) * norm2(&sq) {
            return Err(Error::Curvature {
                iteration: iterations,
                curvature,
            });
        }
        let alpha = rr / curvature;
        axpy(alpha, &q, &mut x);
        axpy(-alpha, &sq, &mut r);
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for (qi, ri) in q.iter_mut().zip(&r) {
            *qi = ri + beta * *qi;
        }
        rr = rr_next;
        iterations += 1;
        history.push(libm::sqrt(rr));
    }
    let inexact = norm2(&r) > tol_abs;
    Ok(CgState {
        iterate: x,
        residual: r,
        direction: q,
        iterations,
        history,
        inexact,
    })
}
