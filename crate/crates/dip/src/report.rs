//! Diagnostics output: per-iteration CSV, JSON summary and the JSONL round
//! transcript.
//!
//! CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `k` | outer iteration |
//! | `kkt0_inf` | `‖F^0‖_∞` |
//! | `kkt_delta_inf` | `‖F^δ‖_∞` |
//! | `consensus` | `‖Σ A_i x_i − b‖_∞` |
//! | `eq_infeas` | `‖g(x)‖_∞` |
//! | `ineq_infeas` | `‖max(0, h(x))‖_∞`, written `0` when feasible |
//! | `objective` | `Σ f_i(x_i)` |
//! | `objective_rel_error` | `|f − f*| / |f*|`, empty without a reference |
//! | `x_distance` | `‖x − x*‖_∞`, empty without a reference |
//! | `inner_iterations` | d-CG iterations spent on the step |
//! | `inner_inexact` | 1 if the inner iteration cap was hit |
//! | `inner_tolerance` | absolute d-CG residual tolerance |
//! | `delta` | barrier parameter used for the step |
//! | `alpha_primal`, `alpha_dual` | stepsizes |
//! | `comm_floats` | floats sent by all agents during the iteration |
//! | `regularization` | largest Hessian shift over the agents |
//!
//! Floats use Rust's shortest round-trip exponent form (`1.5e-3`), so equal
//! runs give equal bytes.

use std::io::{self, Write};

use dip_core::coordination::Message;
use dip_core::driver::{IterationRecord, Metrics, SolveResult};
use serde::Serialize;

pub const CSV_HEADER: &str = "k,kkt0_inf,kkt_delta_inf,consensus,eq_infeas,ineq_infeas,objective,\
objective_rel_error,x_distance,inner_iterations,inner_inexact,inner_tolerance,delta,\
alpha_primal,alpha_dual,comm_floats,regularization";

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn csv_row(r: &IterationRecord) -> String {
    let m = &r.metrics;
    [
        r.k.to_string(),
        num(m.kkt0_inf),
        num(m.kkt_delta_inf),
        num(m.consensus_violation),
        num(m.eq_infeasibility),
        num(m.ineq_infeasibility),
        num(m.objective),
        opt(m.objective_rel_error),
        opt(m.x_distance),
        r.inner_iterations.to_string(),
        u8::from(r.inner_inexact).to_string(),
        num(r.inner_tolerance),
        num(r.delta),
        num(r.alpha_primal),
        num(r.alpha_dual),
        r.comm_floats.to_string(),
        num(r.max_regularization),
    ]
    .join(",")
}

pub fn write_csv(out: &mut impl Write, records: &[IterationRecord]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", csv_row(r))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinalNorms {
    pub kkt0_inf: f64,
    pub kkt_delta_inf: f64,
    pub consensus: f64,
    pub eq_infeas: f64,
    pub ineq_infeas: f64,
    pub objective: f64,
    pub objective_rel_error: Option<f64>,
    pub x_distance: Option<f64>,
}

impl From<&Metrics> for FinalNorms {
    fn from(m: &Metrics) -> Self {
        Self {
            kkt0_inf: m.kkt0_inf,
            kkt_delta_inf: m.kkt_delta_inf,
            consensus: m.consensus_violation,
            eq_infeas: m.eq_infeasibility,
            ineq_infeas: m.ineq_infeasibility,
            objective: m.objective,
            objective_rel_error: m.objective_rel_error,
            x_distance: m.x_distance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseComm {
    pub messages: u64,
    pub floats: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommSummary {
    pub rounds: u64,
    pub total_floats: u64,
    pub schur_exchange: PhaseComm,
    pub cg: PhaseComm,
    pub reduction: PhaseComm,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub status: &'static str,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub delta: f64,
    #[serde(rename = "final")]
    pub final_norms: FinalNorms,
    pub comm: CommSummary,
}

impl Summary {
    pub fn of(r: &SolveResult) -> Self {
        let phase = |t: dip_core::coordination::PhaseTotals| PhaseComm {
            messages: t.messages,
            floats: t.floats,
        };
        Self {
            status: r.status.name(),
            iterations: r.iterations(),
            inner_iterations: r.total_inner_iterations(),
            delta: r.delta,
            final_norms: FinalNorms::from(&r.final_metrics),
            comm: CommSummary {
                rounds: r.comm.rounds,
                total_floats: r.comm.total_floats(),
                schur_exchange: phase(r.comm.schur_exchange),
                cg: phase(r.comm.cg),
                reduction: phase(r.comm.reduction),
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary always serializes");
        s.push('\n');
        s
    }
}

#[derive(Serialize)]
struct TranscriptLine {
    round: u64,
    phase: &'static str,
    sender: usize,
    size: usize,
}

/// One JSON object per message: round, phase, sender and payload size in
/// floats.
pub fn write_transcript(out: &mut impl Write, log: &[Message]) -> io::Result<()> {
    for m in log {
        let line = TranscriptLine {
            round: m.round,
            phase: m.phase.name(),
            sender: m.sender,
            size: m.floats,
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
