//! `pnlp-v1`: JSON instances of partitioned quadratic programs.
//!
//! ```json
//! {
//!   "format": "pnlp-v1",
//!   "b": [2.0],
//!   "subsystems": [
//!     {
//!       "n_x": 1,
//!       "hessian": [[1.0]],
//!       "linear": [0.0],
//!       "constant": 0.0,
//!       "eq_rows": [], "eq_offsets": [],
//!       "ineq_rows": [[1.0]], "ineq_offsets": [-0.8],
//!       "coupling": [[0, 0, 1.0]],
//!       "x0": [0.0]
//!     }
//!   ]
//! }
//! ```
//!
//! Subsystem `i` minimizes `1/2 x'Hx + linear'x + constant` subject to
//! `eq_rows x + eq_offsets = 0` and `ineq_rows x + ineq_offsets <= 0`.
//! `coupling` holds `[row, column, value]` triplets of `A_i`; `n_c` is the
//! length of `b`. `x0` is optional and defaults to zero.
//!
//! Structure exports (see [`structure_of`]) carry dimensions and coupling
//! only; they describe an instance but cannot be solved.

use dip_core::{CooMatrix, PartitionedNlp, QuadraticFunction, QuadraticSubsystem, Subsystem};
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "pnlp-v1";

#[derive(Debug, thiserror::Error)]
pub enum PnlpError {
    #[error("malformed pnlp JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format {0:?}, expected \"pnlp-v1\"")]
    Format(String),
    #[error("subsystem {subsystem}: {message}")]
    Shape { subsystem: usize, message: String },
    #[error("subsystem {0} has no objective data (structure-only export)")]
    StructureOnly(usize),
    #[error(transparent)]
    Core(#[from] dip_core::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PnlpInstance {
    pub format: String,
    pub b: Vec<f64>,
    pub subsystems: Vec<PnlpSubsystem>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PnlpSubsystem {
    pub n_x: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<f64>>,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub eq_rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub eq_offsets: Vec<f64>,
    #[serde(default)]
    pub ineq_rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub ineq_offsets: Vec<f64>,
    /// Only set on structure exports, where the rows themselves are omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_g: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_h: Option<usize>,
    pub coupling: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

pub fn parse_pnlp(text: &str) -> Result<PnlpInstance, PnlpError> {
    let inst: PnlpInstance = serde_json::from_str(text)?;
    if inst.format != FORMAT {
        return Err(PnlpError::Format(inst.format));
    }
    Ok(inst)
}

pub fn write_pnlp(inst: &PnlpInstance) -> String {
    let mut s = serde_json::to_string_pretty(inst).expect("pnlp instances always serialize");
    s.push('\n');
    s
}

impl PnlpInstance {
    pub fn n_c(&self) -> usize {
        self.b.len()
    }

    /// Builds the partitioned problem and the initial guess.
    pub fn build(&self) -> Result<(PartitionedNlp, Vec<Vec<f64>>), PnlpError> {
        let mut subsystems = Vec::with_capacity(self.subsystems.len());
        let mut x0 = Vec::with_capacity(self.subsystems.len());
        for (i, s) in self.subsystems.iter().enumerate() {
            let eval = s.evaluator(i)?;
            let coupling = s.coupling_matrix(i, self.n_c())?;
            subsystems.push(Subsystem::new(Box::new(eval), coupling)?);
            x0.push(match &s.x0 {
                Some(x) if x.len() != s.n_x => return Err(shape(i, format!("x0 has length {}, expected {}", x.len(), s.n_x))),
                Some(x) => x.clone(),
                None => vec![0.0; s.n_x],
            });
        }
        Ok((PartitionedNlp::new(subsystems, self.b.clone())?, x0))
    }
}

fn shape(subsystem: usize, message: String) -> PnlpError {
    PnlpError::Shape { subsystem, message }
}

impl PnlpSubsystem {
    fn evaluator(&self, i: usize) -> Result<QuadraticSubsystem, PnlpError> {
        let n = self.n_x;
        let (Some(h), Some(c)) = (&self.hessian, &self.linear) else {
            return Err(PnlpError::StructureOnly(i));
        };
        if h.len() != n || h.iter().any(|r| r.len() != n) {
            return Err(shape(i, format!("hessian must be {n} x {n}")));
        }
        if c.len() != n {
            return Err(shape(i, format!("linear has length {}, expected {n}", c.len())));
        }
        for r in 0..n {
            for s in 0..r {
                if h[r][s] != h[s][r] {
                    return Err(shape(i, format!("hessian is not symmetric at ({r}, {s})")));
                }
            }
        }
        let mut objective = QuadraticFunction::constant(self.constant);
        for (r, row) in h.iter().enumerate() {
            for (s, &q) in row.iter().enumerate() {
                objective.add_hessian_entry(r, s, q);
            }
        }
        for (j, &v) in c.iter().enumerate() {
            objective.add_linear(j, v);
        }
        let eq = affine_rows(i, n, "eq", &self.eq_rows, &self.eq_offsets)?;
        let ineq = affine_rows(i, n, "ineq", &self.ineq_rows, &self.ineq_offsets)?;
        Ok(QuadraticSubsystem::new(n, objective, eq, ineq))
    }

    fn coupling_matrix(&self, i: usize, n_c: usize) -> Result<CooMatrix, PnlpError> {
        for &(r, c, _) in &self.coupling {
            if r >= n_c || c >= self.n_x {
                return Err(shape(i, format!("coupling entry ({r}, {c}) outside {n_c} x {}", self.n_x)));
            }
        }
        Ok(CooMatrix::from_triplets(n_c, self.n_x, self.coupling.clone()))
    }
}

fn affine_rows(
    i: usize,
    n: usize,
    what: &str,
    rows: &[Vec<f64>],
    offsets: &[f64],
) -> Result<Vec<QuadraticFunction>, PnlpError> {
    if rows.len() != offsets.len() {
        return Err(shape(i, format!("{what}_rows and {what}_offsets differ in length")));
    }
    rows.iter()
        .zip(offsets)
        .map(|(row, &off)| {
            if row.len() != n {
                return Err(shape(i, format!("{what} row has length {}, expected {n}", row.len())));
            }
            let mut f = QuadraticFunction::constant(off);
            for (j, &a) in row.iter().enumerate() {
                f.add_linear(j, a);
            }
            Ok(f)
        })
        .collect()
}

/// Dimensions, coupling triplets and `b` of any partitioned problem.
pub fn structure_of(problem: &PartitionedNlp) -> PnlpInstance {
    PnlpInstance {
        format: FORMAT.to_string(),
        b: problem.coupling_rhs().to_vec(),
        subsystems: problem
            .subsystems()
            .iter()
            .map(|s| {
                let d = s.dims();
                PnlpSubsystem {
                    n_x: d.n_x,
                    n_g: Some(d.n_g),
                    n_h: Some(d.n_h),
                    coupling: s.coupling().triplets().to_vec(),
                    ..PnlpSubsystem::default()
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EQ_QP: &str = r#"{
        "format": "pnlp-v1",
        "b": [2.0],
        "subsystems": [
            {"n_x": 1, "hessian": [[1.0]], "linear": [0.0], "coupling": [[0, 0, 1.0]]},
            {"n_x": 1, "hessian": [[1.0]], "linear": [0.0], "coupling": [[0, 0, 1.0]]}
        ]
    }"#;

    #[test]
    fn builds_equality_qp() {
        let inst = parse_pnlp(EQ_QP).unwrap();
        let (p, x0) = inst.build().unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.n_c(), 1);
        assert_eq!(x0, vec![vec![0.0], vec![0.0]]);
        let v = p.evaluate(0, &[2.0]).unwrap();
        assert_eq!(v.f, 2.0);
    }

    #[test]
    fn round_trip() {
        let inst = parse_pnlp(EQ_QP).unwrap();
        assert_eq!(parse_pnlp(&write_pnlp(&inst)).unwrap(), inst);
    }

    #[test]
    fn rejects_wrong_format_and_shapes() {
        let bad = EQ_QP.replace("pnlp-v1", "pnlp-v0");
        assert!(matches!(parse_pnlp(&bad), Err(PnlpError::Format(_))));
        let bad = EQ_QP.replacen("[[0, 0, 1.0]]", "[[1, 0, 1.0]]", 1);
        assert!(matches!(parse_pnlp(&bad).unwrap().build(), Err(PnlpError::Shape { subsystem: 0, .. })));
        let bad = EQ_QP.replacen("\"hessian\": [[1.0]]", "\"hessian\": [[1.0, 0.0]]", 1);
        assert!(matches!(parse_pnlp(&bad).unwrap().build(), Err(PnlpError::Shape { .. })));
        assert!(matches!(parse_pnlp("{\"format\": 1}"), Err(PnlpError::Json(_))));
    }

    #[test]
    fn structure_export_is_not_solvable() {
        let (p, _) = parse_pnlp(EQ_QP).unwrap().build().unwrap();
        let s = structure_of(&p);
        assert_eq!(s.subsystems[1].n_g, Some(0));
        assert_eq!(s.subsystems[1].coupling, vec![(0, 0, 1.0)]);
        let back = parse_pnlp(&write_pnlp(&s)).unwrap();
        assert!(matches!(back.build(), Err(PnlpError::StructureOnly(0))));
    }
}
