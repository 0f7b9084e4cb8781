//! Partially separable NLPs with affine coupling:
//!
//! ```text
//! min  sum_i f_i(x_i)
//! s.t. g_i(x_i) = 0,  h_i(x_i) <= 0   for every subsystem i
//!      sum_i A_i x_i = b
//! ```
//!
//! plus the primal-dual point type and the optimality residual of the
//! slack/barrier reformulation.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, CooMatrix, DenseMatrix};

/// Dimensions of one subsystem: variables, equalities, inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n_x: usize,
    pub n_g: usize,
    pub n_h: usize,
}

impl Dims {
    /// Order of the local primal-dual vector `(x, v, gamma, mu)`.
    pub fn primal_dual(&self) -> usize {
        self.n_x + 2 * self.n_h + self.n_g
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Values {
    pub f: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives {
    pub grad_f: Vec<f64>,
    /// `n_g x n_x`
    pub jac_g: DenseMatrix,
    /// `n_h x n_x`
    pub jac_h: DenseMatrix,
    /// Hessian of `f + gamma'g + mu'h`.
    pub hess_lagrangian: DenseMatrix,
}

/// Local objective and constraints of a subsystem with analytic derivatives.
///
/// Implementations must be deterministic and reentrant.
pub trait Evaluator: Send + Sync {
    fn dims(&self) -> Dims;
    fn values(&self, x: &[f64]) -> Values;
    fn derivatives(&self, x: &[f64], gamma: &[f64], mu: &[f64]) -> Derivatives;
}

pub struct Subsystem {
    evaluator: Box<dyn Evaluator>,
    dims: Dims,
    coupling: CooMatrix,
}

impl Subsystem {
    /// `coupling` is `A_i`; its row count must match the instance's `n_c`.
    pub fn new(evaluator: Box<dyn Evaluator>, coupling: CooMatrix) -> Result<Self> {
        let dims = evaluator.dims();
        if coupling.ncols() != dims.n_x {
            return Err(Error::Instance(format!(
                "coupling matrix has {} columns, subsystem has {} variables",
                coupling.ncols(),
                dims.n_x
            )));
        }
        Ok(Self {
            evaluator,
            dims,
            coupling,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn coupling(&self) -> &CooMatrix {
        &self.coupling
    }

    pub fn evaluator(&self) -> &dyn Evaluator {
        self.evaluator.as_ref()
    }
}

impl core::fmt::Debug for Subsystem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Subsystem")
            .field("dims", &self.dims)
            .field("coupling", &self.coupling)
            .finish_non_exhaustive()
    }
}

#[derive(Debug)]
pub struct PartitionedNlp {
    subsystems: Vec<Subsystem>,
    coupling_rhs: Vec<f64>,
}

impl PartitionedNlp {
    pub fn new(subsystems: Vec<Subsystem>, coupling_rhs: Vec<f64>) -> Result<Self> {
        let n_c = coupling_rhs.len();
        if n_c == 0 {
            return Err(Error::Instance(
                "no coupling constraints: problem is fully separable".into(),
            ));
        }
        if subsystems.is_empty() {
            return Err(Error::Instance("no subsystems".into()));
        }
        for (i, s) in subsystems.iter().enumerate() {
            if s.coupling.nrows() != n_c {
                return Err(Error::Instance(format!(
                    "A_{i} has {} rows, expected n_c = {n_c}",
                    s.coupling.nrows()
                )));
            }
        }
        Ok(Self {
            subsystems,
            coupling_rhs,
        })
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn n_c(&self) -> usize {
        self.coupling_rhs.len()
    }

    pub fn coupling_rhs(&self) -> &[f64] {
        &self.coupling_rhs
    }

    pub fn total_variables(&self) -> usize {
        self.subsystems.iter().map(|s| s.dims.n_x).sum()
    }

    fn subsystem(&self, i: usize) -> Result<&Subsystem> {
        self.subsystems
            .get(i)
            .ok_or_else(|| Error::Instance(format!("no subsystem {i}")))
    }

    /// `(f_i, g_i, h_i)` at `x`, exactly as the evaluator returns them.
    pub fn evaluate(&self, i: usize, x: &[f64]) -> Result<Values> {
        let s = self.subsystem(i)?;
        check_len(s.dims.n_x, x.len())?;
        let v = s.evaluator.values(x);
        if v.g.len() != s.dims.n_g || v.h.len() != s.dims.n_h {
            return Err(Error::Instance(format!(
                "subsystem {i}: evaluator returned mismatched constraint lengths"
            )));
        }
        if !v.f.is_finite() || v.g.iter().chain(&v.h).any(|x| !x.is_finite()) {
            return Err(Error::Evaluation {
                subsystem: i,
                message: "non-finite function value".into(),
            });
        }
        Ok(v)
    }

    pub fn evaluate_derivatives(
        &self,
        i: usize,
        x: &[f64],
        gamma: &[f64],
        mu: &[f64],
    ) -> Result<Derivatives> {
        let s = self.subsystem(i)?;
        let d = s.dims;
        check_len(d.n_x, x.len())?;
        check_len(d.n_g, gamma.len())?;
        check_len(d.n_h, mu.len())?;
        let mut der = s.evaluator.derivatives(x, gamma, mu);
        let shapes_ok = der.grad_f.len() == d.n_x
            && (der.jac_g.nrows(), der.jac_g.ncols()) == (d.n_g, d.n_x)
            && (der.jac_h.nrows(), der.jac_h.ncols()) == (d.n_h, d.n_x)
            && (der.hess_lagrangian.nrows(), der.hess_lagrangian.ncols()) == (d.n_x, d.n_x);
        if !shapes_ok {
            return Err(Error::Instance(format!(
                "subsystem {i}: evaluator returned mismatched derivative shapes"
            )));
        }
        let finite = der.grad_f.iter().all(|v| v.is_finite())
            && der.jac_g.all_finite()
            && der.jac_h.all_finite()
            && der.hess_lagrangian.all_finite();
        if !finite {
            return Err(Error::Evaluation {
                subsystem: i,
                message: "non-finite derivative entry".into(),
            });
        }
        der.hess_lagrangian.symmetrize();
        Ok(der)
    }

    /// `sum_i A_i x_i - b`
    pub fn coupling_residual(&self, xs: &[&[f64]]) -> Vec<f64> {
        let mut r: Vec<f64> = self.coupling_rhs.iter().map(|b| -b).collect();
        for (s, x) in self.subsystems.iter().zip(xs) {
            s.coupling.mul_vec_add(x, &mut r);
        }
        r
    }

    /// `||sum_i A_i x_i - b||_inf`
    pub fn consensus_violation(&self, points: &[SubsystemPoint]) -> f64 {
        let xs: Vec<&[f64]> = points.iter().map(|p| p.x.as_slice()).collect();
        inf_norm(&self.coupling_residual(&xs))
    }

    /// Stacked optimality residual at barrier parameter `delta`.
    ///
    /// Per subsystem the blocks are, in order: stationarity
    /// `grad f + Jg'gamma + Jh'mu + A'lambda`, complementarity `V mu - delta 1`,
    /// `g(x)` and `h(x) + v`. The coupling block is `b - sum A_i x_i`.
    pub fn kkt_residual(
        &self,
        points: &[SubsystemPoint],
        lambda: &[f64],
        delta: f64,
    ) -> Result<KktResidual> {
        check_len(self.len(), points.len())?;
        check_len(self.n_c(), lambda.len())?;
        let mut blocks = Vec::with_capacity(self.len());
        for (i, p) in points.iter().enumerate() {
            let parts = self.local_residual(i, p, lambda)?;
            blocks.push(parts.stacked_product_form(delta));
        }
        let xs: Vec<&[f64]> = points.iter().map(|p| p.x.as_slice()).collect();
        let coupling: Vec<f64> = self.coupling_residual(&xs).iter().map(|r| -r).collect();
        let inf_norm = blocks
            .iter()
            .map(|b| inf_norm(b))
            .fold(inf_norm(&coupling), f64::max);
        Ok(KktResidual {
            blocks,
            coupling,
            inf_norm,
        })
    }

    /// Residual pieces of subsystem `i` that do not depend on `delta`.
    pub fn local_residual(
        &self,
        i: usize,
        p: &SubsystemPoint,
        lambda: &[f64],
    ) -> Result<LocalResidual> {
        let s = self.subsystem(i)?;
        p.check_dims(s.dims)?;
        if !p.is_strictly_interior() {
            return Err(Error::InteriorViolation { subsystem: i });
        }
        let values = self.evaluate(i, &p.x)?;
        let der = self.evaluate_derivatives(i, &p.x, &p.gamma, &p.mu)?;
        let mut stationarity = der.grad_f.clone();
        for (r, &gamma) in p.gamma.iter().enumerate() {
            crate::linalg::axpy(gamma, der.jac_g.row(r), &mut stationarity);
        }
        for (r, &mu) in p.mu.iter().enumerate() {
            crate::linalg::axpy(mu, der.jac_h.row(r), &mut stationarity);
        }
        s.coupling.tr_mul_vec_add(lambda, &mut stationarity);
        let h_plus_v = values.h.iter().zip(&p.v).map(|(h, v)| h + v).collect();
        Ok(LocalResidual {
            stationarity,
            v: p.v.clone(),
            mu: p.mu.clone(),
            g: values.g,
            h_plus_v,
            objective: values.f,
            h: values.h,
            derivatives: der,
        })
    }

    /// Finite-difference check of the evaluator of subsystem `i`.
    pub fn check_derivatives_fd(
        &self,
        i: usize,
        x: &[f64],
        gamma: &[f64],
        mu: &[f64],
        tol: f64,
    ) -> Result<DerivativeReport> {
        if tol <= 0.0 || tol.is_nan() {
            return Err(Error::Options("derivative tolerance must be positive"));
        }
        let d = self.subsystem(i)?.dims;
        let exact = self.evaluate_derivatives(i, x, gamma, mu)?;
        let step = 1e-7;
        let n = d.n_x;
        let mut fd_grad = vec![0.0; n];
        let mut fd_jg = DenseMatrix::zeros(d.n_g, n);
        let mut fd_jh = DenseMatrix::zeros(d.n_h, n);
        let mut fd_hess = DenseMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let orig = xp[j];
            xp[j] = orig + step;
            let plus = self.evaluate(i, &xp)?;
            let grad_plus = lagrangian_gradient(&self.evaluate_derivatives(i, &xp, gamma, mu)?, gamma, mu);
            xp[j] = orig - step;
            let minus = self.evaluate(i, &xp)?;
            let grad_minus = lagrangian_gradient(&self.evaluate_derivatives(i, &xp, gamma, mu)?, gamma, mu);
            xp[j] = orig;
            let inv = 0.5 / step;
            fd_grad[j] = (plus.f - minus.f) * inv;
            for r in 0..d.n_g {
                fd_jg[(r, j)] = (plus.g[r] - minus.g[r]) * inv;
            }
            for r in 0..d.n_h {
                fd_jh[(r, j)] = (plus.h[r] - minus.h[r]) * inv;
            }
            for r in 0..n {
                fd_hess[(r, j)] = (grad_plus[r] - grad_minus[r]) * inv;
            }
        }
        let gradient = relative_deviation(&exact.grad_f, &fd_grad);
        let jac_g = relative_deviation(exact.jac_g.as_slice(), fd_jg.as_slice());
        let jac_h = relative_deviation(exact.jac_h.as_slice(), fd_jh.as_slice());
        let hessian = relative_deviation(exact.hess_lagrangian.as_slice(), fd_hess.as_slice());
        let worst = gradient.max(jac_g).max(jac_h).max(hessian);
        Ok(DerivativeReport {
            gradient,
            jac_g,
            jac_h,
            hessian,
            tol,
            passed: worst <= tol,
        })
    }
}

fn lagrangian_gradient(d: &Derivatives, gamma: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut g = d.grad_f.clone();
    for (r, &w) in gamma.iter().enumerate() {
        crate::linalg::axpy(w, d.jac_g.row(r), &mut g);
    }
    for (r, &w) in mu.iter().enumerate() {
        crate::linalg::axpy(w, d.jac_h.row(r), &mut g);
    }
    g
}

// max |a - b| / (1 + max |a|)
fn relative_deviation(exact: &[f64], approx: &[f64]) -> f64 {
    let diff = exact
        .iter()
        .zip(approx)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    diff / (1.0 + inf_norm(exact))
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// Primal-dual iterate `(x, v, gamma, mu)` of one subsystem.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsystemPoint {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
}

impl SubsystemPoint {
    pub fn zeros(d: Dims) -> Self {
        Self {
            x: vec![0.0; d.n_x],
            v: vec![0.0; d.n_h],
            gamma: vec![0.0; d.n_g],
            mu: vec![0.0; d.n_h],
        }
    }

    pub fn is_strictly_interior(&self) -> bool {
        self.v.iter().chain(&self.mu).all(|&s| s > 0.0)
    }

    /// Smallest slack or inequality multiplier (`+inf` without inequalities).
    pub fn min_interior(&self) -> f64 {
        self.v
            .iter()
            .chain(&self.mu)
            .fold(f64::INFINITY, |m, &s| m.min(s))
    }

    pub fn check_dims(&self, d: Dims) -> Result<()> {
        check_len(d.n_x, self.x.len())?;
        check_len(d.n_h, self.v.len())?;
        check_len(d.n_g, self.gamma.len())?;
        check_len(d.n_h, self.mu.len())
    }

    /// Stacked `(x, v, gamma, mu)`.
    pub fn to_stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len() + 2 * self.v.len() + self.gamma.len());
        out.extend_from_slice(&self.x);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.gamma);
        out.extend_from_slice(&self.mu);
        out
    }

    pub fn from_stacked(d: Dims, p: &[f64]) -> Result<Self> {
        check_len(d.primal_dual(), p.len())?;
        let (x, rest) = p.split_at(d.n_x);
        let (v, rest) = rest.split_at(d.n_h);
        let (gamma, mu) = rest.split_at(d.n_g);
        Ok(Self {
            x: x.to_vec(),
            v: v.to_vec(),
            gamma: gamma.to_vec(),
            mu: mu.to_vec(),
        })
    }
}

/// Pieces of a subsystem's optimality residual, evaluated once per iterate.
#[derive(Clone, Debug)]
pub struct LocalResidual {
    pub stationarity: Vec<f64>,
    pub v: Vec<f64>,
    pub mu: Vec<f64>,
    pub g: Vec<f64>,
    pub h_plus_v: Vec<f64>,
    pub objective: f64,
    pub h: Vec<f64>,
    pub derivatives: Derivatives,
}

impl LocalResidual {
    /// Blocks with complementarity written as `V mu - delta 1`; this is the
    /// form reported in norms, well defined at `delta = 0`.
    pub fn stacked_product_form(&self, delta: f64) -> Vec<f64> {
        let comp = self.v.iter().zip(&self.mu).map(|(v, m)| v * m - delta);
        self.stack(comp)
    }

    /// Blocks with complementarity written as `delta V^-1 1 - mu`, the form
    /// linearized by the local KKT matrix and used on Newton right-hand sides.
    pub fn stacked_newton_form(&self, delta: f64) -> Vec<f64> {
        let comp = self.v.iter().zip(&self.mu).map(|(v, m)| delta / v - m);
        self.stack(comp)
    }

    fn stack(&self, comp: impl Iterator<Item = f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(
            self.stationarity.len() + 2 * self.v.len() + self.g.len(),
        );
        out.extend_from_slice(&self.stationarity);
        out.extend(comp);
        out.extend_from_slice(&self.g);
        out.extend_from_slice(&self.h_plus_v);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KktResidual {
    /// One stacked block per subsystem.
    pub blocks: Vec<Vec<f64>>,
    /// `b - sum A_i x_i`
    pub coupling: Vec<f64>,
    pub inf_norm: f64,
}

/// Maximum relative deviation `max|exact - fd| / (1 + max|exact|)` per
/// derivative object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeReport {
    pub gradient: f64,
    pub jac_g: f64,
    pub jac_h: f64,
    pub hessian: f64,
    pub tol: f64,
    pub passed: bool,
}

impl DerivativeReport {
    pub fn worst(&self) -> f64 {
        self.gradient.max(self.jac_g).max(self.jac_h).max(self.hessian)
    }
}
