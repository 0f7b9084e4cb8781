//! Subsystems whose objective and constraints are all polynomials of degree
//! at most two. Both the JSON test instances and the rectangular-coordinate
//! power flow model fit this form, so one evaluator serves both.

use alloc::vec::Vec;

use crate::linalg::DenseMatrix;
use crate::problem::{Derivatives, Dims, Evaluator, Values};

/// `q(x) = 1/2 x'Qx + l'x + c` with `Q` stored as symmetric triplets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadraticFunction {
    quad: Vec<(usize, usize, f64)>,
    linear: Vec<(usize, f64)>,
    constant: f64,
}

impl QuadraticFunction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_linear(&mut self, i: usize, c: f64) -> &mut Self {
        if c != 0.0 {
            self.linear.push((i, c));
        }
        self
    }

    /// Adds the monomial `c * x_i * x_j`.
    pub fn add_product(&mut self, i: usize, j: usize, c: f64) -> &mut Self {
        if c == 0.0 {
            return self;
        }
        if i == j {
            self.quad.push((i, i, 2.0 * c));
        } else {
            self.quad.push((i, j, c));
            self.quad.push((j, i, c));
        }
        self
    }

    /// Adds a raw entry to `Q` (caller keeps `Q` symmetric).
    pub fn add_hessian_entry(&mut self, i: usize, j: usize, q: f64) -> &mut Self {
        if q != 0.0 {
            self.quad.push((i, j, q));
        }
        self
    }

    pub fn max_index(&self) -> Option<usize> {
        let q = self.quad.iter().map(|e| e.0.max(e.1));
        let l = self.linear.iter().map(|e| e.0);
        q.chain(l).max()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let quad: f64 = self.quad.iter().map(|&(i, j, q)| q * x[i] * x[j]).sum();
        let lin: f64 = self.linear.iter().map(|&(i, c)| c * x[i]).sum();
        0.5 * quad + lin + self.constant
    }

    /// `out += scale * (Qx + l)`
    pub fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for &(i, j, q) in &self.quad {
            out[i] += scale * q * x[j];
        }
        for &(i, c) in &self.linear {
            out[i] += scale * c;
        }
    }

    /// `out += scale * Q`
    pub fn add_hessian(&self, scale: f64, out: &mut DenseMatrix) {
        if scale == 0.0 {
            return;
        }
        for &(i, j, q) in &self.quad {
            out[(i, j)] += scale * q;
        }
    }
}

/// Evaluator over quadratic objective, equality and inequality functions.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSubsystem {
    n_x: usize,
    objective: QuadraticFunction,
    equalities: Vec<QuadraticFunction>,
    inequalities: Vec<QuadraticFunction>,
}

impl QuadraticSubsystem {
    /// Panics if any function references a variable index `>= n_x`.
    pub fn new(
        n_x: usize,
        objective: QuadraticFunction,
        equalities: Vec<QuadraticFunction>,
        inequalities: Vec<QuadraticFunction>,
    ) -> Self {
        let all = core::iter::once(&objective)
            .chain(&equalities)
            .chain(&inequalities);
        for f in all {
            if let Some(m) = f.max_index() {
                assert!(m < n_x, "variable index {m} out of range (n_x = {n_x})");
            }
        }
        Self {
            n_x,
            objective,
            equalities,
            inequalities,
        }
    }

    pub fn objective(&self) -> &QuadraticFunction {
        &self.objective
    }

    pub fn equalities(&self) -> &[QuadraticFunction] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[QuadraticFunction] {
        &self.inequalities
    }
}

impl Evaluator for QuadraticSubsystem {
    fn dims(&self) -> Dims {
        Dims {
            n_x: self.n_x,
            n_g: self.equalities.len(),
            n_h: self.inequalities.len(),
        }
    }

    fn values(&self, x: &[f64]) -> Values {
        Values {
            f: self.objective.value(x),
            g: self.equalities.iter().map(|q| q.value(x)).collect(),
            h: self.inequalities.iter().map(|q| q.value(x)).collect(),
        }
    }

    fn derivatives(&self, x: &[f64], gamma: &[f64], mu: &[f64]) -> Derivatives {
        let n = self.n_x;
        let mut grad_f = alloc::vec![0.0; n];
        self.objective.add_gradient(x, 1.0, &mut grad_f);
        let mut jac_g = DenseMatrix::zeros(self.equalities.len(), n);
        for (r, q) in self.equalities.iter().enumerate() {
            q.add_gradient(x, 1.0, jac_g.row_mut(r));
        }
        let mut jac_h = DenseMatrix::zeros(self.inequalities.len(), n);
        for (r, q) in self.inequalities.iter().enumerate() {
            q.add_gradient(x, 1.0, jac_h.row_mut(r));
        }
        let mut hess = DenseMatrix::zeros(n, n);
        self.objective.add_hessian(1.0, &mut hess);
        for (q, &w) in self.equalities.iter().zip(gamma) {
            q.add_hessian(w, &mut hess);
        }
        for (q, &w) in self.inequalities.iter().zip(mu) {
            q.add_hessian(w, &mut hess);
        }
        Derivatives {
            grad_f,
            jac_g,
            jac_h,
            hess_lagrangian: hess,
        }
    }
}
