//! Per-subsystem work of one outer iteration: the local primal-dual KKT
//! block, its factorization, the Schur contribution `(S_i, s_i)`, recovery of
//! the local step from `dlambda`, and local stepsize / barrier surrogates.
//!
//! The local matrix acts on `(dx, dv, dgamma, dmu)` with block rows
//!
//! ```text
//! [ H    0     Jg'  Jh' ]
//! [ 0   -V^-1M  0   -I  ]
//! [ Jg   0     0    0   ]
//! [ Jh   I     0    0   ]
//! ```
//!
//! which is the exact linearization of the residual whose complementarity
//! row is `delta V^-1 1 - mu` after substituting `delta V^-2 -> V^-1 M`.
//! Solves eliminate the diagonal slack/multiplier rows and factor the
//! condensed symmetric matrix `[H + Jh'DJh + rho I, Jg'; Jg, 0]`,
//! `D = V^-1 M`, with a Bunch-Kaufman LDL'.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, CooMatrix, DenseMatrix, FactorError, Inertia, Ldlt};
use crate::problem::{Derivatives, Dims, SubsystemPoint};

/// Escalating Tikhonov shift `rho = first * growth^j` on the Hessian block,
/// `j = 0..attempts`, tried after the unshifted matrix fails.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizationPolicy {
    pub first: f64,
    pub growth: f64,
    pub attempts: usize,
    /// Also escalate when the condensed matrix does not have inertia
    /// `(n_x, n_g, 0)`, so that `S_i` is positive semidefinite. Off by
    /// default: on OPF regions without an angle reference this needs shifts
    /// large enough to stall the outer iteration.
    pub correct_inertia: bool,
}

impl Default for RegularizationPolicy {
    fn default() -> Self {
        Self {
            first: 1e-8,
            growth: 10.0,
            attempts: 9,
            correct_inertia: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LocalKkt {
    subsystem: usize,
    dims: Dims,
    hessian: DenseMatrix,
    jac_g: DenseMatrix,
    jac_h: DenseMatrix,
    // V^-1 M
    diag: Vec<f64>,
    regularization: f64,
    factor: Option<Ldlt>,
    inertia_ok: bool,
    solves: Cell<usize>,
}

/// Builds the local KKT block of subsystem `subsystem` at `point`.
///
/// `delta` does not enter the matrix (the slack row uses `V^-1 M`), it is
/// accepted so call sites read like the residual they linearize.
pub fn assemble_local_kkt(
    subsystem: usize,
    dims: Dims,
    derivatives: &Derivatives,
    point: &SubsystemPoint,
    _delta: f64,
) -> Result<LocalKkt> {
    point.check_dims(dims)?;
    if !point.is_strictly_interior() {
        return Err(Error::InteriorViolation { subsystem });
    }
    let diag: Vec<f64> = point.mu.iter().zip(&point.v).map(|(m, v)| m / v).collect();
    if diag.iter().any(|d| !d.is_finite()) {
        return Err(Error::Evaluation {
            subsystem,
            message: "non-finite V^-1 M".into(),
        });
    }
    Ok(LocalKkt {
        subsystem,
        dims,
        hessian: derivatives.hess_lagrangian.clone(),
        jac_g: derivatives.jac_g.clone(),
        jac_h: derivatives.jac_h.clone(),
        diag,
        regularization: 0.0,
        factor: None,
        inertia_ok: false,
        solves: Cell::new(0),
    })
}

impl LocalKkt {
    /// Builds a block directly from its pieces (used by tests and oracles).
    pub fn from_blocks(
        subsystem: usize,
        hessian: DenseMatrix,
        jac_g: DenseMatrix,
        jac_h: DenseMatrix,
        v: &[f64],
        mu: &[f64],
    ) -> Self {
        let dims = Dims {
            n_x: hessian.nrows(),
            n_g: jac_g.nrows(),
            n_h: jac_h.nrows(),
        };
        Self {
            subsystem,
            dims,
            hessian,
            jac_g,
            jac_h,
            diag: mu.iter().zip(v).map(|(m, v)| m / v).collect(),
            regularization: 0.0,
            factor: None,
            inertia_ok: false,
            solves: Cell::new(0),
        }
    }

    pub fn subsystem(&self) -> usize {
        self.subsystem
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.primal_dual()
    }

    pub fn regularization_applied(&self) -> f64 {
        self.regularization
    }

    pub fn is_factorized(&self) -> bool {
        self.factor.is_some()
    }

    /// Whether the accepted factorization had the target inertia.
    pub fn inertia_ok(&self) -> bool {
        self.inertia_ok
    }

    pub fn solve_count(&self) -> usize {
        self.solves.get()
    }

    /// The assembled block matrix without regularization.
    pub fn matrix(&self) -> DenseMatrix {
        self.dense(0.0)
    }

    /// The matrix whose factorization is held, i.e. including `rho I` on the
    /// Hessian block.
    pub fn regularized_matrix(&self) -> DenseMatrix {
        self.dense(self.regularization)
    }

    fn dense(&self, rho: f64) -> DenseMatrix {
        let Dims { n_x, n_g, n_h } = self.dims;
        let (ov, og, om) = (n_x, n_x + n_h, n_x + n_h + n_g);
        let mut m = DenseMatrix::zeros(self.order(), self.order());
        m.set_block(0, 0, &self.hessian);
        for i in 0..n_x {
            m[(i, i)] += rho;
        }
        for r in 0..n_g {
            for c in 0..n_x {
                let v = self.jac_g[(r, c)];
                m[(c, og + r)] = v;
                m[(og + r, c)] = v;
            }
        }
        for r in 0..n_h {
            for c in 0..n_x {
                let v = self.jac_h[(r, c)];
                m[(c, om + r)] = v;
                m[(om + r, c)] = v;
            }
            m[(ov + r, ov + r)] = -self.diag[r];
            m[(ov + r, om + r)] = -1.0;
            m[(om + r, ov + r)] = 1.0;
        }
        m
    }

    /// Condensed symmetric matrix `[H + Jh'DJh + rho I, Jg'; Jg, 0]`.
    pub fn condensed_matrix(&self, rho: f64) -> DenseMatrix {
        let Dims { n_x, n_g, n_h } = self.dims;
        let mut k = DenseMatrix::zeros(n_x + n_g, n_x + n_g);
        for i in 0..n_x {
            k.row_mut(i)[..n_x].copy_from_slice(self.hessian.row(i));
            k[(i, i)] += rho;
        }
        let mut nz = Vec::new();
        for r in 0..n_h {
            let row = self.jac_h.row(r);
            nz.clear();
            nz.extend(row.iter().enumerate().filter(|e| *e.1 != 0.0).map(|e| e.0));
            let d = self.diag[r];
            for &a in &nz {
                let da = d * row[a];
                for &b in &nz {
                    k[(a, b)] += da * row[b];
                }
            }
        }
        for r in 0..n_g {
            for c in 0..n_x {
                let v = self.jac_g[(r, c)];
                k[(c, n_x + r)] = v;
                k[(n_x + r, c)] = v;
            }
        }
        k
    }

    /// Factorizes, escalating the Hessian shift as the policy allows.
    pub fn factorize(&mut self, policy: &RegularizationPolicy) -> Result<()> {
        let shifts = core::iter::once(0.0)
            .chain((0..policy.attempts).map(|j| policy.first * libm::pow(policy.growth, j as f64)));
        let Dims { n_x, n_g, .. } = self.dims;
        let target = Inertia {
            positive: n_x,
            negative: n_g,
            zero: 0,
        };
        let mut last_err = None;
        let mut fallback = None;
        for rho in shifts {
            match Ldlt::factor(self.condensed_matrix(rho)) {
                Ok(f) => {
                    let ok = f.inertia() == target;
                    if ok || !policy.correct_inertia {
                        self.install(f, rho, ok);
                        return Ok(());
                    }
                    fallback = Some((f, rho));
                }
                Err(e) => last_err = Some(e),
            }
        }
        // nonsingular but inertia never corrected: keep the largest shift
        if let Some((f, rho)) = fallback {
            self.install(f, rho, false);
            return Ok(());
        }
        Err(Error::Factorization {
            subsystem: self.subsystem,
            source: last_err.unwrap_or(FactorError::NonFinite),
        })
    }

    fn install(&mut self, f: Ldlt, rho: f64, inertia_ok: bool) {
        self.factor = Some(f);
        self.regularization = rho;
        self.inertia_ok = inertia_ok;
    }

    /// Right-hand side of the condensed system for a full right-hand side
    /// `r = (r_x, r_v, r_gamma, r_mu)`.
    pub fn condense_rhs(&self, r: &[f64]) -> Vec<f64> {
        let Dims { n_x, n_g, n_h } = self.dims;
        assert_eq!(r.len(), self.order());
        let (rx, rest) = r.split_at(n_x);
        let (rv, rest) = rest.split_at(n_h);
        let (rg, rm) = rest.split_at(n_g);
        let mut out = Vec::with_capacity(n_x + n_g);
        out.extend_from_slice(rx);
        for j in 0..n_h {
            let w = rv[j] + self.diag[j] * rm[j];
            if w != 0.0 {
                axpy(w, self.jac_h.row(j), &mut out[..n_x]);
            }
        }
        out.extend_from_slice(rg);
        out
    }

    /// Full solution from the condensed one: `dv = r_mu - Jh dx`,
    /// `dmu = -r_v - D dv`.
    pub fn expand_solution(&self, r: &[f64], condensed: &[f64]) -> Vec<f64> {
        let Dims { n_x, n_g, n_h } = self.dims;
        let (dx, dgamma) = condensed.split_at(n_x);
        let rv = &r[n_x..n_x + n_h];
        let rm = &r[n_x + n_h + n_g..];
        let dv: Vec<f64> = (0..n_h)
            .map(|j| rm[j] - dot(self.jac_h.row(j), dx))
            .collect();
        let dmu: Vec<f64> = (0..n_h).map(|j| -rv[j] - self.diag[j] * dv[j]).collect();
        let mut out = Vec::with_capacity(self.order());
        out.extend_from_slice(dx);
        out.extend_from_slice(&dv);
        out.extend_from_slice(dgamma);
        out.extend_from_slice(&dmu);
        out
    }

    /// Solves `K z = r` with the held factorization.
    ///
    /// Panics if `factorize` has not succeeded.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let f = self.factor.as_ref().expect("local KKT not factorized");
        self.solves.set(self.solves.get() + 1);
        let condensed = f.solve(&self.condense_rhs(r));
        self.expand_solution(r, &condensed)
    }
}

/// Coupling-space contribution of one subsystem:
/// `S_i = A~ K^-1 A~'` and `s_i = A x - A~ K^-1 F - b / |S|`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchurContribution {
    pub matrix: DenseMatrix,
    pub vector: Vec<f64>,
}

/// Forms `(S_i, s_i)`. Only coupling rows where `A_i` has nonzeros cost a
/// local solve.
pub fn schur_contribution(
    kkt: &LocalKkt,
    coupling: &CooMatrix,
    newton_residual: &[f64],
    x: &[f64],
    b: &[f64],
    n_subsystems: usize,
) -> SchurContribution {
    let n_c = coupling.nrows();
    let order = kkt.order();
    let mut s = DenseMatrix::zeros(n_c, n_c);
    let mut rhs = vec![0.0; order];
    for r in coupling.nonzero_rows() {
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for (c, a) in coupling.row_entries(r) {
            rhs[c] += a;
        }
        let z = kkt.solve(&rhs);
        let col = coupling.mul_vec(&z[..x.len()]);
        for (i, v) in col.into_iter().enumerate() {
            s[(i, r)] = v;
        }
    }
    s.symmetrize();
    let y = kkt.solve(newton_residual);
    let ax = coupling.mul_vec(x);
    let ay = coupling.mul_vec(&y[..x.len()]);
    let share = 1.0 / n_subsystems as f64;
    let vector = (0..n_c).map(|i| ax[i] - ay[i] - share * b[i]).collect();
    SchurContribution { matrix: s, vector }
}

/// `dp_i = -K^-1 (F_i + A~' dlambda)`
pub fn back_substitute(
    kkt: &LocalKkt,
    newton_residual: &[f64],
    coupling: &CooMatrix,
    dlambda: &[f64],
) -> Vec<f64> {
    let mut rhs = newton_residual.to_vec();
    let n_x = kkt.dims().n_x;
    coupling.tr_mul_vec_add(dlambda, &mut rhs[..n_x]);
    rhs.iter_mut().for_each(|v| *v = -*v);
    kkt.solve(&rhs)
}

/// Fraction-to-boundary stepsizes `(alpha_p, alpha_d)` over slacks and
/// inequality multipliers.
pub fn local_fraction_to_boundary(point: &SubsystemPoint, step: &SubsystemPoint, tau: f64) -> (f64, f64) {
    (
        fraction_to_boundary(&point.v, &step.v, tau),
        fraction_to_boundary(&point.mu, &step.mu, tau),
    )
}

fn fraction_to_boundary(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    let limit = z
        .iter()
        .zip(dz)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&z, &d)| -z / d)
        .fold(f64::INFINITY, f64::min);
    if limit.is_finite() {
        (tau * limit).min(1.0)
    } else {
        1.0
    }
}

/// `sigma * v'mu / n_h`, zero without inequalities.
pub fn local_barrier_candidate(point: &SubsystemPoint, sigma: f64) -> f64 {
    let n_h = point.v.len();
    if n_h == 0 {
        0.0
    } else {
        sigma * dot(&point.v, &point.mu) / n_h as f64
    }
}
