//! Contractive completion of `[A B; C ?]`.
//!
//! `||[A B; C D]|| <= 1` is written as `Q + U^T D V + V^T D^T U >= 0` with
//! `Q = [I 0 A B; 0 I C 0; A^T C^T I 0; B^T 0 0 I]`, `U` selecting the second
//! block row and `V` the fourth, and `D` is read off the projection witness.

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, hstack, spectral_norm, vstack, Matrix, SymMatrix, Tolerances};
use crate::projection::{construct_witness, ProjectionProblem};

#[derive(Debug, Clone)]
pub struct DilationProblem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    tol: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilationConditions {
    /// `||[A B]||`
    pub row_norm: f64,
    /// `||[A; C]||`
    pub col_norm: f64,
    pub row_ok: bool,
    pub col_ok: bool,
}

impl DilationConditions {
    pub fn holds(&self) -> bool {
        self.row_ok && self.col_ok
    }
}

impl DilationProblem {
    /// `A: m x n`, `B: m x p`, `C: q x n`.
    pub fn new(a: Matrix, b: Matrix, c: Matrix, tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        if b.nrows() != a.nrows() {
            return Err(Error::dims("DilationProblem B", format!("{} rows", a.nrows()), format!("{}x{}", b.nrows(), b.ncols())));
        }
        if c.ncols() != a.ncols() {
            return Err(Error::dims("DilationProblem C", format!("{} columns", a.ncols()), format!("{}x{}", c.nrows(), c.ncols())));
        }
        for x in [&a, &b, &c] {
            ensure_finite(x)?;
        }
        Ok(DilationProblem { a, b, c, tol })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// Shape `(q, p)` of the missing block.
    pub fn completion_shape(&self) -> (usize, usize) {
        (self.c.nrows(), self.b.ncols())
    }

    pub fn assemble(&self, d: &Matrix) -> Result<Matrix> {
        let (q, p) = self.completion_shape();
        if d.shape() != (q, p) {
            return Err(Error::dims("DilationProblem::assemble", format!("D of shape {q}x{p}"), format!("{}x{}", d.nrows(), d.ncols())));
        }
        Ok(vstack(&[&hstack(&[&self.a, &self.b]), &hstack(&[&self.c, d])]))
    }

    /// The projection data `(Q, U, V)` whose witness is `D`.
    pub fn projection_problem(&self) -> Result<ProjectionProblem> {
        let (m, n) = self.a.shape();
        let (q, p) = self.completion_shape();
        let total = m + q + n + p;
        let mut qm = Matrix::identity(total, total);
        let (r1, r2, r3, r4) = (0, m, m + q, m + q + n);
        qm.view_mut((r1, r3), (m, n)).copy_from(&self.a);
        qm.view_mut((r1, r4), (m, p)).copy_from(&self.b);
        qm.view_mut((r2, r3), (q, n)).copy_from(&self.c);
        qm.view_mut((r3, r1), (n, m)).copy_from(&self.a.transpose());
        qm.view_mut((r4, r1), (p, m)).copy_from(&self.b.transpose());
        qm.view_mut((r3, r2), (n, q)).copy_from(&self.c.transpose());

        let mut u = Matrix::zeros(q, total);
        u.view_mut((0, r2), (q, q)).fill_with_identity();
        let mut v = Matrix::zeros(p, total);
        v.view_mut((0, r4), (p, p)).fill_with_identity();
        ProjectionProblem::new(SymMatrix::symmetrize(qm), u, v, self.tol)
    }
}

/// Both norm conditions, accepted up to `1 + tol_residual`.
pub fn check_dilation_conditions(prob: &DilationProblem) -> DilationConditions {
    let row_norm = spectral_norm(&hstack(&[&prob.a, &prob.b]));
    let col_norm = spectral_norm(&vstack(&[&prob.a, &prob.c]));
    let bound = 1.0 + prob.tol.tol_residual;
    DilationConditions {
        row_norm,
        col_norm,
        row_ok: row_norm <= bound,
        col_ok: col_norm <= bound,
    }
}

/// Returns `D` with `||[A B; C D]|| <= 1 + tol_residual`.
pub fn complete(prob: &DilationProblem) -> Result<Matrix> {
    let cond = check_dilation_conditions(prob);
    if !cond.holds() {
        return Err(Error::ConditionsViolated {
            row_norm: cond.row_norm,
            col_norm: cond.col_norm,
        });
    }
    let (q, p) = prob.completion_shape();
    if q == 0 || p == 0 {
        return Ok(Matrix::zeros(q, p));
    }
    let d = construct_witness(&prob.projection_problem()?)?.x;
    let norm = verify_dilation(prob, &d)?;
    if norm > 1.0 + prob.tol.tol_residual {
        return Err(Error::breakdown("completed matrix exceeds unit norm", norm));
    }
    Ok(d)
}

/// `||[A B; C D]||`.
pub fn verify_dilation(prob: &DilationProblem, d: &Matrix) -> Result<f64> {
    Ok(spectral_norm(&prob.assemble(d)?))
}
