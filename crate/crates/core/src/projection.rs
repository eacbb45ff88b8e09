//! Feasibility and witness construction for `Q + U^T X V + V^T X^T U >= 0`.
//!
//! Solvability is decided by the two projected conditions
//! `U_perp^T Q U_perp >= 0`, `V_perp^T Q V_perp >= 0` together with the coupling
//! condition `ker U ∩ ker V ∩ {xi : xi^T Q xi = 0} ⊂ ker Q`. When they hold, a
//! witness is synthesized through a block-adapted congruence `T` whose column
//! blocks `T1..T5` follow the kernel lattice of `U`, `V` and `Q`.

use crate::error::{Error, Result};
use crate::linalg::{
    self, ensure_finite, hstack, kernel_basis, pinv, spectral_norm, subspace_intersection,
    sym_eigen, trailing_right_singular_vectors, vstack, Matrix, PsdVerdict, SymMatrix, Tolerances,
};

/// The triple `(Q, U, V)` with `Q` of size `p`, `U: m x p`, `V: n x p`.
#[derive(Debug, Clone)]
pub struct ProjectionProblem {
    q: SymMatrix,
    u: Matrix,
    v: Matrix,
    tol: Tolerances,
}

impl ProjectionProblem {
    pub fn new(q: SymMatrix, u: Matrix, v: Matrix, tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        let p = q.dim();
        if u.ncols() != p {
            return Err(Error::dims("ProjectionProblem U", format!("{p} columns"), format!("{}x{}", u.nrows(), u.ncols())));
        }
        if v.ncols() != p {
            return Err(Error::dims("ProjectionProblem V", format!("{p} columns"), format!("{}x{}", v.nrows(), v.ncols())));
        }
        ensure_finite(&u)?;
        ensure_finite(&v)?;
        Ok(ProjectionProblem { q, u, v, tol })
    }

    pub fn q(&self) -> &SymMatrix {
        &self.q
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// `p`, the size of `Q`.
    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    /// Shape `(m, n)` of the unknown `X`.
    pub fn witness_shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    /// `Q + U^T X V + V^T X^T U`.
    pub fn lmi(&self, x: &Matrix) -> Result<SymMatrix> {
        let (m, n) = self.witness_shape();
        if x.shape() != (m, n) {
            return Err(Error::dims("ProjectionProblem::lmi", format!("X of shape {m}x{n}"), format!("{}x{}", x.nrows(), x.ncols())));
        }
        let cross = self.u.transpose() * x * &self.v;
        Ok(SymMatrix::symmetrize(self.q.as_matrix() + &cross + cross.transpose()))
    }

    /// Reference magnitude for relative residual checks on a candidate `X`.
    pub fn residual_scale(&self, x: &Matrix) -> f64 {
        let coupling = 2.0 * spectral_norm(&self.u) * spectral_norm(x) * spectral_norm(&self.v);
        (spectral_norm(self.q.as_matrix()) + coupling).max(1.0)
    }
}

/// Outcome of the coupling condition.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingVerdict {
    Holds,
    /// A vector in `ker U ∩ ker V` with `xi^T Q xi ≈ 0` but `Q xi` not small.
    Violated { vector: Vec<f64>, residual: f64 },
}

impl CouplingVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, CouplingVerdict::Holds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Verdict on `U_perp^T Q U_perp`.
    pub kernel_cond_u: PsdVerdict,
    /// Verdict on `V_perp^T Q V_perp`.
    pub kernel_cond_v: PsdVerdict,
    /// Orthonormal bases of `ker U` and `ker V`.
    pub u_perp: Matrix,
    pub v_perp: Matrix,
    /// The projected forms themselves, in those bases.
    pub projected_u: SymMatrix,
    pub projected_v: SymMatrix,
    pub coupling: CouplingVerdict,
    /// Whether `im U^T ∩ im V^T = {0}`; informational only.
    pub helmersson_holds: bool,
    pub helmersson_dim: usize,
    pub feasible: bool,
}

/// Column basis `T = [T1 T2 T3 T4 T5]` adapted to the kernels of `U`, `V`, `Q`.
#[derive(Debug, Clone)]
pub struct PartitionBasis {
    pub t: Matrix,
    pub widths: [usize; 5],
}

impl PartitionBasis {
    pub fn offset(&self, block: usize) -> usize {
        self.widths[..block].iter().sum()
    }

    /// Columns of block `block` (0-based, so `block(0)` is `T1`).
    pub fn block(&self, block: usize) -> Matrix {
        self.t.columns(self.offset(block), self.widths[block]).into_owned()
    }

    /// Horizontal concatenation of the listed blocks, in order.
    pub fn blocks(&self, which: &[usize]) -> Matrix {
        let parts: Vec<Matrix> = which.iter().map(|&b| self.block(b)).collect();
        let refs: Vec<&Matrix> = parts.iter().collect();
        if refs.is_empty() {
            return Matrix::zeros(self.t.nrows(), 0);
        }
        hstack(&refs)
    }
}

/// `W = T^T Q T` and the chosen free blocks `K, L, M, N = alpha I`.
#[derive(Debug, Clone)]
pub struct TransformedForm {
    pub w: SymMatrix,
    pub k: Matrix,
    pub l: Matrix,
    pub m: Matrix,
    pub n: Matrix,
    pub alpha: f64,
    /// Largest entry of `W` in the rows/columns of `T4` before zeroing.
    pub w4_residual: f64,
    /// `||(I - Y1 Y1^+) Y2||`, zero in exact arithmetic.
    pub range_residual: f64,
}

#[derive(Debug, Clone)]
pub struct EliminationWitness {
    pub x: Matrix,
    pub residual_min_eig: f64,
    pub residual_scale: f64,
    pub basis: PartitionBasis,
    pub blocks: TransformedForm,
}

/// Decides solvability of the non-strict inequality.
pub fn check_conditions(prob: &ProjectionProblem) -> FeasibilityReport {
    let tol = &prob.tol;
    let q = &prob.q;

    let u_perp = kernel_basis(&prob.u, tol);
    let v_perp = kernel_basis(&prob.v, tol);
    let projected_u = q.congruence(&u_perp);
    let projected_v = q.congruence(&v_perp);
    let kernel_cond_u = linalg::is_psd(&projected_u, tol);
    let kernel_cond_v = linalg::is_psd(&projected_v, tol);

    let coupling = coupling_condition(prob);

    let helmersson_dim = subspace_intersection(
        &linalg::image_basis(&prob.u.transpose(), tol),
        &linalg::image_basis(&prob.v.transpose(), tol),
        tol,
    )
    .map(|b| b.ncols())
    .unwrap_or(0);

    let feasible = kernel_cond_u.is_psd() && kernel_cond_v.is_psd() && coupling.holds();
    FeasibilityReport {
        kernel_cond_u,
        kernel_cond_v,
        u_perp,
        v_perp,
        projected_u,
        projected_v,
        coupling,
        helmersson_holds: helmersson_dim == 0,
        helmersson_dim,
        feasible,
    }
}

/// Coupling test on `B = basis(ker U ∩ ker V)`: with `Qt = B^T Q B`, the zero
/// set of the form on `im B` is `B ker(Qt)` when `Qt >= 0`, and the condition
/// holds iff `Q B ker(Qt) ≈ 0`. An indefinite `Qt` always violates it.
fn coupling_condition(prob: &ProjectionProblem) -> CouplingVerdict {
    let tol = &prob.tol;
    let q = prob.q.as_matrix();
    let (b, eig, slack) = common_kernel_form(prob);
    if b.ncols() == 0 {
        return CouplingVerdict::Holds;
    }
    let bound = tol.tol_psd.sqrt() * spectral_norm(q).max(1.0);

    if eig.min() < -slack {
        // isotropic vector mixing the most negative and most positive direction
        let neg = eig.values[0];
        let last = eig.values.len() - 1;
        let pos = eig.values[last];
        let xi = if pos > slack {
            eig.vectors.column(0) / (-neg).sqrt() + eig.vectors.column(last) / pos.sqrt()
        } else {
            eig.vectors.column(0).into_owned()
        };
        let vector = &b * xi;
        let residual = (q * &vector).norm() / vector.norm().max(f64::MIN_POSITIVE);
        return CouplingVerdict::Violated {
            vector: vector.iter().copied().collect(),
            residual,
        };
    }

    let mut worst: Option<(f64, nalgebra::DVector<f64>)> = None;
    for (j, &lambda) in eig.values.iter().enumerate() {
        if lambda > slack {
            break;
        }
        let xi = &b * eig.vectors.column(j);
        let residual = (q * &xi).norm();
        if residual > bound && worst.as_ref().is_none_or(|(r, _)| residual > *r) {
            worst = Some((residual, xi));
        }
    }
    match worst {
        None => CouplingVerdict::Holds,
        Some((residual, xi)) => CouplingVerdict::Violated {
            vector: xi.iter().copied().collect(),
            residual,
        },
    }
}

/// `B = basis(ker U ∩ ker V)`, the eigendecomposition of `B^T Q B` and the
/// slack below which its eigenvalues count as zero.
fn common_kernel_form(prob: &ProjectionProblem) -> (Matrix, linalg::EigenResult, f64) {
    let b = kernel_basis(&vstack(&[&prob.u, &prob.v]), &prob.tol);
    let eig = sym_eigen(&prob.q.congruence(&b));
    let slack = prob.tol.tol_psd * spectral_norm(prob.q.as_matrix()).max(1.0);
    (b, eig, slack)
}

/// Strict projection lemma test: both projected forms positive definite.
pub fn strict_check(prob: &ProjectionProblem) -> bool {
    let tol = &prob.tol;
    let pu = prob.q.congruence(&kernel_basis(&prob.u, tol));
    let pv = prob.q.congruence(&kernel_basis(&prob.v, tol));
    linalg::is_psd(&pu, tol).is_pd() && linalg::is_psd(&pv, tol).is_pd()
}

/// Builds `T` inside-out. `T4` spans the zero set of `Q` on `ker U ∩ ker V`, `T3` completes it
/// within `ker U ∩ ker V`, `T1` and `T2` complete `[T3 T4]` within `ker U` and
/// `ker V`, and `T5` is orthogonal to everything before it. Each block has
/// orthonormal columns and is orthogonal to the blocks it extends.
pub fn build_partition_basis(prob: &ProjectionProblem) -> PartitionBasis {
    let tol = &prob.tol;
    let p = prob.dim();
    let ker_u = kernel_basis(&prob.u, tol);
    let ker_v = kernel_basis(&prob.v, tol);
    let (common, eig, slack) = common_kernel_form(prob);

    // the zero set of the form on im B; eigenvalues ascend
    let zeros = eig.values.iter().take_while(|&&l| l <= slack).count();
    let t4 = &common * eig.vectors.columns(0, zeros);
    let t3 = &common * eig.vectors.columns(zeros, eig.values.len() - zeros);

    let t34 = hstack(&[&t3, &t4]);
    let t1 = &ker_u * kernel_basis(&(t34.transpose() * &ker_u), tol);
    let t2 = &ker_v * kernel_basis(&(t34.transpose() * &ker_v), tol);

    let t1234 = hstack(&[&t1, &t2, &t3, &t4]);
    let used = t1234.ncols().min(p);
    let t5 = trailing_right_singular_vectors(&t1234.transpose(), p - used);

    let widths = [t1.ncols(), t2.ncols(), t3.ncols(), t4.ncols(), t5.ncols()];
    PartitionBasis {
        t: hstack(&[&t1234, &t5]),
        widths,
    }
}

/// Returns `λ_min(Q + U^T X V + V^T X^T U)`.
pub fn verify_witness(prob: &ProjectionProblem, x: &Matrix) -> Result<f64> {
    Ok(linalg::min_eig(&prob.lmi(x)?))
}

/// Constructs `X` with `Q + U^T X V + V^T X^T U >= 0`.
///
/// In the coordinates of `T`, `K` is picked to make the upper-left block `Y1`
/// PSD, `L` and `M` put `Y2` in the range of `Y1`, and `N = alpha I` with
/// `alpha = max(0, λ_max(Y2^T Y1^+ Y2 - W55)) / 2 + 1`.
pub fn construct_witness(prob: &ProjectionProblem) -> Result<EliminationWitness> {
    let report = check_conditions(prob);
    if !report.feasible {
        return Err(Error::InfeasibleProblem {
            reason: infeasibility_reason(&report),
        });
    }
    let tol = &prob.tol;
    let basis = build_partition_basis(prob);
    let [w1, w2, w3, w4, w5] = basis.widths;
    let w_full = prob.q.congruence(&basis.t);
    let scale = spectral_norm(w_full.as_matrix()).max(1.0);

    let o4 = basis.offset(3);
    let w4_residual = if w4 == 0 {
        0.0
    } else {
        w_full.as_matrix().rows(o4, w4).amax()
    };
    if w4_residual > tol.tol_psd.sqrt() * scale {
        return Err(Error::breakdown(
            "rows of T^T Q T through ker U ∩ ker V ∩ ker Q are not negligible",
            w4_residual,
        ));
    }

    let w = w_full.as_matrix();
    let blk = |i: usize, j: usize| -> Matrix {
        w.view((basis.offset(i), basis.offset(j)), (basis.widths[i], basis.widths[j]))
            .into_owned()
    };
    let (w11, w12, w13, w15) = (blk(0, 0), blk(0, 1), blk(0, 2), blk(0, 4));
    let (w22, w23, w25) = (blk(1, 1), blk(1, 2), blk(1, 4));
    let (w33, w35, w55) = (blk(2, 2), blk(2, 4), blk(4, 4));

    let w33_inv = if w3 == 0 {
        Matrix::zeros(0, 0)
    } else {
        let eig = sym_eigen(&SymMatrix::symmetrize(w33.clone()));
        if eig.min() <= tol.tol_rank * scale {
            return Err(Error::breakdown(
                "W33 is not positive definite despite a feasible verdict",
                eig.min(),
            ));
        }
        let mut inv_vecs = eig.vectors.clone();
        for (j, &lambda) in eig.values.iter().enumerate() {
            inv_vecs.column_mut(j).scale_mut(1.0 / lambda);
        }
        inv_vecs * eig.vectors.transpose()
    };

    let k = -w12.transpose() + &w23 * &w33_inv * w13.transpose();
    let m = (-&w15 + &w13 * &w33_inv * &w35).transpose();
    let l = -&w25 + &w23 * &w33_inv * &w35;

    let y1 = {
        let w12k = &w12 + k.transpose();
        let top = hstack(&[&w11, &w12k, &w13]);
        let mid = hstack(&[&w12k.transpose(), &w22, &w23]);
        let bot = hstack(&[&w13.transpose(), &w23.transpose(), &w33]);
        SymMatrix::symmetrize(vstack(&[&top, &mid, &bot]))
    };
    let y2 = vstack(&[&(&w15 + m.transpose()), &(&w25 + &l), &w35]);
    let y1_plus = pinv(y1.as_matrix(), tol);
    let range_residual = if y2.nrows() == 0 || w5 == 0 {
        0.0
    } else {
        let proj = Matrix::identity(y1.dim(), y1.dim()) - y1.as_matrix() * &y1_plus;
        spectral_norm(&(proj * &y2))
    };
    if range_residual > tol.tol_psd.sqrt() * scale {
        return Err(Error::breakdown(
            "Y2 is not in the range of Y1",
            range_residual,
        ));
    }

    let alpha = if w5 == 0 {
        0.0
    } else {
        let coupling = SymMatrix::symmetrize(y2.transpose() * &y1_plus * &y2 - &w55);
        let top = sym_eigen(&coupling).max();
        top.max(0.0) / 2.0 + 1.0
    };
    let n = Matrix::identity(w5, w5) * alpha;

    let klmn = vstack(&[&hstack(&[&k, &l]), &hstack(&[&m, &n])]);
    let u_side = hstack(&[&(&prob.u * basis.block(1)), &(&prob.u * basis.block(4))]).transpose();
    let v_side = hstack(&[&(&prob.v * basis.block(0)), &(&prob.v * basis.block(4))]);
    let x = pinv(&u_side, tol) * klmn * pinv(&v_side, tol);

    let residual_min_eig = verify_witness(prob, &x)?;
    let residual_scale = prob.residual_scale(&x);
    if residual_min_eig < -tol.tol_residual * residual_scale {
        return Err(Error::breakdown(
            "constructed X leaves the inequality violated",
            residual_min_eig,
        ));
    }

    let blocks = TransformedForm {
        w: w_full,
        k,
        l,
        m,
        n,
        alpha,
        w4_residual,
        range_residual,
    };
    debug_assert_eq!(w1 + w2 + w3 + w4 + w5, prob.dim());
    Ok(EliminationWitness {
        x,
        residual_min_eig,
        residual_scale,
        basis,
        blocks,
    })
}

fn infeasibility_reason(report: &FeasibilityReport) -> String {
    let mut parts = Vec::new();
    if !report.kernel_cond_u.is_psd() {
        parts.push(format!(
            "U_perp^T Q U_perp is indefinite (min eig {:e})",
            report.kernel_cond_u.min_eig
        ));
    }
    if !report.kernel_cond_v.is_psd() {
        parts.push(format!(
            "V_perp^T Q V_perp is indefinite (min eig {:e})",
            report.kernel_cond_v.min_eig
        ));
    }
    if let CouplingVerdict::Violated { residual, .. } = &report.coupling {
        parts.push(format!("coupling condition violated (|Q xi| = {residual:e})"));
    }
    parts.join("; ")
}
