//! Dense real matrix kernels with tolerance-aware rank and definiteness decisions.
//!
//! Every rank decision in the crate goes through [`numerical_rank`]: a singular
//! value counts as zero when `sigma <= tol_rank * sigma_max * max(rows, cols)`.
//! Definiteness decisions compare eigenvalues against `tol_psd * max(1, |lambda|_max)`.
//!
//! Matrices with a zero dimension are ordinary values here. The kernel of an
//! `r x 0` map is `0 x 0`, the kernel of a `0 x c` map is `I_c`, and the minimum
//! eigenvalue of a `0 x 0` form is `+inf` (vacuously definite).

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Dense real matrix; the carrier type for every operator in the crate.
pub type Matrix = DMatrix<f64>;

/// Relative tolerances used by rank, definiteness and verification decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative singular-value cutoff for rank decisions.
    pub tol_rank: f64,
    /// Relative eigenvalue slack for PSD/PD verdicts.
    pub tol_psd: f64,
    /// Relative slack accepted when symmetrizing input.
    pub tol_sym: f64,
    /// Relative slack for verifying constructed witnesses.
    pub tol_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_rank: 1e-10,
            tol_psd: 1e-9,
            tol_sym: 1e-12,
            tol_residual: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn strict() -> Self {
        Tolerances {
            tol_rank: 1e-12,
            tol_psd: 1e-11,
            tol_sym: 1e-14,
            tol_residual: 1e-10,
        }
    }

    pub fn loose() -> Self {
        Tolerances {
            tol_rank: 1e-8,
            tol_psd: 1e-7,
            tol_sym: 1e-10,
            tol_residual: 1e-6,
        }
    }

    /// Checks that every tolerance is finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        let all = [self.tol_rank, self.tol_psd, self.tol_sym, self.tol_residual];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            Err(Error::HypothesisViolated(
                "tolerances must be finite and strictly positive".into(),
            ))
        }
    }
}

/// Square symmetric matrix, stored symmetrized as `(M + M^T) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Accepts `m` if it is square, finite and symmetric up to
    /// `tol_sym * (1 + max |m_ij|)`.
    pub fn new(m: Matrix, tol: &Tolerances) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims(
                "SymMatrix::new",
                "square matrix",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        ensure_finite(&m)?;
        let asymmetry = (&m - m.transpose()).amax();
        let bound = tol.tol_sym * (1.0 + m.amax());
        if asymmetry > bound {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes without checking; panics if `m` is not square.
    pub fn symmetrize(m: Matrix) -> Self {
        assert!(m.is_square(), "SymMatrix requires a square matrix");
        let sym = (&m + m.transpose()) * 0.5;
        SymMatrix(sym)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        SymMatrix(Matrix::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Congruence `B^T M B`.
    pub fn congruence(&self, b: &Matrix) -> SymMatrix {
        SymMatrix::symmetrize(b.transpose() * &self.0 * b)
    }

    /// Principal submatrix on a contiguous index range.
    pub fn block(&self, start: usize, len: usize) -> SymMatrix {
        SymMatrix(self.0.view((start, start), (len, len)).into_owned())
    }
}

impl AsRef<Matrix> for SymMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, column `i` pairs with `values[i]`.
    pub vectors: Matrix,
}

impl EigenResult {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// `max(1, |lambda|_max)`; the reference magnitude for relative PSD slack.
    pub fn scale(&self) -> f64 {
        self.values.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdVerdict {
    pub class: Definiteness,
    /// Smallest eigenvalue; `+inf` for an empty matrix.
    pub min_eig: f64,
}

impl PsdVerdict {
    pub fn is_psd(&self) -> bool {
        self.class != Definiteness::Indefinite
    }

    pub fn is_pd(&self) -> bool {
        self.class == Definiteness::PositiveDefinite
    }
}

/// Sub-verdicts of the pseudoinverse Schur complement test for `[Q S; S^T R]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurVerdict {
    pub r_psd: bool,
    pub complement_psd: bool,
    /// `||S (I - R R^+)||` is within tolerance.
    pub range_ok: bool,
    pub r_min_eig: f64,
    pub complement_min_eig: f64,
    pub range_residual: f64,
    /// `R` was treated as nonsingular and inverted directly.
    pub used_inverse: bool,
    pub psd: bool,
}

pub(crate) fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn shape(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

/// Number of singular values above `tol_rank * sigma_max * max(rows, cols)`.
pub fn numerical_rank(singular_values: &[f64], rows: usize, cols: usize, tol: &Tolerances) -> usize {
    rank_against(singular_values, 0.0, rows, cols, tol)
}

/// As [`numerical_rank`], with `sigma_max` replaced by `max(sigma_max, reference)`.
fn rank_against(singular_values: &[f64], reference: f64, rows: usize, cols: usize, tol: &Tolerances) -> usize {
    let smax = singular_values.iter().fold(reference, |a, &s| a.max(s));
    if smax == 0.0 {
        return 0;
    }
    let cutoff = tol.tol_rank * smax * rows.max(cols) as f64;
    singular_values.iter().filter(|&&s| s > cutoff).count()
}

/// Full singular value decomposition `A = U diag(sigma) V^T` with `U` of size
/// `r x r`, `V` of size `c x c` and `sigma` descending, of length `min(r, c)`.
/// Computed by faer: nalgebra's SVD loses accuracy on matrices with repeated
/// zero singular values.
struct Svd {
    u: Matrix,
    sigma: Vec<f64>,
    v: Matrix,
}

fn svd(a: &Matrix) -> Svd {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Svd {
            u: Matrix::identity(r, r),
            sigma: Vec::new(),
            v: Matrix::identity(c, c),
        };
    }
    let f = faer::Mat::<f64>::from_fn(r, c, |i, j| a[(i, j)]);
    let dec = f.svd().expect("SVD of a finite matrix converges");
    let (u, s, v) = (dec.U(), dec.S(), dec.V());
    let k = r.min(c);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let sigma = order.iter().map(|&i| s[i]).collect();
    let mut um = Matrix::from_fn(r, r, |i, j| u[(i, j)]);
    let mut vm = Matrix::from_fn(c, c, |i, j| v[(i, j)]);
    let (u0, v0) = (um.clone(), vm.clone());
    for (dst, &src) in order.iter().enumerate() {
        um.set_column(dst, &u0.column(src));
        vm.set_column(dst, &v0.column(src));
    }
    Svd { u: um, sigma, v: vm }
}

/// Singular values, descending.
fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let f = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let mut s = f.singular_values().expect("SVD of a finite matrix converges");
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Singular values padded with zeros to length `cols`, and the full right
/// singular basis.
fn right_singular_system(a: &Matrix) -> (Vec<f64>, Matrix) {
    let c = a.ncols();
    let mut d = svd(a);
    d.sigma.resize(c, 0.0);
    (d.sigma, d.v)
}

/// Orthonormal basis of `ker A` (`cols(A) x (cols(A) - rank A)`).
pub fn kernel_basis(a: &Matrix, tol: &Tolerances) -> Matrix {
    let (r, c) = a.shape();
    let (sigma, v) = right_singular_system(a);
    let rank = numerical_rank(&sigma, r, c, tol);
    v.columns(rank, c - rank).into_owned()
}

/// Kernel of a matrix formed from terms of size `reference`, so that a matrix
/// that is zero up to rounding has a full kernel.
pub fn kernel_basis_scaled(a: &Matrix, reference: f64, tol: &Tolerances) -> Matrix {
    let (r, c) = a.shape();
    let (sigma, v) = right_singular_system(a);
    let rank = rank_against(&sigma, reference, r, c, tol);
    v.columns(rank, c - rank).into_owned()
}

/// Exactly `count` right singular vectors of `a` belonging to its smallest
/// singular values. Used to complete bases when the dimension is known.
pub fn trailing_right_singular_vectors(a: &Matrix, count: usize) -> Matrix {
    let c = a.ncols();
    assert!(count <= c, "cannot take {count} vectors from a {c}-dimensional space");
    let (_, v) = right_singular_system(a);
    v.columns(c - count, count).into_owned()
}

/// Orthonormal basis of `im A` with rank decided by `tol_rank`.
pub fn image_basis(a: &Matrix, tol: &Tolerances) -> Matrix {
    let (r, c) = a.shape();
    let d = svd(a);
    let rank = numerical_rank(&d.sigma, r, c, tol);
    d.u.columns(0, rank).into_owned()
}

/// Exactly `count` leading left singular vectors of `a`.
pub fn leading_left_singular_vectors(a: &Matrix, count: usize) -> Matrix {
    let (r, c) = a.shape();
    assert!(count <= r.min(c), "rank {count} exceeds matrix shape {r}x{c}");
    svd(a).u.columns(0, count).into_owned()
}

pub fn rank(a: &Matrix, tol: &Tolerances) -> usize {
    let (r, c) = a.shape();
    numerical_rank(&singular_values(a), r, c, tol)
}

/// Orthonormal basis of `im B1 ∩ im B2`, from the kernel of `[B1 -B2]`.
pub fn subspace_intersection(b1: &Matrix, b2: &Matrix, tol: &Tolerances) -> Result<Matrix> {
    if b1.nrows() != b2.nrows() {
        return Err(Error::dims(
            "subspace_intersection",
            format!("{} rows", b1.nrows()),
            shape(b2),
        ));
    }
    let n = b1.nrows();
    let (k1, k2) = (b1.ncols(), b2.ncols());
    if k1 == 0 || k2 == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    let mut stacked = Matrix::zeros(n, k1 + k2);
    stacked.columns_mut(0, k1).copy_from(b1);
    stacked.columns_mut(k1, k2).copy_from(&(-b2));
    let ker = kernel_basis(&stacked, tol);
    if ker.ncols() == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    let common = b1 * ker.rows(0, k1);
    Ok(image_basis(&common, tol))
}

/// Moore-Penrose pseudoinverse with rank cutoff `tol_rank`.
pub fn pinv(a: &Matrix, tol: &Tolerances) -> Matrix {
    let (r, c) = a.shape();
    let d = svd(a);
    let rank = numerical_rank(&d.sigma, r, c, tol);
    let mut out = Matrix::zeros(c, r);
    for i in 0..rank {
        out += d.v.column(i) * d.u.column(i).transpose() / d.sigma[i];
    }
    out
}

/// Full symmetric eigendecomposition, eigenvalues ascending.
pub fn sym_eigen(m: &SymMatrix) -> EigenResult {
    let n = m.dim();
    if n == 0 {
        return EigenResult {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    EigenResult { values, vectors }
}

/// Smallest eigenvalue of a symmetric matrix, `+inf` when empty.
pub fn min_eig(m: &SymMatrix) -> f64 {
    if m.dim() == 0 {
        return f64::INFINITY;
    }
    m.as_matrix()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}

pub fn is_psd(m: &SymMatrix, tol: &Tolerances) -> PsdVerdict {
    classify(&sym_eigen(m), tol)
}

pub(crate) fn classify(eig: &EigenResult, tol: &Tolerances) -> PsdVerdict {
    let min_eig = eig.min();
    let slack = tol.tol_psd * eig.scale();
    let class = if eig.values.is_empty() || min_eig > slack {
        Definiteness::PositiveDefinite
    } else if min_eig >= -slack {
        Definiteness::PositiveSemidefinite
    } else {
        Definiteness::Indefinite
    };
    PsdVerdict { class, min_eig }
}

/// PSD square root; eigenvalues within the PSD slack below zero are clamped.
pub fn psd_sqrt(m: &SymMatrix, tol: &Tolerances) -> Result<SymMatrix> {
    let eig = sym_eigen(m);
    let verdict = classify(&eig, tol);
    if !verdict.is_psd() {
        return Err(Error::IndefiniteInput {
            min_eig: verdict.min_eig,
        });
    }
    let n = m.dim();
    let mut scaled = eig.vectors.clone();
    for (j, &lambda) in eig.values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lambda.max(0.0).sqrt());
    }
    let root = if n == 0 {
        Matrix::zeros(0, 0)
    } else {
        &scaled * eig.vectors.transpose()
    };
    Ok(SymMatrix::symmetrize(root))
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(a: &Matrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Smallest and largest singular value, as `(min, max)`; zeros when empty.
pub fn singular_extremes(a: &Matrix) -> (f64, f64) {
    let s = singular_values(a);
    match (s.last(), s.first()) {
        (Some(&min), Some(&max)) => (min, max),
        _ => (0.0, 0.0),
    }
}

/// Assembles the symmetric block matrix `[Q S; S^T R]`.
pub fn assemble_block(q: &SymMatrix, s: &Matrix, r: &SymMatrix) -> Result<SymMatrix> {
    let (m, n) = (q.dim(), r.dim());
    if s.shape() != (m, n) {
        return Err(Error::dims("assemble_block", format!("S of shape {m}x{n}"), shape(s)));
    }
    let mut out = Matrix::zeros(m + n, m + n);
    out.view_mut((0, 0), (m, m)).copy_from(q.as_matrix());
    out.view_mut((0, m), (m, n)).copy_from(s);
    out.view_mut((m, 0), (n, m)).copy_from(&s.transpose());
    out.view_mut((m, m), (n, n)).copy_from(r.as_matrix());
    Ok(SymMatrix(out))
}

/// Non-strict Schur complement test: `[Q S; S^T R] >= 0` iff `R >= 0`,
/// `Q - S R^+ S^T >= 0` and `S (I - R R^+) = 0`.
///
/// The complement is judged against the block's PSD slack scaled by
/// `1 + ||R^+ S^T||^2`. The range residual is accepted up to `sqrt(tol_psd) * scale`: a residual
/// `d` against a null direction of `R` moves the block's smallest eigenvalue
/// by roughly `d^2 / |Q|`, which is the quantity the PSD slack bounds.
pub fn schur_psd_check(
    q: &SymMatrix,
    s: &Matrix,
    r: &SymMatrix,
    tol: &Tolerances,
) -> Result<SchurVerdict> {
    let block = assemble_block(q, s, r)?;
    let scale = spectral_norm(block.as_matrix()).max(1.0);
    let n = r.dim();

    let r_eig = sym_eigen(r);
    let r_verdict = classify(&r_eig, tol);
    let r_rank = numerical_rank(
        &r_eig.values.iter().map(|v| v.abs()).collect::<Vec<_>>(),
        n,
        n,
        tol,
    );
    let used_inverse = r_verdict.is_pd() && r_rank == n;

    let (r_plus, range_residual) = if used_inverse {
        let inv = r
            .as_matrix()
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| pinv(r.as_matrix(), tol));
        (inv, 0.0)
    } else {
        let rp = pinv(r.as_matrix(), tol);
        let proj = Matrix::identity(n, n) - r.as_matrix() * &rp;
        (rp, spectral_norm(&(s * proj)))
    };
    let range_ok = range_residual <= tol.tol_psd.sqrt() * scale;

    // [Q S; S^T R] = L^T diag(C, R) L with L = [I 0; K^T I], K = R^+ S^T, so a
    // block slack of delta shows up in C as delta (1 + ||K||^2)
    let complement = SymMatrix::symmetrize(q.as_matrix() - s * &r_plus * s.transpose());
    let complement_min_eig = min_eig(&complement);
    let amplification = 1.0 + spectral_norm(&(&r_plus * s.transpose())).powi(2);
    let complement_psd = complement_min_eig >= -tol.tol_psd * scale * amplification;

    let psd = r_verdict.is_psd() && complement_psd && range_ok;
    Ok(SchurVerdict {
        r_psd: r_verdict.is_psd(),
        complement_psd,
        range_ok,
        r_min_eig: r_verdict.min_eig,
        complement_min_eig,
        range_residual,
        used_inverse,
        psd,
    })
}

/// Stacks matrices with equal column counts vertically.
pub fn vstack(parts: &[&Matrix]) -> Matrix {
    let cols = parts.first().map_or(0, |m| m.ncols());
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        assert_eq!(m.ncols(), cols, "vstack column mismatch");
        out.view_mut((at, 0), (m.nrows(), cols)).copy_from(*m);
        at += m.nrows();
    }
    out
}

/// Concatenates matrices with equal row counts horizontally.
pub fn hstack(parts: &[&Matrix]) -> Matrix {
    let rows = parts.first().map_or(0, |m| m.nrows());
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        assert_eq!(m.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, at), (rows, m.ncols())).copy_from(*m);
        at += m.ncols();
    }
    out
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag(parts: &[&Matrix]) -> Matrix {
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for m in parts {
        out.view_mut((r, c), m.shape()).copy_from(*m);
        r += m.nrows();
        c += m.ncols();
    }
    out
}
