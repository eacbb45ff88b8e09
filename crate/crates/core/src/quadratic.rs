//! Quadratic-form applications of the projection solver: interpolation of a
//! data pair by a matrix satisfying a quadratic constraint, and multiplier
//! searches for the S-lemma family.

use crate::error::{Error, Result};
use crate::linalg::{
    self, hstack, spectral_norm, sym_eigen, vstack, Matrix, SymMatrix, Tolerances,
};
use crate::projection::{construct_witness, ProjectionProblem};

/// `P = [Q S; S^T R]` with `R < 0` and `Q - S R^{-1} S^T >= 0`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    p: SymMatrix,
    n: usize,
    r_inv: Matrix,
    tol: Tolerances,
}

impl QuadraticForm {
    pub fn new(p: SymMatrix, n: usize, tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        let total = p.dim();
        if n > total {
            return Err(Error::dims("QuadraticForm", format!("n <= {total}"), format!("n = {n}")));
        }
        let m = total - n;
        let r = p.block(n, m);
        let r_verdict = linalg::is_psd(&SymMatrix::symmetrize(-r.as_matrix()), &tol);
        if !r_verdict.is_pd() {
            return Err(Error::HypothesisViolated(format!(
                "R must be negative definite (largest eigenvalue {:e})",
                -r_verdict.min_eig
            )));
        }
        let r_inv = r
            .as_matrix()
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::HypothesisViolated("R is singular".into()))?;
        let form = QuadraticForm { p, n, r_inv, tol };
        let schur = form.schur_complement();
        let v = linalg::is_psd(&schur, &tol);
        if !v.is_psd() {
            return Err(Error::HypothesisViolated(format!(
                "Q - S R^-1 S^T must be positive semidefinite (min eigenvalue {:e})",
                v.min_eig
            )));
        }
        Ok(form)
    }

    pub fn p(&self) -> &SymMatrix {
        &self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.p.dim() - self.n
    }

    pub fn q(&self) -> Matrix {
        self.p.block(0, self.n).into_matrix()
    }

    pub fn s(&self) -> Matrix {
        self.p.as_matrix().view((0, self.n), (self.n, self.m())).into_owned()
    }

    pub fn r(&self) -> Matrix {
        self.p.block(self.n, self.m()).into_matrix()
    }

    pub fn schur_complement(&self) -> SymMatrix {
        let s = self.s();
        SymMatrix::symmetrize(self.q() - &s * &self.r_inv * s.transpose())
    }

    /// `[z; w]^T P [z; w]`.
    pub fn value(&self, z: &[f64], w: &[f64]) -> f64 {
        let x = nalgebra::DVector::from_iterator(self.p.dim(), z.iter().chain(w).copied());
        x.dot(&(self.p.as_matrix() * &x))
    }

    /// `[I; Δ]^T P [I; Δ]`.
    pub fn graph_form(&self, delta: &Matrix) -> SymMatrix {
        let g = vstack(&[&Matrix::identity(self.n, self.n), delta]);
        self.p.congruence(&g)
    }
}

/// Outcome of [`interpolate`]: the matrix and its two post-condition residuals.
#[derive(Debug, Clone)]
pub struct Interpolation {
    pub delta: Matrix,
    /// `||w - Δ z||`.
    pub fit_residual: f64,
    /// `λ_min([I; Δ]^T P [I; Δ])`.
    pub form_min_eig: f64,
    pub form_scale: f64,
}

/// Finds `Δ` with `w = Δ z` and `[I; Δ]^T P [I; Δ] >= 0`, given
/// `[z; w]^T P [z; w] >= 0`.
///
/// For `z ≠ 0`, every solution of `w = Δ z` is `Δ = w z^+ + H Zp^T` with `Zp` an
/// orthonormal basis of `z^⊥`, and the graph inequality becomes
/// `Psi + U^T H V + V^T H^T U >= 0` with `U = [S^T I]`, `V = [Zp^T 0]`, which
/// the projection solver handles.
pub fn interpolate(form: &QuadraticForm, z: &[f64], w: &[f64]) -> Result<Interpolation> {
    let (n, m) = (form.n(), form.m());
    if z.len() != n || w.len() != m {
        return Err(Error::dims(
            "interpolate",
            format!("z of length {n}, w of length {m}"),
            format!("z of length {}, w of length {}", z.len(), w.len()),
        ));
    }
    let tol = &form.tol;
    let zv = Matrix::from_column_slice(n, 1, z);
    let wv = Matrix::from_column_slice(m, 1, w);
    let p_norm = spectral_norm(form.p.as_matrix()).max(1.0);
    let value = form.value(z, w);
    let value_scale = p_norm * (zv.norm_squared() + wv.norm_squared()).max(1.0);
    if value < -tol.tol_psd * value_scale {
        return Err(Error::HypothesisViolated(format!(
            "[z; w]^T P [z; w] = {value:e} is negative"
        )));
    }

    let s = form.s();
    let delta = if zv.norm() <= tol.tol_rank * (1.0 + wv.norm()) {
        -&form.r_inv * s.transpose()
    } else {
        let z_plus = zv.transpose() / zv.norm_squared();
        let wz = &wv * &z_plus;
        // orthonormal basis of z^⊥, so that I - z z^+ = Zp Zp^T exactly
        let zp = linalg::kernel_basis(&zv.transpose(), tol);
        let top_left = form.q() + &s * &wz + (&s * &wz).transpose();
        let psi = SymMatrix::symmetrize(vstack(&[
            &hstack(&[&top_left, &wz.transpose()]),
            &hstack(&[&wz, &(-&form.r_inv)]),
        ]));
        let u = hstack(&[&s.transpose(), &Matrix::identity(m, m)]);
        let v = hstack(&[&zp.transpose(), &Matrix::zeros(zp.ncols(), m)]);
        let prob = ProjectionProblem::new(psi, u, v, *tol)?;
        let h = construct_witness(&prob)?.x;
        wz + h * zp.transpose()
    };

    let fit_residual = (&wv - &delta * &zv).norm();
    let graph = form.graph_form(&delta);
    let form_min_eig = linalg::min_eig(&graph);
    let form_scale = (p_norm * (1.0 + spectral_norm(&delta)).powi(2)).max(1.0);
    if fit_residual > tol.tol_residual * (1.0 + wv.norm()) {
        return Err(Error::breakdown("interpolant does not reproduce w", fit_residual));
    }
    if form_min_eig < -tol.tol_residual * form_scale {
        return Err(Error::breakdown("graph form of the interpolant is indefinite", form_min_eig));
    }
    Ok(Interpolation {
        delta,
        fit_residual,
        form_min_eig,
        form_scale,
    })
}

/// `(M, N)` with `N22 < 0` and `N11 - N12 N22^{-1} N12^T >= 0`.
#[derive(Debug, Clone)]
pub struct SLemmaPair {
    m: SymMatrix,
    n: QuadraticForm,
}

impl SLemmaPair {
    /// `n_block` is the size of the leading (identity) block.
    pub fn new(m: SymMatrix, n: SymMatrix, n_block: usize, tol: Tolerances) -> Result<Self> {
        if m.dim() != n.dim() {
            return Err(Error::dims("SLemmaPair", format!("M of size {}", n.dim()), format!("M of size {}", m.dim())));
        }
        let n = QuadraticForm::new(n, n_block, tol)?;
        Ok(SLemmaPair { m, n })
    }

    pub fn m(&self) -> &SymMatrix {
        &self.m
    }

    pub fn n(&self) -> &SymMatrix {
        self.n.p()
    }

    pub fn n_form(&self) -> &QuadraticForm {
        &self.n
    }
}

/// A multiplier `alpha` and the margin `λ_min(M - alpha N)` it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierResult {
    pub alpha: f64,
    pub min_eig: f64,
    pub feasible: bool,
    /// Search interval the maximization ran over.
    pub bracket: (f64, f64),
    /// Bracket growth stopped at the cap while the margin was still increasing.
    pub capped: bool,
}

impl MultiplierResult {
    /// Converts an infeasible verdict into [`Error::Infeasible`].
    pub fn require_feasible(self) -> Result<Self> {
        if self.feasible {
            Ok(self)
        } else {
            Err(Error::Infeasible {
                best_alpha: self.alpha,
                best_min_eig: self.min_eig,
                capped: self.capped,
            })
        }
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const MAX_DOUBLINGS: i32 = 60;

/// `λ_min(M - alpha N)`, concave in `alpha`.
pub fn margin(m: &SymMatrix, n: &SymMatrix, alpha: f64) -> f64 {
    linalg::min_eig(&SymMatrix::symmetrize(m.as_matrix() - n.as_matrix() * alpha))
}

fn cap(m: &SymMatrix, n: &SymMatrix) -> f64 {
    let nn = spectral_norm(n.as_matrix());
    let ratio = if nn > 0.0 { spectral_norm(m.as_matrix()) / nn } else { 1.0 };
    2f64.powi(MAX_DOUBLINGS) * ratio.max(1.0)
}

/// Doubles `edge` (away from zero) while the margin keeps increasing.
fn grow(f: &impl Fn(f64) -> f64, start: f64, limit: f64) -> (f64, bool) {
    let mut edge = start;
    loop {
        if f(edge) <= f(edge / 2.0) {
            return (edge, false);
        }
        if edge.abs() >= limit {
            return (edge, true);
        }
        edge *= 2.0;
    }
}

/// Golden-section maximization of a concave function on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let width = (hi - lo).abs().max(f64::MIN_POSITIVE);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > 1e-13 * width && (b - a) > f64::EPSILON * (a.abs() + b.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    // endpoints compete too, for margins that are monotone on the bracket
    [(lo, f(lo)), (hi, f(hi)), ((a + b) / 2.0, f((a + b) / 2.0))]
        .into_iter()
        .fold((lo, f64::NEG_INFINITY), |best, cand| if cand.1 > best.1 { cand } else { best })
}

fn finish(m: &SymMatrix, n: &SymMatrix, alpha: f64, bracket: (f64, f64), capped: bool, tol: &Tolerances) -> MultiplierResult {
    let min_eig = margin(m, n, alpha);
    let scale = (spectral_norm(m.as_matrix()) + alpha.abs() * spectral_norm(n.as_matrix())).max(1.0);
    MultiplierResult {
        alpha,
        min_eig,
        feasible: min_eig > tol.tol_psd * scale,
        bracket,
        capped,
    }
}

/// Maximizes `λ_min(M - alpha N)` over `alpha >= 0`.
pub fn search_nonnegative(m: &SymMatrix, n: &SymMatrix, tol: &Tolerances) -> Result<MultiplierResult> {
    check_same_size(m, n)?;
    let f = |a: f64| margin(m, n, a);
    let (hi, capped) = grow(&f, 1.0, cap(m, n));
    let (alpha, _) = golden_section_max(f, 0.0, hi);
    Ok(finish(m, n, alpha, (0.0, hi), capped, tol))
}

/// Maximizes `λ_min(M - alpha N)` over all real `alpha`.
pub fn finsler(m: &SymMatrix, n: &SymMatrix, tol: &Tolerances) -> Result<MultiplierResult> {
    check_same_size(m, n)?;
    let f = |a: f64| margin(m, n, a);
    let limit = cap(m, n);
    let (hi, cap_hi) = grow(&f, 1.0, limit);
    let (lo, cap_lo) = grow(&f, -1.0, limit);
    let (alpha, _) = golden_section_max(f, lo, hi);
    Ok(finish(m, n, alpha, (lo, hi), cap_hi || cap_lo, tol))
}

/// S-lemma with a caller-supplied Slater point `xbar` (`xbar^T N xbar > 0`).
pub fn scalar_s_lemma(m: &SymMatrix, n: &SymMatrix, xbar: &[f64], tol: &Tolerances) -> Result<MultiplierResult> {
    check_same_size(m, n)?;
    if xbar.len() != n.dim() {
        return Err(Error::dims("scalar_s_lemma", format!("xbar of length {}", n.dim()), format!("length {}", xbar.len())));
    }
    let x = nalgebra::DVector::from_column_slice(xbar);
    let value = x.dot(&(n.as_matrix() * &x));
    let scale = spectral_norm(n.as_matrix()).max(1.0) * x.norm_squared();
    if value.is_nan() || value <= tol.tol_psd * scale {
        return Err(Error::SlaterViolated { value });
    }
    search_nonnegative(m, n, tol)
}

/// Matrix S-lemma: decides whether some `alpha >= 0` gives `M - alpha N > 0`.
///
/// If `N` has a positive eigenvalue the nonnegative search applies directly.
/// Otherwise `N <= 0`, the unconstrained (Finsler) optimum is computed, and a
/// negative optimum is replaced by `alpha = 0`, which is at least as good.
pub fn matrix_s_lemma(pair: &SLemmaPair) -> Result<MultiplierResult> {
    let tol = &pair.n.tol;
    let (m, n) = (pair.m(), pair.n());
    let n_eig = sym_eigen(n);
    if n_eig.max() > tol.tol_psd * n_eig.scale() {
        return search_nonnegative(m, n, tol);
    }
    let free = finsler(m, n, tol)?;
    if free.alpha >= 0.0 {
        return Ok(free);
    }
    Ok(finish(m, n, 0.0, free.bracket, free.capped, tol))
}

fn check_same_size(m: &SymMatrix, n: &SymMatrix) -> Result<()> {
    if m.dim() != n.dim() {
        return Err(Error::dims("multiplier search", format!("N of size {}", m.dim()), format!("size {}", n.dim())));
    }
    Ok(())
}
