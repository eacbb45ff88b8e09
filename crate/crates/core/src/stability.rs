//! Marginal stability of `x_{k+1} = A x_k` and its slack-variable certificates.
//!
//! A marginally stable system admits `P > 0` with `P - A^T P A >= 0`. Feeding
//! `Q = diag(P, -P)`, `U = [0 I]`, `V = [A I]` to the projection solver yields a
//! slack `X` with `[P  A^T X^T; *  X + X^T - P] >= 0` (the P-form). The S-form
//! `[S  A X; *  X + X^T - S] >= 0` is the same construction applied to `A^T`.

use nalgebra::{Complex, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    self, block_diag, ensure_finite, hstack, leading_left_singular_vectors,
    singular_extremes, spectral_norm, Matrix, SymMatrix, Tolerances,
};
use crate::projection::{construct_witness, ProjectionProblem};

/// Relative gap under which two computed eigenvalues are treated as one cluster.
pub const EIGEN_CLUSTER_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
}

impl LtiSystem {
    pub fn new(a: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dims(
                "LtiSystem",
                "square A",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        ensure_finite(&a)?;
        Ok(LtiSystem { a })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn transposed(&self) -> LtiSystem {
        LtiSystem {
            a: self.a.transpose(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateForm {
    /// `[P  A^T X^T; *  X + X^T - P] >= 0`
    P,
    /// `[S  A X; *  X + X^T - S] >= 0`
    S,
}

#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub form: CertificateForm,
    /// `P` for the P-form, `S` for the S-form.
    pub lyapunov: SymMatrix,
    pub x: Matrix,
    pub lmi_min_eig: f64,
    pub lyap_min_eig: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffendingEigenvalue {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub marginally_stable: bool,
    pub spectral_radius: f64,
    pub eigenvalues: Vec<Complex<f64>>,
    pub offending: Vec<OffendingEigenvalue>,
}

/// One cluster of numerically coincident eigenvalues.
#[derive(Debug, Clone)]
struct Cluster {
    mean: Complex<f64>,
    size: usize,
}

fn complex_eigenvalues(a: &Matrix) -> Vec<Complex<f64>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.clone().complex_eigenvalues().iter().copied().collect()
}

fn cluster_eigenvalues(eigs: &[Complex<f64>]) -> Vec<Cluster> {
    let n = eigs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = eigs[i].norm().max(eigs[j].norm()).max(1.0);
            if (eigs[i] - eigs[j]).norm() <= EIGEN_CLUSTER_GAP * scale {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut groups: Vec<(usize, Complex<f64>, usize)> = Vec::new();
    for (i, &e) in eigs.iter().enumerate().take(n) {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => {
                g.1 += e;
                g.2 += 1;
            }
            None => groups.push((r, e, 1)),
        }
    }
    groups
        .into_iter()
        .map(|(_, sum, size)| Cluster {
            mean: sum / size as f64,
            size,
        })
        .collect()
}

/// Real factor whose kernel is the eigenspace of a cluster: `A - λI` for a real
/// cluster, `A^2 - 2 Re(λ) A + |λ|^2 I` for a complex pair. Also returns the
/// eigenspace dimension expected when the cluster is semisimple.
fn cluster_factor(a: &Matrix, c: &Cluster) -> (Matrix, usize) {
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    if is_real_cluster(c) {
        (a - &id * c.mean.re, c.size)
    } else {
        let f = a * a - a * (2.0 * c.mean.re) + id * c.mean.norm_sqr();
        (f, 2 * c.size)
    }
}

/// Eigenspace of a unit cluster. Ranks are judged against the size of the terms
/// forming the factor, not the factor itself, which may vanish entirely.
fn cluster_eigenspace(a: &Matrix, c: &Cluster, tol: &Tolerances) -> (Matrix, Matrix, usize) {
    let (factor, expected) = cluster_factor(a, c);
    let na = spectral_norm(a);
    let reference = if is_real_cluster(c) {
        na + c.mean.norm()
    } else {
        na * na + 2.0 * c.mean.re.abs() * na + c.mean.norm_sqr()
    };
    let basis = linalg::kernel_basis_scaled(&factor, reference, tol);
    (factor, basis, expected)
}

fn is_real_cluster(c: &Cluster) -> bool {
    c.mean.im.abs() <= EIGEN_CLUSTER_GAP * c.mean.norm().max(1.0)
}

/// Clusters on (or within `tol_residual` of) the unit circle, one per conjugate pair.
fn unit_clusters(clusters: &[Cluster], tol: &Tolerances) -> Vec<Cluster> {
    clusters
        .iter()
        .filter(|c| c.mean.norm() >= 1.0 - tol.tol_residual)
        .filter(|c| is_real_cluster(c) || c.mean.im > 0.0)
        .cloned()
        .collect()
}

/// Spectral radius at most one, with every eigenvalue of unit modulus semisimple.
pub fn is_marginally_stable(sys: &LtiSystem, tol: &Tolerances) -> StabilityReport {
    let a = sys.a();
    let eigenvalues = complex_eigenvalues(a);
    let spectral_radius = eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.norm()));
    let clusters = cluster_eigenvalues(&eigenvalues);
    let mut offending = Vec::new();

    for c in &clusters {
        if c.mean.norm() > 1.0 + tol.tol_residual && (is_real_cluster(c) || c.mean.im > 0.0) {
            offending.push(OffendingEigenvalue {
                re: c.mean.re,
                im: c.mean.im,
                multiplicity: c.size,
                reason: "eigenvalue outside the unit circle".into(),
            });
        }
    }
    for c in unit_clusters(&clusters, tol) {
        if c.mean.norm() > 1.0 + tol.tol_residual {
            continue;
        }
        let (_, basis, expected) = cluster_eigenspace(a, &c, tol);
        let geometric = basis.ncols();
        if geometric != expected {
            offending.push(OffendingEigenvalue {
                re: c.mean.re,
                im: c.mean.im,
                multiplicity: c.size,
                reason: "defective unit eigenvalue".into(),
            });
        }
    }

    StabilityReport {
        marginally_stable: offending.is_empty(),
        spectral_radius,
        eigenvalues,
        offending,
    }
}

/// Solves the Stein equation `P - A^T P A = Q` by a Kronecker linear solve.
pub fn solve_discrete_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::dims(
            "solve_discrete_lyapunov",
            format!("square A and Q of size {n}"),
            format!("A {}x{}, Q {}x{}", a.nrows(), a.ncols(), q.nrows(), q.ncols()),
        ));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let at = a.transpose();
    let op = Matrix::identity(n * n, n * n) - at.kronecker(&at);
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::breakdown("Stein operator is singular", 0.0))?;
    Ok(Matrix::from_column_slice(n, n, sol.as_slice()))
}

/// Builds `P > 0` with `P - A^T P A >= 0`, normalized to `trace(P) = n`.
///
/// The unit-circle eigenspaces and the stable invariant subspace are separated
/// with a real block-diagonalizing basis `T`. On a `±1` block the identity is
/// invariant; on a rotation block `A_c = r (c I + s J)` with `J^2 = -I`, the
/// Gram matrix `I + J^T J` is invariant; on the stable block the Stein
/// equation with identity right-hand side is solved. `P = T^{-T} diag(...) T^{-1}`.
pub fn construct_p(sys: &LtiSystem, tol: &Tolerances) -> Result<SymMatrix> {
    let report = is_marginally_stable(sys, tol);
    if !report.marginally_stable {
        return Err(Error::NotMarginallyStable {
            reason: describe_offenders(&report),
        });
    }
    let a = sys.a();
    let n = a.nrows();
    if n == 0 {
        return Ok(SymMatrix::zeros(0));
    }

    let clusters = cluster_eigenvalues(&report.eigenvalues);
    let units = unit_clusters(&clusters, tol);
    let mut bases = Vec::new();
    let mut product = Matrix::identity(n, n);
    for c in &units {
        let (factor, basis, expected) = cluster_eigenspace(a, c, tol);
        debug_assert_eq!(basis.ncols(), expected);
        product = factor * product;
        bases.push(basis);
    }
    let unit_dim: usize = bases.iter().map(|b| b.ncols()).sum();
    if unit_dim > n {
        return Err(Error::breakdown(
            "unit-circle eigenspaces overlap",
            unit_dim as f64,
        ));
    }
    let stable_dim = n - unit_dim;
    let stable_basis = if unit_dim == 0 {
        Matrix::identity(n, n)
    } else {
        leading_left_singular_vectors(&product, stable_dim)
    };

    let mut columns: Vec<&Matrix> = bases.iter().collect();
    columns.push(&stable_basis);
    let t = hstack(&columns);
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::breakdown("spectral splitting basis is singular", 0.0))?;
    let a_split = &t_inv * a * &t;

    let mut diag_blocks = Vec::new();
    let mut at = 0;
    for (c, basis) in units.iter().zip(&bases) {
        let k = basis.ncols();
        if is_real_cluster(c) {
            diag_blocks.push(Matrix::identity(k, k));
        } else {
            let r = c.mean.norm();
            let (cos, sin) = (c.mean.re / r, c.mean.im / r);
            let block = a_split.view((at, at), (k, k)).into_owned();
            let j = (block / r - Matrix::identity(k, k) * cos) / sin;
            diag_blocks.push(Matrix::identity(k, k) + j.transpose() * j);
        }
        at += k;
    }
    let a_stable = a_split.view((at, at), (stable_dim, stable_dim)).into_owned();
    diag_blocks.push(solve_discrete_lyapunov(
        &a_stable,
        &Matrix::identity(stable_dim, stable_dim),
    )?);

    let refs: Vec<&Matrix> = diag_blocks.iter().collect();
    let mut p = t_inv.transpose() * block_diag(&refs) * &t_inv;
    p = (&p + p.transpose()) * 0.5;
    let trace = p.trace();
    if trace <= 0.0 || !trace.is_finite() {
        return Err(Error::breakdown("Lyapunov matrix has non-positive trace", trace));
    }
    p *= n as f64 / trace;
    let p = SymMatrix::symmetrize(p);

    let p_check = linalg::is_psd(&p, tol);
    if !p_check.is_pd() {
        return Err(Error::breakdown("Lyapunov matrix is not positive definite", p_check.min_eig));
    }
    let diff = lyapunov_difference(a, &p);
    let diff_min = linalg::min_eig(&diff);
    if diff_min < -tol.tol_residual * lyapunov_scale(a, &p) {
        return Err(Error::breakdown("P - A^T P A is not positive semidefinite", diff_min));
    }
    Ok(p)
}

/// `P - A^T P A`.
pub fn lyapunov_difference(a: &Matrix, p: &SymMatrix) -> SymMatrix {
    SymMatrix::symmetrize(p.as_matrix() - a.transpose() * p.as_matrix() * a)
}

fn lyapunov_scale(a: &Matrix, p: &SymMatrix) -> f64 {
    let na = spectral_norm(a);
    (spectral_norm(p.as_matrix()) * (1.0 + na * na)).max(1.0)
}

fn describe_offenders(report: &StabilityReport) -> String {
    report
        .offending
        .iter()
        .map(|o| format!("{} at {:.6}{:+.6}i (x{})", o.reason, o.re, o.im, o.multiplicity))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Assembles the certificate LMI for the given form.
pub fn certificate_lmi(sys: &LtiSystem, form: CertificateForm, lyap: &SymMatrix, x: &Matrix) -> Result<SymMatrix> {
    let n = sys.order();
    if lyap.dim() != n || x.shape() != (n, n) {
        return Err(Error::dims(
            "certificate_lmi",
            format!("{n}x{n} blocks"),
            format!("Lyapunov {}x{}, X {}x{}", lyap.dim(), lyap.dim(), x.nrows(), x.ncols()),
        ));
    }
    let a = sys.a();
    let off = match form {
        CertificateForm::P => a.transpose() * x.transpose(),
        CertificateForm::S => a * x,
    };
    let corner = x + x.transpose() - lyap.as_matrix();
    let top = hstack(&[lyap.as_matrix(), &off]);
    let bottom = hstack(&[&off.transpose(), &corner]);
    Ok(SymMatrix::symmetrize(linalg::vstack(&[&top, &bottom])))
}

fn lmi_scale(sys: &LtiSystem, lyap: &SymMatrix, x: &Matrix) -> f64 {
    let nx = spectral_norm(x);
    (spectral_norm(lyap.as_matrix()) + 2.0 * nx * (1.0 + spectral_norm(sys.a()))).max(1.0)
}

fn certificate(sys: &LtiSystem, form: CertificateForm, tol: &Tolerances) -> Result<StabilityCertificate> {
    let source = match form {
        CertificateForm::P => sys.clone(),
        CertificateForm::S => sys.transposed(),
    };
    let lyap = construct_p(&source, tol)?;
    let n = sys.order();
    let q = SymMatrix::symmetrize(block_diag(&[lyap.as_matrix(), &(-lyap.as_matrix())]));
    let u = hstack(&[&Matrix::zeros(n, n), &Matrix::identity(n, n)]);
    let v = hstack(&[source.a(), &Matrix::identity(n, n)]);
    let prob = ProjectionProblem::new(q, u, v, *tol)?;
    let witness = construct_witness(&prob)?;
    let x = match form {
        CertificateForm::P => witness.x,
        CertificateForm::S => witness.x.transpose(),
    };

    let (smin, smax) = singular_extremes(&x);
    if n > 0 && smin <= tol.tol_rank * smax {
        return Err(Error::SingularX {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    let lmi_min_eig = linalg::min_eig(&certificate_lmi(sys, form, &lyap, &x)?);
    let lyap_min_eig = linalg::min_eig(&form_difference(sys, form, &lyap));
    Ok(StabilityCertificate {
        form,
        lyapunov: lyap,
        x,
        lmi_min_eig,
        lyap_min_eig,
    })
}

/// `P - A^T P A` for the P-form, `S - A S A^T` for the S-form.
fn form_difference(sys: &LtiSystem, form: CertificateForm, lyap: &SymMatrix) -> SymMatrix {
    match form {
        CertificateForm::P => lyapunov_difference(sys.a(), lyap),
        CertificateForm::S => lyapunov_difference(&sys.a().transpose(), lyap),
    }
}

pub fn certificate_p_form(sys: &LtiSystem, tol: &Tolerances) -> Result<StabilityCertificate> {
    certificate(sys, CertificateForm::P, tol)
}

pub fn certificate_s_form(sys: &LtiSystem, tol: &Tolerances) -> Result<StabilityCertificate> {
    certificate(sys, CertificateForm::S, tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateCheck {
    pub lyapunov_min_eig: f64,
    pub lyap_min_eig: f64,
    pub lmi_min_eig: f64,
    /// `λ_min(X + X^T - P)`; the LMI's lower-right block must dominate `P`.
    pub slack_min_eig: f64,
    pub sigma_ratio: f64,
    pub lmi_scale: f64,
    pub lyap_scale: f64,
    pub pass: bool,
}

/// Recomputes every certificate inequality from scratch.
pub fn verify_certificate(
    sys: &LtiSystem,
    cert: &StabilityCertificate,
    tol: &Tolerances,
) -> Result<CertificateCheck> {
    let lmi = certificate_lmi(sys, cert.form, &cert.lyapunov, &cert.x)?;
    let lmi_min_eig = linalg::min_eig(&lmi);
    let lyap_min_eig = linalg::min_eig(&form_difference(sys, cert.form, &cert.lyapunov));
    let p_verdict = linalg::is_psd(&cert.lyapunov, tol);
    let slack = SymMatrix::symmetrize(&cert.x + cert.x.transpose() - cert.lyapunov.as_matrix());
    let slack_min_eig = linalg::min_eig(&slack);
    let (smin, smax) = singular_extremes(&cert.x);
    let sigma_ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    let n = sys.order();

    let lmi_scale = lmi_scale(sys, &cert.lyapunov, &cert.x);
    let lyap_scale = lyapunov_scale(sys.a(), &cert.lyapunov);
    let pass = p_verdict.is_pd()
        && lmi_min_eig >= -tol.tol_residual * lmi_scale
        && lyap_min_eig >= -tol.tol_residual * lyap_scale
        && slack_min_eig >= -tol.tol_residual * lmi_scale
        && (n == 0 || sigma_ratio > tol.tol_rank);
    Ok(CertificateCheck {
        lyapunov_min_eig: p_verdict.min_eig,
        lyap_min_eig,
        lmi_min_eig,
        slack_min_eig,
        sigma_ratio,
        lmi_scale,
        lyap_scale,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainSide {
    /// `Z = K X`, gain `K = Z X^{-1}`.
    Controller,
    /// `Z = X L`, gain `L = X^{-1} Z`.
    Observer,
}

#[derive(Debug, Clone)]
pub struct SynthesisExtraction {
    pub x: Matrix,
    pub z: Matrix,
    pub gain: Matrix,
    pub residual: f64,
}

/// Undoes the linearizing change of variables `Z = K X` or `Z = X L`.
pub fn extract_gain(x: &Matrix, z: &Matrix, side: GainSide, tol: &Tolerances) -> Result<SynthesisExtraction> {
    if !x.is_square() {
        return Err(Error::dims("extract_gain", "square X", format!("{}x{}", x.nrows(), x.ncols())));
    }
    let n = x.nrows();
    let ok = match side {
        GainSide::Controller => z.ncols() == n,
        GainSide::Observer => z.nrows() == n,
    };
    if !ok {
        return Err(Error::dims("extract_gain", format!("Z conformal with {n}x{n} X"), format!("{}x{}", z.nrows(), z.ncols())));
    }
    let (smin, smax) = singular_extremes(x);
    if n > 0 && smin <= tol.tol_rank * smax {
        return Err(Error::SingularX {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    let lu = x.clone().lu();
    let (gain, recon) = match side {
        GainSide::Controller => {
            // K X = Z  <=>  X^T K^T = Z^T
            let kt = x
                .transpose()
                .lu()
                .solve(&z.transpose())
                .ok_or(Error::SingularX { ratio: 0.0 })?;
            let k = kt.transpose();
            let recon = &k * x;
            (k, recon)
        }
        GainSide::Observer => {
            let l = lu.solve(z).ok_or(Error::SingularX { ratio: 0.0 })?;
            let recon = x * &l;
            (l, recon)
        }
    };
    let residual = if z.is_empty() { 0.0 } else { (recon - z).amax() };
    let scale = (spectral_norm(&gain) * smax).max(spectral_norm(z)).max(1.0);
    if residual > tol.tol_residual * scale {
        return Err(Error::breakdown("gain does not reproduce Z", residual));
    }
    Ok(SynthesisExtraction {
        x: x.clone(),
        z: z.clone(),
        gain,
        residual,
    })
}
