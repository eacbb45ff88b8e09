//! Seeded random instances with a known answer.
//!
//! All randomness comes from one `u64` seed fed to `ChaCha8Rng::seed_from_u64`
//! (rand_chacha 0.9); normals are drawn with `rand_distr::StandardNormal`.
//! The same seed yields the same instance on every platform.

use std::fmt;
use std::path::{Path, PathBuf};

use nspkit_core::linalg::{block_diag, hstack, kernel_basis, spectral_norm, vstack};
use nspkit_core::{Matrix, SymMatrix, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

use crate::matfile;

pub const GENERATOR: &str = "ChaCha8Rng::seed_from_u64 (rand_chacha 0.9), StandardNormal (rand_distr 0.5)";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Full rank two times in three, otherwise of a random lower rank.
pub fn maybe_deficient(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let full = rows.min(cols);
    if full > 0 && rng.random_range(0..3) == 0 {
        let rank = rng.random_range(0..full);
        gaussian(rng, rows, rank) * gaussian(rng, rank, cols)
    } else {
        gaussian(rng, rows, cols)
    }
}

pub fn psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> SymMatrix {
    let g = gaussian(rng, n, rank);
    SymMatrix::symmetrize(&g * g.transpose())
}

pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    gaussian(rng, n, n).qr().q()
}

/// `O1 diag(d) O2` with `d` in `[0.5, 2]`, so the condition number is at most 4.
pub fn well_conditioned(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let d = Matrix::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 });
    orthogonal(rng, n) * d * orthogonal(rng, n)
}

pub fn with_norm(rng: &mut ChaCha8Rng, rows: usize, cols: usize, norm: f64) -> Matrix {
    let g = gaussian(rng, rows, cols);
    let s = spectral_norm(&g);
    if s == 0.0 { g } else { g * (norm / s) }
}

pub fn rotation(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) { 1.0 } else { -1.0 }
}

#[derive(Debug, Clone)]
pub struct ProjectionInstance {
    pub q: SymMatrix,
    pub u: Matrix,
    pub v: Matrix,
    /// The planted solution, for feasible instances.
    pub x0: Option<Matrix>,
}

/// `Q = G - U^T X0 V - V^T X0^T U` with `G >= 0` of random rank, solved by `X0`.
pub fn projection_feasible(rng: &mut ChaCha8Rng, p: usize, m: usize, n: usize) -> ProjectionInstance {
    let u = maybe_deficient(rng, m, p);
    let v = maybe_deficient(rng, n, p);
    let rank = rng.random_range(0..=p);
    let g = psd(rng, p, rank);
    let x0 = gaussian(rng, m, n);
    let cross = u.transpose() * &x0 * &v;
    let q = SymMatrix::symmetrize(g.as_matrix() - &cross - cross.transpose());
    ProjectionInstance { q, u, v, x0: Some(x0) }
}

/// A feasible instance with `xi^T Q xi = -1` planted for a unit `xi ∈ ker U`,
/// so `U_perp^T Q U_perp` is indefinite. `U` is forced to have rank below `p`.
pub fn projection_infeasible(rng: &mut ChaCha8Rng, p: usize, m: usize, n: usize) -> ProjectionInstance {
    let mut inst = projection_feasible(rng, p, m, n);
    let rank = rng.random_range(0..p).min(m);
    inst.u = gaussian(rng, m, rank) * gaussian(rng, rank, p);
    let ker = kernel_basis(&inst.u, &Tolerances::default());
    let mix = gaussian(rng, ker.ncols(), 1);
    let xi = &ker * &mix / mix.norm();
    let depth = (xi.transpose() * inst.q.as_matrix() * &xi)[(0, 0)] + 1.0;
    inst.q = SymMatrix::symmetrize(inst.q.as_matrix() - &xi * xi.transpose() * depth);
    inst.x0 = None;
    inst
}

fn conjugate(rng: &mut ChaCha8Rng, blocks: &[Matrix]) -> Matrix {
    let refs: Vec<&Matrix> = blocks.iter().collect();
    let d = block_diag(&refs);
    let t = well_conditioned(rng, d.nrows());
    let t_inv = t.clone().try_inverse().expect("well-conditioned similarity");
    &t * d * t_inv
}

fn stable_block(rng: &mut ChaCha8Rng, k: usize) -> Matrix {
    let rho = rng.random_range(0.0..0.9);
    with_norm(rng, k, k, rho)
}

/// Rotations, `±1` scalars and Schur-stable blocks, conjugated by a
/// well-conditioned similarity. Rotation angles stay in `[0.1, 3.0]`.
pub fn marginal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut blocks = Vec::new();
    let mut size = 0;
    while size < n {
        let b = match rng.random_range(0..3) {
            0 if size + 2 <= n => rotation(rng.random_range(0.1..3.0)),
            1 => Matrix::from_element(1, 1, sign(rng)),
            _ => {
                let k = rng.random_range(1..=(n - size).min(3));
                stable_block(rng, k)
            }
        };
        size += b.nrows();
        blocks.push(b);
    }
    conjugate(rng, &blocks)
}

/// A Jordan block at `±1`, a defective rotation pair, or an eigenvalue of
/// modulus in `[1.05, 2]`, padded with a stable block to order `n >= 1`.
pub fn defective_or_unstable(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let choices = if n >= 4 { 3 } else if n >= 2 { 2 } else { 1 };
    let head = match rng.random_range(0..choices) {
        0 => Matrix::from_element(1, 1, rng.random_range(1.05..2.0) * sign(rng)),
        1 => {
            let lambda = sign(rng);
            Matrix::from_row_slice(2, 2, &[lambda, 1.0, 0.0, lambda])
        }
        _ => {
            let rot = rotation(rng.random_range(0.1..3.0));
            let mut j = Matrix::zeros(4, 4);
            j.view_mut((0, 0), (2, 2)).copy_from(&rot);
            j.view_mut((2, 2), (2, 2)).copy_from(&rot);
            j.view_mut((0, 2), (2, 2)).fill_with_identity();
            j
        }
    };
    let mut blocks = vec![head];
    let rest = n - blocks[0].nrows();
    if rest > 0 {
        blocks.push(stable_block(rng, rest));
    }
    conjugate(rng, &blocks)
}

#[derive(Debug, Clone)]
pub struct DilationInstance {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

/// Largest `t` with `norm(t) <= target`, for nondecreasing `norm` on `t >= 0`.
fn fit_scale(norm: impl Fn(f64) -> f64, target: f64) -> f64 {
    let mut hi = 1.0;
    while norm(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `A: m x n` with `||A|| < target`, and `B`, `C` scaled so that `||[A B]||` and
/// `||[A; C]||` equal `target` (up to bisection accuracy, never above).
pub fn dilation(rng: &mut ChaCha8Rng, m: usize, n: usize, p: usize, q: usize, target: f64) -> DilationInstance {
    let shrink = rng.random_range(0.0..1.0);
    let a = with_norm(rng, m, n, target * shrink);
    let b0 = gaussian(rng, m, p);
    let c0 = gaussian(rng, q, n);
    let tb = if p == 0 { 0.0 } else { fit_scale(|t| spectral_norm(&hstack(&[&a, &(&b0 * t)])), target) };
    let tc = if q == 0 { 0.0 } else { fit_scale(|t| spectral_norm(&vstack(&[&a, &(&c0 * t)])), target) };
    DilationInstance { a, b: b0 * tb, c: c0 * tc }
}

#[derive(Debug, Clone)]
pub struct QuadraticInstance {
    pub p: SymMatrix,
    pub n: usize,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

/// `P = [Psi + S R^-1 S^T, S; S^T, R]` with `R = -(L L^T + 0.1 I)` and `Psi >= 0`
/// of rank `psi_rank` (shifted by `0.1 I` when full rank).
pub fn quadratic_form(rng: &mut ChaCha8Rng, n: usize, m: usize, psi_rank: usize) -> SymMatrix {
    let l = gaussian(rng, m, m);
    let r = -(&l * l.transpose() + Matrix::identity(m, m) * 0.1);
    let s = gaussian(rng, n, m);
    let mut psi = psd(rng, n, psi_rank).into_matrix();
    if psi_rank == n {
        psi += Matrix::identity(n, n) * 0.1;
    }
    let r_inv = r.clone().try_inverse().expect("R is negative definite");
    let q = psi + &s * r_inv * s.transpose();
    SymMatrix::symmetrize(vstack(&[&hstack(&[&q, &s]), &hstack(&[&s.transpose(), &r])]))
}

/// A form and a data pair with `[z; w]^T P [z; w] >= 0`: `w = e - R^-1 S^T z`
/// with `e^T (-R) e = beta z^T Psi z`, `beta ∈ [0, 1]` (on the boundary one time
/// in four); `z = 0` one time in eight.
pub fn quadratic(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QuadraticInstance {
    let rank = rng.random_range(0..=n);
    let p = quadratic_form(rng, n, m, rank);
    let pm = p.as_matrix();
    let s = pm.view((0, n), (n, m)).into_owned();
    let r = pm.view((n, n), (m, m)).into_owned();
    let r_inv = r.clone().try_inverse().expect("R is negative definite");
    let psi = pm.view((0, 0), (n, n)) - &s * &r_inv * s.transpose();

    let z = if rng.random_range(0..8) == 0 { Matrix::zeros(n, 1) } else { gaussian(rng, n, 1) };
    let budget = (z.transpose() * &psi * &z)[(0, 0)].max(0.0);
    let beta = if rng.random_range(0..4) == 0 { 1.0 } else { rng.random_range(0.0..1.0) };
    let d = gaussian(rng, m, 1);
    let dd = -(d.transpose() * &r * &d)[(0, 0)];
    let e = if dd > 0.0 { d * (beta * budget / dd).sqrt() } else { Matrix::zeros(m, 1) };
    let w = e - &r_inv * s.transpose() * &z;
    QuadraticInstance {
        p,
        n,
        z: z.iter().copied().collect(),
        w: w.iter().copied().collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SLemmaInstance {
    pub m: SymMatrix,
    pub n: SymMatrix,
    pub n_block: usize,
}

/// `N` satisfying the pair hypotheses with a positive definite Schur
/// complement, so `N` has both inertias and `λ_min(M - αN)` has a bounded
/// maximizer; `M = c N + G/2 + s I` with `c ∈ [0, 3]`, `s ∈ [-1, 1]`.
pub fn slemma(rng: &mut ChaCha8Rng, k: usize, l: usize) -> SLemmaInstance {
    let n = quadratic_form(rng, k, l, k);
    let c = rng.random_range(0.0..3.0);
    let shift = rng.random_range(-1.0..1.0);
    let g = gaussian(rng, k + l, k + l);
    let m = n.as_matrix() * c + (&g + g.transpose()) * 0.25 + Matrix::identity(k + l, k + l) * shift;
    SLemmaInstance {
        m: SymMatrix::symmetrize(m),
        n,
        n_block: k,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    ProjectionFeasible,
    ProjectionInfeasible,
    Marginal,
    Dilation,
    Quadratic,
    Slemma,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Kind::ProjectionFeasible => "projection-feasible",
            Kind::ProjectionInfeasible => "projection-infeasible",
            Kind::Marginal => "marginal",
            Kind::Dilation => "dilation",
            Kind::Quadratic => "quadratic",
            Kind::Slemma => "slemma",
        };
        f.write_str(name)
    }
}

/// Writes one instance of `kind` with size parameter `dim` into `out_dir`,
/// plus `manifest.json`. Returns the manifest.
pub fn write_instance(kind: Kind, dim: usize, seed: u64, out_dir: &Path) -> Result<Value, String> {
    if dim == 0 {
        return Err("--dim must be at least 1".into());
    }
    std::fs::create_dir_all(out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;
    let mut r = rng(seed);
    let mut files: Vec<(&str, Matrix)> = Vec::new();
    let (property, params) = match kind {
        Kind::ProjectionFeasible | Kind::ProjectionInfeasible => {
            let cap = dim.min(6);
            let m = r.random_range(1..=cap);
            let n = r.random_range(1..=cap);
            let inst = if kind == Kind::ProjectionFeasible {
                projection_feasible(&mut r, dim, m, n)
            } else {
                projection_infeasible(&mut r, dim, m, n)
            };
            files.push(("q.json", inst.q.into_matrix()));
            files.push(("u.json", inst.u));
            files.push(("v.json", inst.v));
            if let Some(x0) = inst.x0 {
                files.push(("x0.json", x0));
            }
            let property = if kind == Kind::ProjectionFeasible { "feasible" } else { "infeasible" };
            (property, json!({ "p": dim, "m": m, "n": n }))
        }
        Kind::Marginal => {
            files.push(("a.json", marginal(&mut r, dim)));
            ("marginally stable", json!({ "n": dim }))
        }
        Kind::Dilation => {
            let mut pick = || r.random_range(1..=dim);
            let (m, n, p, q) = (pick(), pick(), pick(), pick());
            let target = [0.5, 0.9, 1.0 - 1e-12][r.random_range(0..3)];
            let inst = dilation(&mut r, m, n, p, q, target);
            files.push(("a.json", inst.a));
            files.push(("b.json", inst.b));
            files.push(("c.json", inst.c));
            ("completable", json!({ "m": m, "n": n, "p": p, "q": q, "condition_norm": target }))
        }
        Kind::Quadratic => {
            let m = r.random_range(1..=dim);
            let inst = quadratic(&mut r, dim, m);
            files.push(("p.json", inst.p.into_matrix()));
            files.push(("z.json", Matrix::from_column_slice(dim, 1, &inst.z)));
            files.push(("w.json", Matrix::from_column_slice(m, 1, &inst.w)));
            ("interpolable", json!({ "n": dim, "m": m }))
        }
        Kind::Slemma => {
            if dim < 2 {
                return Err("--dim must be at least 2 for slemma instances".into());
            }
            let k = r.random_range(1..dim);
            let inst = slemma(&mut r, k, dim - k);
            files.push(("m.json", inst.m.into_matrix()));
            files.push(("n.json", inst.n.into_matrix()));
            ("pair hypotheses hold", json!({ "n_block": k }))
        }
    };
    let mut names = Vec::new();
    for (name, m) in &files {
        let path: PathBuf = out_dir.join(name);
        matfile::write(&path, m).map_err(|e| e.to_string())?;
        names.push(*name);
    }
    let manifest = json!({
        "kind": kind.to_string(),
        "seed": seed,
        "dim": dim,
        "generator": GENERATOR,
        "property": property,
        "parameters": params,
        "files": names,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("JSON values serialize") + "\n";
    std::fs::write(out_dir.join("manifest.json"), text).map_err(|e| format!("{}: {e}", out_dir.display()))?;
    Ok(manifest)
}
