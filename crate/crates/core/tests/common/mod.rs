#![allow(dead_code)]

use nspkit_core::{Matrix, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random matrix of rank at most `rank`.
pub fn low_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    gaussian(rng, rows, rank) * gaussian(rng, rank, cols)
}

/// Full rank most of the time, rank-deficient roughly one time in three.
pub fn maybe_deficient(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let full = rows.min(cols);
    if full > 0 && rng.random_range(0..3) == 0 {
        let rank = rng.random_range(0..full);
        low_rank(rng, rows, cols, rank)
    } else {
        gaussian(rng, rows, cols)
    }
}

pub fn psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> SymMatrix {
    let g = gaussian(rng, n, rank);
    SymMatrix::symmetrize(&g * g.transpose())
}

pub fn symmetric(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let g = gaussian(rng, n, n);
    SymMatrix::symmetrize((&g + g.transpose()) * 0.5)
}

pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    gaussian(rng, n, n).qr().q()
}

/// `O1 diag(d) O2` with `d` in `[0.5, 2]`.
pub fn well_conditioned(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let d = Matrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)));
    orthogonal(rng, n) * d * orthogonal(rng, n)
}

pub fn rotation(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Random matrix with spectral norm `norm`.
pub fn with_norm(rng: &mut ChaCha8Rng, rows: usize, cols: usize, norm: f64) -> Matrix {
    let g = gaussian(rng, rows, cols);
    let s = nspkit_core::linalg::spectral_norm(&g);
    if s == 0.0 { g } else { g * (norm / s) }
}
