mod common;

use common::*;
use nspkit_core::linalg::{min_eig, psd_sqrt, spectral_norm};
use nspkit_core::quadratic::{
    finsler, interpolate, margin, matrix_s_lemma, search_nonnegative, MultiplierResult,
    QuadraticForm, SLemmaPair,
};
use nspkit_core::{Matrix, SymMatrix, Tolerances};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `P = [Psi + S R^-1 S^T, S; S^T, R]` with `R < 0` and `Psi >= 0`.
fn form(r: &mut ChaCha8Rng, n: usize, m: usize) -> SymMatrix {
    let rank = r.random_range(0..=n);
    form_with_rank(r, n, m, rank)
}

/// Full-rank `Psi` gives `P` both inertias, so `λ_min(M - αN)` has a bounded maximizer.
fn form_with_rank(r: &mut ChaCha8Rng, n: usize, m: usize, rank: usize) -> SymMatrix {
    let l = gaussian(r, m, m);
    let rr = -(&l * l.transpose() + Matrix::identity(m, m) * 0.1);
    let s = gaussian(r, n, m);
    let mut psi = psd(r, n, rank).into_matrix();
    if rank == n {
        psi += Matrix::identity(n, n) * 0.1;
    }
    let q = psi + &s * rr.clone().try_inverse().unwrap() * s.transpose();
    let mut p = Matrix::zeros(n + m, n + m);
    p.view_mut((0, 0), (n, n)).copy_from(&q);
    p.view_mut((0, n), (n, m)).copy_from(&s);
    p.view_mut((n, 0), (m, n)).copy_from(&s.transpose());
    p.view_mut((n, n), (m, m)).copy_from(&rr);
    SymMatrix::symmetrize(p)
}

/// A data pair with `[z; w]^T P [z; w] >= 0`, on the boundary one time in four.
fn data(r: &mut ChaCha8Rng, f: &QuadraticForm) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (f.n(), f.m());
    let z = if r.random_range(0..8) == 0 { Matrix::zeros(n, 1) } else { gaussian(r, n, 1) };
    let rr = f.r();
    let neg_r = -&rr;
    let budget = (z.transpose() * f.schur_complement().as_matrix() * &z)[(0, 0)].max(0.0);
    let beta = if r.random_range(0..4) == 0 { 1.0 } else { r.random_range(0.0..1.0) };
    let d = gaussian(r, m, 1);
    let dd = (d.transpose() * &neg_r * &d)[(0, 0)];
    let e = if dd > 0.0 { d * (beta * budget / dd).sqrt() } else { Matrix::zeros(m, 1) };
    let w = e - rr.try_inverse().unwrap() * f.s().transpose() * &z;
    (z.iter().copied().collect(), w.iter().copied().collect())
}

fn grid_best(m: &SymMatrix, n: &SymMatrix, lo: f64, hi: f64) -> (f64, f64) {
    (0..=10_000)
        .map(|i| lo + (hi - lo) * i as f64 / 10_000.0)
        .map(|a| (a, margin(m, n, a)))
        .fold((lo, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b })
}

fn agrees_with_grid(res: &MultiplierResult, m: &SymMatrix, n: &SymMatrix, lo: f64) -> Result<(), TestCaseError> {
    let (_, hi) = res.bracket;
    let width = hi - res.bracket.0;
    let (ga, gv) = grid_best(m, n, lo, hi);
    prop_assert!(res.min_eig >= gv - 1e-12 * (1.0 + gv.abs()), "golden {} below grid {}", res.min_eig, gv);
    prop_assert!((res.alpha - ga).abs() <= 1e-4 * width * (1.0 + 1e-9), "alpha {} grid {} width {}", res.alpha, ga, width);
    Ok(())
}

fn pair(r: &mut ChaCha8Rng, k: usize, l: usize, bounded: bool) -> (SymMatrix, SymMatrix) {
    let n = if bounded { form_with_rank(r, k, l, k) } else { form(r, k, l) };
    let c = r.random_range(0.0..3.0);
    let shift = r.random_range(-1.0..1.0);
    let g = symmetric(r, k + l);
    let m = SymMatrix::symmetrize(n.as_matrix() * c + g.as_matrix() * 0.5 + Matrix::identity(k + l, k + l) * shift);
    (m, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn interpolation_meets_both_postconditions(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=6) {
        let mut r = rng(seed);
        let f = QuadraticForm::new(form(&mut r, n, m), n, Tolerances::default()).unwrap();
        let (z, w) = data(&mut r, &f);
        let out = interpolate(&f, &z, &w).unwrap();
        let zv = Matrix::from_column_slice(n, 1, &z);
        let wv = Matrix::from_column_slice(m, 1, &w);
        let fit = (&wv - &out.delta * &zv).norm();
        prop_assert!(fit <= 1e-8 * (1.0 + wv.norm()), "fit {fit}");
        let scale = spectral_norm(f.p().as_matrix()).max(1.0) * (1.0 + spectral_norm(&out.delta)).powi(2);
        let g = f.graph_form(&out.delta);
        prop_assert!(min_eig(&g) >= -1e-8 * scale, "graph form {}", min_eig(&g));
        let dz: Vec<f64> = (&out.delta * &zv).iter().copied().collect();
        prop_assert!(f.value(&z, &dz) >= -1e-8 * scale * (1.0 + zv.norm_squared()));
        if zv.norm() == 0.0 {
            let expected = -f.r().try_inverse().unwrap() * f.s().transpose();
            prop_assert!((&out.delta - &expected).amax() <= 1e-12 * (1.0 + expected.amax()));
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn searches_match_a_grid_scan(seed in any::<u64>(), k in 1usize..=2, l in 1usize..=2) {
        let mut r = rng(seed);
        let (m, n) = pair(&mut r, k, l, true);
        let tol = Tolerances::default();
        let res = search_nonnegative(&m, &n, &tol).unwrap();
        agrees_with_grid(&res, &m, &n, 0.0)?;
        let res = finsler(&m, &n, &tol).unwrap();
        agrees_with_grid(&res, &m, &n, res.bracket.0)?;
    }

    #[test]
    fn matrix_s_lemma_is_sound(seed in any::<u64>(), k in 1usize..=3, l in 1usize..=3) {
        let mut r = rng(seed);
        let bounded = r.random_bool(0.5);
        let (m, n) = pair(&mut r, k, l, bounded);
        let tol = Tolerances::default();
        let p = SLemmaPair::new(m.clone(), n.clone(), k, tol).unwrap();
        let res = matrix_s_lemma(&p).unwrap();
        if bounded {
            let (ga, gv) = grid_best(&m, &n, res.bracket.0.max(0.0), res.bracket.1);
            let scale = (spectral_norm(m.as_matrix()) + ga.abs() * spectral_norm(n.as_matrix())).max(1.0);
            prop_assert_eq!(res.feasible, gv > tol.tol_psd * scale);
        }
        if !res.feasible {
            return Ok(());
        }
        prop_assert!(res.alpha >= 0.0);
        prop_assert!(margin(&m, &n, res.alpha) > 0.0);

        // sample Z with [I; Z]^T N [I; Z] >= 0 and check [I; Z]^T M [I; Z] > 0
        let nf = p.n_form();
        let neg_r = SymMatrix::symmetrize(-nf.r());
        let r_half_inv = psd_sqrt(&neg_r, &tol).unwrap().into_matrix().try_inverse().unwrap();
        let psi_half = psd_sqrt(&nf.schur_complement(), &tol).unwrap().into_matrix();
        let center = -nf.r().try_inverse().unwrap() * nf.s().transpose();
        for _ in 0..100 {
            let radius = r.random_range(0.0..=1.0);
            let kk = with_norm(&mut r, l, k, radius);
            let z = &center + &r_half_inv * kk * &psi_half;
            let g = vstack_id(k, &z);
            let nz = min_eig(&n.congruence(&g));
            prop_assert!(nz >= -1e-9 * (1.0 + spectral_norm(&g).powi(2)) * spectral_norm(n.as_matrix()).max(1.0));
            prop_assert!(min_eig(&m.congruence(&g)) > 0.0);
        }
    }
}

fn vstack_id(k: usize, z: &Matrix) -> Matrix {
    nspkit_core::linalg::vstack(&[&Matrix::identity(k, k), z])
}

