mod common;

use common::{gaussian, jacobi_eigenvalues, random_orthogonal, rng};
use proptest::prelude::*;
use rand::Rng;
use sphere::losses::{hebb_grad_linear, sphere_loss_raw};
use sphere::numerics::{frob_norm_sq, gram, svd, Matrix};
use sphere::oracle::{cka, min_sphere_loss, principal_projection, svd_alignment};
use sphere::plasticity::{hebbian_delta, oja_step, Rule, RuleState};
use sphere::Error;

#[test]
fn projection_is_exact_and_locally_optimal() {
    let x = gaussian(12, 6, &mut rng(40));
    let o = principal_projection(&x, 3).unwrap();
    let at_star = sphere_loss_raw(&o.y_star, &x).unwrap();
    assert!((at_star - o.min_loss).abs() <= 1e-9 * (1.0 + o.min_loss));
    let mut r = rng(41);
    for trial in 0..100 {
        let eps = 10f64.powf(r.random_range(-4.0..0.0));
        let y = o.y_star.add(&gaussian(12, 3, &mut r).scale(eps)).unwrap();
        let l = sphere_loss_raw(&y, &x).unwrap();
        assert!(l >= o.min_loss - 1e-9, "trial {trial}: {l} < {}", o.min_loss);
    }
}

#[test]
fn gram_of_projection_matches_truncation() {
    let x = gaussian(9, 5, &mut rng(42));
    let o = principal_projection(&x, 2).unwrap();
    let diff = gram(&o.y_star).sub(&o.gram_rank_m).unwrap();
    assert!(frob_norm_sq(&diff).sqrt() <= 1e-8);
    let resid = gram(&x).sub(&o.gram_rank_m).unwrap();
    assert!((frob_norm_sq(&resid) - o.min_loss).abs() <= 1e-8 * (1.0 + o.min_loss));
}

#[test]
fn min_loss_monotone_and_last_is_smallest_sigma() {
    let x = gaussian(10, 6, &mut rng(43));
    let s = svd(&x).unwrap().s;
    let losses: Vec<f64> = (1..6).map(|m| min_sphere_loss(&x, m).unwrap()).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    let last = losses[4];
    assert!((last - s[5].powi(4)).abs() <= 1e-12 * (1.0 + last));
    assert!(matches!(min_sphere_loss(&x, 6), Err(Error::InvalidArgument(_))));
}

#[test]
fn truncation_beats_random_rank_m_alternatives() {
    let x = gaussian(8, 5, &mut rng(44));
    let o = principal_projection(&x, 2).unwrap();
    let k = gram(&x);
    let best = frob_norm_sq(&k.sub(&o.gram_rank_m).unwrap());
    let mut r = rng(45);
    for _ in 0..100 {
        let scale = r.random_range(0.1..3.0);
        let f = gaussian(8, 2, &mut r).scale(scale);
        let alt = frob_norm_sq(&k.sub(&gram(&f)).unwrap());
        assert!(alt >= best - 1e-9);
        let near = o.y_star.add(&gaussian(8, 2, &mut r).scale(1e-3)).unwrap();
        assert!(frob_norm_sq(&k.sub(&gram(&near)).unwrap()) >= best - 1e-9);
    }
}

#[test]
fn random_outputs_never_beat_the_bound() {
    let x = gaussian(16, 8, &mut rng(46));
    let bound = min_sphere_loss(&x, 3).unwrap();
    let mut r = rng(47);
    for _ in 0..1000 {
        let scale = 10f64.powf(r.random_range(-1.0..1.0));
        let y = gaussian(16, 3, &mut r).scale(scale);
        assert!(sphere_loss_raw(&y, &x).unwrap() >= bound - 1e-9);
    }
}

#[test]
fn cka_invariances() {
    let a = gaussian(20, 5, &mut rng(48));
    assert!((cka(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
    let q = random_orthogonal(5, &mut rng(49));
    for c in [0.3, -2.0, 7.5] {
        let b = a.matmul(&q).unwrap().scale(c);
        assert!((cka(&a, &b).unwrap() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn cka_of_independent_gaussians_is_small() {
    for seed in 0..5 {
        let a = gaussian(64, 8, &mut rng(500 + seed));
        let b = gaussian(64, 8, &mut rng(600 + seed));
        let v = cka(&a, &b).unwrap();
        assert!(v > 0.0 && v < 0.5, "seed {seed}: {v}");
    }
}

#[test]
fn cka_rejects_constant_input() {
    let a = Matrix::from_fn(5, 3, |_, j| j as f64);
    let b = gaussian(5, 3, &mut rng(50));
    assert!(matches!(cka(&a, &b), Err(Error::UndefinedSimilarity(_))));
}

#[test]
fn alignment_self_is_identity() {
    let a = gaussian(30, 8, &mut rng(51));
    let m = svd_alignment(&a, &a, 8).unwrap();
    for i in 0..8 {
        assert!(m.get(i, i) >= 1.0 - 1e-8);
    }
    assert!(svd_alignment(&a, &a, 9).is_err());
}

#[test]
fn alignment_with_swapped_columns_permutes_block() {
    // Orthonormal columns scaled by distinct values: right singular vectors
    // are the coordinate axes, so swapping the last two columns swaps the
    // last two components.
    let q = random_orthogonal(10, &mut rng(52)).leading_columns(5);
    let a = q.matmul(&Matrix::diag(&[5.0, 4.0, 3.0, 2.0, 1.0])).unwrap();
    let b = Matrix::from_fn(10, 5, |i, j| a.get(i, [0, 1, 2, 4, 3][j]));
    let m = svd_alignment(&a, &b, 5).unwrap();
    let mut expect = Matrix::identity(5);
    expect.set(3, 3, 0.0);
    expect.set(4, 4, 0.0);
    expect.set(3, 4, 1.0);
    expect.set(4, 3, 1.0);
    assert!(m.sub(&expect).unwrap().max_abs() <= 1e-10, "{m:?}");
}

/// Zero-mean Gaussian rows with principal standard deviations `sigmas` in a
/// random basis, scaled by `1/√B` so `XᵀX` approximates the covariance.
fn spectral_data(b: usize, sigmas: &[f64], seed: u64) -> Matrix {
    let n = sigmas.len();
    let basis = random_orthogonal(n, &mut rng(seed));
    let g = gaussian(b, n, &mut rng(seed + 1));
    let scaled = g.matmul(&Matrix::diag(sigmas)).unwrap();
    scaled.matmul_t(&basis).unwrap().scale(1.0 / (b as f64).sqrt())
}

#[test]
fn oja_finds_top_direction() {
    let x = spectral_data(400, &[3.0, 1.0, 0.3], 60);
    let v1 = svd(&x).unwrap().v.column(0);
    let mut state = RuleState::new(gaussian(3, 1, &mut rng(61)).scale(0.1), 0.01, Rule::Oja).unwrap();
    for _ in 0..2000 {
        state = oja_step(&state, &x).unwrap();
    }
    let w = state.w.column(0);
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cos = w.iter().zip(&v1).map(|(a, b)| a * b).sum::<f64>() / norm;
    assert!(cos.abs() >= 0.99, "{cos}");
    assert!((norm - 1.0).abs() <= 1e-2, "{norm}");
}

#[test]
fn oja_fixed_point_is_still() {
    let x = spectral_data(50, &[2.0, 1.0, 0.5, 0.1], 62);
    let dec = svd(&x).unwrap();
    let state = RuleState::new(dec.v.leading_columns(1), 0.05, Rule::Oja).unwrap();
    let delta = sphere::plasticity::oja_delta(&state, &x).unwrap();
    let xtx_norm = frob_norm_sq(&x.t_matmul(&x).unwrap()).sqrt();
    assert!(frob_norm_sq(&delta).sqrt() <= 1e-8 * 0.05 * xtx_norm);
}

#[test]
fn hebb_step_is_gradient_descent_on_hebb_loss() {
    let x = gaussian(6, 4, &mut rng(63));
    let w = gaussian(4, 2, &mut rng(64));
    let eta = 0.07;
    let state = RuleState::new(w.clone(), eta, Rule::Hebb).unwrap();
    let delta = hebbian_delta(&state, &x).unwrap();
    let expect = hebb_grad_linear(&x, &w).unwrap().scale(-eta);
    assert!(delta.sub(&expect).unwrap().max_abs() <= 1e-12);
}

#[test]
fn hebb_grows_then_diverges() {
    let x = gaussian(6, 4, &mut rng(65));
    let mut state = RuleState::new(gaussian(4, 2, &mut rng(66)), 0.5, Rule::Hebb).unwrap();
    let mut last = frob_norm_sq(&state.w);
    let mut diverged = false;
    for _ in 0..500 {
        match state.step(&x) {
            Ok(next) => {
                let n = frob_norm_sq(&next.w);
                assert!(n > last);
                last = n;
                state = next;
            }
            Err(Error::Divergence { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(diverged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cka_in_unit_interval(seed in 0u64..100_000, b in 3usize..20, p in 1usize..6, q in 1usize..6) {
        let a = gaussian(b, p, &mut rng(seed));
        let c = gaussian(b, q, &mut rng(seed ^ 0xabcdef));
        let v = cka(&a, &c).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn oracle_gram_matches_eigen_truncation(seed in 0u64..100_000, m in 1usize..4) {
        let x = gaussian(7, 5, &mut rng(seed));
        let o = principal_projection(&x, m).unwrap();
        let ev = jacobi_eigenvalues(&gram(&x));
        let tail: f64 = ev.iter().skip(m).map(|e| e.max(0.0).powi(2)).sum();
        prop_assert!((o.min_loss - tail).abs() <= 1e-8 * (1.0 + tail));
    }

    #[test]
    fn oja_and_hebb_batch_order_invariant(seed in 0u64..100_000) {
        let x = gaussian(6, 3, &mut rng(seed));
        let perm = sphere::sampling::permutation(6, &mut rng(seed + 1));
        let xp = x.select_rows(&perm);
        for rule in [Rule::Hebb, Rule::Oja] {
            let s = RuleState::new(gaussian(3, 2, &mut rng(seed + 2)), 0.01, rule).unwrap();
            let a = s.step(&x).unwrap().w;
            let b = s.step(&xp).unwrap().w;
            prop_assert!(a.sub(&b).unwrap().max_abs() <= 1e-12);
        }
    }
}
