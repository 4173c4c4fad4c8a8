mod common;

use common::{central_diff, gauss_jordan_inverse, gaussian, random_orthogonal, rel_err, rng};
use proptest::prelude::*;
use sphere::losses::{
    hebb_grad_linear, hebb_loss, oja_equiv_loss, orth_grad_linear, orth_loss, orth_loss_raw, sphere_grad_linear, sphere_loss,
    sphere_loss_raw, total_loss,
};
use sphere::numerics::{row_normalize, Matrix, ROW_NORM_EPS};
use sphere::oracle::min_sphere_loss;
use sphere::Error;

#[test]
fn hebb_gradient_matches_finite_differences() {
    let x = gaussian(5, 4, &mut rng(1));
    let w = gaussian(4, 2, &mut rng(2));
    let fd = central_diff(&w, 1e-5, |w| hebb_loss(&x.matmul(w).unwrap()));
    let an = hebb_grad_linear(&x, &w).unwrap();
    assert!(rel_err(&an, &fd) <= 1e-6, "{}", rel_err(&an, &fd));
}

#[test]
fn oja_loss_matches_explicit_inverse_trace() {
    // Four samples in six dimensions: the 4x4 input Gram is invertible.
    let x = gaussian(4, 6, &mut rng(3));
    let w = gaussian(6, 2, &mut rng(4));
    let y = x.matmul(&w).unwrap();
    let k = x.matmul_t(&x).unwrap();
    let d = y.matmul_t(&y).unwrap().sub(&k).unwrap();
    let brute = 0.25 * d.matmul(&gauss_jordan_inverse(&k)).unwrap().matmul(&d).unwrap().trace();
    let got = oja_equiv_loss(&y, &x).unwrap();
    assert!((got - brute).abs() / brute.abs() <= 1e-10, "{got} vs {brute}");
    assert!(got >= 0.0);
}

#[test]
fn oja_loss_refuses_more_samples_than_dimensions() {
    let x = gaussian(6, 4, &mut rng(3));
    let y = gaussian(6, 2, &mut rng(4));
    assert!(matches!(oja_equiv_loss(&y, &x), Err(Error::SingularGram { .. })));
}

#[test]
fn sphere_loss_matches_double_loop() {
    let x = gaussian(8, 6, &mut rng(5));
    let z = gaussian(8, 3, &mut rng(6));
    let xh = row_normalize(&x, ROW_NORM_EPS);
    let zh = row_normalize(&z, ROW_NORM_EPS);
    let mut brute = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            let kz: f64 = (0..3).map(|c| zh.get(i, c) * zh.get(j, c)).sum();
            let kx: f64 = (0..6).map(|c| xh.get(i, c) * xh.get(j, c)).sum();
            brute += (kz - kx) * (kz - kx);
        }
    }
    assert!((sphere_loss(&z, &x).unwrap() - brute).abs() <= 1e-12);
}

#[test]
fn sphere_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let x = gaussian(5, 4, &mut rng(100 + seed));
        let w = gaussian(4, 2, &mut rng(200 + seed));
        let fd = central_diff(&w, 1e-5, |w| sphere_loss_raw(&x.matmul(w).unwrap(), &x).unwrap());
        let an = sphere_grad_linear(&x, &w).unwrap();
        let e = rel_err(&an, &fd);
        assert!(e <= 1e-5, "seed {seed}: rel err {e:e}");
    }
}

#[test]
fn sphere_gradient_is_quartic_in_x() {
    let x = gaussian(5, 4, &mut rng(7));
    let w = gaussian(4, 2, &mut rng(8));
    let base = sphere_grad_linear(&x, &w).unwrap();
    for c in [0.5, 2.0, -1.5] {
        let scaled = sphere_grad_linear(&x.scale(c), &w).unwrap();
        let expect = base.scale(c.powi(4));
        assert!(rel_err(&scaled, &expect) <= 1e-12);
    }
}

#[test]
fn orth_gradient_is_quarter_of_exact() {
    for seed in 0..5 {
        let x = gaussian(5, 4, &mut rng(300 + seed));
        let w = gaussian(4, 2, &mut rng(400 + seed));
        let fd = central_diff(&w, 1e-5, |w| orth_loss_raw(&x.matmul(w).unwrap()).unwrap());
        let an = orth_grad_linear(&x, &w).unwrap();
        let cos = sphere::numerics::cosine(an.data(), fd.data());
        assert!(cos >= 1.0 - 1e-8, "seed {seed}: cos {cos}");
        let e = rel_err(&an.scale(4.0), &fd);
        assert!(e <= 1e-5, "seed {seed}: magnitude rel err {e:e}");
    }
}

#[test]
fn total_loss_uses_default_lambda() {
    let x = gaussian(6, 5, &mut rng(9));
    let z = gaussian(6, 3, &mut rng(10));
    let b = total_loss(&z, &x, 0.8).unwrap();
    assert_eq!(b.total, b.sphere + 0.8 * b.orth);
    assert_eq!(b.lambda, 0.8);
}

#[test]
fn total_loss_zero_at_orthogonal_normalized_input() {
    let q = random_orthogonal(4, &mut rng(11));
    let b = total_loss(&q, &q, 0.8).unwrap();
    assert!(b.total.abs() < 1e-24, "{b:?}");
}

#[test]
fn orth_zero_iff_orthonormal_columns() {
    let q = random_orthogonal(5, &mut rng(12));
    assert!(orth_loss(&q).unwrap() <= 1e-20);
    let mut bent = q.clone();
    bent.set(0, 1, bent.get(0, 1) + 0.3);
    assert!(orth_loss_raw(&bent).unwrap() > 1e-10);
}

fn batch_pair() -> impl Strategy<Value = (Matrix, Matrix, usize)> {
    (3usize..8, 3usize..7, 1usize..4).prop_flat_map(|(b, n, m)| {
        let m = m.min(n - 1);
        (prop::collection::vec(-3.0f64..3.0, b * n), prop::collection::vec(-3.0f64..3.0, b * m), Just((b, n, m)))
            .prop_map(|(xd, zd, (b, n, m))| (Matrix::new(b, n, xd).unwrap(), Matrix::new(b, m, zd).unwrap(), m))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sphere_loss_respects_lemma_bound((x, z, m) in batch_pair()) {
        let xh = row_normalize(&x, ROW_NORM_EPS);
        let bound = min_sphere_loss(&xh, m).unwrap();
        prop_assert!(sphere_loss(&z, &x).unwrap() >= bound - 1e-8);
    }

    #[test]
    fn sphere_loss_is_permutation_invariant((x, z, _m) in batch_pair(), seed in 0u64..10_000) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..x.rows()).collect();
        perm.shuffle(&mut rng(seed));
        let a = sphere_loss(&z, &x).unwrap();
        let b = sphere_loss(&z.select_rows(&perm), &x.select_rows(&perm)).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn sphere_gram_difference_is_symmetric((x, z, _m) in batch_pair()) {
        let kx = sphere::numerics::gram(&row_normalize(&x, ROW_NORM_EPS));
        let kz = sphere::numerics::gram(&row_normalize(&z, ROW_NORM_EPS));
        let ab = sphere::numerics::frob_norm_sq(&kz.sub(&kx).unwrap());
        let ba = sphere::numerics::frob_norm_sq(&kx.sub(&kz).unwrap());
        prop_assert_eq!(ab, ba);
    }
}
