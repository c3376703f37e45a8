mod common;

use common::{composite_rule, random_gmm, tensor_integrate, Normal};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sbnn::gmm::{fit_gmm, gmm_logpdf, GaussianKernel, Gmm, GmmFitConfig};

fn direct_density(g: &Gmm, x: &[f64]) -> f64 {
    g.kernels().iter().map(|k| k.a * Normal::new(&k.mu, &k.sigma).pdf(x)).sum()
}

fn integrate(g: &Gmm) -> f64 {
    let d = g.dim();
    // box covering every kernel by 12 marginal standard deviations
    let rules: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|i| {
            let lo = g.kernels().iter().map(|k| k.mu[i] - 12.0 * k.sigma[(i, i)].sqrt()).fold(f64::MAX, f64::min);
            let hi = g.kernels().iter().map(|k| k.mu[i] + 12.0 * k.sigma[(i, i)].sqrt()).fold(f64::MIN, f64::max);
            composite_rule(lo, hi, 80, 10)
        })
        .collect();
    tensor_integrate(&rules, &mut |x| gmm_logpdf(g, x).unwrap().exp())
}

#[test]
fn density_integrates_to_one() {
    let mut r = common::rng(3);
    for d in [1, 2] {
        for _ in 0..4 {
            let k = r.random_range(1..=3);
            let g = random_gmm(&mut r, d, k);
            let total = integrate(&g);
            assert!((total - 1.0).abs() < 1e-6, "d={d} k={k}: {total}");
        }
    }
}

#[test]
fn three_kernels_match_direct_summation() {
    let mut r = common::rng(17);
    for _ in 0..20 {
        let d = r.random_range(1..=4);
        let g = random_gmm(&mut r, d, 3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-4.0..4.0)).collect();
            let direct = direct_density(&g, &x);
            if direct < 1e-250 {
                continue;
            }
            let got = gmm_logpdf(&g, &x).unwrap().exp();
            assert!(((got - direct) / direct).abs() < 1e-12, "{got} vs {direct}");
        }
    }
}

fn two_mode_samples(n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = common::rng(seed);
    // alternate rows between N((-6, 0), I) and N((6, 0), I)
    DMatrix::from_fn(n, 2, |i, j| {
        let z: f64 = StandardNormal.sample(&mut r);
        let shift = if i % 2 == 0 { -6.0 } else { 6.0 };
        z + if j == 0 { shift } else { 0.0 }
    })
}

#[test]
fn bic_recovers_two_kernels() {
    let mut hits = 0;
    for seed in 0..10 {
        let s = two_mode_samples(5000, seed);
        let fit = fit_gmm(&s, &GmmFitConfig { k_candidates: (1..=4).collect(), seed, ..Default::default() }).unwrap();
        if fit.k == 2 {
            hits += 1;
        }
    }
    assert!(hits >= 9, "K=2 selected in {hits}/10 seeds");
}

#[test]
fn fitted_weights_track_the_generator() {
    let s = two_mode_samples(4000, 99);
    let fit = fit_gmm(&s, &GmmFitConfig { k_candidates: vec![2], seed: 1, ..Default::default() }).unwrap();
    let mut ks: Vec<&GaussianKernel> = fit.gmm.kernels().iter().collect();
    ks.sort_by(|a, b| a.mu[0].total_cmp(&b.mu[0]));
    // se of a mean from 2000 unit-variance draws
    let se = (1.0f64 / 2000.0).sqrt();
    assert!((ks[0].mu[0] + 6.0).abs() < 4.0 * se);
    assert!((ks[1].mu[0] - 6.0).abs() < 4.0 * se);
    assert!((ks[0].a - 0.5).abs() < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_mixtures_are_valid(seed in 0u64..10_000, d in 1usize..5, k in 1usize..5) {
        let mut r = common::rng(seed);
        let g = random_gmm(&mut r, d, k);
        let total: f64 = g.kernels().iter().map(|k| k.a).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for k in g.kernels() {
            prop_assert!(k.sigma.clone().cholesky().is_some());
        }
        let back: Gmm = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn logpdf_is_finite_far_from_every_kernel(seed in 0u64..10_000, far in 10.0f64..1e3) {
        // log-sum-exp form: no underflow to -inf where the direct sum would vanish
        let mut r = common::rng(seed);
        let g = random_gmm(&mut r, 2, 3);
        let v = gmm_logpdf(&g, &[far, -far]).unwrap();
        prop_assert!(v.is_finite());
    }

    #[test]
    fn splitting_a_kernel_leaves_the_density_unchanged(seed in 0u64..10_000, w in 0.05f64..0.95) {
        let mut r = common::rng(seed);
        let g = random_gmm(&mut r, 2, 2);
        let mut ks = g.kernels().to_vec();
        let first = ks[0].clone();
        ks[0].a = first.a * w;
        ks.push(GaussianKernel { a: first.a * (1.0 - w), ..first });
        let split = Gmm::new(ks).unwrap();
        let x = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
        let (a, b) = (gmm_logpdf(&g, &x).unwrap(), gmm_logpdf(&split, &x).unwrap());
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn mixture_moments_by_total_variance() {
    let g = Gmm::new(vec![
        GaussianKernel { a: 0.3, mu: DVector::from_vec(vec![-1.0, 2.0]), sigma: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]) },
        GaussianKernel { a: 0.7, mu: DVector::from_vec(vec![2.0, 0.0]), sigma: DMatrix::identity(2, 2) * 0.2 },
    ])
    .unwrap();
    let (m, c) = g.moments();
    // law of total expectation / variance by hand
    assert!((m[0] - (0.3 * -1.0 + 0.7 * 2.0)).abs() < 1e-14);
    let var0 = 0.3 * (1.0 + 1.0) + 0.7 * (0.2 + 4.0) - m[0] * m[0];
    assert!((c[(0, 0)] - var0).abs() < 1e-12);
}
