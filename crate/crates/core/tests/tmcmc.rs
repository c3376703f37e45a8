use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sbnn::linalg::LN_2PI;
use sbnn::tmcmc::{select_next_beta, stage_weights, tmcmc_sample, FnModel, TmcmcConfig};

/// Prior N(0, I_d) times likelihood N(y | phi, s2 I_d).
fn gaussian_model(
    y: Vec<f64>,
    s2: f64,
) -> FnModel<
    impl Fn(&mut sbnn::rng::StreamRng) -> Vec<f64> + Sync,
    impl Fn(&[f64]) -> f64 + Sync,
    impl Fn(&[f64]) -> f64 + Sync,
> {
    let d = y.len();
    FnModel {
        dim: d,
        sampler: move |r: &mut sbnn::rng::StreamRng| (0..d).map(|_| StandardNormal.sample(r)).collect(),
        log_prior: move |x: &[f64]| x.iter().map(|v| -0.5 * v * v - 0.5 * LN_2PI).sum(),
        log_likelihood: move |x: &[f64]| {
            x.iter()
                .zip(&y)
                .map(|(a, b)| -0.5 * (a - b) * (a - b) / s2 - 0.5 * (LN_2PI + s2.ln()))
                .sum()
        },
    }
}

/// log N(y | 0, (1 + s2) I).
fn exact_log_evidence(y: &[f64], s2: f64) -> f64 {
    let v = 1.0 + s2;
    y.iter().map(|b| -0.5 * b * b / v - 0.5 * (LN_2PI + v.ln())).sum()
}

#[test]
fn conjugate_evidence_across_seeds() {
    let m = gaussian_model(vec![1.0], 1.0);
    let exact = exact_log_evidence(&[1.0], 1.0);
    let est: Vec<f64> = (0..10)
        .map(|seed| {
            let cfg = TmcmcConfig { n_samples: 4000, seed, ..Default::default() };
            tmcmc_sample(&m, &cfg).unwrap().log_evidence
        })
        .collect();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    assert!((mean - exact).abs() < 0.03, "{mean} vs {exact}");
    for e in &est {
        assert!(((e - exact).exp() - 1.0).abs() < 0.05, "{e} vs {exact}");
    }
}

#[test]
fn two_dimensional_evidence() {
    let y = vec![0.7, -1.3];
    let m = gaussian_model(y.clone(), 0.5);
    let exact = exact_log_evidence(&y, 0.5);
    for seed in 0..10 {
        let cfg = TmcmcConfig { n_samples: 10_000, mh_steps: 2, seed, ..Default::default() };
        let r = tmcmc_sample(&m, &cfg).unwrap();
        assert!(((r.log_evidence - exact).exp() - 1.0).abs() < 0.05, "seed {seed}: {} vs {exact}", r.log_evidence);
        // posterior mean y / (1 + s2)
        for (j, yj) in y.iter().enumerate() {
            let mean = r.samples.column(j).mean();
            assert!((mean - yj / 1.5).abs() < 0.06, "{mean}");
        }
    }
}

#[test]
fn mean_of_fifty_log_evidences() {
    let m = gaussian_model(vec![1.0], 1.0);
    let exact = exact_log_evidence(&[1.0], 1.0);
    let z: Vec<f64> = (0..50)
        .map(|seed| {
            let cfg = TmcmcConfig { n_samples: 2000, seed: 1000 + seed, ..Default::default() };
            tmcmc_sample(&m, &cfg).unwrap().log_evidence
        })
        .collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    assert!((mean - exact).abs() < 0.02, "{mean} vs {exact}");
}

#[test]
fn adaptive_scale_keeps_evidence_and_acceptance() {
    let y = [0.3, 0.9, -0.4];
    let m = gaussian_model(y.to_vec(), 0.2);
    let exact = exact_log_evidence(&y, 0.2);
    let mut err = 0.0;
    for seed in 0..5 {
        let cfg = TmcmcConfig { n_samples: 20_000, mh_steps: 3, adapt_scale: true, seed, ..Default::default() };
        let r = tmcmc_sample(&m, &cfg).unwrap();
        err += (r.log_evidence - exact) / 5.0;
        let last = r.stages.last().unwrap();
        assert!(last.acc_rate > 0.2, "{}", last.acc_rate);
    }
    assert!(err.abs() < 0.03, "{err}");
}

#[test]
fn betas_increase_to_one() {
    let m = gaussian_model(vec![3.0, -2.0], 0.05);
    let r = tmcmc_sample(&m, &TmcmcConfig { n_samples: 500, seed: 2, ..Default::default() }).unwrap();
    let b = r.betas();
    assert_eq!(b[0], 0.0);
    assert_eq!(*b.last().unwrap(), 1.0);
    assert!(b.windows(2).all(|w| w[1] > w[0]));
}

fn cov(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let m = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn next_beta_respects_target(
        lls in prop::collection::vec(-200.0f64..0.0, 3..40),
        beta in 0.0f64..0.95,
        target in 0.2f64..3.0,
    ) {
        let next = select_next_beta(&lls, beta, target);
        prop_assert!(next > beta && next <= 1.0);
        let (w, _) = stage_weights(&lls, next - beta).unwrap();
        if next < 1.0 {
            // on the boundary up to bisection tolerance
            prop_assert!((cov(&w) - target).abs() < 1e-3 * target.max(1.0), "{} vs {target}", cov(&w));
        } else {
            prop_assert!(cov(&w) <= target + 1e-9);
        }
    }

    #[test]
    fn stage_weights_are_normalized(lls in prop::collection::vec(-1e3f64..1e3, 1..30), d in 0.0f64..1.0) {
        let (w, log_mean) = stage_weights(&lls, d).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // log of the mean unnormalized weight
        let max = lls.iter().cloned().fold(f64::MIN, f64::max);
        let direct = max * d + (lls.iter().map(|l| (d * (l - max)).exp()).sum::<f64>() / lls.len() as f64).ln();
        prop_assert!((log_mean - direct).abs() < 1e-9 * direct.abs().max(1.0));
    }
}

#[test]
fn moves_preserve_a_bounded_support() {
    // a uniform prior on [0, 1]: every sample must stay inside
    let m = FnModel {
        dim: 1,
        sampler: |r: &mut sbnn::rng::StreamRng| vec![r.random::<f64>()],
        log_prior: |x: &[f64]| if (0.0..=1.0).contains(&x[0]) { 0.0 } else { f64::NEG_INFINITY },
        log_likelihood: |x: &[f64]| -50.0 * (x[0] - 0.95).powi(2),
    };
    let r = tmcmc_sample(&m, &TmcmcConfig { n_samples: 1000, mh_steps: 3, seed: 8, ..Default::default() }).unwrap();
    assert!(r.samples.iter().all(|v| (0.0..=1.0).contains(v)));
}
