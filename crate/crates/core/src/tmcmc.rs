//! Transitional Markov chain Monte Carlo.
//!
//! The sampler walks a tempering schedule `0 = beta_0 < beta_1 < ... < beta_m = 1`
//! from the prior to the posterior `prior * likelihood^beta`. At each stage the
//! samples are reweighted by `likelihood^(beta_{j+1} - beta_j)`, resampled, and
//! moved by random-walk Metropolis with a proposal covariance proportional to the
//! weighted sample covariance. The product of the mean stage weights estimates the
//! model evidence.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, weighted_moments};
use crate::rng::{self, tag, StreamRng};

/// A target that TMCMC can temper: a proper prior that can be sampled plus a
/// log-likelihood. `log_prior` may return `-inf` outside the prior support.
pub trait TemperedModel: Sync {
    fn dim(&self) -> usize;
    fn sample_prior(&self, rng: &mut StreamRng) -> Vec<f64>;
    fn log_prior(&self, x: &[f64]) -> f64;
    fn log_likelihood(&self, x: &[f64]) -> f64;
}

/// Adapter turning three closures into a [`TemperedModel`].
pub struct FnModel<S, P, L> {
    pub dim: usize,
    pub sampler: S,
    pub log_prior: P,
    pub log_likelihood: L,
}

impl<S, P, L> TemperedModel for FnModel<S, P, L>
where
    S: Fn(&mut StreamRng) -> Vec<f64> + Sync,
    P: Fn(&[f64]) -> f64 + Sync,
    L: Fn(&[f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample_prior(&self, rng: &mut StreamRng) -> Vec<f64> {
        (self.sampler)(rng)
    }
    fn log_prior(&self, x: &[f64]) -> f64 {
        (self.log_prior)(x)
    }
    fn log_likelihood(&self, x: &[f64]) -> f64 {
        (self.log_likelihood)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TmcmcConfig {
    pub n_samples: usize,
    /// Target coefficient of variation of the stage weights.
    pub target_cov: f64,
    /// Scale applied to the weighted sample covariance (standard-deviation units).
    pub proposal_scale: f64,
    pub max_stages: usize,
    /// Metropolis sweeps per stage.
    pub mh_steps: usize,
    /// Rescale the proposal after each stage by `1/9 + 8/9 * acceptance`, starting
    /// from `proposal_scale`. Off by default.
    pub adapt_scale: bool,
    pub seed: u64,
}

impl Default for TmcmcConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            target_cov: 1.0,
            proposal_scale: 0.2,
            max_stages: 200,
            mh_steps: 1,
            adapt_scale: false,
            seed: 0,
        }
    }
}

impl TmcmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidArgument("tmcmc needs at least 2 samples".into()));
        }
        if !(self.target_cov > 0.0) {
            return Err(Error::InvalidArgument("target_cov must be positive".into()));
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale <= 1.0) {
            return Err(Error::InvalidArgument("proposal_scale must lie in (0, 1]".into()));
        }
        if self.max_stages == 0 {
            return Err(Error::InvalidArgument("max_stages must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub stage: usize,
    pub beta: f64,
    pub log_mean_weight: f64,
    pub acc_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmcmcResult {
    /// Final-stage samples, one per row.
    pub samples: DMatrix<f64>,
    /// Log-likelihood of each final sample.
    pub loglikes: Vec<f64>,
    pub log_evidence: f64,
    pub stages: Vec<StageInfo>,
}

impl TmcmcResult {
    pub fn betas(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.beta).collect()
    }
}

/// Coefficient of variation (sample standard deviation over mean) of
/// `exp(delta * loglikes)`.
fn weight_cov(loglikes: &[f64], max: f64, delta: f64) -> f64 {
    let n = loglikes.len() as f64;
    let w: Vec<f64> = loglikes.iter().map(|&l| (delta * (l - max)).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean
}

/// Largest `beta' in (beta, 1]` whose stage weights have coefficient of variation at
/// most `target_cov`, located by bisection.
pub fn select_next_beta(loglikes: &[f64], beta: f64, target_cov: f64) -> f64 {
    let finite: Vec<f64> = loglikes.iter().copied().filter(|l| l.is_finite()).collect();
    if finite.len() < 2 {
        return 1.0;
    }
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        return 1.0;
    }
    let remaining = 1.0 - beta;
    if weight_cov(loglikes, max, remaining) <= target_cov {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, remaining);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if weight_cov(loglikes, max, mid) <= target_cov {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * remaining.max(1e-300) {
            break;
        }
    }
    let next = beta + lo.max(f64::EPSILON * remaining);
    next.min(1.0)
}

/// Normalized importance weights for a tempering increment and the log of the
/// mean unnormalized weight (the stage's evidence factor).
pub fn stage_weights(loglikes: &[f64], delta: f64) -> Option<(Vec<f64>, f64)> {
    let logw: Vec<f64> = loglikes.iter().map(|&l| delta * l).collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let w: Vec<f64> = logw.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let log_mean = max + (total / loglikes.len() as f64).ln();
    Some((w.into_iter().map(|x| x / total).collect(), log_mean))
}

/// Output of one resample-move step.
#[derive(Debug, Clone)]
pub struct StageMove {
    pub samples: DMatrix<f64>,
    pub loglikes: Vec<f64>,
    pub acc_rate: f64,
}

/// Multinomial resampling by `weights` followed by `cfg.mh_steps` random-walk
/// Metropolis sweeps targeting `prior * likelihood^beta`. The proposal covariance is
/// `proposal_scale^2` times the weighted covariance of the incoming samples.
pub fn metropolis_stage<M: TemperedModel + ?Sized>(
    model: &M,
    samples: &DMatrix<f64>,
    loglikes: &[f64],
    weights: &[f64],
    beta: f64,
    cfg: &TmcmcConfig,
    stage: usize,
) -> Result<StageMove> {
    metropolis_stage_scaled(model, samples, loglikes, weights, beta, cfg, cfg.proposal_scale, stage)
}

/// [`metropolis_stage`] with an explicit proposal scale.
#[allow(clippy::too_many_arguments)]
pub fn metropolis_stage_scaled<M: TemperedModel + ?Sized>(
    model: &M,
    samples: &DMatrix<f64>,
    loglikes: &[f64],
    weights: &[f64],
    beta: f64,
    cfg: &TmcmcConfig,
    scale: f64,
    stage: usize,
) -> Result<StageMove> {
    let (n, d) = samples.shape();
    if weights.iter().any(|&w| !(w >= 0.0)) || weights.iter().all(|&w| w == 0.0) {
        return Err(Error::DegenerateWeights { stage });
    }
    let mut rs_rng = rng::stream(cfg.seed, &[tag::TMCMC, stage as u64, 0]);
    let picker = WeightedIndex::new(weights).map_err(|_| Error::DegenerateWeights { stage })?;
    let picks: Vec<usize> = (0..n).map(|_| picker.sample(&mut rs_rng)).collect();

    if cfg.mh_steps == 0 {
        let mut out = DMatrix::zeros(n, d);
        for (r, &p) in picks.iter().enumerate() {
            out.set_row(r, &samples.row(p));
        }
        return Ok(StageMove {
            samples: out,
            loglikes: picks.iter().map(|&p| loglikes[p]).collect(),
            acc_rate: 1.0,
        });
    }

    let (_, cov) = weighted_moments(samples, weights);
    let scaled = cov * (scale * scale);
    let (chol, _) = cholesky_jittered(&scaled, 1e-10)
        .ok_or(Error::NotPositiveDefinite("tmcmc proposal covariance"))?;
    let lower = chol.l();

    let moved: Vec<(Vec<f64>, f64, usize)> = picks
        .par_iter()
        .enumerate()
        .map(|(c, &p)| {
            let mut rng = rng::stream(cfg.seed, &[tag::TMCMC, stage as u64, 1, c as u64]);
            let mut x: Vec<f64> = samples.row(p).iter().copied().collect();
            let mut ll = loglikes[p];
            let mut lp = model.log_prior(&x);
            let mut accepted = 0;
            let mut z = DVector::zeros(d);
            let mut y = vec![0.0; d];
            for _ in 0..cfg.mh_steps {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                let step = &lower * &z;
                for k in 0..d {
                    y[k] = x[k] + step[k];
                }
                let lp_new = model.log_prior(&y);
                let u: f64 = rng.random();
                if lp_new == f64::NEG_INFINITY {
                    continue;
                }
                let ll_new = model.log_likelihood(&y);
                let log_ratio = (lp_new + beta * ll_new) - (lp + beta * ll);
                if log_ratio >= 0.0 || u.ln() < log_ratio {
                    x.copy_from_slice(&y);
                    ll = ll_new;
                    lp = lp_new;
                    accepted += 1;
                }
            }
            (x, ll, accepted)
        })
        .collect();

    let mut out = DMatrix::zeros(n, d);
    let mut lls = Vec::with_capacity(n);
    let mut acc = 0usize;
    for (r, (x, ll, a)) in moved.into_iter().enumerate() {
        for k in 0..d {
            out[(r, k)] = x[k];
        }
        lls.push(ll);
        acc += a;
    }
    Ok(StageMove {
        samples: out,
        loglikes: lls,
        acc_rate: acc as f64 / (n * cfg.mh_steps) as f64,
    })
}

/// Run TMCMC from the prior to the posterior. Deterministic given `cfg.seed`.
pub fn tmcmc_sample<M: TemperedModel + ?Sized>(model: &M, cfg: &TmcmcConfig) -> Result<TmcmcResult> {
    cfg.validate()?;
    let n = cfg.n_samples;
    let d = model.dim();
    let draws: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, &[tag::TMCMC, u64::MAX, i as u64]);
            let x = model.sample_prior(&mut rng);
            let ll = model.log_likelihood(&x);
            (x, ll)
        })
        .collect();
    let mut samples = DMatrix::zeros(n, d);
    let mut loglikes = Vec::with_capacity(n);
    for (r, (x, ll)) in draws.into_iter().enumerate() {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                what: "prior sample",
                expected: d,
                got: x.len(),
            });
        }
        for k in 0..d {
            samples[(r, k)] = x[k];
        }
        loglikes.push(ll);
    }

    let mut beta = 0.0;
    let mut log_evidence = 0.0;
    let mut stages = vec![StageInfo {
        stage: 0,
        beta: 0.0,
        log_mean_weight: 0.0,
        acc_rate: 1.0,
    }];
    let mut stage = 0;
    let mut scale = cfg.proposal_scale;
    while beta < 1.0 {
        if stage >= cfg.max_stages {
            let partial = TmcmcResult {
                samples,
                loglikes,
                log_evidence,
                stages,
            };
            return Err(Error::MaxStagesExceeded {
                max_stages: cfg.max_stages,
                beta,
                partial: Box::new(partial),
            });
        }
        let next = select_next_beta(&loglikes, beta, cfg.target_cov);
        let (weights, log_mean) =
            stage_weights(&loglikes, next - beta).ok_or(Error::DegenerateWeights { stage })?;
        log_evidence += log_mean;
        stage += 1;
        let moved =
            metropolis_stage_scaled(model, &samples, &loglikes, &weights, next, cfg, scale, stage)?;
        if cfg.adapt_scale {
            scale = (scale * (1.0 / 9.0 + 8.0 / 9.0 * moved.acc_rate)).clamp(1e-4, 1.0);
        }
        log::debug!(
            "tmcmc stage {stage}: beta {next:.6e}, acceptance {:.3}",
            moved.acc_rate
        );
        samples = moved.samples;
        loglikes = moved.loglikes;
        beta = next;
        stages.push(StageInfo {
            stage,
            beta,
            log_mean_weight: log_mean,
            acc_rate: moved.acc_rate,
        });
    }

    Ok(TmcmcResult {
        samples,
        loglikes,
        log_evidence,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LN_2PI;

    fn gaussian_model(
        lik_mean: f64,
    ) -> FnModel<
        impl Fn(&mut StreamRng) -> Vec<f64> + Sync,
        impl Fn(&[f64]) -> f64 + Sync,
        impl Fn(&[f64]) -> f64 + Sync,
    > {
        FnModel {
            dim: 1,
            sampler: |r: &mut StreamRng| vec![StandardNormal.sample(r)],
            log_prior: |x: &[f64]| -0.5 * LN_2PI - 0.5 * x[0] * x[0],
            log_likelihood: move |x: &[f64]| -0.5 * LN_2PI - 0.5 * (lik_mean - x[0]).powi(2),
        }
    }

    #[test]
    fn equal_loglikes_jump_to_one() {
        assert_eq!(select_next_beta(&[-3.0; 10], 0.2, 1.0), 1.0);
    }

    #[test]
    fn huge_target_cov_jumps_to_one() {
        let ll: Vec<f64> = (0..100).map(|i| -(i as f64)).collect();
        assert_eq!(select_next_beta(&ll, 0.0, 1e300), 1.0);
    }

    #[test]
    fn two_point_beta_matches_bisection_oracle() {
        // independent oracle: bisection on the closed-form two-point CoV
        // sqrt(2) (1 - e) / (1 + e), e = exp(-10 b)
        let cov = |b: f64| {
            let e = (-10.0 * b).exp();
            std::f64::consts::SQRT_2 * (1.0 - e) / (1.0 + e)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if cov(m) <= 1.0 {
                lo = m
            } else {
                hi = m
            }
        }
        let got = select_next_beta(&[0.0, -10.0], 0.0, 1.0);
        assert!((got - lo).abs() < 1e-12, "{got} vs {lo}");
        assert!((got - (3.0 + 2.0 * std::f64::consts::SQRT_2).ln() / 10.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let ll: Vec<f64> = (0..1000).map(|i| -0.37 * i as f64).collect();
        let (w, _) = stage_weights(&ll, 0.013).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(stage_weights(&[f64::NEG_INFINITY; 3], 0.5).is_none());
    }

    #[test]
    fn constant_likelihood_gives_log_constant() {
        let c: f64 = 0.3;
        let model = FnModel {
            dim: 2,
            sampler: |r: &mut StreamRng| vec![r.random::<f64>(), r.random::<f64>()],
            log_prior: |x: &[f64]| if x.iter().all(|v| (0.0..=1.0).contains(v)) { 0.0 } else { f64::NEG_INFINITY },
            log_likelihood: move |_: &[f64]| c.ln(),
        };
        let cfg = TmcmcConfig { n_samples: 500, ..Default::default() };
        let res = tmcmc_sample(&model, &cfg).unwrap();
        assert!((res.log_evidence - c.ln()).abs() < 1e-12);
        assert_eq!(res.betas(), vec![0.0, 1.0]);
        // samples stay uniform on the box
        let mean: f64 = res.samples.column(0).iter().sum::<f64>() / 500.0;
        assert!((mean - 0.5).abs() < 3.0 * (1.0 / 12.0f64 / 500.0).sqrt() * 2.0);
    }

    #[test]
    fn conjugate_evidence_single_seed() {
        let model = gaussian_model(1.0);
        let cfg = TmcmcConfig { n_samples: 4000, seed: 3, ..Default::default() };
        let res = tmcmc_sample(&model, &cfg).unwrap();
        let exact = -0.5 * (LN_2PI + 2f64.ln()) - 0.25;
        assert!((res.log_evidence - exact).abs() < 0.05, "{} vs {}", res.log_evidence, exact);
        let b = res.betas();
        assert!(b.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*b.last().unwrap(), 1.0);
        // posterior N(0.5, 0.5)
        let m: f64 = res.samples.column(0).mean();
        assert!((m - 0.5).abs() < 0.06);
    }

    #[test]
    fn deterministic_given_seed() {
        let model = gaussian_model(2.0);
        let cfg = TmcmcConfig { n_samples: 300, seed: 9, mh_steps: 2, ..Default::default() };
        let a = tmcmc_sample(&model, &cfg).unwrap();
        let b = tmcmc_sample(&model, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pure_resampling_draws_from_inputs() {
        let model = gaussian_model(0.0);
        let samples = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let ll = vec![0.0; 5];
        let w = vec![0.2; 5];
        let cfg = TmcmcConfig { mh_steps: 0, ..Default::default() };
        let out = metropolis_stage(&model, &samples, &ll, &w, 0.5, &cfg, 1).unwrap();
        for v in out.samples.iter() {
            assert!([1.0, 2.0, 3.0, 4.0, 5.0].contains(v));
        }
    }

    #[test]
    fn long_chain_matches_target_moments() {
        // target N(0, 1): prior N(0,1) with flat likelihood, many sweeps
        let model = FnModel {
            dim: 1,
            sampler: |r: &mut StreamRng| vec![StandardNormal.sample(r)],
            log_prior: |x: &[f64]| -0.5 * x[0] * x[0],
            log_likelihood: |_: &[f64]| 0.0,
        };
        let n = 4000;
        let cfg = TmcmcConfig { mh_steps: 200, proposal_scale: 1.0, seed: 4, ..Default::default() };
        let wide: Vec<f64> = (0..n).map(|i| -3.0 + 6.0 * i as f64 / n as f64).collect();
        let wide = DMatrix::from_column_slice(n, 1, &wide);
        let moved = metropolis_stage(&model, &wide, &vec![0.0; n], &vec![1.0; n], 1.0, &cfg, 1).unwrap();
        let col = moved.samples.column(0);
        let mean = col.mean();
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let se_mean = (1.0 / n as f64).sqrt();
        let se_var = (2.0 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se_mean, "mean {mean}");
        assert!((var - 1.0).abs() < 3.0 * se_var, "var {var}");
    }

    #[test]
    fn vanishing_proposal_accepts_everything() {
        let model = gaussian_model(0.0);
        let samples = DMatrix::from_column_slice(4, 1, &[-1.0, 0.0, 0.5, 1.0]);
        let ll: Vec<f64> = samples.iter().map(|x| model.log_likelihood(&[*x])).collect();
        let cfg = TmcmcConfig { mh_steps: 5, proposal_scale: 1e-9, ..Default::default() };
        let out = metropolis_stage(&model, &samples, &ll, &[0.25; 4], 1.0, &cfg, 2).unwrap();
        assert!(out.acc_rate > 0.99);
        for v in out.samples.iter() {
            assert!([-1.0, 0.0, 0.5, 1.0].iter().any(|s| (s - v).abs() < 1e-6));
        }
    }

    #[test]
    fn max_stages_reports_partial_result() {
        let model = FnModel {
            dim: 1,
            sampler: |r: &mut StreamRng| vec![StandardNormal.sample(r)],
            log_prior: |x: &[f64]| -0.5 * x[0] * x[0],
            log_likelihood: |x: &[f64]| -1e4 * x[0] * x[0],
        };
        let cfg = TmcmcConfig { n_samples: 200, max_stages: 1, ..Default::default() };
        match tmcmc_sample(&model, &cfg) {
            Err(Error::MaxStagesExceeded { partial, beta, .. }) => {
                assert!(beta < 1.0);
                assert_eq!(partial.samples.nrows(), 200);
            }
            other => panic!("expected MaxStagesExceeded, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_weights_rejected() {
        let model = gaussian_model(0.0);
        let s = DMatrix::zeros(2, 1);
        assert!(metropolis_stage(&model, &s, &[0.0, 0.0], &[0.0, 0.0], 1.0, &TmcmcConfig::default(), 1).is_err());
    }
}
