//! The five inference pipelines on a regression dataset, as library calls.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{fit_gmm, GmmFit, GmmFitConfig, Gmm};
use crate::laplace::{laplace_fit, laplace_kernel, LaplaceConfig, LaplaceFit};
use crate::net::{log_likelihood_grad, log_likelihood_unchecked, Dataset, NetworkSpec, PriorSpec, Scratch};
use crate::nsbl::{nsbl, Hyperprior, NsblResult, TrustRegionConfig};
use crate::tmcmc::{tmcmc_sample, FnModel, TmcmcConfig, TmcmcResult};

pub const DEFAULT_FLAT_BOX: (f64, f64) = (-30.0, 30.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StandardConfig {
    /// Support of the flat prior on every parameter.
    pub flat_box: (f64, f64),
    pub tmcmc: TmcmcConfig,
}

impl Default for StandardConfig {
    fn default() -> Self {
        Self {
            flat_box: DEFAULT_FLAT_BOX,
            tmcmc: TmcmcConfig {
                n_samples: 20_000,
                ..TmcmcConfig::default()
            },
        }
    }
}

impl StandardConfig {
    /// Settings used for the 1-3-1 boxcar study: the fixed 0.2 proposal scale
    /// stalls on this posterior, so the scale adapts and each stage moves 5 times.
    pub fn boxcar_study() -> Self {
        Self {
            flat_box: DEFAULT_FLAT_BOX,
            tmcmc: TmcmcConfig {
                n_samples: 20_000,
                mh_steps: 5,
                adapt_scale: true,
                ..TmcmcConfig::default()
            },
        }
    }
}

/// TMCMC on likelihood times a flat box prior.
pub fn standard_bayes(data: &Dataset, spec: &NetworkSpec, cfg: &StandardConfig) -> Result<TmcmcResult> {
    data.validate()?;
    spec.validate()?;
    let (lo, hi) = cfg.flat_box;
    let prior = PriorSpec::all_flat(spec.n_params(), lo, hi);
    prior.validate(spec.n_params())?;
    let model = FnModel {
        dim: spec.n_params(),
        sampler: |rng: &mut crate::rng::StreamRng| {
            use rand::Rng;
            (0..spec.n_params()).map(|_| rng.random_range(lo..hi)).collect()
        },
        log_prior: |x: &[f64]| prior.log_known(x),
        log_likelihood: |x: &[f64]| {
            let mut scratch = Scratch::new(spec);
            log_likelihood_unchecked(data, spec, x, &mut scratch)
        },
    };
    tmcmc_sample(&model, &cfg.tmcmc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NsblConfig {
    pub gmm: GmmFitConfig,
    pub hyperprior: HyperpriorConfig,
    pub trust_region: TrustRegionConfig,
    /// Names of the ARD parameters; `None` puts every parameter in the ARD set.
    pub ard: Option<Vec<String>>,
}

impl Default for NsblConfig {
    fn default() -> Self {
        Self {
            gmm: GmmFitConfig::default(),
            hyperprior: HyperpriorConfig::Jeffreys,
            trust_region: TrustRegionConfig::default(),
            ard: None,
        }
    }
}

/// Hyperprior with one `(shape, rate)` shared by every ARD component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum HyperpriorConfig {
    Jeffreys,
    Gamma { shape: f64, rate: f64 },
}

impl HyperpriorConfig {
    pub fn build(&self, n: usize) -> Hyperprior {
        match *self {
            HyperpriorConfig::Jeffreys => Hyperprior::Jeffreys,
            HyperpriorConfig::Gamma { shape, rate } => Hyperprior::gamma_uniform(n, shape, rate),
        }
    }
}

impl NsblConfig {
    /// Settings used for the 1-3-1 boxcar study. BIC keeps asking for more kernels
    /// up to about 30 on 20k samples; a lower cap leaves broad kernels that smear
    /// the evidence over several modes.
    pub fn boxcar_study() -> Self {
        Self {
            gmm: GmmFitConfig {
                k_candidates: (1..=30).collect(),
                n_restarts: 1,
                ..GmmFitConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn prior(&self, spec: &NetworkSpec, flat_box: (f64, f64)) -> Result<PriorSpec> {
        ard_prior(spec, self.ard.as_deref(), flat_box)
    }
}

/// ARD set from parameter names (`None` means every parameter); the remaining
/// parameters keep a flat box prior.
pub fn ard_prior(spec: &NetworkSpec, names: Option<&[String]>, flat_box: (f64, f64)) -> Result<PriorSpec> {
    let n = spec.n_params();
    let Some(names) = names else {
        return Ok(PriorSpec::all_ard(n));
    };
    let mut ard = names.iter().map(|s| spec.index_of(s)).collect::<Result<Vec<_>>>()?;
    ard.sort_unstable();
    ard.dedup();
    if ard.is_empty() {
        return Err(Error::InvalidArgument("ARD set is empty".into()));
    }
    let known = (0..n)
        .filter(|i| !ard.contains(i))
        .map(|index| crate::net::KnownEntry {
            index,
            prior: crate::net::KnownPrior::FlatBox { lo: flat_box.0, hi: flat_box.1 },
        })
        .collect();
    let p = PriorSpec { ard_set: ard, known };
    p.validate(n)?;
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct NsblOutcome {
    pub fit: GmmFit,
    pub prior: PriorSpec,
    pub result: NsblResult,
}

/// Fit the likelihood mixture to posterior samples and optimize the ARD precisions.
pub fn nsbl_from_samples(samples: &DMatrix<f64>, spec: &NetworkSpec, cfg: &NsblConfig) -> Result<NsblOutcome> {
    let fit = fit_gmm(samples, &cfg.gmm)?;
    let prior = cfg.prior(spec, DEFAULT_FLAT_BOX)?;
    let result = nsbl_from_gmm(&fit.gmm, &prior, cfg)?;
    Ok(NsblOutcome { fit, prior, result })
}

pub fn nsbl_from_gmm(g: &Gmm, prior: &PriorSpec, cfg: &NsblConfig) -> Result<NsblResult> {
    let hp = cfg.hyperprior.build(prior.n_ard());
    nsbl(g, &hp, prior, &cfg.trust_region)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaplaceStudyConfig {
    /// Named start point; parameters not listed start at zero.
    pub start: Vec<(String, f64)>,
    pub laplace: LaplaceConfig,
}

impl Default for LaplaceStudyConfig {
    fn default() -> Self {
        Self {
            start: Vec::new(),
            laplace: LaplaceConfig::default(),
        }
    }
}

/// Laplace approximation of the likelihood at the mode reached from `start`.
pub fn laplace_study(data: &Dataset, spec: &NetworkSpec, start: &[f64], cfg: &LaplaceConfig) -> Result<LaplaceFit> {
    data.validate()?;
    spec.validate()?;
    let target = |phi: &[f64]| log_likelihood_grad(data, spec, phi).expect("validated dimensions");
    if start.len() != spec.n_params() {
        return Err(Error::DimensionMismatch {
            what: "laplace start",
            expected: spec.n_params(),
            got: start.len(),
        });
    }
    laplace_fit(target, start, cfg)
}

/// Laplace fit followed by NSBL on its single kernel (sparse Bayesian learning).
pub fn laplace_nsbl(fit: &LaplaceFit, prior: &PriorSpec, cfg: &NsblConfig) -> Result<NsblResult> {
    let g = laplace_kernel(fit)?;
    nsbl_from_gmm(&g, prior, cfg)
}
