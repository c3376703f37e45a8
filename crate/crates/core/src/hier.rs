//! Hierarchical Bayes: joint TMCMC over parameters and ARD log-precisions with
//! independent Gamma hyperpriors.
//!
//! Sampling coordinates are `(phi, t)` with `t = log alpha`. The stage-0 prior is
//! `t ~ Uniform(box)`, `phi_S | t ~ N(0, e^{-t})`, known parameters from their
//! prescribed priors; the Gamma hyperprior (in `t` coordinates, Jacobian included)
//! is tempered together with the likelihood. The target at `beta = 1` is the joint
//! posterior restricted to the box.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{log_ard, log_likelihood, log_likelihood_unchecked, Dataset, NetworkSpec, PriorSpec, Scratch};
use crate::nsbl::AlphaVector;
use crate::rng::StreamRng;
use crate::tmcmc::{tmcmc_sample, TemperedModel, TmcmcConfig, TmcmcResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierConfig {
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub log_alpha_box: (f64, f64),
    pub tmcmc: TmcmcConfig,
}

impl Default for HierConfig {
    fn default() -> Self {
        let eps = (-10f64).exp();
        Self {
            gamma_shape: eps,
            gamma_rate: 1.0 + eps,
            log_alpha_box: (-10.0, 10.0),
            tmcmc: TmcmcConfig {
                n_samples: 50_000,
                ..TmcmcConfig::default()
            },
        }
    }
}

impl HierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_shape > 0.0 && self.gamma_rate > 0.0) {
            return Err(Error::InvalidArgument("gamma shape and rate must be positive".into()));
        }
        let (lo, hi) = self.log_alpha_box;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid log-alpha box [{lo}, {hi}]")));
        }
        self.tmcmc.validate()
    }

    /// A box with `lo == hi` pins every log alpha (delta hyperprior).
    pub fn pinned(&self) -> bool {
        self.log_alpha_box.0 == self.log_alpha_box.1
    }

    /// Normalized Gamma hyperprior density of one component in `t = log alpha`
    /// coordinates: `s t - r e^t + s ln r - lnGamma(s)`.
    pub fn log_hyperprior(&self, t: f64) -> f64 {
        let (s, r) = (self.gamma_shape, self.gamma_rate);
        s * t - r * t.exp() + s * r.ln() - libm::lgamma(s)
    }
}

/// `log p(D | phi) + log N(phi_S | 0, A^-1) + log p(phi_known) + sum_i log p(t_i)`.
pub fn joint_log_posterior(
    phi: &[f64],
    log_alpha: &AlphaVector,
    data: &Dataset,
    spec: &NetworkSpec,
    prior: &PriorSpec,
    hcfg: &HierConfig,
) -> Result<f64> {
    let lp = crate::net::log_prior(phi, prior, log_alpha)?;
    let ll = log_likelihood(data, spec, phi)?;
    let hp: f64 = log_alpha.log_alpha.iter().map(|&t| hcfg.log_hyperprior(t)).sum();
    Ok(ll + lp + hp)
}

/// The joint `(phi, log alpha)` target for an arbitrary log-likelihood in `phi`.
pub struct HierModel<L> {
    pub n_phi: usize,
    pub prior: PriorSpec,
    pub hcfg: HierConfig,
    pub log_likelihood: L,
}

impl<L: Fn(&[f64]) -> f64 + Sync> HierModel<L> {
    pub fn new(n_phi: usize, prior: PriorSpec, hcfg: HierConfig, log_likelihood: L) -> Result<Self> {
        prior.validate(n_phi)?;
        hcfg.validate()?;
        Ok(Self { n_phi, prior, hcfg, log_likelihood })
    }

    fn n_t(&self) -> usize {
        if self.hcfg.pinned() {
            0
        } else {
            self.prior.n_ard()
        }
    }

    fn log_alpha_of<'a>(&self, x: &'a [f64], pinned: &'a [f64]) -> &'a [f64] {
        if self.hcfg.pinned() {
            pinned
        } else {
            &x[self.n_phi..]
        }
    }

    pub fn run(&self) -> Result<HierResult> {
        let res = tmcmc_sample(self, &self.hcfg.tmcmc)?;
        Ok(HierResult { n_phi: self.n_phi, tmcmc: res })
    }
}

impl<L: Fn(&[f64]) -> f64 + Sync> TemperedModel for HierModel<L> {
    fn dim(&self) -> usize {
        self.n_phi + self.n_t()
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> Vec<f64> {
        let (lo, hi) = self.hcfg.log_alpha_box;
        let n_ard = self.prior.n_ard();
        let t: Vec<f64> = if self.hcfg.pinned() {
            vec![lo; n_ard]
        } else {
            (0..n_ard).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
        };
        let mut x = vec![0.0; self.dim()];
        for (a, &i) in self.prior.ard_set.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            x[i] = z * (-0.5 * t[a]).exp();
        }
        for k in &self.prior.known {
            x[k.index] = k.prior.sample(rng);
        }
        if !self.hcfg.pinned() {
            x[self.n_phi..].copy_from_slice(&t);
        }
        x
    }

    fn log_prior(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.hcfg.log_alpha_box;
        let pinned = vec![lo; self.prior.n_ard()];
        let t = self.log_alpha_of(x, &pinned);
        let mut lp = 0.0;
        if !self.hcfg.pinned() {
            if t.iter().any(|v| *v < lo || *v > hi) {
                return f64::NEG_INFINITY;
            }
            lp -= t.len() as f64 * (hi - lo).ln();
        }
        lp + log_ard(&x[..self.n_phi], &self.prior.ard_set, t) + self.prior.log_known(&x[..self.n_phi])
    }

    fn log_likelihood(&self, x: &[f64]) -> f64 {
        let ll = (self.log_likelihood)(&x[..self.n_phi]);
        if self.hcfg.pinned() {
            ll
        } else {
            ll + x[self.n_phi..].iter().map(|&t| self.hcfg.log_hyperprior(t)).sum::<f64>()
        }
    }
}

/// Joint samples; columns are the parameters followed by the log alphas.
#[derive(Debug, Clone)]
pub struct HierResult {
    pub n_phi: usize,
    pub tmcmc: TmcmcResult,
}

impl HierResult {
    pub fn phi_samples(&self) -> DMatrix<f64> {
        self.tmcmc.samples.columns(0, self.n_phi).into_owned()
    }

    pub fn log_alpha_samples(&self) -> DMatrix<f64> {
        let s = &self.tmcmc.samples;
        s.columns(self.n_phi, s.ncols() - self.n_phi).into_owned()
    }
}

/// Hierarchical run of the network model with ARD priors on `prior.ard_set`.
pub fn run_hierarchical(data: &Dataset, spec: &NetworkSpec, prior: &PriorSpec, hcfg: &HierConfig) -> Result<HierResult> {
    data.validate()?;
    spec.validate()?;
    let loglike = |phi: &[f64]| {
        let mut scratch = Scratch::new(spec);
        log_likelihood_unchecked(data, spec, phi, &mut scratch)
    };
    HierModel::new(spec.n_params(), prior.clone(), hcfg.clone(), loglike)?.run()
}

/// Column names for the joint sample matrix.
pub fn joint_names(spec: &NetworkSpec, prior: &PriorSpec, pinned: bool) -> Vec<String> {
    let names = spec.param_names();
    let mut out = names.clone();
    if !pinned {
        out.extend(prior.ard_set.iter().map(|&i| format!("log_alpha[{}]", names[i])));
    }
    out
}
