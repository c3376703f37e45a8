use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::Gmm;

pub const DEFAULT_LOG_ALPHA_BOUNDS: (f64, f64) = (-12.0, 12.0);

/// Log-precisions of the ARD prior, aligned with `PriorSpec::ard_set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub log_alpha: Vec<f64>,
    pub bounds: (f64, f64),
}

impl AlphaVector {
    /// Uses the default bounds; entries are not clamped.
    pub fn new(log_alpha: Vec<f64>) -> Self {
        Self {
            log_alpha,
            bounds: DEFAULT_LOG_ALPHA_BOUNDS,
        }
    }

    pub fn with_bounds(log_alpha: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        let a = Self {
            log_alpha,
            bounds: (lo, hi),
        };
        a.validate()?;
        Ok(a)
    }

    pub fn len(&self) -> usize {
        self.log_alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_alpha.is_empty()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.log_alpha.iter().map(|t| t.exp()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid log-alpha bounds [{lo}, {hi}]")));
        }
        if let Some(t) = self.log_alpha.iter().find(|t| !t.is_finite() || **t < lo || **t > hi) {
            return Err(Error::InvalidArgument(format!("log alpha {t} outside [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn clamped(&self) -> Self {
        let (lo, hi) = self.bounds;
        Self {
            log_alpha: self.log_alpha.iter().map(|t| t.clamp(lo, hi)).collect(),
            bounds: self.bounds,
        }
    }
}

/// Independent Gamma(alpha | shape, rate) hyperpriors, or the flat-in-log-alpha
/// Jeffreys limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Hyperprior {
    Jeffreys,
    Gamma { shape: Vec<f64>, rate: Vec<f64> },
}

impl Hyperprior {
    /// The same Gamma(s, r) on each of `n` components.
    pub fn gamma_uniform(n: usize, shape: f64, rate: f64) -> Self {
        Hyperprior::Gamma {
            shape: vec![shape; n],
            rate: vec![rate; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Hyperprior::Gamma { shape, rate } = self {
            if shape.len() != n || rate.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "hyperprior",
                    expected: n,
                    got: shape.len().min(rate.len()),
                });
            }
            if shape.iter().chain(rate).any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument("gamma shape and rate must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// `(s_i, r_i)` for component `i`; Jeffreys is `(0, 0)`.
    pub fn params(&self, i: usize) -> (f64, f64) {
        match self {
            Hyperprior::Jeffreys => (0.0, 0.0),
            Hyperprior::Gamma { shape, rate } => (shape[i], rate[i]),
        }
    }

    /// `sum_i s_i t_i - r_i e^{t_i}` with constants dropped.
    pub fn log_density(&self, log_alpha: &[f64]) -> f64 {
        match self {
            Hyperprior::Jeffreys => 0.0,
            Hyperprior::Gamma { shape, rate } => log_alpha
                .iter()
                .zip(shape.iter().zip(rate))
                .map(|(t, (s, r))| s * t - r * t.exp())
                .sum(),
        }
    }

    /// Same as [`Self::log_density`] but with the normalizing constant
    /// `s ln r - lnGamma(s)` per component; requires `s, r > 0`.
    pub fn log_density_normalized(&self, log_alpha: &[f64]) -> f64 {
        match self {
            Hyperprior::Jeffreys => 0.0,
            Hyperprior::Gamma { shape, rate } => {
                self.log_density(log_alpha)
                    + shape
                        .iter()
                        .zip(rate)
                        .map(|(s, r)| s * r.ln() - libm::lgamma(*s))
                        .sum::<f64>()
            }
        }
    }
}

/// Posterior of a single mixture kernel under the ARD prior.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConditional {
    pub m: nalgebra::DVector<f64>,
    pub p: nalgebra::DMatrix<f64>,
    pub log_z: f64,
    /// Per-ARD-parameter relevance `1 - alpha_i P_ii` (unclamped).
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relevance {
    Relevant,
    Irrelevant,
    Inconclusive,
}

pub const IRRELEVANT_BELOW: f64 = 0.1;
pub const RELEVANT_ABOVE: f64 = 0.9;

impl Relevance {
    pub fn classify(gamma_rms: f64) -> Self {
        if gamma_rms < IRRELEVANT_BELOW {
            Relevance::Irrelevant
        } else if gamma_rms > RELEVANT_ABOVE {
            Relevance::Relevant
        } else {
            Relevance::Inconclusive
        }
    }
}

/// Relevance indicators for the ARD set: `per_kernel[k][i]` and their RMS over kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub gamma_rms: Vec<f64>,
    pub per_kernel: Vec<Vec<f64>>,
}

/// Outcome of one trust-region run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRun {
    pub start: Vec<f64>,
    pub log_alpha: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    /// Iterate after each accepted step, aligned with `trace`.
    pub path: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct NsblResult {
    pub log_alpha_map: AlphaVector,
    pub objective: f64,
    pub log_evidence: f64,
    pub relevance: RelevanceReport,
    pub classification: Vec<Relevance>,
    pub posterior: Gmm,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Every run, best first.
    pub runs: Vec<OptimizerRun>,
    /// Indices into `runs` of the distinct optima (objective gap > 1e-3).
    pub distinct_optima: Vec<usize>,
}
