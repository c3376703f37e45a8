//! Nonlinear sparse Bayesian learning: ARD hyperparameter optimization against a
//! Gaussian-mixture surrogate of likelihood times known prior.

mod evidence;
mod optimize;
mod report;
mod types;

pub use evidence::{
    evaluate, kernel_conditional, log_evidence, objective, objective_grad, objective_hess, posterior_gmm,
    relevance_indicators, sample_posterior, Evaluation,
};
pub use optimize::{default_starts, nsbl, optimize_alpha, trust_region_maximize, TrustRegionConfig};
pub use report::{NsblReport, ParameterRow};
pub use types::{
    AlphaVector, Hyperprior, KernelConditional, NsblResult, OptimizerRun, Relevance, RelevanceReport,
    DEFAULT_LOG_ALPHA_BOUNDS, IRRELEVANT_BELOW, RELEVANT_ABOVE,
};
