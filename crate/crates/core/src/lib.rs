//! Sparse Bayesian neural networks.
//!
//! Shallow networks with ARD priors whose precisions are chosen by maximizing a
//! semi-analytic evidence built from a Gaussian-mixture fit to TMCMC samples of the
//! likelihood. Standard, hierarchical and Laplace baselines share the same
//! network, likelihood and sampler.

pub mod boxcar;
pub mod error;
pub mod gmm;
pub mod hier;
pub mod laplace;
pub mod linalg;
pub mod net;
pub mod nsbl;
pub mod pipeline;
pub mod predict;
pub mod rng;
pub mod tmcmc;

pub use error::{Error, Result};
pub use gmm::{fit_gmm, gmm_logpdf, GaussianKernel, Gmm, GmmFitConfig};
pub use net::{Activation, Dataset, NetworkSpec, ParamVector, PriorSpec};
pub use nsbl::{AlphaVector, Hyperprior, NsblResult};
pub use tmcmc::{tmcmc_sample, TmcmcConfig, TmcmcResult};
