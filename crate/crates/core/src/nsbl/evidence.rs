//! Semi-analytic evidence of a Gaussian-mixture likelihood surrogate under an ARD
//! prior, and its first and second derivatives with respect to `log alpha`.
//!
//! For one kernel `N(mu, Sigma)` and ARD set `S`, write `C = Sigma_SS`,
//! `D = diag(sqrt(alpha))`, `M = I + D C D`, `H = M^-1`, `u = D mu_S`, `v = H u`.
//! Then
//!
//! ```text
//! log z = -|S|/2 ln 2pi + 1/2 sum t - 1/2 ln|M| - 1/2 u'v          (t = log alpha)
//! dz/dt_i        = 1/2 (H_ii - v_i^2)                            =: g_i
//! d2z/dt_i dt_j  = -delta_ij g_i + 1/2 H_ij^2 - H_ij v_i v_j
//! ```
//!
//! which is `log N(0 | mu_S, C + A^-1)` rewritten so that `A^-1` is never formed.
//! The posterior covariance follows from Woodbury, `P = Sigma - Sigma_:S D H D Sigma_S:`,
//! and `alpha_i P_ii = 1 - H_ii`, so the relevance indicator is simply `H_ii`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{weighted::WeightedIndex, Distribution, StandardNormal};

use super::types::{AlphaVector, Hyperprior, KernelConditional, RelevanceReport};
use crate::error::{Error, Result};
use crate::gmm::{GaussianKernel, Gmm};
use crate::linalg::{chol_log_det, cholesky, log_sum_exp, symmetrize, LN_2PI};
use crate::net::PriorSpec;
use crate::rng::{self, tag};

struct Core {
    h: DMatrix<f64>,
    v: DVector<f64>,
    d: Vec<f64>,
    log_z: f64,
}

fn core(kernel: &GaussianKernel, ard: &[usize], log_alpha: &[f64]) -> Result<Core> {
    let n = ard.len();
    let d: Vec<f64> = log_alpha.iter().map(|t| (0.5 * t).exp()).collect();
    let m = DMatrix::from_fn(n, n, |a, b| {
        let x = d[a] * kernel.sigma[(ard[a], ard[b])] * d[b];
        if a == b {
            1.0 + x
        } else {
            x
        }
    });
    let chol = cholesky(&m, "ARD evidence matrix I + D C D")?;
    let u = DVector::from_fn(n, |a, _| d[a] * kernel.mu[ard[a]]);
    let v = chol.solve(&u);
    let mut h = chol.inverse();
    symmetrize(&mut h);
    let log_z = -0.5 * n as f64 * LN_2PI + 0.5 * log_alpha.iter().sum::<f64>()
        - 0.5 * chol_log_det(&chol)
        - 0.5 * u.dot(&v);
    Ok(Core { h, v, d, log_z })
}

fn check(g: &Gmm, alpha: &AlphaVector, prior: &PriorSpec) -> Result<()> {
    prior.validate(g.dim())?;
    if alpha.len() != prior.n_ard() {
        return Err(Error::DimensionMismatch {
            what: "alpha vector",
            expected: prior.n_ard(),
            got: alpha.len(),
        });
    }
    if alpha.log_alpha.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("non-finite log alpha".into()));
    }
    Ok(())
}

/// Posterior mean, covariance and evidence contribution of one kernel.
pub fn kernel_conditional(kernel: &GaussianKernel, alpha: &AlphaVector, prior: &PriorSpec) -> Result<KernelConditional> {
    let dim = kernel.mu.len();
    prior.validate(dim)?;
    if alpha.len() != prior.n_ard() {
        return Err(Error::DimensionMismatch {
            what: "alpha vector",
            expected: prior.n_ard(),
            got: alpha.len(),
        });
    }
    let ard = &prior.ard_set;
    let c = core(kernel, ard, &alpha.log_alpha)?;
    // Sigma_{:,S} D
    let sd = DMatrix::from_fn(dim, ard.len(), |r, a| kernel.sigma[(r, ard[a])] * c.d[a]);
    let mut p = &kernel.sigma - &sd * &c.h * sd.transpose();
    symmetrize(&mut p);
    let m = &kernel.mu - &sd * &c.v;
    let gamma = (0..ard.len()).map(|a| c.h[(a, a)]).collect();
    Ok(KernelConditional { m, p, log_z: c.log_z, gamma })
}

/// `log sum_k a_k z_k(alpha)`.
pub fn log_evidence(g: &Gmm, alpha: &AlphaVector, prior: &PriorSpec) -> Result<f64> {
    check(g, alpha, prior)?;
    let terms = g
        .kernels()
        .iter()
        .map(|k| Ok(k.a.ln() + core(k, &prior.ard_set, &alpha.log_alpha)?.log_z))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&terms))
}

/// Objective value together with optional derivatives with respect to `log alpha`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub log_evidence: f64,
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
}

/// Evaluate the objective `log evidence + log hyperprior`, its gradient, and
/// (when `with_hessian`) its Hessian, all with respect to `log alpha`.
pub fn evaluate(g: &Gmm, alpha: &AlphaVector, hp: &Hyperprior, prior: &PriorSpec, with_hessian: bool) -> Result<Evaluation> {
    check(g, alpha, prior)?;
    let n = prior.n_ard();
    hp.validate(n)?;
    let t = &alpha.log_alpha;
    let mut f = Vec::with_capacity(g.n_kernels());
    let mut grads = Vec::with_capacity(g.n_kernels());
    let mut hesss = Vec::new();
    for k in g.kernels() {
        let c = core(k, &prior.ard_set, t)?;
        let gk = DVector::from_fn(n, |i, _| 0.5 * (c.h[(i, i)] - c.v[i] * c.v[i]));
        if with_hessian {
            let hk = DMatrix::from_fn(n, n, |i, j| {
                let hij = c.h[(i, j)];
                let diag = if i == j { -gk[i] } else { 0.0 };
                diag + 0.5 * hij * hij - hij * c.v[i] * c.v[j]
            });
            hesss.push(hk);
        }
        f.push(k.a.ln() + c.log_z);
        grads.push(gk);
    }
    let lse = log_sum_exp(&f);
    let rho: Vec<f64> = f.iter().map(|fk| (fk - lse).exp()).collect();
    let mut grad = DVector::zeros(n);
    for (r, gk) in rho.iter().zip(&grads) {
        grad.axpy(*r, gk, 1.0);
    }
    let hess = with_hessian.then(|| {
        let mut h = DMatrix::zeros(n, n);
        for ((r, gk), hk) in rho.iter().zip(&grads).zip(&hesss) {
            h += (hk + gk * gk.transpose()) * *r;
        }
        h -= &grad * grad.transpose();
        for i in 0..n {
            let (_, rate) = hp.params(i);
            h[(i, i)] -= rate * t[i].exp();
        }
        symmetrize(&mut h);
        h
    });
    for i in 0..n {
        let (shape, rate) = hp.params(i);
        grad[i] += shape - rate * t[i].exp();
    }
    Ok(Evaluation {
        objective: lse + hp.log_density(t),
        log_evidence: lse,
        grad,
        hess,
    })
}

pub fn objective(g: &Gmm, alpha: &AlphaVector, hp: &Hyperprior, prior: &PriorSpec) -> Result<f64> {
    hp.validate(prior.n_ard())?;
    Ok(log_evidence(g, alpha, prior)? + hp.log_density(&alpha.log_alpha))
}

pub fn objective_grad(g: &Gmm, alpha: &AlphaVector, hp: &Hyperprior, prior: &PriorSpec) -> Result<DVector<f64>> {
    Ok(evaluate(g, alpha, hp, prior, false)?.grad)
}

pub fn objective_hess(g: &Gmm, alpha: &AlphaVector, hp: &Hyperprior, prior: &PriorSpec) -> Result<DMatrix<f64>> {
    Ok(evaluate(g, alpha, hp, prior, true)?.hess.expect("requested"))
}

/// Per-kernel indicators `1 - alpha_i P_ii^(k)` clamped to [0, 1], and their RMS
/// over kernels.
pub fn relevance_indicators(g: &Gmm, alpha: &AlphaVector, prior: &PriorSpec) -> Result<RelevanceReport> {
    check(g, alpha, prior)?;
    let per_kernel = g
        .kernels()
        .iter()
        .map(|k| {
            let c = core(k, &prior.ard_set, &alpha.log_alpha)?;
            Ok((0..prior.n_ard()).map(|i| c.h[(i, i)].clamp(0.0, 1.0)).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let kk = per_kernel.len() as f64;
    let gamma_rms = (0..prior.n_ard())
        .map(|i| (per_kernel.iter().map(|g| g[i] * g[i]).sum::<f64>() / kk).sqrt())
        .collect();
    Ok(RelevanceReport { gamma_rms, per_kernel })
}

/// The parameter posterior: kernels `N(m_k, P_k)` reweighted by `a_k z_k`.
pub fn posterior_gmm(g: &Gmm, alpha: &AlphaVector, prior: &PriorSpec) -> Result<Gmm> {
    check(g, alpha, prior)?;
    let conds = g
        .kernels()
        .iter()
        .map(|k| kernel_conditional(k, alpha, prior))
        .collect::<Result<Vec<_>>>()?;
    let logw: Vec<f64> = g.kernels().iter().zip(&conds).map(|(k, c)| k.a.ln() + c.log_z).collect();
    let lse = log_sum_exp(&logw);
    let kernels = conds
        .into_iter()
        .zip(&logw)
        .map(|(c, lw)| GaussianKernel {
            a: (lw - lse).exp(),
            mu: c.m,
            sigma: c.p,
        })
        .collect();
    Gmm::new(kernels)
}

/// Ancestral sampling: kernel index by weight, then a Gaussian draw.
pub fn sample_posterior(post: &Gmm, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let weights: Vec<f64> = post.kernels().iter().map(|k| k.a).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let lowers = post
        .kernels()
        .iter()
        .map(|k| Ok(cholesky(&k.sigma, "posterior kernel")?.l()))
        .collect::<Result<Vec<_>>>()?;
    let d = post.dim();
    let mut rng = rng::stream(seed, &[tag::POSTERIOR]);
    let mut out = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(d);
    for r in 0..n {
        let k = pick.sample(&mut rng);
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let x = &post.kernels()[k].mu + &lowers[k] * &z;
        out.set_row(r, &x.transpose());
    }
    Ok(out)
}
