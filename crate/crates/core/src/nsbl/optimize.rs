//! Bound-constrained trust-region Newton (dogleg) ascent over `log alpha`, with
//! multiple starts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evidence::{evaluate, posterior_gmm, relevance_indicators, Evaluation};
use super::types::{AlphaVector, Hyperprior, NsblResult, OptimizerRun, Relevance, DEFAULT_LOG_ALPHA_BOUNDS};
use crate::error::{Error, Result};
use crate::gmm::Gmm;
use crate::net::PriorSpec;
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustRegionConfig {
    pub n_starts: usize,
    /// Starts are drawn uniformly from `[start_lo, start_hi]` per component.
    pub start_lo: f64,
    pub start_hi: f64,
    pub bounds: (f64, f64),
    pub max_iter: usize,
    pub grad_tol: f64,
    pub min_radius: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Optima whose objectives differ by more than this are reported as distinct.
    pub optima_gap: f64,
    pub seed: u64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            n_starts: 16,
            start_lo: -6.0,
            start_hi: 6.0,
            bounds: DEFAULT_LOG_ALPHA_BOUNDS,
            max_iter: 100,
            grad_tol: 1e-6,
            min_radius: 1e-10,
            initial_radius: 1.0,
            max_radius: 10.0,
            optima_gap: 1e-3,
            seed: 0,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        let ok = lo < hi
            && self.start_lo <= self.start_hi
            && self.n_starts >= 1
            && self.max_iter >= 1
            && self.grad_tol > 0.0
            && self.initial_radius > 0.0
            && self.max_radius >= self.initial_radius;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("invalid trust-region configuration".into()))
        }
    }
}

/// Dogleg step for the model `g's + s'Bs/2` (minimization) within radius `delta`.
fn dogleg(g: &DVector<f64>, b: &DMatrix<f64>, delta: f64) -> DVector<f64> {
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return DVector::zeros(g.len());
    }
    let gbg = g.dot(&(b * g));
    let cauchy = || {
        let tau = if gbg <= 0.0 { 1.0 } else { (gnorm.powi(3) / (delta * gbg)).min(1.0) };
        g * (-tau * delta / gnorm)
    };
    let Some(chol) = b.clone().cholesky() else {
        return cauchy();
    };
    let pn = -chol.solve(g);
    if pn.norm() <= delta {
        return pn;
    }
    let pu = g * (-(gnorm * gnorm) / gbg);
    let pu_norm = pu.norm();
    if pu_norm >= delta {
        return pu * (delta / pu_norm);
    }
    // ||pu + tau (pn - pu)|| = delta
    let dir = &pn - &pu;
    let a = dir.dot(&dir);
    let bq = 2.0 * pu.dot(&dir);
    let c = pu_norm * pu_norm - delta * delta;
    let tau = (-bq + (bq * bq - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    pu + dir * tau
}

/// Maximize `eval` over the box `bounds^n` from `start`. `eval` returns the
/// objective with gradient and Hessian; failed evaluations count as rejected steps.
pub fn trust_region_maximize<F>(eval: F, start: &[f64], cfg: &TrustRegionConfig) -> Result<OptimizerRun>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    let (lo, hi) = cfg.bounds;
    let n = start.len();
    let mut t: Vec<f64> = start.iter().map(|x| x.clamp(lo, hi)).collect();
    let mut cur = eval(&t)?;
    let mut radius = cfg.initial_radius;
    let mut trace = vec![cur.objective];
    let mut path = vec![t.clone()];
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        // minimization form: G = -grad, B = -hess
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let gi = -cur.grad[i];
                !((t[i] <= lo && gi > 0.0) || (t[i] >= hi && gi < 0.0))
            })
            .collect();
        grad_norm = free.iter().map(|&i| cur.grad[i].abs()).fold(0.0, f64::max);
        if grad_norm < cfg.grad_tol {
            converged = true;
            break;
        }
        if radius < cfg.min_radius {
            break;
        }
        iterations += 1;
        let hess = cur.hess.as_ref().expect("trust region needs the Hessian");
        let gf = DVector::from_fn(free.len(), |a, _| -cur.grad[free[a]]);
        let bf = DMatrix::from_fn(free.len(), free.len(), |a, b| -hess[(free[a], free[b])]);
        let p = dogleg(&gf, &bf, radius);

        let mut trial = t.clone();
        for (a, &i) in free.iter().enumerate() {
            trial[i] = (t[i] + p[a]).clamp(lo, hi);
        }
        let s = DVector::from_fn(free.len(), |a, _| trial[free[a]] - t[free[a]]);
        let predicted = -(gf.dot(&s) + 0.5 * s.dot(&(&bf * &s)));
        if !(predicted > 0.0) || s.amax() == 0.0 {
            radius *= 0.25;
            continue;
        }
        let next = match eval(&trial) {
            Ok(e) if e.objective.is_finite() => e,
            _ => {
                radius *= 0.25;
                continue;
            }
        };
        let ratio = (next.objective - cur.objective) / predicted;
        if ratio < 0.25 {
            radius *= 0.25;
        } else if ratio > 0.75 {
            radius = (2.0 * radius).min(cfg.max_radius);
        }
        if ratio > 1e-4 && next.objective >= cur.objective {
            t = trial;
            cur = next;
            trace.push(cur.objective);
            path.push(t.clone());
        }
    }
    if !converged {
        let free_norm = (0..n)
            .filter(|&i| {
                let gi = -cur.grad[i];
                !((t[i] <= lo && gi > 0.0) || (t[i] >= hi && gi < 0.0))
            })
            .map(|i| cur.grad[i].abs())
            .fold(0.0, f64::max);
        grad_norm = free_norm;
        converged = grad_norm < cfg.grad_tol;
    }
    Ok(OptimizerRun {
        start: start.to_vec(),
        log_alpha: t,
        objective: cur.objective,
        iterations,
        converged,
        grad_norm,
        trace,
        path,
    })
}

/// `cfg.n_starts` points drawn uniformly from `[start_lo, start_hi]^n`.
pub fn default_starts(n: usize, cfg: &TrustRegionConfig) -> Vec<AlphaVector> {
    (0..cfg.n_starts)
        .map(|s| {
            let mut r = rng::stream(cfg.seed, &[tag::NSBL, s as u64]);
            let t = (0..n).map(|_| r.random_range(cfg.start_lo..=cfg.start_hi)).collect();
            AlphaVector { log_alpha: t, bounds: cfg.bounds }
        })
        .collect()
}

/// Multi-start evidence optimization followed by the posterior and relevance
/// summary at the best optimum.
pub fn optimize_alpha(
    g: &Gmm,
    hp: &Hyperprior,
    prior: &PriorSpec,
    starts: &[AlphaVector],
    cfg: &TrustRegionConfig,
) -> Result<NsblResult> {
    cfg.validate()?;
    prior.validate(g.dim())?;
    hp.validate(prior.n_ard())?;
    if starts.is_empty() {
        return Err(Error::InvalidArgument("optimize_alpha needs at least one start".into()));
    }
    let eval = |t: &[f64]| evaluate(g, &AlphaVector { log_alpha: t.to_vec(), bounds: cfg.bounds }, hp, prior, true);
    let mut runs = starts
        .par_iter()
        .map(|s| {
            if s.len() != prior.n_ard() {
                return Err(Error::DimensionMismatch {
                    what: "start point",
                    expected: prior.n_ard(),
                    got: s.len(),
                });
            }
            trust_region_maximize(eval, &s.log_alpha, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| b.objective.total_cmp(&a.objective));

    let mut distinct: Vec<usize> = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        if distinct.iter().all(|&j| (runs[j].objective - r.objective).abs() > cfg.optima_gap) {
            distinct.push(i);
        }
    }
    let best = &runs[0];
    if !runs.iter().any(|r| r.converged) {
        log::warn!(
            "no trust-region start converged; best iterate has gradient norm {:e}",
            best.grad_norm
        );
    }
    let map = AlphaVector {
        log_alpha: best.log_alpha.clone(),
        bounds: cfg.bounds,
    };
    let at_map = evaluate(g, &map, hp, prior, false)?;
    let relevance = relevance_indicators(g, &map, prior)?;
    let classification = relevance.gamma_rms.iter().map(|&x| Relevance::classify(x)).collect();
    let posterior = posterior_gmm(g, &map, prior)?;
    Ok(NsblResult {
        objective: at_map.objective,
        log_evidence: at_map.log_evidence,
        log_alpha_map: map,
        relevance,
        classification,
        posterior,
        objective_trace: best.trace.clone(),
        converged: best.converged,
        distinct_optima: distinct,
        runs,
    })
}

/// [`optimize_alpha`] from the configured random starts.
pub fn nsbl(g: &Gmm, hp: &Hyperprior, prior: &PriorSpec, cfg: &TrustRegionConfig) -> Result<NsblResult> {
    let starts = default_starts(prior.n_ard(), cfg);
    optimize_alpha(g, hp, prior, &starts, cfg)
}
