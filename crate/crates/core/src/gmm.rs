//! Gaussian mixtures: density evaluation and EM fitting with BIC model selection.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{clamp_eigenvalues, cholesky, log_sum_exp, symmetrize, GaussianDensity};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub a: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

/// A finite Gaussian mixture. Weights sum to one and every covariance admits a
/// Cholesky factorization; both are checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    kernels: Vec<GaussianKernel>,
    dim: usize,
}

impl Gmm {
    /// Validates the kernels and renormalizes the weights to sum to one
    /// (input weights must already sum to one within 1e-9). Weights already
    /// normalized up to rounding are kept bit-for-bit, so serialization round-trips.
    pub fn new(mut kernels: Vec<GaussianKernel>) -> Result<Self> {
        let dim = kernels
            .first()
            .map(|k| k.mu.len())
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one kernel".into()))?;
        for k in &kernels {
            if k.mu.len() != dim || k.sigma.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch {
                    what: "mixture kernel",
                    expected: dim,
                    got: k.mu.len(),
                });
            }
            if !(k.a >= 0.0) || !k.a.is_finite() {
                return Err(Error::InvalidArgument(format!("invalid mixture weight {}", k.a)));
            }
            let asym = (&k.sigma - k.sigma.transpose()).amax();
            if asym > 1e-10 * k.sigma.amax().max(1e-300) {
                return Err(Error::InvalidArgument("kernel covariance is not symmetric".into()));
            }
            cholesky(&k.sigma, "mixture kernel covariance")?;
        }
        let total: f64 = kernels.iter().map(|k| k.a).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        let renormalize = (total - 1.0).abs() > kernels.len() as f64 * f64::EPSILON;
        for k in kernels.iter_mut() {
            if renormalize {
                k.a /= total;
            }
            symmetrize(&mut k.sigma);
        }
        Ok(Self { kernels, dim })
    }

    pub fn single(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![GaussianKernel { a: 1.0, mu, sigma }])
    }

    pub fn kernels(&self) -> &[GaussianKernel] {
        &self.kernels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_kernels(&self) -> usize {
        self.kernels.len()
    }

    /// Precomputed per-kernel densities for repeated evaluation.
    pub fn densities(&self) -> Vec<(f64, GaussianDensity)> {
        self.kernels
            .iter()
            .map(|k| {
                let g = GaussianDensity::new(k.mu.clone(), &k.sigma).expect("validated on construction");
                (k.a.ln(), g)
            })
            .collect()
    }

    /// `log sum_k a_k N(phi | mu_k, Sigma_k)`.
    pub fn logpdf(&self, phi: &[f64]) -> Result<f64> {
        if phi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "mixture argument",
                expected: self.dim,
                got: phi.len(),
            });
        }
        let terms: Vec<f64> = self
            .densities()
            .iter()
            .map(|(la, g)| la + g.log_pdf(phi))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// Mixture mean and covariance.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mut mean = DVector::zeros(self.dim);
        for k in &self.kernels {
            mean += &k.mu * k.a;
        }
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for k in &self.kernels {
            let d = &k.mu - &mean;
            cov += (&k.sigma + &d * d.transpose()) * k.a;
        }
        (mean, cov)
    }
}

/// Free function form of [`Gmm::logpdf`].
pub fn gmm_logpdf(g: &Gmm, phi: &[f64]) -> Result<f64> {
    g.logpdf(phi)
}

/// On-disk form: `{dim, kernels: [{a, mu, sigma}]}` with `sigma` flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFile {
    pub dim: usize,
    pub kernels: Vec<KernelFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    pub a: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl From<&Gmm> for GmmFile {
    fn from(g: &Gmm) -> Self {
        GmmFile {
            dim: g.dim,
            kernels: g
                .kernels
                .iter()
                .map(|k| KernelFile {
                    a: k.a,
                    mu: k.mu.iter().copied().collect(),
                    sigma: k.sigma.transpose().iter().copied().collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<GmmFile> for Gmm {
    type Error = Error;

    fn try_from(f: GmmFile) -> Result<Gmm> {
        let d = f.dim;
        let kernels = f
            .kernels
            .into_iter()
            .map(|k| {
                if k.mu.len() != d || k.sigma.len() != d * d {
                    return Err(Error::DimensionMismatch {
                        what: "serialized kernel",
                        expected: d,
                        got: k.mu.len(),
                    });
                }
                Ok(GaussianKernel {
                    a: k.a,
                    mu: DVector::from_vec(k.mu),
                    sigma: DMatrix::from_row_slice(d, d, &k.sigma),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Gmm::new(kernels)
    }
}

impl Serialize for Gmm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GmmFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Gmm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = GmmFile::deserialize(d)?;
        Gmm::try_from(f).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmFitConfig {
    pub k_candidates: Vec<usize>,
    pub n_restarts: usize,
    pub max_iter: usize,
    /// Relative change in log-likelihood below which EM stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        Self {
            k_candidates: (1..=12).collect(),
            n_restarts: 2,
            max_iter: 500,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// BIC bookkeeping for one candidate kernel count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub k: usize,
    /// `None` when every restart for this K degenerated.
    pub log_likelihood: Option<f64>,
    pub bic: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub gmm: Gmm,
    pub k: usize,
    pub bic: f64,
    pub log_likelihood: f64,
    pub candidates: Vec<CandidateReport>,
}

/// Number of free parameters of a full-covariance mixture.
pub fn n_free_params(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

/// Fit a mixture by EM for each candidate K (k-means++ seeding, several restarts)
/// and keep the K with the smallest BIC.
pub fn fit_gmm(samples: &DMatrix<f64>, cfg: &GmmFitConfig) -> Result<GmmFit> {
    let (n, d) = samples.shape();
    if cfg.k_candidates.is_empty() {
        return Err(Error::InvalidArgument("k_candidates is empty".into()));
    }
    if n < 10 * d || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "gmm fit needs at least 10 * dim = {} samples, got {n}",
            10 * d
        )));
    }
    if cfg.k_candidates.iter().any(|&k| k == 0 || k > n) {
        return Err(Error::InvalidArgument("kernel counts must lie in 1..=n".into()));
    }
    let rows: Vec<f64> = samples.transpose().iter().copied().collect();
    let data = Data { rows: &rows, n, d };

    let jobs: Vec<(usize, usize)> = cfg
        .k_candidates
        .iter()
        .flat_map(|&k| (0..cfg.n_restarts.max(1)).map(move |r| (k, r)))
        .collect();
    let runs: Vec<(usize, Option<EmRun>)> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let mut rng = rng::stream(cfg.seed, &[tag::GMM, k as u64, r as u64]);
            (k, run_em(&data, k, cfg, &mut rng))
        })
        .collect();

    let mut candidates = Vec::new();
    let mut best: Option<(f64, EmRun)> = None;
    for &k in &cfg.k_candidates {
        let best_k = runs
            .iter()
            .filter(|(kk, r)| *kk == k && r.is_some())
            .map(|(_, r)| r.as_ref().unwrap())
            .fold(None::<&EmRun>, |acc, r| match acc {
                Some(a) if a.log_likelihood >= r.log_likelihood => Some(a),
                _ => Some(r),
            });
        match best_k {
            Some(run) => {
                let bic = -2.0 * run.log_likelihood + n_free_params(k, d) as f64 * (n as f64).ln();
                candidates.push(CandidateReport {
                    k,
                    log_likelihood: Some(run.log_likelihood),
                    bic: Some(bic),
                    iterations: Some(run.iterations),
                });
                if best.as_ref().is_none_or(|(b, _)| bic < *b) {
                    best = Some((bic, run.clone()));
                }
            }
            None => candidates.push(CandidateReport {
                k,
                log_likelihood: None,
                bic: None,
                iterations: None,
            }),
        }
    }
    let (bic, run) = best.ok_or(Error::AllCandidatesDiscarded)?;
    log::debug!("gmm: selected K = {} (bic {bic:.3})", run.gmm.n_kernels());
    Ok(GmmFit {
        k: run.gmm.n_kernels(),
        gmm: run.gmm,
        bic,
        log_likelihood: run.log_likelihood,
        candidates,
    })
}

struct Data<'a> {
    rows: &'a [f64],
    n: usize,
    d: usize,
}

impl Data<'_> {
    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }
}

#[derive(Clone)]
struct EmRun {
    gmm: Gmm,
    log_likelihood: f64,
    iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by a few Lloyd iterations; returns hard labels.
fn kmeans_labels<R: Rng>(data: &Data, k: usize, rng: &mut R) -> Vec<usize> {
    let (n, d) = (data.n, data.d);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
    centers.push(data.row(first).to_vec());
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if acc >= target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            ((rng.random::<f64>() * n as f64) as usize).min(n - 1)
        };
        centers.push(data.row(next).to_vec());
        let c = centers.last().unwrap();
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(data.row(i), c));
        }
    }
    let mut labels = vec![0usize; n];
    for _ in 0..10 {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let x = data.row(i);
            let best = (0..k)
                .map(|c| (c, sq_dist(x, &centers[c])))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                .0;
            if best != *label {
                *label = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// M-step from responsibilities (`resp[i * k + c]`). Returns `None` when a kernel
/// has no mass or a singular covariance even after the eigenvalue floor.
fn m_step(data: &Data, resp: &[f64], k: usize) -> Option<Vec<GaussianKernel>> {
    let (n, d) = (data.n, data.d);
    let mut kernels = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
        if !(nk > 1e-10 * n as f64) {
            return None;
        }
        let mut mu = vec![0.0; d];
        for i in 0..n {
            let r = resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            for (m, x) in mu.iter_mut().zip(data.row(i)) {
                *m += r * x;
            }
        }
        for m in mu.iter_mut() {
            *m /= nk;
        }
        let mut cov = vec![0.0; d * d];
        let mut diff = vec![0.0; d];
        for i in 0..n {
            let r = resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            for ((df, x), m) in diff.iter_mut().zip(data.row(i)).zip(&mu) {
                *df = x - m;
            }
            for a in 0..d {
                let ra = r * diff[a];
                let row = &mut cov[a * d..a * d + a + 1];
                for (b, slot) in row.iter_mut().enumerate() {
                    *slot += ra * diff[b];
                }
            }
        }
        let mut sigma = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..=a {
                let v = cov[a * d + b] / nk;
                sigma[(a, b)] = v;
                sigma[(b, a)] = v;
            }
        }
        let floor = 1e-8 * sigma.trace() / d as f64;
        if !(floor > 0.0) {
            return None;
        }
        let sigma = clamp_eigenvalues(&sigma, floor);
        nalgebra::Cholesky::new(sigma.clone())?;
        kernels.push(GaussianKernel {
            a: nk / n as f64,
            mu: DVector::from_vec(mu),
            sigma,
        });
    }
    Some(kernels)
}

/// E-step: fills `resp` and returns the total log-likelihood.
fn e_step(data: &Data, kernels: &[GaussianKernel], resp: &mut [f64]) -> Option<f64> {
    let k = kernels.len();
    let dens: Vec<(f64, GaussianDensity)> = kernels
        .iter()
        .map(|kr| Some((kr.a.ln(), GaussianDensity::new(kr.mu.clone(), &kr.sigma).ok()?)))
        .collect::<Option<_>>()?;
    let mut ll = 0.0;
    let mut terms = vec![0.0; k];
    for i in 0..data.n {
        let x = data.row(i);
        for (t, (la, g)) in terms.iter_mut().zip(&dens) {
            *t = la + g.log_pdf(x);
        }
        let lse = log_sum_exp(&terms);
        if !lse.is_finite() {
            return None;
        }
        ll += lse;
        for (c, t) in terms.iter().enumerate() {
            resp[i * k + c] = (t - lse).exp();
        }
    }
    Some(ll)
}

fn run_em<R: Rng>(data: &Data, k: usize, cfg: &GmmFitConfig, rng: &mut R) -> Option<EmRun> {
    let labels = kmeans_labels(data, k, rng);
    let mut resp = vec![0.0; data.n * k];
    for (i, &l) in labels.iter().enumerate() {
        resp[i * k + l] = 1.0;
    }
    let mut kernels = m_step(data, &resp, k)?;
    let mut prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let ll = e_step(data, &kernels, &mut resp)?;
        kernels = m_step(data, &resp, k)?;
        if prev.is_finite() && (ll - prev).abs() <= cfg.tol * prev.abs() {
            prev = ll;
            break;
        }
        prev = ll;
    }
    // score the final parameters exactly
    let ll = e_step(data, &kernels, &mut resp)?;
    let _ = prev;
    let gmm = Gmm::new(kernels).ok()?;
    Some(EmRun {
        gmm,
        log_likelihood: ll,
        iterations,
    })
}
