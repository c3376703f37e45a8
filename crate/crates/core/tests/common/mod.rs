//! Oracles shared by the integration tests: tensor Gauss-Legendre quadrature and
//! textbook Gaussian densities computed without the library's linear algebra.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbnn::gmm::{GaussianKernel, Gmm};
use sbnn::PriorSpec;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs.push(x);
        ws.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (xs, ws)
}

/// Composite Gauss-Legendre rule on [a, b]: `panels` panels of `order` nodes.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (x, w) in xs.iter().zip(&ws) {
            out.push((c + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

/// Tensor-product integral of `f` over the box given by per-axis rules.
pub fn tensor_integrate(rules: &[Vec<(f64, f64)>], f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let d = rules.len();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for k in 0..d {
            x[k] = rules[k][idx[k]].0;
            w *= rules[k][idx[k]].1;
        }
        total += w * f(&x);
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < rules[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Multivariate normal density via explicit inverse and determinant.
pub struct Normal {
    mu: Vec<f64>,
    inv: DMatrix<f64>,
    norm: f64,
}

impl Normal {
    pub fn new(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Self {
        let d = mu.len();
        let inv = sigma.clone().try_inverse().expect("invertible");
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).powi(d as i32) * sigma.determinant()).sqrt();
        Self { mu: mu.iter().copied().collect(), inv, norm }
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        let d = self.mu.len();
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += (x[i] - self.mu[i]) * self.inv[(i, j)] * (x[j] - self.mu[j]);
            }
        }
        self.norm * (-0.5 * q).exp()
    }
}

pub fn normal_pdf(x: &[f64], mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    Normal::new(mu, sigma).pdf(x)
}

/// A random SPD matrix with eigenvalues roughly in [0.05, 5].
pub fn random_spd(r: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    let s = &a * a.transpose() + DMatrix::identity(d, d) * 0.05;
    let scale = r.random_range(0.2..3.0);
    s * scale
}

pub fn random_gmm(r: &mut ChaCha8Rng, d: usize, k: usize) -> Gmm {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let kernels = raw
        .iter()
        .map(|w| GaussianKernel {
            a: w / total,
            mu: DVector::from_fn(d, |_, _| r.random_range(-3.0..3.0)),
            sigma: random_spd(r, d),
        })
        .collect();
    Gmm::new(kernels).unwrap()
}

/// A random hybrid prior: a non-empty ARD subset, the rest flat.
pub fn random_partition(r: &mut ChaCha8Rng, d: usize) -> PriorSpec {
    loop {
        let ard: Vec<usize> = (0..d).filter(|_| r.random_bool(0.7)).collect();
        if ard.is_empty() {
            continue;
        }
        let known = (0..d)
            .filter(|i| !ard.contains(i))
            .map(|index| sbnn::net::KnownEntry {
                index,
                prior: sbnn::net::KnownPrior::FlatBox { lo: -1e3, hi: 1e3 },
            })
            .collect();
        return PriorSpec { ard_set: ard, known };
    }
}

/// Brute-force `integral gmm(phi) prod_{i in S} N(phi_i | 0, 1/alpha_i) dphi`.
///
/// Each kernel is integrated separately on a box of +-9 marginal standard
/// deviations of its product with the ARD prior, where the product moments are
/// computed in precision form.
pub fn evidence_by_quadrature(g: &Gmm, prior: &PriorSpec, log_alpha: &[f64], panels: usize) -> f64 {
    let d = g.dim();
    let mut total = 0.0;
    for k in g.kernels() {
        let sinv = k.sigma.clone().try_inverse().unwrap();
        let mut q = sinv.clone();
        for (a, &i) in prior.ard_set.iter().enumerate() {
            q[(i, i)] += log_alpha[a].exp();
        }
        let p = q.try_inverse().unwrap();
        let centre = &p * (&sinv * &k.mu);
        let rules: Vec<Vec<(f64, f64)>> = (0..d)
            .map(|i| {
                let s = p[(i, i)].sqrt();
                composite_rule(centre[i] - 9.0 * s, centre[i] + 9.0 * s, panels, 8)
            })
            .collect();
        let kernel = Normal::new(&k.mu, &k.sigma);
        let mut f = |x: &[f64]| {
            let mut v = kernel.pdf(x);
            for (a, &i) in prior.ard_set.iter().enumerate() {
                let alpha = log_alpha[a].exp();
                v *= (alpha / (2.0 * std::f64::consts::PI)).sqrt() * (-0.5 * alpha * x[i] * x[i]).exp();
            }
            v
        };
        total += k.a * tensor_integrate(&rules, &mut f);
    }
    total
}
