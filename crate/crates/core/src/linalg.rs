//! Small dense linear-algebra helpers shared by the samplers and the evidence code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `log(sum(exp(xs)))` without overflow. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite(what))
}

/// Cholesky factorization with diagonal jitter `eps * trace / n`, growing tenfold
/// until the factorization succeeds. Returns the factor and the jitter actually added.
pub fn cholesky_jittered(m: &DMatrix<f64>, eps: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some((c, 0.0));
    }
    let n = m.nrows().max(1) as f64;
    let scale = (m.trace().abs() / n).max(f64::MIN_POSITIVE);
    let mut jitter = eps * scale;
    for _ in 0..20 {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some((c, jitter));
        }
        jitter *= 10.0;
    }
    None
}

/// `log |M|` from a Cholesky factor.
pub fn chol_log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Clamp the eigenvalues of a symmetric matrix from below.
pub fn clamp_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return m.clone();
    }
    let vals = eig.eigenvalues.map(|l| l.max(floor));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

/// A multivariate normal density prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                what: "covariance",
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        let chol = cholesky(cov, "gaussian covariance")?;
        let log_norm = -0.5 * (mean.len() as f64 * LN_2PI + chol_log_det(&chol));
        Ok(Self { mean, chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Half the squared Mahalanobis distance of `x` from the mean.
    pub fn half_mahalanobis(&self, x: &[f64]) -> f64 {
        let l = self.chol.l_dirty();
        let n = self.mean.len();
        // forward substitution on the lower factor, reading only its lower triangle
        let mut z = vec![0.0; n];
        let mut q = 0.0;
        for i in 0..n {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= l[(i, j)] * z[j];
            }
            z[i] = s / l[(i, i)];
            q += z[i] * z[i];
        }
        0.5 * q
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.log_norm - self.half_mahalanobis(x)
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Weighted mean and covariance of the rows of `samples` (weights need not be normalized).
pub fn weighted_moments(samples: &DMatrix<f64>, weights: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = samples.shape();
    let total: f64 = weights.iter().sum();
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        let w = weights[i] / total;
        for j in 0..d {
            mean[j] += w * samples[(i, j)];
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for i in 0..n {
        let w = weights[i] / total;
        if w == 0.0 {
            continue;
        }
        for j in 0..d {
            diff[j] = samples[(i, j)] - mean[j];
        }
        for a in 0..d {
            let wa = w * diff[a];
            for b in 0..=a {
                cov[(a, b)] += wa * diff[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    (mean, cov)
}
