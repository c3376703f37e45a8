//! Laplace approximation at a chosen mode, and its single-kernel mixture, which
//! turns NSBL into classical sparse Bayesian learning.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::Gmm;
use crate::linalg::{chol_log_det, clamp_eigenvalues, symmetrize, LN_2PI};
use crate::nsbl::NsblResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaplaceConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Use damped Newton steps on a finite-difference Hessian instead of BFGS.
    pub newton: bool,
    /// Relative finite-difference step for the Hessian.
    pub fd_step: f64,
    /// Diagonal entries below this fraction of the largest are treated as
    /// non-identifiable.
    pub nonidentifiable_tol: f64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            grad_tol: 1e-6,
            newton: false,
            fd_step: 1e-4,
            nonidentifiable_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    pub phi: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Local maximizer of `target` (value and gradient) from `start`, by BFGS with
/// Armijo backtracking or, with `cfg.newton`, Levenberg-damped Newton.
pub fn find_map<F>(target: F, start: &[f64], cfg: &LaplaceConfig) -> Result<MapEstimate>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = start.len();
    let mut x = start.to_vec();
    let (mut f, mut g) = target(&x);
    if !f.is_finite() {
        return Err(Error::InvalidArgument("target is not finite at the start point".into()));
    }
    // inverse Hessian approximation of -target
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    for it in 0..cfg.max_iter {
        if inf_norm(&g) < cfg.grad_tol {
            return Ok(MapEstimate { grad_norm: inf_norm(&g), phi: x, value: f, iterations: it });
        }
        let gv = DVector::from_column_slice(&g);
        let dir: DVector<f64> = if cfg.newton {
            newton_direction(&target, &x, &gv, cfg.fd_step)
        } else {
            &hinv * &gv
        };
        let slope = gv.dot(&dir);
        let dir = if slope > 0.0 { dir } else { gv.clone() };
        let slope = gv.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            let (ft, gt) = target(&trial);
            if ft.is_finite() && ft >= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            return Err(Error::NotConverged { iterations: it, grad_norm: inf_norm(&g) });
        };
        // BFGS update for the minimization of -target
        let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, g.iter().zip(&gn).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                hinv *= sy / y.dot(&y);
                first = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * (1.0 + rho * yhy)) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x = xn;
        f = fnew;
        g = gn;
    }
    if inf_norm(&g) < cfg.grad_tol {
        return Ok(MapEstimate { grad_norm: inf_norm(&g), phi: x, value: f, iterations: cfg.max_iter });
    }
    Err(Error::NotConverged { iterations: cfg.max_iter, grad_norm: inf_norm(&g) })
}

fn newton_direction<F>(target: &F, x: &[f64], g: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let b = neg_hessian_fd(target, x, h);
    let n = x.len();
    let scale = b.diagonal().amax().max(1e-12);
    let mut lambda = 0.0;
    loop {
        let damped = &b + DMatrix::identity(n, n) * lambda;
        if let Some(c) = damped.cholesky() {
            return c.solve(g);
        }
        lambda = if lambda == 0.0 { 1e-8 * scale } else { lambda * 10.0 };
    }
}

/// `-Hessian` of the target by central differences of its gradient, symmetrized.
pub fn neg_hessian_fd<F>(target: &F, x: &[f64], rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let step = rel_step * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let (_, gp) = target(&xp);
        xp[j] = x[j] - step;
        let (_, gm) = target(&xp);
        xp[j] = x[j];
        for i in 0..n {
            h[(i, j)] = -(gp[i] - gm[i]) / (2.0 * step);
        }
    }
    symmetrize(&mut h);
    h
}

/// Gaussian approximation at a mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceFit {
    pub phi_map: Vec<f64>,
    /// `-Hessian` of the log target at the mode, after placeholder substitution.
    pub hessian: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub converged: bool,
    pub mode_seed: Vec<f64>,
    pub log_target_at_map: f64,
    /// Parameters with a vanishing Hessian diagonal: not identifiable at this mode,
    /// given unit placeholder variance.
    pub placeholder: Vec<bool>,
    /// The Hessian needed an eigenvalue floor to become positive definite.
    pub regularized: bool,
}

impl LaplaceFit {
    /// Laplace estimate of `log integral exp(target)`: the target at the mode plus
    /// the Gaussian volume term.
    pub fn log_normalizer(&self) -> f64 {
        let n = self.phi_map.len() as f64;
        let chol = self.sigma.clone().cholesky().expect("sigma is SPD");
        self.log_target_at_map + 0.5 * n * LN_2PI + 0.5 * chol_log_det(&chol)
    }
}

/// Find the mode from `start` and build the Laplace approximation there.
pub fn laplace_fit<F>(target: F, start: &[f64], cfg: &LaplaceConfig) -> Result<LaplaceFit>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let map = find_map(&target, start, cfg)?;
    let mut h = neg_hessian_fd(&target, &map.phi, cfg.fd_step);
    let n = h.nrows();
    let max_diag = h.diagonal().amax();
    let placeholder: Vec<bool> = (0..n).map(|i| h[(i, i)].abs() <= cfg.nonidentifiable_tol * max_diag).collect();
    for i in (0..n).filter(|&i| placeholder[i]) {
        for j in 0..n {
            h[(i, j)] = 0.0;
            h[(j, i)] = 0.0;
        }
        h[(i, i)] = 1.0;
    }
    let mut regularized = false;
    if h.clone().cholesky().is_none() {
        let eig = h.clone().symmetric_eigen();
        let floor = 1e-8 * eig.eigenvalues.amax().max(1e-300);
        h = clamp_eigenvalues(&h, floor);
        regularized = true;
        log::warn!("laplace: Hessian not positive definite at the mode; eigenvalues floored at {floor:e}");
    }
    let mut sigma = h
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("laplace Hessian"))?
        .inverse();
    symmetrize(&mut sigma);
    Ok(LaplaceFit {
        phi_map: map.phi,
        hessian: h,
        sigma,
        converged: true,
        mode_seed: start.to_vec(),
        log_target_at_map: map.value,
        placeholder,
        regularized,
    })
}

/// The single-kernel mixture `N(phi_map, sigma)`.
pub fn laplace_kernel(fit: &LaplaceFit) -> Result<Gmm> {
    if !fit.converged {
        return Err(Error::InvalidArgument("laplace fit did not converge".into()));
    }
    Gmm::single(DVector::from_column_slice(&fit.phi_map), fit.sigma.clone())
}

/// One row of the before/after sparse-learning table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRow {
    pub name: String,
    pub phi_map: f64,
    pub sigma_ii: f64,
    pub placeholder: bool,
    pub log_alpha_map: Option<f64>,
    pub gamma_rms: Option<f64>,
    pub m_i: Option<f64>,
    pub p_ii: Option<f64>,
}

/// Table rows for every parameter; the sparse-learning columns are filled for
/// ARD parameters when an NSBL result on the Laplace kernel is supplied.
pub fn laplace_report(fit: &LaplaceFit, names: &[String], sparse: Option<(&NsblResult, &[usize])>) -> Vec<LaplaceRow> {
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut row = LaplaceRow {
                name: name.clone(),
                phi_map: fit.phi_map[i],
                sigma_ii: fit.sigma[(i, i)],
                placeholder: fit.placeholder[i],
                log_alpha_map: None,
                gamma_rms: None,
                m_i: None,
                p_ii: None,
            };
            if let Some((res, ard)) = sparse {
                let post = &res.posterior.kernels()[0];
                row.m_i = Some(post.mu[i]);
                row.p_ii = Some(post.sigma[(i, i)]);
                if let Some(a) = ard.iter().position(|&j| j == i) {
                    row.log_alpha_map = Some(res.log_alpha_map.log_alpha[a]);
                    row.gamma_rms = Some(res.relevance.gamma_rms[a]);
                }
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_target(mu: Vec<f64>, prec: DMatrix<f64>) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
        move |x: &[f64]| {
            let d = DVector::from_iterator(mu.len(), x.iter().zip(&mu).map(|(a, b)| a - b));
            let g = -(&prec * &d);
            (-0.5 * d.dot(&(&prec * &d)), g.iter().copied().collect())
        }
    }

    #[test]
    fn gaussian_mode_is_mean() {
        let t = gaussian_target(vec![1.5], DMatrix::from_element(1, 1, 4.0));
        let m = find_map(&t, &[-3.0], &LaplaceConfig::default()).unwrap();
        assert!((m.phi[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn newton_solves_quadratic_in_one_step() {
        let prec = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let t = gaussian_target(vec![1.0, -2.0], prec);
        let cfg = LaplaceConfig { newton: true, ..Default::default() };
        let m = find_map(&t, &[5.0, 5.0], &cfg).unwrap();
        assert_eq!(m.iterations, 1);
        assert!((m.phi[0] - 1.0).abs() < 1e-6 && (m.phi[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn fit_recovers_covariance() {
        let prec = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let t = gaussian_target(vec![0.5, 0.25], prec.clone());
        let fit = laplace_fit(&t, &[0.0, 0.0], &LaplaceConfig::default()).unwrap();
        let want = prec.try_inverse().unwrap();
        assert!((&fit.sigma - want).amax() < 1e-6);
        assert!(fit.placeholder.iter().all(|p| !p));
        let asym = (&fit.hessian - fit.hessian.transpose()).amax() / fit.hessian.amax();
        assert!(asym < 1e-8);
    }

    #[test]
    fn flat_direction_gets_placeholder() {
        // second coordinate does not enter the target at all
        let t = |x: &[f64]| (-(x[0] - 1.0).powi(2), vec![-2.0 * (x[0] - 1.0), 0.0]);
        let fit = laplace_fit(t, &[0.0, 0.0], &LaplaceConfig::default()).unwrap();
        assert_eq!(fit.placeholder, vec![false, true]);
        assert_eq!(fit.sigma[(1, 1)], 1.0);
        assert!((fit.sigma[(0, 0)] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn unbounded_target_does_not_converge() {
        let t = |x: &[f64]| (x[0], vec![1.0]);
        let cfg = LaplaceConfig { max_iter: 20, ..Default::default() };
        assert!(matches!(find_map(t, &[0.0], &cfg), Err(Error::NotConverged { .. })));
    }
}
