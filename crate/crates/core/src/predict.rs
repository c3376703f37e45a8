//! Push-forward predictive distribution: posterior parameter draws mapped through
//! the network over an input grid.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{NetworkSpec, Scratch};
use crate::rng::{self, tag};

pub const DEFAULT_N_DRAWS: usize = 1000;
pub const DEFAULT_LEVELS: [f64; 2] = [0.5, 0.95];

/// 201 evenly spaced points on [-5, 5].
pub fn default_grid() -> Vec<f64> {
    linspace(-5.0, 5.0, 201)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Central band holding `level` of the mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub level: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveFan {
    pub x_grid: Vec<f64>,
    /// `n_draws x |x_grid|`.
    pub samples: DMatrix<f64>,
    pub mean: Vec<f64>,
    pub bands: Vec<Band>,
    pub include_noise: bool,
}

impl PredictiveFan {
    pub fn band(&self, level: f64) -> Option<&Band> {
        self.bands.iter().find(|b| (b.level - level).abs() < 1e-12)
    }
}

/// Empirical quantile of sorted data with linear interpolation between order
/// statistics (`h = (n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let i = h.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

/// Evaluate every parameter row over `x_grid`, optionally adding observation noise,
/// and summarize with the default 50% and 95% bands.
pub fn push_forward(
    spec: &NetworkSpec,
    param_samples: &DMatrix<f64>,
    x_grid: &[f64],
    include_noise: bool,
    noise_var: f64,
    seed: u64,
) -> Result<PredictiveFan> {
    push_forward_with_levels(spec, param_samples, x_grid, include_noise, noise_var, seed, &DEFAULT_LEVELS)
}

pub fn push_forward_with_levels(
    spec: &NetworkSpec,
    param_samples: &DMatrix<f64>,
    x_grid: &[f64],
    include_noise: bool,
    noise_var: f64,
    seed: u64,
    levels: &[f64],
) -> Result<PredictiveFan> {
    let (n, np) = param_samples.shape();
    if n == 0 {
        return Err(Error::InvalidArgument("push-forward needs at least one parameter sample".into()));
    }
    if np != spec.n_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter samples",
            expected: spec.n_params(),
            got: np,
        });
    }
    if include_noise && !(noise_var > 0.0) {
        return Err(Error::InvalidArgument("noise variance must be positive".into()));
    }
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::InvalidArgument("band levels must lie in (0, 1)".into()));
    }
    let sd = noise_var.sqrt();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let params: Vec<f64> = param_samples.row(r).iter().copied().collect();
            let mut scratch = Scratch::new(spec);
            let mut rng = rng::stream(seed, &[tag::PREDICT, r as u64]);
            x_grid
                .iter()
                .map(|&x| {
                    let f = spec.forward_scalar(&params, x, &mut scratch);
                    if include_noise {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        f + sd * z
                    } else {
                        f
                    }
                })
                .collect()
        })
        .collect();
    let m = x_grid.len();
    let samples = DMatrix::from_fn(n, m, |r, c| rows[r][c]);
    let mut mean = Vec::with_capacity(m);
    let mut bands: Vec<Band> = levels
        .iter()
        .map(|&level| Band { level, lo: Vec::with_capacity(m), hi: Vec::with_capacity(m) })
        .collect();
    for c in 0..m {
        let mut col: Vec<f64> = samples.column(c).iter().copied().collect();
        // clamp the mean into the sample range to absorb summation rounding
        let mu = col.iter().sum::<f64>() / n as f64;
        col.sort_by(f64::total_cmp);
        mean.push(mu.clamp(col[0], col[n - 1]));
        for b in bands.iter_mut() {
            let tail = 0.5 * (1.0 - b.level);
            b.lo.push(quantile_sorted(&col, tail));
            b.hi.push(quantile_sorted(&col, 1.0 - tail));
        }
    }
    Ok(PredictiveFan {
        x_grid: x_grid.to_vec(),
        samples,
        mean,
        bands,
        include_noise,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationMetrics {
    pub rmse_in: f64,
    pub rmse_out: f64,
    /// Mean width of the 95% band over grid points outside the training range.
    pub band_width_out: f64,
}

/// RMSE of the fan mean against `truth` inside / outside `train_range` and the mean
/// 95% band width outside it. Quantities over an empty region are NaN.
pub fn extrapolation_metrics(fan: &PredictiveFan, truth: impl Fn(f64) -> f64, train_range: (f64, f64)) -> ExtrapolationMetrics {
    let inside = |x: f64| x >= train_range.0 && x <= train_range.1;
    let rmse = |keep: &dyn Fn(f64) -> bool| {
        let errs: Vec<f64> = fan
            .x_grid
            .iter()
            .zip(&fan.mean)
            .filter(|(x, _)| keep(**x))
            .map(|(x, m)| (m - truth(*x)).powi(2))
            .collect();
        (errs.iter().sum::<f64>() / errs.len() as f64).sqrt()
    };
    ExtrapolationMetrics {
        rmse_in: rmse(&inside),
        rmse_out: rmse(&|x| !inside(x)),
        band_width_out: band_width(fan, 0.95, |x| !inside(x)),
    }
}

/// Mean width of the `level` band over grid points selected by `keep`
/// (computed from the samples when the level is not precomputed).
pub fn band_width(fan: &PredictiveFan, level: f64, keep: impl Fn(f64) -> bool) -> f64 {
    let cols: Vec<usize> = (0..fan.x_grid.len()).filter(|&c| keep(fan.x_grid[c])).collect();
    let width = |c: usize| match fan.band(level) {
        Some(b) => b.hi[c] - b.lo[c],
        None => {
            let mut col: Vec<f64> = fan.samples.column(c).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            let tail = 0.5 * (1.0 - level);
            quantile_sorted(&col, 1.0 - tail) - quantile_sorted(&col, tail)
        }
    };
    cols.iter().map(|&c| width(c)).sum::<f64>() / cols.len() as f64
}

/// `n` rows spread evenly through `samples` (all rows when `n` exceeds the count).
pub fn thin_rows(samples: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let total = samples.nrows();
    if n >= total {
        return samples.clone();
    }
    let idx: Vec<usize> = (0..n).map(|i| i * total / n).collect();
    samples.select_rows(idx.iter())
}
