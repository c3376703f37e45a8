//! The boxcar regression problem: a smoothed rectangular pulse written as the sum
//! of two scaled tanh functions, and the noisy dataset drawn from it.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::net::{Dataset, NetworkSpec, ParamVector};
use crate::rng::{self, tag};

pub const TRUTH_FN_ID: &str = "boxcar-tanh-sum";

/// `2 tanh(5x + 5) + 2 tanh(-5x + 5)`.
pub fn boxcar_truth(x: f64) -> f64 {
    2.0 * (5.0 * x + 5.0).tanh() + 2.0 * (-5.0 * x + 5.0).tanh()
}

/// Evenly spaced inputs on `[x_lo, x_hi]` with Gaussian noise of variance `noise_var`
/// added to the boxcar truth. Identical seeds give bit-identical datasets.
pub fn generate_boxcar_dataset(n: usize, x_lo: f64, x_hi: f64, noise_var: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 observations".into()));
    }
    if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid range [{x_lo}, {x_hi}]")));
    }
    if !(noise_var > 0.0) {
        return Err(Error::InvalidArgument("noise variance must be positive".into()));
    }
    let mut rng = rng::stream(seed, &[tag::DATA]);
    let sd = noise_var.sqrt();
    let step = (x_hi - x_lo) / (n - 1) as f64;
    let x: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { x_hi } else { x_lo + step * i as f64 })
        .collect();
    let y = x
        .iter()
        .map(|&xi| {
            let e: f64 = StandardNormal.sample(&mut rng);
            boxcar_truth(xi) + sd * e
        })
        .collect();
    Dataset::new(x, y, noise_var, Some(TRUTH_FN_ID.to_string()))
}

/// The eight sign/permutation assignments of the 1-2-1 tanh network that reproduce
/// the boxcar truth exactly. Each entry is
/// `(W^[2]_{11}, W^[2]_{12}, W^[1]_{11}, W^[1]_{21}, b^[1]_1, b^[1]_2, b^[2]_1)`.
pub const SYMMETRIC_COMBINATIONS: [[f64; 7]; 8] = [
    [2.0, 2.0, 5.0, -5.0, 5.0, 5.0, 0.0],
    [2.0, 2.0, -5.0, 5.0, 5.0, 5.0, 0.0],
    [2.0, -2.0, 5.0, 5.0, 5.0, -5.0, 0.0],
    [2.0, -2.0, -5.0, -5.0, 5.0, -5.0, 0.0],
    [-2.0, 2.0, 5.0, 5.0, -5.0, 5.0, 0.0],
    [-2.0, 2.0, -5.0, -5.0, -5.0, 5.0, 0.0],
    [-2.0, -2.0, 5.0, -5.0, -5.0, -5.0, 0.0],
    [-2.0, -2.0, -5.0, 5.0, -5.0, -5.0, 0.0],
];

const COMBINATION_NAMES: [&str; 7] = [
    "W^[2]_{11}",
    "W^[2]_{12}",
    "W^[1]_{11}",
    "W^[1]_{21}",
    "b^[1]_1",
    "b^[1]_2",
    "b^[2]_1",
];

/// Parameters of combination `which` (0-based) for the 1-2-1 network.
pub fn combination_121(which: usize) -> ParamVector {
    let spec = NetworkSpec::shallow_tanh(2);
    let vals = SYMMETRIC_COMBINATIONS[which];
    let named: Vec<(&str, f64)> = COMBINATION_NAMES.iter().copied().zip(vals).collect();
    ParamVector::from_named(&spec, &named).expect("static names")
}

/// Combination `which` embedded in the 1-3-1 network with the third neuron switched off
/// (all of its parameters zero).
pub fn combination_131(which: usize) -> ParamVector {
    let spec = NetworkSpec::shallow_tanh(3);
    let vals = SYMMETRIC_COMBINATIONS[which];
    let named: Vec<(&str, f64)> = COMBINATION_NAMES.iter().copied().zip(vals).collect();
    ParamVector::from_named(&spec, &named).expect("static names")
}
