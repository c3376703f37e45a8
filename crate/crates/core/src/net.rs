//! Feed-forward network model, Gaussian likelihood and the hybrid prior family.
//!
//! Parameters live in one flat vector. Layer `l` contributes its weight matrix
//! `W^[l]` (row-major, entry `(j, i)` connects neuron `i` of layer `l-1` to neuron
//! `j` of layer `l`) followed by its biases `b^[l]`. For a 1-3-1 network this gives
//! `W^[1]_{11}, W^[1]_{21}, W^[1]_{31}, b^[1]_1, b^[1]_2, b^[1]_3, W^[2]_{11},
//! W^[2]_{12}, W^[2]_{13}, b^[2]_1`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::LN_2PI;
use crate::nsbl::AlphaVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative with respect to the pre-activation. The relu subgradient at 0 is 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Bias,
}

/// One entry of the flat parameter layout. Indices are 1-based as in the
/// `W^[l]_{ji}` notation; for biases the second index is 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub layer: usize,
    pub kind: ParamKind,
    pub index: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

/// Weights and biases of one layer, as produced by [`NetworkSpec::unflatten`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Shallow tanh network with one hidden layer of `hidden` neurons.
    pub fn shallow_tanh(hidden: usize) -> Self {
        Self {
            layer_sizes: vec![1, hidden, 1],
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least an input and an output layer".into(),
            ));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("layer sizes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layout(&self) -> Vec<ParamInfo> {
        let mut out = Vec::with_capacity(self.n_params());
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let layer = l + 1;
            let (fan_in, fan_out) = (w[0], w[1]);
            for j in 1..=fan_out {
                for i in 1..=fan_in {
                    out.push(ParamInfo {
                        name: format!("W^[{layer}]_{{{j}{i}}}"),
                        layer,
                        kind: ParamKind::Weight,
                        index: (j, i),
                    });
                }
            }
            for i in 1..=fan_out {
                out.push(ParamInfo {
                    name: format!("b^[{layer}]_{i}"),
                    layer,
                    kind: ParamKind::Bias,
                    index: (i, 0),
                });
            }
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        self.layout().into_iter().map(|p| p.name).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.layout()
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        Ok(())
    }

    pub fn unflatten(&self, params: &[f64]) -> Result<Vec<LayerParams>> {
        self.check_params(params)?;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layer_sizes.len() - 1);
        for w in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights =
                DMatrix::from_row_slice(fan_out, fan_in, &params[offset..offset + fan_in * fan_out]);
            offset += fan_in * fan_out;
            let bias = DVector::from_column_slice(&params[offset..offset + fan_out]);
            offset += fan_out;
            layers.push(LayerParams { weights, bias });
        }
        Ok(layers)
    }

    pub fn flatten(&self, layers: &[LayerParams]) -> Result<Vec<f64>> {
        if layers.len() + 1 != self.layer_sizes.len() {
            return Err(Error::DimensionMismatch {
                what: "layer count",
                expected: self.layer_sizes.len() - 1,
                got: layers.len(),
            });
        }
        let mut out = Vec::with_capacity(self.n_params());
        for (l, lp) in layers.iter().enumerate() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if lp.weights.shape() != (fan_out, fan_in) || lp.bias.len() != fan_out {
                return Err(Error::DimensionMismatch {
                    what: "layer shape",
                    expected: fan_out * fan_in,
                    got: lp.weights.len(),
                });
            }
            for j in 0..fan_out {
                for i in 0..fan_in {
                    out.push(lp.weights[(j, i)]);
                }
            }
            out.extend(lp.bias.iter());
        }
        Ok(out)
    }

    /// Network output for a scalar input. Requires single input and output neurons.
    pub fn forward(&self, params: &[f64], x: f64) -> Result<f64> {
        self.check_params(params)?;
        if self.input_dim() != 1 || self.output_dim() != 1 {
            return Err(Error::InvalidArgument(
                "scalar forward requires 1 input and 1 output neuron".into(),
            ));
        }
        let mut scratch = Scratch::new(self);
        Ok(self.forward_scalar(params, x, &mut scratch))
    }

    /// Unchecked scalar forward pass reusing caller-provided buffers.
    pub fn forward_scalar(&self, params: &[f64], x: f64, scratch: &mut Scratch) -> f64 {
        let n_layers = self.layer_sizes.len();
        scratch.cur.clear();
        scratch.cur.push(x);
        let mut offset = 0;
        for l in 1..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[l - 1], self.layer_sizes[l]);
            let w = &params[offset..offset + fan_in * fan_out];
            let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            scratch.next.clear();
            let hidden = l + 1 < n_layers;
            for j in 0..fan_out {
                let row = &w[j * fan_in..(j + 1) * fan_in];
                let mut z = b[j];
                for (wi, ai) in row.iter().zip(&scratch.cur) {
                    z += wi * ai;
                }
                scratch
                    .next
                    .push(if hidden { self.activation.apply(z) } else { z });
            }
            std::mem::swap(&mut scratch.cur, &mut scratch.next);
        }
        scratch.cur[0]
    }

    /// Scalar forward pass and its gradient with respect to the parameters
    /// (back-propagation). `grad` is overwritten.
    pub fn forward_with_grad(&self, params: &[f64], x: f64, grad: &mut [f64]) -> f64 {
        let n_layers = self.layer_sizes.len();
        // activations[l] are the outputs of layer l, pre[l] the pre-activations
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        activations.push(vec![x]);
        pre.push(vec![x]);
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 1..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[l - 1], self.layer_sizes[l]);
            offsets.push(offset);
            let w = &params[offset..offset + fan_in * fan_out];
            let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let hidden = l + 1 < n_layers;
            let prev = &activations[l - 1];
            let mut z_out = Vec::with_capacity(fan_out);
            let mut a_out = Vec::with_capacity(fan_out);
            for j in 0..fan_out {
                let z = b[j]
                    + w[j * fan_in..(j + 1) * fan_in]
                        .iter()
                        .zip(prev)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                z_out.push(z);
                a_out.push(if hidden { self.activation.apply(z) } else { z });
            }
            pre.push(z_out);
            activations.push(a_out);
        }
        // delta = d output / d pre-activation of the current layer
        let mut delta = vec![1.0];
        for l in (1..n_layers).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l - 1], self.layer_sizes[l]);
            let off = offsets[l - 1];
            let prev = &activations[l - 1];
            for j in 0..fan_out {
                for i in 0..fan_in {
                    grad[off + j * fan_in + i] = delta[j] * prev[i];
                }
                grad[off + fan_in * fan_out + j] = delta[j];
            }
            if l > 1 {
                let w = &params[off..off + fan_in * fan_out];
                let mut next = vec![0.0; fan_in];
                for (i, slot) in next.iter_mut().enumerate() {
                    let back: f64 = (0..fan_out).map(|j| w[j * fan_in + i] * delta[j]).sum();
                    *slot = back * self.activation.derivative(pre[l - 1][i]);
                }
                delta = next;
            }
        }
        activations[n_layers - 1][0]
    }
}

/// Reusable buffers for [`NetworkSpec::forward_scalar`].
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    cur: Vec<f64>,
    next: Vec<f64>,
}

impl Scratch {
    pub fn new(spec: &NetworkSpec) -> Self {
        let width = spec.layer_sizes.iter().copied().max().unwrap_or(1);
        Self {
            cur: Vec::with_capacity(width),
            next: Vec::with_capacity(width),
        }
    }
}

/// Flat parameter values together with their named layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<ParamInfo>,
}

impl ParamVector {
    pub fn new(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        spec.check_params(&values)?;
        Ok(Self {
            values,
            layout: spec.layout(),
        })
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            values: vec![0.0; spec.n_params()],
            layout: spec.layout(),
        }
    }

    /// Build from `(name, value)` pairs; unnamed parameters are zero.
    pub fn from_named(spec: &NetworkSpec, named: &[(&str, f64)]) -> Result<Self> {
        let mut pv = Self::zeros(spec);
        for &(name, v) in named {
            pv.set(name, v)?;
        }
        Ok(pv)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.layout
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.values[self.index_of(name)?])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self.index_of(name)?;
        self.values[i] = value;
        Ok(())
    }
}

/// Observations `y_i = f(x_i) + eps_i`, `eps_i ~ N(0, noise_var)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub noise_var: f64,
    pub truth_fn_id: Option<String>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, noise_var: f64, truth_fn_id: Option<String>) -> Result<Self> {
        let d = Self {
            x,
            y,
            noise_var,
            truth_fn_id,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if self.x.len() != self.y.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset y",
                expected: self.x.len(),
                got: self.y.len(),
            });
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::InvalidArgument("noise variance must be positive".into()));
        }
        if self.x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("x must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Sum of i.i.d. Gaussian log-densities of the observations around the network output.
pub fn log_likelihood(data: &Dataset, spec: &NetworkSpec, params: &[f64]) -> Result<f64> {
    if !(data.noise_var > 0.0) {
        return Err(Error::InvalidArgument("noise variance must be positive".into()));
    }
    spec.check_params(params)?;
    let mut scratch = Scratch::new(spec);
    Ok(log_likelihood_unchecked(data, spec, params, &mut scratch))
}

pub(crate) fn log_likelihood_unchecked(
    data: &Dataset,
    spec: &NetworkSpec,
    params: &[f64],
    scratch: &mut Scratch,
) -> f64 {
    let mut ss = 0.0;
    for (&x, &y) in data.x.iter().zip(&data.y) {
        let r = y - spec.forward_scalar(params, x, scratch);
        ss += r * r;
    }
    let n = data.len() as f64;
    -0.5 * n * (LN_2PI + data.noise_var.ln()) - 0.5 * ss / data.noise_var
}

/// Log-likelihood and its gradient with respect to the parameters.
pub fn log_likelihood_grad(data: &Dataset, spec: &NetworkSpec, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    spec.check_params(params)?;
    let np = params.len();
    let mut grad = vec![0.0; np];
    let mut g_point = vec![0.0; np];
    let mut ss = 0.0;
    for (&x, &y) in data.x.iter().zip(&data.y) {
        let f = spec.forward_with_grad(params, x, &mut g_point);
        let r = y - f;
        ss += r * r;
        for (g, gp) in grad.iter_mut().zip(&g_point) {
            *g += r * gp / data.noise_var;
        }
    }
    let n = data.len() as f64;
    Ok((-0.5 * n * (LN_2PI + data.noise_var.ln()) - 0.5 * ss / data.noise_var, grad))
}

/// Prescribed prior for a parameter outside the ARD set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KnownPrior {
    FlatBox { lo: f64, hi: f64 },
    Gaussian { mean: f64, var: f64 },
}

impl KnownPrior {
    /// Flat-box densities are unnormalized: 0 inside, `-inf` outside.
    pub fn log_density(&self, v: f64) -> f64 {
        match *self {
            KnownPrior::FlatBox { lo, hi } => {
                if v >= lo && v <= hi {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            KnownPrior::Gaussian { mean, var } => {
                -0.5 * (LN_2PI + var.ln()) - 0.5 * (v - mean) * (v - mean) / var
            }
        }
    }

    /// Gradient of the log-density; zero for flat boxes.
    pub fn grad(&self, v: f64) -> f64 {
        match *self {
            KnownPrior::FlatBox { .. } => 0.0,
            KnownPrior::Gaussian { mean, var } => -(v - mean) / var,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            KnownPrior::FlatBox { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            KnownPrior::Gaussian { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            KnownPrior::FlatBox { lo, hi } if !(lo < hi) => {
                Err(Error::InvalidArgument(format!("flat box needs lo < hi (got [{lo}, {hi}])")))
            }
            KnownPrior::Gaussian { var, .. } if !(var > 0.0) => {
                Err(Error::InvalidArgument("gaussian prior variance must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownEntry {
    pub index: usize,
    pub prior: KnownPrior,
}

/// Hybrid prior: ARD Gaussians over `ard_set`, prescribed priors over the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub ard_set: Vec<usize>,
    pub known: Vec<KnownEntry>,
}

impl PriorSpec {
    pub fn all_ard(n_params: usize) -> Self {
        Self {
            ard_set: (0..n_params).collect(),
            known: Vec::new(),
        }
    }

    pub fn all_flat(n_params: usize, lo: f64, hi: f64) -> Self {
        Self {
            ard_set: Vec::new(),
            known: (0..n_params)
                .map(|index| KnownEntry {
                    index,
                    prior: KnownPrior::FlatBox { lo, hi },
                })
                .collect(),
        }
    }

    pub fn n_ard(&self) -> usize {
        self.ard_set.len()
    }

    pub fn n_params(&self) -> usize {
        self.ard_set.len() + self.known.len()
    }

    /// Checks that the two index sets partition `0..n_params`.
    pub fn validate(&self, n_params: usize) -> Result<()> {
        let mut seen = vec![false; n_params];
        let indices = self.ard_set.iter().copied().chain(self.known.iter().map(|k| k.index));
        for i in indices {
            if i >= n_params {
                return Err(Error::InvalidArgument(format!("prior index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!("prior index {i} assigned twice")));
            }
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("parameter {i} has no prior")));
        }
        for k in &self.known {
            k.prior.validate()?;
        }
        Ok(())
    }

    /// Log-density of the prescribed (non-ARD) part only.
    pub fn log_known(&self, params: &[f64]) -> f64 {
        self.known
            .iter()
            .map(|k| k.prior.log_density(params[k.index]))
            .sum()
    }
}

/// ARD Gaussian log-densities over the ARD set plus the prescribed priors.
pub fn log_prior(params: &[f64], prior: &PriorSpec, alpha: &AlphaVector) -> Result<f64> {
    if alpha.len() != prior.n_ard() {
        return Err(Error::DimensionMismatch {
            what: "alpha vector",
            expected: prior.n_ard(),
            got: alpha.len(),
        });
    }
    if prior.n_params() != params.len() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: prior.n_params(),
            got: params.len(),
        });
    }
    Ok(log_ard(params, &prior.ard_set, &alpha.log_alpha) + prior.log_known(params))
}

/// `sum_i log N(phi_i | 0, 1/alpha_i)` over the given indices.
pub fn log_ard(params: &[f64], ard_set: &[usize], log_alpha: &[f64]) -> f64 {
    ard_set
        .iter()
        .zip(log_alpha)
        .map(|(&i, &t)| 0.5 * (t - LN_2PI) - 0.5 * t.exp() * params[i] * params[i])
        .sum()
}
