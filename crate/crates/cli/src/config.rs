//! Run configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sbnn::hier::HierConfig;
use sbnn::pipeline::{ard_prior, LaplaceStudyConfig, NsblConfig, StandardConfig, DEFAULT_FLAT_BOX};
use sbnn::predict::DEFAULT_LEVELS;
use sbnn::NetworkSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Standard,
    Nsbl,
    Hier,
    Laplace,
    LaplaceNsbl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::Nsbl => "nsbl",
            Method::Hier => "hier",
            Method::Laplace => "laplace",
            Method::LaplaceNsbl => "laplace-nsbl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub n: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub noise_var: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { n: 50, x_lo: -3.0, x_hi: 3.0, noise_var: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    /// CSV with an `x,y` header.
    pub path: PathBuf,
    pub noise_var: f64,
}

/// Exactly one data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Generate(GenerateConfig),
    Load(LoadConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierBlock {
    /// ARD parameter names; `None` means all of them.
    pub ard: Option<Vec<String>>,
    #[serde(flatten)]
    pub config: HierConfig,
}

impl Default for HierBlock {
    fn default() -> Self {
        Self { ard: None, config: HierConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { lo: -5.0, hi: 5.0, n: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub n_draws: usize,
    pub grid: GridConfig,
    pub include_noise: bool,
    pub levels: Vec<f64>,
    /// Sample curves written to `fan_samples.csv`.
    pub n_curves: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            n_draws: sbnn::predict::DEFAULT_N_DRAWS,
            grid: GridConfig::default(),
            include_noise: false,
            levels: DEFAULT_LEVELS.to_vec(),
            n_curves: 100,
        }
    }
}

/// Evidence/hyperprior/objective grids over pairs of log alphas, emitted after an
/// NSBL run. An empty `pairs` picks the first two output-layer weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub pairs: Vec<(String, String)>,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self { pairs: Vec::new(), lo: -12.0, hi: 12.0, n: 41 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSource,
    pub network: NetworkSpec,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard: Option<StandardConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nsbl: Option<NsblConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hier: Option<HierBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplaceStudyConfig>,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub surface: SurfaceConfig,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_json(&text).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse { path: path.into(), source },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: PathBuf::new(), source })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Overwrite every component seed with the run seed so that all randomness
    /// flows from `seed`; each component derives its own tagged streams from it.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let s = c.seed;
        if let Some(b) = c.standard.as_mut() {
            b.tmcmc.seed = s;
        }
        if let Some(b) = c.nsbl.as_mut() {
            b.gmm.seed = s;
            b.trust_region.seed = s;
        }
        if let Some(b) = c.hier.as_mut() {
            b.config.tmcmc.seed = s;
        }
        c
    }

    /// SHA-256 of the resolved config without its output directory.
    pub fn hash(&self) -> String {
        let mut c = self.resolved();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn flat_box(&self) -> (f64, f64) {
        self.standard.as_ref().map(|s| s.flat_box).unwrap_or(DEFAULT_FLAT_BOX)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        self.network.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.network.input_dim() != 1 || self.network.output_dim() != 1 {
            return bad("only scalar-input, scalar-output networks are supported".into());
        }
        match &self.data {
            DataSource::Generate(g) => {
                if g.n < 2 || !(g.x_lo < g.x_hi) || !(g.noise_var > 0.0) {
                    return bad("data.generate needs n >= 2, x_lo < x_hi and noise_var > 0".into());
                }
            }
            DataSource::Load(l) => {
                if !(l.noise_var > 0.0) {
                    return bad("data.load.noise_var must be positive".into());
                }
            }
        }
        let need = |present: bool, block: &str| {
            if present {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!(
                    "method `{}` requires a `{block}` block",
                    self.method.as_str()
                )))
            }
        };
        match self.method {
            Method::Standard => need(self.standard.is_some(), "standard")?,
            Method::Nsbl => {
                need(self.standard.is_some(), "standard")?;
                need(self.nsbl.is_some(), "nsbl")?;
            }
            Method::Hier => need(self.hier.is_some(), "hier")?,
            Method::Laplace => need(self.laplace.is_some(), "laplace")?,
            Method::LaplaceNsbl => {
                need(self.laplace.is_some(), "laplace")?;
                need(self.nsbl.is_some(), "nsbl")?;
            }
        }
        let inv = |e: sbnn::Error| ConfigError::Invalid(e.to_string());
        if let Some(s) = &self.standard {
            if !(s.flat_box.0 < s.flat_box.1) {
                return bad("standard.flat_box must satisfy lo < hi".into());
            }
            s.tmcmc.validate().map_err(inv)?;
        }
        if let Some(n) = &self.nsbl {
            n.trust_region.validate().map_err(inv)?;
            n.prior(&self.network, self.flat_box()).map_err(inv)?;
            if n.gmm.k_candidates.is_empty() || n.gmm.k_candidates.contains(&0) {
                return bad("nsbl.gmm.k_candidates must be non-empty positive integers".into());
            }
            if let sbnn::pipeline::HyperpriorConfig::Gamma { shape, rate } = n.hyperprior {
                if !(shape >= 0.0 && rate >= 0.0) {
                    return bad("gamma hyperprior needs shape >= 0 and rate >= 0".into());
                }
            }
        }
        if let Some(h) = &self.hier {
            h.config.validate().map_err(inv)?;
            ard_prior(&self.network, h.ard.as_deref(), self.flat_box()).map_err(inv)?;
        }
        if let Some(l) = &self.laplace {
            for (name, _) in &l.start {
                self.network.index_of(name).map_err(inv)?;
            }
        }
        let p = &self.predict;
        if p.n_draws == 0 || p.grid.n < 2 || !(p.grid.lo < p.grid.hi) {
            return bad("predict needs n_draws > 0 and a grid with n >= 2, lo < hi".into());
        }
        if p.levels.is_empty() || p.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return bad("predict.levels must lie in (0, 1)".into());
        }
        let s = &self.surface;
        if s.n < 2 || !(s.lo < s.hi) {
            return bad("surface needs n >= 2 and lo < hi".into());
        }
        for (a, b) in &s.pairs {
            self.network.index_of(a).map_err(inv)?;
            self.network.index_of(b).map_err(inv)?;
        }
        Ok(())
    }

    /// Named start vector for the Laplace mode search (unlisted parameters at zero).
    pub fn laplace_start(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.network.n_params()];
        if let Some(l) = &self.laplace {
            for (name, v) in &l.start {
                if let Ok(i) = self.network.index_of(name) {
                    x[i] = *v;
                }
            }
        }
        x
    }
}

/// A complete config for `method` with every block at its default.
pub fn template(method: Method) -> RunConfig {
    let mut c = RunConfig {
        schema_version: SCHEMA_VERSION,
        seed: 1,
        output_dir: PathBuf::from("out"),
        data: DataSource::Generate(GenerateConfig::default()),
        network: NetworkSpec::shallow_tanh(3),
        method,
        standard: None,
        nsbl: None,
        hier: None,
        laplace: None,
        predict: PredictConfig::default(),
        surface: SurfaceConfig::default(),
    };
    match method {
        Method::Standard => c.standard = Some(StandardConfig::boxcar_study()),
        Method::Nsbl => {
            c.standard = Some(StandardConfig::boxcar_study());
            c.nsbl = Some(NsblConfig::boxcar_study());
        }
        Method::Hier => c.hier = Some(HierBlock::default()),
        Method::Laplace => c.laplace = Some(LaplaceStudyConfig::default()),
        Method::LaplaceNsbl => {
            c.laplace = Some(LaplaceStudyConfig::default());
            c.nsbl = Some(NsblConfig::default());
        }
    }
    c
}
