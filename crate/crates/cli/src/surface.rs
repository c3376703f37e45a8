//! Evidence, hyperprior and objective over a grid of two log alphas with the others
//! held at their optimum.

use std::path::Path;

use sbnn::nsbl::{log_evidence, Hyperprior};
use sbnn::{AlphaVector, Gmm, NetworkSpec, PriorSpec};
use serde::{Deserialize, Serialize};

use crate::config::SurfaceConfig;
use crate::io::{self, IoResult};

/// One grid point; `log_alpha_i` indexes the first name of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub log_alpha_i: f64,
    pub log_alpha_j: f64,
    pub log_evidence: f64,
    pub log_hyperprior: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEntry {
    pub pair: (String, String),
    pub path: String,
    /// The fixed point's coordinates for this pair.
    pub map: (f64, f64),
}

pub const INDEX_FILE: &str = "surfaces.json";

/// Positions of `name_i`, `name_j` in the ARD set.
pub fn ard_positions(spec: &NetworkSpec, prior: &PriorSpec, pair: &(String, String)) -> sbnn::Result<(usize, usize)> {
    let pos = |name: &str| -> sbnn::Result<usize> {
        let idx = spec.index_of(name)?;
        prior
            .ard_set
            .iter()
            .position(|&i| i == idx)
            .ok_or_else(|| sbnn::Error::InvalidArgument(format!("`{name}` is not in the ARD set")))
    };
    let (i, j) = (pos(&pair.0)?, pos(&pair.1)?);
    if i == j {
        return Err(sbnn::Error::InvalidArgument("surface pair must name two distinct parameters".into()));
    }
    Ok((i, j))
}

/// Configured pairs, or by default the first two output-layer weights in the ARD set.
pub fn resolve_pairs(spec: &NetworkSpec, prior: &PriorSpec, configured: &[(String, String)]) -> Vec<(String, String)> {
    if !configured.is_empty() {
        return configured.to_vec();
    }
    let last = spec.layer_sizes.len() - 1;
    let names: Vec<String> = spec
        .layout()
        .into_iter()
        .enumerate()
        .filter(|(i, p)| p.layer == last && matches!(p.kind, sbnn::net::ParamKind::Weight) && prior.ard_set.contains(i))
        .map(|(_, p)| p.name)
        .collect();
    if names.len() >= 2 {
        vec![(names[0].clone(), names[1].clone())]
    } else {
        Vec::new()
    }
}

/// Row-major grid: `log_alpha_i` varies slowest.
pub fn surface_grid(
    g: &Gmm,
    prior: &PriorSpec,
    hp: &Hyperprior,
    fixed: &AlphaVector,
    (i, j): (usize, usize),
    cfg: &SurfaceConfig,
) -> sbnn::Result<Vec<SurfacePoint>> {
    let axis = sbnn::predict::linspace(cfg.lo, cfg.hi, cfg.n);
    let (blo, bhi) = fixed.bounds;
    let mut out = Vec::with_capacity(cfg.n * cfg.n);
    for &ti in &axis {
        for &tj in &axis {
            let mut t = fixed.log_alpha.clone();
            t[i] = ti;
            t[j] = tj;
            let a = AlphaVector::with_bounds(t, blo.min(cfg.lo), bhi.max(cfg.hi))?;
            let le = log_evidence(g, &a, prior)?;
            let lh = hp.log_density(&a.log_alpha);
            out.push(SurfacePoint { log_alpha_i: ti, log_alpha_j: tj, log_evidence: le, log_hyperprior: lh, objective: le + lh });
        }
    }
    Ok(out)
}

pub fn write_surface(path: &Path, points: &[SurfacePoint]) -> IoResult<()> {
    let header: Vec<String> = ["log_alpha_i", "log_alpha_j", "log_evidence", "log_hyperprior", "objective"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = points
        .iter()
        .map(|p| vec![p.log_alpha_i, p.log_alpha_j, p.log_evidence, p.log_hyperprior, p.objective]);
    io::write_table(path, &header, rows)
}

/// Compute and write every pair; returns `(manifest key, relative path)` entries,
/// including the `surfaces.json` index.
#[allow(clippy::too_many_arguments)]
pub fn emit_all(
    dir: &Path,
    g: &Gmm,
    prior: &PriorSpec,
    hp: &Hyperprior,
    fixed: &AlphaVector,
    spec: &NetworkSpec,
    pairs: &[(String, String)],
    cfg: &SurfaceConfig,
) -> IoResult<Vec<(String, String)>> {
    let mut entries = Vec::new();
    let mut keys = Vec::new();
    for pair in pairs {
        let (i, j) = ard_positions(spec, prior, pair)?;
        let pts = surface_grid(g, prior, hp, fixed, (i, j), cfg)?;
        let rel = format!("surface_{}_{}.csv", prior.ard_set[i], prior.ard_set[j]);
        write_surface(&dir.join(&rel), &pts)?;
        keys.push((format!("surface:{}:{}", pair.0, pair.1), rel.clone()));
        entries.push(SurfaceEntry {
            pair: pair.clone(),
            path: rel,
            map: (fixed.log_alpha[i], fixed.log_alpha[j]),
        });
    }
    if !entries.is_empty() {
        io::write_json(&dir.join(INDEX_FILE), &entries)?;
        keys.push(("surfaces".into(), INDEX_FILE.into()));
    }
    Ok(keys)
}
