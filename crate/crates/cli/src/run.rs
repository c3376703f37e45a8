//! Executes a [`RunConfig`] end to end and persists every intermediate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sbnn::boxcar::{boxcar_truth, generate_boxcar_dataset, TRUTH_FN_ID};
use sbnn::gmm::{fit_gmm, CandidateReport};
use sbnn::hier::{joint_names, run_hierarchical};
use sbnn::laplace::{laplace_kernel, laplace_report, LaplaceFit, LaplaceRow};
use sbnn::nsbl::{sample_posterior, NsblReport, NsblResult};
use sbnn::pipeline::{ard_prior, laplace_nsbl, laplace_study, nsbl_from_gmm, standard_bayes};
use sbnn::predict::{band_width, extrapolation_metrics, linspace, push_forward_with_levels, thin_rows, PredictiveFan};
use sbnn::tmcmc::{StageInfo, TmcmcResult};
use sbnn::{Dataset, Gmm, PriorSpec};

use crate::config::{ConfigError, DataSource, Method, RunConfig};
use crate::io::{self, IoResult};
use crate::manifest::{RunManifest, Status};
use crate::surface;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage `{stage}` failed: {message}")]
    Pipeline { stage: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Pipeline { .. } => 3,
        }
    }
}

fn fail(stage: &str, e: impl std::fmt::Display) -> RunError {
    RunError::Pipeline { stage: stage.into(), message: e.to_string() }
}

/// TMCMC bookkeeping persisted next to the samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TmcmcSummary {
    pub log_evidence: f64,
    pub n_stages: usize,
    pub completed: bool,
    pub stages: Vec<StageInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmFitSummary {
    pub k: usize,
    pub bic: f64,
    pub log_likelihood: f64,
    pub candidates: Vec<CandidateReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub noise_var: f64,
    pub seed: Option<u64>,
    pub truth_fn_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplaceArtifact {
    pub phi_map: Vec<f64>,
    pub converged: bool,
    pub regularized: bool,
    pub log_target_at_map: f64,
    pub log_normalizer: f64,
    pub mode_seed: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub rows: Vec<LaplaceRow>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Load or generate the dataset described by `cfg.data`.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, DatasetMeta), RunError> {
    match &cfg.data {
        DataSource::Generate(g) => {
            let d = generate_boxcar_dataset(g.n, g.x_lo, g.x_hi, g.noise_var, cfg.seed).map_err(|e| fail("data", e))?;
            let meta = DatasetMeta {
                n: g.n,
                x_lo: g.x_lo,
                x_hi: g.x_hi,
                noise_var: g.noise_var,
                seed: Some(cfg.seed),
                truth_fn_id: Some(TRUTH_FN_ID.into()),
            };
            Ok((d, meta))
        }
        DataSource::Load(l) => {
            let (x, y) = io::read_dataset(&l.path)
                .map_err(|e| ConfigError::Invalid(format!("data.load {}: {e}", l.path.display())))?;
            let d = Dataset::new(x, y, l.noise_var, None).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let lo = d.x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = d.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let meta = DatasetMeta { n: d.len(), x_lo: lo, x_hi: hi, noise_var: l.noise_var, seed: None, truth_fn_id: None };
            Ok((d, meta))
        }
    }
}

pub fn write_dataset(dir: &Path, data: &Dataset, meta: &DatasetMeta) -> IoResult<()> {
    io::write_dataset(&dir.join("dataset.csv"), &data.x, &data.y)?;
    io::write_json(&dir.join("dataset.json"), meta)
}

struct Runner {
    cfg: RunConfig,
    dir: PathBuf,
    manifest: RunManifest,
    /// Manifest of an earlier run with the same config hash, when resuming.
    previous: Option<RunManifest>,
    data: Dataset,
    meta: DatasetMeta,
}

impl Runner {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn record(&mut self, key: &str, rel: &str) {
        self.manifest.artifacts.insert(key.into(), rel.into());
    }

    fn summary(&mut self, key: &str, v: Value) {
        self.manifest.summary.insert(key.into(), v);
    }

    /// A previously persisted artifact usable for resuming.
    fn reusable(&self, key: &str) -> Option<PathBuf> {
        let prev = self.previous.as_ref()?;
        let rel = prev.artifacts.get(key)?;
        let p = self.dir.join(rel);
        p.exists().then_some(p)
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, RunError>) -> Result<T, RunError> {
        let t = Instant::now();
        let out = f(self);
        self.manifest.timings.insert(stage.into(), t.elapsed().as_secs_f64());
        if out.is_err() {
            self.manifest.failed_stage = Some(stage.into());
        }
        out
    }

    fn names(&self) -> Vec<String> {
        self.cfg.network.param_names()
    }

    fn standard_stage(&mut self) -> Result<(DMatrix<f64>, Vec<f64>), RunError> {
        let names = self.names();
        if let (Some(sp), Some(tp)) = (self.reusable("samples"), self.reusable("tmcmc")) {
            let (m, ll) = io::read_samples(&sp, &names).map_err(|e| fail("standard", e))?;
            let ts: TmcmcSummary = io::read_json(&tp).map_err(|e| fail("standard", e))?;
            if let (Some(ll), true) = (ll, ts.completed) {
                log::info!("resuming from persisted TMCMC samples");
                self.finish_tmcmc(&ts);
                return Ok((m, ll));
            }
        }
        let block = self.cfg.standard.clone().expect("validated");
        let res = match standard_bayes(&self.data, &self.cfg.network, &block) {
            Ok(r) => r,
            Err(sbnn::Error::MaxStagesExceeded { partial, beta, max_stages }) => {
                let _ = self.persist_tmcmc(&partial, &names, false);
                return Err(fail(
                    "standard",
                    format!("tmcmc stopped at beta = {beta} after {max_stages} stages; partial samples kept"),
                ));
            }
            Err(e) => return Err(fail("standard", e)),
        };
        self.persist_tmcmc(&res, &names, true).map_err(|e| fail("standard", e))?;
        Ok((res.samples, res.loglikes))
    }

    fn persist_tmcmc(&mut self, res: &TmcmcResult, names: &[String], completed: bool) -> IoResult<()> {
        io::write_samples(&self.path("samples.csv"), names, &res.samples, Some(&res.loglikes))?;
        self.record("samples", "samples.csv");
        io::write_jsonl(&self.path("tmcmc_stages.jsonl"), &res.stages)?;
        self.record("tmcmc_stages", "tmcmc_stages.jsonl");
        let ts = TmcmcSummary {
            log_evidence: res.log_evidence,
            n_stages: res.stages.len() - 1,
            completed,
            stages: res.stages.clone(),
        };
        io::write_json(&self.path("tmcmc.json"), &ts)?;
        self.record("tmcmc", "tmcmc.json");
        self.finish_tmcmc(&ts);
        Ok(())
    }

    fn finish_tmcmc(&mut self, ts: &TmcmcSummary) {
        self.record("samples", "samples.csv");
        self.record("tmcmc_stages", "tmcmc_stages.jsonl");
        self.record("tmcmc", "tmcmc.json");
        self.summary("tmcmc_log_evidence", json!(ts.log_evidence));
        self.summary("tmcmc_stages", json!(ts.n_stages));
    }

    fn gmm_stage(&mut self, samples: &DMatrix<f64>) -> Result<Gmm, RunError> {
        if let (Some(gp), Some(fp)) = (self.reusable("gmm"), self.reusable("gmm_fit")) {
            let g: Gmm = io::read_json(&gp).map_err(|e| fail("gmm", e))?;
            let fs: GmmFitSummary = io::read_json(&fp).map_err(|e| fail("gmm", e))?;
            log::info!("resuming from persisted mixture fit");
            self.finish_gmm(&fs);
            return Ok(g);
        }
        let block = self.cfg.nsbl.clone().expect("validated");
        let fit = fit_gmm(samples, &block.gmm).map_err(|e| fail("gmm", e))?;
        let fs = GmmFitSummary {
            k: fit.k,
            bic: fit.bic,
            log_likelihood: fit.log_likelihood,
            candidates: fit.candidates.clone(),
        };
        io::write_json(&self.path("gmm.json"), &fit.gmm).map_err(|e| fail("gmm", e))?;
        io::write_json(&self.path("gmm_fit.json"), &fs).map_err(|e| fail("gmm", e))?;
        self.finish_gmm(&fs);
        Ok(fit.gmm)
    }

    fn finish_gmm(&mut self, fs: &GmmFitSummary) {
        self.record("gmm", "gmm.json");
        self.record("gmm_fit", "gmm_fit.json");
        self.summary("gmm_k", json!(fs.k));
        self.summary("gmm_bic", json!(fs.bic));
    }

    /// Persist an NSBL result (report, table, trace, posterior mixture and draws) and
    /// return the posterior draws.
    fn persist_nsbl(&mut self, g: &Gmm, prior: &PriorSpec, result: &NsblResult) -> Result<DMatrix<f64>, RunError> {
        let names = self.names();
        let ard_names: Vec<String> = prior.ard_set.iter().map(|&i| names[i].clone()).collect();
        fn e<E: std::fmt::Display>(x: E) -> RunError {
            fail("nsbl", x)
        }
        io::write_json(&self.path("posterior_gmm.json"), &result.posterior).map_err(e)?;
        self.record("posterior_gmm", "posterior_gmm.json");
        let report = NsblReport::new(result, &ard_names, Some("posterior_gmm.json".into()));
        io::write_json(&self.path("nsbl.json"), &report).map_err(e)?;
        self.record("nsbl", "nsbl.json");
        std::fs::write(self.path("nsbl_table.txt"), report.to_table()).map_err(|x| fail("nsbl", x))?;
        self.record("nsbl_table", "nsbl_table.txt");

        // trace of the dominant run: objective, log alphas and relevance per iterate
        let best = &result.runs[0];
        let mut header = vec!["iteration".to_string(), "objective".to_string()];
        header.extend(ard_names.iter().map(|n| format!("log_alpha[{n}]")));
        header.extend(ard_names.iter().map(|n| format!("gamma[{n}]")));
        let mut rows = Vec::with_capacity(best.path.len());
        for (it, (t, obj)) in best.path.iter().zip(&best.trace).enumerate() {
            let a = sbnn::AlphaVector::with_bounds(t.clone(), result.log_alpha_map.bounds.0, result.log_alpha_map.bounds.1)
                .map_err(e)?;
            let rel = sbnn::nsbl::relevance_indicators(g, &a, prior).map_err(e)?;
            let mut row = vec![it as f64, *obj];
            row.extend(t);
            row.extend(&rel.gamma_rms);
            rows.push(row);
        }
        io::write_table(&self.path("nsbl_trace.csv"), &header, rows.into_iter()).map_err(e)?;
        self.record("nsbl_trace", "nsbl_trace.csv");

        let draws = sample_posterior(&result.posterior, self.cfg.predict.n_draws, self.cfg.seed).map_err(e)?;
        io::write_samples(&self.path("posterior_samples.csv"), &names, &draws, None).map_err(e)?;
        self.record("posterior_samples", "posterior_samples.csv");

        let table: BTreeMap<String, Value> = report
            .parameters
            .iter()
            .map(|r| {
                (
                    r.name.clone(),
                    json!({"log_alpha_map": r.log_alpha_map, "gamma_rms": r.gamma_rms, "classification": r.classification}),
                )
            })
            .collect();
        self.summary("nsbl_objective", json!(result.objective));
        self.summary("nsbl_log_evidence", json!(result.log_evidence));
        self.summary("nsbl_converged", json!(result.converged));
        self.summary("nsbl_distinct_optima", json!(result.distinct_optima.len()));
        self.summary("gamma_table", json!(table));
        Ok(draws)
    }

    fn surfaces(&mut self, g: &Gmm, prior: &PriorSpec, result: &NsblResult) -> Result<(), RunError> {
        let block = self.cfg.nsbl.clone().expect("validated");
        let hp = block.hyperprior.build(prior.n_ard());
        let pairs = surface::resolve_pairs(&self.cfg.network, prior, &self.cfg.surface.pairs);
        let emitted = surface::emit_all(&self.dir, g, prior, &hp, &result.log_alpha_map, &self.cfg.network, &pairs, &self.cfg.surface)
            .map_err(|e| fail("surface", e))?;
        for (key, rel) in emitted {
            self.record(&key, &rel);
        }
        Ok(())
    }

    fn predict_stage(&mut self, samples: &DMatrix<f64>) -> Result<(), RunError> {
        let fan = fan_from_samples(&self.cfg, self.data.noise_var, samples).map_err(|e| fail("predict", e))?;
        let written = write_fan(&self.dir, &fan, &self.cfg, self.meta.truth_fn_id.is_some()).map_err(|e| fail("predict", e))?;
        for (k, v) in written {
            self.record(&k, &v);
        }
        for (k, v) in fan_summary(&fan, &self.meta) {
            self.summary(&k, v);
        }
        Ok(())
    }

    fn laplace_stage(&mut self) -> Result<LaplaceFit, RunError> {
        let block = self.cfg.laplace.clone().expect("validated");
        let start = self.cfg.laplace_start();
        laplace_study(&self.data, &self.cfg.network, &start, &block.laplace).map_err(|e| fail("laplace", e))
    }

    fn persist_laplace(&mut self, fit: &LaplaceFit, sparse: Option<(&NsblResult, &[usize])>) -> Result<(), RunError> {
        let names = self.names();
        let rows = laplace_report(fit, &names, sparse);
        let art = LaplaceArtifact {
            phi_map: fit.phi_map.clone(),
            converged: fit.converged,
            regularized: fit.regularized,
            log_target_at_map: fit.log_target_at_map,
            log_normalizer: fit.log_normalizer(),
            mode_seed: fit.mode_seed.clone(),
            hessian: rows_of(&fit.hessian),
            sigma: rows_of(&fit.sigma),
            rows: rows.clone(),
        };
        io::write_json(&self.path("laplace.json"), &art).map_err(|e| fail("laplace", e))?;
        self.record("laplace", "laplace.json");
        std::fs::write(self.path("laplace_table.txt"), laplace_table(&rows)).map_err(|e| fail("laplace", e))?;
        self.record("laplace_table", "laplace_table.txt");
        self.summary("laplace_log_target_at_map", json!(fit.log_target_at_map));
        self.summary("laplace_regularized", json!(fit.regularized));
        self.summary(
            "laplace_placeholders",
            json!(rows.iter().filter(|r| r.placeholder).map(|r| r.name.clone()).collect::<Vec<_>>()),
        );
        Ok(())
    }

    fn execute(&mut self) -> Result<(), RunError> {
        let flat_box = self.cfg.flat_box();
        match self.cfg.method {
            Method::Standard => {
                let (samples, _) = self.timed("standard", |r| r.standard_stage())?;
                let draws = thin_rows(&samples, self.cfg.predict.n_draws);
                self.timed("predict", |r| r.predict_stage(&draws))?;
            }
            Method::Nsbl => {
                let (samples, _) = self.timed("standard", |r| r.standard_stage())?;
                let g = self.timed("gmm", |r| r.gmm_stage(&samples))?;
                let block = self.cfg.nsbl.clone().expect("validated");
                let prior = block.prior(&self.cfg.network, flat_box).map_err(|e| fail("nsbl", e))?;
                let (result, draws) = self.timed("nsbl", |r| {
                    let result = nsbl_from_gmm(&g, &prior, &block).map_err(|e| fail("nsbl", e))?;
                    let draws = r.persist_nsbl(&g, &prior, &result)?;
                    Ok((result, draws))
                })?;
                self.timed("surface", |r| r.surfaces(&g, &prior, &result))?;
                self.timed("predict", |r| r.predict_stage(&draws))?;
            }
            Method::Hier => {
                let block = self.cfg.hier.clone().expect("validated");
                let prior = ard_prior(&self.cfg.network, block.ard.as_deref(), flat_box).map_err(|e| fail("hier", e))?;
                let phi = self.timed("hier", |r| {
                    let res = run_hierarchical(&r.data, &r.cfg.network, &prior, &block.config).map_err(|e| fail("hier", e))?;
                    let names = joint_names(&r.cfg.network, &prior, block.config.pinned());
                    let e = |e| fail("hier", e);
                    io::write_samples(&r.path("samples.csv"), &names, &res.tmcmc.samples, Some(&res.tmcmc.loglikes)).map_err(e)?;
                    r.record("samples", "samples.csv");
                    io::write_jsonl(&r.path("tmcmc_stages.jsonl"), &res.tmcmc.stages).map_err(e)?;
                    r.record("tmcmc_stages", "tmcmc_stages.jsonl");
                    let summary = quantile_summary(&names, &res.tmcmc.samples);
                    io::write_json(&r.path("hier_summary.json"), &summary).map_err(e)?;
                    r.record("hier_summary", "hier_summary.json");
                    r.summary("hier_log_evidence", json!(res.tmcmc.log_evidence));
                    r.summary("tmcmc_stages", json!(res.tmcmc.stages.len() - 1));
                    Ok(res.phi_samples())
                })?;
                let draws = thin_rows(&phi, self.cfg.predict.n_draws);
                self.timed("predict", |r| r.predict_stage(&draws))?;
            }
            Method::Laplace => {
                let fit = self.timed("laplace", |r| r.laplace_stage())?;
                self.persist_laplace(&fit, None)?;
            }
            Method::LaplaceNsbl => {
                let fit = self.timed("laplace", |r| r.laplace_stage())?;
                let block = self.cfg.nsbl.clone().expect("validated");
                let prior = block.prior(&self.cfg.network, flat_box).map_err(|e| fail("nsbl", e))?;
                let g = laplace_kernel(&fit).map_err(|e| fail("laplace", e))?;
                io::write_json(&self.path("gmm.json"), &g).map_err(|e| fail("laplace", e))?;
                self.record("gmm", "gmm.json");
                let (result, draws) = self.timed("nsbl", |r| {
                    let result = laplace_nsbl(&fit, &prior, &block).map_err(|e| fail("nsbl", e))?;
                    let draws = r.persist_nsbl(&g, &prior, &result)?;
                    Ok((result, draws))
                })?;
                self.persist_laplace(&fit, Some((&result, &prior.ard_set)))?;
                self.timed("surface", |r| r.surfaces(&g, &prior, &result))?;
                self.timed("predict", |r| r.predict_stage(&draws))?;
            }
        }
        Ok(())
    }
}

/// Posterior predictive fan over the configured grid from parameter draws.
pub fn fan_from_samples(cfg: &RunConfig, noise_var: f64, samples: &DMatrix<f64>) -> sbnn::Result<PredictiveFan> {
    let p = &cfg.predict;
    let grid = linspace(p.grid.lo, p.grid.hi, p.grid.n);
    push_forward_with_levels(&cfg.network, samples, &grid, p.include_noise, noise_var, cfg.seed, &p.levels)
}

fn pct(level: f64) -> String {
    let s = format!("{}", (level * 1000.0).round() / 10.0);
    s.replace('.', "_")
}

/// `fan.csv` (x, mean, band edges, optional truth) and `fan_samples.csv` (long
/// format: draw, x, y).
pub fn write_fan(dir: &Path, fan: &PredictiveFan, cfg: &RunConfig, with_truth: bool) -> IoResult<Vec<(String, String)>> {
    let mut header = vec!["x".to_string(), "mean".to_string()];
    for b in &fan.bands {
        header.push(format!("lo_{}", pct(b.level)));
        header.push(format!("hi_{}", pct(b.level)));
    }
    if with_truth {
        header.push("truth".into());
    }
    let rows = (0..fan.x_grid.len()).map(|c| {
        let x = fan.x_grid[c];
        let mut row = vec![x, fan.mean[c]];
        for b in &fan.bands {
            row.push(b.lo[c]);
            row.push(b.hi[c]);
        }
        if with_truth {
            row.push(boxcar_truth(x));
        }
        row
    });
    io::write_table(&dir.join("fan.csv"), &header, rows)?;
    let curves = fan.samples.nrows().min(cfg.predict.n_curves);
    let rows = (0..curves).flat_map(|r| (0..fan.x_grid.len()).map(move |c| vec![r as f64, fan.x_grid[c], fan.samples[(r, c)]]));
    io::write_table(&dir.join("fan_samples.csv"), &["draw".into(), "x".into(), "y".into()], rows)?;
    Ok(vec![("fan".into(), "fan.csv".into()), ("fan_samples".into(), "fan_samples.csv".into())])
}

/// Inner-region |x| from which the outer band width is measured.
pub const FAR_FIELD: f64 = 3.5;

pub fn fan_summary(fan: &PredictiveFan, meta: &DatasetMeta) -> Vec<(String, Value)> {
    let mut out = vec![(
        "band_width_95_far".to_string(),
        json!(band_width(fan, 0.95, |x| x.abs() >= FAR_FIELD)),
    )];
    if meta.truth_fn_id.is_some() {
        let m = extrapolation_metrics(fan, boxcar_truth, (meta.x_lo, meta.x_hi));
        out.push(("rmse_in".into(), json!(m.rmse_in)));
        out.push(("rmse_out".into(), json!(m.rmse_out)));
        out.push(("band_width_95_out".into(), json!(m.band_width_out)));
    }
    out
}

/// Mean, standard deviation and quantiles of each named column.
pub fn quantile_summary(names: &[String], samples: &DMatrix<f64>) -> BTreeMap<String, Value> {
    let qs = [0.05, 0.25, 0.5, 0.75, 0.95];
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col: Vec<f64> = samples.column(j).iter().copied().collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            col.sort_by(f64::total_cmp);
            let q: Vec<f64> = qs.iter().map(|&q| sbnn::predict::quantile_sorted(&col, q)).collect();
            (
                name.clone(),
                json!({"mean": mean, "sd": var.sqrt(), "q05": q[0], "q25": q[1], "q50": q[2], "q75": q[3], "q95": q[4]}),
            )
        })
        .collect()
}

pub fn laplace_table(rows: &[LaplaceRow]) -> String {
    use std::fmt::Write as _;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "parameter", "phi_map", "sigma_ii", "log_alpha", "gamma_rms", "m_i", "p_ii"
    );
    for r in rows {
        let mark = if r.placeholder { "*" } else { "" };
        let _ = writeln!(
            s,
            "{:<14} {:>10.4} {:>10} {:>10} {:>10} {:>10} {:>10}",
            r.name,
            r.phi_map,
            format!("{:.4}{mark}", r.sigma_ii),
            opt(r.log_alpha_map),
            opt(r.gamma_rms),
            opt(r.m_i),
            opt(r.p_ii)
        );
    }
    if rows.iter().any(|r| r.placeholder) {
        let _ = writeln!(s, "* not identifiable at this mode; unit placeholder variance");
    }
    s
}

/// Run the configured pipeline. With `resume`, intermediates from an earlier run
/// of the same config in the same directory are reused.
pub fn run(cfg: &RunConfig, resume: bool) -> Result<RunManifest, RunError> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)
        .map_err(|e| ConfigError::Invalid(format!("cannot create {}: {e}", dir.display())))?;
    let hash = cfg.hash();
    let previous = if resume {
        RunManifest::load(&dir).filter(|m| m.config_hash == hash)
    } else {
        None
    };
    let (data, meta) = load_data(&cfg)?;
    let mut manifest = RunManifest::new(hash, cfg.seed, cfg.method.as_str());
    io::write_json(&dir.join("config.json"), &cfg).map_err(|e| fail("setup", e))?;
    manifest.artifacts.insert("config".into(), "config.json".into());
    write_dataset(&dir, &data, &meta).map_err(|e| fail("data", e))?;
    manifest.artifacts.insert("dataset".into(), "dataset.csv".into());
    manifest.artifacts.insert("dataset_meta".into(), "dataset.json".into());
    manifest.save(&dir).map_err(|e| fail("setup", e))?;

    let mut runner = Runner { cfg, dir: dir.clone(), manifest, previous, data, meta };
    let outcome = runner.execute();
    let mut manifest = runner.manifest;
    match &outcome {
        Ok(()) => manifest.status = Status::Ok,
        Err(e) => {
            manifest.status = Status::Failed;
            manifest.error = Some(e.to_string());
            // keep only artifacts that made it to disk
            manifest.artifacts.retain(|_, p| dir.join(p.as_str()).exists());
        }
    }
    manifest.save(&dir).map_err(|e| fail("manifest", e))?;
    outcome.map(|()| manifest)
}
