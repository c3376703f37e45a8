use std::path::{Path, PathBuf};
use std::process::Command;

use sbnn_cli::config::{template, ConfigError, DataSource, Method, RunConfig};
use sbnn_cli::io::read_table;
use sbnn_cli::manifest::{RunManifest, Status};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbnn"))
}

/// Small 1-2-1 config that runs in well under a second per stage.
fn small(method: Method, out: &Path) -> RunConfig {
    let mut c = template(method);
    c.seed = 11;
    c.output_dir = out.to_path_buf();
    c.network = sbnn::NetworkSpec::shallow_tanh(2);
    c.predict.n_draws = 200;
    c.predict.grid.n = 41;
    c.predict.n_curves = 5;
    c.surface.n = 21;
    if let Some(s) = c.standard.as_mut() {
        s.tmcmc.n_samples = 1500;
        s.tmcmc.mh_steps = 2;
        s.tmcmc.adapt_scale = true;
    }
    if let Some(n) = c.nsbl.as_mut() {
        n.gmm.k_candidates = vec![1, 2, 3, 4];
        n.gmm.n_restarts = 1;
        n.trust_region.n_starts = 4;
    }
    if let Some(h) = c.hier.as_mut() {
        h.config.tmcmc.n_samples = 800;
    }
    if let Some(l) = c.laplace.as_mut() {
        // a mode of the 1-2-1 network near the boxcar truth
        l.start = vec![
            ("W^[1]_{11}".into(), 5.0),
            ("W^[1]_{21}".into(), -5.0),
            ("b^[1]_1".into(), 5.0),
            ("b^[1]_2".into(), 5.0),
            ("W^[2]_{11}".into(), 2.0),
            ("W^[2]_{12}".into(), 2.0),
        ];
    }
    c
}

fn write_config(dir: &Path, c: &RunConfig) -> PathBuf {
    let p = dir.join("config.in.json");
    std::fs::write(&p, c.to_json()).unwrap();
    p
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_config(c: &RunConfig, tmp: &Path, extra: &[&str]) -> (i32, String) {
    let p = write_config(tmp, c);
    let mut args = vec!["run", "--config", p.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, _, err) = run_cli(&args);
    (code, err)
}

fn manifest_without_timings(dir: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn config_round_trip_is_identity() {
    for m in [Method::Standard, Method::Nsbl, Method::Hier, Method::Laplace, Method::LaplaceNsbl] {
        let c = small(m, Path::new("x"));
        let text = c.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
        back.validate().unwrap();
    }
}

#[test]
fn config_validation_rejects_bad_input() {
    let mut c = template(Method::Nsbl);
    c.standard = None;
    assert!(matches!(c.validate(), Err(ConfigError::Invalid(m)) if m.contains("standard")));

    let mut c = template(Method::Nsbl);
    c.nsbl.as_mut().unwrap().ard = Some(vec!["W^[9]_{99}".into()]);
    assert!(c.validate().is_err());

    let mut c = template(Method::Standard);
    c.schema_version = 99;
    assert!(c.validate().is_err());

    let mut c = template(Method::Standard);
    c.predict.levels = vec![1.5];
    assert!(c.validate().is_err());

    // exactly one data source
    let t = template(Method::Standard).to_json();
    let mut v: Value = serde_json::from_str(&t).unwrap();
    v["data"] = serde_json::json!({"generate": {}, "load": {"path": "d.csv", "noise_var": 0.5}});
    assert!(RunConfig::from_json(&v.to_string()).is_err());
    v["data"] = serde_json::json!({"generate": {}});
    let c = RunConfig::from_json(&v.to_string()).unwrap();
    assert!(matches!(c.data, DataSource::Generate(ref g) if g.n == 50));
}

#[test]
fn config_hash_ignores_output_dir_but_not_seed() {
    let a = small(Method::Nsbl, Path::new("a"));
    let b = small(Method::Nsbl, Path::new("b"));
    assert_eq!(a.hash(), b.hash());
    let mut c = a.clone();
    c.seed += 1;
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn nsbl_run_writes_complete_manifest_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d1 = tmp.path().join("r1");
    let d2 = tmp.path().join("r2");
    let (code, err) = run_config(&small(Method::Nsbl, &d1), tmp.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let (code, err) = run_config(&small(Method::Nsbl, &d2), tmp.path(), &[]);
    assert_eq!(code, 0, "{err}");

    let m = RunManifest::load(&d1).unwrap();
    assert_eq!(m.status, Status::Ok);
    assert!(m.missing_artifacts(&d1).is_empty());
    for key in [
        "config", "dataset", "samples", "tmcmc", "tmcmc_stages", "gmm", "nsbl", "nsbl_table", "nsbl_trace",
        "posterior_gmm", "posterior_samples", "fan", "fan_samples", "surfaces",
    ] {
        assert!(m.artifacts.contains_key(key), "missing {key}");
    }
    // the report uses exactly the three-way classification schema
    let table = m.summary["gamma_table"].as_object().unwrap();
    assert_eq!(table.len(), 7);
    for row in table.values() {
        let class = row["classification"].as_str().unwrap();
        assert!(["relevant", "irrelevant", "inconclusive"].contains(&class));
    }
    assert_eq!(manifest_without_timings(&d1), manifest_without_timings(&d2));
    for f in ["nsbl.json", "samples.csv", "fan.csv", "posterior_samples.csv"] {
        assert_eq!(std::fs::read(d1.join(f)).unwrap(), std::fs::read(d2.join(f)).unwrap(), "{f}");
    }

    // samples carry named columns plus the log-likelihood
    let (header, rows) = read_table(&d1.join("samples.csv")).unwrap();
    assert_eq!(header.len(), 8);
    assert_eq!(header.last().unwrap(), "loglike");
    assert_eq!(rows.len(), 1500);
    let (fan_header, fan_rows) = read_table(&d1.join("fan.csv")).unwrap();
    assert_eq!(fan_header, ["x", "mean", "lo_50", "hi_50", "lo_95", "hi_95", "truth"]);
    assert_eq!(fan_rows.len(), 41);
    for r in &fan_rows {
        assert!(r[4] <= r[2] && r[2] <= r[3] && r[3] <= r[5]);
    }

    // report and predict work on the finished run
    let (code, out, err) = run_cli(&["report", "--output", d1.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("gamma_rms"));
    let (code, out, err) = run_cli(&["predict", "--output", d1.to_str().unwrap(), "--include-noise"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("rmse_out"));
}

#[test]
fn resume_reproduces_a_fresh_run() {
    let tmp = tempfile::tempdir().unwrap();
    let fresh = tmp.path().join("fresh");
    let c = small(Method::Nsbl, &fresh);
    assert_eq!(run_config(&c, tmp.path(), &[]).0, 0);
    let before = manifest_without_timings(&fresh);
    let nsbl_before = std::fs::read(fresh.join("nsbl.json")).unwrap();
    let post_before = std::fs::read(fresh.join("posterior_samples.csv")).unwrap();
    let samples_before = std::fs::read(fresh.join("samples.csv")).unwrap();

    // drop the downstream artifacts and resume from samples + mixture
    for f in ["nsbl.json", "posterior_samples.csv", "fan.csv"] {
        std::fs::remove_file(fresh.join(f)).unwrap();
    }
    // a resumed run must not resample
    let samples_mtime = std::fs::metadata(fresh.join("samples.csv")).unwrap().modified().unwrap();
    assert_eq!(run_config(&c, tmp.path(), &["--resume"]).0, 0);
    assert_eq!(std::fs::metadata(fresh.join("samples.csv")).unwrap().modified().unwrap(), samples_mtime);
    assert_eq!(std::fs::read(fresh.join("nsbl.json")).unwrap(), nsbl_before);
    assert_eq!(std::fs::read(fresh.join("posterior_samples.csv")).unwrap(), post_before);
    assert_eq!(manifest_without_timings(&fresh), before);

    // a changed config does not reuse the old intermediates
    let mut c2 = c.clone();
    c2.seed = 12;
    assert_eq!(run_config(&c2, tmp.path(), &["--resume"]).0, 0);
    assert_ne!(std::fs::read(fresh.join("samples.csv")).unwrap(), samples_before);
    assert_ne!(RunManifest::load(&fresh).unwrap().config_hash, before["config_hash"].as_str().unwrap());
}

#[test]
fn exit_codes_distinguish_config_errors_from_pipeline_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run_cli(&["run", "--config", bad.to_str().unwrap()]).0, 2);
    assert_eq!(run_cli(&["run", "--config", tmp.path().join("absent.json").to_str().unwrap()]).0, 2);
    assert_eq!(run_cli(&["run"]).0, 2);
    assert_eq!(run_cli(&["report", "--output", tmp.path().join("nothing").to_str().unwrap()]).0, 2);

    let mut c = small(Method::Nsbl, &tmp.path().join("x"));
    c.nsbl.as_mut().unwrap().ard = Some(vec!["nope".into()]);
    assert_eq!(run_config(&c, tmp.path(), &[]).0, 2);

    // a TMCMC that cannot reach beta = 1 is a pipeline failure with partial artifacts
    let out = tmp.path().join("partial");
    let mut c = small(Method::Standard, &out);
    c.standard.as_mut().unwrap().tmcmc.max_stages = 2;
    let (code, err) = run_config(&c, tmp.path(), &[]);
    assert_eq!(code, 3, "{err}");
    let m = RunManifest::load(&out).unwrap();
    assert_eq!(m.status, Status::Failed);
    assert_eq!(m.failed_stage.as_deref(), Some("standard"));
    assert!(m.error.as_deref().unwrap().contains("beta"));
    assert!(out.join("samples.csv").exists());
    assert!(m.missing_artifacts(&out).is_empty());
}

#[test]
fn gen_data_matches_the_run_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let c = small(Method::Standard, &out);
    let p = write_config(tmp.path(), &c);
    let (code, _, err) = run_cli(&["gen-data", "--config", p.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(code, 0, "{err}");
    let (_, rows) = read_table(&out.join("dataset.csv")).unwrap();
    let d = sbnn::boxcar::generate_boxcar_dataset(50, -3.0, 3.0, 0.5, 11).unwrap();
    assert_eq!(rows.len(), 50);
    for (r, (x, y)) in rows.iter().zip(d.x.iter().zip(&d.y)) {
        assert_eq!((r[0], r[1]), (*x, *y));
    }
    // a loaded copy of the same data runs
    let mut l = small(Method::Laplace, &tmp.path().join("l"));
    l.data = DataSource::Load(sbnn_cli::config::LoadConfig { path: out.join("dataset.csv"), noise_var: 0.5 });
    let (code, err) = run_config(&l, tmp.path(), &[]);
    assert_eq!(code, 0, "{err}");
    assert!(tmp.path().join("l/laplace_table.txt").exists());
}

fn surface_rows(path: &Path) -> Vec<Vec<f64>> {
    let (header, rows) = read_table(path).unwrap();
    assert_eq!(header, ["log_alpha_i", "log_alpha_j", "log_evidence", "log_hyperprior", "objective"]);
    rows
}

#[test]
fn surfaces_match_evidence_and_optimizer() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let mut c = small(Method::LaplaceNsbl, &out);
    c.surface.n = 41;
    assert_eq!(run_config(&c, tmp.path(), &[]).0, 0);
    let idx: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(out.join("surfaces.json")).unwrap()).unwrap();
    assert_eq!(idx.len(), 1);
    let rows = surface_rows(&out.join(idx[0]["path"].as_str().unwrap()));
    assert_eq!(rows.len(), 41 * 41);
    // Jeffreys: objective is the evidence
    for r in &rows {
        assert_eq!(r[3], 0.0);
        assert_eq!(r[4], r[2]);
    }
    // grid argmax within one cell of the optimizer's coordinates
    let best = rows.iter().max_by(|a, b| a[4].total_cmp(&b[4])).unwrap();
    let map = (idx[0]["map"][0].as_f64().unwrap(), idx[0]["map"][1].as_f64().unwrap());
    let cell = 24.0 / 40.0;
    assert!((best[0] - map.0).abs() <= cell + 1e-9 && (best[1] - map.1).abs() <= cell + 1e-9, "{best:?} vs {map:?}");

    // a weak Gamma hyperprior is flat over most of the range and falls off at the top
    let (code, stdout, err) = run_cli(&[
        "surface",
        "--output",
        out.to_str().unwrap(),
        "--pair",
        "W^[2]_{11},W^[2]_{12}",
        "--gamma",
        "0.0001,0.0001",
    ]);
    assert_eq!(code, 0, "{err}");
    let path = PathBuf::from(stdout.lines().next().unwrap());
    let rows = surface_rows(&path);
    let along_i: Vec<f64> = rows.iter().filter(|r| r[1] == -12.0).map(|r| r[3]).collect();
    let n = along_i.len();
    let interior_spread = along_i[..n / 2].iter().cloned().fold(f64::MIN, f64::max)
        - along_i[..n / 2].iter().cloned().fold(f64::MAX, f64::min);
    assert!(interior_spread < 0.01, "{interior_spread}");
    assert!(along_i[n - 1] < along_i[n - 4] && along_i[n - 4] < along_i[n / 2] - 1.0);
    for r in &rows {
        assert!((r[4] - (r[2] + r[3])).abs() <= 1e-12 * r[4].abs().max(1.0));
    }

    // unknown names are config errors
    let (code, _, _) = run_cli(&["surface", "--output", out.to_str().unwrap(), "--pair", "a,b"]);
    assert_eq!(code, 2);
}

#[test]
fn standard_and_hier_runs_emit_fans() {
    let tmp = tempfile::tempdir().unwrap();
    for m in [Method::Standard, Method::Hier] {
        let out = tmp.path().join(m.as_str());
        let (code, err) = run_config(&small(m, &out), tmp.path(), &["--threads", "1"]);
        assert_eq!(code, 0, "{m:?}: {err}");
        let man = RunManifest::load(&out).unwrap();
        assert!(man.summary.contains_key("rmse_out"));
        assert!(out.join("fan.csv").exists());
    }
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("hier/hier_summary.json")).unwrap()).unwrap();
    let q = &summary["log_alpha[W^[2]_{11}]"];
    assert!(q["q05"].as_f64().unwrap() <= q["q50"].as_f64().unwrap());
    assert!(q["q50"].as_f64().unwrap() <= q["q95"].as_f64().unwrap());
}

#[test]
fn template_subcommand_prints_valid_configs() {
    for m in ["standard", "nsbl", "hier", "laplace", "laplace-nsbl"] {
        let (code, out, err) = run_cli(&["template", "--method", m]);
        assert_eq!(code, 0, "{err}");
        RunConfig::from_json(&out).unwrap().validate().unwrap();
    }
    assert_eq!(run_cli(&["template", "--method", "bogus"]).0, 2);
}
