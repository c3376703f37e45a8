use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sbnn_cli::config::{self, ConfigError, Method, RunConfig};
use sbnn_cli::manifest::{self, RunManifest};
use sbnn_cli::run::{self, RunError};
use sbnn_cli::{io, surface};

#[derive(Parser)]
#[command(name = "sbnn", version, about = "Sparse Bayesian neural network experiments")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config; names the run directory for
    /// `surface`, `report` and `predict`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write dataset.csv / dataset.json for the configured data source.
    GenData,
    /// Run the configured pipeline and write all artifacts plus manifest.json.
    Run {
        /// Reuse persisted intermediates of an earlier run with the same config.
        #[arg(long)]
        resume: bool,
    },
    /// Evidence / hyperprior / objective grids over pairs of log alphas.
    Surface {
        /// Parameter pair as `name_i,name_j`; repeatable.
        #[arg(long = "pair", value_parser = parse_pair)]
        pairs: Vec<(String, String)>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
        /// Use a Gamma hyperprior `shape,rate` instead of the run's.
        #[arg(long, value_parser = parse_gamma)]
        gamma: Option<(f64, f64)>,
    },
    /// Print the result tables and summary of a finished run.
    Report,
    /// Recompute the predictive fan of a finished run.
    Predict {
        #[arg(long)]
        n_draws: Option<usize>,
        #[arg(long)]
        include_noise: bool,
    },
    /// Print a default config for a method.
    Template {
        #[arg(long, value_parser = parse_method)]
        method: Method,
    },
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    // names contain commas only inside braces, e.g. W^[2]_{11}
    let mut depth = 0i32;
    for (k, ch) in s.char_indices() {
        match ch {
            '{' | '[' => depth += 1,
            '}' | ']' => depth -= 1,
            ',' if depth == 0 => return Ok((s[..k].trim().to_string(), s[k + 1..].trim().to_string())),
            _ => {}
        }
    }
    Err(format!("expected `name_i,name_j`, got `{s}`"))
}

fn parse_gamma(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `shape,rate`")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown method `{s}`"))
}

enum Failure {
    Config(String),
    Pipeline(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e.exit_code() {
            2 => Failure::Config(e.to_string()),
            _ => Failure::Pipeline(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

/// Run directory for post-processing commands plus its resolved config.
fn finished_run(cli: &Cli) -> Result<(PathBuf, RunConfig), Failure> {
    let dir = match (&cli.output, &cli.config) {
        (Some(d), _) => d.clone(),
        (None, Some(_)) => load_config(cli)?.output_dir,
        (None, None) => return Err(Failure::Config("--output or --config is required".into())),
    };
    let cfg = RunConfig::from_path(&dir.join("config.json"))?;
    Ok((dir, cfg))
}

fn need(dir: &Path, rel: &str) -> Result<PathBuf, Failure> {
    let p = dir.join(rel);
    if p.exists() {
        Ok(p)
    } else {
        Err(Failure::Config(format!("{} not found; run the pipeline first", p.display())))
    }
}

fn pipe<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Pipeline(e.to_string())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Template { method } => {
            println!("{}", config::template(*method).to_json());
        }
        Command::GenData => {
            let cfg = load_config(cli)?;
            cfg.validate()?;
            let (data, meta) = run::load_data(&cfg)?;
            std::fs::create_dir_all(&cfg.output_dir)
                .map_err(|e| Failure::Config(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
            run::write_dataset(&cfg.output_dir, &data, &meta).map_err(pipe)?;
            println!("{}", cfg.output_dir.join("dataset.csv").display());
        }
        Command::Run { resume } => {
            let cfg = load_config(cli)?;
            let m = run::run(&cfg, *resume)?;
            println!("{}", cfg.output_dir.join(manifest::MANIFEST_FILE).display());
            log::info!("finished {} run, status {:?}", m.method, m.status);
        }
        Command::Surface { pairs, n, lo, hi, gamma } => {
            let (dir, cfg) = finished_run(cli)?;
            let nsbl_cfg = cfg.nsbl.clone().ok_or_else(|| Failure::Config("run has no nsbl block".into()))?;
            let g: sbnn::Gmm = io::read_json(&need(&dir, "gmm.json")?).map_err(pipe)?;
            let report: sbnn::nsbl::NsblReport = io::read_json(&need(&dir, "nsbl.json")?).map_err(pipe)?;
            let prior = nsbl_cfg.prior(&cfg.network, cfg.flat_box()).map_err(|e| Failure::Config(e.to_string()))?;
            let t: Vec<f64> = report.parameters.iter().map(|r| r.log_alpha_map).collect();
            let (blo, bhi) = nsbl_cfg.trust_region.bounds;
            let fixed = sbnn::AlphaVector::with_bounds(t, blo, bhi).map_err(pipe)?;
            let hp = match gamma {
                Some((s, r)) => sbnn::Hyperprior::gamma_uniform(prior.n_ard(), *s, *r),
                None => nsbl_cfg.hyperprior.build(prior.n_ard()),
            };
            hp.validate(prior.n_ard()).map_err(|e| Failure::Config(e.to_string()))?;
            let mut scfg = cfg.surface.clone();
            if let Some(v) = n {
                scfg.n = *v;
            }
            if let Some(v) = lo {
                scfg.lo = *v;
            }
            if let Some(v) = hi {
                scfg.hi = *v;
            }
            if scfg.n < 2 || !(scfg.lo < scfg.hi) {
                return Err(Failure::Config("surface grid needs n >= 2 and lo < hi".into()));
            }
            let pairs = surface::resolve_pairs(&cfg.network, &prior, if pairs.is_empty() { &scfg.pairs } else { pairs });
            for p in &pairs {
                surface::ard_positions(&cfg.network, &prior, p).map_err(|e| Failure::Config(e.to_string()))?;
            }
            let written = surface::emit_all(&dir, &g, &prior, &hp, &fixed, &cfg.network, &pairs, &scfg).map_err(pipe)?;
            if let Some(mut m) = RunManifest::load(&dir) {
                for (k, v) in &written {
                    m.artifacts.insert(k.clone(), v.clone());
                }
                m.save(&dir).map_err(pipe)?;
            }
            for (_, v) in written {
                println!("{}", dir.join(v).display());
            }
        }
        Command::Report => {
            let (dir, _) = finished_run(cli)?;
            let m = RunManifest::load(&dir)
                .ok_or_else(|| Failure::Config(format!("no readable manifest in {}", dir.display())))?;
            println!("method {}  status {:?}  seed {}  config {}", m.method, m.status, m.seed, &m.config_hash[..12]);
            if let Some(e) = &m.error {
                println!("error: {e}");
            }
            for t in ["nsbl_table.txt", "laplace_table.txt"] {
                if let Ok(s) = std::fs::read_to_string(dir.join(t)) {
                    println!("\n{s}");
                }
            }
            for (k, v) in &m.summary {
                if k != "gamma_table" {
                    println!("{k:<24} {v}");
                }
            }
            let missing = m.missing_artifacts(&dir);
            if !missing.is_empty() {
                return Err(Failure::Config(format!("missing artifacts: {}", missing.join(", "))));
            }
        }
        Command::Predict { n_draws, include_noise } => {
            let (dir, mut cfg) = finished_run(cli)?;
            if let Some(n) = n_draws {
                cfg.predict.n_draws = *n;
            }
            if *include_noise {
                cfg.predict.include_noise = true;
            }
            let names = cfg.network.param_names();
            let draws = match cfg.method {
                Method::Nsbl | Method::LaplaceNsbl => {
                    let post: sbnn::Gmm = io::read_json(&need(&dir, "posterior_gmm.json")?).map_err(pipe)?;
                    sbnn::nsbl::sample_posterior(&post, cfg.predict.n_draws, cfg.seed).map_err(pipe)?
                }
                Method::Standard | Method::Hier => {
                    let (s, _) = io::read_samples(&need(&dir, "samples.csv")?, &names).map_err(pipe)?;
                    sbnn::predict::thin_rows(&s, cfg.predict.n_draws)
                }
                Method::Laplace => return Err(Failure::Config("laplace runs have no posterior to push forward".into())),
            };
            let meta: run::DatasetMeta = io::read_json(&need(&dir, "dataset.json")?).map_err(pipe)?;
            let fan = run::fan_from_samples(&cfg, meta.noise_var, &draws).map_err(pipe)?;
            run::write_fan(&dir, &fan, &cfg, meta.truth_fn_id.is_some()).map_err(pipe)?;
            for (k, v) in run::fan_summary(&fan, &meta) {
                println!("{k:<24} {v}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(m)) => {
            eprintln!("pipeline failure: {m}");
            ExitCode::from(3)
        }
    }
}
