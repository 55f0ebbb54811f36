//! Command-line workflows: a TOML config plus `--set` overrides drives one
//! subcommand, whose artifacts land in `output_dir`.
//!
//! Every data artifact embeds the SHA-256 of the resolved config and the
//! master seed. Wall-clock times only appear in `run.json`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{diagnostics_report, forecast_odds, DiagnosticsOptions, ForecastOptions};
use crate::error::{Error, Result};
use crate::inference::{
    calibrate_threshold, fit_ml, initial_params, profile_cis, CalibrationOptions, FitOptions, ProfileCI,
    ProfileOptions, DEFAULT_THRESHOLD_CANDIDATES,
};
use crate::io::{
    load_panels, preprocess_small_values, write_covariate_csv, write_diagnostics_csvs, write_forecast_csv,
    write_json, write_precip_csv, DatasetBundle, OutputMeta, Schema, SmallValueMode,
};
use crate::likelihood::LikelihoodContext;
use crate::model::{simulate, ModelParams, SimulationConfig};
use crate::panel::CovariatePanel;
use crate::rng::{derive_seed, NOISE_GENERATOR};
use crate::simstudy::{run_study, synth_covariates, CovariateSpec, StudyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_OPTIMIZATION: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "frailty", version, about = "Censored autoregressive model of hourly precipitation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set fit.max_evals=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads for replicas and envelopes (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Report errors as JSON on standard error.
    #[arg(long, global = true)]
    pub json_errors: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Maximum-likelihood fit with profile intervals.
    Fit,
    /// Simulate a precipitation panel.
    Simulate,
    /// Choose the censoring threshold by matching mean dry-spell length.
    Calibrate,
    /// Validation statistics with Monte-Carlo envelopes.
    Diagnose,
    /// Parameter-recovery study on synthetic data.
    Simstudy,
    /// Forecast hit rates against persistence.
    ForecastEval,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Simulate => "simulate",
            Command::Calibrate => "calibrate",
            Command::Diagnose => "diagnose",
            Command::Simstudy => "simstudy",
            Command::ForecastEval => "forecast-eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub precip: PathBuf,
    pub covariates: PathBuf,
    #[serde(default)]
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSection {
    #[serde(flatten)]
    pub options: FitOptions,
    /// Confidence level of the profile intervals; `0` skips them.
    pub level: f64,
    /// Parameter indices to profile; all when absent.
    pub profile_params: Option<Vec<usize>>,
    pub profile: ProfileOptions,
    pub small_values: SmallValueMode,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            options: FitOptions::default(),
            level: 0.95,
            profile_params: None,
            profile: ProfileOptions::default(),
            small_values: SmallValueMode::Mask,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Hours to simulate; defaults to the covariate length when data are given.
    pub n_steps: Option<usize>,
    pub initial_state: Option<Vec<f64>>,
    /// Synthetic AR(1) covariate models; when empty the covariates of the
    /// `[data]` section are used.
    pub covariates: Vec<CovariateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub candidates: Vec<f64>,
    pub start_u: f64,
    pub replicas: usize,
    pub max_iters: usize,
    pub fit: FitOptions,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        let base = CalibrationOptions::default();
        Self {
            candidates: DEFAULT_THRESHOLD_CANDIDATES.to_vec(),
            start_u: 0.5,
            replicas: base.replicas,
            max_iters: base.max_iters,
            fit: base.fit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimstudySection {
    pub sample_sizes: Vec<usize>,
    pub n_replicas: usize,
    /// One AR(1) model per covariate; standardised AR(1) with
    /// autocorrelation 0.8 when empty.
    pub covariates: Vec<CovariateSpec>,
    pub max_failure_rate: f64,
    pub fit: FitOptions,
}

impl Default for SimstudySection {
    fn default() -> Self {
        Self {
            sample_sizes: vec![100, 1000],
            n_replicas: 100,
            covariates: Vec::new(),
            max_failure_rate: 0.2,
            fit: FitOptions::default(),
        }
    }
}

/// Resolved run configuration. Relative paths are taken relative to the
/// config file. The master `seed` replaces every per-section seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threshold: f64,
    pub output_dir: PathBuf,
    pub data: Option<DataConfig>,
    /// Model parameters for simulate, diagnose, forecast-eval and simstudy.
    pub params: Option<ModelParams>,
    /// JSON file holding parameters or a previous fit; used when `params` is absent.
    pub params_file: Option<PathBuf>,
    pub fit: FitSection,
    pub simulate: SimulateSection,
    pub calibrate: CalibrateSection,
    pub diagnose: DiagnosticsOptions,
    pub simstudy: SimstudySection,
    pub forecast: ForecastOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threshold: 0.7,
            output_dir: PathBuf::from("out"),
            data: None,
            params: None,
            params_file: None,
            fit: FitSection::default(),
            simulate: SimulateSection::default(),
            calibrate: CalibrateSection::default(),
            diagnose: DiagnosticsOptions::default(),
            simstudy: SimstudySection::default(),
            forecast: ForecastOptions::default(),
        }
    }
}

/// Apply one `key.path=value` override; the value is read as a TOML value
/// and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Read the config file (if any), apply overrides and resolve paths.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let (mut table, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            (table, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    resolve(&mut config.output_dir);
    if let Some(d) = &mut config.data {
        resolve(&mut d.precip);
        resolve(&mut d.covariates);
    }
    if let Some(p) = &mut config.params_file {
        resolve(p);
    }
    config.calibrate.start_u = config.calibrate.start_u.max(0.0);
    config.diagnose.seed = config.seed;
    config.forecast.seed = config.seed;
    Ok(config)
}

/// SHA-256 (hex) of the config's canonical JSON form.
pub fn config_hash(config: &RunConfig) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Optimization(_) | Error::NonFiniteGradient { .. } => EXIT_OPTIMIZATION,
        _ => EXIT_DATA,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match exit_code(err) {
        EXIT_CONFIG => "config",
        EXIT_OPTIMIZATION => "optimization",
        _ => "data",
    }
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    meta: &'a OutputMeta,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'static str,
    started_at: String,
    finished_at: String,
    config_sha256: &'a str,
    seed: u64,
    generator: &'static str,
    version: &'static str,
    exit_code: i32,
    outputs: Vec<PathBuf>,
    config: &'a RunConfig,
}

/// Result of a subcommand: written artifacts and whether the run counts as
/// an optimization failure (artifacts are still written).
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub optimization_failed: bool,
}

struct Runner<'a> {
    config: &'a RunConfig,
    meta: OutputMeta,
    outputs: Vec<PathBuf>,
}

impl Runner<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, body: T) -> Result<()> {
        let path = self.path(name);
        write_json(&path, &Artifact { meta: &self.meta, body })?;
        self.outputs.push(path);
        Ok(())
    }

    fn bundle(&self) -> Result<DatasetBundle> {
        let d = self
            .config
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [data] section".into()))?;
        load_panels(&d.precip, &d.covariates, &d.schema)
    }

    fn params(&self) -> Result<ModelParams> {
        if let Some(p) = &self.config.params {
            return Ok(p.clone());
        }
        let path = self
            .config
            .params_file
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs [params] or params_file".into()))?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let node = value
            .pointer("/fit/estimates")
            .or_else(|| value.pointer("/estimates"))
            .unwrap_or(&value);
        Ok(serde_json::from_value(node.clone())?)
    }

    /// Validation window when a split is configured, otherwise everything.
    fn evaluation_window(&self) -> Result<(crate::panel::PrecipPanel, CovariatePanel)> {
        let bundle = self.bundle()?;
        Ok(bundle.validation().unwrap_or_else(|| (bundle.precip.clone(), bundle.covariates.clone())))
    }

    fn fit(&mut self) -> Result<bool> {
        let c = &self.config;
        let (precip, covariates) = self.bundle()?.learning();
        let (precip, _) = preprocess_small_values(&precip, c.threshold, c.fit.small_values)?;
        let ctx = LikelihoodContext::new(precip, covariates, c.threshold)?;
        let init = initial_params(&ctx)?;
        let fit = fit_ml(&ctx, &init, &c.fit.options)?;
        let intervals: Vec<ProfileCI> = if fit.converged && c.fit.level > 0.0 {
            let indices = c.fit.profile_params.clone().unwrap_or_else(|| (0..init.n_free()).collect());
            profile_cis(&ctx, &fit, &indices, c.fit.level, &c.fit.profile)?
        } else {
            Vec::new()
        };
        let converged = fit.converged;
        #[derive(Serialize)]
        struct Body {
            fit: crate::inference::FitResult,
            intervals: Vec<ProfileCI>,
        }
        self.json("fit.json", Body { fit, intervals })?;
        if !converged {
            log::error!("optimizer did not converge; best point so far written");
        }
        Ok(!converged)
    }

    fn simulate(&mut self) -> Result<()> {
        let c = self.config;
        let params = self.params()?;
        let covariates = if !c.simulate.covariates.is_empty() {
            let specs = &c.simulate.covariates;
            if specs.len() != params.n_covariates() {
                return Err(Error::Config(format!(
                    "{} covariate models for {} covariates",
                    specs.len(),
                    params.n_covariates()
                )));
            }
            let n = c.simulate.n_steps.unwrap_or(1000);
            let cov = synth_covariates(specs, n, derive_seed(c.seed, 1))?;
            let path = self.path("covariates.csv");
            write_covariate_csv(&path, &cov, Some(&self.meta))?;
            self.outputs.push(path);
            cov
        } else if c.data.is_some() {
            let cov = self.bundle()?.covariates;
            let n = c.simulate.n_steps.unwrap_or(cov.n_times());
            if n > cov.n_times() {
                return Err(Error::Config(format!("n_steps {n} exceeds the {} covariate rows", cov.n_times())));
            }
            cov.slice(0..n)
        } else {
            return Err(Error::Config("simulate needs [simulate] covariates or a [data] section".into()));
        };
        let mut sim = SimulationConfig::new(params.n_stations(), covariates.n_times(), c.seed);
        if let Some(s) = &c.simulate.initial_state {
            sim.initial_state = s.clone();
        }
        let panel = simulate(&params, &covariates, &sim)?;
        let path = self.path("simulated.csv");
        write_precip_csv(&path, &panel, Some(&self.meta))?;
        self.outputs.push(path);
        Ok(())
    }

    fn calibrate(&mut self) -> Result<()> {
        let c = self.config;
        let (precip, covariates) = self.bundle()?.learning();
        let options = CalibrationOptions {
            replicas: c.calibrate.replicas,
            max_iters: c.calibrate.max_iters,
            master_seed: c.seed,
            fit: c.calibrate.fit.clone(),
        };
        let cal = calibrate_threshold(&precip, &covariates, &c.calibrate.candidates, c.calibrate.start_u, &options)?;
        self.json("calibration.json", cal)
    }

    fn diagnose(&mut self) -> Result<()> {
        let params = self.params()?;
        let (precip, covariates) = self.evaluation_window()?;
        let report = diagnostics_report(&precip, &covariates, &params, &self.config.diagnose)?;
        let dir = self.config.output_dir.join("diagnostics");
        let csvs = write_diagnostics_csvs(&dir, &report, Some(&self.meta))?;
        self.outputs.extend(csvs);
        self.json("diagnostics.json", report)
    }

    fn simstudy(&mut self) -> Result<()> {
        let c = self.config;
        let s = &c.simstudy;
        let params = self.params()?;
        let mut study = StudyConfig::new(params, c.seed);
        study.sample_sizes = s.sample_sizes.clone();
        study.n_replicas = s.n_replicas;
        if !s.covariates.is_empty() {
            study.covariates = s.covariates.clone();
        }
        study.max_failure_rate = s.max_failure_rate;
        study.fit = s.fit.clone();
        let report = run_study(&study)?;
        self.json("simstudy.json", report)
    }

    fn forecast(&mut self) -> Result<()> {
        let params = self.params()?;
        let (precip, covariates) = self.evaluation_window()?;
        let odds = forecast_odds(&params, &covariates, &precip, &self.config.forecast)?;
        let path = self.path("forecast.csv");
        write_forecast_csv(&path, &odds, Some(&self.meta))?;
        self.outputs.push(path);
        self.json("forecast.json", odds)
    }
}

/// Run one subcommand against a resolved config.
pub fn run_command(command: Command, config: &RunConfig) -> Result<Outcome> {
    let meta = OutputMeta {
        config_sha256: config_hash(config)?,
        seed: config.seed,
        generator: NOISE_GENERATOR.to_string(),
    };
    let mut runner = Runner {
        config,
        meta,
        outputs: Vec::new(),
    };
    let mut optimization_failed = false;
    match command {
        Command::Fit => optimization_failed = runner.fit()?,
        Command::Simulate => runner.simulate()?,
        Command::Calibrate => runner.calibrate()?,
        Command::Diagnose => runner.diagnose()?,
        Command::Simstudy => runner.simstudy()?,
        Command::ForecastEval => runner.forecast()?,
    }
    Ok(Outcome {
        outputs: runner.outputs,
        optimization_failed,
    })
}

fn report_error(err: &Error, json: bool) {
    if json {
        let body = serde_json::json!({
            "error": error_kind(err),
            "exit_code": exit_code(err),
            "message": err.to_string(),
        });
        eprintln!("{body}");
    } else {
        eprintln!("error: {err}");
    }
}

/// Entry point shared by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }

    let config = match load_config(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            report_error(&e, cli.json_errors);
            return exit_code(&e);
        }
    };
    let hash = config_hash(&config).unwrap_or_default();
    log::info!("command {} seed {} config sha256 {hash}", cli.command.name(), config.seed);
    log::info!(
        "resolved config: {}",
        serde_json::to_string(&config).unwrap_or_default()
    );

    let started = chrono::Utc::now();
    let (code, outputs) = match run_command(cli.command, &config) {
        Ok(o) => (if o.optimization_failed { EXIT_OPTIMIZATION } else { EXIT_OK }, o.outputs),
        Err(e) => {
            report_error(&e, cli.json_errors);
            (exit_code(&e), Vec::new())
        }
    };
    let record = RunRecord {
        command: cli.command.name(),
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        config_sha256: &hash,
        seed: config.seed,
        generator: NOISE_GENERATOR,
        version: env!("CARGO_PKG_VERSION"),
        exit_code: code,
        outputs,
        config: &config,
    };
    if let Err(e) = write_json(&config.output_dir.join("run.json"), &record) {
        log::warn!("could not write run record: {e}");
    }
    code
}
