//! Parameter-recovery experiments: simulate from known parameters, refit,
//! and summarise bias and spread per sample size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{fit_ml, initial_params, FitOptions};
use crate::likelihood::LikelihoodContext;
use crate::model::{log_volatility, simulate, ModelParams, SimulationConfig, MAX_LOG_VOLATILITY};
use crate::panel::CovariatePanel;
use crate::rng::{derive_seed, NormalStream, NOISE_GENERATOR};

/// Stationary Gaussian AR(1) covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub mean: f64,
    pub stdev: f64,
    pub autocorrelation: f64,
}

impl Default for CovariateSpec {
    fn default() -> Self {
        Self {
            mean: 0.0,
            stdev: 1.0,
            autocorrelation: 0.8,
        }
    }
}

/// `n_times` rows of independent AR(1) columns, started from the stationary
/// distribution.
pub fn synth_covariates(specs: &[CovariateSpec], n_times: usize, seed: u64) -> Result<CovariatePanel> {
    for s in specs {
        if !(s.autocorrelation.abs() < 1.0) || !(s.stdev >= 0.0) || !s.mean.is_finite() {
            return Err(Error::invalid(format!("invalid covariate model {s:?}")));
        }
    }
    let mut stream = NormalStream::new(seed);
    let d = specs.len();
    let mut rows = Vec::with_capacity(n_times);
    let mut state: Vec<f64> = (0..d).map(|_| stream.normal()).collect();
    for t in 0..n_times {
        if t > 0 {
            for (x, s) in state.iter_mut().zip(specs) {
                let rho = s.autocorrelation;
                *x = rho * *x + (1.0 - rho * rho).sqrt() * stream.normal();
            }
        }
        rows.push(state.iter().zip(specs).map(|(z, s)| s.mean + s.stdev * z).collect());
    }
    CovariatePanel::from_rows_hourly(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub true_params: ModelParams,
    pub sample_sizes: Vec<usize>,
    pub n_replicas: usize,
    pub covariates: Vec<CovariateSpec>,
    pub master_seed: u64,
    #[serde(default)]
    pub fit: FitOptions,
    /// Abort when more than this fraction of replicas fails at any size.
    #[serde(default = "default_max_failure_rate")]
    pub max_failure_rate: f64,
}

fn default_max_failure_rate() -> f64 {
    0.2
}

impl StudyConfig {
    /// Defaults around `true_params`: sizes 100 and 1000, 100 replicas,
    /// standardised AR(1) covariates with autocorrelation 0.8.
    pub fn new(true_params: ModelParams, master_seed: u64) -> Self {
        let d = true_params.n_covariates();
        Self {
            true_params,
            sample_sizes: vec![100, 1000],
            n_replicas: 100,
            covariates: vec![CovariateSpec::default(); d],
            master_seed,
            fit: FitOptions::default(),
            max_failure_rate: default_max_failure_rate(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.covariates.len() != self.true_params.n_covariates() {
            return Err(Error::dims("covariate models", self.true_params.n_covariates(), self.covariates.len()));
        }
        if self.n_replicas == 0 || self.sample_sizes.is_empty() {
            return Err(Error::invalid("study needs at least one replica and one sample size"));
        }
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n < 3) {
            return Err(Error::invalid(format!("sample size {n} too small")));
        }
        Ok(())
    }
}

/// Seeds of one replica: covariate stream and noise stream.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ReplicaSeeds {
    covariates: u64,
    noise: u64,
}

fn default_seeds(master: u64, size_index: usize, replica: usize) -> ReplicaSeeds {
    let base = derive_seed(derive_seed(master, size_index as u64), replica as u64);
    ReplicaSeeds {
        covariates: derive_seed(base, 0),
        noise: derive_seed(base, 1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub sample_size: usize,
    pub mean: Vec<f64>,
    pub bias: Vec<f64>,
    /// Sample standard deviation (n - 1 denominator) across replicas.
    pub stdev: Vec<f64>,
    /// `|bias / true|`; `None` where the true value is zero.
    pub relative_error: Vec<Option<f64>>,
    pub n_success: usize,
    pub n_failed: usize,
    /// Estimates of successful replicas, in replica order.
    pub estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub param_names: Vec<String>,
    pub true_values: Vec<f64>,
    pub n_replicas: usize,
    pub generator: String,
    pub sizes: Vec<SizeSummary>,
}

/// Largest `|theta . F_t|` over a covariate panel.
pub fn max_log_volatility(params: &ModelParams, covariates: &CovariatePanel) -> f64 {
    (0..covariates.n_times())
        .map(|t| log_volatility(params.volatility_coefs(), covariates.row(t)).abs())
        .fold(0.0, f64::max)
}

/// Run the study. Replicas are independent (covariates and noise both
/// redrawn) and are reduced in replica order, so the report does not depend
/// on the thread count.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    run_with_seeds(config, |k, r| default_seeds(config.master_seed, k, r))
}

pub(crate) fn run_with_seeds<S>(config: &StudyConfig, seeds: S) -> Result<StudyReport>
where
    S: Fn(usize, usize) -> ReplicaSeeds + Sync,
{
    config.validate()?;
    let truth = &config.true_params;

    // Cheap pre-flight on the first replica of every size.
    for (k, &n) in config.sample_sizes.iter().enumerate() {
        let cov = synth_covariates(&config.covariates, n, seeds(k, 0).covariates)?;
        let worst = max_log_volatility(truth, &cov);
        if !(worst <= MAX_LOG_VOLATILITY) {
            return Err(Error::VolatilityOverflow { exponent: worst, time: None });
        }
    }

    let x_true = truth.to_vector();
    let mut sizes = Vec::with_capacity(config.sample_sizes.len());
    for (k, &n) in config.sample_sizes.iter().enumerate() {
        let outcomes: Vec<Option<Vec<f64>>> = (0..config.n_replicas)
            .into_par_iter()
            .map(|r| {
                let s = seeds(k, r);
                let run = || -> Result<Option<Vec<f64>>> {
                    let cov = synth_covariates(&config.covariates, n, s.covariates)?;
                    let sim = SimulationConfig::new(truth.n_stations(), n, s.noise);
                    let panel = simulate(truth, &cov, &sim)?;
                    let ctx = LikelihoodContext::new(panel, cov, truth.threshold())?;
                    let init = initial_params(&ctx)?;
                    let fit = fit_ml(&ctx, &init, &config.fit)?;
                    Ok(fit.converged.then(|| fit.estimates.to_vector()))
                };
                match run() {
                    Ok(est) => {
                        if est.is_none() {
                            log::warn!("size {n} replica {r}: optimizer did not converge");
                        }
                        est
                    }
                    Err(err) => {
                        log::warn!("size {n} replica {r} failed: {err}");
                        None
                    }
                }
            })
            .collect();
        let estimates: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
        let n_failed = config.n_replicas - estimates.len();
        if n_failed as f64 > config.max_failure_rate * config.n_replicas as f64 {
            return Err(Error::Optimization(format!(
                "{n_failed} of {} replicas failed at sample size {n}",
                config.n_replicas
            )));
        }
        sizes.push(summarise(n, &x_true, estimates, n_failed));
    }
    Ok(StudyReport {
        param_names: truth.parameter_names(),
        true_values: x_true,
        n_replicas: config.n_replicas,
        generator: NOISE_GENERATOR.to_string(),
        sizes,
    })
}

fn summarise(n: usize, truth: &[f64], estimates: Vec<Vec<f64>>, n_failed: usize) -> SizeSummary {
    let p = truth.len();
    let count = estimates.len() as f64;
    let mean: Vec<f64> = (0..p).map(|j| estimates.iter().map(|e| e[j]).sum::<f64>() / count).collect();
    let stdev = (0..p)
        .map(|j| {
            if estimates.len() < 2 {
                return f64::NAN;
            }
            let ss: f64 = estimates.iter().map(|e| (e[j] - mean[j]).powi(2)).sum();
            (ss / (count - 1.0)).sqrt()
        })
        .collect();
    let bias: Vec<f64> = mean.iter().zip(truth).map(|(m, t)| m - t).collect();
    let relative_error = bias
        .iter()
        .zip(truth)
        .map(|(b, t)| (*t != 0.0).then(|| (b / t).abs()))
        .collect();
    SizeSummary {
        sample_size: n,
        mean,
        bias,
        stdev,
        relative_error,
        n_success: estimates.len(),
        n_failed,
        estimates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> ModelParams {
        ModelParams::new(vec![vec![0.5, 0.1], vec![0.2, 0.3]], vec![0.0, 0.1], 0.7).unwrap()
    }

    #[test]
    fn ar1_covariates_are_reproducible() {
        let spec = [CovariateSpec::default()];
        let a = synth_covariates(&spec, 500, 3).unwrap();
        let b = synth_covariates(&spec, 500, 3).unwrap();
        assert_eq!(a.values(), b.values());
        let x = a.column(0);
        let mean = x.iter().sum::<f64>() / 500.0;
        assert!(mean.abs() < 0.5);
        assert!(synth_covariates(&[CovariateSpec { autocorrelation: 1.0, ..Default::default() }], 5, 0).is_err());
    }

    #[test]
    fn identical_seeds_give_zero_spread() {
        let mut cfg = StudyConfig::new(truth(), 1);
        cfg.sample_sizes = vec![200];
        cfg.n_replicas = 2;
        let report = run_with_seeds(&cfg, |_, _| default_seeds(7, 0, 0)).unwrap();
        assert!(report.sizes[0].stdev.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn zero_truth_has_no_relative_error() {
        let s = summarise(10, &[0.0, 2.0], vec![vec![0.1, 2.2], vec![0.3, 2.2]], 0);
        assert_eq!(s.relative_error[0], None);
        assert!((s.relative_error[1].unwrap() - 0.1).abs() < 1e-12);
        assert!((s.bias[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn covariate_count_checked() {
        let mut cfg = StudyConfig::new(truth(), 1);
        cfg.covariates.clear();
        assert!(run_study(&cfg).is_err());
    }
}
