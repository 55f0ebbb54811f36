//! Maximum-likelihood estimation, profile-likelihood intervals, Monte-Carlo
//! coverage and the dry-spell threshold calibration loop.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{dry_spell_lengths, WetRule};
use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood, LikelihoodContext, DEFAULT_GRADIENT_STEP};
use crate::model::{simulate, ModelParams, SimulationConfig};
use crate::optim::{bfgs, central_difference, hessian, nelder_mead};
use crate::panel::{CovariatePanel, PrecipPanel};
use crate::rng::derive_seed;
use crate::special::chi_square_1df_quantile;

/// Optimizer settings for [`fit_ml`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Total objective-evaluation budget across all phases.
    pub max_evals: usize,
    /// Simplex diameter (infinity norm) required for convergence.
    pub simplex_tol: f64,
    /// Gradient infinity-norm tolerance, scaled by `1 + 1e-4 |L|` because the
    /// curvature grows with the number of likelihood terms.
    pub grad_tol: f64,
    /// Relative finite-difference step.
    pub grad_step: f64,
    /// Initial simplex edge for contagion coefficients and `theta_0`; the
    /// other `theta_j` edges are divided by the covariate's standard deviation.
    pub initial_step: f64,
    /// Polish/restart cycles after the first simplex run.
    pub max_restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_evals: 200_000,
            simplex_tol: 1e-6,
            grad_tol: 1e-3,
            grad_step: DEFAULT_GRADIENT_STEP,
            initial_step: 0.1,
            max_restarts: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: ModelParams,
    pub max_loglik: f64,
    pub n_obs_used: usize,
    pub converged: bool,
    pub n_evals: usize,
    pub gradient_norm: f64,
    pub simplex_diameter: f64,
    pub optimizer_trace: Vec<TracePoint>,
}

fn scaled_grad_tol(options: &FitOptions, loglik: f64) -> f64 {
    options.grad_tol * (1.0 + loglik.abs() * 1e-4)
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn simplex_steps(ctx: &LikelihoodContext, base: f64) -> Vec<f64> {
    let m = ctx.n_stations();
    let mut steps = vec![base; m * m + 1];
    for j in 0..ctx.n_covariates() {
        let sd = sample_sd(&ctx.covariates().column(j));
        steps.push(if sd > 1e-12 { base / sd } else { base });
    }
    steps
}

/// Least-squares starting point.
///
/// Each row of `B` regresses the wet responses of one station on the previous
/// hour's vector; `theta` regresses `ln |residual|` on the covariates, with the
/// intercept corrected by `E ln|Z| = -(gamma + ln 2) / 2`. Falls back to zeros
/// where a regression is not identified.
pub fn initial_params(ctx: &LikelihoodContext) -> Result<ModelParams> {
    let m = ctx.n_stations();
    let d = ctx.n_covariates();
    let u = ctx.threshold();
    let precip = ctx.precip();
    let mut contagion = vec![0.0; m * m];
    let mut residual_rows: Vec<(usize, f64)> = Vec::new();

    for i in 0..m {
        let rows: Vec<usize> = (1..ctx.n_times()).filter(|&t| precip.get(t, i) >= u).collect();
        if rows.len() <= m {
            continue;
        }
        let x = DMatrix::from_fn(rows.len(), m, |r, j| precip.get(rows[r] - 1, j));
        let y = DVector::from_fn(rows.len(), |r, _| precip.get(rows[r], i));
        if let Some(beta) = ridge_solve(&x, &y) {
            for j in 0..m {
                contagion[i * m + j] = beta[j];
            }
            for &t in &rows {
                let fitted: f64 = (0..m).map(|j| beta[j] * precip.get(t - 1, j)).sum();
                residual_rows.push((t, precip.get(t, i) - fitted));
            }
        }
    }

    const MEAN_LN_ABS_NORMAL: f64 = -0.635_181_422_730_739_1;
    let mut theta = vec![0.0; d + 1];
    if residual_rows.len() > d + 1 {
        let cov = ctx.covariates();
        let x = DMatrix::from_fn(residual_rows.len(), d + 1, |r, j| {
            if j == 0 {
                1.0
            } else {
                cov.row(residual_rows[r].0)[j - 1]
            }
        });
        let y = DVector::from_fn(residual_rows.len(), |r, _| residual_rows[r].1.abs().max(1e-8).ln());
        if let Some(coef) = ridge_solve(&x, &y) {
            theta.copy_from_slice(coef.as_slice());
            theta[0] -= MEAN_LN_ABS_NORMAL;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        theta = vec![0.0; d + 1];
    }
    ModelParams::from_flat(m, contagion, theta, u)
}

fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let mut xtx = x.transpose() * x;
    let scale = xtx.diagonal().amax().max(1.0);
    for k in 0..xtx.nrows() {
        xtx[(k, k)] += 1e-10 * scale;
    }
    let sol = xtx.cholesky()?.solve(&(x.transpose() * y));
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// Local maximizer of the censored likelihood at the context's threshold.
///
/// A Nelder–Mead run from `init` is followed by up to `max_restarts` cycles of
/// BFGS polishing and a small restarted simplex. The fit is converged when
/// the final simplex diameter is below `simplex_tol` and the gradient
/// infinity-norm is below the scaled `grad_tol`. When the evaluation budget
/// runs out the best point found is returned with `converged = false`.
pub fn fit_ml(ctx: &LikelihoodContext, init: &ModelParams, options: &FitOptions) -> Result<FitResult> {
    ctx.check_params(init)?;
    let x0 = init.to_vector();
    let l0 = ctx.eval_vector(&x0);
    if !l0.is_finite() {
        return Err(Error::Optimization(format!("log-likelihood at the initial point is {l0}")));
    }
    let objective = |x: &[f64]| -ctx.eval_vector(x);
    let steps = simplex_steps(ctx, options.initial_step);

    let mut trace = vec![TracePoint { iteration: 0, loglik: l0 }];
    let mut iteration = 0;
    let push_trace = |trace: &mut Vec<TracePoint>, it: usize, loglik: f64| {
        if loglik > trace.last().map_or(f64::NEG_INFINITY, |p| p.loglik) {
            trace.push(TracePoint { iteration: it, loglik });
        }
    };

    let mut evals = 0usize;
    let coarse_tol = options.simplex_tol.max(1e-4);
    let first = nelder_mead(objective, &x0, &steps, coarse_tol, options.max_evals);
    evals += first.evals;
    for &(it, v) in &first.trace {
        push_trace(&mut trace, it, -v);
    }
    iteration += first.iterations;
    let mut best_x = first.x;
    let mut best_f = first.value;
    let mut diameter = first.diameter;
    let mut gradient_norm = f64::INFINITY;
    let mut converged = false;

    for _ in 0..=options.max_restarts {
        if evals >= options.max_evals {
            break;
        }
        let tol = scaled_grad_tol(options, best_f);
        match bfgs(objective, &best_x, options.grad_step, tol, options.max_evals - evals, None) {
            Ok(polished) => {
                evals += polished.evals;
                for &(it, v) in &polished.trace {
                    push_trace(&mut trace, iteration + it, -v);
                }
                iteration += polished.iterations;
                if polished.value <= best_f {
                    best_x = polished.x;
                    best_f = polished.value;
                }
            }
            Err(err) => log::debug!("gradient polish skipped: {err}"),
        }
        if evals >= options.max_evals {
            break;
        }

        let restart_steps: Vec<f64> = steps.iter().map(|s| s * 1e-3).collect();
        let restart = nelder_mead(objective, &best_x, &restart_steps, options.simplex_tol, options.max_evals - evals);
        evals += restart.evals;
        for &(it, v) in &restart.trace {
            push_trace(&mut trace, iteration + it, -v);
        }
        iteration += restart.iterations;
        diameter = restart.diameter;
        if restart.value <= best_f {
            best_x = restart.x;
            best_f = restart.value;
        }

        gradient_norm = match central_difference(objective, &best_x, options.grad_step) {
            Ok(g) => {
                evals += 2 * g.len();
                g.iter().fold(0.0, |a, v| a.max(v.abs()))
            }
            Err(_) => f64::INFINITY,
        };
        if restart.converged && gradient_norm <= scaled_grad_tol(options, best_f) {
            converged = true;
            break;
        }
    }

    let estimates = init.with_vector(&best_x)?;
    let max_loglik = log_likelihood(&estimates, ctx)?;
    Ok(FitResult {
        estimates,
        max_loglik,
        n_obs_used: ctx.n_obs_used(),
        converged: converged && evals <= options.max_evals,
        n_evals: evals,
        gradient_norm,
        simplex_diameter: diameter,
        optimizer_trace: trace,
    })
}

/// Settings for profile-likelihood intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileOptions {
    /// Absolute width at which bisection stops.
    pub tol: f64,
    /// Bracket doublings before an endpoint is declared open.
    pub max_expansions: usize,
    /// Gradient tolerance of the inner re-maximization.
    pub grad_tol: f64,
    pub grad_step: f64,
    /// Relative step of the Hessian used for the starting bracket.
    pub hessian_step: f64,
    /// Evaluation budget of each inner re-maximization.
    pub inner_max_evals: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_expansions: 20,
            grad_tol: 1e-4,
            grad_step: DEFAULT_GRADIENT_STEP,
            hessian_step: 1e-4,
            inner_max_evals: 200_000,
        }
    }
}

/// Profile-likelihood confidence interval for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCI {
    pub param_index: usize,
    pub param_name: String,
    pub level: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// `false` when the profile never reached the cutoff below the estimate;
    /// `lower` is then the last point searched.
    pub lower_closed: bool,
    pub upper_closed: bool,
    pub coverage_estimate: Option<f64>,
}

impl ProfileCI {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Profile-likelihood machinery around one maximum of a log-likelihood.
///
/// The Hessian at the maximum is computed once and reused to seed the
/// bracket and the inner re-maximizations for every parameter.
pub struct Profiler<F> {
    loglik: F,
    x_hat: Vec<f64>,
    l_max: f64,
    names: Vec<String>,
    covariance: Option<DMatrix<f64>>,
    options: ProfileOptions,
}

impl<F> Profiler<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(loglik: F, x_hat: Vec<f64>, names: Vec<String>, options: ProfileOptions) -> Result<Self> {
        let l_max = loglik(&x_hat);
        if !l_max.is_finite() {
            return Err(Error::Optimization("log-likelihood not finite at the estimate".into()));
        }
        let covariance = hessian(|x| -loglik(x), &x_hat, options.hessian_step)
            .ok()
            .and_then(|h| h.try_inverse())
            .filter(|c| c.diagonal().iter().all(|v| v.is_finite() && *v > 0.0));
        Ok(Self {
            loglik,
            x_hat,
            l_max,
            names,
            covariance,
            options,
        })
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    /// Wald standard error from the observed information, when available.
    pub fn wald_se(&self, index: usize) -> Option<f64> {
        self.covariance.as_ref().map(|c| c[(index, index)].sqrt())
    }

    /// Maximized log-likelihood with parameter `index` pinned at `value`.
    pub fn profile_value(&self, index: usize, value: f64) -> f64 {
        let n = self.x_hat.len();
        let others: Vec<usize> = (0..n).filter(|&k| k != index).collect();
        let delta = value - self.x_hat[index];

        let (start, seed) = match &self.covariance {
            Some(c) => {
                let cii = c[(index, index)];
                let start: Vec<f64> = others.iter().map(|&k| self.x_hat[k] + c[(k, index)] / cii * delta).collect();
                let seed = DMatrix::from_fn(others.len(), others.len(), |a, b| {
                    let (ka, kb) = (others[a], others[b]);
                    c[(ka, kb)] - c[(ka, index)] * c[(kb, index)] / cii
                });
                (start, Some(seed))
            }
            None => (others.iter().map(|&k| self.x_hat[k]).collect(), None),
        };

        let full = |sub: &[f64]| {
            let mut x = Vec::with_capacity(n);
            x.extend_from_slice(&sub[..index]);
            x.push(value);
            x.extend_from_slice(&sub[index..]);
            x
        };
        let objective = |sub: &[f64]| -(self.loglik)(&full(sub));
        let start_value = -objective(&start);
        let tol = self.options.grad_tol * (1.0 + self.l_max.abs() * 1e-4);
        let attempt = bfgs(objective, &start, self.options.grad_step, tol, self.options.inner_max_evals, seed.clone());
        let attempt = match attempt {
            Ok(out) if out.converged || seed.is_none() => Ok(out),
            // a poor curvature seed can stall; retry from scratch
            _ => bfgs(objective, &start, self.options.grad_step, tol, self.options.inner_max_evals, None),
        };
        match attempt {
            Ok(out) => (-out.value).max(start_value),
            Err(_) => start_value,
        }
    }

    fn deviance(&self, index: usize, value: f64) -> f64 {
        let lp = self.profile_value(index, value);
        if lp.is_nan() {
            f64::INFINITY
        } else {
            2.0 * (self.l_max - lp)
        }
    }

    /// Profile interval `{v : 2 (L_max - L_profile(v)) <= chi2_1(level)}`.
    pub fn interval(&self, index: usize, level: f64) -> Result<ProfileCI> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid(format!("confidence level must lie in (0, 1), got {level}")));
        }
        if index >= self.x_hat.len() {
            return Err(Error::invalid(format!("parameter index {index} out of range")));
        }
        let cutoff = chi_square_1df_quantile(level);
        let estimate = self.x_hat[index];
        let guess = self
            .wald_se(index)
            .map(|se| se * cutoff.sqrt())
            .filter(|g| g.is_finite() && *g > 0.0)
            .unwrap_or(0.1 * (1.0 + estimate.abs()));
        let (upper, upper_closed) = self.endpoint(index, cutoff, guess, 1.0);
        let (lower, lower_closed) = self.endpoint(index, cutoff, guess, -1.0);
        Ok(ProfileCI {
            param_index: index,
            param_name: self.names.get(index).cloned().unwrap_or_else(|| format!("x{index}")),
            level,
            estimate,
            lower: lower.min(estimate),
            upper: upper.max(estimate),
            lower_closed,
            upper_closed,
            coverage_estimate: None,
        })
    }

    /// Distance from the estimate to the cutoff crossing in direction `sign`,
    /// bracketed around the quadratic guess and refined by bisection.
    fn endpoint(&self, index: usize, cutoff: f64, guess: f64, sign: f64) -> (f64, bool) {
        let estimate = self.x_hat[index];
        let at = |dist: f64| estimate + sign * dist;
        let tol = self.options.tol;

        let mut inner = 0.0;
        let mut outer = 1.25 * guess;
        let mut expansions = 0;
        while self.deviance(index, at(outer)) < cutoff {
            inner = outer;
            outer *= 2.0;
            expansions += 1;
            if expansions > self.options.max_expansions {
                return (at(inner), false);
            }
        }
        if inner == 0.0 && outer - 0.8 * guess > tol {
            let probe = 0.8 * guess;
            if self.deviance(index, at(probe)) < cutoff {
                inner = probe;
            } else {
                outer = probe;
            }
        }
        while outer - inner > tol {
            let mid = 0.5 * (inner + outer);
            if self.deviance(index, at(mid)) < cutoff {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        (at(0.5 * (inner + outer)), true)
    }
}

/// Profile interval for parameter `param_index` of a converged fit.
pub fn profile_ci(
    ctx: &LikelihoodContext,
    fit: &FitResult,
    param_index: usize,
    level: f64,
    options: &ProfileOptions,
) -> Result<ProfileCI> {
    if !fit.converged {
        return Err(Error::invalid("profile intervals need a converged fit"));
    }
    ctx.check_params(&fit.estimates)?;
    let profiler = Profiler::new(
        |x: &[f64]| ctx.eval_vector(x),
        fit.estimates.to_vector(),
        fit.estimates.parameter_names(),
        options.clone(),
    )?;
    profiler.interval(param_index, level)
}

/// Intervals for several parameters of one fit, sharing one Hessian.
pub fn profile_cis(
    ctx: &LikelihoodContext,
    fit: &FitResult,
    indices: &[usize],
    level: f64,
    options: &ProfileOptions,
) -> Result<Vec<ProfileCI>> {
    if !fit.converged {
        return Err(Error::invalid("profile intervals need a converged fit"));
    }
    ctx.check_params(&fit.estimates)?;
    let profiler = Profiler::new(
        |x: &[f64]| ctx.eval_vector(x),
        fit.estimates.to_vector(),
        fit.estimates.parameter_names(),
        options.clone(),
    )?;
    indices.iter().map(|&i| profiler.interval(i, level)).collect()
}

/// Settings for [`coverage_probability`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageOptions {
    pub master_seed: u64,
    /// Parameters to check; all when `None`.
    pub param_indices: Option<Vec<usize>>,
    pub fit: FitOptions,
    pub profile: ProfileOptions,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self {
            master_seed: 20_150_101,
            param_indices: None,
            fit: FitOptions::default(),
            profile: ProfileOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub level: f64,
    pub param_indices: Vec<usize>,
    pub param_names: Vec<String>,
    /// Fraction of successful replicas whose interval contains the truth.
    pub coverage: Vec<f64>,
    pub n_replicas: usize,
    pub n_success: usize,
    pub n_failed: usize,
}

/// Monte-Carlo coverage of profile intervals under `truth`.
///
/// Replicas are simulated on `covariates` from a dry start with seeds derived
/// from `options.master_seed`, fitted from the least-squares start and
/// reduced in replica order. Failed replicas are excluded from the
/// denominator.
pub fn coverage_probability(
    truth: &ModelParams,
    covariates: &CovariatePanel,
    level: f64,
    n_replicas: usize,
    options: &CoverageOptions,
) -> Result<CoverageReport> {
    if n_replicas < 50 {
        return Err(Error::invalid(format!("coverage needs at least 50 replicas, got {n_replicas}")));
    }
    let names = truth.parameter_names();
    let indices = options.param_indices.clone().unwrap_or_else(|| (0..truth.n_free()).collect());
    if indices.iter().any(|&i| i >= truth.n_free()) {
        return Err(Error::invalid("coverage parameter index out of range"));
    }
    let x_true = truth.to_vector();

    let outcomes: Vec<Option<Vec<bool>>> = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<Vec<bool>> {
                let config = SimulationConfig::new(truth.n_stations(), covariates.n_times(), derive_seed(options.master_seed, r as u64));
                let panel = simulate(truth, covariates, &config)?;
                let ctx = LikelihoodContext::new(panel, covariates.clone(), truth.threshold())?;
                let init = initial_params(&ctx)?;
                let fit = fit_ml(&ctx, &init, &options.fit)?;
                let cis = profile_cis(&ctx, &fit, &indices, level, &options.profile)?;
                Ok(cis.iter().map(|ci| ci.contains(x_true[ci.param_index])).collect())
            };
            match run() {
                Ok(hits) => Some(hits),
                Err(err) => {
                    log::warn!("coverage replica {r} failed: {err}");
                    None
                }
            }
        })
        .collect();

    let successes: Vec<&Vec<bool>> = outcomes.iter().flatten().collect();
    let n_success = successes.len();
    let coverage = (0..indices.len())
        .map(|k| {
            if n_success == 0 {
                f64::NAN
            } else {
                successes.iter().filter(|h| h[k]).count() as f64 / n_success as f64
            }
        })
        .collect();
    Ok(CoverageReport {
        level,
        param_names: indices.iter().map(|&i| names[i].clone()).collect(),
        param_indices: indices,
        coverage,
        n_replicas,
        n_success,
        n_failed: n_replicas - n_success,
    })
}

/// Settings for [`calibrate_threshold`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Simulated panels per candidate threshold.
    pub replicas: usize,
    pub max_iters: usize,
    pub master_seed: u64,
    pub fit: FitOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            replicas: 20,
            max_iters: 10,
            master_seed: 20_150_101,
            fit: FitOptions::default(),
        }
    }
}

/// Default candidate thresholds (mm).
pub const DEFAULT_THRESHOLD_CANDIDATES: [f64; 6] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub u_fit: f64,
    pub u_selected: f64,
    /// `|observed - simulated|` mean dry-spell length at `u_selected`.
    pub gap: f64,
    /// Mean simulated dry-spell length for every candidate, in candidate order.
    pub simulated_mean_dry: Vec<f64>,
    pub fit_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub candidates: Vec<f64>,
    pub chosen_u: f64,
    pub observed_mean_dry: f64,
    pub iterations: Vec<CalibrationStep>,
    pub converged: bool,
    /// Thresholds visited in a detected cycle, empty otherwise.
    pub cycle: Vec<f64>,
}

/// Mean dry-spell length per station, averaged over stations.
///
/// Stations that are never dry contribute 0.
pub fn mean_dry_spell_length(panel: &PrecipPanel) -> f64 {
    let m = panel.n_stations();
    let total: f64 = (0..m)
        .map(|s| {
            let runs = dry_spell_lengths(panel, s, WetRule::Positive);
            if runs.is_empty() {
                0.0
            } else {
                runs.iter().sum::<usize>() as f64 / runs.len() as f64
            }
        })
        .sum();
    total / m as f64
}

/// Iterative threshold selection by matching the mean dry-spell length.
///
/// Each iteration fits the model at the current threshold, simulates
/// `options.replicas` panels per candidate with the fitted `B` and `theta`,
/// and moves to the candidate whose mean simulated dry-spell length is
/// closest to the observed one (smallest threshold on ties). Simulations use
/// the same seeds for every candidate and iteration. Stops when the selection
/// repeats the fitted threshold, on a cycle, or after `max_iters`.
pub fn calibrate_threshold(
    precip: &PrecipPanel,
    covariates: &CovariatePanel,
    candidates: &[f64],
    start_u: f64,
    options: &CalibrationOptions,
) -> Result<ThresholdCalibration> {
    let mut cands = candidates.to_vec();
    if cands.is_empty() {
        return Err(Error::invalid("no candidate thresholds"));
    }
    if cands.iter().any(|u| !u.is_finite() || *u < 0.0) {
        return Err(Error::invalid("candidate thresholds must be finite and >= 0"));
    }
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let Some(mut current) = cands.iter().position(|&u| u == start_u) else {
        return Err(Error::invalid(format!("start threshold {start_u} is not a candidate")));
    };
    if options.replicas == 0 || options.max_iters == 0 {
        return Err(Error::invalid("calibration needs at least one replica and one iteration"));
    }

    let observed = mean_dry_spell_length(precip);
    let mut steps: Vec<CalibrationStep> = Vec::new();
    let mut fitted: Vec<usize> = Vec::new();

    for _ in 0..options.max_iters {
        let u = cands[current];
        let ctx = LikelihoodContext::new(precip.clone(), covariates.clone(), u)?;
        let init = initial_params(&ctx)?;
        let fit = fit_ml(&ctx, &init, &options.fit)?;
        let simulated = cands
            .iter()
            .map(|&cand| mean_simulated_dry(&fit.estimates.with_threshold(cand)?, covariates, options))
            .collect::<Result<Vec<f64>>>()?;

        let mut selected = 0;
        for (k, s) in simulated.iter().enumerate() {
            if (observed - s).abs() < (observed - simulated[selected]).abs() {
                selected = k;
            }
        }
        steps.push(CalibrationStep {
            u_fit: u,
            u_selected: cands[selected],
            gap: (observed - simulated[selected]).abs(),
            simulated_mean_dry: simulated,
            fit_converged: fit.converged,
        });
        fitted.push(current);

        if selected == current {
            return Ok(ThresholdCalibration {
                candidates: cands.clone(),
                chosen_u: u,
                observed_mean_dry: observed,
                iterations: steps,
                converged: true,
                cycle: Vec::new(),
            });
        }
        if let Some(start) = fitted.iter().position(|&k| k == selected) {
            // oscillation: keep the visited threshold that best matches itself
            let members: Vec<usize> = fitted[start..].to_vec();
            let self_gap = |pos: usize| {
                let step = &steps[start + pos];
                (observed - step.simulated_mean_dry[members[pos]]).abs()
            };
            let best = (0..members.len())
                .min_by(|&a, &b| self_gap(a).total_cmp(&self_gap(b)).then(members[a].cmp(&members[b])))
                .unwrap_or(0);
            return Ok(ThresholdCalibration {
                candidates: cands.clone(),
                chosen_u: cands[members[best]],
                observed_mean_dry: observed,
                iterations: steps,
                converged: false,
                cycle: members.iter().map(|&k| cands[k]).collect(),
            });
        }
        current = selected;
    }

    let chosen_u = steps.last().map_or(start_u, |s| s.u_selected);
    Ok(ThresholdCalibration {
        candidates: cands,
        chosen_u,
        observed_mean_dry: observed,
        iterations: steps,
        converged: false,
        cycle: Vec::new(),
    })
}

fn mean_simulated_dry(params: &ModelParams, covariates: &CovariatePanel, options: &CalibrationOptions) -> Result<f64> {
    let per_replica = (0..options.replicas)
        .into_par_iter()
        .map(|r| {
            let config = SimulationConfig::new(params.n_stations(), covariates.n_times(), derive_seed(options.master_seed, r as u64));
            simulate(params, covariates, &config).map(|p| mean_dry_spell_length(&p))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_replica.iter().sum::<f64>() / per_replica.len() as f64)
}
