//! Censored Gaussian log-likelihood of the generator.
//!
//! For every hour `t >= 2` and station `m`, a recorded value `P >= u`
//! contributes the Gaussian log-density of `P - B_m . P_{t-1}` at scale
//! `sigma_t`, a zero contributes `ln Phi((u - B_m . P_{t-1}) / sigma_t)`, and
//! values strictly between 0 and `u` are excluded. The first hour is only
//! ever used as a regressor.
//!
//! Terms are accumulated in increasing `t`, then increasing station order, so
//! results are reproducible bit for bit.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{log_volatility, ModelParams};
use crate::optim::central_difference;
use crate::panel::{CovariatePanel, PrecipPanel};
use crate::special::{log_normal_cdf, HALF_LN_2PI};

/// Default relative step of the finite-difference gradient.
pub const DEFAULT_GRADIENT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Wet,
    Dry,
    Masked,
}

/// Observed panels plus the threshold and exclusion mask.
#[derive(Debug, Clone)]
pub struct LikelihoodContext {
    precip: PrecipPanel,
    covariates: CovariatePanel,
    threshold: f64,
    cells: Vec<Cell>,
}

impl LikelihoodContext {
    /// Builds the context; cells with `0 < P < threshold` are masked out.
    pub fn new(precip: PrecipPanel, covariates: CovariatePanel, threshold: f64) -> Result<Self> {
        if precip.n_times() != covariates.n_times() {
            return Err(Error::dims("covariate rows", precip.n_times(), covariates.n_times()));
        }
        if precip.n_times() < 2 {
            return Err(Error::invalid("likelihood needs at least two hours"));
        }
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(Error::invalid(format!("threshold must be finite and >= 0, got {threshold}")));
        }
        let cells = precip
            .values()
            .iter()
            .map(|&p| {
                if p >= threshold {
                    Cell::Wet
                } else if p == 0.0 {
                    Cell::Dry
                } else {
                    Cell::Masked
                }
            })
            .collect();
        Ok(Self {
            precip,
            covariates,
            threshold,
            cells,
        })
    }

    pub fn precip(&self) -> &PrecipPanel {
        &self.precip
    }

    pub fn covariates(&self) -> &CovariatePanel {
        &self.covariates
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn n_times(&self) -> usize {
        self.precip.n_times()
    }

    pub fn n_stations(&self) -> usize {
        self.precip.n_stations()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.n_covariates()
    }

    /// `true` where the observation is excluded (`0 < P < u`), row-major.
    pub fn mask(&self) -> Vec<bool> {
        self.cells.iter().map(|c| *c == Cell::Masked).collect()
    }

    /// Number of response cells (rows `2..T`) entering the sum.
    pub fn n_obs_used(&self) -> usize {
        let m = self.n_stations();
        self.cells[m..].iter().filter(|c| **c != Cell::Masked).count()
    }

    pub(crate) fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.n_stations() != self.n_stations() {
            return Err(Error::dims("stations", self.n_stations(), params.n_stations()));
        }
        if params.n_covariates() != self.n_covariates() {
            return Err(Error::dims("covariates", self.n_covariates(), params.n_covariates()));
        }
        if params.threshold() != self.threshold {
            return Err(Error::invalid(format!(
                "parameter threshold {} differs from context threshold {}",
                params.threshold(),
                self.threshold
            )));
        }
        Ok(())
    }

    /// Sum over response rows `rows` (each conditioned on its predecessor)
    /// for a raw parameter vector in canonical order. Never fails; invalid
    /// regions evaluate to `-inf` or NaN.
    pub(crate) fn eval_raw(&self, x: &[f64], rows: Range<usize>) -> f64 {
        let m = self.n_stations();
        let (contagion, theta) = x.split_at(m * m);
        let u = self.threshold;
        let values = self.precip.values();
        let mut total = 0.0;
        for t in rows {
            let log_sigma = log_volatility(theta, self.covariates.row(t));
            let inv_sigma = (-log_sigma).exp();
            let prev = &values[(t - 1) * m..t * m];
            let cur = &values[t * m..(t + 1) * m];
            let cells = &self.cells[t * m..(t + 1) * m];
            for i in 0..m {
                let term = match cells[i] {
                    Cell::Masked => continue,
                    Cell::Wet => {
                        let row = &contagion[i * m..(i + 1) * m];
                        let mean: f64 = row.iter().zip(prev).map(|(b, p)| b * p).sum();
                        let z = (cur[i] - mean) * inv_sigma;
                        -0.5 * z * z - HALF_LN_2PI - log_sigma
                    }
                    Cell::Dry => {
                        let row = &contagion[i * m..(i + 1) * m];
                        let mean: f64 = row.iter().zip(prev).map(|(b, p)| b * p).sum();
                        log_normal_cdf((u - mean) * inv_sigma)
                    }
                };
                total += term;
            }
        }
        total
    }

    pub(crate) fn eval_vector(&self, x: &[f64]) -> f64 {
        self.eval_raw(x, 1..self.n_times())
    }
}

/// Censored log-likelihood over hours `2..T`.
///
/// Returns `-inf` (not an error) when a censored term underflows.
pub fn log_likelihood(params: &ModelParams, ctx: &LikelihoodContext) -> Result<f64> {
    log_likelihood_rows(params, ctx, 1..ctx.n_times())
}

/// Log-likelihood restricted to response rows `rows` (0-based, each `>= 1`).
pub fn log_likelihood_rows(params: &ModelParams, ctx: &LikelihoodContext, rows: Range<usize>) -> Result<f64> {
    ctx.check_params(params)?;
    if rows.start == 0 || rows.end > ctx.n_times() {
        return Err(Error::invalid(format!(
            "response rows {rows:?} outside 1..{}",
            ctx.n_times()
        )));
    }
    let value = ctx.eval_raw(&params.to_vector(), rows);
    if value.is_nan() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    Ok(value)
}

/// Central-difference gradient in canonical order (`B` row-major, then
/// `theta_0..theta_d`); the step for component `i` is `h * (1 + |x_i|)`.
pub fn grad_log_likelihood(params: &ModelParams, ctx: &LikelihoodContext, h: f64) -> Result<Vec<f64>> {
    ctx.check_params(params)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("gradient step must be positive, got {h}")));
    }
    let x = params.to_vector();
    if !ctx.eval_vector(&x).is_finite() {
        return Err(Error::NonFinite("log-likelihood at the gradient centre".into()));
    }
    central_difference(|v| ctx.eval_vector(v), &x, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(rows: Vec<Vec<f64>>, u: f64) -> LikelihoodContext {
        let t = rows.len();
        LikelihoodContext::new(
            PrecipPanel::from_rows_hourly(rows).unwrap(),
            CovariatePanel::constant(t, &[]).unwrap(),
            u,
        )
        .unwrap()
    }

    fn zero_params(u: f64) -> ModelParams {
        ModelParams::new(vec![vec![0.0]], vec![0.0], u).unwrap()
    }

    #[test]
    fn dry_hour_term() {
        let l = log_likelihood(&zero_params(0.7), &ctx(vec![vec![0.0], vec![0.0]], 0.7)).unwrap();
        // ln Phi(0.7) = ln 0.758036347776927
        assert!((l - (-0.277_023_942_277_131)).abs() < 1e-12, "{l}");
    }

    #[test]
    fn wet_hour_term() {
        let l = log_likelihood(&zero_params(0.7), &ctx(vec![vec![0.0], vec![1.5]], 0.7)).unwrap();
        assert!((l - (-2.043_939)).abs() < 1e-6, "{l}");
    }

    #[test]
    fn fully_masked_is_zero() {
        let l = log_likelihood(&zero_params(0.7), &ctx(vec![vec![0.3], vec![0.4], vec![0.1]], 0.7)).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn first_row_never_a_response() {
        let a = log_likelihood(&zero_params(0.7), &ctx(vec![vec![0.0], vec![0.0]], 0.7)).unwrap();
        let b = log_likelihood(&zero_params(0.7), &ctx(vec![vec![9.0], vec![0.0]], 0.7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_marks_small_positive_values() {
        let c = ctx(vec![vec![0.0], vec![0.4], vec![0.7]], 0.7);
        assert_eq!(c.mask(), vec![false, true, false]);
        assert_eq!(c.n_obs_used(), 1);
    }

    #[test]
    fn deep_tail_stays_finite() {
        let p = ModelParams::new(vec![vec![0.0]], vec![(1e-3f64).ln()], 0.7).unwrap();
        let l = log_likelihood(&p, &ctx(vec![vec![0.0], vec![0.0]], 0.7)).unwrap();
        assert!(l.is_finite() && l > -1e-6);
        let mut q = ModelParams::new(vec![vec![1.0]], vec![(1e-3f64).ln()], 0.7).unwrap();
        let l = log_likelihood(&q, &ctx(vec![vec![20.0], vec![0.0]], 0.7)).unwrap();
        assert!(l.is_finite() && l < -1e7);
        q = q.with_threshold(0.5).unwrap();
        assert!(log_likelihood(&q, &ctx(vec![vec![20.0], vec![0.0]], 0.7)).is_err());
    }

    #[test]
    fn quadratic_gradient_exact() {
        let f = |x: &[f64]| -(x[0] - 1.0).powi(2) - 3.0 * (x[1] + 2.0).powi(2) + x[0] * x[1];
        let g = central_difference(f, &[0.5, 0.25], 1e-3).unwrap();
        assert!((g[0] - (1.0 + 0.25)).abs() < 1e-9);
        assert!((g[1] - (-13.5 + 0.5)).abs() < 1e-9);
    }
}
