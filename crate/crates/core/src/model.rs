//! Model parameters and the generative mechanics.
//!
//! Each station follows a censored first-order vector autoregression:
//! the latent value `B_m . P_{t-1} + eps_{m,t}` is recorded when it reaches
//! the threshold `u` and recorded as zero otherwise. The innovations are
//! independent Gaussians sharing one standard deviation per hour,
//! `sigma_t = exp(theta_0 + theta_1 F_{t,1} + ... + theta_d F_{t,d})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{CovariatePanel, PrecipPanel};
use crate::rng::NormalStream;

/// Largest admissible `|ln sigma|`.
pub const MAX_LOG_VOLATILITY: f64 = 700.0;

/// Contagion matrix `B`, volatility coefficients `theta` (intercept first)
/// and censoring threshold `u` (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct ModelParams {
    n_stations: usize,
    contagion: Vec<f64>,
    volatility_coefs: Vec<f64>,
    threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    contagion: Vec<Vec<f64>>,
    volatility_coefs: Vec<f64>,
    threshold: f64,
}

impl TryFrom<ParamsRepr> for ModelParams {
    type Error = Error;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        ModelParams::new(r.contagion, r.volatility_coefs, r.threshold)
    }
}

impl From<ModelParams> for ParamsRepr {
    fn from(p: ModelParams) -> Self {
        ParamsRepr {
            contagion: p.contagion_rows(),
            volatility_coefs: p.volatility_coefs,
            threshold: p.threshold,
        }
    }
}

impl ModelParams {
    /// Build from the rows of `B`, `theta = (theta_0, ..., theta_d)` and `u`.
    pub fn new(contagion: Vec<Vec<f64>>, volatility_coefs: Vec<f64>, threshold: f64) -> Result<Self> {
        let m = contagion.len();
        let mut flat = Vec::with_capacity(m * m);
        for row in contagion {
            if row.len() != m {
                return Err(Error::dims("contagion row", m, row.len()));
            }
            flat.extend(row);
        }
        Self::from_flat(m, flat, volatility_coefs, threshold)
    }

    /// Build from `B` stored row-major.
    pub fn from_flat(n_stations: usize, contagion: Vec<f64>, volatility_coefs: Vec<f64>, threshold: f64) -> Result<Self> {
        if n_stations == 0 {
            return Err(Error::invalid("model needs at least one station"));
        }
        if contagion.len() != n_stations * n_stations {
            return Err(Error::dims("contagion matrix", n_stations * n_stations, contagion.len()));
        }
        if volatility_coefs.is_empty() {
            return Err(Error::invalid("volatility coefficients need at least the intercept"));
        }
        if contagion.iter().chain(&volatility_coefs).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(Error::invalid(format!("threshold must be finite and >= 0, got {threshold}")));
        }
        Ok(Self {
            n_stations,
            contagion,
            volatility_coefs,
            threshold,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn n_covariates(&self) -> usize {
        self.volatility_coefs.len() - 1
    }

    /// `M^2 + d + 1`
    pub fn n_free(&self) -> usize {
        self.contagion.len() + self.volatility_coefs.len()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn contagion(&self) -> &[f64] {
        &self.contagion
    }

    pub fn contagion_row(&self, m: usize) -> &[f64] {
        &self.contagion[m * self.n_stations..(m + 1) * self.n_stations]
    }

    pub fn contagion_rows(&self) -> Vec<Vec<f64>> {
        self.contagion.chunks(self.n_stations).map(<[f64]>::to_vec).collect()
    }

    /// `beta_{i,j}`: effect of station `j` at `t-1` on station `i` at `t`.
    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.contagion[i * self.n_stations + j]
    }

    pub fn volatility_coefs(&self) -> &[f64] {
        &self.volatility_coefs
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        Self::from_flat(self.n_stations, self.contagion.clone(), self.volatility_coefs.clone(), threshold)
    }

    /// Free parameters in canonical order: `B` row-major, then `theta_0..theta_d`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.contagion.clone();
        v.extend_from_slice(&self.volatility_coefs);
        v
    }

    /// Same shape and threshold, free parameters taken from `x`.
    pub fn with_vector(&self, x: &[f64]) -> Result<Self> {
        if x.len() != self.n_free() {
            return Err(Error::dims("parameter vector", self.n_free(), x.len()));
        }
        let k = self.contagion.len();
        Self::from_flat(self.n_stations, x[..k].to_vec(), x[k..].to_vec(), self.threshold)
    }

    /// Human-readable names in canonical order (`beta_11`, ..., `theta_0`, ...).
    pub fn parameter_names(&self) -> Vec<String> {
        let m = self.n_stations;
        let mut names: Vec<String> = (0..m * m).map(|k| format!("beta_{}{}", k / m + 1, k % m + 1)).collect();
        names.extend((0..self.volatility_coefs.len()).map(|j| format!("theta_{j}")));
        names
    }

    /// Parameters for the stations reordered as `order` (new station `i` is
    /// old station `order[i]`), matching [`PrecipPanel::permute_stations`].
    pub fn permute_stations(&self, order: &[usize]) -> Result<Self> {
        let m = self.n_stations;
        crate::panel::check_permutation(order, m)?;
        let contagion = (0..m * m).map(|k| self.beta(order[k / m], order[k % m])).collect();
        Ok(Self {
            contagion,
            ..self.clone()
        })
    }
}

/// `theta_0 + sum_j theta_j f_j`, without checks.
#[inline]
pub(crate) fn log_volatility(theta: &[f64], f: &[f64]) -> f64 {
    theta[0] + theta[1..].iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
}

fn guarded_volatility(theta: &[f64], f: &[f64], time: Option<usize>) -> Result<f64> {
    let exponent = log_volatility(theta, f);
    if !exponent.is_finite() || exponent.abs() > MAX_LOG_VOLATILITY {
        return Err(Error::VolatilityOverflow { exponent, time });
    }
    Ok(exponent.exp())
}

/// Innovation standard deviation for one covariate vector.
pub fn volatility(params: &ModelParams, covariates: &[f64]) -> Result<f64> {
    if covariates.len() != params.n_covariates() {
        return Err(Error::dims("covariate vector", params.n_covariates(), covariates.len()));
    }
    if covariates.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariate vector".into()));
    }
    guarded_volatility(&params.volatility_coefs, covariates, None)
}

/// Censored update with a given innovation scale.
#[inline]
pub(crate) fn advance(params: &ModelParams, prev: &[f64], sigma: f64, noise: &[f64], out: &mut [f64]) {
    let m = params.n_stations;
    let u = params.threshold;
    for (i, o) in out.iter_mut().enumerate() {
        let row = &params.contagion[i * m..(i + 1) * m];
        let mean: f64 = row.iter().zip(prev).map(|(b, p)| b * p).sum();
        let y = mean + sigma * noise[i];
        *o = if y >= u { y } else { 0.0 };
    }
}

/// One hour of the generator with explicit standard-normal noise.
pub fn step(params: &ModelParams, prev: &[f64], covariates: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    let m = params.n_stations;
    if prev.len() != m {
        return Err(Error::dims("previous state", m, prev.len()));
    }
    if noise.len() != m {
        return Err(Error::dims("noise vector", m, noise.len()));
    }
    if noise.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("noise vector".into()));
    }
    let sigma = volatility(params, covariates)?;
    let mut out = vec![0.0; m];
    advance(params, prev, sigma, noise, &mut out);
    Ok(out)
}

/// Settings for [`simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// `P_0`; each entry must be 0 or at least the threshold.
    pub initial_state: Vec<f64>,
    pub rng_seed: u64,
    pub n_steps: usize,
    /// Station labels for the output; `s1..sM` when empty.
    #[serde(default)]
    pub stations: Vec<String>,
}

impl SimulationConfig {
    /// Dry start for `n_stations` stations.
    pub fn new(n_stations: usize, n_steps: usize, rng_seed: u64) -> Self {
        Self {
            initial_state: vec![0.0; n_stations],
            rng_seed,
            n_steps,
            stations: Vec::new(),
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let m = params.n_stations();
        if self.initial_state.len() != m {
            return Err(Error::dims("initial state", m, self.initial_state.len()));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        for &p in &self.initial_state {
            if !p.is_finite() || !(p == 0.0 || p >= params.threshold()) {
                return Err(Error::invalid(format!(
                    "initial state entry {p} is neither 0 nor >= threshold {}",
                    params.threshold()
                )));
            }
        }
        if !self.stations.is_empty() && self.stations.len() != m {
            return Err(Error::dims("station labels", m, self.stations.len()));
        }
        Ok(())
    }

    fn station_labels(&self, m: usize) -> Vec<String> {
        if self.stations.is_empty() {
            (1..=m).map(|i| format!("s{i}")).collect()
        } else {
            self.stations.clone()
        }
    }
}

/// Forward simulation over the first `config.n_steps` rows of `covariates`.
///
/// Row `t` of the output is the censored update of row `t - 1` (of
/// `initial_state` for the first row) driven by covariate row `t`. Noise is
/// drawn station by station, hour by hour, from [`NormalStream`].
pub fn simulate(params: &ModelParams, covariates: &CovariatePanel, config: &SimulationConfig) -> Result<PrecipPanel> {
    config.validate(params)?;
    if covariates.n_covariates() != params.n_covariates() {
        return Err(Error::dims("covariate columns", params.n_covariates(), covariates.n_covariates()));
    }
    if covariates.n_times() != config.n_steps {
        return Err(Error::dims("covariate rows", config.n_steps, covariates.n_times()));
    }
    let m = params.n_stations();
    let mut stream = NormalStream::new(config.rng_seed);
    let mut values = vec![0.0; config.n_steps * m];
    let mut noise = vec![0.0; m];
    let mut prev = config.initial_state.clone();
    for t in 0..config.n_steps {
        let sigma = guarded_volatility(&params.volatility_coefs, covariates.row(t), Some(t))?;
        stream.fill_normal(&mut noise);
        let out = &mut values[t * m..(t + 1) * m];
        advance(params, &prev, sigma, &noise, out);
        prev.copy_from_slice(out);
    }
    Ok(PrecipPanel::new_unchecked(
        covariates.times().to_vec(),
        config.station_labels(m),
        values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(b: f64, theta: Vec<f64>, u: f64) -> ModelParams {
        ModelParams::new(vec![vec![b]], theta, u).unwrap()
    }

    #[test]
    fn volatility_zero_coefficients() {
        let p = ModelParams::new(vec![vec![0.0]], vec![0.0; 4], 0.7).unwrap();
        assert_eq!(volatility(&p, &[5.0, 1013.0, 80.0]).unwrap(), 1.0);
    }

    #[test]
    fn volatility_intercept_only() {
        let p = scalar(0.0, vec![2f64.ln(), 0.0], 0.7);
        assert!((volatility(&p, &[123.4]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn volatility_hand_evaluated() {
        let p = scalar(0.0, vec![0.1, 0.2, -0.3], 0.7);
        let s = volatility(&p, &[1.0, 2.0]).unwrap();
        assert!((s - (-0.3f64).exp()).abs() < 1e-15);
        assert!((s - 0.740_818).abs() < 1e-6);
    }

    #[test]
    fn volatility_overflow_and_dims() {
        let p = scalar(0.0, vec![0.0, 1.0], 0.7);
        assert!(matches!(volatility(&p, &[701.0]), Err(Error::VolatilityOverflow { .. })));
        assert!(matches!(volatility(&p, &[-701.0]), Err(Error::VolatilityOverflow { .. })));
        assert!(volatility(&p, &[699.0]).unwrap().is_finite());
        assert!(matches!(volatility(&p, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn step_censoring_floor() {
        let p = ModelParams::new(vec![vec![0.0; 2]; 2], vec![0.0], 0.7).unwrap();
        assert_eq!(step(&p, &[3.0, 1.0], &[], &[0.5, -2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn step_hand_evaluated() {
        let p = scalar(0.5, vec![0.0], 0.7);
        let wet = step(&p, &[2.0], &[], &[0.1]).unwrap();
        assert!((wet[0] - 1.1).abs() < 1e-15);
        assert_eq!(step(&p, &[2.0], &[], &[-0.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn step_boundary_is_wet() {
        let p = scalar(0.0, vec![0.0], 0.7);
        assert_eq!(step(&p, &[0.0], &[], &[0.7]).unwrap(), vec![0.7]);
    }

    #[test]
    fn step_dimension_errors() {
        let p = scalar(0.5, vec![0.0], 0.7);
        assert!(step(&p, &[1.0, 2.0], &[], &[0.0]).is_err());
        assert!(step(&p, &[1.0], &[], &[0.0, 0.0]).is_err());
        assert!(step(&p, &[1.0], &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn simulate_tiny_volatility_stays_dry() {
        let p = ModelParams::new(vec![vec![0.0; 3]; 3], vec![(1e-6f64).ln()], 0.7).unwrap();
        let cov = CovariatePanel::constant(500, &[]).unwrap();
        let panel = simulate(&p, &cov, &SimulationConfig::new(3, 500, 1)).unwrap();
        assert!(panel.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simulate_reports_overflow_time() {
        let p = scalar(0.0, vec![0.0, 1.0], 0.7);
        let cov = CovariatePanel::from_rows_hourly(vec![vec![0.0], vec![0.0], vec![800.0]]).unwrap();
        match simulate(&p, &cov, &SimulationConfig::new(1, 3, 1)) {
            Err(Error::VolatilityOverflow { time: Some(2), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_rejects_initial_state_below_threshold() {
        let p = scalar(0.0, vec![0.0], 0.7);
        let mut cfg = SimulationConfig::new(1, 3, 1);
        cfg.initial_state = vec![0.3];
        assert!(cfg.validate(&p).is_err());
        cfg.initial_state = vec![0.7];
        assert!(cfg.validate(&p).is_ok());
    }

    #[test]
    fn params_serde_round_trip() {
        let p = ModelParams::new(vec![vec![0.5, 0.1], vec![0.2, 0.3]], vec![0.1, 0.2], 0.7).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        assert!(serde_json::from_str::<ModelParams>(r#"{"contagion":[[1.0,2.0]],"volatility_coefs":[0.0],"threshold":0.7}"#).is_err());
    }
}
