//! Validation statistics, computed the same way on observed and simulated
//! panels, plus Monte-Carlo envelopes and horizon-by-horizon forecast skill.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{advance, log_volatility, simulate, ModelParams, SimulationConfig, MAX_LOG_VOLATILITY};
use crate::panel::{CovariatePanel, PrecipPanel};
use crate::rng::{derive_seed, NormalStream};
use crate::special::chi_square_ln_sf;

/// Classification of an hourly value as wet or dry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "threshold", rename_all = "snake_case")]
pub enum WetRule {
    /// Any strictly positive amount is wet.
    Positive,
    /// Values at or above the threshold are wet.
    AtLeast(f64),
}

impl WetRule {
    /// Default for observed series: the 0.2 mm instrument resolution.
    pub const OBSERVED: WetRule = WetRule::AtLeast(0.2);

    #[inline]
    pub fn is_wet(self, v: f64) -> bool {
        match self {
            WetRule::Positive => v > 0.0,
            WetRule::AtLeast(u) => v >= u,
        }
    }
}

fn check_station(panel: &PrecipPanel, station: usize) -> Result<()> {
    if station >= panel.n_stations() {
        return Err(Error::invalid(format!(
            "station index {station} out of range (panel has {})",
            panel.n_stations()
        )));
    }
    Ok(())
}

/// Maximal dry runs of a series, in order of occurrence.
pub fn dry_runs(series: impl IntoIterator<Item = f64>, rule: WetRule) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = 0;
    for v in series {
        if rule.is_wet(v) {
            if current > 0 {
                runs.push(current);
            }
            current = 0;
        } else {
            current += 1;
        }
    }
    if current > 0 {
        runs.push(current);
    }
    runs
}

/// Sorted lengths (hours) of the maximal dry runs at one station, including
/// runs touching either end of the series.
pub fn dry_spell_lengths(panel: &PrecipPanel, station: usize, rule: WetRule) -> Vec<usize> {
    let mut runs = dry_runs(panel.column(station), rule);
    runs.sort_unstable();
    runs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionProbs {
    /// `None` when no wet hour has a successor.
    pub p_wet_given_wet: Option<f64>,
    /// `None` when no dry hour has a successor.
    pub p_wet_given_dry: Option<f64>,
    pub n_wet_prev: usize,
    pub n_dry_prev: usize,
}

impl TransitionProbs {
    pub fn p_dry_given_wet(&self) -> Option<f64> {
        self.p_wet_given_wet.map(|p| 1.0 - p)
    }

    pub fn p_dry_given_dry(&self) -> Option<f64> {
        self.p_wet_given_dry.map(|p| 1.0 - p)
    }
}

/// Empirical wet/dry transition frequencies over consecutive hours.
pub fn transition_probs(panel: &PrecipPanel, station: usize, rule: WetRule) -> Result<TransitionProbs> {
    check_station(panel, station)?;
    if panel.n_times() < 2 {
        return Err(Error::invalid("transition probabilities need at least two hours"));
    }
    Ok(series_transitions(&panel.column(station), rule))
}

fn series_transitions(series: &[f64], rule: WetRule) -> TransitionProbs {
    let (mut ww, mut w, mut dw, mut d) = (0usize, 0usize, 0usize, 0usize);
    for pair in series.windows(2) {
        let next_wet = rule.is_wet(pair[1]);
        if rule.is_wet(pair[0]) {
            w += 1;
            ww += usize::from(next_wet);
        } else {
            d += 1;
            dw += usize::from(next_wet);
        }
    }
    TransitionProbs {
        p_wet_given_wet: (w > 0).then(|| ww as f64 / w as f64),
        p_wet_given_dry: (d > 0).then(|| dw as f64 / d as f64),
        n_wet_prev: w,
        n_dry_prev: d,
    }
}

/// Default intensity bin edges (mm): (0.2,0.8], (0.8,1.4], (1.4,2], (2,4], (4,inf).
pub const DEFAULT_INTENSITY_EDGES: [f64; 5] = [0.2, 0.8, 1.4, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityBin {
    pub lower: f64,
    /// `None` for the open last bin.
    pub upper: Option<f64>,
    pub count: usize,
    pub wet_next: usize,
    pub p_wet_next: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceTable {
    pub bins: Vec<IntensityBin>,
    /// Pearson statistic over the non-empty bins x {wet, dry}.
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// `log10` of the p-value; meaningful below the double range too.
    pub log10_p_value: f64,
    /// Indices of empty bins left out of the test.
    pub dropped_bins: Vec<usize>,
}

/// Occurrence probability at `t + 1` conditional on the intensity bin at `t`,
/// with a chi-square test of independence.
///
/// Bins are `(edges[k], edges[k + 1]]`, the last one open above. Occurrence
/// is judged with `rule`.
pub fn occurrence_given_intensity(
    panel: &PrecipPanel,
    station: usize,
    bin_edges: &[f64],
    rule: WetRule,
) -> Result<OccurrenceTable> {
    check_station(panel, station)?;
    if bin_edges.is_empty() || bin_edges.windows(2).any(|w| w[1] <= w[0]) || bin_edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("bin edges must be finite and strictly increasing"));
    }
    let k = bin_edges.len();
    let mut count = vec![0usize; k];
    let mut wet = vec![0usize; k];
    let series = panel.column(station);
    for pair in series.windows(2) {
        let v = pair[0];
        if v <= bin_edges[0] {
            continue;
        }
        let bin = bin_edges[1..].iter().position(|&e| v <= e).unwrap_or(k - 1);
        count[bin] += 1;
        wet[bin] += usize::from(rule.is_wet(pair[1]));
    }

    let bins: Vec<IntensityBin> = (0..k)
        .map(|b| IntensityBin {
            lower: bin_edges[b],
            upper: bin_edges.get(b + 1).copied(),
            count: count[b],
            wet_next: wet[b],
            p_wet_next: (count[b] > 0).then(|| wet[b] as f64 / count[b] as f64),
        })
        .collect();
    let dropped_bins: Vec<usize> = (0..k).filter(|&b| count[b] == 0).collect();
    let used: Vec<usize> = (0..k).filter(|&b| count[b] > 0).collect();

    let n: usize = used.iter().map(|&b| count[b]).sum();
    let n_wet: usize = used.iter().map(|&b| wet[b]).sum();
    let n_dry = n - n_wet;
    let (chi_square, df) = if used.len() < 2 || n_wet == 0 || n_dry == 0 {
        (0.0, 0)
    } else {
        let stat = used
            .iter()
            .map(|&b| {
                let row = count[b] as f64;
                let e_wet = row * n_wet as f64 / n as f64;
                let e_dry = row * n_dry as f64 / n as f64;
                let o_wet = wet[b] as f64;
                let o_dry = (count[b] - wet[b]) as f64;
                (o_wet - e_wet).powi(2) / e_wet + (o_dry - e_dry).powi(2) / e_dry
            })
            .sum();
        (stat, used.len() - 1)
    };
    let ln_p = if df == 0 { 0.0 } else { chi_square_ln_sf(chi_square, df as f64) };
    Ok(OccurrenceTable {
        bins,
        chi_square,
        degrees_of_freedom: df,
        p_value: ln_p.exp(),
        log10_p_value: ln_p / std::f64::consts::LN_10,
        dropped_bins,
    })
}

/// Pearson correlation of `(x_t, y_{t+lag})` over the overlapping hours.
///
/// `None` when either overlapping segment has zero variance.
pub fn lagged_correlation(x: &[f64], y: &[f64], lag: i64) -> Option<f64> {
    let n = x.len().min(y.len());
    let shift = lag.unsigned_abs() as usize;
    if shift >= n {
        return None;
    }
    let len = n - shift;
    let (xs, ys) = if lag >= 0 {
        (&x[..len], &y[shift..shift + len])
    } else {
        (&x[shift..shift + len], &y[..len])
    };
    let mx = xs.iter().sum::<f64>() / len as f64;
    let my = ys.iter().sum::<f64>() / len as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(ys) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation between station `a` at `t` and station `b` at `t + lag`, per lag.
pub fn cross_correlation(panel: &PrecipPanel, station_a: usize, station_b: usize, lags: &[i64]) -> Result<Vec<Option<f64>>> {
    check_station(panel, station_a)?;
    check_station(panel, station_b)?;
    let t = panel.n_times();
    if let Some(bad) = lags.iter().find(|l| 2 * l.unsigned_abs() as usize >= t) {
        return Err(Error::invalid(format!("lag {bad} too large for {t} hours (need |lag| < T/2)")));
    }
    let x = panel.column(station_a);
    let y = panel.column(station_b);
    Ok(lags.iter().map(|&l| lagged_correlation(&x, &y, l)).collect())
}

/// Type-7 (linear interpolation between order statistics) quantile of a
/// sorted, non-empty sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub prob: f64,
    pub observed: f64,
    pub simulated: f64,
}

/// Empirical quantiles of both samples on a shared probability grid.
pub fn qq_pairs(observed: &[f64], simulated: &[f64], probs: &[f64]) -> Result<Vec<QqPoint>> {
    if observed.is_empty() || simulated.is_empty() {
        return Err(Error::invalid("quantile-quantile pairs need non-empty samples"));
    }
    let (o, s) = (sorted_copy(observed), sorted_copy(simulated));
    Ok(probs
        .iter()
        .map(|&p| QqPoint {
            prob: p,
            observed: quantile_sorted(&o, p),
            simulated: quantile_sorted(&s, p),
        })
        .collect())
}

/// Pointwise quantile bands of a vector-valued statistic over replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub quantiles: Vec<f64>,
    /// `bands[q][i]`: quantile `q` of point `i`; NaN where no replica was defined.
    pub bands: Vec<Vec<f64>>,
    pub n_replicas: usize,
}

impl Envelope {
    /// Reduce per-replica statistic vectors; NaN entries are skipped.
    pub fn from_samples(samples: &[Vec<f64>], quantiles: &[f64]) -> Result<Self> {
        let len = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != len) {
            return Err(Error::invalid("statistic returned vectors of different lengths"));
        }
        let mut bands = vec![vec![f64::NAN; len]; quantiles.len()];
        let mut column = Vec::with_capacity(samples.len());
        for i in 0..len {
            column.clear();
            column.extend(samples.iter().map(|s| s[i]).filter(|v| !v.is_nan()));
            if column.is_empty() {
                continue;
            }
            column.sort_by(f64::total_cmp);
            for (q, band) in quantiles.iter().zip(&mut bands) {
                band[i] = quantile_sorted(&column, *q);
            }
        }
        Ok(Self {
            quantiles: quantiles.to_vec(),
            bands,
            n_replicas: samples.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.bands.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Band values for points `range`, as `(lo, median, hi)` for the first,
    /// middle and last configured quantiles.
    pub fn band(&self, range: std::ops::Range<usize>) -> Band {
        let q = self.quantiles.len();
        let pick = |k: usize| self.bands[k][range.clone()].to_vec();
        Band {
            lo: pick(0),
            median: pick(q / 2),
            hi: pick(q - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: Vec<f64>,
    pub median: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Default envelope quantiles: a 98% band and the median.
pub const DEFAULT_ENVELOPE_QUANTILES: [f64; 3] = [0.01, 0.5, 0.99];

/// Apply `statistic` to `n_replicas` independent simulations and return
/// pointwise quantiles. Replica `r` uses seed `derive_seed(seed, r)`.
pub fn envelope<S>(
    params: &ModelParams,
    covariates: &CovariatePanel,
    initial_state: &[f64],
    seed: u64,
    n_replicas: usize,
    quantiles: &[f64],
    statistic: S,
) -> Result<Envelope>
where
    S: Fn(&PrecipPanel) -> Vec<f64> + Sync,
{
    let samples = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let config = SimulationConfig {
                initial_state: initial_state.to_vec(),
                rng_seed: derive_seed(seed, r as u64),
                n_steps: covariates.n_times(),
                stations: Vec::new(),
            };
            simulate(params, covariates, &config).map(|p| statistic(&p))
        })
        .collect::<Result<Vec<_>>>()?;
    Envelope::from_samples(&samples, quantiles)
}

/// How Monte-Carlo paths are turned into a wet/dry forecast.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForecastRule {
    /// Predict wet when at least `threshold` of the paths are wet.
    Majority { threshold: f64 },
    /// Predict wet with probability equal to the wet-path fraction; hit
    /// rates are the expected hit rates of that randomized forecast, i.e.
    /// of issuing a single simulated path as the forecast.
    #[default]
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastOptions {
    pub horizons: Vec<usize>,
    pub n_paths: usize,
    pub rule: ForecastRule,
    /// Wet rule for the observed panel (states and outcomes).
    pub observed_wet: WetRule,
    /// Use every `origin_stride`-th hour as a forecast origin.
    pub origin_stride: usize,
    pub seed: u64,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            horizons: (1..=24).collect(),
            n_paths: 100,
            rule: ForecastRule::default(),
            observed_wet: WetRule::OBSERVED,
            origin_stride: 1,
            seed: 20_150_101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitRates {
    /// P(predict dry | dry)
    pub dry_given_dry: Option<f64>,
    /// P(predict wet | wet)
    pub wet_given_wet: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationForecastSkill {
    pub station: String,
    pub horizons: Vec<usize>,
    pub model: Vec<HitRates>,
    pub persistence: Vec<HitRates>,
    pub n_dry: Vec<usize>,
    pub n_wet: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastOdds {
    pub rule: ForecastRule,
    pub n_paths: usize,
    pub n_origins: usize,
    pub stations: Vec<StationForecastSkill>,
}

#[derive(Clone, Default)]
struct Tally {
    // [station][horizon]
    model_dry_hits: Vec<Vec<f64>>,
    model_wet_hits: Vec<Vec<f64>>,
    persist_dry_hits: Vec<Vec<usize>>,
    persist_wet_hits: Vec<Vec<usize>>,
    n_dry: Vec<Vec<usize>>,
    n_wet: Vec<Vec<usize>>,
}

impl Tally {
    fn new(m: usize, h: usize) -> Self {
        Self {
            model_dry_hits: vec![vec![0.0; h]; m],
            model_wet_hits: vec![vec![0.0; h]; m],
            persist_dry_hits: vec![vec![0; h]; m],
            persist_wet_hits: vec![vec![0; h]; m],
            n_dry: vec![vec![0; h]; m],
            n_wet: vec![vec![0; h]; m],
        }
    }

    fn absorb(&mut self, other: &Tally) {
        for s in 0..self.n_dry.len() {
            for k in 0..self.n_dry[s].len() {
                self.model_dry_hits[s][k] += other.model_dry_hits[s][k];
                self.model_wet_hits[s][k] += other.model_wet_hits[s][k];
                self.persist_dry_hits[s][k] += other.persist_dry_hits[s][k];
                self.persist_wet_hits[s][k] += other.persist_wet_hits[s][k];
                self.n_dry[s][k] += other.n_dry[s][k];
                self.n_wet[s][k] += other.n_wet[s][k];
            }
        }
    }
}

/// Hit rates of Monte-Carlo forecasts from the observed state, against the
/// persistence forecast, for every station and horizon.
///
/// Origins are hours `t` with `t + max(horizons) < T`; future covariates are
/// taken as known. Paths from origin `t` use seed `derive_seed(seed, t)` and
/// the per-origin tallies are summed in origin order.
pub fn forecast_odds(
    params: &ModelParams,
    covariates: &CovariatePanel,
    observed: &PrecipPanel,
    options: &ForecastOptions,
) -> Result<ForecastOdds> {
    let m = params.n_stations();
    if observed.n_stations() != m {
        return Err(Error::dims("observed stations", m, observed.n_stations()));
    }
    if covariates.n_covariates() != params.n_covariates() {
        return Err(Error::dims("covariate columns", params.n_covariates(), covariates.n_covariates()));
    }
    if covariates.n_times() != observed.n_times() {
        return Err(Error::dims("covariate rows", observed.n_times(), covariates.n_times()));
    }
    if options.horizons.is_empty() || options.horizons.contains(&0) {
        return Err(Error::invalid("horizons must be non-empty and >= 1"));
    }
    if options.n_paths < 100 {
        return Err(Error::invalid(format!("n_paths must be at least 100, got {}", options.n_paths)));
    }
    if let ForecastRule::Majority { threshold } = options.rule {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::invalid("majority threshold must lie in [0, 1]"));
        }
    }
    let max_h = *options.horizons.iter().max().unwrap();
    let t_len = observed.n_times();
    if max_h >= t_len {
        return Err(Error::invalid(format!(
            "forecast horizon {max_h} exceeds the {t_len}-hour covariate panel"
        )));
    }
    for t in 0..t_len {
        let e = log_volatility(params.volatility_coefs(), covariates.row(t));
        if !e.is_finite() || e.abs() > MAX_LOG_VOLATILITY {
            return Err(Error::VolatilityOverflow { exponent: e, time: Some(t) });
        }
    }
    let sigma: Vec<f64> = (0..t_len)
        .map(|t| log_volatility(params.volatility_coefs(), covariates.row(t)).exp())
        .collect();

    let stride = options.origin_stride.max(1);
    let origins: Vec<usize> = (0..t_len - max_h).step_by(stride).collect();
    let nh = options.horizons.len();
    let wet_obs = options.observed_wet;

    let per_origin: Vec<Tally> = origins
        .par_iter()
        .map(|&t0| {
            let mut tally = Tally::new(m, nh);
            let mut stream = NormalStream::new(derive_seed(options.seed, t0 as u64));
            // wet path counts per horizon step (1..=max_h) and station
            let mut wet_paths = vec![0usize; max_h * m];
            let mut state = vec![0.0; m];
            let mut next = vec![0.0; m];
            let mut noise = vec![0.0; m];
            for _ in 0..options.n_paths {
                state.copy_from_slice(observed.row(t0));
                for h in 1..=max_h {
                    stream.fill_normal(&mut noise);
                    advance(params, &state, sigma[t0 + h], &noise, &mut next);
                    for s in 0..m {
                        wet_paths[(h - 1) * m + s] += usize::from(next[s] > 0.0);
                    }
                    std::mem::swap(&mut state, &mut next);
                }
            }
            for (k, &h) in options.horizons.iter().enumerate() {
                for s in 0..m {
                    let frac = wet_paths[(h - 1) * m + s] as f64 / options.n_paths as f64;
                    let p_wet = match options.rule {
                        ForecastRule::Majority { threshold } => f64::from(u8::from(frac >= threshold)),
                        ForecastRule::Probabilistic => frac,
                    };
                    let now_wet = wet_obs.is_wet(observed.get(t0, s));
                    if wet_obs.is_wet(observed.get(t0 + h, s)) {
                        tally.n_wet[s][k] += 1;
                        tally.model_wet_hits[s][k] += p_wet;
                        tally.persist_wet_hits[s][k] += usize::from(now_wet);
                    } else {
                        tally.n_dry[s][k] += 1;
                        tally.model_dry_hits[s][k] += 1.0 - p_wet;
                        tally.persist_dry_hits[s][k] += usize::from(!now_wet);
                    }
                }
            }
            tally
        })
        .collect();

    let mut total = Tally::new(m, nh);
    for t in &per_origin {
        total.absorb(t);
    }
    let ratio = |hits: f64, n: usize| (n > 0).then(|| hits / n as f64);
    let stations = (0..m)
        .map(|s| StationForecastSkill {
            station: observed.stations()[s].clone(),
            horizons: options.horizons.clone(),
            model: (0..nh)
                .map(|k| HitRates {
                    dry_given_dry: ratio(total.model_dry_hits[s][k], total.n_dry[s][k]),
                    wet_given_wet: ratio(total.model_wet_hits[s][k], total.n_wet[s][k]),
                })
                .collect(),
            persistence: (0..nh)
                .map(|k| HitRates {
                    dry_given_dry: ratio(total.persist_dry_hits[s][k] as f64, total.n_dry[s][k]),
                    wet_given_wet: ratio(total.persist_wet_hits[s][k] as f64, total.n_wet[s][k]),
                })
                .collect(),
            n_dry: total.n_dry[s].clone(),
            n_wet: total.n_wet[s].clone(),
        })
        .collect();
    Ok(ForecastOdds {
        rule: options.rule,
        n_paths: options.n_paths,
        n_origins: origins.len(),
        stations,
    })
}

impl StationForecastSkill {
    /// Smallest horizon from which the model matches or beats persistence on
    /// both hit rates at every later horizon; `None` if there is none.
    pub fn crossover_horizon(&self) -> Option<usize> {
        let beats = |k: usize| {
            let ge = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => a >= b,
                _ => false,
            };
            ge(self.model[k].dry_given_dry, self.persistence[k].dry_given_dry)
                && ge(self.model[k].wet_given_wet, self.persistence[k].wet_given_wet)
        };
        let mut start = None;
        for k in (0..self.horizons.len()).rev() {
            if beats(k) {
                start = Some(self.horizons[k]);
            } else {
                break;
            }
        }
        start
    }
}

/// Settings for [`diagnostics_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsOptions {
    pub n_replicas: usize,
    /// Envelope quantiles `(lo, median, hi)`.
    pub quantiles: Vec<f64>,
    pub auto_lags: Vec<i64>,
    pub cross_lags: Vec<i64>,
    /// Probability grid for the intensity and dry-spell QQ tables.
    pub qq_probs: Vec<f64>,
    pub observed_wet: WetRule,
    pub bin_edges: Vec<f64>,
    pub seed: u64,
    /// Forecast skill section; skipped when `None`.
    pub forecast: Option<ForecastOptions>,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            n_replicas: 1000,
            quantiles: DEFAULT_ENVELOPE_QUANTILES.to_vec(),
            auto_lags: (0..=10).collect(),
            cross_lags: (-5..=5).collect(),
            qq_probs: (1..=99).map(|k| k as f64 / 100.0).collect(),
            observed_wet: WetRule::OBSERVED,
            bin_edges: DEFAULT_INTENSITY_EDGES.to_vec(),
            seed: 20_150_101,
            forecast: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationDrySpells {
    pub station: String,
    pub lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationTransitions {
    pub station: String,
    pub observed: TransitionProbs,
    pub wet_given_wet: Band,
    pub wet_given_dry: Band,
    /// Replica values, for density plots.
    pub simulated_wet_given_wet: Vec<f64>,
    pub simulated_wet_given_dry: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub station_a: String,
    pub station_b: String,
    pub lags: Vec<i64>,
    pub observed: Vec<Option<f64>>,
    pub band: Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QqKind {
    Intensity,
    DrySpell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqSeries {
    pub kind: QqKind,
    pub station: String,
    pub probs: Vec<f64>,
    /// Observed quantiles; NaN when the observed sample is empty.
    pub observed: Vec<f64>,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationOccurrence {
    pub station: String,
    pub table: OccurrenceTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub stations: Vec<String>,
    pub n_replicas: usize,
    pub quantiles: Vec<f64>,
    pub dry_spells: Vec<StationDrySpells>,
    pub transitions: Vec<StationTransitions>,
    pub correlations: Vec<CorrelationSeries>,
    pub qq: Vec<QqSeries>,
    pub contingency: Vec<StationOccurrence>,
    pub odds_ratios: Option<ForecastOdds>,
}

struct StatLayout {
    m: usize,
    n_auto: usize,
    n_cross: usize,
    n_pairs: usize,
    n_probs: usize,
}

impl StatLayout {
    fn transitions(&self) -> usize {
        0
    }
    fn auto(&self) -> usize {
        2 * self.m
    }
    fn cross(&self) -> usize {
        self.auto() + self.m * self.n_auto
    }
    fn intensity(&self) -> usize {
        self.cross() + self.n_pairs * self.n_cross
    }
    fn dry(&self) -> usize {
        self.intensity() + self.m * self.n_probs
    }
    fn len(&self) -> usize {
        self.dry() + self.m * self.n_probs
    }
}

fn station_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect()
}

fn panel_statistics(panel: &PrecipPanel, rule: WetRule, opts: &DiagnosticsOptions, layout: &StatLayout) -> Vec<f64> {
    let m = panel.n_stations();
    let columns: Vec<Vec<f64>> = (0..m).map(|s| panel.column(s)).collect();
    let mut out = Vec::with_capacity(layout.len());
    for col in &columns {
        let tp = series_transitions(col, rule);
        out.push(tp.p_wet_given_wet.unwrap_or(f64::NAN));
        out.push(tp.p_wet_given_dry.unwrap_or(f64::NAN));
    }
    for col in &columns {
        out.extend(opts.auto_lags.iter().map(|&l| lagged_correlation(col, col, l).unwrap_or(f64::NAN)));
    }
    for (a, b) in station_pairs(m) {
        out.extend(
            opts.cross_lags
                .iter()
                .map(|&l| lagged_correlation(&columns[b], &columns[a], l).unwrap_or(f64::NAN)),
        );
    }
    for col in &columns {
        let wet: Vec<f64> = sorted_copy(&col.iter().copied().filter(|&v| rule.is_wet(v)).collect::<Vec<_>>());
        out.extend(opts.qq_probs.iter().map(|&p| if wet.is_empty() { f64::NAN } else { quantile_sorted(&wet, p) }));
    }
    for col in &columns {
        let mut runs: Vec<f64> = dry_runs(col.iter().copied(), rule).into_iter().map(|r| r as f64).collect();
        runs.sort_by(f64::total_cmp);
        out.extend(opts.qq_probs.iter().map(|&p| if runs.is_empty() { f64::NAN } else { quantile_sorted(&runs, p) }));
    }
    out
}

/// Full validation report of `params` against an observed (validation) panel.
///
/// Replicas are simulated over the observed window from the observed first
/// row (values below the threshold set to zero) with the given covariates.
pub fn diagnostics_report(
    observed: &PrecipPanel,
    covariates: &CovariatePanel,
    params: &ModelParams,
    options: &DiagnosticsOptions,
) -> Result<DiagnosticsReport> {
    let m = params.n_stations();
    if observed.n_stations() != m {
        return Err(Error::dims("observed stations", m, observed.n_stations()));
    }
    if covariates.n_times() != observed.n_times() {
        return Err(Error::dims("covariate rows", observed.n_times(), covariates.n_times()));
    }
    if options.quantiles.len() < 3 || options.quantiles.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("envelope quantiles must be (lo, median, hi) in increasing order"));
    }
    if options.n_replicas == 0 {
        return Err(Error::invalid("envelope needs at least one replica"));
    }
    let t = observed.n_times();
    for lags in [&options.auto_lags, &options.cross_lags] {
        if let Some(bad) = lags.iter().find(|l| 2 * l.unsigned_abs() as usize >= t) {
            return Err(Error::invalid(format!("lag {bad} too large for {t} hours")));
        }
    }

    let pairs = station_pairs(m);
    let layout = StatLayout {
        m,
        n_auto: options.auto_lags.len(),
        n_cross: options.cross_lags.len(),
        n_pairs: pairs.len(),
        n_probs: options.qq_probs.len(),
    };
    let u = params.threshold();
    let initial: Vec<f64> = observed.row(0).iter().map(|&v| if v >= u { v } else { 0.0 }).collect();
    let samples = (0..options.n_replicas)
        .into_par_iter()
        .map(|r| {
            let config = SimulationConfig {
                initial_state: initial.clone(),
                rng_seed: derive_seed(options.seed, r as u64),
                n_steps: t,
                stations: Vec::new(),
            };
            simulate(params, covariates, &config).map(|p| panel_statistics(&p, WetRule::Positive, options, &layout))
        })
        .collect::<Result<Vec<_>>>()?;
    let env = Envelope::from_samples(&samples, &options.quantiles)?;
    let obs_stats = panel_statistics(observed, options.observed_wet, options, &layout);
    let names = observed.stations();

    let transitions = (0..m)
        .map(|s| {
            let i = layout.transitions() + 2 * s;
            Ok(StationTransitions {
                station: names[s].clone(),
                observed: transition_probs(observed, s, options.observed_wet)?,
                wet_given_wet: env.band(i..i + 1),
                wet_given_dry: env.band(i + 1..i + 2),
                simulated_wet_given_wet: samples.iter().map(|v| v[i]).collect(),
                simulated_wet_given_dry: samples.iter().map(|v| v[i + 1]).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let option_vec = |r: std::ops::Range<usize>| -> Vec<Option<f64>> {
        obs_stats[r].iter().map(|v| (!v.is_nan()).then_some(*v)).collect()
    };
    let mut correlations = Vec::new();
    for s in 0..m {
        let i = layout.auto() + s * layout.n_auto;
        correlations.push(CorrelationSeries {
            station_a: names[s].clone(),
            station_b: names[s].clone(),
            lags: options.auto_lags.clone(),
            observed: option_vec(i..i + layout.n_auto),
            band: env.band(i..i + layout.n_auto),
        });
    }
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let i = layout.cross() + k * layout.n_cross;
        // correlation of station b at t with station a at t + lag
        correlations.push(CorrelationSeries {
            station_a: names[b].clone(),
            station_b: names[a].clone(),
            lags: options.cross_lags.clone(),
            observed: option_vec(i..i + layout.n_cross),
            band: env.band(i..i + layout.n_cross),
        });
    }

    let mut qq = Vec::new();
    for (kind, base) in [(QqKind::Intensity, layout.intensity()), (QqKind::DrySpell, layout.dry())] {
        for s in 0..m {
            let i = base + s * layout.n_probs;
            qq.push(QqSeries {
                kind,
                station: names[s].clone(),
                probs: options.qq_probs.clone(),
                observed: obs_stats[i..i + layout.n_probs].to_vec(),
                band: env.band(i..i + layout.n_probs),
            });
        }
    }

    let contingency = (0..m)
        .map(|s| {
            Ok(StationOccurrence {
                station: names[s].clone(),
                table: occurrence_given_intensity(observed, s, &options.bin_edges, options.observed_wet)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let odds_ratios = match &options.forecast {
        Some(f) => Some(forecast_odds(params, covariates, observed, f)?),
        None => None,
    };

    Ok(DiagnosticsReport {
        stations: names.to_vec(),
        n_replicas: options.n_replicas,
        quantiles: options.quantiles.clone(),
        dry_spells: (0..m)
            .map(|s| StationDrySpells {
                station: names[s].clone(),
                lengths: dry_spell_lengths(observed, s, options.observed_wet),
            })
            .collect(),
        transitions,
        correlations,
        qq,
        contingency,
        odds_ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(series: &[f64]) -> PrecipPanel {
        PrecipPanel::from_rows_hourly(series.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn dry_spells_examples() {
        let p = single(&[0.0, 0.0, 1.2, 0.0, 0.0, 0.0, 0.8]);
        assert_eq!(dry_spell_lengths(&p, 0, WetRule::Positive), vec![2, 3]);
        assert!(dry_spell_lengths(&single(&[1.0, 2.0, 3.0]), 0, WetRule::Positive).is_empty());
        assert_eq!(dry_spell_lengths(&single(&[0.0; 9]), 0, WetRule::Positive), vec![9]);
    }

    #[test]
    fn transitions_examples() {
        let tp = transition_probs(&single(&[1.0, 1.0, 1.0, 0.0]), 0, WetRule::Positive).unwrap();
        assert_eq!(tp.p_wet_given_wet, Some(2.0 / 3.0));
        assert_eq!(tp.p_wet_given_dry, None);
        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let tp = transition_probs(&single(&alt), 0, WetRule::Positive).unwrap();
        assert_eq!(tp.p_wet_given_dry, Some(1.0));
        assert_eq!(tp.p_wet_given_wet, Some(0.0));
        assert_eq!(tp.p_dry_given_wet(), Some(1.0));
        assert!(transition_probs(&single(&[1.0]), 0, WetRule::Positive).is_err());
    }

    #[test]
    fn heavy_rain_always_followed_by_rain() {
        let series = [5.0, 1.0, 0.0, 6.0, 0.3, 0.0, 0.0, 4.5, 2.0, 0.5, 0.0];
        let table = occurrence_given_intensity(&single(&series), 0, &DEFAULT_INTENSITY_EDGES, WetRule::OBSERVED).unwrap();
        assert_eq!(table.bins[4].p_wet_next, Some(1.0));
        assert_eq!(table.bins[4].count, 3);
    }

    #[test]
    fn empty_bins_reduce_degrees_of_freedom() {
        let series = [5.0, 1.0, 0.0, 5.0, 0.0, 0.5, 0.0, 0.5, 0.5, 5.0, 5.0];
        let table = occurrence_given_intensity(&single(&series), 0, &DEFAULT_INTENSITY_EDGES, WetRule::OBSERVED).unwrap();
        assert_eq!(table.dropped_bins, vec![2, 3]);
        assert_eq!(table.degrees_of_freedom, 2);
        assert!(table.p_value > 0.0 && table.p_value <= 1.0);
    }

    #[test]
    fn bad_bin_edges() {
        assert!(occurrence_given_intensity(&single(&[1.0, 2.0]), 0, &[1.0, 1.0], WetRule::Positive).is_err());
    }

    #[test]
    fn self_correlation_at_zero_lag() {
        let p = single(&[0.0, 1.0, 3.0, 0.0, 2.0, 0.0]);
        let c = cross_correlation(&p, 0, 0, &[0]).unwrap();
        assert!((c[0].unwrap() - 1.0).abs() < 1e-15);
        assert!(cross_correlation(&p, 0, 0, &[3]).is_err());
        assert_eq!(cross_correlation(&single(&[1.0; 10]), 0, 0, &[1]).unwrap(), vec![None]);
    }

    #[test]
    fn qq_identity_and_scaling() {
        let obs = [0.7, 1.0, 2.5, 4.0, 9.0];
        let double: Vec<f64> = obs.iter().map(|v| 2.0 * v).collect();
        let probs = [0.1, 0.5, 0.9];
        for p in qq_pairs(&obs, &obs, &probs).unwrap() {
            assert_eq!(p.observed, p.simulated);
        }
        for p in qq_pairs(&obs, &double, &probs).unwrap() {
            assert!((p.simulated - 2.0 * p.observed).abs() < 1e-12);
        }
        assert!(qq_pairs(&[], &obs, &probs).is_err());
    }

    #[test]
    fn type7_quantile() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&v, 0.1) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn constant_statistic_zero_width_band() {
        let samples = vec![vec![3.0, -1.0]; 50];
        let env = Envelope::from_samples(&samples, &DEFAULT_ENVELOPE_QUANTILES).unwrap();
        let b = env.band(0..2);
        assert_eq!(b.lo, b.hi);
        assert_eq!(b.median, vec![3.0, -1.0]);
    }

    #[test]
    fn persistence_on_all_dry_series() {
        let params = ModelParams::new(vec![vec![0.0]], vec![0.0], 0.7).unwrap();
        let obs = single(&[0.0; 300]);
        let cov = CovariatePanel::constant(300, &[]).unwrap();
        let odds = forecast_odds(&params, &cov, &obs, &ForecastOptions { horizons: vec![1], ..Default::default() }).unwrap();
        assert_eq!(odds.stations[0].persistence[0].dry_given_dry, Some(1.0));
        assert_eq!(odds.stations[0].persistence[0].wet_given_wet, None);
    }

    #[test]
    fn forecast_window_too_long() {
        let params = ModelParams::new(vec![vec![0.0]], vec![0.0], 0.7).unwrap();
        let obs = single(&[0.0; 10]);
        let cov = CovariatePanel::constant(10, &[]).unwrap();
        let opts = ForecastOptions { horizons: vec![10], ..Default::default() };
        assert!(forecast_odds(&params, &cov, &obs, &opts).is_err());
    }
}
