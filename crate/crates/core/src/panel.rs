//! Hourly panels: precipitation per station and shared covariates.
//!
//! Both panels store their values row-major (`T` rows, one column per station
//! or covariate) next to a strictly increasing list of UTC timestamps.

use std::ops::Range;

use chrono::{DateTime, Duration, TimeZone, Utc};

use crate::error::{Error, Result};

/// Hourly timestamps starting at 2000-01-01T00:00Z, used for synthetic panels.
pub fn hourly_times(n: usize) -> Vec<DateTime<Utc>> {
    let start = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap();
    (0..n).map(|i| start + Duration::hours(i as i64)).collect()
}

fn check_times(times: &[DateTime<Utc>]) -> Result<()> {
    for (i, w) in times.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at row {} ({} then {})",
                i + 1,
                w[0].to_rfc3339(),
                w[1].to_rfc3339()
            )));
        }
    }
    Ok(())
}

fn flatten(rows: Vec<Vec<f64>>, width: usize, what: &'static str) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(rows.len() * width);
    for row in rows {
        if row.len() != width {
            return Err(Error::dims(what, width, row.len()));
        }
        values.extend(row);
    }
    Ok(values)
}

/// `T x M` non-negative hourly precipitation (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecipPanel {
    times: Vec<DateTime<Utc>>,
    stations: Vec<String>,
    values: Vec<f64>,
}

impl PrecipPanel {
    pub fn new(times: Vec<DateTime<Utc>>, stations: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let m = stations.len();
        if m == 0 {
            return Err(Error::invalid("precipitation panel needs at least one station"));
        }
        if values.len() != times.len() * m {
            return Err(Error::dims("precipitation values", times.len() * m, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "precipitation at row {}, station `{}` is {} (must be finite and >= 0)",
                i / m,
                stations[i % m],
                values[i]
            )));
        }
        check_times(&times)?;
        Ok(Self {
            times,
            stations,
            values,
        })
    }

    pub fn from_rows(times: Vec<DateTime<Utc>>, stations: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let values = flatten(rows, stations.len(), "precipitation row")?;
        Self::new(times, stations, values)
    }

    /// Panel on the default hourly time axis with stations `s1..sM`.
    pub fn from_rows_hourly(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        let stations = (1..=m).map(|i| format!("s{i}")).collect();
        Self::from_rows(hourly_times(rows.len()), stations, rows)
    }

    pub(crate) fn new_unchecked(times: Vec<DateTime<Utc>>, stations: Vec<String>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), times.len() * stations.len());
        Self {
            times,
            stations,
            values,
        }
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn times(&self) -> &[DateTime<Utc>] {
        &self.times
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let m = self.n_stations();
        &self.values[t * m..(t + 1) * m]
    }

    pub fn get(&self, t: usize, station: usize) -> f64 {
        self.values[t * self.n_stations() + station]
    }

    pub fn column(&self, station: usize) -> Vec<f64> {
        let m = self.n_stations();
        self.values.iter().skip(station).step_by(m).copied().collect()
    }

    pub fn station_index(&self, name: &str) -> Option<usize> {
        self.stations.iter().position(|s| s == name)
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        let m = self.n_stations();
        Self {
            times: self.times[range.clone()].to_vec(),
            stations: self.stations.clone(),
            values: self.values[range.start * m..range.end * m].to_vec(),
        }
    }

    /// Reorder stations: column `j` of the result is column `order[j]` of `self`.
    pub fn permute_stations(&self, order: &[usize]) -> Result<Self> {
        let m = self.n_stations();
        check_permutation(order, m)?;
        let mut values = Vec::with_capacity(self.values.len());
        for t in 0..self.n_times() {
            let row = self.row(t);
            values.extend(order.iter().map(|&j| row[j]));
        }
        Ok(Self {
            times: self.times.clone(),
            stations: order.iter().map(|&j| self.stations[j].clone()).collect(),
            values,
        })
    }

    pub(crate) fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            times: self.times.clone(),
            stations: self.stations.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

pub(crate) fn check_permutation(order: &[usize], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    if order.len() != m {
        return Err(Error::dims("station permutation", m, order.len()));
    }
    for &j in order {
        if j >= m || seen[j] {
            return Err(Error::invalid("station order is not a permutation"));
        }
        seen[j] = true;
    }
    Ok(())
}

/// `T x d` shared atmospheric covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePanel {
    times: Vec<DateTime<Utc>>,
    names: Vec<String>,
    values: Vec<f64>,
}

impl CovariatePanel {
    pub fn new(times: Vec<DateTime<Utc>>, names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let d = names.len();
        if values.len() != times.len() * d {
            return Err(Error::dims("covariate values", times.len() * d, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "covariate `{}` at row {}",
                names[i % d],
                i / d
            )));
        }
        check_times(&times)?;
        Ok(Self { times, names, values })
    }

    pub fn from_rows(times: Vec<DateTime<Utc>>, names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let values = flatten(rows, names.len(), "covariate row")?;
        Self::new(times, names, values)
    }

    /// Panel on the default hourly time axis with covariates `f1..fd`.
    pub fn from_rows_hourly(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let names = (1..=d).map(|i| format!("f{i}")).collect();
        Self::from_rows(hourly_times(rows.len()), names, rows)
    }

    /// `n` rows of a single repeated covariate vector.
    pub fn constant(n: usize, row: &[f64]) -> Result<Self> {
        Self::from_rows_hourly(vec![row.to_vec(); n])
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.names.len()
    }

    pub fn times(&self) -> &[DateTime<Utc>] {
        &self.times
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.n_covariates();
        &self.values[t * d..(t + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let d = self.n_covariates();
        self.values.iter().skip(j).step_by(d).copied().collect()
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        let d = self.n_covariates();
        Self {
            times: self.times[range.clone()].to_vec(),
            names: self.names.clone(),
            values: self.values[range.start * d..range.end * d].to_vec(),
        }
    }
}
