//! CSV ingestion, preprocessing and report serialization.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a written file gives back the same bits. Output files may start with a
//! `#` comment line carrying the config hash and seed; readers skip it.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsReport;
use crate::error::{Error, Result};
use crate::panel::{CovariatePanel, PrecipPanel};

/// Column names expected in the input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub timestamp_column: String,
    /// Station columns of the precipitation file; all non-timestamp
    /// columns when empty.
    pub stations: Vec<String>,
    /// Covariate columns; all non-timestamp columns when empty.
    pub covariates: Vec<String>,
    /// Keep only December, January and February hours.
    pub winter_only: bool,
    /// First validation row (after filtering); everything is learning data when `None`.
    pub train_end: Option<usize>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            stations: Vec::new(),
            covariates: Vec::new(),
            winter_only: false,
            train_end: None,
        }
    }
}

/// A run of missing hours between two consecutive retained rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub after: DateTime<Utc>,
    pub missing_hours: i64,
}

/// Aligned precipitation and covariates with a learning/validation split.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub precip: PrecipPanel,
    pub covariates: CovariatePanel,
    pub train_end: Option<usize>,
    /// Rows removed because a value was missing in either file.
    pub dropped_rows: usize,
    pub gaps: Vec<Gap>,
}

impl DatasetBundle {
    pub fn new(precip: PrecipPanel, covariates: CovariatePanel, train_end: Option<usize>) -> Result<Self> {
        if precip.times() != covariates.times() {
            return Err(Error::invalid("precipitation and covariate timestamps differ"));
        }
        if let Some(k) = train_end {
            if k <= 1 || k >= precip.n_times() {
                return Err(Error::Config(format!(
                    "train_end {k} must lie strictly between 1 and {}",
                    precip.n_times()
                )));
            }
        }
        let gaps = find_gaps(precip.times());
        Ok(Self {
            precip,
            covariates,
            train_end,
            dropped_rows: 0,
            gaps,
        })
    }

    fn split_at(&self) -> usize {
        self.train_end.unwrap_or(self.precip.n_times())
    }

    /// Learning window `0..train_end` (the whole series without a split).
    pub fn learning(&self) -> (PrecipPanel, CovariatePanel) {
        let k = self.split_at();
        (self.precip.slice(0..k), self.covariates.slice(0..k))
    }

    /// Validation window `train_end..T`; `None` without a split.
    pub fn validation(&self) -> Option<(PrecipPanel, CovariatePanel)> {
        let t = self.precip.n_times();
        self.train_end
            .map(|k| (self.precip.slice(k..t), self.covariates.slice(k..t)))
    }
}

fn find_gaps(times: &[DateTime<Utc>]) -> Vec<Gap> {
    times
        .windows(2)
        .filter_map(|w| {
            let hours = (w[1] - w[0]).num_hours();
            (hours > 1).then(|| Gap {
                after: w[0],
                missing_hours: hours - 1,
            })
        })
        .collect()
}

/// Parse an ISO-8601 timestamp; naive values are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null")
}

struct RawTable {
    names: Vec<String>,
    times: Vec<DateTime<Utc>>,
    /// Line number of each row in the file, for error messages.
    lines: Vec<usize>,
    rows: Vec<Vec<Option<f64>>>,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

fn parse_error(path: &Path, row: usize, column: Option<&str>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.map(str::to_string),
        message: message.into(),
    }
}

fn read_table(path: &Path, timestamp: &str, wanted: &[String]) -> Result<RawTable> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(parse_error(path, 1, None, "file is empty or has no header row"));
    }
    let find = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let ts_col = find(timestamp)?;
    let names: Vec<String> = if wanted.is_empty() {
        headers.iter().filter(|h| *h != timestamp).map(str::to_string).collect()
    } else {
        wanted.to_vec()
    };
    if names.is_empty() {
        return Err(parse_error(path, 1, None, "no data columns"));
    }
    let cols = names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut table = RawTable {
        names,
        times: Vec::new(),
        lines: Vec::new(),
        rows: Vec::new(),
    };
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let ts_text = record.get(ts_col).unwrap_or("");
        let time = parse_timestamp(ts_text)
            .ok_or_else(|| parse_error(path, line, Some(timestamp), format!("unparseable timestamp `{ts_text}`")))?;
        if !seen.insert(time) {
            return Err(parse_error(path, line, Some(timestamp), format!("duplicated timestamp {}", format_timestamp(&time))));
        }
        if let Some(prev) = table.times.last() {
            if time < *prev {
                return Err(parse_error(path, line, Some(timestamp), "timestamps out of order"));
            }
        }
        let mut row = Vec::with_capacity(cols.len());
        for (&c, name) in cols.iter().zip(&table.names) {
            let cell = record.get(c).unwrap_or("");
            if is_missing(cell) {
                row.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, line, Some(name), format!("non-numeric value `{cell}`")))?;
            if !v.is_finite() {
                row.push(None);
                continue;
            }
            row.push(Some(v));
        }
        table.times.push(time);
        table.lines.push(line);
        table.rows.push(row);
    }
    if table.rows.is_empty() {
        return Err(parse_error(path, 2, None, "no data rows"));
    }
    Ok(table)
}

/// Load and align the two input files.
///
/// Both files must list the same timestamps in the same order. Rows with a
/// missing value (empty, `NA` or `NaN`) in either file are dropped from both;
/// the count is logged and returned in the bundle.
pub fn load_panels(precip_path: &Path, covariate_path: &Path, schema: &Schema) -> Result<DatasetBundle> {
    let p = read_table(precip_path, &schema.timestamp_column, &schema.stations)?;
    let f = read_table(covariate_path, &schema.timestamp_column, &schema.covariates)?;
    if p.times.len() != f.times.len() {
        return Err(parse_error(
            covariate_path,
            f.lines.get(p.times.len()).or(f.lines.last()).copied().unwrap_or(0),
            Some(&schema.timestamp_column),
            format!("misaligned files: {} precipitation rows, {} covariate rows", p.times.len(), f.times.len()),
        ));
    }
    if let Some(i) = (0..p.times.len()).find(|&i| p.times[i] != f.times[i]) {
        return Err(parse_error(
            covariate_path,
            f.lines[i],
            Some(&schema.timestamp_column),
            format!(
                "misaligned timestamps: {} vs {} in {}",
                format_timestamp(&f.times[i]),
                format_timestamp(&p.times[i]),
                precip_path.display()
            ),
        ));
    }

    let mut times = Vec::new();
    let mut precip_rows = Vec::new();
    let mut cov_rows = Vec::new();
    let mut dropped = 0;
    for i in 0..p.times.len() {
        if schema.winter_only && !matches!(p.times[i].month(), 12 | 1 | 2) {
            continue;
        }
        let pr: Option<Vec<f64>> = p.rows[i].iter().copied().collect();
        let fr: Option<Vec<f64>> = f.rows[i].iter().copied().collect();
        match (pr, fr) {
            (Some(pr), Some(fr)) => {
                if let Some(j) = pr.iter().position(|v| *v < 0.0) {
                    return Err(parse_error(precip_path, p.lines[i], Some(&p.names[j]), "negative precipitation"));
                }
                times.push(p.times[i]);
                precip_rows.push(pr);
                cov_rows.push(fr);
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing values");
    }
    if times.len() < 2 {
        return Err(Error::invalid("fewer than two complete rows after filtering"));
    }
    let precip = PrecipPanel::from_rows(times.clone(), p.names, precip_rows)?;
    let covariates = CovariatePanel::from_rows(times, f.names, cov_rows)?;
    let mut bundle = DatasetBundle::new(precip, covariates, schema.train_end)?;
    bundle.dropped_rows = dropped;
    if !bundle.gaps.is_empty() {
        log::info!("{} gaps in the hourly series", bundle.gaps.len());
    }
    Ok(bundle)
}

/// Read a precipitation CSV as written by [`write_precip_csv`].
pub fn read_precip_csv(path: &Path) -> Result<PrecipPanel> {
    let t = read_table(path, "timestamp", &[])?;
    let rows = complete_rows(path, &t)?;
    PrecipPanel::from_rows(t.times, t.names, rows)
}

/// Read a covariate CSV with a `timestamp` column.
pub fn read_covariate_csv(path: &Path) -> Result<CovariatePanel> {
    let t = read_table(path, "timestamp", &[])?;
    let rows = complete_rows(path, &t)?;
    CovariatePanel::from_rows(t.times, t.names, rows)
}

fn complete_rows(path: &Path, t: &RawTable) -> Result<Vec<Vec<f64>>> {
    t.rows
        .iter()
        .zip(&t.lines)
        .map(|(r, &line)| {
            r.iter()
                .zip(&t.names)
                .map(|(v, n)| v.ok_or_else(|| parse_error(path, line, Some(n), "missing value")))
                .collect()
        })
        .collect()
}

/// Entrywise mean of per-station covariate panels.
pub fn spatial_average(panels: &[CovariatePanel]) -> Result<CovariatePanel> {
    let first = panels.first().ok_or_else(|| Error::invalid("no covariate panels to average"))?;
    for p in &panels[1..] {
        if p.names() != first.names() {
            return Err(Error::invalid("covariate names differ between stations"));
        }
        if p.times() != first.times() {
            return Err(Error::invalid("covariate timestamps differ between stations"));
        }
    }
    let n = panels.len() as f64;
    let values = (0..first.values().len())
        .map(|i| panels.iter().map(|p| p.values()[i]).sum::<f64>() / n)
        .collect();
    CovariatePanel::new(first.times().to_vec(), first.names().to_vec(), values)
}

/// Treatment of recorded values strictly between 0 and the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallValueMode {
    /// Leave them and report them in the mask (the likelihood skips them).
    Mask,
    /// Round them down to zero.
    Zero,
}

/// Apply `mode` to values in `(0, u)`. Returns the panel and the row-major
/// mask of excluded cells (all false after zeroing).
pub fn preprocess_small_values(panel: &PrecipPanel, u: f64, mode: SmallValueMode) -> Result<(PrecipPanel, Vec<bool>)> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::invalid(format!("threshold must be finite and >= 0, got {u}")));
    }
    let small = |v: f64| v > 0.0 && v < u;
    Ok(match mode {
        SmallValueMode::Mask => (panel.clone(), panel.values().iter().map(|&v| small(v)).collect()),
        SmallValueMode::Zero => (
            panel.map_values(|v| if small(v) { 0.0 } else { v }),
            vec![false; panel.values().len()],
        ),
    })
}

/// Provenance written into every output artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputMeta {
    pub config_sha256: String,
    pub seed: u64,
    pub generator: String,
}

impl OutputMeta {
    fn comment(&self) -> String {
        format!(
            "# config_sha256={} seed={} generator={}",
            self.config_sha256, self.seed, self.generator
        )
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Minimal CSV writer: fields here never contain separators or quotes
/// except station names, which are quoted when needed.
struct CsvOut {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvOut {
    fn new(path: &Path, meta: Option<&OutputMeta>, header: &[&str]) -> Result<Self> {
        let mut w = Self {
            path: path.to_path_buf(),
            out: create(path)?,
        };
        if let Some(m) = meta {
            w.line(&m.comment())?;
        }
        w.record(header.iter().map(|s| quote(s)))?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    fn record<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let joined: Vec<String> = fields.into_iter().collect();
        self.line(&joined.join(","))
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn write_matrix(path: &Path, meta: Option<&OutputMeta>, times: &[DateTime<Utc>], names: &[String], values: &[f64]) -> Result<()> {
    let mut header = vec!["timestamp"];
    header.extend(names.iter().map(String::as_str));
    let mut w = CsvOut::new(path, meta, &header)?;
    let width = names.len();
    for (t, time) in times.iter().enumerate() {
        let row = &values[t * width..(t + 1) * width];
        w.record(std::iter::once(format_timestamp(time)).chain(row.iter().map(|v| format!("{v}"))))?;
    }
    w.finish()
}

pub fn write_precip_csv(path: &Path, panel: &PrecipPanel, meta: Option<&OutputMeta>) -> Result<()> {
    write_matrix(path, meta, panel.times(), panel.stations(), panel.values())
}

pub fn write_covariate_csv(path: &Path, panel: &CovariatePanel, meta: Option<&OutputMeta>) -> Result<()> {
    write_matrix(path, meta, panel.times(), panel.names(), panel.values())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

/// Flat plot-data tables of a diagnostics report, one CSV per section.
/// Returns the written paths.
pub fn write_diagnostics_csvs(dir: &Path, report: &DiagnosticsReport, meta: Option<&OutputMeta>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let path = dir.join("dry_spells.csv");
    let mut w = CsvOut::new(&path, meta, &["station", "length"])?;
    for s in &report.dry_spells {
        for l in &s.lengths {
            w.record([quote(&s.station), l.to_string()])?;
        }
    }
    w.finish()?;
    written.push(path);

    let path = dir.join("transitions.csv");
    let mut w = CsvOut::new(&path, meta, &["station", "statistic", "observed", "lo", "median", "hi"])?;
    for s in &report.transitions {
        for (name, obs, band) in [
            ("p_wet_given_wet", s.observed.p_wet_given_wet, &s.wet_given_wet),
            ("p_wet_given_dry", s.observed.p_wet_given_dry, &s.wet_given_dry),
        ] {
            w.record([quote(&s.station), name.into(), opt(obs), num(band.lo[0]), num(band.median[0]), num(band.hi[0])])?;
        }
    }
    w.finish()?;
    written.push(path);

    let path = dir.join("correlations.csv");
    let mut w = CsvOut::new(&path, meta, &["station_a", "station_b", "lag", "observed", "lo", "median", "hi"])?;
    for c in &report.correlations {
        for (k, lag) in c.lags.iter().enumerate() {
            w.record([
                quote(&c.station_a),
                quote(&c.station_b),
                lag.to_string(),
                opt(c.observed[k]),
                num(c.band.lo[k]),
                num(c.band.median[k]),
                num(c.band.hi[k]),
            ])?;
        }
    }
    w.finish()?;
    written.push(path);

    let path = dir.join("qq.csv");
    let mut w = CsvOut::new(&path, meta, &["kind", "station", "prob", "observed", "lo", "median", "hi"])?;
    for q in &report.qq {
        let kind = match q.kind {
            crate::diagnostics::QqKind::Intensity => "intensity",
            crate::diagnostics::QqKind::DrySpell => "dry_spell",
        };
        for (k, p) in q.probs.iter().enumerate() {
            w.record([
                kind.into(),
                quote(&q.station),
                num(*p),
                num(q.observed[k]),
                num(q.band.lo[k]),
                num(q.band.median[k]),
                num(q.band.hi[k]),
            ])?;
        }
    }
    w.finish()?;
    written.push(path);

    let path = dir.join("contingency.csv");
    let mut w = CsvOut::new(&path, meta, &["station", "lower", "upper", "count", "wet_next", "p_wet_next", "log10_p_value"])?;
    for s in &report.contingency {
        for b in &s.table.bins {
            w.record([
                quote(&s.station),
                num(b.lower),
                opt(b.upper),
                b.count.to_string(),
                b.wet_next.to_string(),
                opt(b.p_wet_next),
                num(s.table.log10_p_value),
            ])?;
        }
    }
    w.finish()?;
    written.push(path);

    if let Some(odds) = &report.odds_ratios {
        let path = dir.join("forecast.csv");
        write_forecast_csv(&path, odds, meta)?;
        written.push(path);
    }
    Ok(written)
}

/// Hit-rate table per station and horizon.
pub fn write_forecast_csv(path: &Path, odds: &crate::diagnostics::ForecastOdds, meta: Option<&OutputMeta>) -> Result<()> {
    let mut w = CsvOut::new(
        path,
        meta,
        &["station", "horizon", "model_dry_given_dry", "model_wet_given_wet", "persistence_dry_given_dry", "persistence_wet_given_wet", "n_dry", "n_wet"],
    )?;
    for s in &odds.stations {
        for (k, h) in s.horizons.iter().enumerate() {
            w.record([
                quote(&s.station),
                h.to_string(),
                opt(s.model[k].dry_given_dry),
                opt(s.model[k].wet_given_wet),
                opt(s.persistence[k].dry_given_dry),
                opt(s.persistence[k].wet_given_wet),
                s.n_dry[k].to_string(),
                s.n_wet[k].to_string(),
            ])?;
        }
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn small_values() {
        let p = PrecipPanel::from_rows_hourly(vec![vec![0.4, 0.7, 0.0]]).unwrap();
        let (z, mask) = preprocess_small_values(&p, 0.7, SmallValueMode::Zero).unwrap();
        assert_eq!(z.values(), &[0.0, 0.7, 0.0]);
        assert_eq!(mask, vec![false; 3]);
        let (same, mask) = preprocess_small_values(&p, 0.7, SmallValueMode::Mask).unwrap();
        assert_eq!(same, p);
        assert_eq!(mask, vec![true, false, false]);
    }

    #[test]
    fn averages() {
        let a = CovariatePanel::from_rows_hourly(vec![vec![8.0], vec![10.0]]).unwrap();
        let b = CovariatePanel::from_rows_hourly(vec![vec![9.0], vec![20.0]]).unwrap();
        let c = CovariatePanel::from_rows_hourly(vec![vec![10.0], vec![0.0]]).unwrap();
        let avg = spatial_average(&[a.clone(), b, c]).unwrap();
        assert_eq!(avg.values(), &[9.0, 10.0]);
        assert_eq!(spatial_average(&[a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn empty_and_duplicate_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(dir.path(), "e.csv", "");
        let cov = write(dir.path(), "c.csv", "timestamp,f1\n2000-01-01T00:00:00Z,1\n");
        assert!(matches!(load_panels(&empty, &cov, &Schema::default()), Err(Error::Parse { .. })));

        let dup = write(
            dir.path(),
            "d.csv",
            "timestamp,s1\n2000-01-01T00:00:00Z,0\n2000-01-01T01:00:00Z,1\n2000-01-01T01:00:00Z,2\n",
        );
        match load_panels(&dup, &cov, &Schema::default()) {
            Err(Error::Parse { row, message, .. }) => {
                assert_eq!(row, 4);
                assert!(message.contains("duplicated"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_rows_dropped_symmetrically() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "p.csv",
            "timestamp,a,b\n2000-01-01T00:00:00Z,0,1\n2000-01-01T01:00:00Z,NA,1\n2000-01-01T02:00:00Z,0.2,0\n2000-01-01T03:00:00Z,1,1\n",
        );
        let f = write(
            dir.path(),
            "f.csv",
            "timestamp,x\n2000-01-01T00:00:00Z,1\n2000-01-01T01:00:00Z,2\n2000-01-01T02:00:00Z,\n2000-01-01T03:00:00Z,4\n",
        );
        let b = load_panels(&p, &f, &Schema::default()).unwrap();
        assert_eq!(b.dropped_rows, 2);
        assert_eq!(b.precip.n_times(), 2);
        assert_eq!(b.covariates.values(), &[1.0, 4.0]);
        assert_eq!(b.gaps.len(), 1);
        assert_eq!(b.gaps[0].missing_hours, 2);
    }

    #[test]
    fn bad_cells_located() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "timestamp,a\n2000-01-01T00:00:00Z,0\n2000-01-01T01:00:00Z,wet\n");
        let f = write(dir.path(), "f.csv", "timestamp,x\n2000-01-01T00:00:00Z,1\n2000-01-01T01:00:00Z,2\n");
        match load_panels(&p, &f, &Schema::default()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column.as_deref(), Some("a"));
            }
            other => panic!("{other:?}"),
        }
        let schema = Schema {
            covariates: vec!["humidity".into()],
            ..Schema::default()
        };
        assert!(matches!(load_panels(&f, &f, &schema), Err(Error::MissingColumn { .. })));
    }

    #[test]
    fn misaligned_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "timestamp,a\n2000-01-01T00:00:00Z,0\n2000-01-01T01:00:00Z,1\n");
        let f = write(dir.path(), "f.csv", "timestamp,x\n2000-01-01T00:00:00Z,1\n2000-01-01T02:00:00Z,2\n");
        assert!(matches!(load_panels(&p, &f, &Schema::default()), Err(Error::Parse { row: 3, .. })));
    }

    #[test]
    fn winter_filter() {
        let dir = tempfile::tempdir().unwrap();
        let body = "timestamp,a\n2000-02-29T23:00:00Z,1\n2000-03-01T00:00:00Z,2\n2000-12-01T00:00:00Z,3\n";
        let p = write(dir.path(), "p.csv", body);
        let schema = Schema {
            winter_only: true,
            ..Schema::default()
        };
        let b = load_panels(&p, &p, &schema).unwrap();
        assert_eq!(b.precip.values(), &[1.0, 3.0]);
    }
}
