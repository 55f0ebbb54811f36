//! Read station and covariate CSV files, drop incomplete rows, split into
//! learning and validation windows, and average per-station covariates.

use frailty::io::{load_panels, spatial_average, Schema};
use frailty::CovariatePanel;

const PRECIP: &str = "\
timestamp,brest,quimper,rennes
2001-12-01T00:00:00Z,0,0,0.2
2001-12-01T01:00:00Z,1.4,0,0
2001-12-01T02:00:00Z,0.8,NA,0
2001-12-01T03:00:00Z,0,0.6,0
2001-12-01T04:00:00Z,0,0,0
2001-12-01T05:00:00Z,2.2,1.0,0.4
";

const COVARIATES: &str = "\
timestamp,temperature,humidity
2001-12-01T00:00:00Z,6.1,88
2001-12-01T01:00:00Z,6.0,91
2001-12-01T02:00:00Z,5.8,93
2001-12-01T03:00:00Z,5.9,
2001-12-01T04:00:00Z,6.3,90
2001-12-01T05:00:00Z,6.4,95
";

fn main() -> frailty::Result<()> {
    let dir = std::env::temp_dir().join("frailty-load-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let (p, f) = (dir.join("precip.csv"), dir.join("covariates.csv"));
    std::fs::write(&p, PRECIP).expect("write");
    std::fs::write(&f, COVARIATES).expect("write");

    let schema = Schema {
        train_end: Some(2),
        ..Schema::default()
    };
    let bundle = load_panels(&p, &f, &schema)?;
    println!("stations {:?}, covariates {:?}", bundle.precip.stations(), bundle.covariates.names());
    println!("{} rows kept, {} dropped, gaps: {:?}", bundle.precip.n_times(), bundle.dropped_rows, bundle.gaps);
    let (learn, _) = bundle.learning();
    let (valid, _) = bundle.validation().expect("split");
    println!("learning {} h, validation {} h", learn.n_times(), valid.n_times());

    // per-station covariates are averaged into one shared series
    let a = CovariatePanel::from_rows_hourly(vec![vec![8.0, 80.0], vec![9.0, 85.0]])?;
    let b = CovariatePanel::from_rows_hourly(vec![vec![9.0, 90.0], vec![10.0, 95.0]])?;
    let c = CovariatePanel::from_rows_hourly(vec![vec![10.0, 100.0], vec![11.0, 75.0]])?;
    let avg = spatial_average(&[a, b, c])?;
    println!("averaged covariates: {:?}", avg.values());
    Ok(())
}
