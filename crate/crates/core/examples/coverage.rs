//! Monte-Carlo coverage of 95% profile-likelihood intervals for the
//! contagion coefficients (50 replicas of 500 hours; takes a minute).

use frailty::inference::{coverage_probability, CoverageOptions};
use frailty::simstudy::{synth_covariates, CovariateSpec};
use frailty::ModelParams;

fn main() -> frailty::Result<()> {
    let truth = ModelParams::new(
        vec![vec![0.65, -0.08, 0.11], vec![0.47, 0.25, 0.02], vec![0.22, 0.10, 0.36]],
        vec![0.0, 0.07, 0.03, 0.03],
        0.7,
    )?;
    let covariates = synth_covariates(&[CovariateSpec::default(); 3], 500, 51)?;
    let options = CoverageOptions {
        param_indices: Some((0..9).collect()),
        ..CoverageOptions::default()
    };
    let report = coverage_probability(&truth, &covariates, 0.95, 50, &options)?;
    for (name, c) in report.param_names.iter().zip(&report.coverage) {
        println!("{name:<8} {c:.2}");
    }
    println!("{} of {} replicas usable", report.n_success, report.n_replicas);
    Ok(())
}
