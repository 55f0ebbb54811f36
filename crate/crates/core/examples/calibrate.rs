//! Pick the censoring threshold from data simulated at u = 0.7, starting
//! the search at 0.5.

use frailty::inference::{calibrate_threshold, CalibrationOptions, DEFAULT_THRESHOLD_CANDIDATES};
use frailty::simstudy::{synth_covariates, CovariateSpec};
use frailty::{simulate, ModelParams, SimulationConfig};

fn main() -> frailty::Result<()> {
    let hours = 10_000;
    let truth = ModelParams::new(
        vec![vec![0.65, -0.08, 0.11], vec![0.47, 0.25, 0.02], vec![0.22, 0.10, 0.36]],
        vec![0.0, 0.07, 0.03, 0.03],
        0.7,
    )?;
    let covariates = synth_covariates(&[CovariateSpec::default(); 3], hours, 21)?;
    let panel = simulate(&truth, &covariates, &SimulationConfig::new(3, hours, 22))?;

    let cal = calibrate_threshold(&panel, &covariates, &DEFAULT_THRESHOLD_CANDIDATES, 0.5, &CalibrationOptions::default())?;
    println!("observed mean dry spell: {:.3} h", cal.observed_mean_dry);
    for (k, step) in cal.iterations.iter().enumerate() {
        let sims: Vec<String> = step.simulated_mean_dry.iter().map(|v| format!("{v:.3}")).collect();
        println!("iteration {}: fit at u={} -> simulated [{}] -> u={}", k + 1, step.u_fit, sims.join(", "), step.u_selected);
    }
    println!("chosen u = {} (converged: {})", cal.chosen_u, cal.converged);
    Ok(())
}
