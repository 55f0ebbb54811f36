//! Fit the model by maximum likelihood on simulated data and report
//! profile-likelihood intervals next to the true values.
//!
//!     cargo run --example fit -- [hours]

use frailty::inference::{fit_ml, initial_params, profile_cis, FitOptions, ProfileOptions};
use frailty::likelihood::LikelihoodContext;
use frailty::simstudy::{synth_covariates, CovariateSpec};
use frailty::{simulate, ModelParams, SimulationConfig};

fn main() -> frailty::Result<()> {
    let hours: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let truth = ModelParams::new(
        vec![vec![0.65, -0.08, 0.11], vec![0.47, 0.25, 0.02], vec![0.22, 0.10, 0.36]],
        vec![0.0, 0.07, 0.03, 0.03],
        0.7,
    )?;
    let covariates = synth_covariates(&[CovariateSpec::default(); 3], hours, 11)?;
    let panel = simulate(&truth, &covariates, &SimulationConfig::new(3, hours, 12))?;

    let ctx = LikelihoodContext::new(panel, covariates, truth.threshold())?;
    let init = initial_params(&ctx)?;
    let fit = fit_ml(&ctx, &init, &FitOptions::default())?;
    println!(
        "log-likelihood {:.4} from {} cells, {} evaluations, converged: {}",
        fit.max_loglik, fit.n_obs_used, fit.n_evals, fit.converged
    );

    let indices: Vec<usize> = (0..truth.n_free()).collect();
    let cis = profile_cis(&ctx, &fit, &indices, 0.95, &ProfileOptions::default())?;
    let x_true = truth.to_vector();
    println!("{:<10} {:>8} {:>8} {:>18}", "param", "true", "mle", "95% profile CI");
    for ci in &cis {
        println!(
            "{:<10} {:>8.3} {:>8.3}   [{:>6.3}, {:>6.3}]{}",
            ci.param_name,
            x_true[ci.param_index],
            ci.estimate,
            ci.lower,
            ci.upper,
            if ci.contains(x_true[ci.param_index]) { "" } else { "  miss" }
        );
    }
    Ok(())
}
