//! Hit rates of Monte-Carlo forecasts against persistence, by horizon.

use frailty::diagnostics::{forecast_odds, ForecastOptions, ForecastRule, WetRule};
use frailty::simstudy::{synth_covariates, CovariateSpec};
use frailty::{simulate, ModelParams, SimulationConfig};

fn main() -> frailty::Result<()> {
    let hours = 3000;
    let params = ModelParams::new(
        vec![vec![0.65, -0.08, 0.11], vec![0.47, 0.25, 0.02], vec![0.22, 0.10, 0.36]],
        vec![0.0, 0.7, 0.35, 0.35],
        0.7,
    )?;
    let covariates = synth_covariates(&[CovariateSpec::default(); 3], hours, 41)?;
    let panel = simulate(&params, &covariates, &SimulationConfig::new(3, hours, 42))?;

    for rule in [ForecastRule::Probabilistic, ForecastRule::Majority { threshold: 0.5 }] {
        let options = ForecastOptions {
            horizons: vec![1, 2, 3, 6, 12, 24],
            rule,
            observed_wet: WetRule::Positive,
            ..ForecastOptions::default()
        };
        let odds = forecast_odds(&params, &covariates, &panel, &options)?;
        let s = &odds.stations[0];
        println!("{rule:?}, station {} ({} origins)", s.station, odds.n_origins);
        println!("  h    model d|d  model w|w   pers d|d  pers w|w");
        for (k, h) in s.horizons.iter().enumerate() {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
            println!(
                "{h:>3} {:>10} {:>10} {:>10} {:>9}",
                f(s.model[k].dry_given_dry),
                f(s.model[k].wet_given_wet),
                f(s.persistence[k].dry_given_dry),
                f(s.persistence[k].wet_given_wet)
            );
        }
        println!("  crossover horizon: {:?}", s.crossover_horizon());
    }
    Ok(())
}
