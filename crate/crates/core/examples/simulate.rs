//! Simulate three stations with covariate-driven volatility and summarise
//! the censored output.
//!
//!     cargo run --example simulate -- [hours] [seed]

use frailty::diagnostics::{dry_spell_lengths, transition_probs, WetRule};
use frailty::io::write_precip_csv;
use frailty::simstudy::{synth_covariates, CovariateSpec};
use frailty::{simulate, ModelParams, SimulationConfig};

fn main() -> frailty::Result<()> {
    let mut args = std::env::args().skip(1);
    let hours: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(5000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(7);

    let params = ModelParams::new(
        vec![vec![0.65, -0.08, 0.11], vec![0.47, 0.25, 0.02], vec![0.22, 0.10, 0.36]],
        vec![0.0, 0.4, 0.2, 0.2],
        0.7,
    )?;
    let covariates = synth_covariates(&[CovariateSpec::default(); 3], hours, seed ^ 0xC0FFEE)?;
    let panel = simulate(&params, &covariates, &SimulationConfig::new(3, hours, seed))?;

    println!("{hours} hours, seed {seed}");
    println!("station  wet%   mean wet   p(w|w)  p(w|d)  longest dry");
    for s in 0..panel.n_stations() {
        let col = panel.column(s);
        let wet: Vec<f64> = col.iter().copied().filter(|&v| v > 0.0).collect();
        let tp = transition_probs(&panel, s, WetRule::Positive)?;
        let longest = dry_spell_lengths(&panel, s, WetRule::Positive).last().copied().unwrap_or(0);
        println!(
            "{:<8} {:>5.1} {:>10.3} {:>8.3} {:>7.3} {:>12}",
            panel.stations()[s],
            100.0 * wet.len() as f64 / hours as f64,
            wet.iter().sum::<f64>() / wet.len().max(1) as f64,
            tp.p_wet_given_wet.unwrap_or(f64::NAN),
            tp.p_wet_given_dry.unwrap_or(f64::NAN),
            longest,
        );
    }

    let out = std::env::temp_dir().join("frailty-simulated.csv");
    write_precip_csv(&out, &panel, None)?;
    println!("written to {}", out.display());
    Ok(())
}
