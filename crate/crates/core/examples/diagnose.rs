//! Fit on a learning window, then compare the validation window with 200
//! simulated out-of-sample series: transition probabilities, correlations
//! and occurrence/intensity dependence. Plot-ready CSVs go to a temp dir.

use frailty::diagnostics::{diagnostics_report, DiagnosticsOptions, QqKind};
use frailty::inference::{fit_ml, initial_params, FitOptions};
use frailty::io::{write_diagnostics_csvs, DatasetBundle};
use frailty::likelihood::LikelihoodContext;
use frailty::simstudy::{synth_covariates, CovariateSpec};
use frailty::{simulate, ModelParams, SimulationConfig};

fn main() -> frailty::Result<()> {
    let hours = 8000;
    let truth = ModelParams::new(
        vec![vec![0.65, -0.08, 0.11], vec![0.47, 0.25, 0.02], vec![0.22, 0.10, 0.36]],
        vec![0.0, 0.3, 0.15, 0.15],
        0.7,
    )?;
    let covariates = synth_covariates(&[CovariateSpec::default(); 3], hours, 31)?;
    let panel = simulate(&truth, &covariates, &SimulationConfig::new(3, hours, 32))?;
    let bundle = DatasetBundle::new(panel, covariates, Some(5000))?;

    let (learn_p, learn_f) = bundle.learning();
    let ctx = LikelihoodContext::new(learn_p, learn_f, 0.7)?;
    let fit = fit_ml(&ctx, &initial_params(&ctx)?, &FitOptions::default())?;

    let (valid_p, valid_f) = bundle.validation().expect("split configured");
    let options = DiagnosticsOptions {
        n_replicas: 200,
        observed_wet: frailty::diagnostics::WetRule::Positive,
        ..DiagnosticsOptions::default()
    };
    let report = diagnostics_report(&valid_p, &valid_f, &fit.estimates, &options)?;

    println!("transition probabilities, observed vs 98% band");
    for t in &report.transitions {
        println!(
            "  {}  p(w|w) {:.3} in [{:.3}, {:.3}]   p(w|d) {:.3} in [{:.3}, {:.3}]",
            t.station,
            t.observed.p_wet_given_wet.unwrap_or(f64::NAN),
            t.wet_given_wet.lo[0],
            t.wet_given_wet.hi[0],
            t.observed.p_wet_given_dry.unwrap_or(f64::NAN),
            t.wet_given_dry.lo[0],
            t.wet_given_dry.hi[0],
        );
    }

    let outside = report
        .qq
        .iter()
        .filter(|q| q.kind == QqKind::Intensity)
        .map(|q| (0..q.probs.len()).filter(|&k| q.observed[k] < q.band.lo[k] || q.observed[k] > q.band.hi[k]).count())
        .sum::<usize>();
    println!("intensity quantiles outside the band: {outside}");

    for c in &report.contingency {
        let probs: Vec<String> = c.table.bins.iter().map(|b| b.p_wet_next.map_or("-".into(), |p| format!("{p:.2}"))).collect();
        println!("  {} P(wet next | bin) = [{}], log10 p = {:.1}", c.station, probs.join(", "), c.table.log10_p_value);
    }

    let dir = std::env::temp_dir().join("frailty-diagnostics");
    let files = write_diagnostics_csvs(&dir, &report, None)?;
    println!("{} CSV files in {}", files.len(), dir.display());
    Ok(())
}
