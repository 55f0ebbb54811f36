//! Small parameter-recovery study: bias and spread of the estimates as the
//! series grows.

use frailty::simstudy::{run_study, StudyConfig};
use frailty::ModelParams;

fn main() -> frailty::Result<()> {
    let truth = ModelParams::new(
        vec![vec![0.65, -0.08, 0.11], vec![0.47, 0.25, 0.02], vec![0.22, 0.10, 0.36]],
        vec![0.0, 0.07, 0.03, 0.03],
        0.7,
    )?;
    let mut config = StudyConfig::new(truth, 2015);
    config.sample_sizes = vec![100, 1000];
    config.n_replicas = 20;
    let report = run_study(&config)?;

    print!("{:<9} {:>7}", "param", "true");
    for s in &report.sizes {
        print!(" {:>16}", format!("n={} bias (sd)", s.sample_size));
    }
    println!();
    for (j, name) in report.param_names.iter().enumerate() {
        print!("{name:<9} {:>7.3}", report.true_values[j]);
        for s in &report.sizes {
            print!(" {:>16}", format!("{:+.3} ({:.3})", s.bias[j], s.stdev[j]));
        }
        println!();
    }
    Ok(())
}
