//! Random time-slice cross-validation of the influence model against a
//! plain Poisson GLM on the direct covariates.
//!
//!     cargo run --release --example cross_validation

use sirnet::eval::{run_cv, standard_models, CvPlan};
use sirnet::scoring::ScoringOptions;
use sirnet::sim::{simulate, CovariateProcess, SimConfig};
use sirnet::{ParameterSet, SirOptions};

fn main() -> sirnet::Result<()> {
    let truth = ParameterSet {
        theta: vec![-0.5, 0.25],
        alpha: vec![1.0, 0.3],
        beta: vec![0.2, 0.3],
    };
    let mut cfg = SimConfig::standard(12, 61, truth, 3);
    cfg.influence[1] = CovariateProcess::Normal { scale: 0.5 };
    let data = simulate(&cfg)?.into_data()?;

    let plan = CvPlan::new(data.modeled_periods(), 10, 5, 7, false)?;
    let report = run_cv(&standard_models(&SirOptions::default()), &data, &plan, &ScoringOptions::default())?;
    println!("{:>4} {:>10} {:>10} {:>10} {:>10}", "fold", "DS sir", "DS glm", "Log sir", "Log glm");
    for f in &report.folds {
        let (s, g) = (&f.scores["sir"], &f.scores["glm"]);
        println!(
            "{:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            f.label, s.dawid_sebastiani, g.dawid_sebastiani, s.logarithmic, g.logarithmic
        );
    }
    for rule in ["dawid_sebastiani", "logarithmic", "brier", "spherical"] {
        println!("{rule}: influence model wins {}/{} folds", report.wins("sir", "glm", rule), report.folds.len());
    }
    Ok(())
}
