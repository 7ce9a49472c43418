//! Forecast the last x periods, feeding forecasts back in as lags.
//!
//!     cargo run --release --example holdout

use sirnet::eval::{run_temporal_holdout, standard_models};
use sirnet::scoring::ScoringOptions;
use sirnet::sim::{simulate, CovariateProcess, SimConfig};
use sirnet::{ParameterSet, SirOptions};

fn main() -> sirnet::Result<()> {
    let truth = ParameterSet {
        theta: vec![-0.5, 0.25],
        alpha: vec![1.0, 0.3],
        beta: vec![0.2, 0.3],
    };
    let mut cfg = SimConfig::standard(12, 61, truth, 4);
    cfg.influence[1] = CovariateProcess::Normal { scale: 0.5 };
    let data = simulate(&cfg)?.into_data()?;

    let report = run_temporal_holdout(
        &standard_models(&SirOptions::default()),
        &data,
        &[1, 2, 3, 4, 5],
        &ScoringOptions::default(),
    )?;
    println!("{:>7} {:>10} {:>10} {:>8}", "horizon", "DS sir", "DS glm", "cells");
    for f in &report.folds {
        println!(
            "{:>7} {:>10.4} {:>10.4} {:>8}",
            f.label, f.scores["sir"].dawid_sebastiani, f.scores["glm"].dawid_sebastiani, f.cells
        );
    }
    Ok(())
}
