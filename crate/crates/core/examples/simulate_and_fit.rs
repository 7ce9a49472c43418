//! Simulate a panel from known parameters and recover them.
//!
//!     cargo run --release --example simulate_and_fit

use sirnet::sim::{simulate, CovariateProcess, SimConfig};
use sirnet::{fit_sir, Mask, ParameterSet, SirOptions};

fn main() -> sirnet::Result<()> {
    let truth = ParameterSet {
        theta: vec![-0.3, 0.25],
        alpha: vec![1.0, 0.3],
        beta: vec![0.3, 0.15],
    };
    let mut cfg = SimConfig::standard(10, 60, truth.clone(), 1);
    cfg.influence[1] = CovariateProcess::Normal { scale: 0.5 };
    let data = simulate(&cfg)?.into_data()?;

    let fit = fit_sir(&data, &Mask::none(), &SirOptions::default())?;
    println!(
        "converged: {} after {} outer iterations, loglik {:.3}",
        fit.converged,
        fit.outer_iterations,
        fit.loglik()
    );
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:+.3}")).collect::<Vec<_>>().join(" ");
    println!("theta  truth {}  estimate {}", fmt(&truth.theta), fmt(&fit.params.theta));
    println!("alpha  truth {}  estimate {}", fmt(&truth.alpha), fmt(&fit.params.alpha));
    println!("beta   truth {}  estimate {}", fmt(&truth.beta), fmt(&fit.params.beta));
    Ok(())
}
