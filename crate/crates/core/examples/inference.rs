//! Hessian-based and sandwich standard errors with 95% intervals.
//!
//!     cargo run --release --example inference

use sirnet::sim::{simulate, CovariateProcess, SimConfig};
use sirnet::{compute_vcov, fit_sir, Mask, ParameterSet, SirOptions};

fn main() -> sirnet::Result<()> {
    let truth = ParameterSet {
        theta: vec![-0.3, 0.25],
        alpha: vec![1.0, 0.3],
        beta: vec![0.3, 0.15],
    };
    let mut cfg = SimConfig::standard(12, 80, truth.clone(), 5);
    cfg.influence[1] = CovariateProcess::Normal { scale: 0.5 };
    let data = simulate(&cfg)?.into_data()?;
    let fit = fit_sir(&data, &Mask::none(), &SirOptions::default())?;
    let v = compute_vcov(&fit, &data, &Mask::none())?;

    println!("{:<18} {:>9} {:>9} {:>9} {:>9}  95% interval (sandwich)", "parameter", "truth", "estimate", "se(H)", "se(S)");
    for (k, ((name, est), tru)) in v.names.iter().zip(fit.params.to_psi()).zip(truth.to_psi()).enumerate() {
        let se = v.se_sandwich[k];
        println!(
            "{name:<18} {tru:>9.4} {est:>9.4} {:>9.4} {se:>9.4}  [{:.4}, {:.4}]",
            v.se_hessian[k],
            est - 1.96 * se,
            est + 1.96 * se
        );
    }
    Ok(())
}
