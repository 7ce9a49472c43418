//! Reconstruct the sender and receiver influence networks of one period
//! from fitted coefficients and write them as edge lists.
//!
//!     cargo run --release --example export_influence

use sirnet::design::Side;
use sirnet::io::export::{edges_csv, export_influence};
use sirnet::sim::{simulate, CovariateProcess, SimConfig};
use sirnet::{fit_sir, Mask, ParameterSet, SirOptions};

fn main() -> sirnet::Result<()> {
    let truth = ParameterSet {
        theta: vec![-0.3, 0.25],
        alpha: vec![1.0, 0.3],
        beta: vec![0.3, 0.15],
    };
    let mut cfg = SimConfig::standard(6, 40, truth, 8);
    cfg.influence[1] = CovariateProcess::Normal { scale: 0.5 };
    let data = simulate(&cfg)?.into_data()?;
    let fit = fit_sir(&data, &Mask::none(), &SirOptions::default())?;

    let t = data.modeled_periods() - 1;
    for side in [Side::Sender, Side::Receiver] {
        let edges = export_influence(&fit.params, &data, side, t, 0.05)?;
        println!("{side:?}: {} edges with |value| >= 0.05", edges.len());
        print!("{}", String::from_utf8_lossy(&edges_csv(&edges)?));
    }
    Ok(())
}
