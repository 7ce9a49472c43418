//! Proper scoring rules for Poisson count forecasts. Lower is better.
//!
//!     cargo run --example scoring

use sirnet::{score_cell, score_forecast};

fn main() -> sirnet::Result<()> {
    println!("{:>3} {:>6} {:>9} {:>9} {:>9} {:>9}", "y", "mu", "DS", "Log", "Brier", "Spherical");
    for (y, mu) in [(0.0, 1.0), (0.0, 0.1), (3.0, 2.5), (3.0, 8.0), (12.0, 4.0)] {
        let s = score_cell(y, mu)?;
        println!(
            "{y:>3} {mu:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            s.dawid_sebastiani, s.logarithmic, s.brier, s.spherical
        );
    }

    let y = [0.0, 1.0, 4.0, 2.0, 0.0, 7.0];
    let sharp = [0.3, 1.2, 3.8, 2.1, 0.4, 6.5];
    let flat = [2.4; 6];
    for (name, mu) in [("sharp", &sharp), ("flat", &flat)] {
        let r = score_forecast(&y, mu)?;
        println!(
            "{name:>5}: DS {:.4}  Log {:.4}  Brier {:.4}  Spherical {:.4}  RMSE {:.4}",
            r.dawid_sebastiani, r.logarithmic, r.brier, r.spherical, r.rmse
        );
    }
    Ok(())
}
