//! Three-level (Λ) model against the adiabatically eliminated model: the
//! discrepancy falls like 1/(Δ↓ + Δ↑).
//!
//! cargo run --release --example lambda_check

use rcsoc::cli::lambda_check;
use rcsoc::prelude::*;

fn main() -> rcsoc::Result<()> {
    let basis = PlaneWaveBasis::default();
    let p = make_symmetric_params(-20.0, 20.0);
    let ss = solve_steady_state(&p, &SolverConfig::default(), &basis, None)?.state;
    let lc = lambda_check(&ss, &p, &basis, 200.0, 2.0, 1e-3)?;
    println!("|Δ↓+Δ↑|    error        max relative residual of ψ_e");
    for r in &lc.rows {
        println!("{:8.0}  {:.4e}   {:.4e}", r.det_sum, r.error, r.residual);
    }
    println!("log-log slope {:.3}", lc.slope);
    Ok(())
}
