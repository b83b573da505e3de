//! Solve the steady state at one (Δ, η) and print its order parameters.
//!
//! cargo run --release --example solve_point -- -20 30

use rcsoc::bogoliubov::{analyze, TOL_IM};
use rcsoc::model::Spin;
use rcsoc::observables::TOL_DW;
use rcsoc::prelude::*;

fn main() -> rcsoc::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (delta, eta) = match args[..] {
        [d, e, ..] => (d, e),
        _ => (-20.0, 30.0),
    };
    let basis = PlaneWaveBasis::default();
    let params = make_symmetric_params(delta, eta);
    let report = solve_steady_state(&params, &SolverConfig::default(), &basis, None)?;
    let ss = &report.state;
    let (_, stability) = analyze(ss, &params, &basis, TOL_IM)?;
    let point = order_parameters(ss, &basis);
    let label = classify_phase(&point, TOL_DW, Some(&stability));

    println!("(Δ, η) = ({delta}, {eta}): {label}, W = {:?}", point.winding);
    println!("  μ = {:.9}, residual {:.1e}, {} iterations", ss.mu, ss.residual, ss.iterations);
    println!("  |N↓| = {:.6}, |N↑| = {:.6}", point.nw_dn.norm(), point.nw_up.norm());
    println!("  |α₊| = {:.6}, |α₋| = {:.6}, |β₊| = {:.6}, |β₋| = {:.6}",
        ss.cavity.alpha_p.norm(), ss.cavity.alpha_m.norm(), ss.cavity.beta_p.norm(), ss.cavity.beta_m.norm());
    println!("  max Im ω = {:.3e}", stability.max_im);
    println!("  j    |c↓,j|    |c↑,j|");
    for j in -3..=3 {
        println!("  {j:+}  {:.6}  {:.6}", ss.spinor.coefficient(Spin::Dn, j).norm(), ss.spinor.coefficient(Spin::Up, j).norm());
    }
    println!("  candidates:");
    for (k, c) in report.candidates.iter().enumerate() {
        let mark = if k == report.chosen { "*" } else { " " };
        println!("  {mark} {:?} μ = {:.9} converged {} parity {:?}", c.kind, c.energy, c.converged, c.parity);
    }
    Ok(())
}
