//! Emergent spin–orbit-coupled dispersion in the plane-wave phase.
//!
//! cargo run --release --example soc_dispersion

use rcsoc::observables::soc_dispersion;
use rcsoc::prelude::*;

fn main() -> rcsoc::Result<()> {
    let basis = PlaneWaveBasis::default();
    let p = make_symmetric_params(-20.0, 30.0);
    let ss = solve_steady_state(&p, &SolverConfig::default(), &basis, None)?.state;
    let qs: Vec<f64> = (0..=80).map(|k| -2.0 + 0.05 * k as f64).collect();
    let d = soc_dispersion(&ss.cavity, &p, &qs);
    println!("|α₊| = {:.4}, |β₋| = {:.4}, Raman |Ω0R α₊* β₋| = {:.4}",
        ss.cavity.alpha_p.norm(), ss.cavity.beta_m.norm(), (p.omega_r * ss.cavity.alpha_p.conj() * ss.cavity.beta_m).norm());
    println!("lower-branch minima at p = {:?}, global minimum at p = {:.3}", d.minima, d.argmin);
    println!("   p      lower     upper");
    for k in (0..qs.len()).step_by(5) {
        println!("  {:+.2}  {:+.4}  {:+.4}", d.p[k], d.lower[k], d.upper[k]);
    }
    Ok(())
}
