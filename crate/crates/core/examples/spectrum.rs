//! Bogoliubov spectra of the three phases on the Δ = −20 cut.
//!
//! cargo run --release --example spectrum

use rcsoc::bogoliubov::{analyze, TOL_IM};
use rcsoc::prelude::*;

fn main() -> rcsoc::Result<()> {
    let basis = PlaneWaveBasis::default();
    for eta in [0.0, 20.0, 27.0, 30.0, 50.0] {
        let p = make_symmetric_params(-20.0, eta);
        let ss = solve_steady_state(&p, &SolverConfig::default(), &basis, None)?.state;
        let (spectrum, stability) = analyze(&ss, &p, &basis, TOL_IM)?;
        println!(
            "η = {eta}: gap {:.4}, Goldstone modes {}, max Im ω {:.2e} ({})",
            spectrum.gap(),
            spectrum.goldstone_count(),
            stability.max_im,
            if stability.is_stable() { "stable" } else { "unstable" }
        );
        for m in spectrum.lowest_branches(5) {
            let tag = if m.gauge { " gauge" } else if m.goldstone { " Goldstone" } else { "" };
            println!("    ω = {:+.5} {:+.5}i  [{}]{tag}", m.omega.re, m.omega.im, m.sector);
        }
    }
    Ok(())
}
