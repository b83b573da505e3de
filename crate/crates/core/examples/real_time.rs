//! Real-time evolution of converged steady states: the order parameters of a
//! stationary state must not move.
//!
//! cargo run --release --example real_time -- 50

use rcsoc::prelude::*;

fn main() -> rcsoc::Result<()> {
    let t_final: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10.0);
    let basis = PlaneWaveBasis::default();
    for (delta, eta) in [(-20.0, 20.0), (-20.0, 30.0), (-20.0, 50.0)] {
        let p = make_symmetric_params(delta, eta);
        let ss = solve_steady_state(&p, &SolverConfig::default(), &basis, None)?.state;
        let cfg = PropagationConfig { t_final, ..Default::default() };
        let traj = propagate_steady(&ss, &p, &basis, &cfg)?;
        println!(
            "({delta}, {eta}): t = {t_final}, {} snapshots, drift {:.2e}, norm drift {:.2e}",
            traj.snapshots.len(),
            traj.drift(),
            traj.norm_drift()
        );
    }

    // A state that is not stationary: the (−20, 20) state with the pump doubled.
    let p = make_symmetric_params(-20.0, 20.0);
    let ss = solve_steady_state(&p, &SolverConfig::default(), &basis, None)?.state;
    let kicked = make_symmetric_params(-20.0, 40.0);
    let cfg = PropagationConfig { t_final: t_final.min(5.0), ..Default::default() };
    let traj = propagate_effective(&ss.spinor, &ss.cavity, &kicked, &basis, &cfg)?;
    println!("quenched η 20 → 40: drift {:.3} over t = {}", traj.drift(), cfg.t_final);
    Ok(())
}
