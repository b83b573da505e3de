//! Local pseudospin textures: spin wave (DW-SW) vs spin spiral (PW-SS, DW-SS).
//!
//! cargo run --release --example spin_texture

use rcsoc::prelude::*;

fn main() -> rcsoc::Result<()> {
    let basis = PlaneWaveBasis::default();
    for (delta, eta) in [(-20.0, 20.0), (-20.0, 30.0), (-20.0, 50.0)] {
        let p = make_symmetric_params(delta, eta);
        let ss = solve_steady_state(&p, &SolverConfig::default(), &basis, None)?.state;
        let tex = spin_texture(&ss.spinor, &basis)?;
        let w = winding_number(&tex)?;
        let phi = tex.phi.as_ref().expect("no nodes");
        let half = phi.len() / 2;
        let sweep = phi[..=half].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let sz = tex.s_z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        println!(
            "({delta}, {eta}): W = {} (residual {:.1e}), angle range over λ/2 = {:.3} rad, max |s_z| = {:.2e}",
            w.value,
            w.residual,
            sweep.1 - sweep.0,
            sz
        );
        println!("   z/λ    s_x      s_y");
        for m in (0..=half).step_by(half / 8) {
            println!("   {:.3}  {:+.4}  {:+.4}", tex.z[m] / basis.domain_length(), tex.s_x[m], tex.s_y[m]);
        }
    }
    Ok(())
}
