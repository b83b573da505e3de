//! η cut at fixed Δ with warm starts, boundary detection and SVG output.
//!
//! cargo run --release --example phase_cut -- -20 [out_dir]

use std::path::PathBuf;

use rcsoc::cli::render_sweep_figures;
use rcsoc::prelude::*;

fn main() -> rcsoc::Result<()> {
    let mut args = std::env::args().skip(1);
    let delta: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(-20.0);
    let out: PathBuf = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("rcsoc_phase_cut"));

    let mut spec = SweepSpec::cut(delta, Range::new(0.0, 60.0, 61));
    spec.output_dir = Some(out.clone());
    let result = run_sweep(&spec)?;

    for p in &result.points {
        if let Some(s) = &p.summary {
            println!(
                "η = {:5.1}  {:<6} W = {:?}  |N↓| = {:.4}  |α₋| = {:.4}  |S₊| = {:.4}",
                p.eta, s.label, s.winding, s.abs_nw_dn, s.abs_alpha_m, s.abs_s_plus
            );
        }
    }
    for b in &result.boundaries.boundaries {
        println!("boundary {} → {} at η ∈ [{}, {}]: {:?} order, topological: {}", b.from, b.to, b.eta_lo, b.eta_hi, b.order, b.topological);
    }
    for f in render_sweep_figures(&out, true)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
