//! Interrupt a small sweep, resume it from its checkpoint and check that the
//! result is byte-identical to an uninterrupted run.
//!
//! cargo run --release --example sweep_resume

use std::fs;

use rcsoc::prelude::*;

fn main() -> rcsoc::Result<()> {
    let root = std::env::temp_dir().join("rcsoc_sweep_resume");
    let _ = fs::remove_dir_all(&root);
    let mut spec = SweepSpec::new(Range::new(20.0, 34.0, 8), Range::new(-24.0, -16.0, 3));

    spec.output_dir = Some(root.join("full"));
    let full = run_sweep(&spec)?;
    println!("uninterrupted: {} points", full.points.len());

    spec.output_dir = Some(root.join("interrupted"));
    let partial = run_sweep_with(&spec, RunOptions { jobs: 1, stop_after: Some(10) })?;
    println!("interrupted after {} points (complete: {})", partial.solved, partial.complete);
    let resumed = resume_sweep(&root.join("interrupted/checkpoint.jsonl"), Some(&spec), RunOptions::default())?;
    println!("resumed: {} more points (complete: {})", resumed.solved, resumed.complete);

    let a = fs::read(root.join("full/phase_points.csv"))?;
    let b = fs::read(root.join("interrupted/phase_points.csv"))?;
    println!("phase_points.csv identical: {}", a == b);
    Ok(())
}
