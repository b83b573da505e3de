//! Phase-diagram scans over (η, Δ).
//!
//! Scheduling: every Δ row is walked sequentially in η (increasing for
//! [`Direction::Up`], decreasing for [`Direction::Down`]), so warm starts
//! follow an adiabatic path; rows are distributed over worker threads. Each
//! point's seeds depend only on `(solver.seed0, i_eta, i_delta)`, and the warm
//! start is the full state of the previous completed point of the same row.
//! Results therefore do not depend on the number of workers.
//!
//! Every finished point is appended to `checkpoint.jsonl` (one JSON object
//! per line, written by a single writer). The first line is a header carrying
//! the spec and its SHA-256 hash. Since states are stored with exact `f64`
//! round trip, a resumed sweep reproduces the uninterrupted one bit for bit.
//!
//! Outputs in the sweep directory:
//!
//! | file | content |
//! |---|---|
//! | `phase_points.csv` | one row per point, columns [`PHASE_POINTS_HEADER`] |
//! | `spectrum.csv` | five lowest branches per point (if `with_spectrum`), columns [`SPECTRUM_HEADER`] |
//! | `momenta.csv` | `|c_{τ,j}|` for `|j| ≤ 3` |
//! | `boundaries.csv` | detected transitions along η with order tags |
//! | `checkpoint.jsonl` | header + one record per point |
//! | `manifest.json` | spec, hash, version, per-point seeds, wall time |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bogoliubov::{self, Sector, TOL_IM};
use crate::meanfield::{mix_seed, solve_steady_state, CandidateKind, SolverConfig};
use crate::model::{make_symmetric_params, ModelParams, Parity, PlaneWaveBasis, Spin, StateFile, SteadyState};
use crate::observables::{classify_phase, order_parameters, PhaseLabel, PhasePoint, TOL_DW};
use crate::{Error, Result};

pub const PHASE_POINTS_HEADER: &str =
    "eta,delta,label,winding,abs_nw_dn,abs_nw_up,abs_s_plus,abs_sw_mm,abs_sw_mp,abs_alpha_m,abs_beta_p,mu,residual,seed,converged";
pub const SPECTRUM_HEADER: &str = "eta,delta,branch_index,re_omega,im_omega,even_odd_sector,goldstone_flag";
pub const MOMENTA_HEADER: &str = "eta,delta,spin,j,abs_c";
pub const BOUNDARIES_HEADER: &str = "delta,eta_lo,eta_hi,from,to,order,topological";

/// Number of branches written per point to `spectrum.csv`.
pub const BRANCHES_PER_POINT: usize = 5;

/// Inclusive, evenly spaced range; `steps == 1` means the single value `min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Range {
    pub fn new(min: f64, max: f64, steps: usize) -> Self {
        Range { min, max, steps }
    }

    pub fn single(v: f64) -> Self {
        Range { min: v, max: v, steps: 1 }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.min + h * i as f64).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.steps == 0 || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidParams(format!("{name}: steps must be ≥ 1 and bounds finite")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    Off,
    NearestNeighbor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub eta_range: Range,
    pub delta_range: Range,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub with_spectrum: bool,
    #[serde(default = "default_warm")]
    pub warm_start: WarmStart,
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    /// Template for everything except `delta_a = delta_b = Δ` and
    /// `eta_p = eta_m = η`; `None` means the symmetric defaults.
    #[serde(default)]
    pub base_params: Option<ModelParams>,
    #[serde(default = "default_tol_dw")]
    pub tol_dw: f64,
    #[serde(default = "default_tol_im")]
    pub tol_im: f64,
    /// Where results go. Not part of the spec hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_warm() -> WarmStart {
    WarmStart::NearestNeighbor
}
fn default_direction() -> Direction {
    Direction::Up
}
fn default_cutoff() -> usize {
    12
}
fn default_n_grid() -> usize {
    128
}
fn default_tol_dw() -> f64 {
    TOL_DW
}
fn default_tol_im() -> f64 {
    TOL_IM
}

impl SweepSpec {
    pub fn new(eta_range: Range, delta_range: Range) -> Self {
        SweepSpec {
            eta_range,
            delta_range,
            solver: SolverConfig::default(),
            with_spectrum: false,
            warm_start: default_warm(),
            direction: default_direction(),
            cutoff: default_cutoff(),
            n_grid: default_n_grid(),
            base_params: None,
            tol_dw: TOL_DW,
            tol_im: TOL_IM,
            output_dir: None,
        }
    }

    /// A single η cut at fixed Δ.
    pub fn cut(delta: f64, eta_range: Range) -> Self {
        Self::new(eta_range, Range::single(delta))
    }

    pub fn validate(&self) -> Result<()> {
        self.eta_range.validate("eta_range")?;
        self.delta_range.validate("delta_range")?;
        self.solver.validate()?;
        PlaneWaveBasis::new(self.cutoff, self.n_grid)?;
        if let Some(p) = &self.base_params {
            p.validate()?;
        }
        Ok(())
    }

    pub fn params_at(&self, eta: f64, delta: f64) -> ModelParams {
        match &self.base_params {
            None => make_symmetric_params(delta, eta),
            Some(b) => ModelParams {
                delta_a: delta,
                delta_b: delta,
                eta_p: eta,
                eta_m: eta,
                ..b.clone()
            },
        }
    }

    /// SHA-256 of the crate version and the canonical JSON of the spec without
/// `output_dir`.
    pub fn hash(&self) -> String {
        let mut s = self.clone();
        s.output_dir = None;
        let json = serde_json::to_string(&s).expect("spec serializes");
        let digest = Sha256::digest(format!("rcsoc {}\n{json}", env!("CARGO_PKG_VERSION")).as_bytes());
        digest.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }

    pub fn point_seed(&self, i_eta: usize, i_delta: usize) -> u64 {
        mix_seed(mix_seed(self.solver.seed0, i_eta as u64), i_delta as u64)
    }

    fn output_dir(&self) -> Result<&Path> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| Error::InvalidParams("sweep spec has no output_dir".into()))
    }
}

/// Scalar results of one point (everything the CSVs need).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub label: PhaseLabel,
    pub winding: Option<i64>,
    pub winding_residual: Option<f64>,
    pub abs_nw_dn: f64,
    pub abs_nw_up: f64,
    pub abs_s_plus: f64,
    pub abs_sw_mm: f64,
    pub abs_sw_mp: f64,
    pub abs_alpha_m: f64,
    pub abs_beta_p: f64,
    pub mu: f64,
    pub residual: Option<f64>,
    pub seed: u64,
    pub converged: bool,
    pub parity: Parity,
    pub parity_purity: f64,
    pub even_weight: f64,
    pub max_abs_sz: Option<f64>,
    /// `(j, |c↓,j|, |c↑,j|)` for |j| ≤ 3.
    pub momenta: Vec<(i64, f64, f64)>,
    /// Best μ among fresh (non-warm) candidates.
    pub fresh_best_mu: Option<f64>,
    pub warm_chosen: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_im: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl PointSummary {
    pub fn from_point(pt: &PhasePoint, label: PhaseLabel, max_im: Option<f64>) -> Self {
        let even_weight = match pt.parity {
            Parity::Even => pt.parity_purity,
            Parity::Odd => 1.0 - pt.parity_purity,
        };
        PointSummary {
            label,
            winding: pt.winding,
            winding_residual: finite(pt.winding_residual),
            abs_nw_dn: pt.nw_dn.norm(),
            abs_nw_up: pt.nw_up.norm(),
            abs_s_plus: pt.s_pm.1.norm(),
            abs_sw_mm: pt.sw[1].norm(),
            abs_sw_mp: pt.sw[0].norm(),
            abs_alpha_m: pt.cavity.alpha_m.norm(),
            abs_beta_p: pt.cavity.beta_p.norm(),
            mu: pt.mu,
            residual: finite(pt.residual),
            seed: pt.seed,
            converged: pt.converged,
            parity: pt.parity,
            parity_purity: pt.parity_purity,
            even_weight,
            max_abs_sz: finite(pt.max_abs_sz),
            momenta: (-3..=3)
                .map(|j| (j, pt.momentum(Spin::Dn, j).norm(), pt.momentum(Spin::Up, j).norm()))
                .collect(),
            fresh_best_mu: None,
            warm_chosen: false,
            max_im,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub branch_index: usize,
    pub re_omega: f64,
    pub im_omega: f64,
    pub sector: Sector,
    pub goldstone: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Done,
    Failed,
}

/// One checkpoint line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub i_eta: usize,
    pub i_delta: usize,
    pub eta: f64,
    pub delta: f64,
    pub status: PointStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PointSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<BranchRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PointRecord {
    fn label(&self) -> PhaseLabel {
        self.summary.as_ref().map_or(PhaseLabel::Unconverged, |s| s.label)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CheckpointLine {
    Header { spec_hash: String, spec: SweepSpec },
    Point(Box<PointRecord>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionOrder {
    First,
    Second,
}

/// A transition between two adjacent η points of one Δ row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub delta: f64,
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub from: PhaseLabel,
    pub to: PhaseLabel,
    pub order: TransitionOrder,
    /// 𝒲 differs across the boundary.
    pub topological: bool,
}

impl Boundary {
    pub fn eta_mid(&self) -> f64 {
        0.5 * (self.eta_lo + self.eta_hi)
    }
}

/// Boundaries of one kind (unordered label pair) across Δ rows, as a
/// polyline of (η_mid, Δ) points sorted by Δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub labels: (PhaseLabel, PhaseLabel),
    pub order: TransitionOrder,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub boundaries: Vec<Boundary>,
    pub polylines: Vec<Polyline>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub spec_hash: String,
    /// Sorted by (i_delta, i_eta).
    pub points: Vec<PointRecord>,
    pub boundaries: BoundarySet,
    /// Points solved by this invocation (0 for an already complete resume).
    pub solved: usize,
    /// `false` if the run stopped early (see [`RunOptions::stop_after`]).
    pub complete: bool,
}

impl SweepResult {
    pub fn labels(&self) -> Vec<PhaseLabel> {
        self.points.iter().map(|p| p.label()).collect()
    }

    pub fn output_dir(&self) -> Option<&Path> {
        self.spec.output_dir.as_deref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads (0 = available parallelism).
    pub jobs: usize,
    /// Stop after this many point solves (simulated interruption).
    pub stop_after: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 0, stop_after: None }
    }
}

// ---------------------------------------------------------------------------
// Running

/// Solve a single point with an optional warm start.
pub fn solve_point(
    spec: &SweepSpec,
    basis: &PlaneWaveBasis,
    i_eta: usize,
    i_delta: usize,
    eta: f64,
    delta: f64,
    warm: Option<&SteadyState>,
) -> PointRecord {
    let p = spec.params_at(eta, delta);
    let cfg = SolverConfig { seed0: spec.point_seed(i_eta, i_delta), ..spec.solver.clone() };
    let base = PointRecord {
        i_eta,
        i_delta,
        eta,
        delta,
        status: PointStatus::Failed,
        summary: None,
        state: None,
        spectrum: None,
        error: None,
    };
    let report = match solve_steady_state(&p, &cfg, basis, warm) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("point (η={eta}, Δ={delta}) failed: {e}");
            return PointRecord { error: Some(e.to_string()), ..base };
        }
    };
    let ss = &report.state;
    let pt = order_parameters(ss, basis);
    let mut spectrum = None;
    let mut stability = None;
    let mut err = None;
    if spec.with_spectrum && ss.converged {
        match bogoliubov::analyze(ss, &p, basis, spec.tol_im) {
            Ok((sp, st)) => {
                spectrum = Some(
                    sp.lowest_branches(BRANCHES_PER_POINT)
                        .iter()
                        .enumerate()
                        .map(|(k, m)| BranchRow {
                            branch_index: k,
                            re_omega: m.omega.re,
                            im_omega: m.omega.im,
                            sector: m.sector,
                            goldstone: m.goldstone,
                        })
                        .collect(),
                );
                stability = Some(st);
            }
            Err(e) => {
                log::warn!("spectrum at (η={eta}, Δ={delta}) failed: {e}");
                err = Some(e.to_string());
            }
        }
    }
    let label = classify_phase(&pt, spec.tol_dw, stability.as_ref());
    let mut summary = PointSummary::from_point(&pt, label, stability.map(|s| s.max_im));
    summary.warm_chosen = report.candidates.get(report.chosen).is_some_and(|c| c.kind == CandidateKind::Warm);
    summary.fresh_best_mu = report
        .candidates
        .iter()
        .filter(|c| c.converged && c.is_ground_branch() && c.kind != CandidateKind::Warm)
        .map(|c| c.energy)
        .fold(None, |a: Option<f64>, e| Some(a.map_or(e, |a| a.min(e))));
    PointRecord {
        status: PointStatus::Done,
        summary: Some(summary),
        state: Some(StateFile::new(ss, basis, None)),
        spectrum,
        error: err,
        ..base
    }
}

struct Writer {
    file: File,
}

impl Writer {
    fn append(&mut self, line: &CheckpointLine) -> Result<()> {
        let mut s = serde_json::to_string(line)?;
        s.push('\n');
        self.file.write_all(s.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Read a checkpoint: header spec plus the valid point records (later lines
/// win). Unparsable lines are skipped with a warning, so their points are
/// solved again.
pub fn read_checkpoint(path: &Path) -> Result<(SweepSpec, String, Vec<PointRecord>)> {
    let f = BufReader::new(File::open(path)?);
    let mut header: Option<(SweepSpec, String)> = None;
    let mut points: BTreeMap<(usize, usize), PointRecord> = BTreeMap::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CheckpointLine>(&line) {
            Ok(CheckpointLine::Header { spec_hash, spec }) => {
                if header.is_none() {
                    header = Some((spec, spec_hash));
                }
            }
            Ok(CheckpointLine::Point(p)) => {
                points.insert((p.i_delta, p.i_eta), *p);
            }
            Err(e) => log::warn!("checkpoint line {} is corrupt ({e}); its point will be re-solved", n + 1),
        }
    }
    let (spec, hash) = header.ok_or_else(|| Error::Other(format!("{} has no header line", path.display())))?;
    if spec.hash() != hash {
        return Err(Error::SpecMismatch { expected: spec.hash(), found: hash });
    }
    Ok((spec, hash, points.into_values().collect()))
}

/// Run a sweep from scratch; any existing checkpoint in the output directory
/// is replaced.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    run_sweep_with(spec, RunOptions::default())
}

pub fn run_sweep_with(spec: &SweepSpec, opts: RunOptions) -> Result<SweepResult> {
    spec.validate()?;
    let dir = spec.output_dir()?;
    fs::create_dir_all(dir)?;
    let hash = spec.hash();
    let mut file = File::create(dir.join("checkpoint.jsonl"))?;
    let header = CheckpointLine::Header { spec_hash: hash.clone(), spec: strip_dir(spec) };
    file.write_all(format!("{}\n", serde_json::to_string(&header)?).as_bytes())?;
    execute(spec, hash, Vec::new(), Writer { file }, opts)
}

/// Resume from `checkpoint.jsonl`; results go next to the checkpoint. If
/// `expected` is given, its hash must match the checkpoint header.
pub fn resume_sweep(checkpoint: &Path, expected: Option<&SweepSpec>, opts: RunOptions) -> Result<SweepResult> {
    let (mut spec, hash, done) = read_checkpoint(checkpoint)?;
    if let Some(e) = expected {
        if e.hash() != hash {
            return Err(Error::SpecMismatch { expected: e.hash(), found: hash });
        }
    }
    spec.output_dir = Some(checkpoint.parent().map(Path::to_path_buf).unwrap_or_default());
    let file = OpenOptions::new().append(true).open(checkpoint)?;
    // a truncated last line would swallow the next record: start on a fresh line
    let ends_clean = fs::read(checkpoint)?.last().is_none_or(|&b| b == b'\n');
    let mut w = Writer { file };
    if !ends_clean {
        w.file.write_all(b"\n")?;
    }
    let done: Vec<PointRecord> = done.into_iter().filter(|p| p.status == PointStatus::Done).collect();
    execute(&spec, hash, done, w, opts)
}

fn strip_dir(spec: &SweepSpec) -> SweepSpec {
    SweepSpec { output_dir: None, ..spec.clone() }
}

fn execute(
    spec: &SweepSpec,
    hash: String,
    done: Vec<PointRecord>,
    mut writer: Writer,
    opts: RunOptions,
) -> Result<SweepResult> {
    let start = Instant::now();
    let basis = PlaneWaveBasis::new(spec.cutoff, spec.n_grid)?;
    let etas = spec.eta_range.values();
    let deltas = spec.delta_range.values();
    let mut known: BTreeMap<(usize, usize), PointRecord> =
        done.into_iter().map(|p| ((p.i_delta, p.i_eta), p)).collect();
    // drop records that do not belong to this grid
    known.retain(|&(d, e), _| d < deltas.len() && e < etas.len());

    let order: Vec<usize> = match spec.direction {
        Direction::Up => (0..etas.len()).collect(),
        Direction::Down => (0..etas.len()).rev().collect(),
    };
    let jobs = if opts.jobs == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        opts.jobs
    }
    .min(deltas.len())
    .max(1);

    let next_row = AtomicUsize::new(0);
    let solved = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let known_ref = &known;
    let (tx, rx) = mpsc::channel::<PointRecord>();
    let write_err: Mutex<Option<Error>> = Mutex::new(None);
    let mut fresh: Vec<PointRecord> = Vec::new();

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let (next_row, solved, stop, order, etas, deltas, basis) =
                (&next_row, &solved, &stop, &order, &etas, &deltas, &basis);
            scope.spawn(move || loop {
                let i_delta = next_row.fetch_add(1, Ordering::SeqCst);
                if i_delta >= deltas.len() {
                    break;
                }
                let mut warm: Option<SteadyState> = None;
                for &i_eta in order {
                    if stop.load(Ordering::SeqCst) {
                        return;
                    }
                    if let Some(rec) = known_ref.get(&(i_delta, i_eta)) {
                        if let Some(st) = &rec.state {
                            warm = st.steady_state().ok();
                        }
                        continue;
                    }
                    if let Some(limit) = opts.stop_after {
                        if solved.fetch_add(1, Ordering::SeqCst) >= limit {
                            stop.store(true, Ordering::SeqCst);
                            return;
                        }
                    } else {
                        solved.fetch_add(1, Ordering::SeqCst);
                    }
                    let w = match spec.warm_start {
                        WarmStart::Off => None,
                        WarmStart::NearestNeighbor => warm.as_ref(),
                    };
                    let rec = solve_point(spec, basis, i_eta, i_delta, etas[i_eta], deltas[i_delta], w);
                    if let Some(st) = &rec.state {
                        warm = st.steady_state().ok();
                    }
                    if tx.send(rec).is_err() {
                        return;
                    }
                }
            });
        }
        drop(tx);
        for rec in rx {
            if let Err(e) = writer.append(&CheckpointLine::Point(Box::new(rec.clone()))) {
                let mut slot = write_err.lock().expect("lock");
                if slot.is_none() {
                    *slot = Some(e);
                }
                stop.store(true, Ordering::SeqCst);
            }
            fresh.push(rec);
        }
    });
    if let Some(e) = write_err.into_inner().expect("lock") {
        return Err(e);
    }
    let n_solved = fresh.len();
    for rec in fresh {
        known.insert((rec.i_delta, rec.i_eta), rec);
    }
    let complete = known.len() == etas.len() * deltas.len();
    let points: Vec<PointRecord> = known.into_values().collect();
    let boundaries = detect_boundaries(&points);
    let result = SweepResult {
        spec: spec.clone(),
        spec_hash: hash,
        points,
        boundaries,
        solved: n_solved,
        complete,
    };
    if complete {
        write_outputs(&result, start.elapsed().as_secs_f64(), jobs)?;
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Outputs

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn phase_points_csv(points: &[PointRecord]) -> String {
    let mut out = String::from(PHASE_POINTS_HEADER);
    out.push('\n');
    for p in points {
        match &p.summary {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    p.eta,
                    p.delta,
                    s.label,
                    s.winding.map_or(String::new(), |w| w.to_string()),
                    s.abs_nw_dn,
                    s.abs_nw_up,
                    s.abs_s_plus,
                    s.abs_sw_mm,
                    s.abs_sw_mp,
                    s.abs_alpha_m,
                    s.abs_beta_p,
                    s.mu,
                    fmt_opt(s.residual),
                    s.seed,
                    s.converged
                );
            }
            None => {
                let _ = writeln!(out, "{},{},{},,,,,,,,,,,,false", p.eta, p.delta, PhaseLabel::Unconverged);
            }
        }
    }
    out
}

pub fn spectrum_csv(points: &[PointRecord]) -> String {
    let mut out = String::from(SPECTRUM_HEADER);
    out.push('\n');
    for p in points {
        for b in p.spectrum.iter().flatten() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.eta, p.delta, b.branch_index, b.re_omega, b.im_omega, b.sector, b.goldstone as u8
            );
        }
    }
    out
}

pub fn momenta_csv(points: &[PointRecord]) -> String {
    let mut out = String::from(MOMENTA_HEADER);
    out.push('\n');
    for p in points {
        let Some(s) = &p.summary else { continue };
        for &(j, d, u) in &s.momenta {
            let _ = writeln!(out, "{},{},dn,{j},{d}", p.eta, p.delta);
            let _ = writeln!(out, "{},{},up,{j},{u}", p.eta, p.delta);
        }
    }
    out
}

pub fn boundaries_csv(b: &BoundarySet) -> String {
    let mut out = String::from(BOUNDARIES_HEADER);
    out.push('\n');
    for x in &b.boundaries {
        let order = match x.order {
            TransitionOrder::First => "first",
            TransitionOrder::Second => "second",
        };
        let _ = writeln!(out, "{},{},{},{},{},{order},{}", x.delta, x.eta_lo, x.eta_hi, x.from, x.to, x.topological);
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    spec_hash: &'a str,
    spec: &'a SweepSpec,
    points: usize,
    failed: usize,
    solved_this_run: usize,
    jobs: usize,
    wall_time_s: f64,
    /// `[i_eta, i_delta, seed0]` per point.
    seeds: Vec<(usize, usize, u64)>,
    boundaries: &'a BoundarySet,
}

fn write_outputs(r: &SweepResult, wall: f64, jobs: usize) -> Result<()> {
    let dir = r.spec.output_dir()?;
    fs::write(dir.join("phase_points.csv"), phase_points_csv(&r.points))?;
    fs::write(dir.join("momenta.csv"), momenta_csv(&r.points))?;
    fs::write(dir.join("boundaries.csv"), boundaries_csv(&r.boundaries))?;
    if r.spec.with_spectrum {
        fs::write(dir.join("spectrum.csv"), spectrum_csv(&r.points))?;
    }
    let spec = strip_dir(&r.spec);
    let m = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        spec_hash: &r.spec_hash,
        spec: &spec,
        points: r.points.len(),
        failed: r.points.iter().filter(|p| p.status == PointStatus::Failed).count(),
        solved_this_run: r.solved,
        jobs,
        wall_time_s: wall,
        seeds: r.points.iter().map(|p| (p.i_eta, p.i_delta, r.spec.point_seed(p.i_eta, p.i_delta))).collect(),
        boundaries: &r.boundaries,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Boundaries

/// Quantities watched for discontinuities.
fn jump_observables(s: &PointSummary) -> [f64; 4] {
    [s.abs_nw_dn, s.abs_alpha_m, s.abs_s_plus, s.even_weight]
}

/// Threshold factor between an adjacent-point change and the neighbouring
/// slopes for a jump.
pub const JUMP_FACTOR: f64 = 5.0;
/// Changes below this are never jumps.
pub const JUMP_FLOOR: f64 = 1e-6;

/// Tag label changes along η in every Δ row.
///
/// A boundary between points k and k+1 is first-order if 𝒲 flips or one of
/// |𝒩↓|, |α₋|, |S|, even-momentum weight changes by more than
/// [`JUMP_FACTOR`] × the larger of the neighbouring changes (k−1→k and
/// k+1→k+2); otherwise it is second-order. UNCONVERGED/UNSTABLE points do not
/// form boundaries.
pub fn detect_boundaries(points: &[PointRecord]) -> BoundarySet {
    let mut rows: BTreeMap<usize, Vec<&PointRecord>> = BTreeMap::new();
    for p in points {
        rows.entry(p.i_delta).or_default().push(p);
    }
    let mut boundaries = Vec::new();
    for row in rows.values_mut() {
        row.sort_by_key(|p| p.i_eta);
        let valid: Vec<&PointSummary> = row
            .iter()
            .filter_map(|p| p.summary.as_ref())
            .filter(|s| matches!(s.label, PhaseLabel::DwSw | PhaseLabel::PwSs | PhaseLabel::DwSs))
            .collect();
        let etas: Vec<f64> = row
            .iter()
            .filter(|p| p.summary.as_ref().is_some_and(|s| matches!(s.label, PhaseLabel::DwSw | PhaseLabel::PwSs | PhaseLabel::DwSs)))
            .map(|p| p.eta)
            .collect();
        let delta = row[0].delta;
        for k in 0..valid.len().saturating_sub(1) {
            let (a, b) = (valid[k], valid[k + 1]);
            if a.label == b.label {
                continue;
            }
            let qa = jump_observables(a);
            let qb = jump_observables(b);
            let before = (k > 0).then(|| jump_observables(valid[k - 1]));
            let after = (k + 2 < valid.len()).then(|| jump_observables(valid[k + 2]));
            let jump = (0..4).any(|i| {
                let d = (qb[i] - qa[i]).abs();
                let s1 = before.map_or(0.0, |q| (qa[i] - q[i]).abs());
                let s2 = after.map_or(0.0, |q| (q[i] - qb[i]).abs());
                d > JUMP_FLOOR && d > JUMP_FACTOR * s1.max(s2)
            });
            let topological = a.winding != b.winding;
            boundaries.push(Boundary {
                delta,
                eta_lo: etas[k],
                eta_hi: etas[k + 1],
                from: a.label,
                to: b.label,
                order: if jump || topological { TransitionOrder::First } else { TransitionOrder::Second },
                topological,
            });
        }
    }
    // polylines: group by unordered label pair
    let mut groups: BTreeMap<(String, String), Vec<&Boundary>> = BTreeMap::new();
    for b in &boundaries {
        let (x, y) = (b.from.as_str().to_string(), b.to.as_str().to_string());
        let key = if x <= y { (x, y) } else { (y, x) };
        groups.entry(key).or_default().push(b);
    }
    let polylines = groups
        .into_values()
        .map(|mut bs| {
            bs.sort_by(|a, b| a.delta.total_cmp(&b.delta).then(a.eta_lo.total_cmp(&b.eta_lo)));
            let first = bs.iter().filter(|b| b.order == TransitionOrder::First).count();
            Polyline {
                labels: (bs[0].from, bs[0].to),
                order: if 2 * first >= bs.len() { TransitionOrder::First } else { TransitionOrder::Second },
                points: bs.iter().map(|b| (b.eta_mid(), b.delta)).collect(),
            }
        })
        .collect();
    BoundarySet { boundaries, polylines }
}

/// Parse `phase_points.csv` back into (η, Δ, label, 𝒲, |𝒩↓|, |α₋|) rows for
/// plotting and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvPoint {
    pub eta: f64,
    pub delta: f64,
    pub label: String,
    pub winding: Option<i64>,
    pub fields: Vec<Option<f64>>,
}

pub fn parse_phase_points(text: &str) -> Result<Vec<CsvPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(PHASE_POINTS_HEADER) {
        return Err(Error::Other("unexpected phase_points.csv header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 15 {
                return Err(Error::Other(format!("bad row: {l}")));
            }
            let num = |s: &str| -> Option<f64> { s.parse().ok() };
            Ok(CsvPoint {
                eta: f[0].parse().map_err(|_| Error::Other(format!("bad eta in {l}")))?,
                delta: f[1].parse().map_err(|_| Error::Other(format!("bad delta in {l}")))?,
                label: f[2].to_string(),
                winding: f[3].parse().ok(),
                fields: f[4..13].iter().map(|s| num(s)).collect(),
            })
        })
        .collect()
}

/// Column index into [`CsvPoint::fields`].
pub fn field_index(name: &str) -> Option<usize> {
    PHASE_POINTS_HEADER.split(',').skip(4).position(|c| c == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_values() {
        assert_eq!(Range::single(3.0).values(), vec![3.0]);
        assert_eq!(Range::new(0.0, 60.0, 61).values()[27], 27.0);
        assert!(Range::new(0.0, 1.0, 0).validate("x").is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = SweepSpec::cut(-20.0, Range::new(0.0, 10.0, 3));
        let h = a.hash();
        a.output_dir = Some("/tmp/x".into());
        assert_eq!(a.hash(), h);
        a.solver.seed0 = 7;
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn point_seeds_are_distinct() {
        let s = SweepSpec::new(Range::new(0.0, 1.0, 4), Range::new(0.0, 1.0, 4));
        let mut seeds: Vec<u64> = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| s.point_seed(i, j)).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 16);
    }

    fn rec(i: usize, eta: f64, label: PhaseLabel, w: i64, nw: f64, am: f64, even: f64) -> PointRecord {
        PointRecord {
            i_eta: i,
            i_delta: 0,
            eta,
            delta: -20.0,
            status: PointStatus::Done,
            summary: Some(PointSummary {
                label,
                winding: Some(w),
                winding_residual: Some(0.0),
                abs_nw_dn: nw,
                abs_nw_up: nw,
                abs_s_plus: 0.0,
                abs_sw_mm: 0.0,
                abs_sw_mp: 0.0,
                abs_alpha_m: am,
                abs_beta_p: am,
                mu: 0.0,
                residual: Some(0.0),
                seed: 0,
                converged: true,
                parity: if even > 0.5 { Parity::Even } else { Parity::Odd },
                parity_purity: 1.0,
                even_weight: even,
                max_abs_sz: Some(0.0),
                momenta: vec![],
                fresh_best_mu: None,
                warm_chosen: false,
                max_im: None,
            }),
            state: None,
            spectrum: None,
            error: None,
        }
    }

    #[test]
    fn boundary_tags() {
        use PhaseLabel::*;
        let mut pts = vec![
            rec(0, 0.0, DwSw, 0, 0.10, 0.05, 1.0),
            rec(1, 1.0, DwSw, 0, 0.11, 0.06, 1.0),
            rec(2, 2.0, PwSs, 1, 0.0, 0.0, 0.0),
            rec(3, 3.0, PwSs, 1, 0.0, 0.0, 0.0),
            rec(4, 4.0, DwSs, 1, 0.05, 0.03, 0.0),
            rec(5, 5.0, DwSs, 1, 0.08, 0.05, 0.0),
            rec(6, 6.0, DwSs, 1, 0.10, 0.065, 0.0),
        ];
        let b = detect_boundaries(&pts);
        assert_eq!(b.boundaries.len(), 2);
        assert_eq!(b.boundaries[0].order, TransitionOrder::First);
        assert!(b.boundaries[0].topological);
        assert_eq!(b.boundaries[1].order, TransitionOrder::Second);
        assert!(!b.boundaries[1].topological);
        assert_eq!(b.polylines.len(), 2);

        pts.truncate(2);
        assert!(detect_boundaries(&pts).boundaries.is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let pts = vec![rec(0, 1.5, PhaseLabel::DwSw, 0, 0.1, 0.2, 1.0)];
        let text = phase_points_csv(&pts);
        let parsed = parse_phase_points(&text).unwrap();
        assert_eq!(parsed[0].label, "DW-SW");
        assert_eq!(parsed[0].winding, Some(0));
        assert_eq!(parsed[0].fields[field_index("abs_alpha_m").unwrap()], Some(0.2));
    }
}
