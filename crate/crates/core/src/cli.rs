//! The `rcsoc` command line.
//!
//! ```text
//! rcsoc solve    --delta -20 --eta 30 [--out state.json]
//! rcsoc sweep    [--spec sweep.json | --cut delta=-20 | --eta-min … --delta-steps …] [--momenta] [--jobs N] [--out DIR]
//! rcsoc spectrum (--state state.json | --cut delta=-20) [--out DIR]
//! rcsoc dynamics --state state.json [--t 50] [--lambda-check] [--out trajectory.jsonl]
//! rcsoc classify --state state.json
//! ```
//!
//! Every flag can also be given as an environment variable `RCSOC_<FLAG>`
//! (upper case, dashes as underscores, e.g. `RCSOC_N_GRID`) or in a JSON
//! config file passed with `--config`. The config file is an object whose keys
//! are flag names with underscores; keys inside an object named after the
//! subcommand (`{"solve": {"eta": 30}}`) override top-level keys. Precedence
//! is config file < environment < command line.
//!
//! Exit codes are stable:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | a checked contract failed (drift, Λ residual, I/O) |
//! | 2 | the steady state did not converge (or a sweep point failed) |
//! | 3 | the steady state is dynamically unstable |
//! | 64 | usage error: bad flags, config or parameters |

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::bogoliubov::{self, Sector, TOL_IM};
use crate::dynamics::{self, LambdaParams, PropagationConfig, ThreeLevelState};
use crate::meanfield::{solve_steady_state, SolverConfig};
use crate::model::{ModelParams, PlaneWaveBasis, StateFile, SteadyState, C64};
use crate::observables::{classify_phase, order_parameters, PhaseLabel, TOL_DW};
use crate::plot;
use crate::sweep::{self, Direction, Range, RunOptions, SweepResult, SweepSpec, WarmStart};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONTRACT: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Drift threshold of `dynamics` for a state to count as stationary.
pub const DEFAULT_DRIFT_TOL: f64 = 1e-4;
/// Maximum relative adiabatic-elimination residual accepted by `--lambda-check`.
pub const LAMBDA_RESIDUAL_TOL: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "rcsoc", version, about = "Two-component condensate in a four-mode lossy ring cavity")]
pub struct Cli {
    /// JSON config file (overridden by environment and flags).
    #[arg(long, global = true, env = "RCSOC_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the steady state at one (Δ, η).
    Solve(SolveArgs),
    /// Scan a rectangle or a cut of the (η, Δ) plane.
    Sweep(SweepArgs),
    /// Bogoliubov spectrum of a stored state or along a cut.
    Spectrum(SpectrumArgs),
    /// Real-time evolution of a stored state.
    Dynamics(DynamicsArgs),
    /// Recompute the phase label of a stored state.
    Classify(ClassifyArgs),
}

/// Physical parameters; unset values fall back to the symmetric defaults
/// (U0 = Ω0R = −1, κ = 1, δ = 0, two atoms per domain).
#[derive(Debug, Args, Clone, Default)]
pub struct PhysicsArgs {
    /// Cavity detuning Δ (both mode pairs).
    #[arg(long, env = "RCSOC_DELTA", allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Pump strength η (both pumped modes).
    #[arg(long, env = "RCSOC_ETA", allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// Light shift per photon U0 (both spins).
    #[arg(long, env = "RCSOC_U0", allow_negative_numbers = true)]
    pub u0: Option<f64>,
    /// Raman strength Ω0R (real).
    #[arg(long, env = "RCSOC_OMEGA_R", allow_negative_numbers = true)]
    pub omega_r: Option<f64>,
    /// Cavity loss rate κ.
    #[arg(long, env = "RCSOC_KAPPA")]
    pub kappa: Option<f64>,
    /// Two-photon detuning δ.
    #[arg(long, env = "RCSOC_TWO_PHOTON_DETUNING", allow_negative_numbers = true)]
    pub two_photon_detuning: Option<f64>,
    /// Atom number the unit-normalised spinor stands for.
    #[arg(long, env = "RCSOC_ATOM_NUMBER")]
    pub atom_number: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct NumericsArgs {
    /// Momentum cutoff J (modes −J…J).
    #[arg(long, env = "RCSOC_CUTOFF")]
    pub cutoff: Option<usize>,
    /// Real-space grid points.
    #[arg(long, env = "RCSOC_N_GRID")]
    pub n_grid: Option<usize>,
    /// Random seeds per solve (plus the even, odd and warm starts).
    #[arg(long, env = "RCSOC_SEEDS")]
    pub seeds: Option<usize>,
    /// Base RNG seed.
    #[arg(long, env = "RCSOC_SEED")]
    pub seed: Option<u64>,
    /// Convergence tolerance for the wave function and the fields.
    #[arg(long, env = "RCSOC_TOL")]
    pub tol: Option<f64>,
    /// Maximum self-consistency iterations.
    #[arg(long, env = "RCSOC_MAX_ITERS")]
    pub max_iters: Option<usize>,
    /// Largest Im ω still counted as stable.
    #[arg(long, env = "RCSOC_TOL_IM")]
    pub tol_im: Option<f64>,
    /// Density-wave threshold for the phase labels.
    #[arg(long, env = "RCSOC_TOL_DW")]
    pub tol_dw: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub numerics: NumericsArgs,
    /// State file to write.
    #[arg(long, env = "RCSOC_OUT")]
    pub out: Option<PathBuf>,
    /// Skip the Bogoliubov stability analysis.
    #[arg(long, env = "RCSOC_NO_SPECTRUM")]
    pub no_spectrum: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, env = "RCSOC_ETA_MIN", allow_negative_numbers = true)]
    pub eta_min: Option<f64>,
    #[arg(long, env = "RCSOC_ETA_MAX", allow_negative_numbers = true)]
    pub eta_max: Option<f64>,
    #[arg(long, env = "RCSOC_ETA_STEPS")]
    pub eta_steps: Option<usize>,
    #[arg(long, env = "RCSOC_DELTA_MIN", allow_negative_numbers = true)]
    pub delta_min: Option<f64>,
    #[arg(long, env = "RCSOC_DELTA_MAX", allow_negative_numbers = true)]
    pub delta_max: Option<f64>,
    #[arg(long, env = "RCSOC_DELTA_STEPS")]
    pub delta_steps: Option<usize>,
    /// Single cut at fixed Δ, written `delta=<value>`.
    #[arg(long, env = "RCSOC_CUT", allow_hyphen_values = true)]
    pub cut: Option<String>,
    /// Sweep direction along η: `up` or `down`.
    #[arg(long, env = "RCSOC_DIRECTION")]
    pub direction: Option<String>,
    /// Warm start: `nearest_neighbor` or `off`.
    #[arg(long, env = "RCSOC_WARM_START")]
    pub warm_start: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "RCSOC_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep spec JSON (see `SweepSpec`); grid flags override its ranges.
    #[arg(long, env = "RCSOC_SPEC")]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub numerics: NumericsArgs,
    /// Also compute Bogoliubov spectra at every point.
    #[arg(long, env = "RCSOC_WITH_SPECTRUM")]
    pub with_spectrum: bool,
    /// Also plot momentum occupations vs η.
    #[arg(long, env = "RCSOC_MOMENTA")]
    pub momenta: bool,
    /// Continue from the checkpoint in the output directory.
    #[arg(long, env = "RCSOC_RESUME")]
    pub resume: bool,
    /// Output directory.
    #[arg(long, env = "RCSOC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// State file to analyse.
    #[arg(long, env = "RCSOC_STATE")]
    pub state: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub numerics: NumericsArgs,
    /// Output directory.
    #[arg(long, env = "RCSOC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DynamicsArgs {
    /// Initial state file.
    #[arg(long, env = "RCSOC_STATE")]
    pub state: Option<PathBuf>,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// Final time.
    #[arg(long = "t", env = "RCSOC_T")]
    pub t_final: Option<f64>,
    /// Time step.
    #[arg(long, env = "RCSOC_DT")]
    pub dt: Option<f64>,
    /// Steps between snapshots.
    #[arg(long, env = "RCSOC_CADENCE")]
    pub cadence: Option<usize>,
    /// Largest accepted drift of the order parameters.
    #[arg(long, env = "RCSOC_DRIFT_TOL")]
    pub drift_tol: Option<f64>,
    /// Compare with the three-level model at ΣΔ, 2ΣΔ, 4ΣΔ.
    #[arg(long, env = "RCSOC_LAMBDA_CHECK")]
    pub lambda_check: bool,
    /// Magnitude of the excited-state detuning sum Δ↓ + Δ↑ (sign follows U0).
    #[arg(long, env = "RCSOC_DETUNING_SUM")]
    pub detuning_sum: Option<f64>,
    /// Duration of the three-level comparison runs.
    #[arg(long, env = "RCSOC_LAMBDA_T")]
    pub lambda_t: Option<f64>,
    /// Trajectory file to write.
    #[arg(long, env = "RCSOC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, env = "RCSOC_STATE")]
    pub state: Option<PathBuf>,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long, env = "RCSOC_TOL_DW")]
    pub tol_dw: Option<f64>,
    #[arg(long, env = "RCSOC_TOL_IM")]
    pub tol_im: Option<f64>,
}

/// Failure of a command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParams(_) | Error::InvalidBasis(_) | Error::SpecMismatch { .. } => EXIT_USAGE,
            Error::NotConverged(_) => EXIT_UNCONVERGED,
            _ => EXIT_CONTRACT,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: EXIT_CONTRACT, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------------------
// Config overlay

/// Values from the config file, flattened for one subcommand.
#[derive(Clone, Debug, Default)]
pub struct Overlay {
    map: Map<String, Value>,
}

impl Overlay {
    pub fn from_value(root: Value, section: &str) -> CliResult<Self> {
        let Value::Object(obj) = root else {
            return Err(CliError::usage("config file must hold a JSON object"));
        };
        let mut map = Map::new();
        let mut nested = None;
        for (k, v) in obj {
            if k == section {
                nested = Some(v);
            } else if !v.is_object() {
                map.insert(k, v);
            }
        }
        if let Some(n) = nested {
            let Value::Object(n) = n else {
                return Err(CliError::usage(format!("config section '{section}' must be an object")));
            };
            map.extend(n);
        }
        Ok(Overlay { map })
    }

    pub fn load(path: Option<&Path>, section: &str) -> CliResult<Self> {
        match path {
            None => Ok(Overlay::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("config {} is not JSON: {e}", p.display())))?;
                Self::from_value(v, section)
            }
        }
    }

    /// `cli` (flag or environment) wins; otherwise the config value.
    pub fn pick<T: DeserializeOwned>(&self, cli: Option<T>, key: &str) -> CliResult<Option<T>> {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::usage(format!("config key '{key}': {e}"))),
        }
    }

    fn flag(&self, cli: bool, key: &str) -> CliResult<bool> {
        Ok(cli || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

impl PhysicsArgs {
    /// Resolve into parameters; `need` lists keys that must be set.
    pub fn resolve(&self, ov: &Overlay, need: &[&str]) -> CliResult<ModelParams> {
        let get = |v: Option<f64>, k: &str| -> CliResult<Option<f64>> {
            let r = ov.pick(v, k)?;
            if r.is_none() && need.contains(&k) {
                return Err(CliError::usage(format!("--{} is required", k.replace('_', "-"))));
            }
            Ok(r)
        };
        let delta = get(self.delta, "delta")?.unwrap_or(0.0);
        let eta = get(self.eta, "eta")?.unwrap_or(0.0);
        let mut p = ModelParams::symmetric(delta, eta);
        if let Some(u) = get(self.u0, "u0")? {
            p.u0_dn = u;
            p.u0_up = u;
        }
        if let Some(o) = get(self.omega_r, "omega_r")? {
            p.omega_r = C64::new(o, 0.0);
        }
        if let Some(k) = get(self.kappa, "kappa")? {
            p.kappa = k;
        }
        if let Some(d) = get(self.two_photon_detuning, "two_photon_detuning")? {
            p.two_photon_detuning = d;
        }
        if let Some(n) = get(self.atom_number, "atom_number")? {
            p.atom_number = n;
        }
        p.validate()?;
        Ok(p)
    }

    fn any_set(&self, ov: &Overlay) -> CliResult<bool> {
        let keys = ["delta", "eta", "u0", "omega_r", "kappa", "two_photon_detuning", "atom_number"];
        let vals = [self.delta, self.eta, self.u0, self.omega_r, self.kappa, self.two_photon_detuning, self.atom_number];
        for (k, v) in keys.iter().zip(vals) {
            if ov.pick(v, k)?.is_some() {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Resolved numerical settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Numerics {
    pub cutoff: usize,
    pub n_grid: usize,
    pub solver: SolverConfig,
    pub tol_im: f64,
    pub tol_dw: f64,
}

impl NumericsArgs {
    pub fn resolve(&self, ov: &Overlay) -> CliResult<Numerics> {
        let mut solver = SolverConfig::default();
        if let Some(n) = ov.pick(self.seeds, "seeds")? {
            solver.n_seeds = n;
        }
        if let Some(s) = ov.pick(self.seed, "seed")? {
            solver.seed0 = s;
        }
        if let Some(t) = ov.pick(self.tol, "tol")? {
            solver.tol_psi = t;
            solver.tol_field = t;
        }
        if let Some(m) = ov.pick(self.max_iters, "max_iters")? {
            solver.max_iters = m;
        }
        solver.validate()?;
        let n = Numerics {
            cutoff: ov.pick(self.cutoff, "cutoff")?.unwrap_or(12),
            n_grid: ov.pick(self.n_grid, "n_grid")?.unwrap_or(128),
            solver,
            tol_im: ov.pick(self.tol_im, "tol_im")?.unwrap_or(TOL_IM),
            tol_dw: ov.pick(self.tol_dw, "tol_dw")?.unwrap_or(TOL_DW),
        };
        PlaneWaveBasis::new(n.cutoff, n.n_grid)?;
        Ok(n)
    }
}

fn parse_cut(s: &str) -> CliResult<f64> {
    let v = s.strip_prefix("delta=").unwrap_or(s);
    v.trim().parse().map_err(|_| CliError::usage(format!("--cut expects delta=<value>, got '{s}'")))
}

impl GridArgs {
    /// Apply grid flags to `spec` (or build one from the default region:
    /// η ∈ [0, 60] × Δ ∈ [−40, 0] on 30 × 30 points; a cut uses 61 η points).
    fn apply(&self, ov: &Overlay, base: Option<SweepSpec>) -> CliResult<SweepSpec> {
        let cut = ov.pick(self.cut.clone(), "cut")?.map(|c| parse_cut(&c)).transpose()?;
        let mut spec = base.unwrap_or_else(|| match cut {
            Some(d) => SweepSpec::cut(d, Range::new(0.0, 60.0, 61)),
            None => SweepSpec::new(Range::new(0.0, 60.0, 30), Range::new(-40.0, 0.0, 30)),
        });
        if let Some(d) = cut {
            spec.delta_range = Range::single(d);
        }
        let e = &mut spec.eta_range;
        e.min = ov.pick(self.eta_min, "eta_min")?.unwrap_or(e.min);
        e.max = ov.pick(self.eta_max, "eta_max")?.unwrap_or(e.max);
        e.steps = ov.pick(self.eta_steps, "eta_steps")?.unwrap_or(e.steps);
        if cut.is_none() {
            let d = &mut spec.delta_range;
            d.min = ov.pick(self.delta_min, "delta_min")?.unwrap_or(d.min);
            d.max = ov.pick(self.delta_max, "delta_max")?.unwrap_or(d.max);
            d.steps = ov.pick(self.delta_steps, "delta_steps")?.unwrap_or(d.steps);
        }
        if let Some(dir) = ov.pick(self.direction.clone(), "direction")? {
            spec.direction = match dir.as_str() {
                "up" => Direction::Up,
                "down" => Direction::Down,
                other => return Err(CliError::usage(format!("--direction must be up or down, got '{other}'"))),
            };
        }
        if let Some(w) = ov.pick(self.warm_start.clone(), "warm_start")? {
            spec.warm_start = match w.as_str() {
                "nearest_neighbor" | "nearest-neighbor" => WarmStart::NearestNeighbor,
                "off" => WarmStart::Off,
                other => return Err(CliError::usage(format!("--warm-start must be nearest_neighbor or off, got '{other}'"))),
            };
        }
        Ok(spec)
    }

    fn jobs(&self, ov: &Overlay) -> CliResult<usize> {
        Ok(ov.pick(self.jobs, "jobs")?.unwrap_or(0))
    }
}

// ---------------------------------------------------------------------------
// Entry point

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult<i32> {
    let cfg = cli.config.as_deref();
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, &Overlay::load(cfg, "solve")?, out),
        Command::Sweep(a) => cmd_sweep(a, &Overlay::load(cfg, "sweep")?, out),
        Command::Spectrum(a) => cmd_spectrum(a, &Overlay::load(cfg, "spectrum")?, out),
        Command::Dynamics(a) => cmd_dynamics(a, &Overlay::load(cfg, "dynamics")?, out),
        Command::Classify(a) => cmd_classify(a, &Overlay::load(cfg, "classify")?, out),
    }
}

fn summary_line(label: PhaseLabel, ss: &SteadyState, basis: &PlaneWaveBasis) -> String {
    let pt = order_parameters(ss, basis);
    let w = pt.winding.map_or("?".to_string(), |w| w.to_string());
    format!(
        "{label}  W={w}  |N_dn|={:.6e}  |N_up|={:.6e}  |alpha_m|={:.6e}  |beta_p|={:.6e}  mu={:.9}  residual={:.2e}",
        pt.nw_dn.norm(),
        pt.nw_up.norm(),
        ss.cavity.alpha_m.norm(),
        ss.cavity.beta_p.norm(),
        ss.mu,
        ss.residual
    )
}

fn label_exit(label: PhaseLabel) -> i32 {
    match label {
        PhaseLabel::Unconverged => EXIT_UNCONVERGED,
        PhaseLabel::Unstable => EXIT_UNSTABLE,
        _ => EXIT_OK,
    }
}

fn cmd_solve(a: &SolveArgs, ov: &Overlay, out: &mut dyn Write) -> CliResult<i32> {
    let p = a.physics.resolve(ov, &["delta", "eta"])?;
    p.validate_steady()?;
    let num = a.numerics.resolve(ov)?;
    let basis = PlaneWaveBasis::new(num.cutoff, num.n_grid)?;
    let no_spectrum = ov.flag(a.no_spectrum, "no_spectrum")?;
    let path = ov.pick(a.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from("state.json"));

    let report = solve_steady_state(&p, &num.solver, &basis, None)?;
    let ss = &report.state;
    let stability = if !no_spectrum && ss.converged {
        Some(bogoliubov::analyze(ss, &p, &basis, num.tol_im)?.1)
    } else {
        None
    };
    let pt = order_parameters(ss, &basis);
    let label = classify_phase(&pt, num.tol_dw, stability.as_ref());
    StateFile::new(ss, &basis, Some(&p)).write(&path)?;
    writeln!(out, "{}", summary_line(label, ss, &basis))?;
    if let Some(s) = stability {
        writeln!(out, "max Im(omega) = {:.3e} (tol {})", s.max_im, s.tol_im)?;
    }
    writeln!(out, "state written to {}", path.display())?;
    Ok(label_exit(label))
}

fn read_spec(path: &Path) -> CliResult<SweepSpec> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("bad sweep spec {}: {e}", path.display())))
}

fn build_spec(
    spec_path: Option<PathBuf>,
    grid: &GridArgs,
    physics: &PhysicsArgs,
    numerics: &NumericsArgs,
    ov: &Overlay,
) -> CliResult<SweepSpec> {
    let base = spec_path.map(|p| read_spec(&p)).transpose()?;
    let from_file = base.is_some();
    let mut spec = grid.apply(ov, base)?;
    let num = numerics.resolve(ov)?;
    if !from_file || numerics_given(numerics, ov)? {
        spec.solver = num.solver.clone();
        spec.cutoff = num.cutoff;
        spec.n_grid = num.n_grid;
        spec.tol_im = num.tol_im;
        spec.tol_dw = num.tol_dw;
    }
    if physics.any_set(ov)? {
        spec.base_params = Some(physics.resolve(ov, &[])?);
    }
    spec.validate()?;
    Ok(spec)
}

fn numerics_given(n: &NumericsArgs, ov: &Overlay) -> CliResult<bool> {
    let keys = ["cutoff", "n_grid", "seeds", "seed", "tol", "max_iters", "tol_im", "tol_dw"];
    let given = [
        n.cutoff.is_some(),
        n.n_grid.is_some(),
        n.seeds.is_some(),
        n.seed.is_some(),
        n.tol.is_some(),
        n.max_iters.is_some(),
        n.tol_im.is_some(),
        n.tol_dw.is_some(),
    ];
    for (k, g) in keys.iter().zip(given) {
        if g || ov.pick::<Value>(None, k)?.is_some() {
            return Ok(true);
        }
    }
    Ok(false)
}

fn run_or_resume(spec: &SweepSpec, dir: &Path, resume: bool, jobs: usize) -> CliResult<SweepResult> {
    let ck = dir.join("checkpoint.jsonl");
    let opts = RunOptions { jobs, stop_after: None };
    if resume && ck.exists() {
        Ok(sweep::resume_sweep(&ck, Some(spec), opts)?)
    } else {
        let spec = SweepSpec { output_dir: Some(dir.to_path_buf()), ..spec.clone() };
        Ok(sweep::run_sweep_with(&spec, opts)?)
    }
}

/// Render the figures of a finished sweep directory from its CSV files.
pub fn render_sweep_figures(dir: &Path, momenta: bool) -> crate::Result<Vec<PathBuf>> {
    let points = fs::read_to_string(dir.join("phase_points.csv"))?;
    let boundaries = fs::read_to_string(dir.join("boundaries.csv")).ok();
    let rows = sweep::parse_phase_points(&points)?;
    let mut deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    let mut written = Vec::new();
    let mut emit = |name: &str, svg: String| -> crate::Result<()> {
        let p = dir.join(name);
        fs::write(&p, svg)?;
        written.push(p);
        Ok(())
    };
    if deltas.len() > 1 {
        emit("phase_diagram.svg", plot::phase_diagram_svg(&points, "abs_nw_dn", boundaries.as_deref())?)?;
        emit("phase_diagram_alpha.svg", plot::phase_diagram_svg(&points, "abs_alpha_m", boundaries.as_deref())?)?;
    }
    if deltas.len() == 1 {
        emit("cut.svg", plot::cut_svg(&points, deltas[0])?)?;
    }
    if momenta {
        let m = fs::read_to_string(dir.join("momenta.csv"))?;
        for (k, d) in deltas.iter().enumerate() {
            let name = if deltas.len() == 1 { "momenta.svg".to_string() } else { format!("momenta_{k}.svg") };
            emit(&name, plot::momenta_svg(&m, *d)?)?;
        }
    }
    if let Ok(s) = fs::read_to_string(dir.join("spectrum.csv")) {
        if deltas.len() == 1 && s.lines().count() > 1 {
            emit("spectrum.svg", plot::spectrum_svg(&s, deltas[0])?)?;
        }
    }
    Ok(written)
}

fn report_sweep(r: &SweepResult, out: &mut dyn Write) -> CliResult<i32> {
    let mut counts = std::collections::BTreeMap::new();
    for l in r.labels() {
        *counts.entry(l.as_str()).or_insert(0usize) += 1;
    }
    writeln!(out, "{} points ({} solved now), spec hash {}", r.points.len(), r.solved, r.spec_hash)?;
    for (l, n) in &counts {
        writeln!(out, "  {l:<12} {n}")?;
    }
    for b in &r.boundaries.boundaries {
        writeln!(
            out,
            "  boundary at delta={} eta in [{}, {}]: {} -> {} ({:?}{})",
            b.delta,
            b.eta_lo,
            b.eta_hi,
            b.from,
            b.to,
            b.order,
            if b.topological { ", topological" } else { "" }
        )?;
    }
    let failed = counts.get(PhaseLabel::Unconverged.as_str()).copied().unwrap_or(0);
    Ok(if failed > 0 { EXIT_UNCONVERGED } else { EXIT_OK })
}

fn cmd_sweep(a: &SweepArgs, ov: &Overlay, out: &mut dyn Write) -> CliResult<i32> {
    let mut spec = build_spec(ov.pick(a.spec.clone(), "spec")?, &a.grid, &a.physics, &a.numerics, ov)?;
    if ov.flag(a.with_spectrum, "with_spectrum")? {
        spec.with_spectrum = true;
    }
    let dir = ov
        .pick(a.out.clone(), "out")?
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("sweep_out"));
    let r = run_or_resume(&spec, &dir, ov.flag(a.resume, "resume")?, a.grid.jobs(ov)?)?;
    let figs = render_sweep_figures(&dir, ov.flag(a.momenta, "momenta")?)?;
    let code = report_sweep(&r, out)?;
    for f in figs {
        writeln!(out, "  wrote {}", f.display())?;
    }
    Ok(code)
}

fn load_state(path: &Path) -> CliResult<(StateFile, SteadyState, PlaneWaveBasis)> {
    let sf = StateFile::read(path).map_err(|e| CliError::usage(format!("cannot load state {}: {e}", path.display())))?;
    let ss = sf.steady_state()?;
    let basis = sf.basis()?;
    Ok((sf, ss, basis))
}

/// Parameters for a stored state: command-line values if any were given,
/// else the ones recorded in the file.
fn state_params(sf: &StateFile, physics: &PhysicsArgs, ov: &Overlay) -> CliResult<ModelParams> {
    if physics.any_set(ov)? || sf.params.is_none() {
        physics.resolve(ov, &["delta", "eta"])
    } else {
        Ok(sf.params.clone().expect("checked"))
    }
}

fn cmd_spectrum(a: &SpectrumArgs, ov: &Overlay, out: &mut dyn Write) -> CliResult<i32> {
    let dir = ov.pick(a.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from("spectrum_out"));
    let state = ov.pick(a.state.clone(), "state")?;
    if let Some(path) = state {
        let (sf, ss, basis) = load_state(&path)?;
        let p = state_params(&sf, &a.physics, ov)?;
        let num = a.numerics.resolve(ov)?;
        let (sp, st) = bogoliubov::analyze(&ss, &p, &basis, num.tol_im)?;
        fs::create_dir_all(&dir)?;
        let mut csv = format!("{}\n", sweep::SPECTRUM_HEADER);
        for (k, m) in sp.lowest_branches(sweep::BRANCHES_PER_POINT).iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{k},{},{},{},{}\n",
                p.eta_p, p.delta_a, m.omega.re, m.omega.im, m.sector, m.goldstone as u8
            ));
        }
        fs::write(dir.join("spectrum.csv"), &csv)?;
        fs::write(dir.join("spectrum.svg"), plot::spectrum_svg(&csv, p.delta_a)?)?;
        writeln!(out, "lowest branches (Re, Im, sector, goldstone):")?;
        for m in sp.lowest_branches(sweep::BRANCHES_PER_POINT) {
            writeln!(out, "  {:+.6e} {:+.3e}i  {}  {}", m.omega.re, m.omega.im, m.sector, m.goldstone)?;
        }
        let even_gap = sp
            .half(1e-9)
            .filter(|m| m.sector == Sector::Even && !m.gauge && !m.goldstone)
            .map(|m| m.omega.re)
            .fold(f64::INFINITY, f64::min);
        writeln!(
            out,
            "goldstone modes {}  gap {:.6e}  even-sector gap {:.6e}  max Im {:.3e}",
            sp.goldstone_count(),
            sp.gap(),
            even_gap,
            st.max_im
        )?;
        writeln!(out, "  wrote {}", dir.join("spectrum.csv").display())?;
        return Ok(if st.is_stable() { EXIT_OK } else { EXIT_UNSTABLE });
    }
    if ov.pick(a.grid.cut.clone(), "cut")?.is_none() {
        return Err(CliError::usage("spectrum needs --state or --cut"));
    }
    let mut spec = build_spec(None, &a.grid, &a.physics, &a.numerics, ov)?;
    spec.with_spectrum = true;
    let r = run_or_resume(&spec, &dir, false, a.grid.jobs(ov)?)?;
    let figs = render_sweep_figures(&dir, false)?;
    // lowest non-gauge, non-Goldstone even branch along the cut
    let mut best: Option<(f64, f64)> = None;
    for p in &r.points {
        for b in p.spectrum.iter().flatten() {
            if b.sector == Sector::Even && !b.goldstone && b.re_omega > 1e-3 && best.is_none_or(|(_, w)| b.re_omega < w) {
                best = Some((p.eta, b.re_omega));
            }
        }
    }
    let code = report_sweep(&r, out)?;
    if let Some((eta, w)) = best {
        writeln!(out, "smallest even-sector excitation {w:.4e} at eta = {eta}")?;
    }
    for f in figs {
        writeln!(out, "  wrote {}", f.display())?;
    }
    Ok(code)
}

fn cmd_dynamics(a: &DynamicsArgs, ov: &Overlay, out: &mut dyn Write) -> CliResult<i32> {
    let path = ov.pick(a.state.clone(), "state")?.ok_or_else(|| CliError::usage("dynamics needs --state"))?;
    let (sf, ss, basis) = load_state(&path)?;
    let p = state_params(&sf, &a.physics, ov)?;
    let mut cfg = PropagationConfig::default();
    cfg.t_final = ov.pick(a.t_final, "t")?.unwrap_or(cfg.t_final);
    cfg.dt = ov.pick(a.dt, "dt")?.unwrap_or(cfg.dt);
    cfg.cadence = ov.pick(a.cadence, "cadence")?.unwrap_or(cfg.cadence);
    if !(cfg.dt > 0.0 && cfg.t_final >= 0.0 && cfg.cadence > 0) {
        return Err(CliError::usage("need dt > 0, t ≥ 0, cadence > 0"));
    }
    let drift_tol = ov.pick(a.drift_tol, "drift_tol")?.unwrap_or(DEFAULT_DRIFT_TOL);
    let traj_path = ov.pick(a.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from("trajectory.jsonl"));

    let traj = dynamics::propagate_steady(&ss, &p, &basis, &cfg)?;
    traj.write_jsonl(&traj_path)?;
    let drift = traj.drift();
    writeln!(
        out,
        "t = {}  snapshots {}  step halvings {}  norm drift {:.3e}  order-parameter drift {:.3e} (tol {:.1e})",
        cfg.t_final,
        traj.snapshots.len(),
        traj.halvings,
        traj.norm_drift(),
        drift,
        drift_tol
    )?;
    let mut code = if drift < drift_tol {
        writeln!(out, "stationary: yes")?;
        EXIT_OK
    } else {
        writeln!(out, "stationary: NO (state moves)")?;
        EXIT_CONTRACT
    };
    writeln!(out, "  wrote {}", traj_path.display())?;

    if ov.flag(a.lambda_check, "lambda_check")? {
        let base = ov.pick(a.detuning_sum, "detuning_sum")?.unwrap_or(200.0).abs();
        let t = ov.pick(a.lambda_t, "lambda_t")?.unwrap_or(2.0);
        let lc = lambda_check(&ss, &p, &basis, base, t, cfg.dt)?;
        writeln!(out, "three-level check (sum of excited-state detunings, error vs effective model, max relative elimination residual):")?;
        for row in &lc.rows {
            writeln!(out, "  {:>10.1}  {:.4e}  {:.4e}", row.det_sum, row.error, row.residual)?;
        }
        writeln!(out, "  log-log slope {:.3} (expected -1 ± 0.2)", lc.slope)?;
        let ok = lc.rows[0].residual < LAMBDA_RESIDUAL_TOL && (lc.slope + 1.0).abs() <= 0.2;
        writeln!(out, "  lambda check: {}", if ok { "PASS" } else { "FAIL" })?;
        if !ok {
            code = EXIT_CONTRACT;
        }
    }
    Ok(code)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaRow {
    pub det_sum: f64,
    pub error: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaCheck {
    pub rows: Vec<LambdaRow>,
    pub slope: f64,
}

/// Compare the three-level and the effective model at detuning sums
/// `base`, `2 base`, `4 base` (sign chosen to match U0) over time `t`.
pub fn lambda_check(
    ss: &SteadyState,
    p: &ModelParams,
    basis: &PlaneWaveBasis,
    base: f64,
    t: f64,
    dt: f64,
) -> crate::Result<LambdaCheck> {
    let sign = p.u0_dn.signum();
    let cadence = ((t / dt / 20.0).round() as usize).max(1);
    let mut rows = Vec::new();
    for k in 0..3 {
        let det_sum = sign * base * f64::from(1u32 << k);
        let cfg = PropagationConfig { dt, t_final: t, cadence, full_state_every: 1, ..Default::default() };
        let lp = LambdaParams::from_effective(p, det_sum)?;
        let init = ThreeLevelState::dressed(ss, &lp, basis)?;
        let tl = dynamics::propagate_lambda(&init, &lp, basis, &cfg)?;
        let te = dynamics::propagate_effective(&ss.spinor, &ss.cavity, p, basis, &cfg)?;
        let residual = dynamics::adiabatic_residual(&tl, &lp, basis)?
            .iter()
            .map(|r| r.relative)
            .fold(0.0, f64::max);
        rows.push(LambdaRow { det_sum: det_sum.abs(), error: dynamics::trajectory_distance(&tl, &te), residual });
    }
    let slope = log_log_slope(&rows.iter().map(|r| (r.det_sum, r.error)).collect::<Vec<_>>());
    Ok(LambdaCheck { rows, slope })
}

/// Least-squares slope of ln y against ln x.
pub fn log_log_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn cmd_classify(a: &ClassifyArgs, ov: &Overlay, out: &mut dyn Write) -> CliResult<i32> {
    let path = ov.pick(a.state.clone(), "state")?.ok_or_else(|| CliError::usage("classify needs --state"))?;
    let (sf, ss, basis) = load_state(&path)?;
    let tol_dw = ov.pick(a.tol_dw, "tol_dw")?.unwrap_or(TOL_DW);
    let tol_im = ov.pick(a.tol_im, "tol_im")?.unwrap_or(TOL_IM);
    let stability = if ss.converged && (sf.params.is_some() || a.physics.any_set(ov)?) {
        let p = state_params(&sf, &a.physics, ov)?;
        Some(bogoliubov::analyze(&ss, &p, &basis, tol_im)?.1)
    } else {
        None
    };
    let pt = order_parameters(&ss, &basis);
    let label = classify_phase(&pt, tol_dw, stability.as_ref());
    writeln!(out, "{}", summary_line(label, &ss, &basis))?;
    Ok(label_exit(label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overlay_sections_override_top_level() {
        let ov = Overlay::from_value(json!({"eta": 10.0, "solve": {"eta": 12.0}, "sweep": {"eta": 99.0}}), "solve").unwrap();
        assert_eq!(ov.pick::<f64>(None, "eta").unwrap(), Some(12.0));
        assert_eq!(ov.pick(Some(30.0), "eta").unwrap(), Some(30.0));
        assert_eq!(ov.pick::<f64>(None, "delta").unwrap(), None);
        assert!(ov.pick::<f64>(None, "eta").is_ok());
        let bad = Overlay::from_value(json!({"eta": "x"}), "solve").unwrap();
        assert_eq!(bad.pick::<f64>(None, "eta").unwrap_err().code, EXIT_USAGE);
        assert!(Overlay::from_value(json!([1]), "solve").is_err());
    }

    #[test]
    fn physics_resolution() {
        let ov = Overlay::from_value(json!({"kappa": 2.0}), "solve").unwrap();
        let a = PhysicsArgs { delta: Some(-20.0), eta: Some(30.0), ..Default::default() };
        let p = a.resolve(&ov, &["delta", "eta"]).unwrap();
        assert_eq!((p.delta_a, p.eta_m, p.kappa, p.u0_up), (-20.0, 30.0, 2.0, -1.0));
        let missing = PhysicsArgs::default().resolve(&Overlay::default(), &["delta"]);
        assert_eq!(missing.unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn cut_parsing() {
        assert_eq!(parse_cut("delta=-20").unwrap(), -20.0);
        assert_eq!(parse_cut("-10").unwrap(), -10.0);
        assert!(parse_cut("delta=x").is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [200.0, 400.0, 800.0].iter().map(|&x| (x, 3.0 / x)).collect();
        assert!((log_log_slope(&pts) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn usage_errors_exit_64() {
        let mut sink = Vec::new();
        assert_eq!(run(["rcsoc", "solve", "--delta", "abc", "--eta", "1"], &mut sink), EXIT_USAGE);
        assert_eq!(run(["rcsoc", "frobnicate"], &mut sink), EXIT_USAGE);
        assert_eq!(run(["rcsoc", "dynamics"], &mut sink), EXIT_USAGE);
        assert_eq!(run(["rcsoc", "--help"], &mut sink), EXIT_OK);
    }
}
