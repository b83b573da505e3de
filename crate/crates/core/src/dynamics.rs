//! Real-time integrators.
//!
//! * [`propagate_effective`]: the effective two-component + four-mode
//!   mean-field equations `i ψ̇ = ℋ_at[a] ψ`, `i ȧ = M[ψ] a + i η`.
//! * [`propagate_lambda`]: the three-level Λ model before adiabatic
//!   elimination of the excited state `ψ_e`:
//!
//! ```text
//! i ψ̇_e = (−∂² − ΣΔ/2) ψ_e + G↓ f_a ψ↓ + G↑ f_b ψ↑
//! i ψ̇↓ = (−∂² − δ/2) ψ↓ + G↓* f_a* ψ_e
//! i ψ̇↑ = (−∂² + δ/2) ψ↑ + G↑* f_b* ψ_e
//! i α̇₊ = −(Δa + iκ) α₊ + n G↓* ∫e^{+iz} ψ↓* ψ_e + i η₊   (α₋: e^{−iz}, no pump)
//! i β̇₊ = −(Δb + iκ) β₊ + n G↑* ∫e^{+iz} ψ↑* ψ_e          (β₋: e^{−iz}, pump η₋)
//! ```
//!
//! with `f_a = e^{−iz} α₊ + e^{iz} α₋`, `f_b = e^{−iz} β₊ + e^{iz} β₋` and
//! `ΣΔ = Δ↓ + Δ↑`. Slaving `ψ_e` to the ground states gives
//! `ψ_e^ss = (2/ΣΔ)(G↓ f_a ψ↓ + G↑ f_b ψ↑)`, and with it the effective model
//! with `U0τ = 2|Gτ|²/ΣΔ` and `Ω0R = 2 G↓* G↑/ΣΔ`.
//!
//! Both integrators use Strang splitting: exact cavity half-steps with the
//! atoms frozen, then kinetic phases in momentum space and exact pointwise
//! exponentials of the local coupling on the grid.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cavity::{bilinear, build_cavity_matrix, field_profiles, moments_from_coeffs};
use crate::linalg;
use crate::meanfield::{apply_potential_exp, kinetic_factor};
use crate::model::{CavityState, ModelParams, PlaneWaveBasis, SpinorField, SteadyState, C64};
use crate::{Error, Result};

/// Maximum tolerated norm drift per unit time.
pub const NORM_DRIFT_BOUND: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Record a snapshot every `cadence` steps.
    pub cadence: usize,
    /// Store the full state in every `full_state_every`-th snapshot
    /// (0 = never).
    pub full_state_every: usize,
    /// How many times a step may be halved when the norm bound is violated.
    pub max_halvings: u32,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            dt: 1e-3,
            t_final: 50.0,
            cadence: 100,
            full_state_every: 0,
            max_halvings: 6,
        }
    }
}

/// Magnitudes of the order parameters plus the raw cavity amplitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotObservables {
    pub norm: f64,
    pub n_dn: f64,
    pub n_up: f64,
    pub abs_nw_dn: f64,
    pub abs_nw_up: f64,
    pub abs_s_minus: f64,
    pub abs_sw_mp: f64,
    pub abs_sw_mm: f64,
    pub alpha_p: C64,
    pub alpha_m: C64,
    pub beta_p: C64,
    pub beta_m: C64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excited_population: Option<f64>,
}

impl SnapshotObservables {
    fn of(f: &SpinorField, c: &CavityState, excited: Option<f64>) -> Self {
        let m = moments_from_coeffs(f);
        SnapshotObservables {
            norm: f.norm_sqr() + excited.unwrap_or(0.0),
            n_dn: m.n_dn,
            n_up: m.n_up,
            abs_nw_dn: m.nw_dn.norm(),
            abs_nw_up: m.nw_up.norm(),
            abs_s_minus: m.s_minus.norm(),
            abs_sw_mp: m.sw_minus_p.norm(),
            abs_sw_mm: m.sw_minus_m.norm(),
            alpha_p: c.alpha_p,
            alpha_m: c.alpha_m,
            beta_p: c.beta_p,
            beta_m: c.beta_m,
            excited_population: excited,
        }
    }

    /// Phase-insensitive quantities used for drift measurements.
    pub fn magnitudes(&self) -> [f64; 11] {
        [
            self.n_dn,
            self.n_up,
            self.abs_nw_dn,
            self.abs_nw_up,
            self.abs_s_minus,
            self.abs_sw_mp,
            self.abs_sw_mm,
            self.alpha_p.norm(),
            self.alpha_m.norm(),
            self.beta_p.norm(),
            self.beta_m.norm(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotState {
    pub c_dn: Vec<C64>,
    pub c_up: Vec<C64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_e: Option<Vec<C64>>,
    pub cavity: CavityState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub obs: SnapshotObservables,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<SnapshotState>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    /// Number of steps that had to be subdivided.
    pub halvings: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Largest change of any order-parameter magnitude relative to the first
    /// snapshot.
    pub fn drift(&self) -> f64 {
        let Some(first) = self.snapshots.first() else { return 0.0 };
        let m0 = first.obs.magnitudes();
        self.snapshots
            .iter()
            .flat_map(|s| s.obs.magnitudes().into_iter().zip(m0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    pub fn norm_drift(&self) -> f64 {
        let Some(first) = self.snapshots.first() else { return 0.0 };
        self.snapshots
            .iter()
            .map(|s| (s.obs.norm - first.obs.norm).abs())
            .fold(0.0, f64::max)
    }

    /// JSON lines, one snapshot per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for s in &self.snapshots {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_cfg(cfg: &PropagationConfig) -> Result<usize> {
    if !(cfg.dt > 0.0 && cfg.t_final >= 0.0 && cfg.t_final.is_finite()) {
        return Err(Error::InvalidParams("dt must be positive and t_final finite".into()));
    }
    if cfg.cadence == 0 {
        return Err(Error::InvalidParams("cadence must be positive".into()));
    }
    Ok((cfg.t_final / cfg.dt).round() as usize)
}

// ---------------------------------------------------------------------------
// Effective model

/// Total mean-field energy
/// `n ⟨ψ|ℋ_at[a]|ψ⟩ − Σ Δ_p |a_p|² + Σ i η_p (a_p* − a_p)`,
/// conserved when κ = 0.
pub fn total_energy(f: &SpinorField, c: &CavityState, p: &ModelParams) -> f64 {
    let e_at = crate::meanfield::rayleigh(f, c, p).re * f.norm_sqr();
    let a = c.to_array();
    let det = [p.delta_a, p.delta_a, p.delta_b, p.delta_b];
    let eta = p.pump();
    let cav: f64 = (0..4)
        .map(|i| -det[i] * a[i].norm_sqr() + (C64::i() * eta[i] * (a[i].conj() - a[i])).re)
        .sum();
    p.atom_number * e_at + cav
}

fn cavity_half_step(f: &SpinorField, c: &CavityState, p: &ModelParams, h: f64) -> CavityState {
    let m = build_cavity_matrix(&moments_from_coeffs(f), p);
    CavityState::from_array(linalg::driven_linear_step(&m, p.pump(), c.to_array(), h))
}

fn effective_step(
    f: &SpinorField,
    c: &CavityState,
    p: &ModelParams,
    basis: &PlaneWaveBasis,
    h: f64,
) -> Result<(SpinorField, CavityState)> {
    let c1 = cavity_half_step(f, c, p, h / 2.0);
    let prof = field_profiles(&c1, p, basis);
    let (mut d, mut u) = f.to_grid(basis)?;
    apply_potential_exp(&mut d, &mut u, &prof, p, C64::new(0.0, h / 2.0));
    let mut g = SpinorField::from_grid(basis, &d, &u)?;
    kinetic_factor(&mut g, basis, C64::new(0.0, h));
    let (mut d, mut u) = g.to_grid(basis)?;
    apply_potential_exp(&mut d, &mut u, &prof, p, C64::new(0.0, h / 2.0));
    let g = SpinorField::from_grid(basis, &d, &u)?;
    let c2 = cavity_half_step(&g, &c1, p, h / 2.0);
    Ok((g, c2))
}

/// Step with adaptive halving whenever the norm drift per unit time exceeds
/// [`NORM_DRIFT_BOUND`].
fn guarded<S: Clone>(
    state: &S,
    h: f64,
    depth: u32,
    max: u32,
    norm: &dyn Fn(&S) -> f64,
    step: &dyn Fn(&S, f64) -> Result<S>,
    halvings: &mut usize,
) -> Result<S> {
    let n0 = norm(state);
    let next = step(state, h)?;
    if (norm(&next) - n0).abs() <= NORM_DRIFT_BOUND * h {
        return Ok(next);
    }
    if depth >= max {
        return Err(Error::StepTooLarge(format!(
            "norm drift {:.3e} per unit time at dt = {h:e}",
            (norm(&next) - n0).abs() / h
        )));
    }
    *halvings += 1;
    let mid = guarded(state, h / 2.0, depth + 1, max, norm, step, halvings)?;
    guarded(&mid, h / 2.0, depth + 1, max, norm, step, halvings)
}

/// Integrate the effective equations from `(spinor, cavity)`.
pub fn propagate_effective(
    spinor: &SpinorField,
    cavity: &CavityState,
    p: &ModelParams,
    basis: &PlaneWaveBasis,
    cfg: &PropagationConfig,
) -> Result<Trajectory> {
    p.validate()?;
    basis.check_coeffs(&spinor.c_dn)?;
    let steps = check_cfg(cfg)?;
    let mut traj = Trajectory::default();
    let mut state = (spinor.clone(), *cavity);
    let record = |traj: &mut Trajectory, k: usize, s: &(SpinorField, CavityState)| {
        let full = cfg.full_state_every > 0 && traj.snapshots.len() % cfg.full_state_every == 0;
        traj.snapshots.push(Snapshot {
            t: k as f64 * cfg.dt,
            obs: SnapshotObservables::of(&s.0, &s.1, None),
            state: full.then(|| SnapshotState {
                c_dn: s.0.c_dn.clone(),
                c_up: s.0.c_up.clone(),
                c_e: None,
                cavity: s.1,
            }),
        });
    };
    record(&mut traj, 0, &state);
    let norm = |s: &(SpinorField, CavityState)| s.0.norm_sqr();
    let step = |s: &(SpinorField, CavityState), h: f64| effective_step(&s.0, &s.1, p, basis, h);
    for k in 1..=steps {
        let mut halvings = 0;
        state = guarded(&state, cfg.dt, 0, cfg.max_halvings, &norm, &step, &mut halvings)?;
        traj.halvings += halvings;
        if !state.0.is_finite() || !state.1.is_finite() {
            return Err(Error::Diverged(format!("non-finite state at t = {}", k as f64 * cfg.dt)));
        }
        if k % cfg.cadence == 0 || k == steps {
            record(&mut traj, k, &state);
        }
    }
    Ok(traj)
}

/// Convenience wrapper for a steady state.
pub fn propagate_steady(ss: &SteadyState, p: &ModelParams, basis: &PlaneWaveBasis, cfg: &PropagationConfig) -> Result<Trajectory> {
    propagate_effective(&ss.spinor, &ss.cavity, p, basis, cfg)
}

// ---------------------------------------------------------------------------
// Λ model

/// Microscopic couplings of the three-level scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    pub g_dn: C64,
    pub g_up: C64,
    pub det_dn: f64,
    pub det_up: f64,
    /// Cavity, pump and two-photon parameters; its `u0_*` and `omega_r` must
    /// agree with the values derived from the couplings.
    pub model: ModelParams,
}

impl LambdaParams {
    pub fn det_sum(&self) -> f64 {
        self.det_dn + self.det_up
    }

    /// `(U0↓, U0↑, Ω0R)` implied by the couplings.
    pub fn derived(&self) -> (f64, f64, C64) {
        let s = self.det_sum();
        (
            2.0 * self.g_dn.norm_sqr() / s,
            2.0 * self.g_up.norm_sqr() / s,
            self.g_dn.conj() * self.g_up * 2.0 / s,
        )
    }

    /// Couplings reproducing `model`'s effective parameters at detuning sum
    /// `det_sum` (split equally). Needs `U0τ ΣΔ > 0` and `|Ω0R|² = U0↓ U0↑`.
    pub fn from_effective(model: &ModelParams, det_sum: f64) -> Result<Self> {
        if !(model.u0_dn * det_sum > 0.0 && model.u0_up * det_sum > 0.0) {
            return Err(Error::InvalidParams("U0 and the detuning sum must share a sign".into()));
        }
        let g_dn = C64::new((model.u0_dn * det_sum / 2.0).sqrt(), 0.0);
        let g_up = model.omega_r * det_sum / (2.0 * g_dn.conj());
        let lp = LambdaParams {
            g_dn,
            g_up,
            det_dn: det_sum / 2.0,
            det_up: det_sum / 2.0,
            model: model.clone(),
        };
        lp.validate()?;
        Ok(lp)
    }

    /// Consistency with the companion effective parameters (≤ 1e−12), plus a
    /// warning outside the large-detuning regime.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let (ud, uu, om) = self.derived();
        let m = &self.model;
        let scale = 1.0 + m.u0_dn.abs() + m.u0_up.abs() + m.omega_r.norm();
        if (ud - m.u0_dn).abs() > 1e-12 * scale
            || (uu - m.u0_up).abs() > 1e-12 * scale
            || (om - m.omega_r).norm() > 1e-12 * scale
        {
            return Err(Error::InvalidParams(format!(
                "couplings imply (U0↓, U0↑, Ω0R) = ({ud}, {uu}, {om}), model has ({}, {}, {})",
                m.u0_dn, m.u0_up, m.omega_r
            )));
        }
        let big = self.g_dn.norm().max(self.g_up.norm()).max(m.two_photon_detuning.abs());
        if self.det_sum().abs() < 10.0 * big {
            log::warn!(
                "detuning sum {} is not large compared to couplings ({big}); adiabatic elimination is poor",
                self.det_sum()
            );
        }
        Ok(())
    }
}

/// Ground spinor, excited-state field and cavity of the Λ model.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeLevelState {
    pub spinor: SpinorField,
    pub psi_e: Vec<C64>,
    pub cavity: CavityState,
}

fn mode_functions(c: &CavityState, z: f64) -> (C64, C64) {
    let em = C64::from_polar(1.0, -z);
    let ep = C64::from_polar(1.0, z);
    (em * c.alpha_p + ep * c.alpha_m, em * c.beta_p + ep * c.beta_m)
}

/// `ψ_e^ss = (2/ΣΔ)(G↓ f_a ψ↓ + G↑ f_b ψ↑)` in plane-wave coefficients.
pub fn adiabatic_excited(f: &SpinorField, c: &CavityState, lp: &LambdaParams, basis: &PlaneWaveBasis) -> Result<Vec<C64>> {
    let (d, u) = f.to_grid(basis)?;
    let s = 2.0 / lp.det_sum();
    let e: Vec<C64> = basis
        .grid()
        .iter()
        .enumerate()
        .map(|(m, &z)| {
            let (fa, fb) = mode_functions(c, z);
            (lp.g_dn * fa * d[m] + lp.g_up * fb * u[m]) * s
        })
        .collect();
    basis.to_coeffs(&e)
}

impl ThreeLevelState {
    /// Ground state and cavity with the excited state at its adiabatic value.
    pub fn adiabatic(f: &SpinorField, c: &CavityState, lp: &LambdaParams, basis: &PlaneWaveBasis) -> Result<Self> {
        Ok(ThreeLevelState {
            spinor: f.clone(),
            psi_e: adiabatic_excited(f, c, lp, basis)?,
            cavity: *c,
        })
    }

    /// Excited state that is exactly stationary for a ground state rotating
    /// at `ss.mu`: `ψ_e,j = (Wψ)_j / (μ − j² + ΣΔ/2)`. It differs from
    /// [`adiabatic_excited`] by O((μ − j²)/ΣΔ). The excited state has no decay
    /// channel, so starting from the leading-order value instead excites an
    /// undamped oscillation of about twice that size.
    pub fn dressed(ss: &SteadyState, lp: &LambdaParams, basis: &PlaneWaveBasis) -> Result<Self> {
        let mut psi_e = adiabatic_excited(&ss.spinor, &ss.cavity, lp, basis)?;
        let half = lp.det_sum() / 2.0;
        for (i, j) in basis.momenta().enumerate() {
            let denom = ss.mu - (j * j) as f64 + half;
            if denom.abs() < 1e-12 * half.abs() {
                return Err(Error::InvalidParams(format!("excited level j = {j} resonant with μ = {}", ss.mu)));
            }
            psi_e[i] *= half / denom;
        }
        Ok(ThreeLevelState { spinor: ss.spinor.clone(), psi_e, cavity: ss.cavity })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.spinor.norm_sqr() + self.psi_e.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

fn lambda_cavity_half(st: &ThreeLevelState, lp: &LambdaParams, h: f64) -> CavityState {
    let m = &lp.model;
    let n = m.atom_number;
    let f = &st.spinor;
    let e = &st.psi_e;
    let src = [
        lp.g_dn.conj() * n * bilinear(&f.c_dn, e, 1),
        lp.g_dn.conj() * n * bilinear(&f.c_dn, e, -1),
        lp.g_up.conj() * n * bilinear(&f.c_up, e, 1),
        lp.g_up.conj() * n * bilinear(&f.c_up, e, -1),
    ];
    let det = [m.delta_a, m.delta_a, m.delta_b, m.delta_b];
    let eta = m.pump();
    let a = st.cavity.to_array();
    CavityState::from_array(std::array::from_fn(|i| {
        let lam = C64::new(-m.kappa, det[i]);
        let drive = eta[i] - C64::i() * src[i];
        (lam * h).exp() * a[i] + linalg::phi1(lam * h) * drive * h
    }))
}

fn lambda_kinetic(st: &mut ThreeLevelState, lp: &LambdaParams, basis: &PlaneWaveBasis, h: f64) {
    let half_delta = lp.model.two_photon_detuning / 2.0;
    for (i, j) in basis.momenta().enumerate() {
        let k = (j * j) as f64;
        st.spinor.c_dn[i] *= C64::from_polar(1.0, -h * (k - half_delta));
        st.spinor.c_up[i] *= C64::from_polar(1.0, -h * (k + half_delta));
        st.psi_e[i] *= C64::from_polar(1.0, -h * k);
    }
}

/// Exact pointwise propagation under
/// `[[0, 0, w1*], [0, 0, w2*], [w1, w2, d]]` with `d = −ΣΔ/2`.
fn lambda_coupling(st: &mut ThreeLevelState, lp: &LambdaParams, basis: &PlaneWaveBasis, h: f64) -> Result<()> {
    let (mut x1, mut x2) = st.spinor.to_grid(basis)?;
    let mut y = basis.to_grid(&st.psi_e)?;
    let d = -lp.det_sum() / 2.0;
    let phase_e = C64::from_polar(1.0, -d * h);
    for (m, &z) in basis.grid().iter().enumerate() {
        let (fa, fb) = mode_functions(&st.cavity, z);
        let w1 = lp.g_dn * fa;
        let w2 = lp.g_up * fb;
        let r = (w1.norm_sqr() + w2.norm_sqr()).sqrt();
        if r < 1e-300 {
            y[m] *= phase_e;
            continue;
        }
        let xpar = (w1 * x1[m] + w2 * x2[m]) / r;
        let om = (0.25 * d * d + r * r).sqrt();
        let pre = C64::from_polar(1.0, -d * h / 2.0);
        let (c, s) = ((om * h).cos(), (om * h).sin() / om);
        let mi = C64::new(0.0, -1.0);
        let e00 = pre * (c + mi * s * (-d / 2.0));
        let e01 = pre * mi * s * r;
        let e11 = pre * (c + mi * s * (d / 2.0));
        let xpar_new = e00 * xpar + e01 * y[m];
        let y_new = e01 * xpar + e11 * y[m];
        let dx = xpar_new - xpar;
        x1[m] += w1.conj() / r * dx;
        x2[m] += w2.conj() / r * dx;
        y[m] = y_new;
    }
    st.spinor = SpinorField::from_grid(basis, &x1, &x2)?;
    st.psi_e = basis.to_coeffs(&y)?;
    Ok(())
}

fn lambda_step(st: &ThreeLevelState, lp: &LambdaParams, basis: &PlaneWaveBasis, h: f64) -> Result<ThreeLevelState> {
    let mut s = st.clone();
    s.cavity = lambda_cavity_half(&s, lp, h / 2.0);
    lambda_kinetic(&mut s, lp, basis, h / 2.0);
    lambda_coupling(&mut s, lp, basis, h)?;
    lambda_kinetic(&mut s, lp, basis, h / 2.0);
    s.cavity = lambda_cavity_half(&s, lp, h / 2.0);
    Ok(s)
}

/// Integrate the three-level Λ model.
pub fn propagate_lambda(
    init: &ThreeLevelState,
    lp: &LambdaParams,
    basis: &PlaneWaveBasis,
    cfg: &PropagationConfig,
) -> Result<Trajectory> {
    lp.validate()?;
    basis.check_coeffs(&init.psi_e)?;
    basis.check_coeffs(&init.spinor.c_dn)?;
    let steps = check_cfg(cfg)?;
    let mut traj = Trajectory::default();
    let record = |traj: &mut Trajectory, k: usize, s: &ThreeLevelState| {
        let full = cfg.full_state_every > 0 && traj.snapshots.len() % cfg.full_state_every == 0;
        let pe = s.psi_e.iter().map(|c| c.norm_sqr()).sum();
        traj.snapshots.push(Snapshot {
            t: k as f64 * cfg.dt,
            obs: SnapshotObservables::of(&s.spinor, &s.cavity, Some(pe)),
            state: full.then(|| SnapshotState {
                c_dn: s.spinor.c_dn.clone(),
                c_up: s.spinor.c_up.clone(),
                c_e: Some(s.psi_e.clone()),
                cavity: s.cavity,
            }),
        });
    };
    let mut state = init.clone();
    record(&mut traj, 0, &state);
    let norm = |s: &ThreeLevelState| s.norm_sqr();
    let step = |s: &ThreeLevelState, h: f64| lambda_step(s, lp, basis, h);
    for k in 1..=steps {
        let mut halvings = 0;
        state = guarded(&state, cfg.dt, 0, cfg.max_halvings, &norm, &step, &mut halvings)?;
        traj.halvings += halvings;
        if k % cfg.cadence == 0 || k == steps {
            record(&mut traj, k, &state);
        }
    }
    Ok(traj)
}

/// `‖ψ_e − ψ_e^ss[ψ↓, ψ↑, a]‖` for every snapshot that carries a full state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticResidual {
    pub t: f64,
    pub absolute: f64,
    /// Relative to ‖ψ_e‖ (0 when both vanish).
    pub relative: f64,
}

pub fn adiabatic_residual(traj: &Trajectory, lp: &LambdaParams, basis: &PlaneWaveBasis) -> Result<Vec<AdiabaticResidual>> {
    let mut out = Vec::new();
    for s in &traj.snapshots {
        let Some(st) = &s.state else { continue };
        let Some(e) = &st.c_e else { continue };
        let f = SpinorField::from_coeffs(basis, st.c_dn.clone(), st.c_up.clone())?;
        let ss = adiabatic_excited(&f, &st.cavity, lp, basis)?;
        let diff: Vec<C64> = e.iter().zip(&ss).map(|(a, b)| a - b).collect();
        let absolute = linalg::norm(&diff);
        let ne = linalg::norm(e);
        out.push(AdiabaticResidual {
            t: s.t,
            absolute,
            relative: if ne > 0.0 { absolute / ne } else if absolute == 0.0 { 0.0 } else { f64::INFINITY },
        });
    }
    Ok(out)
}

/// Largest deviation of the cavity amplitudes and ground-state densities
/// between a Λ-model and an effective-model trajectory sampled at the same
/// times.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| {
            let (ox, oy) = (&x.obs, &y.obs);
            let cav = [
                ox.alpha_p - oy.alpha_p,
                ox.alpha_m - oy.alpha_m,
                ox.beta_p - oy.beta_p,
                ox.beta_m - oy.beta_m,
            ];
            let c = linalg::norm(&cav);
            c.max((ox.abs_nw_dn - oy.abs_nw_dn).abs())
                .max((ox.abs_s_minus - oy.abs_s_minus).abs())
        })
        .fold(0.0, f64::max)
}

/// Run the Λ model and the effective model from the same ground state and
/// cavity (excited state initialised adiabatically) and return the distance
/// between the two trajectories.
pub fn lambda_effective_error(
    f: &SpinorField,
    c: &CavityState,
    model: &ModelParams,
    det_sum: f64,
    basis: &PlaneWaveBasis,
    cfg: &PropagationConfig,
) -> Result<f64> {
    let lp = LambdaParams::from_effective(model, det_sum)?;
    let init = ThreeLevelState::adiabatic(f, c, &lp, basis)?;
    let tl = propagate_lambda(&init, &lp, basis, cfg)?;
    let te = propagate_effective(f, c, model, basis, cfg)?;
    Ok(trajectory_distance(&tl, &te))
}

/// Cavity field ODE integrated with the atoms frozen (shared oracle with the
/// steady-state solver).
pub fn frozen_atom_cavity(f: &SpinorField, c: &CavityState, p: &ModelParams, t: f64, steps: usize) -> CavityState {
    let m = build_cavity_matrix(&moments_from_coeffs(f), p);
    let mut a = c.to_array();
    let h = t / steps as f64;
    for _ in 0..steps {
        a = linalg::driven_linear_step(&m, p.pump(), a, h);
    }
    CavityState::from_array(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ZERO;

    #[test]
    fn undriven_cavity_decays_exponentially() {
        let b = PlaneWaveBasis::new(6, 26).unwrap();
        let p = ModelParams::symmetric(-20.0, 0.0);
        let c0 = CavityState {
            alpha_p: C64::new(0.3, 0.1),
            alpha_m: C64::new(-0.2, 0.05),
            beta_p: C64::new(0.1, -0.4),
            beta_m: C64::new(0.25, 0.0),
        };
        let cfg = PropagationConfig { dt: 1e-3, t_final: 2.0, cadence: 500, ..Default::default() };
        let tr = propagate_effective(&SpinorField::uniform(&b), &c0, &p, &b, &cfg).unwrap();
        for s in &tr.snapshots {
            let want = (-p.kappa * s.t).exp();
            let got = [s.obs.alpha_p.norm(), s.obs.alpha_m.norm(), s.obs.beta_p.norm(), s.obs.beta_m.norm()];
            let c0m = [c0.alpha_p.norm(), c0.alpha_m.norm(), c0.beta_p.norm(), c0.beta_m.norm()];
            // the photons also feel the atoms; total photon number decays as e^{-2κt}
            let n: f64 = got.iter().map(|x| x * x).sum();
            let n0: f64 = c0m.iter().map(|x| x * x).sum();
            assert!((n - n0 * want * want).abs() < 1e-10 * n0, "t={} {n} {}", s.t, n0 * want * want);
        }
    }

    #[test]
    fn lambda_params_round_trip() {
        let m = ModelParams::symmetric(-20.0, 10.0);
        let lp = LambdaParams::from_effective(&m, -200.0).unwrap();
        let (ud, uu, om) = lp.derived();
        assert!((ud + 1.0).abs() < 1e-14 && (uu + 1.0).abs() < 1e-14 && (om + 1.0).norm() < 1e-14);
        assert!(LambdaParams::from_effective(&m, 200.0).is_err());
        let mut bad = lp.clone();
        bad.g_up *= 1.01;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn decoupled_lambda_keeps_excited_state_empty() {
        let b = PlaneWaveBasis::new(6, 26).unwrap();
        let mut m = ModelParams::symmetric(-20.0, 5.0);
        m.u0_dn = 0.0;
        m.u0_up = 0.0;
        m.omega_r = C64::new(0.0, 0.0);
        let lp = LambdaParams { g_dn: ZERO, g_up: ZERO, det_dn: -100.0, det_up: -100.0, model: m.clone() };
        let f = crate::meanfield::random_spinor(&b, 3, None);
        let init = ThreeLevelState { spinor: f.clone(), psi_e: vec![ZERO; b.dim()], cavity: CavityState::zero() };
        let cfg = PropagationConfig { dt: 1e-3, t_final: 0.5, cadence: 100, full_state_every: 1, ..Default::default() };
        let tr = propagate_lambda(&init, &lp, &b, &cfg).unwrap();
        let res = adiabatic_residual(&tr, &lp, &b).unwrap();
        assert!(res.iter().all(|r| r.absolute == 0.0 && r.relative == 0.0));
        // free evolution: |c_j| unchanged
        let last = tr.snapshots.last().unwrap().state.as_ref().unwrap();
        for (x, y) in last.c_dn.iter().zip(&f.c_dn) {
            assert!((x.norm() - y.norm()).abs() < 1e-13);
        }
    }
}
