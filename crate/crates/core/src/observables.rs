//! Order parameters, local spin texture, the topological winding number,
//! momentum distributions, the emergent spin–orbit dispersion and the phase
//! label of a state.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bogoliubov::Stability;
use crate::cavity::{moments_from_coeffs, AtomicMoments};
use crate::model::{CavityState, ModelParams, Parity, PlaneWaveBasis, Spin, SpinorField, SteadyState, C64};
use crate::{Error, Result};

/// Threshold on |𝒩↓| + |𝒩↑| separating PW-SS from DW-SS.
pub const TOL_DW: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseLabel {
    #[serde(rename = "DW-SW")]
    DwSw,
    #[serde(rename = "PW-SS")]
    PwSs,
    #[serde(rename = "DW-SS")]
    DwSs,
    #[serde(rename = "UNSTABLE")]
    Unstable,
    #[serde(rename = "UNCONVERGED")]
    Unconverged,
}

impl PhaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::DwSw => "DW-SW",
            PhaseLabel::PwSs => "PW-SS",
            PhaseLabel::DwSs => "DW-SS",
            PhaseLabel::Unstable => "UNSTABLE",
            PhaseLabel::Unconverged => "UNCONVERGED",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "DW-SW" => PhaseLabel::DwSw,
            "PW-SS" => PhaseLabel::PwSs,
            "DW-SS" => PhaseLabel::DwSs,
            "UNSTABLE" => PhaseLabel::Unstable,
            "UNCONVERGED" => PhaseLabel::Unconverged,
            _ => return Err(Error::Other(format!("unknown phase label {s:?}"))),
        })
    }
}

/// Local pseudospin vector `s = ⟨ψ|σ|ψ⟩` with `ψ = (ψ↑, ψ↓)`, so that
/// `s_x + i s_y = 2ψ↑*ψ↓` and `s_z = |ψ↑|² − |ψ↓|²`, sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinTexture {
    pub z: Vec<f64>,
    pub s_x: Vec<f64>,
    pub s_y: Vec<f64>,
    pub s_z: Vec<f64>,
    /// Unwrapped in-plane angle; `None` if the texture has nodes.
    pub phi: Option<Vec<f64>>,
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Threshold below which `|ψ↑*ψ↓|` counts as a node of the in-plane spin.
const NODE: f64 = 1e-14;

pub fn spin_texture(field: &SpinorField, basis: &PlaneWaveBasis) -> Result<SpinTexture> {
    let (d, u) = field.to_grid(basis)?;
    let n = d.len();
    let perp: Vec<C64> = (0..n).map(|m| u[m].conj() * d[m] * 2.0).collect();
    let s_z = (0..n).map(|m| u[m].norm_sqr() - d[m].norm_sqr()).collect();
    let phi = unwrap_phase(&perp).ok();
    Ok(SpinTexture {
        z: basis.grid(),
        s_x: perp.iter().map(|c| c.re).collect(),
        s_y: perp.iter().map(|c| c.im).collect(),
        s_z,
        phi,
    })
}

/// Unwrapped `arg` of a sampled complex function. Isolated nodes are filled
/// by interpolating the neighbouring angles; adjacent nodes are an error.
fn unwrap_phase(perp: &[C64]) -> Result<Vec<f64>> {
    let n = perp.len();
    let nodal: Vec<bool> = perp.iter().map(|c| c.norm() < NODE).collect();
    for m in 0..n {
        if nodal[m] && nodal[(m + 1) % n] {
            return Err(Error::NodalSpin(format!("adjacent nodes at grid points {m}, {}", (m + 1) % n)));
        }
    }
    let raw: Vec<Option<f64>> = perp
        .iter()
        .zip(&nodal)
        .map(|(c, &z)| (!z).then(|| c.arg()))
        .collect();
    let mut filled = vec![0.0; n];
    for m in 0..n {
        filled[m] = match raw[m] {
            Some(a) => a,
            None => {
                let l = raw[(m + n - 1) % n].unwrap();
                let r = raw[(m + 1) % n].unwrap();
                l + 0.5 * wrap(r - l)
            }
        };
    }
    let mut out = Vec::with_capacity(n);
    let mut acc = filled[0];
    out.push(acc);
    for m in 1..n {
        acc += wrap(filled[m] - filled[m - 1]);
        out.push(acc);
    }
    Ok(out)
}

/// Winding number over the unit cell `[0, λ/2)` and the distance of the raw
/// count from the nearest integer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Winding {
    pub value: i64,
    pub residual: f64,
}

/// `𝒲 = [φ(λ/2) − φ(0)]/2π`, accumulated from wrapped increments.
pub fn winding_number(texture: &SpinTexture) -> Result<Winding> {
    let phi = texture
        .phi
        .as_ref()
        .ok_or_else(|| Error::NodalSpin("in-plane spin vanishes".into()))?;
    let n = phi.len();
    if n % 2 != 0 {
        return Err(Error::InvalidBasis("winding needs an even number of grid points".into()));
    }
    let half = n / 2;
    let total: f64 = (0..half).map(|m| wrap(phi[m + 1] - phi[m])).sum();
    let raw = total / (2.0 * PI);
    let value = raw.round();
    Ok(Winding {
        value: value as i64,
        residual: (raw - value).abs(),
    })
}

/// `c_{τ,j}` for one momentum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumAmplitude {
    pub j: i64,
    pub c_dn: C64,
    pub c_up: C64,
}

/// Everything measured on one state.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub moments: AtomicMoments,
    pub nw_dn: C64,
    pub nw_up: C64,
    /// (S₋, S₊)
    pub s_pm: (C64, C64),
    /// [𝒮₋^(+), 𝒮₋^(−), 𝒮₊^(+), 𝒮₊^(−)]
    pub sw: [C64; 4],
    pub winding: Option<i64>,
    pub winding_residual: f64,
    pub momenta: Vec<MomentumAmplitude>,
    pub cavity: CavityState,
    pub mu: f64,
    pub residual: f64,
    pub seed: u64,
    pub converged: bool,
    pub parity: Parity,
    pub parity_purity: f64,
    pub max_abs_sz: f64,
    pub label: Option<PhaseLabel>,
    pub stability_margin: Option<f64>,
}

impl PhasePoint {
    pub fn abs_nw(&self) -> f64 {
        self.nw_dn.norm() + self.nw_up.norm()
    }

    pub fn momentum(&self, s: Spin, j: i64) -> C64 {
        self.momenta
            .iter()
            .find(|m| m.j == j)
            .map(|m| match s {
                Spin::Dn => m.c_dn,
                Spin::Up => m.c_up,
            })
            .unwrap_or_default()
    }
}

/// Fill all order parameters of a state (unlabelled).
pub fn order_parameters(ss: &SteadyState, basis: &PlaneWaveBasis) -> PhasePoint {
    let f = &ss.spinor;
    let m = moments_from_coeffs(f);
    let (winding, winding_residual, max_abs_sz) = match spin_texture(f, basis) {
        Ok(t) => {
            let sz = t.s_z.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            match winding_number(&t) {
                Ok(w) => (Some(w.value), w.residual, sz),
                Err(_) => (None, f64::NAN, sz),
            }
        }
        Err(_) => (None, f64::NAN, f64::NAN),
    };
    let (parity, parity_purity) = f.parity();
    PhasePoint {
        moments: m,
        nw_dn: m.nw_dn,
        nw_up: m.nw_up,
        s_pm: (m.s_minus, m.s_plus()),
        sw: [m.sw_minus_p, m.sw_minus_m, m.sw_plus_p(), m.sw_plus_m()],
        winding,
        winding_residual,
        momenta: basis
            .momenta()
            .map(|j| MomentumAmplitude {
                j,
                c_dn: f.coefficient(Spin::Dn, j),
                c_up: f.coefficient(Spin::Up, j),
            })
            .collect(),
        cavity: ss.cavity,
        mu: ss.mu,
        residual: ss.residual,
        seed: ss.seed,
        converged: ss.converged,
        parity,
        parity_purity,
        max_abs_sz,
        label: None,
        stability_margin: None,
    }
}

/// Phase label:
/// UNCONVERGED if the solver did not converge; UNSTABLE if the stability check
/// failed; DW-SW if 𝒲 = 0; PW-SS if |𝒩↓| + |𝒩↑| ≤ `tol_dw`; DW-SS otherwise.
/// A texture with nodes (undefined 𝒲) is classified by its density wave alone.
pub fn classify_phase(point: &PhasePoint, tol_dw: f64, stability: Option<&Stability>) -> PhaseLabel {
    if !point.converged {
        return PhaseLabel::Unconverged;
    }
    if stability.is_some_and(|s| !s.is_stable()) {
        return PhaseLabel::Unstable;
    }
    let dw = point.abs_nw() > tol_dw;
    match point.winding {
        Some(0) => PhaseLabel::DwSw,
        Some(_) if dw => PhaseLabel::DwSs,
        Some(_) => PhaseLabel::PwSs,
        None if dw => PhaseLabel::DwSw,
        None => PhaseLabel::PwSs,
    }
}

/// Lower/upper branches of the emergent spin–orbit-coupled Hamiltonian on a
/// quasimomentum grid, plus the local minima of the lower branch.
#[derive(Clone, Debug, PartialEq)]
pub struct SocDispersion {
    pub p: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub minima: Vec<f64>,
    pub argmin: f64,
}

/// In the PW-SS regime (α₋ = β₊ = 0) a spinor `(e^{i(p+1)z} χ↓, e^{i(p−1)z} χ↑)`
/// sees the 2×2 Hamiltonian
/// `[[(p+1)² + U0↓|α₊|² − δ/2, Ω0R α₊*β₋], [c.c., (p−1)² + U0↑|β₋|² + δ/2]]`.
pub fn soc_dispersion(c: &CavityState, params: &ModelParams, qs: &[f64]) -> SocDispersion {
    if c.alpha_m.norm() > 1e-6 || c.beta_p.norm() > 1e-6 {
        log::warn!(
            "SOC dispersion outside the plane-wave regime: |α₋| = {:.3e}, |β₊| = {:.3e}",
            c.alpha_m.norm(),
            c.beta_p.norm()
        );
    }
    let sd = params.u0_dn * c.alpha_p.norm_sqr() - params.two_photon_detuning / 2.0;
    let su = params.u0_up * c.beta_m.norm_sqr() + params.two_photon_detuning / 2.0;
    let w = (params.omega_r * c.alpha_p.conj() * c.beta_m).norm();
    let mut lower = Vec::with_capacity(qs.len());
    let mut upper = Vec::with_capacity(qs.len());
    for &p in qs {
        let a = (p + 1.0).powi(2) + sd;
        let d = (p - 1.0).powi(2) + su;
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d).powi(2) + w * w).sqrt();
        lower.push(mean - r);
        upper.push(mean + r);
    }
    let mut minima = Vec::new();
    for i in 1..qs.len().saturating_sub(1) {
        if lower[i] < lower[i - 1] && lower[i] <= lower[i + 1] {
            minima.push(qs[i]);
        }
    }
    let imin = (0..qs.len())
        .min_by(|&a, &b| lower[a].total_cmp(&lower[b]))
        .unwrap_or(0);
    SocDispersion {
        p: qs.to_vec(),
        lower,
        upper,
        minima,
        argmin: qs.get(imin).copied().unwrap_or(f64::NAN),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b() -> PlaneWaveBasis {
        PlaneWaveBasis::default()
    }

    #[test]
    fn spiral_texture() {
        let basis = b();
        let t = spin_texture(&SpinorField::spiral(&basis), &basis).unwrap();
        let phi = t.phi.as_ref().unwrap();
        let s0 = (t.s_x[0].powi(2) + t.s_y[0].powi(2)).sqrt();
        for m in 0..t.z.len() {
            assert!(t.s_z[m].abs() < 1e-15);
            assert!((phi[m] - phi[0] - 2.0 * t.z[m]).abs() < 1e-12);
            assert!(((t.s_x[m].powi(2) + t.s_y[m].powi(2)).sqrt() - s0).abs() < 1e-14);
        }
        let w = winding_number(&t).unwrap();
        assert_eq!(w.value, 1);
        assert!(w.residual < 1e-12);
    }

    #[test]
    fn uniform_texture() {
        let basis = b();
        let t = spin_texture(&SpinorField::uniform(&basis), &basis).unwrap();
        assert!(t.phi.as_ref().unwrap().iter().all(|p| p.abs() < 1e-15));
        assert!(t.s_x.iter().all(|x| (x - t.s_x[0]).abs() < 1e-15 && *x > 0.0));
        assert_eq!(winding_number(&t).unwrap().value, 0);
    }

    #[test]
    fn polarised_state_has_undefined_winding() {
        let basis = b();
        let mut f = SpinorField::uniform(&basis);
        f.c_up.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        let t = spin_texture(&f, &basis).unwrap();
        assert!(t.phi.is_none());
        assert!(matches!(winding_number(&t), Err(Error::NodalSpin(_))));
    }

    #[test]
    fn isolated_node_is_interpolated() {
        let z = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0)];
        let p = unwrap_phase(&z).unwrap();
        assert!((p[1] - PI / 4.0).abs() < 1e-15);
        let z = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        assert!(unwrap_phase(&z).is_err());
    }

    fn point_with(w: Option<i64>, nw: f64) -> PhasePoint {
        let basis = b();
        let ss = SteadyState {
            spinor: SpinorField::spiral(&basis),
            cavity: CavityState::zero(),
            mu: 0.0,
            mu_imag: 0.0,
            residual: 0.0,
            iterations: 1,
            seed: 0,
            converged: true,
        };
        let mut p = order_parameters(&ss, &basis);
        p.winding = w;
        p.nw_dn = C64::new(nw, 0.0);
        p
    }

    #[test]
    fn classification_rule() {
        assert_eq!(classify_phase(&point_with(Some(1), 1e-12), TOL_DW, None), PhaseLabel::PwSs);
        assert_eq!(classify_phase(&point_with(Some(1), 0.1), TOL_DW, None), PhaseLabel::DwSs);
        assert_eq!(classify_phase(&point_with(Some(0), 0.1), TOL_DW, None), PhaseLabel::DwSw);
        let mut p = point_with(Some(0), 0.1);
        p.converged = false;
        assert_eq!(classify_phase(&p, TOL_DW, None), PhaseLabel::Unconverged);
        let unstable = Stability { max_im: 0.5, mode_index: 3, tol_im: 0.1 };
        assert_eq!(classify_phase(&point_with(Some(1), 0.0), TOL_DW, Some(&unstable)), PhaseLabel::Unstable);
    }

    #[test]
    fn spiral_order_parameters() {
        let p = point_with(Some(1), 0.0);
        assert!(p.s_pm.0.norm() < 1e-15 && p.s_pm.1.norm() < 1e-15);
        assert!((p.sw[1].norm() - 0.5).abs() < 1e-15);
        assert!((p.momentum(Spin::Dn, 1).norm() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn label_strings_round_trip() {
        for l in [PhaseLabel::DwSw, PhaseLabel::PwSs, PhaseLabel::DwSs, PhaseLabel::Unstable, PhaseLabel::Unconverged] {
            assert_eq!(l.as_str().parse::<PhaseLabel>().unwrap(), l);
        }
    }

    #[test]
    fn soc_limits() {
        let p = ModelParams::symmetric(-20.0, 30.0);
        let qs: Vec<f64> = (-300..=300).map(|i| i as f64 / 100.0).collect();
        // no Raman: two parabolas with minima at ±1
        let d = soc_dispersion(&CavityState::zero(), &p, &qs);
        assert_eq!(d.minima, vec![-1.0, 1.0]);
        // strong Raman: single minimum at 0
        let one = C64::new(2.0, 0.0);
        let d = soc_dispersion(&CavityState { alpha_p: one, beta_m: one, ..Default::default() }, &p, &qs);
        assert_eq!(d.minima, vec![0.0]);
        assert_eq!(d.argmin, 0.0);
    }

    #[test]
    fn soc_intermediate_matches_dense_scan() {
        // |Ω0R α₊*β₋| = 1.2 < 2: minima at ±sqrt(1 − (Ω/2)²) = ±0.8
        let p = ModelParams::symmetric(-20.0, 30.0);
        let c = CavityState {
            alpha_p: C64::new(1.2f64.sqrt(), 0.0),
            beta_m: C64::new(1.2f64.sqrt(), 0.0),
            ..Default::default()
        };
        let qs: Vec<f64> = (-20000..=20000).map(|i| i as f64 / 10000.0).collect();
        let d = soc_dispersion(&c, &p, &qs);
        assert_eq!(d.minima.len(), 2);
        assert!((d.minima[1] - 0.8).abs() < 2e-4 && (d.minima[0] + 0.8).abs() < 2e-4);
        // brute-force eigenvalues of the 2×2 matrix at a few momenta
        for &q in &[-1.3, 0.1, 0.77] {
            let i = qs.iter().position(|x| (x - q).abs() < 1e-9).unwrap();
            let a = (q + 1.0).powi(2) - 1.2;
            let dd = (q - 1.0).powi(2) - 1.2;
            let tr = a + dd;
            let det = a * dd - 1.44;
            let lo = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
            assert!((d.lower[i] - lo).abs() < 1e-12);
        }
    }
}
