//! Domain types shared by every other module: physical parameters, the
//! periodic plane-wave basis, the two-component spinor and the four cavity
//! amplitudes.
//!
//! Units: ħ = 1, k = 1, ω_rec = ħk²/2m = 1 (so m = 1/2). Lengths are measured
//! in 1/k, the simulation domain is one wavelength L = λ = 2π (two λ/2 unit
//! cells) with periodic boundaries, and the kinetic energy of `e^{ijz}` is `j²`.
//!
//! Orientation: the pumped modes a₊ and b₊ carry `e^{-ikz}` and a₋, b₋ carry
//! `e^{+ikz}`. With this choice the plane-wave–spin-spiral state occupies
//! `c_{↓,+1}` and `c_{↑,-1}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Physical constants in recoil units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub delta_a: f64,
    pub delta_b: f64,
    pub eta_p: f64,
    pub eta_m: f64,
    pub u0_dn: f64,
    pub u0_up: f64,
    /// Raman strength Ω0R (complex allowed).
    pub omega_r: C64,
    pub kappa: f64,
    pub two_photon_detuning: f64,
    /// Number of atoms the unit-normalised spinor stands for in the cavity
    /// equations. The symmetric constructor uses one atom per λ/2 cell, i.e. 2.
    #[serde(default = "default_atom_number")]
    pub atom_number: f64,
}

fn default_atom_number() -> f64 {
    2.0
}

/// Atoms per λ/2 cell times the two cells of the domain.
pub const DEFAULT_ATOM_NUMBER: f64 = 2.0;

impl ModelParams {
    /// Completely symmetric configuration: Δa = Δb = `delta`, η₊ = η₋ = `eta`,
    /// δ = 0, U0↓ = U0↑ = Ω0R = −1, κ = 1.
    pub fn symmetric(delta: f64, eta: f64) -> Self {
        ModelParams {
            delta_a: delta,
            delta_b: delta,
            eta_p: eta,
            eta_m: eta,
            u0_dn: -1.0,
            u0_up: -1.0,
            omega_r: C64::new(-1.0, 0.0),
            kappa: 1.0,
            two_photon_detuning: 0.0,
            atom_number: DEFAULT_ATOM_NUMBER,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.delta_a == self.delta_b
            && self.eta_p == self.eta_m
            && self.two_photon_detuning == 0.0
            && self.omega_r.im == 0.0
            && self.u0_dn == self.u0_up
            && self.u0_up == self.omega_r.re
    }

    /// Every field finite and the atom number positive.
    pub fn validate(&self) -> Result<()> {
        let reals = [
            self.delta_a,
            self.delta_b,
            self.eta_p,
            self.eta_m,
            self.u0_dn,
            self.u0_up,
            self.omega_r.re,
            self.omega_r.im,
            self.kappa,
            self.two_photon_detuning,
            self.atom_number,
        ];
        if reals.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidParams(format!("kappa = {} < 0", self.kappa)));
        }
        if self.atom_number <= 0.0 {
            return Err(Error::InvalidParams("atom_number must be positive".into()));
        }
        Ok(())
    }

    /// Stricter check for steady-state solves, which need an invertible
    /// cavity matrix.
    pub fn validate_steady(&self) -> Result<()> {
        self.validate()?;
        if self.kappa <= 0.0 {
            return Err(Error::InvalidParams(
                "steady states need kappa > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn pump(&self) -> [C64; 4] {
        [C64::new(self.eta_p, 0.0), ZERO, ZERO, C64::new(self.eta_m, 0.0)]
    }
}

pub fn make_symmetric_params(delta: f64, eta: f64) -> ModelParams {
    ModelParams::symmetric(delta, eta)
}

/// Component label of the pseudospin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Spin {
    Dn,
    Up,
}

/// Momentum parity of a field (all weight on even or all on odd `j`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(j: i64) -> Parity {
        if j.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        })
    }
}

/// Periodic plane-wave basis `e^{ijz}/√L`, `|j| ≤ J`, together with the
/// uniform real-space grid used for pointwise products.
#[derive(Clone)]
pub struct PlaneWaveBasis {
    cutoff: usize,
    n_grid: usize,
    domain_length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PlaneWaveBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlaneWaveBasis")
            .field("cutoff", &self.cutoff)
            .field("n_grid", &self.n_grid)
            .field("domain_length", &self.domain_length)
            .finish()
    }
}

impl PartialEq for PlaneWaveBasis {
    fn eq(&self, other: &Self) -> bool {
        self.cutoff == other.cutoff && self.n_grid == other.n_grid
    }
}

impl Default for PlaneWaveBasis {
    fn default() -> Self {
        PlaneWaveBasis::new(12, 128).expect("default basis is valid")
    }
}

impl PlaneWaveBasis {
    pub fn new(cutoff: usize, n_grid: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidBasis("cutoff J must be at least 1".into()));
        }
        if n_grid < 4 * cutoff + 2 {
            return Err(Error::InvalidBasis(format!(
                "n_grid = {n_grid} < 4J+2 = {}",
                4 * cutoff + 2
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(PlaneWaveBasis {
            cutoff,
            n_grid,
            domain_length: 2.0 * PI,
            fwd: planner.plan_fft_forward(n_grid),
            inv: planner.plan_fft_inverse(n_grid),
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    /// Number of plane waves per component, 2J+1.
    pub fn dim(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn momentum(&self, idx: usize) -> i64 {
        idx as i64 - self.cutoff as i64
    }

    pub fn index(&self, j: i64) -> Option<usize> {
        let k = j + self.cutoff as i64;
        (k >= 0 && (k as usize) < self.dim()).then_some(k as usize)
    }

    pub fn momenta(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.dim()).map(|i| self.momentum(i))
    }

    pub fn dz(&self) -> f64 {
        self.domain_length / self.n_grid as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.n_grid).map(|m| m as f64 * self.dz()).collect()
    }

    /// Coefficients → grid values `ψ(z_m) = Σ_j c_j e^{ijz_m}/√L`.
    pub fn to_grid(&self, coeffs: &[C64]) -> Result<Vec<C64>> {
        self.check_coeffs(coeffs)?;
        let n = self.n_grid;
        let mut buf = vec![ZERO; n];
        for (i, c) in coeffs.iter().enumerate() {
            let j = self.momentum(i);
            buf[j.rem_euclid(n as i64) as usize] = *c;
        }
        self.inv.process(&mut buf);
        let s = 1.0 / self.domain_length.sqrt();
        buf.iter_mut().for_each(|x| *x *= s);
        Ok(buf)
    }

    /// Grid values → coefficients, truncated to `|j| ≤ J`.
    pub fn to_coeffs(&self, values: &[C64]) -> Result<Vec<C64>> {
        if values.len() != self.n_grid {
            return Err(Error::DimensionMismatch {
                expected: self.n_grid,
                found: values.len(),
            });
        }
        let n = self.n_grid;
        let mut buf = values.to_vec();
        self.fwd.process(&mut buf);
        let s = self.domain_length.sqrt() / n as f64;
        Ok((0..self.dim())
            .map(|i| buf[self.momentum(i).rem_euclid(n as i64) as usize] * s)
            .collect())
    }

    /// Grid quadrature `∫ f dz` of sampled values.
    pub fn integrate(&self, values: &[C64]) -> C64 {
        values.iter().sum::<C64>() * self.dz()
    }

    pub(crate) fn check_coeffs(&self, coeffs: &[C64]) -> Result<()> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: coeffs.len(),
            });
        }
        Ok(())
    }
}

/// Two-component condensate wave function, stored by its plane-wave
/// coefficients `c_{τ,j}` (so it is band-limited by construction). Grid values
/// are produced on demand with [`SpinorField::to_grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub c_dn: Vec<C64>,
    pub c_up: Vec<C64>,
}

impl SpinorField {
    pub fn zeros(basis: &PlaneWaveBasis) -> Self {
        SpinorField {
            c_dn: vec![ZERO; basis.dim()],
            c_up: vec![ZERO; basis.dim()],
        }
    }

    pub fn from_coeffs(basis: &PlaneWaveBasis, c_dn: Vec<C64>, c_up: Vec<C64>) -> Result<Self> {
        basis.check_coeffs(&c_dn)?;
        basis.check_coeffs(&c_up)?;
        Ok(SpinorField { c_dn, c_up })
    }

    pub fn from_grid(basis: &PlaneWaveBasis, psi_dn: &[C64], psi_up: &[C64]) -> Result<Self> {
        Ok(SpinorField {
            c_dn: basis.to_coeffs(psi_dn)?,
            c_up: basis.to_coeffs(psi_up)?,
        })
    }

    /// Equal-weight uniform spinor `ψ↓ = ψ↑ = 1/√(2L)`.
    pub fn uniform(basis: &PlaneWaveBasis) -> Self {
        let mut f = SpinorField::zeros(basis);
        let i0 = basis.index(0).unwrap();
        f.c_dn[i0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        f.c_up[i0] = f.c_dn[i0];
        f
    }

    /// The plane-wave–spin-spiral archetype `ψ↓ ∝ e^{iz}`, `ψ↑ ∝ e^{-iz}`.
    pub fn spiral(basis: &PlaneWaveBasis) -> Self {
        let mut f = SpinorField::zeros(basis);
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        f.c_dn[basis.index(1).unwrap()] = h;
        f.c_up[basis.index(-1).unwrap()] = h;
        f
    }

    pub fn dim(&self) -> usize {
        self.c_dn.len()
    }

    pub fn cutoff(&self) -> usize {
        (self.dim() - 1) / 2
    }

    pub fn coeffs(&self, s: Spin) -> &[C64] {
        match s {
            Spin::Dn => &self.c_dn,
            Spin::Up => &self.c_up,
        }
    }

    /// `c_{τ,j}`, zero outside the cutoff.
    pub fn coefficient(&self, s: Spin, j: i64) -> C64 {
        let k = j + self.cutoff() as i64;
        if k < 0 || k as usize >= self.dim() {
            ZERO
        } else {
            self.coeffs(s)[k as usize]
        }
    }

    pub fn to_grid(&self, basis: &PlaneWaveBasis) -> Result<(Vec<C64>, Vec<C64>)> {
        Ok((basis.to_grid(&self.c_dn)?, basis.to_grid(&self.c_up)?))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c_dn.iter().chain(&self.c_up).map(|c| c.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Diverged(format!("spinor norm {n}")));
        }
        self.scale(C64::new(1.0 / n, 0.0));
        Ok(())
    }

    pub fn scale(&mut self, s: C64) {
        self.c_dn.iter_mut().chain(self.c_up.iter_mut()).for_each(|c| *c *= s);
    }

    /// Flattened `(c↓, c↑)` coefficient vector.
    pub fn to_vec(&self) -> Vec<C64> {
        self.c_dn.iter().chain(&self.c_up).copied().collect()
    }

    pub fn from_vec(v: &[C64]) -> Self {
        let h = v.len() / 2;
        SpinorField {
            c_dn: v[..h].to_vec(),
            c_up: v[h..].to_vec(),
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &SpinorField) -> C64 {
        self.c_dn
            .iter()
            .zip(&other.c_dn)
            .chain(self.c_up.iter().zip(&other.c_up))
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Fraction of the norm carried by even (or odd) momenta.
    pub fn parity_weight(&self, parity: Parity) -> f64 {
        let j0 = self.cutoff() as i64;
        let w: f64 = self
            .c_dn
            .iter()
            .chain(&self.c_up)
            .enumerate()
            .filter(|(i, _)| Parity::of((*i % self.dim()) as i64 - j0) == parity)
            .map(|(_, c)| c.norm_sqr())
            .sum();
        w / self.norm_sqr()
    }

    /// Dominant momentum parity and its weight.
    pub fn parity(&self) -> (Parity, f64) {
        let e = self.parity_weight(Parity::Even);
        if e >= 0.5 {
            (Parity::Even, e)
        } else {
            (Parity::Odd, 1.0 - e)
        }
    }

    /// Multiply by a global phase so that the largest coefficient (first in
    /// storage order among near-ties) is real and positive.
    pub fn fix_global_phase(&mut self) {
        let v = self.to_vec();
        let max = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return;
        }
        let c = v.iter().find(|c| c.norm() >= max * (1.0 - 1e-9)).unwrap();
        self.scale(c.conj() / c.norm());
    }

    pub fn is_finite(&self) -> bool {
        self.c_dn.iter().chain(&self.c_up).all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Mean-field amplitudes of the four ring-cavity modes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CavityState {
    pub alpha_p: C64,
    pub alpha_m: C64,
    pub beta_p: C64,
    pub beta_m: C64,
}

impl CavityState {
    pub fn zero() -> Self {
        CavityState::default()
    }

    /// Ordered (a₊, a₋, b₊, b₋).
    pub fn to_array(&self) -> [C64; 4] {
        [self.alpha_p, self.alpha_m, self.beta_p, self.beta_m]
    }

    pub fn from_array(a: [C64; 4]) -> Self {
        CavityState {
            alpha_p: a[0],
            alpha_m: a[1],
            beta_p: a[2],
            beta_m: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn distance(&self, other: &CavityState) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn photon_number(&self) -> f64 {
        self.to_array().iter().map(|c| c.norm_sqr()).sum()
    }
}

/// A converged (or best-effort) mean-field stationary state.
#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState {
    pub spinor: SpinorField,
    pub cavity: CavityState,
    pub mu: f64,
    /// Imaginary part of the final Rayleigh quotient (diagnostic).
    pub mu_imag: f64,
    pub residual: f64,
    pub iterations: usize,
    pub seed: u64,
    pub converged: bool,
}

/// Canonical JSON state file. Complex numbers are `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub basis: BasisSpec,
    pub c_dn: Vec<C64>,
    pub c_up: Vec<C64>,
    pub alpha_p: C64,
    pub alpha_m: C64,
    pub beta_p: C64,
    pub beta_m: C64,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    #[serde(rename = "J")]
    pub cutoff: usize,
    pub n_grid: usize,
}

impl StateFile {
    pub fn new(ss: &SteadyState, basis: &PlaneWaveBasis, params: Option<&ModelParams>) -> Self {
        StateFile {
            basis: BasisSpec {
                cutoff: basis.cutoff(),
                n_grid: basis.n_grid(),
            },
            c_dn: ss.spinor.c_dn.clone(),
            c_up: ss.spinor.c_up.clone(),
            alpha_p: ss.cavity.alpha_p,
            alpha_m: ss.cavity.alpha_m,
            beta_p: ss.cavity.beta_p,
            beta_m: ss.cavity.beta_m,
            mu: ss.mu,
            params: params.cloned(),
            residual: Some(ss.residual),
            iterations: Some(ss.iterations),
            seed: Some(ss.seed),
            converged: Some(ss.converged),
        }
    }

    pub fn basis(&self) -> Result<PlaneWaveBasis> {
        PlaneWaveBasis::new(self.basis.cutoff, self.basis.n_grid)
    }

    pub fn steady_state(&self) -> Result<SteadyState> {
        let basis = self.basis()?;
        let spinor = SpinorField::from_coeffs(&basis, self.c_dn.clone(), self.c_up.clone())?;
        Ok(SteadyState {
            spinor,
            cavity: CavityState {
                alpha_p: self.alpha_p,
                alpha_m: self.alpha_m,
                beta_p: self.beta_p,
                beta_m: self.beta_m,
            },
            mu: self.mu,
            mu_imag: 0.0,
            residual: self.residual.unwrap_or(0.0),
            iterations: self.iterations.unwrap_or(0),
            seed: self.seed.unwrap_or(0),
            converged: self.converged.unwrap_or(true),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(basis: &PlaneWaveBasis, j: f64, amp: f64) -> Vec<C64> {
        basis
            .grid()
            .iter()
            .map(|&z| C64::from_polar(amp, j * z))
            .collect()
    }

    #[test]
    fn single_mode_coefficients() {
        let b = PlaneWaveBasis::default();
        let a = 1.0 / (2.0 * b.domain_length()).sqrt();
        let f = SpinorField::from_grid(&b, &plane(&b, 1.0, a), &plane(&b, -1.0, a)).unwrap();
        for j in b.momenta() {
            let (ed, eu) = if j == 1 { (0.5f64.sqrt(), 0.0) } else if j == -1 { (0.0, 0.5f64.sqrt()) } else { (0.0, 0.0) };
            assert!((f.coefficient(Spin::Dn, j) - ed).norm() < 1e-13, "j={j}");
            assert!((f.coefficient(Spin::Up, j) - eu).norm() < 1e-13, "j={j}");
        }
        assert_eq!(f, {
            let mut s = SpinorField::spiral(&b);
            // exact representation up to rounding
            s.c_dn.iter_mut().zip(&f.c_dn).for_each(|(x, y)| if (*x - y).norm() < 1e-13 { *x = *y });
            s.c_up.iter_mut().zip(&f.c_up).for_each(|(x, y)| if (*x - y).norm() < 1e-13 { *x = *y });
            s
        });
    }

    #[test]
    fn uniform_field_occupies_zero_momentum() {
        let b = PlaneWaveBasis::default();
        let a = 1.0 / (2.0 * b.domain_length()).sqrt();
        let f = SpinorField::from_grid(&b, &plane(&b, 0.0, a), &plane(&b, 0.0, a)).unwrap();
        let u = SpinorField::uniform(&b);
        for (x, y) in f.to_vec().iter().zip(u.to_vec()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn grid_quadrature_is_orthonormal() {
        let b = PlaneWaveBasis::new(6, 26).unwrap();
        for j1 in -6..=6 {
            for j2 in -6..=6 {
                let f1: Vec<C64> = plane(&b, j1 as f64, 1.0 / b.domain_length().sqrt());
                let f2: Vec<C64> = plane(&b, j2 as f64, 1.0 / b.domain_length().sqrt());
                let prod: Vec<C64> = f1.iter().zip(&f2).map(|(a, c)| a.conj() * c).collect();
                let ip = b.integrate(&prod);
                let want = if j1 == j2 { 1.0 } else { 0.0 };
                assert!((ip - want).norm() < 1e-12, "{j1} {j2} {ip}");
            }
        }
    }

    #[test]
    fn rejects_small_grid_and_bad_lengths() {
        assert!(PlaneWaveBasis::new(12, 49).is_err());
        assert!(PlaneWaveBasis::new(12, 50).is_ok());
        let b = PlaneWaveBasis::default();
        assert!(matches!(
            b.to_coeffs(&[ZERO; 10]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(SpinorField::from_coeffs(&b, vec![ZERO; 3], vec![ZERO; 25]).is_err());
    }

    #[test]
    fn symmetric_constructor() {
        for (d, e) in [(-20.0, 20.0), (-20.0, 0.0), (-10.0, 50.0)] {
            let p = make_symmetric_params(d, e);
            assert!(p.is_symmetric());
            assert_eq!(p.kappa, 1.0);
            assert_eq!(p.u0_dn, -1.0);
            assert_eq!(p.omega_r, C64::new(-1.0, 0.0));
            assert_eq!((p.delta_a, p.eta_m), (d, e));
            p.validate_steady().unwrap();
        }
        let mut p = make_symmetric_params(-20.0, 20.0);
        p.kappa = 0.0;
        assert!(p.validate().is_ok());
        assert!(p.validate_steady().is_err());
    }

    #[test]
    fn state_file_round_trip() {
        let b = PlaneWaveBasis::default();
        let ss = SteadyState {
            spinor: SpinorField::spiral(&b),
            cavity: CavityState {
                alpha_p: C64::new(0.1, -0.3),
                alpha_m: ZERO,
                beta_p: ZERO,
                beta_m: C64::new(1.0 / 3.0, 2.0f64.sqrt()),
            },
            mu: -4.538_512_345_678_9,
            mu_imag: 0.0,
            residual: 1e-12,
            iterations: 77,
            seed: 5,
            converged: true,
        };
        let sf = StateFile::new(&ss, &b, Some(&make_symmetric_params(-20.0, 30.0)));
        let json = sf.to_json();
        assert!(json.contains("\"J\": 12"));
        assert!(json.contains("\"c_dn\""));
        let back = StateFile::from_json(&json).unwrap();
        assert_eq!(back, sf);
        assert_eq!(back.steady_state().unwrap(), ss);
        // minimal form without optional fields
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let mut m = v.as_object().unwrap().clone();
        for k in ["params", "residual", "iterations", "seed", "converged"] {
            m.remove(k);
        }
        let min = StateFile::from_json(&serde_json::to_string(&m).unwrap()).unwrap();
        assert!(min.steady_state().unwrap().converged);
    }
}
