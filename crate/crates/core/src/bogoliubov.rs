//! Linear stability of stationary states.
//!
//! Write the mean-field state as `x = (c↓, c↑, α₊, α₋, β₊, β₋)` and its
//! equations of motion, in the frame rotating at the chemical potential, as
//! `i ẋ = F(x)` with
//!
//! ```text
//! F_atoms  = (ℋ_at[a] − μ) ψ
//! F_cavity = M[ψ] a + i η
//! ```
//!
//! A small fluctuation obeys `i δẋ = A δx + B δx*`. With the Bogoliubov ansatz
//! `δx = u e^{−iωt} + v* e^{iω*t}` this becomes `ω f = M_B f` for
//! `f = (u, v)` and `M_B = [[A, B], [−B*, −A*]]`, so the spectrum is closed
//! under `ω → −ω*`.
//!
//! `A` and `B` are assembled from the same table of atom–field energy terms
//! that defines ℋ_at and the cavity matrix (see [`crate::cavity`]). Each term
//! `c · conj(a_p) a_q · ⟨ψσ|e^{isz}|ψσ'⟩` contributes:
//!
//! * atomic rows σ: `c conj(a_p) e^{isz}ψσ'` to `A[·, a_q]` and
//!   `c a_q e^{isz}ψσ'` to `B[·, a_p]`;
//! * cavity row p: `n c ⟨ψσ|e^{isz}|·⟩ a_q` to `A[p, σ']` and
//!   `n c a_q e^{isz}ψσ'` to `B[p, σ]`.
//!
//! [`finite_difference_action`] provides an independent check: it linearises
//! the grid-based nonlinear equations by central differences.

use std::fmt;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::cavity::{self, atomic_moments, build_cavity_matrix, coupling_terms, spin_index, field_profiles};
use crate::linalg;
use crate::meanfield::{apply_atomic_hamiltonian, hamiltonian_matrix};
use crate::model::{CavityState, ModelParams, PlaneWaveBasis, Spin, SpinorField, SteadyState, C64, ZERO};
use crate::{Error, Result};

/// Default threshold on max Im(ω) above which a state is dynamically unstable.
pub const TOL_IM: f64 = 0.1;
/// |Re ω| below which a non-gauge mode counts as gapless.
pub const GOLDSTONE_TOL: f64 = 1e-3;

/// Largest residual accepted as "converged" for assembling `M_B`.
pub const MAX_RESIDUAL: f64 = 1e-6;

/// Layout of the real-space state vector `x` (length `2·dim + 4`).
#[derive(Clone, Copy, Debug)]
struct Layout {
    dim: usize,
}

impl Layout {
    fn n(&self) -> usize {
        2 * self.dim + 4
    }
    fn atom(&self, s: Spin, i: usize) -> usize {
        spin_index(s) * self.dim + i
    }
    fn cav(&self, p: usize) -> usize {
        2 * self.dim + p
    }
}

fn state_vector(ss: &SteadyState) -> Vec<C64> {
    let mut x = ss.spinor.to_vec();
    x.extend(ss.cavity.to_array());
    x
}

/// `(e^{isz} ψ)` in coefficients: entry i holds `ψ_{i−s}`.
fn shifted(c: &[C64], s: i64) -> Vec<C64> {
    let n = c.len() as i64;
    (0..n)
        .map(|i| {
            let k = i - s;
            if (0..n).contains(&k) {
                c[k as usize]
            } else {
                ZERO
            }
        })
        .collect()
}

/// The blocks `A` and `B` of the linearised equations `i δẋ = A δx + B δx*`.
pub fn linearization_blocks(ss: &SteadyState, p: &ModelParams) -> (Mat<C64>, Mat<C64>) {
    let f = &ss.spinor;
    let lay = Layout { dim: f.dim() };
    let n = lay.n();
    let a0 = ss.cavity.to_array();
    let nat = p.atom_number;
    let mut a = Mat::<C64>::zeros(n, n);
    let mut b = Mat::<C64>::zeros(n, n);

    let h0 = hamiltonian_matrix(&cavity::harmonics(&ss.cavity, p), p, f.cutoff());
    for r in 0..2 * lay.dim {
        for c in 0..2 * lay.dim {
            a[(r, c)] = h0[(r, c)];
        }
        a[(r, r)] -= ss.mu;
    }
    for t in coupling_terms(p) {
        let v = shifted(f.coeffs(t.ket), t.s);
        // atomic rows
        for (i, vi) in v.iter().enumerate() {
            let r = lay.atom(t.bra, i);
            a[(r, lay.cav(t.q))] += t.coef * a0[t.p].conj() * vi;
            b[(r, lay.cav(t.p))] += t.coef * a0[t.q] * vi;
        }
        // cavity rows: ⟨ψσ|e^{isz}|δψσ'⟩ = Σ_m conj(ψσ_{m+s}) δψσ'_m
        let bra_shift = shifted(f.coeffs(t.bra), -t.s);
        let r = lay.cav(t.p);
        for m in 0..lay.dim {
            a[(r, lay.atom(t.ket, m))] += t.coef * nat * a0[t.q] * bra_shift[m].conj();
            b[(r, lay.atom(t.bra, m))] += t.coef * nat * a0[t.q] * v[m];
        }
    }
    let mc = cavity::cavity_matrix_from_energy(f, p);
    for i in 0..4 {
        for j in 0..4 {
            a[(lay.cav(i), lay.cav(j))] = mc[i][j];
        }
    }
    (a, b)
}

/// Assemble `M_B = [[A, B], [−B*, −A*]]` around a converged steady state.
pub fn build_bogoliubov_matrix(ss: &SteadyState, p: &ModelParams, basis: &PlaneWaveBasis) -> Result<Mat<C64>> {
    basis.check_coeffs(&ss.spinor.c_dn)?;
    if !ss.converged || !(ss.residual <= MAX_RESIDUAL) {
        return Err(Error::NotConverged(ss.residual));
    }
    let (a, b) = linearization_blocks(ss, p);
    let n = a.nrows();
    Ok(Mat::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
        (true, true) => a[(r, c)],
        (true, false) => b[(r, c - n)],
        (false, true) => -b[(r - n, c)].conj(),
        (false, false) => -a[(r - n, c - n)].conj(),
    }))
}

/// Nonlinear right-hand side `F(x)` of `i ẋ = F(x)` evaluated through the
/// grid route (pointwise potentials, quadrature moments, the displayed cavity
/// matrix).
fn nonlinear_rhs(x: &[C64], mu: f64, p: &ModelParams, basis: &PlaneWaveBasis) -> Result<Vec<C64>> {
    let dim = basis.dim();
    let field = SpinorField::from_vec(&x[..2 * dim]);
    let cav = CavityState::from_array([x[2 * dim], x[2 * dim + 1], x[2 * dim + 2], x[2 * dim + 3]]);
    let prof = field_profiles(&cav, p, basis);
    let h = apply_atomic_hamiltonian(&field, &prof, p, basis)?;
    let mut out: Vec<C64> = h.to_vec().iter().zip(field.to_vec()).map(|(hv, v)| hv - v * mu).collect();
    let m = build_cavity_matrix(&atomic_moments(&field, basis)?, p);
    let a = cav.to_array();
    let eta = p.pump();
    for i in 0..4 {
        out.push((0..4).map(|j| m[i][j] * a[j]).sum::<C64>() + C64::i() * eta[i]);
    }
    Ok(out)
}

/// Central-difference directional derivative `J(d) = dF(x0 + εd)/dε`, which
/// equals `A d + B d*`.
fn fd_jacobian(ss: &SteadyState, p: &ModelParams, basis: &PlaneWaveBasis, d: &[C64], eps: f64) -> Result<Vec<C64>> {
    let x0 = state_vector(ss);
    let xp: Vec<C64> = x0.iter().zip(d).map(|(x, y)| x + y * eps).collect();
    let xm: Vec<C64> = x0.iter().zip(d).map(|(x, y)| x - y * eps).collect();
    let fp = nonlinear_rhs(&xp, ss.mu, p, basis)?;
    let fm = nonlinear_rhs(&xm, ss.mu, p, basis)?;
    Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect())
}

/// `M_B f` computed without `M_B`: the real-linear finite-difference Jacobian
/// `J` of the nonlinear equations gives `A u = [J(u) − iJ(iu)]/2` and
/// `B v = [J(v*) + iJ(iv*)]/2`; the lower half follows from the conjugate
/// equations.
pub fn finite_difference_action(
    ss: &SteadyState,
    p: &ModelParams,
    basis: &PlaneWaveBasis,
    f: &[C64],
    eps: f64,
) -> Result<Vec<C64>> {
    let n = f.len() / 2;
    let (u, v) = f.split_at(n);
    let i = C64::i();
    let times = |x: &[C64], s: C64| -> Vec<C64> { x.iter().map(|c| c * s).collect() };
    let conj = |x: &[C64]| -> Vec<C64> { x.iter().map(|c| c.conj()).collect() };
    let jac = |d: &[C64]| fd_jacobian(ss, p, basis, d, eps);
    let half = |x: Vec<C64>, y: Vec<C64>, s: C64| -> Vec<C64> {
        x.iter().zip(&y).map(|(a, b)| (a + b * s) / 2.0).collect()
    };
    // A u, B v, A v*, B u* (the last two give the conjugated lower rows)
    let au = half(jac(u)?, jac(&times(u, i))?, -i);
    let bv = half(jac(&conj(v))?, jac(&times(&conj(v), i))?, i);
    let avc = half(jac(&conj(v))?, jac(&times(&conj(v), i))?, -i);
    let buc = half(jac(u)?, jac(&times(u, i))?, i);
    // B u* = [J(u) + iJ(iu)]/2 and −B* u − A* v = −conj(B u* + A v*)
    let mut out: Vec<C64> = au.iter().zip(&bv).map(|(a, b)| a + b).collect();
    out.extend(buc.iter().zip(&avc).map(|(a, b)| -(a + b).conj()));
    Ok(out)
}

/// Split of a Bogoliubov eigenvector into named parts; `(+)` parts are `u`,
/// `(−)` parts are `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct FluctuationVector {
    pub dpsi_dn_p: Vec<C64>,
    pub dpsi_dn_m: Vec<C64>,
    pub dpsi_up_p: Vec<C64>,
    pub dpsi_up_m: Vec<C64>,
    pub dalpha_p_pm: (C64, C64),
    pub dalpha_m_pm: (C64, C64),
    pub dbeta_p_pm: (C64, C64),
    pub dbeta_m_pm: (C64, C64),
}

impl FluctuationVector {
    pub fn from_flat(f: &[C64], dim: usize) -> Self {
        let n = 2 * dim + 4;
        let (u, v) = f.split_at(n);
        let c = 2 * dim;
        FluctuationVector {
            dpsi_dn_p: u[..dim].to_vec(),
            dpsi_up_p: u[dim..c].to_vec(),
            dpsi_dn_m: v[..dim].to_vec(),
            dpsi_up_m: v[dim..c].to_vec(),
            dalpha_p_pm: (u[c], v[c]),
            dalpha_m_pm: (u[c + 1], v[c + 1]),
            dbeta_p_pm: (u[c + 2], v[c + 2]),
            dbeta_m_pm: (u[c + 3], v[c + 3]),
        }
    }

    pub fn to_flat(&self) -> Vec<C64> {
        let mut out = Vec::new();
        out.extend(&self.dpsi_dn_p);
        out.extend(&self.dpsi_up_p);
        out.extend([self.dalpha_p_pm.0, self.dalpha_m_pm.0, self.dbeta_p_pm.0, self.dbeta_m_pm.0]);
        out.extend(&self.dpsi_dn_m);
        out.extend(&self.dpsi_up_m);
        out.extend([self.dalpha_p_pm.1, self.dalpha_m_pm.1, self.dbeta_p_pm.1, self.dbeta_m_pm.1]);
        out
    }

    pub fn dim(&self) -> usize {
        4 * self.dpsi_dn_p.len() + 8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Even,
    Odd,
    Photon,
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sector::Even => "even",
            Sector::Odd => "odd",
            Sector::Photon => "photon",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub omega: C64,
    pub vector: FluctuationVector,
    pub sector: Sector,
    pub photon_weight: f64,
    /// |⟨gauge|f⟩| / (‖gauge‖ ‖f‖)
    pub gauge_overlap: f64,
    pub gauge: bool,
    pub goldstone: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationSpectrum {
    /// All modes, sorted by (round(Re ω, 6), Im ω).
    pub modes: Vec<Mode>,
}

impl ExcitationSpectrum {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.modes.iter().map(|m| m.omega).collect()
    }

    /// Modes in the `Re ω ≥ −tol` half of the spectrum.
    pub fn half(&self, tol: f64) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(move |m| m.omega.re >= -tol)
    }

    /// The `k` lowest non-gauge branches with `Re ω ≥ 0` (photon-dominated
    /// modes excluded).
    pub fn lowest_branches(&self, k: usize) -> Vec<&Mode> {
        self.half(1e-6)
            .filter(|m| !m.gauge && m.sector != Sector::Photon)
            .take(k)
            .collect()
    }

    pub fn goldstone_count(&self) -> usize {
        self.half(1e-6).filter(|m| m.goldstone).count()
    }

    /// Lowest `Re ω` among atomic modes that are neither gauge nor Goldstone.
    pub fn gap(&self) -> f64 {
        self.half(1e-6)
            .filter(|m| !m.gauge && !m.goldstone && m.sector != Sector::Photon)
            .map(|m| m.omega.re)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_im(&self) -> (f64, usize) {
        self.modes
            .iter()
            .enumerate()
            .map(|(i, m)| (m.omega.im, i))
            .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
    }
}

fn sort_key(w: C64) -> (f64, f64) {
    ((w.re * 1e6).round() / 1e6, w.im)
}

/// Gauge direction `(ψ0, 0, −ψ0*, 0)` in the doubled representation.
pub fn gauge_mode(ss: &SteadyState) -> Vec<C64> {
    let psi = ss.spinor.to_vec();
    let mut g: Vec<C64> = psi.clone();
    g.extend([ZERO; 4]);
    g.extend(psi.iter().map(|c| -c.conj()));
    g.extend([ZERO; 4]);
    g
}

/// Generator of the screw transformation, `(G, G*)` with
/// `G = (i(j−1)c↓_j, i(j+1)c↑_j, 0, 2iα₋, −2iβ₊, 0)`.
pub fn screw_generator(ss: &SteadyState) -> Vec<C64> {
    let f = &ss.spinor;
    let j0 = f.cutoff() as i64;
    let i = C64::i();
    let mut g: Vec<C64> = Vec::new();
    g.extend(f.c_dn.iter().enumerate().map(|(k, c)| i * (k as i64 - j0 - 1) as f64 * c));
    g.extend(f.c_up.iter().enumerate().map(|(k, c)| i * (k as i64 - j0 + 1) as f64 * c));
    let cv = ss.cavity;
    g.extend([ZERO, i * 2.0 * cv.alpha_m, -i * 2.0 * cv.beta_p, ZERO]);
    let conj: Vec<C64> = g.iter().map(|c| c.conj()).collect();
    g.extend(conj);
    g
}

/// Full non-Hermitian eigendecomposition of `M_B`, with modes labelled by
/// parity sector, photon weight, gauge overlap and Goldstone flag.
pub fn excitation_spectrum(mb: &Mat<C64>, ss: &SteadyState) -> Result<ExcitationSpectrum> {
    let (vals, vecs) = linalg::general_eigen(mb)?;
    if vals.iter().any(|w| !(w.re.is_finite() && w.im.is_finite())) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let n2 = mb.nrows();
    let n = n2 / 2;
    let dim = (n - 4) / 2;
    let j0 = (dim as i64 - 1) / 2;
    let g = gauge_mode(ss);
    let gn = linalg::norm(&g);
    let mut modes: Vec<Mode> = (0..n2)
        .map(|k| {
            let f: Vec<C64> = (0..n2).map(|r| vecs[(r, k)]).collect();
            let fn_ = linalg::norm(&f);
            let mut even = 0.0;
            let mut odd = 0.0;
            let mut photon = 0.0;
            for (r, c) in f.iter().enumerate() {
                let rr = r % n;
                let w = c.norm_sqr();
                if rr >= 2 * dim {
                    photon += w;
                } else if ((rr % dim) as i64 - j0).rem_euclid(2) == 0 {
                    even += w;
                } else {
                    odd += w;
                }
            }
            let total = even + odd + photon;
            let photon_weight = photon / total;
            let sector = if photon_weight > 0.5 {
                Sector::Photon
            } else if even >= odd {
                Sector::Even
            } else {
                Sector::Odd
            };
            let ov: C64 = g.iter().zip(&f).map(|(a, b)| a.conj() * b).sum();
            let gauge_overlap = if gn > 0.0 { ov.norm() / (gn * fn_) } else { 0.0 };
            Mode {
                omega: vals[k],
                vector: FluctuationVector::from_flat(&f.iter().map(|c| c / fn_).collect::<Vec<_>>(), dim),
                sector,
                photon_weight,
                gauge_overlap,
                gauge: false,
                goldstone: false,
            }
        })
        .collect();
    modes.sort_by(|a, b| {
        let (ka, kb) = (sort_key(a.omega), sort_key(b.omega));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    });
    label_zero_modes(&mut modes);
    Ok(ExcitationSpectrum { modes })
}

/// Mark the gauge mode(s) and Goldstone modes. A mode is gauge if its overlap
/// with the gauge direction exceeds 0.99 and `|ω| ≤ GOLDSTONE_TOL`. Other
/// atomic modes with `|Re ω| ≤ GOLDSTONE_TOL` and `|Im ω| ≤ TOL_IM` are
/// Goldstone modes.
///
/// The screw zero mode is not an isolated eigenvalue: the generator is an
/// exact null vector of `M_B`, but in the lossy system it sits in a strongly
/// non-normal block and the eigenvector closest to it typically carries a
/// small, purely imaginary ω (slow phase diffusion of the density wave). The
/// real part is the gaplessness criterion.
fn label_zero_modes(modes: &mut [Mode]) {
    for m in modes.iter_mut() {
        m.gauge = m.gauge_overlap > 0.99 && m.omega.norm() <= GOLDSTONE_TOL;
        m.goldstone = !m.gauge
            && m.sector != Sector::Photon
            && m.omega.re.abs() <= GOLDSTONE_TOL
            && m.omega.im.abs() <= TOL_IM;
    }
}

/// Outcome of the stability test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub max_im: f64,
    pub mode_index: usize,
    pub tol_im: f64,
}

impl Stability {
    pub fn is_stable(&self) -> bool {
        self.max_im <= self.tol_im
    }
}

/// Unstable iff some `Im ω > tol_im`. Damped photon modes only contribute
/// negative imaginary parts and never trigger instability.
pub fn stability_check(spec: &ExcitationSpectrum, tol_im: f64) -> Stability {
    let (max_im, mode_index) = spec.max_im();
    Stability { max_im, mode_index, tol_im }
}

/// Convenience: matrix, spectrum and stability in one call.
pub fn analyze(ss: &SteadyState, p: &ModelParams, basis: &PlaneWaveBasis, tol_im: f64) -> Result<(ExcitationSpectrum, Stability)> {
    let mb = build_bogoliubov_matrix(ss, p, basis)?;
    let spec = excitation_spectrum(&mb, ss)?;
    let st = stability_check(&spec, tol_im);
    Ok((spec, st))
}

/// `‖M_B f‖ / ‖f‖`.
pub fn action_norm(mb: &Mat<C64>, f: &[C64]) -> f64 {
    linalg::norm(&linalg::mat_vec(mb, f)) / linalg::norm(f)
}
