//! The cavity side of the model: atomic moments, the 4×4 effective cavity
//! matrix, its driven steady state, and the real-space potentials and Raman
//! coupling produced by given mode amplitudes.
//!
//! Mode order everywhere is (a₊, a₋, b₊, b₋). With a₊, b₊ ∝ `e^{-ikz}` and
//! a₋, b₋ ∝ `e^{+ikz}`:
//!
//! ```text
//! U↓(z) = U0↓ (|α₊|² + |α₋|² + e^{2iz} α₊*α₋ + e^{-2iz} α₋*α₊)
//! U↑(z) = U0↑ (|β₊|² + |β₋|² + e^{2iz} β₊*β₋ + e^{-2iz} β₋*β₊)
//! Ω_R(z) = Ω0R (α₊*β₊ + α₋*β₋ + e^{2iz} α₊*β₋ + e^{-2iz} α₋*β₊)
//! ```
//!
//! and the moments are `𝒩τ = ∫e^{2iz}|ψτ|²`, `S₋ = ∫ψ↓*ψ↑`,
//! `𝒮₋^(±) = ∫e^{∓2iz}ψ↓*ψ↑`.

use crate::linalg;
use crate::model::{CavityState, ModelParams, PlaneWaveBasis, Spin, SpinorField, C64, ZERO};
use crate::{Error, Result};

/// Bilinear moments of the spinor that drive the cavity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AtomicMoments {
    pub n_dn: f64,
    pub n_up: f64,
    pub nw_dn: C64,
    pub nw_up: C64,
    pub s_minus: C64,
    /// 𝒮₋^(+) = ∫e^{-2iz}ψ↓*ψ↑
    pub sw_minus_p: C64,
    /// 𝒮₋^(−) = ∫e^{+2iz}ψ↓*ψ↑
    pub sw_minus_m: C64,
}

impl AtomicMoments {
    pub fn s_plus(&self) -> C64 {
        self.s_minus.conj()
    }

    /// 𝒮₊^(+) = (𝒮₋^(−))*
    pub fn sw_plus_p(&self) -> C64 {
        self.sw_minus_m.conj()
    }

    /// 𝒮₊^(−) = (𝒮₋^(+))*
    pub fn sw_plus_m(&self) -> C64 {
        self.sw_minus_p.conj()
    }
}

/// `⟨bra| e^{isz} |ket⟩` from plane-wave coefficients.
pub(crate) fn bilinear(bra: &[C64], ket: &[C64], s: i64) -> C64 {
    let n = bra.len() as i64;
    let mut acc = ZERO;
    for j in 0..n {
        let k = j + s;
        if (0..n).contains(&k) {
            acc += bra[k as usize].conj() * ket[j as usize];
        }
    }
    acc
}

/// Moments from plane-wave coefficients (exact for band-limited fields).
pub(crate) fn moments_from_coeffs(f: &SpinorField) -> AtomicMoments {
    AtomicMoments {
        n_dn: bilinear(&f.c_dn, &f.c_dn, 0).re,
        n_up: bilinear(&f.c_up, &f.c_up, 0).re,
        nw_dn: bilinear(&f.c_dn, &f.c_dn, 2),
        nw_up: bilinear(&f.c_up, &f.c_up, 2),
        s_minus: bilinear(&f.c_dn, &f.c_up, 0),
        sw_minus_p: bilinear(&f.c_dn, &f.c_up, -2),
        sw_minus_m: bilinear(&f.c_dn, &f.c_up, 2),
    }
}

/// Moments by grid quadrature of the weighted bilinears.
pub fn atomic_moments(field: &SpinorField, basis: &PlaneWaveBasis) -> Result<AtomicMoments> {
    let (d, u) = field.to_grid(basis)?;
    let z = basis.grid();
    let quad = |w: &dyn Fn(f64) -> C64, a: &[C64], b: &[C64]| {
        let v: Vec<C64> = (0..z.len()).map(|m| w(z[m]) * a[m].conj() * b[m]).collect();
        basis.integrate(&v)
    };
    let one = |_: f64| C64::new(1.0, 0.0);
    let ep = |x: f64| C64::from_polar(1.0, 2.0 * x);
    let em = |x: f64| C64::from_polar(1.0, -2.0 * x);
    Ok(AtomicMoments {
        n_dn: quad(&one, &d, &d).re,
        n_up: quad(&one, &u, &u).re,
        nw_dn: quad(&ep, &d, &d),
        nw_up: quad(&ep, &u, &u),
        s_minus: quad(&one, &d, &u),
        sw_minus_p: quad(&em, &d, &u),
        sw_minus_m: quad(&ep, &d, &u),
    })
}

/// One term `coef · conj(a_p) a_q · ⟨ψ_bra| e^{isz} |ψ_ket⟩` of the atom–field
/// energy. The same table generates the atomic Hamiltonian, the cavity matrix
/// and the Bogoliubov linearisation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Term {
    pub bra: Spin,
    pub ket: Spin,
    pub p: usize,
    pub q: usize,
    pub s: i64,
    pub coef: C64,
}

pub(crate) fn coupling_terms(params: &ModelParams) -> Vec<Term> {
    use Spin::{Dn, Up};
    let ud = C64::new(params.u0_dn, 0.0);
    let uu = C64::new(params.u0_up, 0.0);
    let om = params.omega_r;
    let t = |bra, ket, p, q, s, coef| Term { bra, ket, p, q, s, coef };
    vec![
        t(Dn, Dn, 0, 0, 0, ud),
        t(Dn, Dn, 1, 1, 0, ud),
        t(Dn, Dn, 0, 1, 2, ud),
        t(Dn, Dn, 1, 0, -2, ud),
        t(Up, Up, 2, 2, 0, uu),
        t(Up, Up, 3, 3, 0, uu),
        t(Up, Up, 2, 3, 2, uu),
        t(Up, Up, 3, 2, -2, uu),
        t(Dn, Up, 0, 2, 0, om),
        t(Dn, Up, 1, 3, 0, om),
        t(Dn, Up, 0, 3, 2, om),
        t(Dn, Up, 1, 2, -2, om),
        t(Up, Dn, 2, 0, 0, om.conj()),
        t(Up, Dn, 3, 1, 0, om.conj()),
        t(Up, Dn, 3, 0, -2, om.conj()),
        t(Up, Dn, 2, 1, 2, om.conj()),
    ]
}

pub(crate) fn spin_index(s: Spin) -> usize {
    match s {
        Spin::Dn => 0,
        Spin::Up => 1,
    }
}

/// Fourier content of the optical fields: `h[bra][ket][(s+2)/2]` is the
/// coefficient of `e^{isz}` (s ∈ {−2, 0, 2}) in block (bra, ket) of the
/// atomic Hamiltonian.
pub(crate) type Harmonics = [[[C64; 3]; 2]; 2];

pub(crate) fn harmonics(c: &CavityState, params: &ModelParams) -> Harmonics {
    let a = c.to_array();
    let mut h = [[[ZERO; 3]; 2]; 2];
    for t in coupling_terms(params) {
        h[spin_index(t.bra)][spin_index(t.ket)][((t.s + 2) / 2) as usize] +=
            t.coef * a[t.p].conj() * a[t.q];
    }
    h
}

/// Real-space potentials and Raman coupling on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldProfiles {
    pub u_dn: Vec<f64>,
    pub u_up: Vec<f64>,
    pub raman: Vec<C64>,
    pub(crate) harmonics: Harmonics,
}

impl FieldProfiles {
    pub fn zero(basis: &PlaneWaveBasis) -> Self {
        field_profiles(&CavityState::zero(), &ModelParams::symmetric(0.0, 0.0), basis)
    }
}

pub fn field_profiles(c: &CavityState, params: &ModelParams, basis: &PlaneWaveBasis) -> FieldProfiles {
    let h = harmonics(c, params);
    let eval = |b: usize, k: usize, z: f64| -> C64 {
        (0..3)
            .map(|i| h[b][k][i] * C64::from_polar(1.0, (2 * i as i64 - 2) as f64 * z))
            .sum()
    };
    let z = basis.grid();
    FieldProfiles {
        u_dn: z.iter().map(|&x| eval(0, 0, x).re).collect(),
        u_up: z.iter().map(|&x| eval(1, 1, x).re).collect(),
        raman: z.iter().map(|&x| eval(0, 1, x)).collect(),
        harmonics: h,
    }
}

/// The effective cavity matrix `M` (rows/cols a₊, a₋, b₊, b₋), such that the
/// mean-field cavity equation reads `i ȧ = M a + i η`.
pub fn build_cavity_matrix(m: &AtomicMoments, p: &ModelParams) -> [[C64; 4]; 4] {
    let n = p.atom_number;
    let ik = C64::new(0.0, p.kappa);
    let dta = p.delta_a + ik - p.u0_dn * n * m.n_dn;
    let dtb = p.delta_b + ik - p.u0_up * n * m.n_up;
    let ud = p.u0_dn * n;
    let uu = p.u0_up * n;
    let om = p.omega_r * n;
    let omc = p.omega_r.conj() * n;
    [
        [-dta, m.nw_dn * ud, om * m.s_minus, om * m.sw_minus_m],
        [m.nw_dn.conj() * ud, -dta, om * m.sw_minus_p, om * m.s_minus],
        [omc * m.s_plus(), omc * m.sw_plus_m(), -dtb, m.nw_up * uu],
        [omc * m.sw_plus_p(), omc * m.s_plus(), m.nw_up.conj() * uu, -dtb],
    ]
}

/// Solve `M a = -i η` for the driven steady state of the cavity.
pub fn cavity_steady_state(m: &AtomicMoments, p: &ModelParams) -> Result<CavityState> {
    if p.kappa <= 0.0 {
        return Err(Error::SingularCavity("kappa must be positive".into()));
    }
    let mat = build_cavity_matrix(m, p);
    let eta = p.pump();
    if eta.iter().all(|e| *e == ZERO) {
        return Ok(CavityState::zero());
    }
    let rhs = eta.map(|e| e * C64::new(0.0, -1.0));
    let a = linalg::solve4(&mat, rhs).ok_or_else(|| Error::SingularCavity(format!("{mat:?}")))?;
    let res = residual(&mat, &a, &eta);
    let scale = linalg::norm(&eta) + 1.0;
    if !(res <= 1e-12 * scale * (1.0 + linalg::norm(&a))) {
        return Err(Error::SingularCavity(format!("residual {res:e} after solve")));
    }
    Ok(CavityState::from_array(a))
}

/// `‖M a + i η‖`.
pub fn residual(mat: &[[C64; 4]; 4], a: &[C64; 4], eta: &[C64; 4]) -> f64 {
    let r: Vec<C64> = (0..4)
        .map(|i| (0..4).map(|j| mat[i][j] * a[j]).sum::<C64>() + C64::i() * eta[i])
        .collect();
    linalg::norm(&r)
}

/// Cavity matrix obtained by differentiating the atom–field energy with
/// respect to the conjugate amplitudes (used to cross-check
/// [`build_cavity_matrix`]).
pub(crate) fn cavity_matrix_from_energy(f: &SpinorField, p: &ModelParams) -> [[C64; 4]; 4] {
    let n = p.atom_number;
    let mut m = [[ZERO; 4]; 4];
    for t in coupling_terms(p) {
        m[t.p][t.q] += t.coef * n * bilinear(f.coeffs(t.bra), f.coeffs(t.ket), t.s);
    }
    let det = [p.delta_a, p.delta_a, p.delta_b, p.delta_b];
    for (i, d) in det.iter().enumerate() {
        m[i][i] -= C64::new(*d, p.kappa);
    }
    m
}
