//! Mean-field simulator for a two-component (pseudospin-1/2) Bose–Einstein
//! condensate coupled to four lossy ring-cavity modes.
//!
//! The cavity pumps two counter-propagating pairs of modes (a±, b±). After
//! adiabatic elimination of the excited state of a Λ scheme, the atoms feel
//! spin-dependent optical lattices and a cavity-assisted two-photon Raman
//! coupling that transfers ±2ħk momentum. Depending on pump strength η and
//! detuning Δ, the self-consistent steady state is one of three phases:
//!
//! * **DW-SW**: density wave with a spin wave (winding number 0);
//! * **PW-SS**: a single plane wave per component forming a spin spiral
//!   (winding 1, no density modulation);
//! * **DW-SS**: density wave with a spin spiral (winding 1).
//!
//! Module map:
//!
//! | module | purpose |
//! |---|---|
//! | [`model`] | parameters, plane-wave basis, spinor, cavity amplitudes, state files |
//! | [`cavity`] | atomic moments, the 4×4 cavity matrix and its steady state, potential profiles |
//! | [`meanfield`] | the atomic Hamiltonian, imaginary-time flow, the self-consistent solver |
//! | [`observables`] | order parameters, spin texture, winding number, SOC dispersion, phase labels |
//! | [`bogoliubov`] | linearised fluctuation matrix, spectra, stability |
//! | [`dynamics`] | real-time effective and three-level (Λ) integrators |
//! | [`sweep`] | phase-diagram scans with checkpoint/resume and boundary detection |
//! | [`plot`] | deterministic SVG rendering of the CSV outputs |
//! | [`cli`] | the `rcsoc` command line |
//!
//! ```
//! use rcsoc::prelude::*;
//!
//! let basis = PlaneWaveBasis::default();
//! let params = make_symmetric_params(-20.0, 30.0);
//! let report = solve_steady_state(&params, &SolverConfig::default(), &basis, None).unwrap();
//! let point = order_parameters(&report.state, &basis);
//! assert_eq!(point.winding, Some(1));
//! ```

pub mod bogoliubov;
pub mod cavity;
pub mod cli;
pub mod dynamics;
pub(crate) mod linalg;
pub mod meanfield;
pub mod model;
pub mod observables;
pub mod plot;
pub mod sweep;

pub mod prelude {
    pub use crate::bogoliubov::{
        build_bogoliubov_matrix, excitation_spectrum, stability_check, ExcitationSpectrum,
        Stability,
    };
    pub use crate::cavity::{
        atomic_moments, build_cavity_matrix, cavity_steady_state, field_profiles, AtomicMoments,
        FieldProfiles,
    };
    pub use crate::dynamics::{
        propagate_effective, propagate_lambda, propagate_steady, LambdaParams, PropagationConfig,
        ThreeLevelState, Trajectory,
    };
    pub use crate::meanfield::{solve_steady_state, InnerFlow, SolverConfig};
    pub use crate::model::{
        make_symmetric_params, CavityState, ModelParams, Parity, PlaneWaveBasis, SpinorField,
        SteadyState, C64,
    };
    pub use crate::observables::{
        classify_phase, order_parameters, spin_texture, winding_number, PhaseLabel, PhasePoint,
    };
    pub use crate::sweep::{
        detect_boundaries, resume_sweep, run_sweep, run_sweep_with, Range, RunOptions, SweepResult,
        SweepSpec,
    };
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("singular cavity matrix: {0}")]
    SingularCavity(String),
    #[error("solver diverged: {0}")]
    Diverged(String),
    #[error("state is not converged (residual {0:e})")]
    NotConverged(f64),
    #[error("spin texture has nodes: {0}")]
    NodalSpin(String),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("time step too large: {0}")]
    StepTooLarge(String),
    #[error("checkpoint belongs to a different sweep (hash {found}, expected {expected})")]
    SpecMismatch { expected: String, found: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
