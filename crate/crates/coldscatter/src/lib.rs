//! Coupled-dipole simulation of collective light scattering in dense, cold
//! atomic ensembles of slowly moving atoms.
//!
//! The library models `N` identical atoms with a `J_g = 0` ground state and a
//! `J_e = 1` excited state (Zeeman sublevels `m = -1, 0, +1`). In the weak
//! excitation limit the single-excitation amplitudes `b_e` obey a linear
//! system of `3N` coupled equations: each amplitude decays at the natural
//! rate, is driven by the local laser field, and exchanges excitation with
//! every other atom through the free-space electromagnetic Green's tensor.
//! Classical ballistic motion of the atoms (with specular reflections off
//! the sample walls) makes the coupling matrix and drive phases explicitly
//! time dependent.
//!
//! Everything is expressed in dimensionless units: lengths in the reduced
//! wavelength `λ̄ = 1/k₀`, times in the excited-state lifetime `1/γ`,
//! frequencies in `γ`.
//!
//! Module map:
//!
//! - [`config`] — unit system, physical parameters, geometry, run plan,
//!   config-file parsing and validation.
//! - [`ensemble`] — position/velocity sampling and ballistic motion with
//!   exact specular reflection folding.
//! - [`coupling`] — dipole-dipole kernel, Zeeman-shifted detunings, drive
//!   vector, assembly of the `3N×3N` non-Hermitian evolution matrix.
//! - [`dynamics`] — adaptive time integration, steady-state solve, and a
//!   matrix-exponential propagator for frozen configurations.
//! - [`observables`] — detected field, slab transmittance, survival
//!   probability, time averages.
//! - [`spectral`] — eigenmode diagnostics: decay rates, frequency shifts,
//!   inverse participation ratios.
//! - [`montecarlo`] — the two ensemble experiments (transmission and
//!   spontaneous decay) with reproducible seeded parallelism.
//! - [`output`] — CSV traces and metadata sidecars.
//! - [`cli`] — command-line front end used by the `coldscatter` binary.
//!
//! The crate ships runnable examples (see `examples/`) demonstrating each
//! major capability, from single-atom checks to the double-averaged
//! transmission experiment.

// Link the BLAS backend used by ndarray / ndarray-linalg.
extern crate blas_src;

pub mod cli;
pub mod config;
pub mod coupling;
pub mod dynamics;
pub mod ensemble;
pub mod linalg;
pub mod montecarlo;
pub mod observables;
pub mod output;
pub mod spectral;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// One message per violated invariant, all collected in a single pass.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    /// Two atoms at (numerically) zero separation. With continuous position
    /// sampling this has probability zero, so it signals a sampling bug
    /// rather than a physical situation; it is never masked.
    #[error("coincident atoms: pair separation {separation:e} below threshold")]
    CoincidentAtoms { separation: f64 },

    /// The linear system for the steady state is singular or too
    /// ill-conditioned to trust.
    #[error("singular or ill-conditioned evolution matrix (rcond = {rcond:e})")]
    IllConditioned { rcond: f64 },

    /// Adaptive step size collapsed; reports the closest pair distance,
    /// which is the usual culprit (a near-coincident pair).
    #[error("integrator step size underflow at t = {t} (closest pair distance {closest_pair:e})")]
    StepSizeUnderflow { t: f64, closest_pair: f64 },

    /// Non-finite state encountered during integration.
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    /// Eigendecomposition failure from the LAPACK backend.
    #[error("eigensolver failure: {0}")]
    Eigen(String),

    /// Requested averaging window is not covered by the trace samples.
    #[error("time window [{t_start}, {t_end}] not covered by trace [{trace_start}, {trace_end}]")]
    WindowNotCovered {
        t_start: f64,
        t_end: f64,
        trace_start: f64,
        trace_end: f64,
    },

    /// Observation point where the far-field detection formula does not apply.
    #[error("observation point ({0}, {1}, {2}) lies inside the atomic box")]
    PointInsideBox(f64, f64, f64),

    /// Refusal to overwrite an existing result set without `--force`.
    #[error("output already exists: {0} (pass --force to overwrite)")]
    OutputExists(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    /// Error from a worker, tagged with the ensemble configuration index.
    #[error("configuration {config_index}: {source}")]
    InConfig {
        config_index: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_config(self, config_index: u64) -> Self {
        Error::InConfig {
            config_index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
