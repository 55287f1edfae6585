//! Memory kernel, generalised master equation and its Markov limit.

pub mod kernel;
pub mod oracle;
pub mod pauli;
pub mod solver;

use thiserror::Error;

use crate::bogoliubov::BogoliubovError;

pub use kernel::{memory_function, phi_exponent, KernelSpec, MemoryKernel, PhiTerms};
pub use oracle::{
    constant_memory_occupation, single_mode_kernel_oracle, unitary_tight_binding, SingleModeValue,
};
pub use pauli::pauli_rates;
pub use solver::{solve_gme, solve_pauli, Lattice, PauliRates, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GmeError {
    #[error(transparent)]
    Grid(#[from] BogoliubovError),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("duration must be non-negative, got {0}")]
    BadDuration(f64),
    #[error("lattice needs an odd number of at least 3 sites, got {0}")]
    BadLattice(usize),
    #[error("step {dt} is not a whole multiple of the kernel spacing {kernel_dt}")]
    KernelResolution { kernel_dt: f64, dt: f64 },
    #[error("kernel sampled up to {available} hbar/J but the run needs {needed}")]
    KernelTooShort { needed: f64, available: f64 },
    #[error("kernel exponent changes by {change:.3e} (relative) under grid doubling")]
    KernelNotConverged { change: f64 },
    #[error("normalisation drifted by {drift:.3e} at t = {time} hbar/J")]
    Normalization { drift: f64, time: f64 },
    #[error(
        "end-site occupation {occupation:.3e} exceeds 1e-6 on a {sites}-site lattice; \
         enlarge the lattice or shorten the run"
    )]
    Boundary { occupation: f64, sites: usize },
    #[error("rates must be finite and non-negative, got up = {up}, down = {down}")]
    BadRates { up: f64, down: f64 },
    #[error("the zero-temperature kernel without tilt never decays; Markov rates do not exist")]
    NonDecayingKernel,
    #[error(
        "kernel still differs from its asymptote by {residual:.3e} W(0) at the end of the window"
    )]
    KernelNotDecayed { residual: f64 },
}
