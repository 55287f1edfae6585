//! Temperature and tilt sweeps shared by the command-line presets and the
//! test suites. Sweep points run in parallel and come back in input order.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    drift_velocity, fit_esaki_tsu, fit_power_law_windows, msd, AnalysisError, FitResult,
    PowerLawPair,
};
use crate::coupling::{polaronic_shift, CouplingError};
use crate::gme::{solve_gme, GmeError, KernelSpec, Lattice, MemoryKernel, Trajectory};
use crate::model::{
    derive_scales, energy_to_nanokelvin, temperature_from_ep_units, validity_alpha, DerivedScales,
    ModelError, ReducedModel, SystemParams, Validity,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Gme(#[from] GmeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("drift time {t_d} hbar/J lies beyond the run length {t_final} hbar/J")]
    DriftTimeBeyondRun { t_d: f64, t_final: f64 },
}

/// Time stepping and lattice size for transport runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    /// Step in `hbar/J`; also the kernel spacing.
    pub dt: f64,
    /// Run length in `hbar/J`.
    pub t_final: f64,
    /// Odd number of lattice sites.
    pub sites: usize,
    /// Relative `E_p` tolerance of the phonon grid.
    pub grid_tol: f64,
    pub check_convergence: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let k = KernelSpec::default();
        Self {
            dt: k.dt,
            t_final: 10.0,
            sites: 121,
            grid_tol: k.grid_tol,
            check_convergence: true,
        }
    }
}

impl SolverSettings {
    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec {
            dt: self.dt,
            t_max: self.t_final,
            grid_tol: self.grid_tol,
            check_convergence: self.check_convergence,
        }
    }
}

/// A physical system reduced to natural units, with its polaronic shift.
#[derive(Debug, Clone, Serialize)]
pub struct Transport {
    pub params: SystemParams,
    pub scales: DerivedScales,
    pub model: ReducedModel,
    pub validity: Validity,
    /// `E_p` in `g n0`.
    pub polaronic_shift: f64,
}

impl Transport {
    pub fn new(params: &SystemParams) -> Result<Self, ExperimentError> {
        let scales = derive_scales(params)?;
        let model = ReducedModel::new(params, &scales);
        let validity = validity_alpha(params, &scales);
        let polaronic_shift = polaronic_shift(&model)?;
        Ok(Self {
            params: params.clone(),
            scales,
            model,
            validity,
            polaronic_shift,
        })
    }

    pub fn polaronic_shift_nanokelvin(&self) -> f64 {
        energy_to_nanokelvin(self.polaronic_shift, &self.scales)
    }

    /// Temperature in `g n0` from one in units of `E_p`.
    pub fn temperature(&self, t_over_ep: f64) -> f64 {
        temperature_from_ep_units(t_over_ep, self.polaronic_shift)
    }

    pub fn kernel(
        &self,
        t_over_ep: f64,
        tilt: f64,
        settings: &SolverSettings,
    ) -> Result<MemoryKernel, GmeError> {
        MemoryKernel::build(
            &self.model,
            self.temperature(t_over_ep),
            tilt,
            &settings.kernel_spec(),
        )
    }
}

/// Per-run numbers worth keeping next to the figures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub temperature_over_ep: f64,
    pub tilt: f64,
    pub grid_nodes: usize,
    pub phi_convergence: Option<f64>,
    pub kernel_decay_time: Option<f64>,
    pub hopping_exponent: f64,
    pub kernel_fingerprint: u64,
    pub normalization_error: f64,
    pub boundary_occupation: f64,
}

impl RunDiagnostics {
    fn new(t_over_ep: f64, kernel: &MemoryKernel, trajectory: &Trajectory) -> Self {
        Self {
            temperature_over_ep: t_over_ep,
            tilt: kernel.tilt,
            grid_nodes: kernel.grid_nodes,
            phi_convergence: kernel.phi_convergence,
            kernel_decay_time: kernel.decay_time,
            hopping_exponent: kernel.hopping_exponent,
            kernel_fingerprint: kernel.fingerprint(),
            normalization_error: trajectory.normalization_error,
            boundary_occupation: trajectory.boundary_occupation,
        }
    }
}

/// One GME run with the kernel that drove it.
#[derive(Debug, Clone)]
pub struct Run {
    pub temperature_over_ep: f64,
    pub kernel: MemoryKernel,
    pub trajectory: Trajectory,
    pub diagnostics: RunDiagnostics,
}

fn solve(
    kernel: &MemoryKernel,
    t_over_ep: f64,
    settings: &SolverSettings,
) -> Result<(Trajectory, RunDiagnostics), GmeError> {
    let trajectory = solve_gme(
        kernel,
        Lattice::new(settings.sites)?,
        settings.t_final,
        settings.dt,
    )?;
    let diagnostics = RunDiagnostics::new(t_over_ep, kernel, &trajectory);
    Ok((trajectory, diagnostics))
}

/// Full trajectories at each temperature, all at the same tilt.
pub fn temperature_runs(
    transport: &Transport,
    temperatures: &[f64],
    tilt: f64,
    settings: &SolverSettings,
) -> Result<Vec<Run>, ExperimentError> {
    temperatures
        .par_iter()
        .map(|&t| {
            let kernel = transport.kernel(t, tilt, settings)?;
            let (trajectory, diagnostics) = solve(&kernel, t, settings)?;
            Ok(Run {
                temperature_over_ep: t,
                kernel,
                trajectory,
                diagnostics,
            })
        })
        .collect()
}

/// Power-law fits of the mean-square displacement at one temperature.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentPoint {
    pub temperature_over_ep: f64,
    pub fits: PowerLawPair,
    pub diagnostics: RunDiagnostics,
}

/// Untilted runs over a temperature list, keeping only the exponent fits.
pub fn exponent_scan(
    transport: &Transport,
    temperatures: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<ExponentPoint>, ExperimentError> {
    temperatures
        .par_iter()
        .map(|&t| {
            let kernel = transport.kernel(t, 0.0, settings)?;
            let (trajectory, diagnostics) = solve(&kernel, t, settings)?;
            let fits = fit_power_law_windows(&trajectory.times, &msd(&trajectory))?;
            Ok(ExponentPoint {
                temperature_over_ep: t,
                fits,
                diagnostics,
            })
        })
        .collect()
}

/// Drift velocities over a tilt list at one temperature.
#[derive(Debug, Clone)]
pub struct TiltScan {
    pub temperature_over_ep: f64,
    /// `J~/J` at this temperature.
    pub effective_hopping: f64,
    pub tilts: Vec<f64>,
    /// `v_d` in units of `J a / hbar`.
    pub velocities: Vec<f64>,
    pub fit: Result<FitResult, AnalysisError>,
    pub diagnostics: Vec<RunDiagnostics>,
}

/// Builds the bath once, retilts it for every point, and fits the
/// Esaki–Tsu form to the resulting drift velocities.
pub fn tilt_scan(
    transport: &Transport,
    t_over_ep: f64,
    tilts: &[f64],
    t_d: f64,
    settings: &SolverSettings,
) -> Result<TiltScan, ExperimentError> {
    if t_d > settings.t_final * (1.0 + 1e-12) {
        return Err(ExperimentError::DriftTimeBeyondRun {
            t_d,
            t_final: settings.t_final,
        });
    }
    let flat = transport.kernel(t_over_ep, 0.0, settings)?;
    let points: Vec<(f64, RunDiagnostics)> = tilts
        .par_iter()
        .map(|&w| {
            let kernel = flat.with_tilt(w).expect("built kernels carry Phi");
            let (trajectory, diagnostics) = solve(&kernel, t_over_ep, settings)?;
            Ok((drift_velocity(&trajectory, t_d)?, diagnostics))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let (velocities, diagnostics): (Vec<f64>, Vec<RunDiagnostics>) = points.into_iter().unzip();
    let effective_hopping = (-flat.hopping_exponent).exp();
    let fit = fit_esaki_tsu(
        tilts,
        &velocities,
        effective_hopping,
        transport.model.hopping,
    );
    Ok(TiltScan {
        temperature_over_ep: t_over_ep,
        effective_hopping,
        tilts: tilts.to_vec(),
        velocities,
        fit,
        diagnostics,
    })
}

/// `n` evenly spaced values over `[lo, hi]`.
pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SolverSettings {
        SolverSettings {
            dt: 0.01,
            t_final: 2.0,
            sites: 41,
            check_convergence: false,
            ..SolverSettings::default()
        }
    }

    #[test]
    fn transport_scales() {
        let t = Transport::new(&SystemParams::potassium_rubidium()).unwrap();
        assert!((t.polaronic_shift_nanokelvin() - 11.4).abs() < 0.05);
        assert!((t.temperature(5.0) / t.polaronic_shift - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sweeps_keep_input_order() {
        let t = Transport::new(&SystemParams::potassium_rubidium()).unwrap();
        let runs = temperature_runs(&t, &[15.0, 0.0], 0.0, &quick()).unwrap();
        assert_eq!(runs[0].temperature_over_ep, 15.0);
        assert_eq!(runs[1].temperature_over_ep, 0.0);
        assert!(runs[0].kernel.hopping_exponent > runs[1].kernel.hopping_exponent);
        assert!(runs
            .iter()
            .all(|r| r.diagnostics.normalization_error < 1e-8));
    }

    #[test]
    fn tilt_scan_is_downhill_and_validated() {
        let t = Transport::new(&SystemParams::potassium_rubidium()).unwrap();
        let s = quick();
        let scan = tilt_scan(&t, 5.0, &[0.0, 1.0, 4.0], 2.0, &s).unwrap();
        assert!(scan.velocities[0].abs() < 1e-6);
        assert!(scan.velocities[1] > 0.0 && scan.velocities[2] > 0.0);
        assert!(scan.fit.is_err());
        assert!(matches!(
            tilt_scan(&t, 5.0, &[1.0], 3.0, &s),
            Err(ExperimentError::DriftTimeBeyondRun { .. })
        ));
    }

    #[test]
    fn lin_space_endpoints() {
        let v = lin_space(0.0, 15.0, 12);
        assert_eq!(v.len(), 12);
        assert_eq!(v[0], 0.0);
        assert!((v[11] - 15.0).abs() < 1e-12);
    }
}
