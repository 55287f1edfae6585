//! Homogeneous Bogoliubov phonons and the momentum quadrature grid.
//!
//! All quantities are in natural units: momenta in `1/xi`, energies in `g n0`,
//! times in `hbar/g n0`.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::coupling::coupling_density_unchecked;
use crate::model::ReducedModel;
use crate::quadrature::{GaussLegendre, PANEL_ORDER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BogoliubovError {
    #[error("momentum must be non-negative, got {0}")]
    NegativeMomentum(f64),
    #[error("Bogoliubov coefficients diverge at q = 0")]
    ZeroMomentum,
    #[error("Wannier width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("grid tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("temperature must be non-negative, got {0}")]
    NegativeTemperature(f64),
    #[error(
        "phonon grid not converged within {max_nodes} nodes \
         (last relative change in E_p {last_change:.3e}, tolerance {tol:.1e})"
    )]
    NotConverged {
        max_nodes: usize,
        last_change: f64,
        tol: f64,
    },
}

/// Free-particle energy and Bogoliubov frequency `(eps, omega)` at `q`.
pub fn dispersion(q: f64) -> Result<(f64, f64), BogoliubovError> {
    if !(q >= 0.0) {
        return Err(BogoliubovError::NegativeMomentum(q));
    }
    Ok((0.5 * q * q, omega(q)))
}

pub(crate) fn omega(q: f64) -> f64 {
    0.5 * q * (q * q + 4.0).sqrt()
}

fn omega_slope(q: f64) -> f64 {
    (q * q + 2.0) / (q * q + 4.0).sqrt()
}

/// Bogoliubov amplitudes `(u, v)` with `u^2 - v^2 = 1`.
pub fn bog_coefficients(q: f64) -> Result<(f64, f64), BogoliubovError> {
    if q == 0.0 {
        return Err(BogoliubovError::ZeroMomentum);
    }
    let (eps, w) = dispersion(q)?;
    let ratio = (eps + 1.0) / w;
    // ratio - 1 loses all digits at large q; use (eps+1)^2 - w^2 = 1 instead
    let minus = 1.0 / (w * (eps + 1.0 + w));
    let u = ((ratio + 1.0) * 0.5).sqrt();
    let v = -(minus * 0.5).sqrt();
    Ok((u, v))
}

/// Bose occupation `1/(exp(omega/T) - 1)`; zero at `T = 0`.
pub fn thermal_occupation(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = omega / temperature;
    if x > 745.0 {
        0.0
    } else {
        1.0 / x.exp_m1()
    }
}

/// Controls for [`build_phonon_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    /// Relative change in `E_p` allowed under node doubling.
    pub tol: f64,
    pub max_nodes: usize,
    /// Longest time (in `hbar/g n0`) at which `exp(i omega s)` must stay
    /// resolved; zero for static quantities only.
    pub horizon: f64,
    /// Absolute weight of the high-momentum tail below which phases need not
    /// be resolved.
    pub tail_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_nodes: 16384,
            horizon: 0.0,
            tail_tol: 1e-6,
        }
    }
}

impl GridSpec {
    /// Grid settings for kernel sampling up to time `horizon`.
    pub fn for_horizon(horizon: f64) -> Self {
        Self {
            horizon,
            max_nodes: 1 << 18,
            ..Self::default()
        }
    }
}

/// Phase advance allowed across a single Gauss–Legendre panel at level 0.
const PHASE_PER_PANEL: f64 = 4.0 * PI;

/// Number of equal panels spanning `[0, q_max]` at level 0.
const BASE_PANELS: f64 = 32.0;

/// Discretised thermodynamic-limit momentum integral.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhononGrid {
    pub dimension: u32,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub omega: Vec<f64>,
    pub occupation: Vec<f64>,
    /// Coupling density `m(q)` including the radial measure.
    pub coupling: Vec<f64>,
    pub q_max: f64,
    /// Temperature in `g n0`.
    pub temperature: f64,
    pub spec: GridSpec,
    pub level: u32,
    /// Momentum above which phases are no longer resolved.
    pub q_tail: f64,
    /// Relative change of `E_p` between this grid and its refinement.
    pub convergence: f64,
}

impl PhononGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Polaronic level shift `sum w m omega`.
    pub fn polaronic_shift(&self) -> f64 {
        polaronic_shift_sum(&self.weights, &self.coupling, &self.omega)
    }

    /// Rows `(q, epsilon, omega, weight, N, m)` for the grid dump.
    pub fn rows(&self) -> impl Iterator<Item = [f64; 6]> + '_ {
        (0..self.len()).map(move |i| {
            [
                self.nodes[i],
                self.epsilon[i],
                self.omega[i],
                self.weights[i],
                self.occupation[i],
                self.coupling[i],
            ]
        })
    }
}

fn polaronic_shift_sum(weights: &[f64], coupling: &[f64], omega: &[f64]) -> f64 {
    weights
        .iter()
        .zip(coupling)
        .zip(omega)
        .map(|((w, m), o)| w * m * o)
        .sum()
}

/// Cutoff `6 sqrt(2) / sigma`, where the form factor is below `exp(-36)`.
pub fn cutoff(sigma: f64) -> f64 {
    6.0 * 2f64.sqrt() / sigma
}

/// Builds the coarsest grid whose refinement changes `E_p` by less than
/// `spec.tol` (relative).
pub fn build_phonon_grid(
    model: &ReducedModel,
    temperature: f64,
    spec: &GridSpec,
) -> Result<PhononGrid, BogoliubovError> {
    check_inputs(model, temperature, spec)?;
    let rule = GaussLegendre::new(PANEL_ORDER);
    let q_tail = tail_momentum(model, temperature, spec);
    let mut last_change = f64::INFINITY;
    let mut level = 0;
    loop {
        let grid = grid_at_level(&rule, model, temperature, spec, q_tail, level);
        if grid.len() > spec.max_nodes {
            return Err(BogoliubovError::NotConverged {
                max_nodes: spec.max_nodes,
                last_change,
                tol: spec.tol,
            });
        }
        let finer = grid_at_level(&rule, model, temperature, spec, q_tail, level + 1);
        let coarse_ep = grid.polaronic_shift();
        let fine_ep = finer.polaronic_shift();
        last_change = if fine_ep == 0.0 {
            (coarse_ep - fine_ep).abs()
        } else {
            ((coarse_ep - fine_ep) / fine_ep).abs()
        };
        if last_change < spec.tol {
            return Ok(PhononGrid {
                convergence: last_change,
                ..grid
            });
        }
        level += 1;
    }
}

/// The grid at a given refinement level without a convergence test; used to
/// check quantities other than `E_p` under node doubling.
pub fn build_phonon_grid_at_level(
    model: &ReducedModel,
    temperature: f64,
    spec: &GridSpec,
    level: u32,
) -> Result<PhononGrid, BogoliubovError> {
    check_inputs(model, temperature, spec)?;
    let rule = GaussLegendre::new(PANEL_ORDER);
    let q_tail = tail_momentum(model, temperature, spec);
    Ok(grid_at_level(
        &rule,
        model,
        temperature,
        spec,
        q_tail,
        level,
    ))
}

fn check_inputs(
    model: &ReducedModel,
    temperature: f64,
    spec: &GridSpec,
) -> Result<(), BogoliubovError> {
    if !(model.sigma > 0.0) {
        return Err(BogoliubovError::NonPositiveWidth(model.sigma));
    }
    if !(spec.tol > 0.0) || !(spec.tail_tol > 0.0) {
        return Err(BogoliubovError::NonPositiveTolerance(
            spec.tol.min(spec.tail_tol),
        ));
    }
    if !(temperature >= 0.0) {
        return Err(BogoliubovError::NegativeTemperature(temperature));
    }
    Ok(())
}

// Largest q such that int_q^qmax 4 m (2N+1) dq still exceeds tail_tol; phases
// above it contribute at most tail_tol to the kernel exponent.
fn tail_momentum(model: &ReducedModel, temperature: f64, spec: &GridSpec) -> f64 {
    let q_max = cutoff(model.sigma);
    if spec.horizon <= 0.0 {
        return 0.0;
    }
    let rule = GaussLegendre::new(PANEL_ORDER);
    let steps = 4096;
    let h = q_max / steps as f64;
    let mut tail = 0.0;
    for k in (0..steps).rev() {
        let lo = k as f64 * h;
        tail += rule.integrate(lo, lo + h, |q| {
            let n = thermal_occupation(omega(q), temperature);
            4.0 * coupling_density_unchecked(q, model) * (2.0 * n + 1.0)
        });
        if tail > spec.tail_tol {
            return lo + h;
        }
    }
    q_max
}

fn grid_at_level(
    rule: &GaussLegendre,
    model: &ReducedModel,
    temperature: f64,
    spec: &GridSpec,
    q_tail: f64,
    level: u32,
) -> PhononGrid {
    let q_max = cutoff(model.sigma);
    let refine = f64::from(1u32 << level.min(30));
    let base = q_max / BASE_PANELS;
    let width = |q: f64| {
        let mut h = base.min(0.5 + 0.5 * q);
        if spec.horizon > 0.0 && q < q_tail {
            let budget = PHASE_PER_PANEL / spec.horizon;
            let first = h.min(budget / omega_slope(q));
            h = h.min(budget / omega_slope(q + first));
        }
        h / refine
    };
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut lo = 0.0;
    while lo < q_max {
        let mut hi = lo + width(lo);
        // avoid a sliver panel at the end
        if hi > q_max || q_max - hi < 1e-3 * (hi - lo) {
            hi = q_max;
        }
        rule.push_panel(lo, hi, &mut nodes, &mut weights);
        lo = hi;
    }
    let epsilon = nodes.iter().map(|q| 0.5 * q * q).collect();
    let omega_v: Vec<f64> = nodes.iter().map(|&q| omega(q)).collect();
    let occupation = omega_v
        .iter()
        .map(|&w| thermal_occupation(w, temperature))
        .collect();
    let coupling = nodes
        .iter()
        .map(|&q| coupling_density_unchecked(q, model))
        .collect();
    PhononGrid {
        dimension: model.dimension.get(),
        nodes,
        weights,
        epsilon,
        omega: omega_v,
        occupation,
        coupling,
        q_max,
        temperature,
        spec: *spec,
        level,
        q_tail,
        convergence: f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::g_function;
    use crate::model::Dimension;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model(dimension: Dimension, sigma: f64, kappa: f64) -> ReducedModel {
        ReducedModel {
            dimension,
            sigma,
            spacing: 0.6058,
            kappa_over_g: kappa,
            mean_spacing: 0.30675,
            mass_ratio: 87.0 / 41.0,
            hopping: 0.699,
        }
    }

    #[test]
    fn dispersion_values_and_limits() {
        assert_eq!(dispersion(0.0).unwrap(), (0.0, 0.0));
        let (e, w) = dispersion(2.0).unwrap();
        assert_eq!(e, 2.0);
        assert_relative_eq!(w, 2.0 * 2f64.sqrt(), max_relative = 1e-15);
        for q in [1e-4, 1e-3, 0.01, 0.1] {
            let (_, w) = dispersion(q).unwrap();
            assert!((w / q - 1.0).abs() < 3e-3, "phonon limit at {q}");
        }
        for q in [20.0, 50.0, 200.0] {
            let (e, w) = dispersion(q).unwrap();
            assert!((w / e - 1.0).abs() < 0.01, "free-particle limit at {q}");
        }
        assert_eq!(
            dispersion(-1.0),
            Err(BogoliubovError::NegativeMomentum(-1.0))
        );
        let (_, w) = dispersion(1.3).unwrap();
        let (e, _) = dispersion(1.3).unwrap();
        assert_relative_eq!(w, (e * (e + 2.0)).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn bogoliubov_amplitudes() {
        let (u, v) = bog_coefficients(2.0).unwrap();
        assert_relative_eq!(u, 1.015_051_765_128_217_8, max_relative = 1e-14);
        assert_relative_eq!(v, -0.174_155_349_874_503_12, max_relative = 1e-12);
        for q in [1e-3, 0.3, 2.0, 40.0, 1e4] {
            let (u, v) = bog_coefficients(q).unwrap();
            assert!((u * u - v * v - 1.0).abs() < 1e-12, "normalisation at {q}");
        }
        let (u, v) = bog_coefficients(1e4).unwrap();
        assert!((u - 1.0).abs() < 1e-8 && v.abs() < 1e-4);
        assert_eq!(bog_coefficients(0.0), Err(BogoliubovError::ZeroMomentum));
    }

    #[test]
    fn occupation_values() {
        assert_eq!(thermal_occupation(1.0, 0.0), 0.0);
        assert_relative_eq!(
            thermal_occupation(0.7, 0.7),
            0.581_976_706_869_326_4,
            max_relative = 1e-14
        );
        let n = thermal_occupation(30.0, 1.0);
        assert_relative_eq!(n, (-30f64).exp(), max_relative = 1e-12);
        assert_eq!(thermal_occupation(1e6, 1.0), 0.0);
    }

    #[test]
    fn grid_structure_and_uncoupled_case() {
        let m = model(Dimension::One, 0.1, 0.0);
        let grid = build_phonon_grid(&m, 0.5, &GridSpec::default()).unwrap();
        assert!(grid.coupling.iter().all(|&c| c == 0.0));
        assert!(grid.nodes[0] > 0.0);
        assert!(grid.nodes.windows(2).all(|p| p[0] < p[1]));
        assert!(grid.weights.iter().all(|&w| w > 0.0));
        assert!(*grid.nodes.last().unwrap() < grid.q_max);
        assert_relative_eq!(
            grid.weights.iter().sum::<f64>(),
            grid.q_max,
            max_relative = 1e-12
        );
        for i in 0..grid.len() {
            let q = grid.nodes[i];
            assert_eq!(grid.epsilon[i], 0.5 * q * q);
            assert_eq!(grid.omega[i], 0.5 * q * (q * q + 4.0).sqrt());
            assert!(grid.occupation[i] >= 0.0);
        }
        assert!(grid.occupation[0] > 0.0);
        let cold = build_phonon_grid(&m, 0.0, &GridSpec::default()).unwrap();
        assert!(cold.occupation.iter().all(|&n| n == 0.0));
    }

    #[test]
    fn grid_shift_matches_closed_form() {
        let m = model(Dimension::One, 0.1, 2.58);
        let grid = build_phonon_grid(&m, 0.0, &GridSpec::default()).unwrap();
        let closed = m.coupling_energy() * g_function(0.0, 0.1, Dimension::One).unwrap();
        assert!((grid.polaronic_shift() / closed - 1.0).abs() < 1e-8);
        for dim in [Dimension::Two, Dimension::Three] {
            let m = model(dim, 0.3, 1.0);
            let grid = build_phonon_grid(&m, 0.0, &GridSpec::default()).unwrap();
            let closed = m.coupling_energy() * g_function(0.0, 0.3, dim).unwrap();
            assert_relative_eq!(grid.polaronic_shift(), closed, max_relative = 1e-8);
        }
    }

    #[test]
    fn doubling_changes_shift_below_tolerance() {
        let m = model(Dimension::One, 0.1036, 2.58);
        let spec = GridSpec::default();
        let grid = build_phonon_grid(&m, 4.0, &spec).unwrap();
        let finer = build_phonon_grid_at_level(&m, 4.0, &spec, grid.level + 1).unwrap();
        assert!(finer.len() as f64 > 1.9 * grid.len() as f64);
        let change = (grid.polaronic_shift() / finer.polaronic_shift() - 1.0).abs();
        assert!(change < spec.tol);
    }

    #[test]
    fn horizon_resolves_phases() {
        let m = model(Dimension::One, 0.1036, 2.58);
        let spec = GridSpec::for_horizon(20.0);
        let grid = build_phonon_grid(&m, 4.0, &spec).unwrap();
        assert!(grid.q_tail > 5.0 && grid.q_tail < grid.q_max);
        // every panel below q_tail spans at most the phase budget at the horizon
        for panel in grid.nodes.chunks(PANEL_ORDER) {
            let lo = panel[0];
            let hi = panel[PANEL_ORDER - 1];
            if hi < grid.q_tail {
                let phase = (omega(hi) - omega(lo)) * spec.horizon;
                assert!(phase < PHASE_PER_PANEL);
            }
        }
        let err = build_phonon_grid(
            &m,
            4.0,
            &GridSpec {
                max_nodes: 64,
                ..spec
            },
        );
        assert!(matches!(err, Err(BogoliubovError::NotConverged { .. })));
    }

    #[test]
    fn grid_is_reproducible_and_rejects_bad_input() {
        let m = model(Dimension::One, 0.1, 2.58);
        let a = build_phonon_grid(&m, 1.0, &GridSpec::default()).unwrap();
        let b = build_phonon_grid(&m, 1.0, &GridSpec::default()).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.weights, b.weights);
        let bad = model(Dimension::One, 0.0, 1.0);
        assert!(build_phonon_grid(&bad, 1.0, &GridSpec::default()).is_err());
        let tol = GridSpec {
            tol: 0.0,
            ..GridSpec::default()
        };
        assert!(build_phonon_grid(&m, 1.0, &tol).is_err());
    }

    proptest! {
        #[test]
        fn occupation_monotone(w in 0.01f64..50.0, t in 0.01f64..20.0, dt in 0.001f64..5.0, dw in 0.001f64..5.0) {
            prop_assert!(thermal_occupation(w, t + dt) > thermal_occupation(w, t) || thermal_occupation(w, t) == 0.0);
            prop_assert!(thermal_occupation(w + dw, t) <= thermal_occupation(w, t));
        }

        #[test]
        fn normalisation_holds(q in 1e-3f64..1e3) {
            let (u, v) = bog_coefficients(q).unwrap();
            prop_assert!((u * u - v * v - 1.0).abs() < 1e-12);
        }
    }
}
