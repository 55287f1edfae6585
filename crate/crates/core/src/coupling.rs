//! Impurity–condensate coupling: form factors, coupling densities, Green's
//! functions, the induced interaction, the polaronic level shift, the
//! effective hopping and the condensate deformation.
//!
//! Lengths are in `xi`, energies in `g n0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::bogoliubov::PhononGrid;
use crate::model::{Dimension, ReducedModel, Validity};
use crate::quadrature::{GaussLegendre, PANEL_ORDER};
use crate::special::{bessel_j0, bessel_k0, erfcx, scaled_exp_integral_e1, spherical_j0};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error("coupling density diverges at q = 0")]
    ZeroMomentum,
    #[error("the {0}D Green's function is singular at r = 0")]
    SingularOrigin(u32),
    #[error("Wannier width must be non-negative, got {0}")]
    NegativeWidth(f64),
    #[error("form factor needs matching q, sigma and r components")]
    ComponentMismatch,
}

/// Form factor `prod_l exp(-q_l^2 sigma_l^2 / 4) exp(i q.r)`; its modulus
/// squared is the Gaussian `exp(-sum q_l^2 sigma_l^2 / 2)`.
pub fn form_factor(q: &[f64], sigma: &[f64], r: &[f64]) -> Result<Complex64, CouplingError> {
    if q.len() != sigma.len() || q.len() != r.len() {
        return Err(CouplingError::ComponentMismatch);
    }
    let mut log_mod = 0.0;
    let mut phase = 0.0;
    for ((qi, si), ri) in q.iter().zip(sigma).zip(r) {
        log_mod -= 0.25 * (qi * si).powi(2);
        phase += qi * ri;
    }
    Ok(Complex64::from_polar(log_mod.exp(), phase))
}

fn radial_prefactor(dimension: Dimension) -> f64 {
    match dimension {
        Dimension::One => 1.0 / PI,
        Dimension::Two => 1.0 / (2.0 * PI),
        Dimension::Three => 1.0 / (2.0 * PI * PI),
    }
}

/// Density `m(q)` of `|M_q|^2` in `|q|`, including the radial measure, such
/// that `int dq m(q) omega(q) = E_p`.
pub fn coupling_density(q: f64, model: &ReducedModel) -> Result<f64, CouplingError> {
    if q == 0.0 {
        return Err(CouplingError::ZeroMomentum);
    }
    Ok(coupling_density_unchecked(q.abs(), model))
}

pub(crate) fn coupling_density_unchecked(q: f64, model: &ReducedModel) -> f64 {
    let d = model.dimension.get() as i32;
    // eps/omega^3 = 4 / (q (q^2+4)^{3/2})
    radial_prefactor(model.dimension) * model.coupling_energy() * 4.0 * q.powi(d - 2)
        / (q * q + 4.0).powf(1.5)
        * (-0.5 * (q * model.sigma).powi(2)).exp()
}

/// Angular average of `cos(q.r)` over directions of `q`.
pub fn lattice_factor(x: f64, dimension: Dimension) -> f64 {
    match dimension {
        Dimension::One => x.cos(),
        Dimension::Two => bessel_j0(x),
        Dimension::Three => spherical_j0(x),
    }
}

// 1 - <cos(q.r)>, kept accurate for small arguments.
pub(crate) fn one_minus_lattice_factor(x: f64, dimension: Dimension) -> f64 {
    if x.abs() < 1e-3 {
        // 1 - <cos> = x^2/(2D) - x^4/(8 D (D+2)) + ...
        let d = dimension.as_f64();
        let x2 = x * x;
        return x2 / (2.0 * d) - x2 * x2 / (8.0 * d * (d + 2.0));
    }
    match dimension {
        Dimension::One => 2.0 * (0.5 * x).sin().powi(2),
        _ => 1.0 - lattice_factor(x, dimension),
    }
}

/// Condensate Green's function at distance `r`.
pub fn green_function(r: f64, dimension: Dimension) -> Result<f64, CouplingError> {
    let r = r.abs();
    match dimension {
        Dimension::One => Ok(0.5 * (-2.0 * r).exp()),
        _ if r == 0.0 => Err(CouplingError::SingularOrigin(dimension.get())),
        Dimension::Two => Ok(bessel_k0(2.0 * r) / PI),
        Dimension::Three => Ok((-2.0 * r).exp() / (2.0 * PI * r)),
    }
}

/// Green's function smeared by a Gaussian of width `sigma`.
pub fn g_function(r: f64, sigma: f64, dimension: Dimension) -> Result<f64, CouplingError> {
    if !(sigma >= 0.0) {
        return Err(CouplingError::NegativeWidth(sigma));
    }
    let r = r.abs();
    if sigma == 0.0 {
        return green_function(r, dimension);
    }
    if r == 0.0 {
        let z = 2f64.sqrt() * sigma;
        return Ok(match dimension {
            Dimension::One => 0.5 * erfcx(z),
            Dimension::Two => scaled_exp_integral_e1(z * z) / (2.0 * PI),
            Dimension::Three => (1.0 / (PI.sqrt() * z) - erfcx(z)) / PI,
        });
    }
    Ok(g_function_quadrature(r, sigma, dimension))
}

/// Fourier–Bessel quadrature of `G(r, sigma)` for `sigma > 0`, valid at any `r`.
pub fn g_function_quadrature(r: f64, sigma: f64, dimension: Dimension) -> f64 {
    assert!(sigma > 0.0, "the quadrature route needs a positive width");
    let r = r.abs();
    let rule = GaussLegendre::new(PANEL_ORDER);
    // exp(-y^2 sigma^2 / 2) < 1e-18 beyond this
    let upper = (2.0 * 42.0f64).sqrt() / sigma;
    let panel = if r > 0.0 { (PI / r).min(1.0) } else { 1.0 };
    let panels = (upper / panel).ceil() as usize;
    let integrand = |y: f64| {
        let base = 2.0 / (y * y + 4.0) * (-0.5 * (y * sigma).powi(2)).exp();
        match dimension {
            Dimension::One => base * (y * r).cos(),
            Dimension::Two => base * y * bessel_j0(y * r),
            Dimension::Three => base * y * y * spherical_j0(y * r),
        }
    };
    radial_prefactor(dimension) * rule.composite(0.0, upper, panels, integrand)
}

/// Induced impurity–impurity interaction `2 (kappa/g)^2 (d/xi)^D G(r, sigma)`.
pub fn interaction_potential(r: f64, model: &ReducedModel) -> Result<f64, CouplingError> {
    Ok(2.0 * model.coupling_energy() * g_function(r, model.sigma, model.dimension)?)
}

/// The same potential summed over the phonon grid.
pub fn interaction_potential_from_grid(grid: &PhononGrid, r: f64, dimension: Dimension) -> f64 {
    (0..grid.len())
        .map(|i| {
            let q = grid.nodes[i];
            grid.weights[i]
                * 2.0
                * grid.coupling[i]
                * grid.omega[i]
                * lattice_factor(q * r, dimension)
        })
        .sum()
}

/// Polaronic level shift `E_p = (kappa/g)^2 (d/xi)^D G(0, sigma)`.
pub fn polaronic_shift(model: &ReducedModel) -> Result<f64, CouplingError> {
    Ok(model.coupling_energy() * g_function(0.0, model.sigma, model.dimension)?)
}

/// Exponent `S` of `J~/J = exp(-S)` at the grid temperature.
pub fn hopping_exponent(grid: &PhononGrid, spacing: f64, dimension: Dimension) -> f64 {
    (0..grid.len())
        .map(|i| {
            grid.weights[i]
                * grid.coupling[i]
                * one_minus_lattice_factor(grid.nodes[i] * spacing, dimension)
                * (2.0 * grid.occupation[i] + 1.0)
        })
        .sum()
}

/// Thermal part `2 sum w m (1 - cos) N` of the hopping exponent.
pub fn thermal_hopping_exponent(grid: &PhononGrid, spacing: f64, dimension: Dimension) -> f64 {
    (0..grid.len())
        .map(|i| {
            2.0 * grid.weights[i]
                * grid.coupling[i]
                * one_minus_lattice_factor(grid.nodes[i] * spacing, dimension)
                * grid.occupation[i]
        })
        .sum()
}

/// Bandwidth suppression `J~/J`.
pub fn effective_hopping(grid: &PhononGrid, spacing: f64, dimension: Dimension) -> f64 {
    (-hopping_exponent(grid, spacing, dimension)).exp()
}

/// An impurity site and its occupation probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub position: [f64; 3],
    pub occupation: f64,
}

/// Condensate deformation `theta / sqrt(n0)` at each point, for Gaussian
/// impurity densities of width `sigma` centred on the given sites.
pub fn deformation_profile(
    model: &ReducedModel,
    sites: &[Site],
    points: &[[f64; 3]],
) -> Result<Vec<f64>, CouplingError> {
    // density |chi|^2 has Fourier transform exp(-k^2 sigma^2/4), so the
    // convolution with the Green's function is G(r, sigma/sqrt 2)
    let width = model.sigma / 2f64.sqrt();
    let prefactor = -model.kappa_over_g * model.mean_spacing.powi(model.dimension.get() as i32);
    points
        .iter()
        .map(|p| {
            let mut sum = 0.0;
            for site in sites {
                if site.occupation == 0.0 {
                    continue;
                }
                let r = distance(p, &site.position);
                sum += site.occupation * g_function(r, width, model.dimension)?;
            }
            Ok(prefactor * sum)
        })
        .collect()
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Polaron band `-2 J~ cos(k a)` relative to its centre.
pub fn polaron_band(ka: f64, effective_hopping: f64) -> f64 {
    -2.0 * effective_hopping * ka.cos()
}

/// Summary of the coupling quantities at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingTable {
    /// `E_p` in `g n0`.
    pub polaronic_shift: f64,
    pub effective_hopping_factor: f64,
    pub separations: Vec<f64>,
    /// `G(r, sigma)` at each separation.
    pub g_values: Vec<f64>,
    /// `V(r)` in `g n0`.
    pub potential: Vec<f64>,
    pub alpha: f64,
    pub questionable: bool,
}

impl CouplingTable {
    pub fn new(
        model: &ReducedModel,
        grid: &PhononGrid,
        separations: &[f64],
        validity: Validity,
    ) -> Result<Self, CouplingError> {
        let g_values = separations
            .iter()
            .map(|&r| g_function(r, model.sigma, model.dimension))
            .collect::<Result<Vec<_>, _>>()?;
        let potential = g_values
            .iter()
            .map(|g| 2.0 * model.coupling_energy() * g)
            .collect();
        Ok(Self {
            polaronic_shift: polaronic_shift(model)?,
            effective_hopping_factor: effective_hopping(grid, model.spacing, model.dimension),
            separations: separations.to_vec(),
            g_values,
            potential,
            alpha: validity.alpha,
            questionable: validity.questionable,
        })
    }
}
