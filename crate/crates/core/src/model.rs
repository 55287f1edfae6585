//! Physical parameters, derived scales and the dimensionless model used by
//! every numerical routine.
//!
//! Internally lengths are measured in the healing length `xi`, energies in the
//! interaction energy `g n0` and times in `hbar / g n0`. In these units the free
//! boson energy is `q^2 / 2` and the Bogoliubov frequency `q sqrt(q^2 + 4) / 2`.
//! Lattice dynamics use `hbar / J` as the time unit; [`ReducedModel::hopping`]
//! converts between the two clocks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J / K).
pub const K_B: f64 = 1.380_649e-23;
/// Atomic mass unit (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;

/// Lattice depth assumed when a configuration only fixes the hopping.
pub const DEFAULT_LATTICE_DEPTH_ER: f64 = 12.0;

/// Relative tolerance for a healing length that is both given and derivable.
const HEALING_LENGTH_CONSISTENCY: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{field}` must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("parameter `{field}` must be non-negative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("dimension must be 1, 2 or 3, got {0}")]
    BadDimension(u32),
    #[error("lattice depth {0} E_R is below 1 E_R; the harmonic Wannier approximation is not trustworthy")]
    ShallowLattice(f64),
    #[error("healing length {given:e} m is inconsistent with hbar/sqrt(m_b g n0) = {derived:e} m")]
    InconsistentHealingLength { given: f64, derived: f64 },
    #[error("either the healing length or the boson coupling g must be supplied")]
    MissingHealingLength,
}

/// Spatial dimension of the condensate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Dimension {
    One,
    Two,
    Three,
}

impl Dimension {
    pub fn get(self) -> u32 {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
            Dimension::Three => 3,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.get() as f64
    }
}

impl TryFrom<u32> for Dimension {
    type Error = ModelError;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Dimension::One),
            2 => Ok(Dimension::Two),
            3 => Ok(Dimension::Three),
            other => Err(ModelError::BadDimension(other)),
        }
    }
}

impl From<Dimension> for u32 {
    fn from(d: Dimension) -> u32 {
        d.get()
    }
}

/// Physical inputs in SI units, except where noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub dimension: Dimension,
    /// Impurity mass `m_a` (kg).
    pub impurity_mass: f64,
    /// Condensate atom mass `m_b` (kg).
    pub boson_mass: f64,
    /// Impurity-boson over boson-boson coupling, `kappa / g`.
    pub kappa_over_g: f64,
    /// Condensate density `n0` (m^-D).
    pub density: f64,
    /// Lattice spacing `a` (m).
    pub lattice_spacing: f64,
    /// Lattice depth in recoil energies.
    pub lattice_depth_er: f64,
    /// Bare hopping `J` in recoil energies.
    pub hopping_er: f64,
    /// Temperature in units of the polaronic level shift `E_p`.
    pub temperature_over_ep: f64,
    /// Tilt `hbar omega_B` in units of `J`.
    pub tilt_over_j: f64,
    /// Healing length (m), if given directly.
    pub healing_length: Option<f64>,
    /// Boson-boson coupling `g` (J m^D), if given.
    pub boson_coupling: Option<f64>,
}

impl SystemParams {
    /// The 41K impurity in a 87Rb condensate used for the transport figures.
    pub fn potassium_rubidium() -> Self {
        Self {
            dimension: Dimension::One,
            impurity_mass: 41.0 * AMU,
            boson_mass: 87.0 * AMU,
            kappa_over_g: 2.58,
            density: 1.0 / 200e-9,
            lattice_spacing: 395e-9,
            lattice_depth_er: DEFAULT_LATTICE_DEPTH_ER,
            hopping_er: 2.45e-2,
            temperature_over_ep: 0.0,
            tilt_over_j: 0.0,
            healing_length: Some(652e-9),
            boson_coupling: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("impurity_mass", self.impurity_mass)?;
        positive("boson_mass", self.boson_mass)?;
        positive("density", self.density)?;
        positive("lattice_spacing", self.lattice_spacing)?;
        positive("lattice_depth", self.lattice_depth_er)?;
        non_negative("hopping", self.hopping_er)?;
        non_negative("temperature", self.temperature_over_ep)?;
        if !self.kappa_over_g.is_finite() {
            return Err(ModelError::NonPositive {
                field: "kappa_over_g",
                value: self.kappa_over_g,
            });
        }
        if !self.tilt_over_j.is_finite() {
            return Err(ModelError::NonPositive {
                field: "tilt",
                value: self.tilt_over_j,
            });
        }
        if let Some(xi) = self.healing_length {
            positive("healing_length", xi)?;
        }
        if let Some(g) = self.boson_coupling {
            positive("boson_coupling", g)?;
        }
        self.healing_length().map(|_| ())
    }

    /// The healing length, checking consistency when it is over-determined.
    pub fn healing_length(&self) -> Result<f64, ModelError> {
        let derived = self
            .boson_coupling
            .map(|g| HBAR / (self.boson_mass * g * self.density).sqrt());
        match (self.healing_length, derived) {
            (Some(given), Some(derived)) => {
                if ((given - derived) / derived).abs() > HEALING_LENGTH_CONSISTENCY {
                    Err(ModelError::InconsistentHealingLength { given, derived })
                } else {
                    Ok(given)
                }
            }
            (Some(given), None) => Ok(given),
            (None, Some(derived)) => Ok(derived),
            (None, None) => Err(ModelError::MissingHealingLength),
        }
    }

    /// Mean interparticle distance `d = n0^(-1/D)`.
    pub fn mean_spacing(&self) -> f64 {
        self.density.powf(-1.0 / self.dimension.as_f64())
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonPositive { field, value })
    }
}

fn non_negative(field: &'static str, value: f64) -> Result<(), ModelError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Negative { field, value })
    }
}

/// Scales derived from [`SystemParams`], in SI units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedScales {
    pub healing_length: f64,
    /// `g n0` (J).
    pub interaction_energy: f64,
    /// `E_R = hbar^2 k^2 / 2 m_a` with `k = pi / a` (J).
    pub recoil_energy: f64,
    /// Harmonic-oscillator width of the Wannier function (m).
    pub wannier_width: f64,
    pub mean_spacing: f64,
    /// `sqrt(g n0 / m_b)` (m/s).
    pub sound_speed: f64,
    /// `hbar / g n0` (s).
    pub time_unit: f64,
    /// Bare hopping `J` (J).
    pub hopping: f64,
}

/// Derives all scales. Pure and deterministic.
pub fn derive_scales(params: &SystemParams) -> Result<DerivedScales, ModelError> {
    params.validate()?;
    if params.lattice_depth_er < 1.0 {
        return Err(ModelError::ShallowLattice(params.lattice_depth_er));
    }
    let xi = params.healing_length()?;
    let gn0 = HBAR * HBAR / (params.boson_mass * xi * xi);
    let k = std::f64::consts::PI / params.lattice_spacing;
    let recoil = HBAR * HBAR * k * k / (2.0 * params.impurity_mass);
    let sigma = params.lattice_spacing * wannier_width_ratio(params.lattice_depth_er);
    Ok(DerivedScales {
        healing_length: xi,
        interaction_energy: gn0,
        recoil_energy: recoil,
        wannier_width: sigma,
        mean_spacing: params.mean_spacing(),
        sound_speed: (gn0 / params.boson_mass).sqrt(),
        time_unit: HBAR / gn0,
        hopping: params.hopping_er * recoil,
    })
}

/// `sigma / a = (V / E_R)^(-1/4) / pi` for a harmonic well of depth `V`.
pub fn wannier_width_ratio(depth_er: f64) -> f64 {
    depth_er.powf(-0.25) / std::f64::consts::PI
}

/// Outcome of the linearization check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validity {
    pub alpha: f64,
    /// Set when `alpha >= 1`, i.e. the linearized condensate response is questionable.
    pub questionable: bool,
}

/// `alpha = (|kappa|/g) (d/xi)^D`.
pub fn validity_alpha(params: &SystemParams, scales: &DerivedScales) -> Validity {
    let ratio = scales.mean_spacing / scales.healing_length;
    let alpha = params.kappa_over_g.abs() * ratio.powi(params.dimension.get() as i32);
    Validity {
        alpha,
        questionable: alpha >= 1.0,
    }
}

/// Everything the numerics need, in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub dimension: Dimension,
    /// Wannier width `sigma / xi`.
    pub sigma: f64,
    /// Lattice spacing `a / xi`.
    pub spacing: f64,
    pub kappa_over_g: f64,
    /// Mean interparticle distance `d / xi`.
    pub mean_spacing: f64,
    /// `m_b / m_a`.
    pub mass_ratio: f64,
    /// `J / g n0`; a time `t` in `hbar/J` equals `t / hopping` in `hbar/g n0`.
    pub hopping: f64,
}

impl ReducedModel {
    pub fn new(params: &SystemParams, scales: &DerivedScales) -> Self {
        let xi = scales.healing_length;
        Self {
            dimension: params.dimension,
            sigma: scales.wannier_width / xi,
            spacing: params.lattice_spacing / xi,
            kappa_over_g: params.kappa_over_g,
            mean_spacing: scales.mean_spacing / xi,
            mass_ratio: params.boson_mass / params.impurity_mass,
            hopping: scales.hopping / scales.interaction_energy,
        }
    }

    /// `kappa^2 / (g xi^D)` in units of `g n0`, i.e. `(kappa/g)^2 (d/xi)^D`.
    pub fn coupling_energy(&self) -> f64 {
        self.kappa_over_g.powi(2) * self.mean_spacing.powi(self.dimension.get() as i32)
    }

    /// Converts a lattice time (`hbar/J`) to the condensate clock (`hbar/g n0`).
    pub fn lattice_to_condensate_time(&self, t: f64) -> f64 {
        t / self.hopping
    }
}

/// Temperature in `g n0` units from a temperature in units of `E_p`.
pub fn temperature_from_ep_units(t_over_ep: f64, ep_gn0: f64) -> f64 {
    t_over_ep * ep_gn0
}

/// Inverse of [`temperature_from_ep_units`].
pub fn temperature_to_ep_units(t_gn0: f64, ep_gn0: f64) -> f64 {
    t_gn0 / ep_gn0
}

/// Converts an energy in `g n0` units to nanokelvin.
pub fn energy_to_nanokelvin(energy_gn0: f64, scales: &DerivedScales) -> f64 {
    energy_gn0 * scales.interaction_energy / K_B * 1e9
}
