//! TOML run configuration. Unknown keys are rejected so typos surface early.

use std::path::{Path, PathBuf};

use polaron_core::analysis::log_space;
use polaron_core::experiments::{lin_space, SolverSettings};
use polaron_core::model::{Dimension, SystemParams, AMU, DEFAULT_LATTICE_DEPTH_ER};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fig3,
    Fig4,
    Fig5,
    SelftrapAppc,
    Gme,
    Coupling,
    Selftrap,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig3 => "fig3",
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
            Experiment::SelftrapAppc => "selftrap-appc",
            Experiment::Gme => "gme",
            Experiment::Coupling => "coupling",
            Experiment::Selftrap => "selftrap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub coupling: CouplingSection,
    #[serde(default)]
    pub selftrap: SelftrapSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub dimension: u32,
    pub impurity_mass_amu: f64,
    pub boson_mass_amu: f64,
    pub kappa_over_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_per_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_per_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_per_m3: Option<f64>,
    pub lattice_spacing_nm: f64,
    #[serde(rename = "lattice_depth_Er", default = "default_depth")]
    pub lattice_depth_er: f64,
    #[serde(rename = "hopping_Er")]
    pub hopping_er: f64,
    #[serde(rename = "temperature_over_Ep", default)]
    pub temperature_over_ep: f64,
    #[serde(rename = "tilt_hbar_omegaB_over_J", default)]
    pub tilt_over_j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub healing_length_nm: Option<f64>,
    /// Boson-boson coupling `g` in J m^D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boson_coupling: Option<f64>,
}

fn default_depth() -> f64 {
    DEFAULT_LATTICE_DEPTH_ER
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            dimension: 1,
            impurity_mass_amu: 41.0,
            boson_mass_amu: 87.0,
            kappa_over_g: 2.58,
            density_per_m: Some(1.0 / 200e-9),
            density_per_m2: None,
            density_per_m3: None,
            lattice_spacing_nm: 395.0,
            lattice_depth_er: DEFAULT_LATTICE_DEPTH_ER,
            hopping_er: 2.45e-2,
            temperature_over_ep: 0.0,
            tilt_over_j: 0.0,
            healing_length_nm: Some(652.0),
            boson_coupling: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Step in `hbar/J`.
    pub dt: f64,
    /// Run length in `hbar/J`.
    pub t_final: f64,
    pub sites: usize,
    /// Relative `E_p` tolerance of the phonon grid.
    pub grid_tol: f64,
    pub check_convergence: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            dt: s.dt,
            t_final: s.t_final,
            sites: s.sites,
            grid_tol: s.grid_tol,
            check_convergence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(
        rename = "temperatures_over_Ep",
        skip_serializing_if = "Option::is_none"
    )]
    pub temperatures_over_ep: Option<Vec<f64>>,
    #[serde(
        rename = "tilts_hbar_omegaB_over_J",
        skip_serializing_if = "Option::is_none"
    )]
    pub tilts: Option<Vec<f64>>,
    /// Drift time in `hbar/J`.
    pub t_d: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            temperatures_over_ep: None,
            tilts: None,
            t_d: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub plots: bool,
    /// Spacing of written trajectory samples in `hbar/J`.
    pub sample_interval: f64,
    /// Also write the phonon grid (coupling runs).
    pub dump_grid: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            plots: true,
            sample_interval: 0.1,
            dump_grid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    pub separations_over_xi: Vec<f64>,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            separations_over_xi: lin_space(0.0, 5.0, 101),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelftrapSection {
    /// Overrides `system.dimension`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<u32>,
    /// Overrides the coupling derived from `[system]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_prime: Option<f64>,
}

impl RunConfig {
    /// Built-in configuration behind each subcommand.
    pub fn preset(experiment: Experiment) -> Self {
        let mut sweep = SweepSection::default();
        match experiment {
            Experiment::Fig3 | Experiment::Fig5 => {
                sweep.temperatures_over_ep = Some(vec![0.0, 5.0, 15.0])
            }
            Experiment::Fig4 => sweep.temperatures_over_ep = Some(lin_space(0.0, 15.0, 12)),
            _ => {}
        }
        if experiment == Experiment::Fig5 {
            sweep.tilts = Some(log_space(0.1, 20.0, 15));
        }
        Self {
            experiment,
            system: SystemSection::default(),
            solver: SolverSection::default(),
            sweep,
            output: OutputSection::default(),
            coupling: CouplingSection::default(),
            selftrap: SelftrapSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.message().to_string();
            if path.is_empty() || path == "." {
                CliError::Validation(message)
            } else {
                CliError::Validation(format!("{path}: {message}"))
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.solver;
        positive("solver.dt", s.dt)?;
        positive("solver.t_final", s.t_final)?;
        positive("solver.grid_tol", s.grid_tol)?;
        if s.sites < 3 || s.sites.is_multiple_of(2) {
            return Err(invalid(
                "solver.sites",
                format!("must be an odd number of at least 3, got {}", s.sites),
            ));
        }
        let steps = s.t_final / s.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(invalid(
                "solver.t_final",
                "must be a whole number of steps solver.dt".into(),
            ));
        }
        positive("sweep.t_d", self.sweep.t_d)?;
        if self.sweep.t_d > s.t_final * (1.0 + 1e-12) {
            return Err(invalid(
                "sweep.t_d",
                format!("{} exceeds solver.t_final {}", self.sweep.t_d, s.t_final),
            ));
        }
        if let Some(ts) = &self.sweep.temperatures_over_ep {
            if ts.is_empty() {
                return Err(invalid(
                    "sweep.temperatures_over_Ep",
                    "must not be empty".into(),
                ));
            }
            for t in ts {
                non_negative("sweep.temperatures_over_Ep", *t)?;
            }
        }
        if let Some(ws) = &self.sweep.tilts {
            if ws.is_empty() {
                return Err(invalid(
                    "sweep.tilts_hbar_omegaB_over_J",
                    "must not be empty".into(),
                ));
            }
            for w in ws {
                non_negative("sweep.tilts_hbar_omegaB_over_J", *w)?;
            }
        }
        positive("output.sample_interval", self.output.sample_interval)?;
        for r in &self.coupling.separations_over_xi {
            non_negative("coupling.separations_over_xi", *r)?;
        }
        if let Some(d) = self.selftrap.dimension {
            Dimension::try_from(d).map_err(|e| invalid("selftrap.dimension", e.to_string()))?;
        }
        if let Some(a) = self.selftrap.alpha_prime {
            non_negative("selftrap.alpha_prime", a)?;
        }
        self.system_params().map(|_| ())
    }

    /// Converts `[system]` to SI parameters.
    pub fn system_params(&self) -> Result<SystemParams, CliError> {
        let sys = &self.system;
        let dimension = Dimension::try_from(sys.dimension)
            .map_err(|e| invalid("system.dimension", e.to_string()))?;
        let densities = [
            ("system.density_per_m", sys.density_per_m, 1),
            ("system.density_per_m2", sys.density_per_m2, 2),
            ("system.density_per_m3", sys.density_per_m3, 3),
        ];
        let given: Vec<_> = densities.iter().filter(|d| d.1.is_some()).collect();
        let wanted = densities[sys.dimension as usize - 1].0;
        let density = match given.as_slice() {
            [(key, Some(n), d)] if *d == sys.dimension => {
                positive(key, *n)?;
                *n
            }
            [(key, _, _)] => {
                return Err(invalid(
                    key,
                    format!("does not match dimension {}; use {wanted}", sys.dimension),
                ))
            }
            [] => return Err(invalid(wanted, "is required".into())),
            _ => return Err(invalid(wanted, "give exactly one density key".into())),
        };
        positive("system.impurity_mass_amu", sys.impurity_mass_amu)?;
        positive("system.boson_mass_amu", sys.boson_mass_amu)?;
        positive("system.lattice_spacing_nm", sys.lattice_spacing_nm)?;
        positive("system.lattice_depth_Er", sys.lattice_depth_er)?;
        non_negative("system.hopping_Er", sys.hopping_er)?;
        non_negative("system.temperature_over_Ep", sys.temperature_over_ep)?;
        non_negative("system.tilt_hbar_omegaB_over_J", sys.tilt_over_j)?;
        if !sys.kappa_over_g.is_finite() {
            return Err(invalid("system.kappa_over_g", "must be finite".into()));
        }
        if let Some(xi) = sys.healing_length_nm {
            positive("system.healing_length_nm", xi)?;
        }
        if let Some(g) = sys.boson_coupling {
            positive("system.boson_coupling", g)?;
        }
        let params = SystemParams {
            dimension,
            impurity_mass: sys.impurity_mass_amu * AMU,
            boson_mass: sys.boson_mass_amu * AMU,
            kappa_over_g: sys.kappa_over_g,
            density,
            lattice_spacing: sys.lattice_spacing_nm * 1e-9,
            lattice_depth_er: sys.lattice_depth_er,
            hopping_er: sys.hopping_er,
            temperature_over_ep: sys.temperature_over_ep,
            tilt_over_j: sys.tilt_over_j,
            healing_length: sys.healing_length_nm.map(|x| x * 1e-9),
            boson_coupling: sys.boson_coupling,
        };
        polaron_core::model::derive_scales(&params).map_err(|e| {
            let key = match &e {
                polaron_core::model::ModelError::InconsistentHealingLength { .. } => {
                    "system.healing_length_nm"
                }
                polaron_core::model::ModelError::MissingHealingLength => "system.healing_length_nm",
                polaron_core::model::ModelError::ShallowLattice(_) => "system.lattice_depth_Er",
                _ => "system",
            };
            invalid(key, e.to_string())
        })?;
        Ok(params)
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            dt: self.solver.dt,
            t_final: self.solver.t_final,
            sites: self.solver.sites,
            grid_tol: self.solver.grid_tol,
            check_convergence: self.solver.check_convergence,
        }
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.sweep
            .temperatures_over_ep
            .clone()
            .unwrap_or_else(|| vec![self.system.temperature_over_ep])
    }

    pub fn tilts(&self) -> Vec<f64> {
        self.sweep
            .tilts
            .clone()
            .unwrap_or_else(|| vec![self.system.tilt_over_j])
    }
}

fn invalid(key: &str, message: String) -> CliError {
    CliError::Validation(format!("{key}: {message}"))
}

fn positive(key: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive, got {value}")))
    }
}

fn non_negative(key: &str, value: f64) -> Result<(), CliError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be non-negative, got {value}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for e in [
            Experiment::Fig3,
            Experiment::Fig4,
            Experiment::Fig5,
            Experiment::Selftrap,
        ] {
            let c = RunConfig::preset(e);
            c.validate().unwrap();
            assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
    }

    #[test]
    fn default_system_is_the_transport_system() {
        let c = RunConfig::preset(Experiment::Gme).system_params().unwrap();
        let want = SystemParams::potassium_rubidium();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * b.abs();
        assert_eq!(c.dimension, want.dimension);
        assert!(close(c.impurity_mass, want.impurity_mass) && close(c.boson_mass, want.boson_mass));
        assert!(close(c.density, want.density) && close(c.lattice_spacing, want.lattice_spacing));
        assert!(close(
            c.healing_length.unwrap(),
            want.healing_length.unwrap()
        ));
        assert_eq!(
            (c.kappa_over_g, c.hopping_er, c.lattice_depth_er),
            (want.kappa_over_g, want.hopping_er, want.lattice_depth_er)
        );
    }

    #[test]
    fn minimal_config() {
        let c = RunConfig::from_toml("experiment = \"coupling\"\n").unwrap();
        assert_eq!(c.experiment, Experiment::Coupling);
        assert_eq!(c.temperatures(), vec![0.0]);
    }

    #[test]
    fn errors_name_the_key() {
        let err = |text: &str| match RunConfig::from_toml(text) {
            Err(CliError::Validation(m)) => m,
            other => panic!("expected a validation error, got {other:?}"),
        };
        assert!(err("experiment = \"gme\"\n[solver]\ndt = -0.1\n").starts_with("solver.dt"));
        assert!(err("experiment = \"gme\"\n[solver]\ndtt = 0.1\n").contains("dtt"));
        assert!(err("experiment = \"gme\"\n[solver]\ndt = \"x\"\n").starts_with("solver.dt"));
        assert!(err("experiment = \"fig9\"\n").contains("fig9"));
        assert!(err("experiment = \"gme\"\n[solver]\nsites = 10\n").starts_with("solver.sites"));
        assert!(err("experiment = \"gme\"\n[sweep]\nt_d = 20.0\n").starts_with("sweep.t_d"));
        let sys = RunConfig::preset(Experiment::Gme)
            .to_toml()
            .replace("density_per_m = ", "density_per_m3 = ");
        assert!(err(&sys).starts_with("system.density_per_m3"));
        let sys = RunConfig::preset(Experiment::Gme).to_toml().replace(
            "healing_length_nm = 652.0",
            "healing_length_nm = 652.0\nboson_coupling = 1e-40",
        );
        assert!(err(&sys).starts_with("system.healing_length_nm"));
        assert!(
            err("experiment = \"gme\"\n[solver]\ngrid_tol = 0.0\n").starts_with("solver.grid_tol")
        );
    }
}
