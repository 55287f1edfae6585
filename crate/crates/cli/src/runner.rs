//! Runs a configured experiment and collects its tables in memory. Nothing
//! here touches the file system.

use polaron_core::analysis::{drift_velocity, fit_power_law_windows, msd};
use polaron_core::bogoliubov::{build_phonon_grid, GridSpec};
use polaron_core::coupling::CouplingTable;
use polaron_core::experiments::{
    exponent_scan, temperature_runs, tilt_scan, Run, RunDiagnostics, Transport,
};
use polaron_core::gme::Trajectory;
use polaron_core::model::Dimension;
use polaron_core::selftrap::{
    critical_alpha, minimize_energy, tight_trapping_dominates, SelfTrapParams,
};
use serde_json::{json, Value};

use crate::config::{Experiment, RunConfig};
use crate::output::{number, Table};
use crate::CliError;

/// Tables, plot scripts and diagnostics of one run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// Gnuplot scripts as `(file name, text)`.
    pub plots: Vec<(String, String)>,
    /// Derived scales and per-point diagnostics for the manifest.
    pub summary: Value,
    pub diagnostics: Vec<RunDiagnostics>,
}

pub fn execute(config: &RunConfig) -> Result<Outcome, CliError> {
    config.validate()?;
    let params = config.system_params()?;
    let transport = Transport::new(&params)?;
    let mut outcome = match config.experiment {
        Experiment::Fig3 => fig3(config, &transport)?,
        Experiment::Fig4 => fig4(config, &transport)?,
        Experiment::Fig5 => fig5(config, &transport)?,
        Experiment::Gme => gme(config, &transport)?,
        Experiment::Coupling => coupling(config, &transport)?,
        Experiment::Selftrap => selftrap(config, &transport)?,
        Experiment::SelftrapAppc => selftrap_appc(&transport)?,
    };
    let scales = json!({
        "E_p_gn0": transport.polaronic_shift,
        "E_p_nK": transport.polaronic_shift_nanokelvin(),
        "gn0_J": transport.scales.interaction_energy,
        "healing_length_m": transport.scales.healing_length,
        "wannier_width_over_xi": transport.model.sigma,
        "lattice_spacing_over_xi": transport.model.spacing,
        "J_over_gn0": transport.model.hopping,
        "alpha": transport.validity.alpha,
        "linearization_questionable": transport.validity.questionable,
    });
    outcome.summary = json!({ "scales": scales, "results": outcome.summary });
    if !config.output.plots {
        outcome.plots.clear();
    }
    Ok(outcome)
}

/// File-name tag for a temperature: `5` -> `T5`, `1.5` -> `T1p5`.
pub fn temperature_tag(t: f64) -> String {
    format!("T{}", t).replace('.', "p")
}

fn stride(config: &RunConfig) -> usize {
    ((config.output.sample_interval / config.solver.dt).round() as usize).max(1)
}

fn trajectory_table(name: String, trajectory: &Trajectory) -> Table {
    let mut t = Table::new(name, &["t_hbar_over_J", "j", "P"]);
    for (time, p) in trajectory.times.iter().zip(&trajectory.probabilities) {
        for (j, q) in trajectory.sites.iter().zip(p) {
            t.push(vec![number(*time), j.to_string(), number(*q)]);
        }
    }
    t
}

fn msd_table(name: String, trajectory: &Trajectory) -> Table {
    let mut t = Table::new(name, &["t", "l2"]);
    for (time, l2) in trajectory.times.iter().zip(msd(trajectory)) {
        t.push(vec![number(*time), number(l2)]);
    }
    t
}

fn kernel_table(name: String, run: &Run, stride: usize) -> Table {
    let k = &run.kernel;
    let mut t = Table::new(name, &["s_hbar_over_J", "W_plus", "W_minus"]);
    for i in (0..k.len()).step_by(stride) {
        t.push(vec![
            number(k.times[i]),
            number(k.w_plus[i]),
            number(k.w_minus[i]),
        ]);
    }
    t
}

fn run_summary(run: &Run) -> Result<Value, CliError> {
    let fits = fit_power_law_windows(&run.trajectory.times, &msd(&run.trajectory))
        .map_err(|e| CliError::Solver(e.to_string()))?;
    Ok(json!({
        "T_over_Ep": run.temperature_over_ep,
        "Jt_over_J": (-run.kernel.hopping_exponent).exp(),
        "power_law": fits,
    }))
}

fn fig3(config: &RunConfig, transport: &Transport) -> Result<Outcome, CliError> {
    let temps = config.temperatures();
    let runs = temperature_runs(
        transport,
        &temps,
        config.system.tilt_over_j,
        &config.solver_settings(),
    )?;
    let stride = stride(config);
    let mut tables = Vec::new();
    let mut summary = Vec::new();
    let mut msd_files = Vec::new();
    for run in &runs {
        let tag = temperature_tag(run.temperature_over_ep);
        let sampled = run.trajectory.subsample(stride);
        tables.push(trajectory_table(format!("trajectory_{tag}.csv"), &sampled));
        tables.push(msd_table(format!("msd_{tag}.csv"), &sampled));
        tables.push(kernel_table(format!("kernel_{tag}.csv"), run, 1));
        msd_files.push((
            format!("msd_{tag}.csv"),
            format!("T = {} E_p", run.temperature_over_ep),
        ));
        summary.push(run_summary(run)?);
    }
    let plots = vec![("fig3.gp".to_string(), crate::output::msd_plot(&msd_files))];
    Ok(Outcome {
        tables,
        plots,
        summary: Value::Array(summary),
        diagnostics: runs.into_iter().map(|r| r.diagnostics).collect(),
    })
}

fn fig4(config: &RunConfig, transport: &Transport) -> Result<Outcome, CliError> {
    let points = exponent_scan(transport, &config.temperatures(), &config.solver_settings())?;
    let mut t = Table::new(
        "alpha_vs_T.csv".into(),
        &["T_over_Ep", "alpha_full", "alpha_late", "A_full", "A_late"],
    );
    let mut flagged = Vec::new();
    for p in &points {
        t.push(vec![
            number(p.temperature_over_ep),
            number(p.fits.full.exponent()),
            number(p.fits.late.exponent()),
            number(p.fits.full.amplitude()),
            number(p.fits.late.amplitude()),
        ]);
        if p.fits.full.out_of_model || p.fits.late.out_of_model {
            flagged.push(p.temperature_over_ep);
        }
    }
    Ok(Outcome {
        tables: vec![t],
        plots: vec![("fig4.gp".into(), crate::output::alpha_plot())],
        summary: json!({ "fits": points.iter().map(|p| json!({"T_over_Ep": p.temperature_over_ep, "power_law": p.fits})).collect::<Vec<_>>(), "out_of_model_T_over_Ep": flagged }),
        diagnostics: points.into_iter().map(|p| p.diagnostics).collect(),
    })
}

fn fig5(config: &RunConfig, transport: &Transport) -> Result<Outcome, CliError> {
    let settings = config.solver_settings();
    let tilts = config.tilts();
    let mut tables = Vec::new();
    let mut fits = Table::new(
        "esaki_fit.csv".into(),
        &["T_over_Ep", "tau_over_tau0", "gamma", "residual"],
    );
    let mut diagnostics = Vec::new();
    let mut summary = Vec::new();
    let mut curves = Vec::new();
    for t in config.temperatures() {
        let scan = tilt_scan(transport, t, &tilts, config.sweep.t_d, &settings)?;
        let tag = temperature_tag(t);
        let mut iv = Table::new(
            format!("iv_curve_{tag}.csv"),
            &["omegaB_hbar_over_J", "vd_over_v0"],
        );
        for (w, v) in scan.tilts.iter().zip(&scan.velocities) {
            iv.push(vec![number(*w), number(*v)]);
        }
        curves.push((iv.name.clone(), format!("T = {t} E_p")));
        tables.push(iv);
        match &scan.fit {
            Ok(f) => {
                fits.push(vec![
                    number(t),
                    number(f.tau()),
                    number(f.gamma()),
                    number(f.residual_norm),
                ]);
                summary
                    .push(json!({ "T_over_Ep": t, "Jt_over_J": scan.effective_hopping, "fit": f }));
            }
            Err(e) => {
                fits.push(vec![number(t), "NaN".into(), "NaN".into(), "NaN".into()]);
                summary.push(json!({ "T_over_Ep": t, "Jt_over_J": scan.effective_hopping, "fit_error": e.to_string() }));
            }
        }
        diagnostics.extend(scan.diagnostics);
    }
    tables.push(fits);
    Ok(Outcome {
        tables,
        plots: vec![("fig5.gp".into(), crate::output::iv_plot(&curves))],
        summary: json!({ "t_d_hbar_over_J": config.sweep.t_d, "scans": summary }),
        diagnostics,
    })
}

fn gme(config: &RunConfig, transport: &Transport) -> Result<Outcome, CliError> {
    let t = config.system.temperature_over_ep;
    let runs = temperature_runs(
        transport,
        &[t],
        config.system.tilt_over_j,
        &config.solver_settings(),
    )?;
    let run = &runs[0];
    let stride = stride(config);
    let sampled = run.trajectory.subsample(stride);
    let v = drift_velocity(&run.trajectory, config.sweep.t_d)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let mut summary = run_summary(run)?;
    summary["vd_over_v0"] = json!(v);
    summary["tilt_hbar_omegaB_over_J"] = json!(config.system.tilt_over_j);
    let tables = vec![
        trajectory_table("trajectory.csv".into(), &sampled),
        kernel_table("kernel.csv".into(), run, 1),
        msd_table("msd.csv".into(), &sampled),
    ];
    Ok(Outcome {
        tables,
        plots: vec![(
            "gme.gp".into(),
            crate::output::msd_plot(&[("msd.csv".into(), format!("T = {t} E_p"))]),
        )],
        summary,
        diagnostics: vec![run.diagnostics.clone()],
    })
}

fn coupling(config: &RunConfig, transport: &Transport) -> Result<Outcome, CliError> {
    let temperature = transport.temperature(config.system.temperature_over_ep);
    let grid = build_phonon_grid(
        &transport.model,
        temperature,
        &GridSpec {
            tol: config.solver.grid_tol,
            ..GridSpec::default()
        },
    )
    .map_err(|e| CliError::Solver(e.to_string()))?;
    let table = CouplingTable::new(
        &transport.model,
        &grid,
        &config.coupling.separations_over_xi,
        transport.validity,
    )
    .map_err(|e| CliError::Validation(format!("coupling.separations_over_xi: {e}")))?;
    let mut t = Table::new("coupling.csv".into(), &["r_over_xi", "G", "V_gn0"]);
    for i in 0..table.separations.len() {
        t.push(vec![
            number(table.separations[i]),
            number(table.g_values[i]),
            number(table.potential[i]),
        ]);
    }
    let mut s = Table::new("coupling_summary.csv".into(), &["E_p_nK", "Jt_over_J"]);
    s.push(vec![
        number(transport.polaronic_shift_nanokelvin()),
        number(table.effective_hopping_factor),
    ]);
    let mut tables = vec![t, s];
    if config.output.dump_grid {
        let mut g = Table::new(
            "grid.csv".into(),
            &["q", "epsilon", "omega", "weight", "N", "m"],
        );
        for row in grid.rows() {
            g.push(row.iter().map(|x| number(*x)).collect());
        }
        tables.push(g);
    }
    Ok(Outcome {
        tables,
        plots: vec![("coupling.gp".into(), crate::output::coupling_plot())],
        summary: json!({
            "T_over_Ep": config.system.temperature_over_ep,
            "E_p_gn0_grid": grid.polaronic_shift(),
            "grid_nodes": grid.len(),
            "grid_convergence": grid.convergence,
            "table": table,
        }),
        diagnostics: Vec::new(),
    })
}

fn selftrap_params(config: &RunConfig, transport: &Transport) -> Result<SelfTrapParams, CliError> {
    let mut p = SelfTrapParams::from_model(&transport.model);
    if let Some(d) = config.selftrap.dimension {
        p.dimension = Dimension::try_from(d)
            .map_err(|e| CliError::Validation(format!("selftrap.dimension: {e}")))?;
    }
    if let Some(a) = config.selftrap.alpha_prime {
        p.alpha_prime = a;
    }
    SelfTrapParams::new(p.dimension, p.alpha_prime, p.mass_ratio)
        .map_err(|e| CliError::Validation(e.to_string()))
}

fn selftrap_summary_row(t: &mut Table, bound: bool, sigma: Option<f64>, alpha: f64, critical: f64) {
    t.push(vec![
        bound.to_string(),
        sigma.map(number).unwrap_or_else(|| "NaN".into()),
        number(alpha),
        number(critical),
    ]);
}

fn selftrap(config: &RunConfig, transport: &Transport) -> Result<Outcome, CliError> {
    let params = selftrap_params(config, transport)?;
    let result = minimize_energy(&params);
    let critical = critical_alpha(params.dimension);
    let mut scan = Table::new("selftrap.csv".into(), &["sigma_over_xi", "E_gn0"]);
    for (s, e) in &result.scan {
        scan.push(vec![number(*s), number(*e)]);
    }
    let mut summary = Table::new(
        "selftrap_summary.csv".into(),
        &["bound", "sigma_star", "alpha_prime", "alpha_prime_critical"],
    );
    selftrap_summary_row(
        &mut summary,
        result.bound,
        result.sigma_star,
        result.alpha_prime,
        critical.alpha_prime,
    );
    let tight = result
        .sigma_star
        .map(|s| tight_trapping_dominates(s, transport.model.sigma));
    Ok(Outcome {
        tables: vec![scan, summary],
        plots: vec![("selftrap.gp".into(), crate::output::selftrap_plot())],
        summary: json!({
            "bound": result.bound,
            "sigma_star_over_xi": result.sigma_star,
            "energy_gn0": result.energy,
            "metastable": result.metastable,
            "endpoint_minimum": result.endpoint_minimum,
            "critical": critical,
            "wannier_width_over_xi": transport.model.sigma,
            "tight_trapping_dominates": tight,
        }),
        diagnostics: Vec::new(),
    })
}

fn selftrap_appc(transport: &Transport) -> Result<Outcome, CliError> {
    let mut t = Table::new(
        "critical_couplings.csv".into(),
        &[
            "dimension",
            "alpha_prime_critical",
            "bracket_low",
            "bracket_high",
            "sigma_threshold_over_xi",
        ],
    );
    let mut criticals = Vec::new();
    for d in [Dimension::One, Dimension::Two, Dimension::Three] {
        let c = critical_alpha(d);
        t.push(vec![
            d.get().to_string(),
            number(c.alpha_prime),
            number(c.bracket[0]),
            number(c.bracket[1]),
            c.sigma_at_threshold
                .map(number)
                .unwrap_or_else(|| "NaN".into()),
        ]);
        criticals.push(c);
    }
    let params = SelfTrapParams::from_model(&transport.model);
    let result = minimize_energy(&params);
    let mut summary = Table::new(
        "selftrap_summary.csv".into(),
        &["bound", "sigma_star", "alpha_prime", "alpha_prime_critical"],
    );
    let own = &criticals[params.dimension.get() as usize - 1];
    selftrap_summary_row(
        &mut summary,
        result.bound,
        result.sigma_star,
        result.alpha_prime,
        own.alpha_prime,
    );
    let tight = result
        .sigma_star
        .map(|s| tight_trapping_dominates(s, transport.model.sigma));
    Ok(Outcome {
        tables: vec![t, summary],
        plots: Vec::new(),
        summary: json!({
            "critical": criticals,
            "system": {
                "alpha_prime": result.alpha_prime,
                "sigma_star_over_xi": result.sigma_star,
                "sigma_asymptotic_over_xi": polaron_core::selftrap::sigma_1d_asymptotic(result.alpha_prime),
                "wannier_width_over_xi": transport.model.sigma,
                "tight_trapping_dominates": tight,
            },
        }),
        diagnostics: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags() {
        assert_eq!(temperature_tag(0.0), "T0");
        assert_eq!(temperature_tag(15.0), "T15");
        assert_eq!(temperature_tag(1.5), "T1p5");
    }

    #[test]
    fn quick_gme_run() {
        let mut c = RunConfig::preset(Experiment::Gme);
        c.solver.t_final = 1.0;
        c.solver.dt = 0.01;
        c.solver.sites = 31;
        c.solver.check_convergence = false;
        c.sweep.t_d = 1.0;
        let out = execute(&c).unwrap();
        let names: Vec<_> = out.tables.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["trajectory.csv", "kernel.csv", "msd.csv"]);
        // 11 sampled times on 31 sites
        assert_eq!(out.tables[0].rows.len(), 11 * 31);
        assert_eq!(out.tables[1].rows.len(), 101);
    }

    #[test]
    fn small_lattice_is_a_solver_failure() {
        let mut c = RunConfig::preset(Experiment::Gme);
        c.solver.t_final = 2.0;
        c.solver.dt = 0.01;
        c.solver.sites = 5;
        c.solver.check_convergence = false;
        c.sweep.t_d = 2.0;
        let err = execute(&c).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("end-site occupation"));
    }
}
