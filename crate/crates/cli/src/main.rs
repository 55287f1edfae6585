use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::{Parser, Subcommand};
use polaron_cli::output::resolve_directory;
use polaron_cli::{execute, write_outputs, CliError, Experiment, OutputOptions, RunConfig};

/// Polaron transport of an impurity in a tilted optical lattice immersed in a
/// Bose-Einstein condensate.
#[derive(Debug, Parser)]
#[command(name = "polaron", version)]
struct Cli {
    /// Output directory for this run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root under which runs without --out get a directory named after the experiment.
    #[arg(long = "out-root", env = "POLARON_OUT", global = true)]
    out_root: Option<PathBuf>,
    /// Overwrite an existing output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Relative tolerance of the phonon grid (overrides solver.grid_tol).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trajectories at k_B T / E_p = 0, 5 and 15.
    Fig3,
    /// Transport exponent over a 12-point temperature scan.
    Fig4,
    /// Drift velocity against tilt with Esaki-Tsu fits.
    Fig5,
    /// Critical self-trapping couplings in one, two and three dimensions.
    #[command(name = "selftrap-appc")]
    SelftrapAppc,
    /// A single GME run.
    Gme {
        /// Temperature in units of E_p.
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        /// Tilt hbar omega_B / J.
        #[arg(long, default_value_t = 0.0)]
        tilt: f64,
        /// Run length in hbar/J.
        #[arg(long)]
        t_final: Option<f64>,
        /// Step in hbar/J.
        #[arg(long)]
        dt: Option<f64>,
        /// Odd number of lattice sites.
        #[arg(long)]
        sites: Option<usize>,
    },
    /// Induced interaction, polaronic shift and band narrowing.
    Coupling {
        /// Temperature in units of E_p.
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        /// Also write the phonon grid.
        #[arg(long)]
        dump_grid: bool,
    },
    /// Variational self-trapping energy.
    Selftrap {
        #[arg(long)]
        dimension: Option<u32>,
        /// Coupling alpha' (default: derived from the system parameters).
        #[arg(long)]
        alpha_prime: Option<f64>,
    },
    /// Run a TOML configuration.
    Run { config: PathBuf },
}

fn build_config(command: &Command) -> Result<RunConfig, CliError> {
    Ok(match command {
        Command::Fig3 => RunConfig::preset(Experiment::Fig3),
        Command::Fig4 => RunConfig::preset(Experiment::Fig4),
        Command::Fig5 => RunConfig::preset(Experiment::Fig5),
        Command::SelftrapAppc => RunConfig::preset(Experiment::SelftrapAppc),
        Command::Gme {
            temperature,
            tilt,
            t_final,
            dt,
            sites,
        } => {
            let mut c = RunConfig::preset(Experiment::Gme);
            c.system.temperature_over_ep = *temperature;
            c.system.tilt_over_j = *tilt;
            if let Some(t) = t_final {
                c.solver.t_final = *t;
                c.sweep.t_d = *t;
            }
            if let Some(dt) = dt {
                c.solver.dt = *dt;
            }
            if let Some(n) = sites {
                c.solver.sites = *n;
            }
            c
        }
        Command::Coupling {
            temperature,
            dump_grid,
        } => {
            let mut c = RunConfig::preset(Experiment::Coupling);
            c.system.temperature_over_ep = *temperature;
            c.output.dump_grid = *dump_grid;
            c
        }
        Command::Selftrap {
            dimension,
            alpha_prime,
        } => {
            let mut c = RunConfig::preset(Experiment::Selftrap);
            c.selftrap.dimension = *dimension;
            c.selftrap.alpha_prime = *alpha_prime;
            c
        }
        Command::Run { config } => RunConfig::load(config)?,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    let mut config = build_config(&cli.command)?;
    if let Some(tol) = cli.tol {
        config.solver.grid_tol = tol;
    }
    config.validate().map_err(|e| match (&e, cli.tol) {
        (CliError::Validation(m), Some(_)) if m.starts_with("solver.grid_tol") => {
            CliError::Validation(format!("--tol: {m}"))
        }
        _ => e,
    })?;
    let dir = resolve_directory(cli.out.as_deref(), cli.out_root.as_deref(), &config);
    if dir.exists() && !cli.force && std::fs::read_dir(&dir)?.next().is_some() {
        return Err(CliError::Validation(format!(
            "output directory {} already exists; pass --force to overwrite",
            dir.display()
        )));
    }

    let started = SystemTime::now();
    let clock = Instant::now();
    let outcome = execute(&config)?;
    let options = OutputOptions {
        force: cli.force,
        threads: rayon::current_num_threads(),
        started: Some(started),
        wall_time: clock.elapsed(),
    };
    write_outputs(&dir, &config, &outcome, &options)?;
    for t in &outcome.tables {
        if t.name.ends_with("summary.csv")
            || t.name == "esaki_fit.csv"
            || t.name == "alpha_vs_T.csv"
        {
            print!("{}", String::from_utf8_lossy(&t.to_csv()));
        }
    }
    println!(
        "wrote {} files to {}",
        outcome.tables.len() + outcome.plots.len() + 1,
        dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
