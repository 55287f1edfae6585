//! CSV tables, gnuplot scripts and the run manifest.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::config::RunConfig;
use crate::runner::Outcome;
use crate::CliError;

/// Build identifier from `git describe`, or the crate version outside a checkout.
pub const GIT_DESCRIBE: &str = env!("POLARON_GIT_DESCRIBE");

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: String, header: &[&str]) -> Self {
        Self {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Shortest round-trip text for a float; scientific notation outside
/// `[1e-4, 1e6)` keeps tiny probabilities compact.
pub fn number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e6).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    pub force: bool,
    pub threads: usize,
    pub started: Option<SystemTime>,
    pub wall_time: Duration,
}

/// Output directory: `--out` if given, else `<root>/<name>` with the root
/// from `POLARON_OUT` (or the working directory).
pub fn resolve_directory(out: Option<&Path>, root: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(dir) = out {
        return dir.to_path_buf();
    }
    let name = config
        .output
        .directory
        .clone()
        .unwrap_or_else(|| PathBuf::from(config.experiment.name()));
    match root {
        Some(r) => r.join(name),
        None => name,
    }
}

fn prepare(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let occupied = std::fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(CliError::Validation(format!(
                "output directory {} already exists; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes every table, plot script and `manifest.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    config: &RunConfig,
    outcome: &Outcome,
    options: &OutputOptions,
) -> Result<(), CliError> {
    prepare(dir, options.force)?;
    let mut files = Vec::new();
    for t in &outcome.tables {
        std::fs::write(dir.join(&t.name), t.to_csv())?;
        files.push(json!({ "name": t.name, "columns": t.header, "rows": t.rows.len() }));
    }
    for (name, text) in &outcome.plots {
        std::fs::write(dir.join(name), text)?;
        files.push(json!({ "name": name }));
    }
    let started = options
        .started
        .and_then(|s| s.duration_since(UNIX_EPOCH).ok())
        .map(|d| d.as_secs_f64());
    let worst_norm = outcome
        .diagnostics
        .iter()
        .map(|d| d.normalization_error)
        .fold(0.0, f64::max);
    let worst_phi = outcome
        .diagnostics
        .iter()
        .filter_map(|d| d.phi_convergence)
        .fold(0.0, f64::max);
    let worst_boundary = outcome
        .diagnostics
        .iter()
        .map(|d| d.boundary_occupation)
        .fold(0.0, f64::max);
    let manifest = json!({
        "tool": "polaron",
        "version": env!("CARGO_PKG_VERSION"),
        "git_describe": GIT_DESCRIBE,
        "experiment": config.experiment.name(),
        "config": config,
        "started_unix_s": started,
        "wall_time_s": options.wall_time.as_secs_f64(),
        "threads": options.threads,
        "files": files,
        "convergence": {
            "max_normalization_error": worst_norm,
            "max_phi_grid_doubling_change": worst_phi,
            "max_boundary_occupation": worst_boundary,
        },
        "summary": outcome.summary,
        "diagnostics": outcome.diagnostics,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

fn quoted_list(items: &[(String, String)], using: &str) -> String {
    items
        .iter()
        .map(|(file, title)| format!("'{file}' using {using} with lines title '{title}'"))
        .collect::<Vec<_>>()
        .join(", \\\n     ")
}

pub fn msd_plot(files: &[(String, String)]) -> String {
    format!(
        "set datafile separator ','\nset key autotitle columnhead left top\nset logscale xy\n\
         set xlabel 't [hbar/J]'\nset ylabel 'mean-square displacement [a^2]'\n\
         plot {}\npause -1\n",
        quoted_list(files, "1:2")
    )
}

pub fn alpha_plot() -> String {
    "set datafile separator ','\nset xlabel 'k_B T / E_p'\nset ylabel 'alpha'\nset yrange [0:2.5]\n\
     plot 'alpha_vs_T.csv' using 1:2 with linespoints title 'full window', \\\n     \
     'alpha_vs_T.csv' using 1:3 with linespoints title 'late window'\npause -1\n"
        .to_string()
}

pub fn iv_plot(files: &[(String, String)]) -> String {
    format!(
        "set datafile separator ','\nset logscale x\nset xlabel 'hbar omega_B / J'\n\
         set ylabel 'v_d / v_0'\nplot {}\npause -1\n",
        quoted_list(files, "1:2")
    )
}

pub fn coupling_plot() -> String {
    "set datafile separator ','\nset xlabel 'r / xi'\nset ylabel 'V / g n0'\n\
     plot 'coupling.csv' using 1:3 with lines title 'induced potential'\npause -1\n"
        .to_string()
}

pub fn selftrap_plot() -> String {
    "set datafile separator ','\nset logscale x\nset xlabel 'sigma / xi'\nset ylabel 'E / g n0'\n\
     plot 'selftrap.csv' using 1:2 with lines title 'variational energy'\npause -1\n"
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for x in [0.0, 1.0, 0.1, 2.5e-30, -3.75e-7, 12345.678, 1e7, 0.58553] {
            assert_eq!(number(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(number(0.5), "0.5");
        assert_eq!(number(2.5e-30), "2.5e-30");
    }

    #[test]
    fn csv_uses_lf_and_header() {
        let mut t = Table::new("x.csv".into(), &["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        assert_eq!(String::from_utf8(t.to_csv()).unwrap(), "a,b\n1,2\n");
    }
}
