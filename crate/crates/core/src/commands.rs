//! The `run`, `convergence` and `check` entry points behind the binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::analysis::{convergence_rows, ConvergenceRow, ErrorAccumulator, NestedPair, TABLE_SPECS};
use crate::config::{ConfigError, GeometryPreset, OutputFormat, RunConfigDocument};
use crate::problem::{example1_discretization, Discretization, ProblemConfig, SolutionState};
use crate::solver::{time_loop, PicardSettings, RunTrace, SolverError, TimeSettings};
use crate::viscosity::{check_monotonicity, ViscosityModel};
use crate::vtk::write_vtk;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed checks: {}", .0.join(", "))]
    Check(Vec<String>),
}

impl CliError {
    /// 2 for unusable input, 1 for failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_owned).unwrap_or_default()
}

/// Summary of a finished `run`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub trace: RunTrace,
    pub final_state: SolutionState,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

/// Runs the time loop of a validated document. Snapshots (step 0, every
/// `snapshot_every` steps and the last step) go to `output.directory` as
/// `snapshot_NNNNN.vtk`; the step trace goes to `trace.csv`.
pub fn run_document(doc: &RunConfigDocument, base: &Path, log: bool) -> Result<RunSummary, CliError> {
    let disc = doc.discretization(base)?;
    let cfg = doc.problem();
    let time = doc.time_settings();
    let n_steps = time.n_steps();
    let every = doc.output.snapshot_every.unwrap_or(10);
    let dir = doc.output.directory.clone();
    let vtk = doc.output.formats.contains(&OutputFormat::Vtk);
    let csv = doc.output.formats.contains(&OutputFormat::Csv);
    if vtk || csv {
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let mut files = Vec::new();
    let mut io_error = None;
    let (final_state, trace) = time_loop(&disc, &cfg, &time, &doc.picard_settings(), |n, s, rec| {
        if let (true, Some(r)) = (log, rec) {
            eprintln!(
                "step {n}/{n_steps} t={:.4} picard={} increment={:.2e}",
                r.time, r.picard_iterations, r.final_increment
            );
        }
        if vtk && (n % every == 0 || n == n_steps) {
            let path = dir.join(format!("snapshot_{n:05}.vtk"));
            if let Err(e) = write_vtk(&path, &disc, &cfg, s) {
                let msg = format!("{}: {e}", path.display());
                io_error = Some(CliError::Io { path, source: e });
                return Err(msg);
            }
            files.push(path);
        }
        Ok(())
    })
    .map_err(|e| io_error.take().unwrap_or(CliError::Solver(e)))?;
    if csv {
        let path = dir.join("trace.csv");
        std::fs::write(&path, trace.to_csv()).map_err(io_err(&path))?;
        files.push(path);
    }
    Ok(RunSummary { trace, final_state, files })
}

pub fn cmd_run(config_path: &Path) -> Result<RunSummary, CliError> {
    let doc = RunConfigDocument::load(config_path)?;
    run_document(&doc, &base_dir(config_path), true)
}

/// Relative errors of several levels against one reference, in the
/// column order of [`TABLE_SPECS`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// Ordered by decreasing `h`.
    pub rows: Vec<ConvergenceRow>,
    pub reference_h: f64,
    pub tau: f64,
    pub preset: String,
}

impl ConvergenceReport {
    /// Columns: `h`, then `error_<label>` and `order_<label>` per quantity.
    /// Orders on the first row are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h");
        for s in &TABLE_SPECS {
            let l = s.label();
            let _ = write!(out, ",error_{l},order_{l}");
        }
        out.push_str("\r\n");
        for r in &self.rows {
            let _ = write!(out, "{:.17e}", r.h);
            for (e, o) in r.errors.iter().zip(&r.orders) {
                let _ = write!(out, ",{e:.17e},");
                if let Some(o) = o {
                    let _ = write!(out, "{o:.17e}");
                }
            }
            out.push_str("\r\n");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "preset {}, reference h = 1/{}, tau = {}\n{:>8}",
            self.preset,
            (1.0 / self.reference_h).round(),
            self.tau,
            "h"
        );
        for s in &TABLE_SPECS {
            let _ = write!(out, " {:>12} {:>6}", s.label(), "rate");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:>8}", format!("1/{}", (1.0 / r.h).round()));
            for (e, o) in r.errors.iter().zip(&r.orders) {
                let o = o.map(|o| format!("{o:.2}")).unwrap_or_else(|| "-".into());
                let _ = write!(out, " {e:>12.3e} {o:>6}");
            }
            out.push('\n');
        }
        out
    }

    /// Order of the last row, per quantity.
    pub fn final_orders(&self) -> Vec<Option<f64>> {
        self.rows.last().map(|r| r.orders.clone()).unwrap_or_default()
    }
}

/// Extra information from a convergence study.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceRuns {
    /// Traces of each level, then of the reference.
    pub traces: Vec<RunTrace>,
}

fn check_levels(levels: &[usize], reference: usize) -> Result<Vec<usize>, CliError> {
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return Err(CliError::Usage("need at least two distinct levels".into()));
    }
    for &l in &levels {
        if l == 0 {
            return Err(CliError::Usage("levels must be positive".into()));
        }
        if l >= reference {
            return Err(CliError::Usage(format!(
                "reference level {reference} must be strictly finer than level {l}"
            )));
        }
        let ratio = reference / l;
        if reference % l != 0 || !ratio.is_power_of_two() {
            return Err(CliError::Usage(format!(
                "level {l} is not nested in the reference {reference} by a power of two"
            )));
        }
    }
    Ok(levels)
}

/// Convergence study on the example-1 geometry with `n x n` cells per
/// subdomain for each level. Coarse solutions are kept in memory; the
/// reference run is compared step by step and never stored.
pub fn convergence_study(
    cfg: &ProblemConfig,
    time: &TimeSettings,
    picard: &PicardSettings,
    levels: &[usize],
    reference: usize,
    mut log: impl FnMut(&str),
) -> Result<(ConvergenceReport, ConvergenceRuns), CliError> {
    let levels = check_levels(levels, reference)?;
    let build = |n: usize| example1_discretization(n).map_err(|e| CliError::Usage(e.to_string()));
    let mut runs = ConvergenceRuns::default();
    let mut discs = Vec::new();
    let mut histories = Vec::new();
    for &n in &levels {
        log(&format!("level 1/{n}"));
        let d = build(n)?;
        let mut states = Vec::with_capacity(time.n_steps());
        let (_, trace) = time_loop(&d, cfg, time, picard, |k, s, _| {
            if k > 0 {
                states.push(s.clone());
            }
            Ok(())
        })?;
        runs.traces.push(trace);
        discs.push(d);
        histories.push(states);
    }
    log(&format!("reference 1/{reference}"));
    let fine = build(reference)?;
    let pairs: Vec<NestedPair> =
        discs.iter().map(|d| NestedPair::new(d, &fine)).collect::<Result<_, _>>().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut accs: Vec<ErrorAccumulator> =
        levels.iter().map(|_| ErrorAccumulator::new(&TABLE_SPECS).expect("table specs")).collect();
    let n_steps = time.n_steps();
    let (_, trace) = time_loop(&fine, cfg, time, picard, |k, s, _| {
        if k > 0 {
            for ((pair, acc), hist) in pairs.iter().zip(&mut accs).zip(&histories) {
                let (d, r) = pair.squared_differences(&hist[k - 1], s);
                acc.push(&d, &r);
            }
            if k % 10 == 0 || k == n_steps {
                log(&format!("  reference step {k}/{n_steps}"));
            }
        }
        Ok(())
    })?;
    runs.traces.push(trace);
    let table: Vec<(f64, Vec<f64>)> =
        levels.iter().zip(&accs).map(|(&n, acc)| (1.0 / n as f64, acc.finish())).collect();
    let report = ConvergenceReport {
        rows: convergence_rows(&table),
        reference_h: 1.0 / reference as f64,
        tau: time.tau,
        preset: "example1".into(),
    };
    Ok((report, runs))
}

pub fn cmd_convergence(config_path: &Path, levels: &[usize], reference: usize) -> Result<ConvergenceReport, CliError> {
    let doc = RunConfigDocument::load(config_path)?;
    if doc.geometry.preset != GeometryPreset::Example1 {
        return Err(CliError::Usage("convergence studies need the example1 geometry preset".into()));
    }
    let (report, _) = convergence_study(
        &doc.problem(),
        &doc.time_settings(),
        &doc.picard_settings(),
        levels,
        reference,
        |m| eprintln!("{m}"),
    )?;
    if doc.output.formats.contains(&OutputFormat::Csv) {
        let dir = &doc.output.directory;
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("convergence.csv");
        std::fs::write(&path, report.to_csv()).map_err(io_err(&path))?;
    }
    Ok(report)
}

/// Result of one named property check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Sampled monotonicity of the three laws with the example-1 parameters:
/// the uniform (A1) bound for Cross and Carreau, the (B1) bound with
/// `c = 0` for the power law.
pub fn monotonicity_checks(seed: u64, samples: usize) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for (name, m) in [
        ("cross A1", ViscosityModel::cross(10.0, 1.0, 1.0, 1.35)),
        ("carreau A1", ViscosityModel::carreau(10.0, 1.0, 1.0, 1.35)),
    ] {
        let r = check_monotonicity(&m, samples, seed, None);
        out.push(CheckOutcome {
            name: name.into(),
            passed: r.a1_holds() && r.a2_holds(),
            detail: format!("min quotient {:.3e}, far field {:.3e}", r.min_quotient_a1, r.far_min_quotient_a1),
        });
    }
    let r = check_monotonicity(&ViscosityModel::power_law(1.0, 1.35), samples, seed, Some(0.0));
    out.push(CheckOutcome {
        name: "power law B1".into(),
        passed: r.min_quotient_b1 > 0.0,
        detail: format!("min quotient {:.3e}", r.min_quotient_b1),
    });
    out
}

/// The zero-source decay problem: example-1 data with no driving
/// pressures, no slip friction and an initial Darcy pressure of 1 on
/// `[1.25, 1.75] x [0.25, 0.75]`.
pub fn energy_decay_config() -> ProblemConfig {
    let mut cfg = ProblemConfig::example1();
    cfg.p_in = 0.0;
    cfg.p_out = 0.0;
    cfg.alpha_bjs = 0.0;
    cfg.p_p0 = Some(Arc::new(|x, _| {
        if (1.25..=1.75).contains(&x[0]) && (0.25..=0.75).contains(&x[1]) {
            1.0
        } else {
            0.0
        }
    }));
    cfg
}

/// Energies `E^0, ..., E^N` of the decay problem on an `n x n` grid.
pub fn energy_decay_run(n: usize, tau: f64, steps: usize) -> Result<Vec<f64>, CliError> {
    let cfg = energy_decay_config();
    let d: Discretization = example1_discretization(n).map_err(|e| CliError::Usage(e.to_string()))?;
    let energy = crate::analysis::EnergyFunctional::new(&d, &cfg);
    let mut values = Vec::with_capacity(steps + 1);
    let time = TimeSettings { tau, t_end: tau * steps as f64 };
    time_loop(&d, &cfg, &time, &PicardSettings::default(), |_, s, _| {
        values.push(energy.evaluate(s));
        Ok(())
    })?;
    Ok(values)
}

/// Index of the first step where `E^n > E^{n-1} (1 + rel)`.
pub fn first_energy_increase(energies: &[f64], rel: f64) -> Option<usize> {
    energies.windows(2).position(|w| w[1] > w[0] * (1.0 + rel)).map(|i| i + 1)
}

pub fn cmd_check(seed: u64) -> Result<Vec<CheckOutcome>, CliError> {
    let mut outcomes = monotonicity_checks(seed, 100_000);
    let energies = energy_decay_run(20, 0.01, 100)?;
    let bad = first_energy_increase(&energies, 1e-12);
    outcomes.push(CheckOutcome {
        name: "energy decay".into(),
        passed: bad.is_none(),
        detail: match bad {
            None => format!("E decreases from {:.6e} to {:.6e}", energies[0], energies[energies.len() - 1]),
            Some(n) => format!("E increases at step {n}: {:.6e} -> {:.6e}", energies[n - 1], energies[n]),
        },
    });
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_guards() {
        assert!(check_levels(&[10, 20, 40], 160).is_ok());
        assert!(matches!(check_levels(&[10, 20, 40], 40), Err(CliError::Usage(_))));
        assert!(check_levels(&[10, 30], 120).is_err());
        assert!(check_levels(&[10], 160).is_err());
    }

    #[test]
    fn energy_increase_index() {
        assert_eq!(first_energy_increase(&[3.0, 2.0, 2.0, 1.0], 1e-12), None);
        assert_eq!(first_energy_increase(&[3.0, 2.0, 2.5], 1e-12), Some(2));
    }

    #[test]
    fn exit_codes() {
        let e = CliError::Config(ConfigError::Invalid { path: "/".into(), message: "x".into() });
        assert_eq!(e.exit_code(), 2);
        assert_eq!(CliError::Solver(SolverError::Singular { pivot: None }).exit_code(), 1);
    }
}
