use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use super::config::{RunConfig, ScanDocument, ScanSection};
use super::{exit, Failure};
use crate::dynamics::run_observed;
use crate::entropy::scan_phi_domain;
use crate::equilibrium::{distribution, solve_params, stationarity_residuals, EquilibriumParams};
use crate::error::Error;
use crate::gas::{moments, GasState, LevelGrid};
use crate::kernel::{build_kernel, CollisionKernel, RateSpec};
use crate::qmath::QIndex;
use crate::selfcheck;

/// Records between progress lines on stderr.
const PROGRESS_EVERY: usize = 50;

fn config_failure(e: Error) -> Failure {
    Failure::new(exit::CONFIG, e.to_string())
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(exit::RUNTIME, format!("cannot write {}: {e}", path.display()))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(path, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_failure(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_failure(path, e))
}

/// Output prefix: `--out`, else `[output] prefix`, else the config file stem.
fn prefix_for(config_path: &Path, configured: Option<&Path>, out: Option<&Path>) -> PathBuf {
    out.or(configured).map(Path::to_path_buf).unwrap_or_else(|| {
        PathBuf::from(config_path.file_stem().unwrap_or_else(|| "qkin".as_ref()))
    })
}

fn equilibrium_summary(
    grid: &LevelGrid<f64>,
    n: f64,
    e: f64,
    q: QIndex<f64>,
    config: &RunConfig,
    final_occ: &[f64],
) -> Value {
    let solved = solve_params(n, e, grid.degeneracies(), &grid.energies(), q, config.statistics)
        .and_then(|p| Ok((p, distribution(grid.degeneracies(), &grid.energies(), p, q, config.statistics)?)));
    match solved {
        Ok((p, occ)) => {
            let dev = occ.iter().zip(final_occ).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            json!({
                "q": q.value(),
                "alpha": p.alpha,
                "beta": p.beta,
                "occupations": occ,
                "max_abs_deviation": dev,
            })
        }
        Err(err) => json!({ "q": q.value(), "error": err.to_string() }),
    }
}

pub fn cmd_simulate(config_path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let config = RunConfig::load(config_path).map_err(config_failure)?;
    let q = config.q_index().map_err(config_failure)?;
    let grid = config.grid().map_err(config_failure)?;
    let initial = config.initial_state().map_err(config_failure)?;
    let kernel = config.kernel().map_err(config_failure)?;
    let integrator = config.integrator().map_err(config_failure)?;
    let prefix = prefix_for(config_path, config.output_prefix(), out);
    let csv_path = with_suffix(&prefix, ".trajectory.csv");
    let json_path = with_suffix(&prefix, ".summary.json");

    let start = Instant::now();
    let mut taken = 0usize;
    let (traj, failure) = run_observed(&initial, &kernel, q, &integrator, |r| {
        taken += 1;
        if taken % PROGRESS_EVERY == 1 {
            eprintln!(
                "t = {:.6e}  S_q = {:.12e}  dS/dt = {:.3e}  records = {taken}",
                r.t, r.entropy.s_q, r.entropy.rate_chain
            );
        }
    })
    .map_err(config_failure)?;
    let wall = start.elapsed().as_secs_f64();

    let mut w = create(&csv_path)?;
    traj.write_csv(&mut w).map_err(|e| io_failure(&csv_path, e))?;
    w.flush().map_err(|e| io_failure(&csv_path, e))?;

    let (n0, e0) = moments(&initial);
    let (n1, e1) = moments(&traj.final_state);
    let final_occ = traj.final_state.occupations();
    let last = traj.records.last().expect("trajectory has records");
    let stationarity = stationarity_residuals(&traj.final_state, &kernel, q)
        .map(|r| json!({ "res_product": r.res_product, "res_qsum": r.res_qsum }))
        .unwrap_or(Value::Null);
    let summary = json!({
        "q": config.q,
        "statistics": config.statistics.name(),
        "levels": grid.len(),
        "channels": kernel.channels().len(),
        "converged": traj.converged,
        "t_final": last.t,
        "steps": traj.steps,
        "rejections": traj.rejections,
        "records": traj.records.len(),
        "wall_time_s": wall,
        "initial": { "N": n0, "E": e0 },
        "final": {
            "N": n1,
            "E": e1,
            "S_q": last.entropy.s_q,
            "occupations": final_occ,
        },
        "drift": {
            "N_rel": (n1 - n0).abs() / n0,
            "E_rel": (e1 - e0).abs() / e0.abs().max(1.0),
        },
        "stationarity": stationarity,
        "classical_equilibrium": equilibrium_summary(&grid, n0, e0, QIndex::classical(), &config, &final_occ),
        "q_equilibrium": equilibrium_summary(&grid, n0, e0, q, &config, &final_occ),
        "error": failure.as_ref().map(|e| e.to_string()),
    });
    write_json(&json_path, &summary)?;
    eprintln!(
        "{} steps, {} records, converged = {}; wrote {} and {}",
        traj.steps,
        traj.records.len(),
        traj.converged,
        csv_path.display(),
        json_path.display()
    );
    match failure {
        None => Ok(()),
        Some(e) => Err(Failure::new(exit::RUNTIME, e.to_string())),
    }
}

/// Residuals need a channel set; rates do not matter, so a unit kernel stands
/// in when the config has none.
fn residual_kernel(config: &RunConfig, grid: &LevelGrid<f64>) -> Result<CollisionKernel<f64>, Failure> {
    if config.kernel.is_some() {
        config.kernel().map_err(config_failure)
    } else {
        build_kernel(grid.lattice(), RateSpec::Constant(1.0)).map_err(config_failure)
    }
}

pub fn equilibrium_document(config: &RunConfig) -> Result<Value, Failure> {
    let q = config.q_index().map_err(config_failure)?;
    let grid = config.grid().map_err(config_failure)?;
    let (n, e) = config.equilibrium_targets().map_err(config_failure)?;
    let runtime = |e: Error| Failure::new(exit::RUNTIME, e.to_string());
    let params: EquilibriumParams<f64> =
        solve_params(n, e, grid.degeneracies(), &grid.energies(), q, config.statistics).map_err(runtime)?;
    let occ = distribution(grid.degeneracies(), &grid.energies(), params, q, config.statistics).map_err(runtime)?;
    let kernel = residual_kernel(config, &grid)?;
    let (res_product, res_qsum) = match grid
        .state(&occ, config.statistics)
        .and_then(|s: GasState<f64>| stationarity_residuals(&s, &kernel, q))
    {
        Ok(r) => (json!(r.res_product), json!(r.res_qsum)),
        Err(err) => {
            eprintln!("stationarity residuals undefined: {err}");
            (Value::Null, Value::Null)
        }
    };
    Ok(json!({
        "q": config.q,
        "statistics": config.statistics.name(),
        "alpha": params.alpha,
        "beta": params.beta,
        "occupations": occ,
        "res_product": res_product,
        "res_qsum": res_qsum,
    }))
}

pub fn cmd_equilibrium(config_path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let config = RunConfig::load(config_path).map_err(config_failure)?;
    let doc = equilibrium_document(&config)?;
    let path = with_suffix(&prefix_for(config_path, config.output_prefix(), out), ".equilibrium.json");
    write_json(&path, &doc)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_scan_phi(scan: &ScanSection, prefix: &Path) -> Result<(), Failure> {
    let report = scan_phi_domain(scan.q_star, &scan.grid()).map_err(config_failure)?;
    let csv_path = with_suffix(prefix, ".csv");
    let json_path = with_suffix(prefix, ".json");
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    let csv_err = |e: csv::Error| io_failure(&csv_path, e);
    w.write_record(["x", "y", "z", "w", "phi"]).map_err(csv_err)?;
    for (cell, value) in &report.negative_cells {
        let row: Vec<String> = cell.iter().chain(std::iter::once(value)).map(|v| v.to_string()).collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_failure(&csv_path, e))?;
    write_json(
        &json_path,
        &json!({
            "q_star": report.q_star,
            "cells_total": report.cells_total,
            "cells_negative": report.cells_negative,
            "phi_min": report.phi_min,
            "argmin": report.argmin,
        }),
    )?;
    eprintln!(
        "{} of {} cells negative, phi_min = {:e} at {:?}; wrote {} and {}",
        report.cells_negative,
        report.cells_total,
        report.phi_min,
        report.argmin,
        csv_path.display(),
        json_path.display()
    );
    if scan.assert_positive && report.cells_negative > 0 {
        return Err(Failure::new(
            exit::NEGATIVE_CELLS,
            format!("{} negative phi cells at q* = {}", report.cells_negative, report.q_star),
        ));
    }
    Ok(())
}

pub fn load_scan(path: &Path) -> Result<ScanDocument, Failure> {
    let text = super::config::read_file(path).map_err(config_failure)?;
    ScanDocument::from_toml_str(&text).map_err(|e| Failure::new(exit::CONFIG, format!("{}: {e}", path.display())))
}

pub fn cmd_check() -> Result<(), Failure> {
    let (table, ok) = selfcheck::run_and_report();
    print!("{table}");
    if ok {
        Ok(())
    } else {
        Err(Failure::new(exit::CHECK_FAILED, "self-check failed"))
    }
}
