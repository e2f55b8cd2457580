//! Runs a configured experiment and writes its artifacts.

use std::path::Path;
use std::time::Instant;

use kzlaser_core::collision::flux_field;
use kzlaser_core::equilibria::{fit_fermi_dirac, flux_budget, stationary_state};
use kzlaser_core::kinetics::{
    calibrate_collision_strength, evolve, reference_initial_condition, Calibration, KineticsRun,
};
use kzlaser_core::laser::{compare_pumping, run_lasing, LaserState, LasingRun};
use kzlaser_core::{BoundaryFluxes, CarrierDistribution, MaterialParams, SpectralGrid};
use serde_json::{json, Map, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliResult;
use crate::output::{
    create_dir, write_budget_csv, write_field_csv, write_json, write_spectra_csv, write_text, write_totals_csv,
};

pub const CONFIG_ECHO: &str = "config.json";
pub const META: &str = "meta.json";
pub const SPECTRA: &str = "spectra.csv";
pub const SERIES: &str = "series.csv";

/// Calibrates I against the relaxation of the reference state.
pub fn calibrate(config: &ExperimentConfig) -> CliResult<Calibration> {
    let grid = config.grid.grid();
    let n0 = reference_initial_condition(&grid)?;
    Ok(calibrate_collision_strength(
        config.calibration.target_fs,
        &n0,
        &grid,
        &config.params,
    )?)
}

/// Executes `config`, writing the config echo, `meta.json` and the CSV
/// outputs into `out_dir`. Returns the summary recorded in the meta file.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> CliResult<Value> {
    config.validate()?;
    create_dir(out_dir)?;
    write_text(&out_dir.join(CONFIG_ECHO), &config.to_json())?;
    let started = Instant::now();

    let grid = config.grid.grid();
    let mut params = config.params;
    let mut summary = Map::new();
    if config.calibration.apply || config.experiment == Experiment::Calibrate {
        let cal = calibrate(config)?;
        params.collision_strength = cal.collision_strength;
        summary.insert("calibration".into(), json!(cal));
    }
    summary.insert("collision_strength".into(), json!(params.collision_strength));

    match config.experiment {
        Experiment::Relax | Experiment::Steady => {
            let bc = config.bc.resolve(&grid, &params);
            let n0 = config.initial.distribution(&grid)?;
            let mut opts = config.run.kinetics_options();
            opts.stop_when_steady |= config.experiment == Experiment::Steady;
            let run = evolve(&n0, config.run.t_end, &grid, &params, &bc, &opts)?;
            write_spectra_csv(&run.snapshots, &grid, &params, &out_dir.join(SPECTRA))?;
            write_totals_csv(&run.totals_series, &out_dir.join(SERIES))?;
            kinetics_summary(&run, &grid, &params, &bc, &mut summary)?;
        }
        Experiment::LaseBroad | Experiment::LaseFlux => {
            let initial = laser_initial(config, &grid)?;
            let run = run_lasing(
                &config.pump(),
                config.run.t_end,
                &grid,
                &params,
                &initial,
                &config.run.laser_options(),
            )?;
            write_lasing(&run, &grid, &params, out_dir)?;
            summary.insert("lasing".into(), lasing_summary(&run, config));
            summary.insert("steady_power".into(), json!(run.steady_power()));
        }
        Experiment::Compare => {
            let initial = laser_initial(config, &grid)?;
            let opts = config.run.laser_options();
            let cmp = compare_pumping(config.broad_lambda(), config.run.t_end, &grid, &params, &initial, &opts)?;
            for (name, run) in [("broad", &cmp.broad), ("flux", &cmp.flux)] {
                let dir = out_dir.join(name);
                create_dir(&dir)?;
                write_lasing(run, &grid, &params, &dir)?;
                summary.insert(name.into(), lasing_summary(run, config));
            }
            summary.insert("q_inject".into(), json!(cmp.q_inject));
            summary.insert("reference_time".into(), json!(cmp.reference_time));
            summary.insert("power_ratio".into(), json!(cmp.power_ratio));
            summary.insert("ratio_target_met".into(), json!(cmp.power_ratio >= 3.0));
        }
        Experiment::Budget => {
            let b = config.budget.expect("validated");
            let budget = flux_budget(b.omega_l, b.omega_0, b.omega_r, b.q0)?;
            write_budget_csv(&budget, &out_dir.join(SERIES))?;
            summary.insert("budget".into(), json!(budget));
        }
        Experiment::Calibrate => {}
    }

    log::info!(
        "{:?} finished in {:.2} s; artifacts in {}",
        config.experiment,
        started.elapsed().as_secs_f64(),
        out_dir.display()
    );
    let summary = Value::Object(summary);
    let meta = json!({
        "experiment": config.experiment,
        "config": config,
        "summary": summary,
    });
    write_json(&out_dir.join(META), &meta)?;
    Ok(summary)
}

fn laser_initial(config: &ExperimentConfig, grid: &SpectralGrid) -> CliResult<LaserState> {
    let n = config.initial.distribution(grid)?;
    Ok(LaserState::new(config.run.initial_field(), n))
}

fn write_lasing(run: &LasingRun, grid: &SpectralGrid, params: &MaterialParams, dir: &Path) -> CliResult<()> {
    write_spectra_csv(&run.snapshots, grid, params, &dir.join(SPECTRA))?;
    write_field_csv(&run.series, &dir.join(SERIES))
}

fn lasing_summary(run: &LasingRun, config: &ExperimentConfig) -> Value {
    json!({
        "pump": run.pump,
        "outcome": run.outcome,
        "steady_power": run.steady_power(),
        "trailing_power": run.trailing_power(config.run.trailing_window),
        "switch_on_time": run.switch_on_time,
        "final_injection": run.final_injection,
    })
}

/// Mean of the interior Q and P of a state, with their largest deviation.
fn measured_fluxes(n: &CarrierDistribution, grid: &SpectralGrid, params: &MaterialParams) -> CliResult<Value> {
    let flux = flux_field(n.values(), grid, params)?;
    let interior = 1..grid.m - 1;
    let count = interior.len() as f64;
    let mean = |v: &[f64]| v[interior.clone()].iter().sum::<f64>() / count;
    let spread = |v: &[f64], m: f64| v[interior.clone()].iter().fold(0.0f64, |acc, x| acc.max((x - m).abs()));
    let (q, p) = (mean(&flux.q), mean(&flux.p));
    Ok(json!({
        "q": q,
        "p": p,
        "q_spread": spread(&flux.q, q),
        "p_spread": spread(&flux.p, p),
    }))
}

fn kinetics_summary(
    run: &KineticsRun,
    grid: &SpectralGrid,
    params: &MaterialParams,
    bc: &BoundaryFluxes,
    summary: &mut Map<String, Value>,
) -> CliResult<()> {
    let end = run.final_state();
    let (carriers, energy) = run.relative_drift();
    summary.insert("fd_fit".into(), json!(fit_fermi_dirac(end.values(), grid)?));
    summary.insert("measured_fluxes".into(), measured_fluxes(end, grid, params)?);
    summary.insert("imposed_fluxes".into(), json!(bc));
    summary.insert("time_to_steady".into(), json!(run.steady_time));
    summary.insert(
        "relative_drift".into(),
        json!({ "carriers": carriers, "energy": energy }),
    );
    summary.insert("steps".into(), json!(run.steps));
    summary.insert("final_time".into(), json!(run.snapshots.last().map(|s| s.t)));
    let uniform = bc.q_left == bc.q_right && bc.p_left == bc.p_right;
    if uniform && run.is_steady() {
        let n = end.values();
        let stationary = stationary_state(bc.q_left, bc.p_left, n[0], n[grid.m - 1], grid, params)?;
        summary.insert("stationary_gap".into(), json!(end.max_abs_diff(&stationary)));
    }
    Ok(())
}
