//! CSV and JSON artifacts. Floats are written in shortest round-trip form.

use std::fs;
use std::path::Path;

use kzlaser_core::collision::flux_field;
use kzlaser_core::equilibria::FluxBudget;
use kzlaser_core::kinetics::{Snapshot, TotalsSample};
use kzlaser_core::laser::FieldSample;
use kzlaser_core::model::jacobian_on_grid;
use kzlaser_core::{MaterialParams, SpectralGrid};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const SPECTRA_HEADER: [&str; 7] = ["t_fs", "omega_meV", "n", "N", "K", "Q", "P"];
pub const FIELD_HEADER: [&str; 6] = ["t_fs", "t_relax_units", "re_e", "im_e", "abs_e_sq", "power"];
pub const TOTALS_HEADER: [&str; 3] = ["t_fs", "carriers", "energy"];
pub const BUDGET_HEADER: [&str; 8] = ["omega_l", "omega_0", "omega_r", "q0", "q_l", "q_r", "p_l", "p_r"];

/// Time unit of the field series: the collision relaxation time (fs).
pub const RELAX_UNIT_FS: f64 = 100.0;

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> CliResult<()> {
    let wrap = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row per (snapshot, node): occupation, spectral density and fluxes.
pub fn write_spectra_csv(
    snapshots: &[Snapshot],
    grid: &SpectralGrid,
    params: &MaterialParams,
    path: &Path,
) -> CliResult<()> {
    let jac = jacobian_on_grid(grid, params)?;
    let nodes = grid.nodes();
    let mut rows = Vec::with_capacity(snapshots.len() * grid.m);
    for snap in snapshots {
        let n = snap.n.values();
        let flux = flux_field(n, grid, params)?;
        for i in 0..grid.m {
            rows.push((snap.t, nodes[i], n[i], jac[i] * n[i], flux.k[i], flux.q[i], flux.p[i]));
        }
    }
    write_rows(path, &SPECTRA_HEADER, rows)
}

pub fn write_field_csv(series: &[FieldSample], path: &Path) -> CliResult<()> {
    let rows = series
        .iter()
        .map(|s| (s.t, s.t / RELAX_UNIT_FS, s.e.re, s.e.im, s.abs_e_sq, s.power));
    write_rows(path, &FIELD_HEADER, rows)
}

pub fn write_totals_csv(series: &[TotalsSample], path: &Path) -> CliResult<()> {
    write_rows(path, &TOTALS_HEADER, series.iter().map(|s| (s.t, s.carriers, s.energy)))
}

pub fn write_budget_csv(b: &FluxBudget, path: &Path) -> CliResult<()> {
    let row = (b.omega_l, b.omega_0, b.omega_r, b.q0, b.q_l, b.q_r, b.p_l, b.p_r);
    write_rows(path, &BUDGET_HEADER, [row])
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
    write_text(path, &text)
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
