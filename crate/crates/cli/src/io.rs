//! File formats: the scalar time series, field snapshots (also readable as
//! initial conditions), and sweep tables. All floats are written with 17
//! significant digits so a read-back is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use baroflux_core::diagnostics::DiagnosticsRecord;
use baroflux_core::geometry::Grid;
use baroflux_core::solver::FlowState;

pub const SERIES_HEADER: &str = "t,mass,E_rel,dissipation_rate,outflow_term,mass_flux_in,mass_flux_out,err_rho_Lgamma,err_mom,dt_used";

#[derive(Debug)]
pub enum IoError {
    Io(std::io::Error),
    Format(String),
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "{e}"),
            IoError::Format(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e)
    }
}

pub fn series_to_string(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 200 + 128);
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t,
            r.mass,
            r.e_rel,
            r.dissipation_rate,
            r.outflow_term,
            r.mass_flux_in,
            r.mass_flux_out,
            r.err_rho_lgamma,
            r.err_mom,
            r.dt_used,
        );
    }
    out
}

pub fn write_series(path: &Path, records: &[DiagnosticsRecord]) -> Result<(), IoError> {
    fs::write(path, series_to_string(records))?;
    Ok(())
}

pub fn snapshot_to_string(grid: &Grid, state: &FlowState) -> String {
    let mut out = String::with_capacity(grid.n_cells() * 100 + 32);
    if grid.dim == 1 {
        out.push_str("x,rho,mx\n");
        for i in 0..grid.cells[0] {
            let k = grid.index(i, 0);
            let x = grid.cell_center(i, 0)[0];
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", x, state.rho[k], state.mx[k]);
        }
    } else {
        out.push_str("x,y,rho,mx,my\n");
        for j in 0..grid.cells[1] {
            for i in 0..grid.cells[0] {
                let k = grid.index(i, j);
                let c = grid.cell_center(i, j);
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    c[0], c[1], state.rho[k], state.mx[k], state.my[k]
                );
            }
        }
    }
    out
}

pub fn write_snapshot(path: &Path, grid: &Grid, state: &FlowState) -> Result<(), IoError> {
    fs::write(path, snapshot_to_string(grid, state))?;
    Ok(())
}

/// Parse a snapshot against the given grid; coordinates must match the cell
/// centers, so a file cannot silently be applied to the wrong grid.
pub fn load_snapshot(path: &Path, grid: &Grid) -> Result<FlowState, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| IoError::Format("empty snapshot".into()))?;
    let want = if grid.dim == 1 { "x,rho,mx" } else { "x,y,rho,mx,my" };
    if header.trim() != want {
        return Err(IoError::Format(format!(
            "snapshot header `{header}` does not match the grid (expected `{want}`)"
        )));
    }
    let n = grid.n_cells();
    let mut state = FlowState { t: 0.0, rho: vec![0.0; n], mx: vec![0.0; n], my: vec![0.0; n] };
    let mut count = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if count >= n {
            return Err(IoError::Format(format!("snapshot has more rows than the grid ({n})")));
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| IoError::Format(format!("snapshot line {}: {e}", lineno + 2)))?;
        let expect = if grid.dim == 1 { 3 } else { 5 };
        if fields.len() != expect {
            return Err(IoError::Format(format!(
                "snapshot line {}: expected {expect} columns, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let (i, j) = (count % grid.cells[0], count / grid.cells[0]);
        let center = grid.cell_center(i, j);
        let coord_ok = if grid.dim == 1 {
            (fields[0] - center[0]).abs() <= 1e-12 * (1.0 + center[0].abs())
        } else {
            (fields[0] - center[0]).abs() <= 1e-12 * (1.0 + center[0].abs())
                && (fields[1] - center[1]).abs() <= 1e-12 * (1.0 + center[1].abs())
        };
        if !coord_ok {
            return Err(IoError::Format(format!(
                "snapshot line {}: coordinates do not match the grid",
                lineno + 2
            )));
        }
        let k = grid.index(i, j);
        if grid.dim == 1 {
            state.rho[k] = fields[1];
            state.mx[k] = fields[2];
        } else {
            state.rho[k] = fields[2];
            state.mx[k] = fields[3];
            state.my[k] = fields[4];
        }
        count += 1;
    }
    if count != n {
        return Err(IoError::Format(format!("snapshot has {count} rows, the grid has {n} cells")));
    }
    Ok(state)
}

/// One line per refinement level of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub level: usize,
    pub cells_x: usize,
    pub cells_y: usize,
    pub e_rel_initial: f64,
    pub e_rel_final: f64,
    pub err_rho_lgamma: f64,
    pub err_mom: f64,
    pub energy_residual: f64,
    pub mass_residual: f64,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(
        "level,cells_x,cells_y,E_rel_initial,E_rel_final,err_rho_Lgamma,err_mom,energy_residual,mass_residual\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.level,
            r.cells_x,
            r.cells_y,
            r.e_rel_initial,
            r.e_rel_final,
            r.err_rho_lgamma,
            r.err_mom,
            r.energy_residual,
            r.mass_residual,
        );
    }
    fs::write(path, out)?;
    Ok(())
}
