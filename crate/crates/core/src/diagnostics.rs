//! Observables of a flow state relative to the stationary state: relative
//! energy, viscous dissipation, boundary energy flux, convergence metrics,
//! and discrete budget residuals evaluated over recorded trajectories.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[cfg(all(not(feature = "std"), feature = "libm"))]
use crate::math::FloatExt;

use crate::equilibrium::EquilibriumState;
use crate::geometry::{integrate_cells, BoundaryClass, BoundaryPartition};
use crate::solver::{apply_boundary, FlowState, GhostField, SolverParams, StepFluxes};
use crate::Problem;

/// Cutoffs below which density and momentum count as vacuum when evaluating
/// the relative energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyThresholds {
    pub rho_tiny: f64,
    pub m_tiny: f64,
}

impl Default for EnergyThresholds {
    fn default() -> Self {
        EnergyThresholds { rho_tiny: 1e-12, m_tiny: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiagnosticsError {
    /// Vanishing density carrying nonvanishing momentum.
    InfiniteEnergyState { cell: [usize; 2] },
    /// A record window whose instants are not equally spaced.
    NonEquidistantRecords,
    BadWindow(&'static str),
    BadLevel(&'static str),
    /// Trajectory snapshots do not line up with the records.
    MismatchedSnapshots,
    BadState(&'static str),
}

impl fmt::Display for DiagnosticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticsError::InfiniteEnergyState { cell } => write!(
                f,
                "infinite energy state: vanishing density with nonzero momentum at cell ({}, {})",
                cell[0], cell[1]
            ),
            DiagnosticsError::NonEquidistantRecords => {
                write!(f, "records are not equally spaced in time")
            }
            DiagnosticsError::BadWindow(msg) => write!(f, "bad record window: {msg}"),
            DiagnosticsError::BadLevel(msg) => write!(f, "{msg}"),
            DiagnosticsError::MismatchedSnapshots => {
                write!(f, "snapshots do not match the record instants")
            }
            DiagnosticsError::BadState(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for DiagnosticsError {}

/// One row of the scalar time series, plus the exact cumulative boundary
/// mass transfers used by the budget residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub e_rel: f64,
    pub dissipation_rate: f64,
    pub outflow_term: f64,
    pub mass_flux_in: f64,
    pub mass_flux_out: f64,
    pub err_rho_lgamma: f64,
    pub err_mom: f64,
    pub dt_used: f64,
    pub cum_mass_in: f64,
    pub cum_mass_out: f64,
}

/// Pointwise relative energy: kinetic part against the rigid field plus the
/// Bregman gap of the pressure potential against the stationary density.
///
/// Vacuum conventions: a cell with tiny density and tiny momentum carries no
/// kinetic energy; tiny density under nonvanishing momentum has no finite
/// energy and is an error.
pub fn relative_energy_density(
    rho: f64,
    m: [f64; 2],
    rho_e: f64,
    u_e: [f64; 2],
    head_minus_ce: f64,
    law: &crate::eos::PressureLaw,
    thresholds: &EnergyThresholds,
) -> Result<f64, DiagnosticsError> {
    let kinetic = if rho <= thresholds.rho_tiny {
        let mag = (m[0] * m[0] + m[1] * m[1]).sqrt();
        if mag <= thresholds.m_tiny {
            0.0
        } else {
            return Err(DiagnosticsError::InfiniteEnergyState { cell: [0, 0] });
        }
    } else {
        // 0.5 rho |u - u_E|^2 written as a sum of squares so cancellation
        // near equilibrium cannot produce negative values.
        let wx = m[0] / rho - u_e[0];
        let wy = m[1] / rho - u_e[1];
        0.5 * rho * (wx * wx + wy * wy)
    };
    let gap = law
        .bregman(rho, rho_e, head_minus_ce)
        .map_err(|_| DiagnosticsError::BadState("negative density in energy evaluation"))?;
    Ok(kinetic + gap)
}

/// Relative energy of the state against the stationary one.
pub fn relative_energy(
    state: &FlowState,
    eq: &EquilibriumState,
    problem: &Problem,
    thresholds: &EnergyThresholds,
) -> Result<f64, DiagnosticsError> {
    let grid = &problem.grid;
    let mut density = vec![0.0; grid.n_cells()];
    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let k = grid.index(i, j);
            let x = grid.cell_center(i, j);
            let u_e = problem.motion.velocity(x);
            let head = problem.effective_potential(x) - eq.c_e;
            density[k] = relative_energy_density(
                state.rho[k],
                [state.mx[k], state.my[k]],
                eq.rho[k],
                u_e,
                head,
                &problem.law,
                thresholds,
            )
            .map_err(|e| match e {
                DiagnosticsError::InfiniteEnergyState { .. } => {
                    DiagnosticsError::InfiniteEnergyState { cell: [i, j] }
                }
                other => other,
            })?;
        }
    }
    Ok(integrate_cells(grid, &density))
}

/// Dissipation density per cell from cell-centered velocity gradients of
/// the ghost extension, for u itself or for u - u_E.
fn dissipation_field(
    gh: &GhostField,
    problem: &Problem,
    params: &SolverParams,
    relative: bool,
) -> Vec<f64> {
    let grid = &problem.grid;
    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    let h = grid.spacing();
    let (mut wx, mut wy);
    let (ux, uy) = if relative {
        wx = gh.ux.clone();
        wy = gh.uy.clone();
        for j in -1..=(ny as i64) {
            for i in -1..=(nx as i64) {
                let e = gh.at(i, j);
                let center = [(i as f64 + 0.5) * h[0], (j as f64 + 0.5) * h[1]];
                let ue = problem.motion.velocity(center);
                wx[e] -= ue[0];
                wy[e] -= ue[1];
            }
        }
        (&wx[..], &wy[..])
    } else {
        (&gh.ux[..], &gh.uy[..])
    };

    let mut density = vec![0.0; grid.n_cells()];
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.index(i, j);
            let (il, ir) = (gh.at(i as i64 - 1, j as i64), gh.at(i as i64 + 1, j as i64));
            let duxdx = (ux[ir] - ux[il]) / (2.0 * h[0]);
            if grid.dim == 1 {
                density[k] = params.lambda * duxdx * duxdx;
                continue;
            }
            let (jd, ju) = (gh.at(i as i64, j as i64 - 1), gh.at(i as i64, j as i64 + 1));
            let duydx = (uy[ir] - uy[il]) / (2.0 * h[0]);
            let duxdy = (ux[ju] - ux[jd]) / (2.0 * h[1]);
            let duydy = (uy[ju] - uy[jd]) / (2.0 * h[1]);
            let div = duxdx + duydy;
            let dxx = duxdx - 0.5 * div;
            let dyy = duydy - 0.5 * div;
            let dxy = 0.5 * (duxdy + duydx);
            let dev2 = dxx * dxx + dyy * dyy + 2.0 * dxy * dxy;
            density[k] = 2.0 * params.mu * dev2 + params.lambda * div * div;
        }
    }
    density
}

/// Pointwise dissipation density 2 mu |dev D(u - u_E)|^2 + lambda (div u)^2
/// per cell.
pub fn dissipation_density(
    state: &FlowState,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    problem: &Problem,
    params: &SolverParams,
) -> Vec<f64> {
    let gh = apply_boundary(state, eq, partition, problem);
    dissipation_field(&gh, problem, params, true)
}

/// Integrated viscous dissipation 2 mu |dev D(w)|^2 + lambda (div w)^2 with
/// w = u - u_E. Because the rigid field is divergence-free with vanishing
/// deformation, the same expression evaluated on u itself must agree; the
/// two are computed and checked against each other on every call.
pub fn dissipation_rate(
    state: &FlowState,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    problem: &Problem,
    params: &SolverParams,
) -> f64 {
    let gh = apply_boundary(state, eq, partition, problem);
    let on_w = integrate_cells(&problem.grid, &dissipation_field(&gh, problem, params, true));
    let on_u = integrate_cells(&problem.grid, &dissipation_field(&gh, problem, params, false));
    assert!(
        (on_w - on_u).abs() <= 1e-10 * (1.0 + on_w.abs()),
        "dissipation must not depend on subtracting the rigid field: {on_w} vs {on_u}"
    );
    on_w
}

/// Relative gap between the two equivalent dissipation evaluations, for
/// external verification.
pub fn dissipation_identity_gap(
    state: &FlowState,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    problem: &Problem,
    params: &SolverParams,
) -> f64 {
    let gh = apply_boundary(state, eq, partition, problem);
    let on_w = integrate_cells(&problem.grid, &dissipation_field(&gh, problem, params, true));
    let on_u = integrate_cells(&problem.grid, &dissipation_field(&gh, problem, params, false));
    (on_w - on_u).abs() / (1.0 + on_w.abs())
}

/// Boundary energy flux through the outflow part: the Bregman gap of the
/// transported (upwind, interior) density against the stationary trace,
/// weighted by the exact outward normal velocity. Nonnegative by convexity.
pub fn outflow_term(
    state: &FlowState,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    problem: &Problem,
) -> f64 {
    let grid = &problem.grid;
    let mut total = 0.0;
    for (f, face) in partition.faces.iter().enumerate() {
        if face.class != BoundaryClass::Outflow {
            continue;
        }
        let rho_up = state.rho[grid.index(face.cell[0], face.cell[1])];
        let head = problem.effective_potential(face.center) - eq.c_e;
        let gap = problem
            .law
            .bregman(rho_up, eq.boundary_rho[f], head)
            .expect("state densities are nonnegative");
        total += gap * face.un * face.measure;
    }
    total
}

/// Distances to equilibrium: density in L^gamma, momentum defect m - rho u_E
/// in L^{2 gamma / (gamma + 1)}, with the metric exponent of the law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceMetrics {
    pub err_rho_lgamma: f64,
    pub err_mom: f64,
}

pub fn convergence_metrics(
    state: &FlowState,
    eq: &EquilibriumState,
    problem: &Problem,
) -> ConvergenceMetrics {
    let grid = &problem.grid;
    let g = problem.law.metric_gamma();
    let p = 2.0 * g / (g + 1.0);
    let mut sum_rho = 0.0;
    let mut sum_mom = 0.0;
    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let k = grid.index(i, j);
            let u_e = problem.motion.velocity(grid.cell_center(i, j));
            let dx = state.mx[k] - state.rho[k] * u_e[0];
            let dy = state.my[k] - state.rho[k] * u_e[1];
            sum_rho += (state.rho[k] - eq.rho[k]).abs().powf(g);
            sum_mom += (dx * dx + dy * dy).sqrt().powf(p);
        }
    }
    let vol = grid.cell_volume();
    ConvergenceMetrics {
        err_rho_lgamma: (sum_rho * vol).powf(1.0 / g),
        err_mom: (sum_mom * vol).powf(1.0 / p),
    }
}

/// Assemble one diagnostics record for the state. The instantaneous
/// boundary rates and the cumulative transfers come from the integrator.
#[allow(clippy::too_many_arguments)]
pub fn assemble_record(
    state: &FlowState,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    problem: &Problem,
    params: &SolverParams,
    thresholds: &EnergyThresholds,
    dt_used: f64,
    rate_in: f64,
    rate_out: f64,
    cum: StepFluxes,
) -> Result<DiagnosticsRecord, DiagnosticsError> {
    let metrics = convergence_metrics(state, eq, problem);
    Ok(DiagnosticsRecord {
        t: state.t,
        mass: state.mass(&problem.grid),
        e_rel: relative_energy(state, eq, problem, thresholds)?,
        dissipation_rate: dissipation_rate(state, eq, partition, problem, params),
        outflow_term: outflow_term(state, eq, partition, problem),
        mass_flux_in: rate_in,
        mass_flux_out: rate_out,
        err_rho_lgamma: metrics.err_rho_lgamma,
        err_mom: metrics.err_mom,
        dt_used,
        cum_mass_in: cum.mass_in,
        cum_mass_out: cum.mass_out,
    })
}

fn check_window(records: &[DiagnosticsRecord], i1: usize, i2: usize) -> Result<(), DiagnosticsError> {
    if i2 >= records.len() {
        return Err(DiagnosticsError::BadWindow("record index out of range"));
    }
    if i1 >= i2 {
        return Err(DiagnosticsError::BadWindow("window must contain at least two records"));
    }
    let span = records[i2].t - records[i1].t;
    let mean = span / (i2 - i1) as f64;
    for k in i1..i2 {
        let dt = records[k + 1].t - records[k].t;
        if (dt - mean).abs() > 1e-9 * (mean.abs() + records[i2].t.abs()) {
            return Err(DiagnosticsError::NonEquidistantRecords);
        }
    }
    Ok(())
}

fn trapezoid<F: Fn(usize) -> f64>(records: &[DiagnosticsRecord], i1: usize, i2: usize, f: F) -> f64 {
    let mut acc = 0.0;
    for k in i1..i2 {
        let dt = records[k + 1].t - records[k].t;
        acc += 0.5 * dt * (f(k) + f(k + 1));
    }
    acc
}

/// Denominator guard for the normalized energy residual.
const ENERGY_DEN_EPS: f64 = 1e-12;

/// Discrete energy budget over a record window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyResidual {
    /// E(t2) - E(t1) + integral of (dissipation + outflow term); at most
    /// quadrature error for a faithful trajectory, clearly positive for a
    /// tampered one.
    pub r: f64,
    /// Positive part of r relative to the starting energy.
    pub normalized: f64,
}

pub fn energy_inequality_residual(
    records: &[DiagnosticsRecord],
    i1: usize,
    i2: usize,
) -> Result<EnergyResidual, DiagnosticsError> {
    check_window(records, i1, i2)?;
    let sinks = trapezoid(records, i1, i2, |k| {
        records[k].dissipation_rate + records[k].outflow_term
    });
    let r = records[i2].e_rel - records[i1].e_rel + sinks;
    Ok(EnergyResidual { r, normalized: r.max(0.0) / (records[i1].e_rel + ENERGY_DEN_EPS) })
}

/// Mass budget over a record window, using the exact cumulative boundary
/// transfers carried by the records; zero to round-off for any run.
pub fn mass_balance_residual(
    records: &[DiagnosticsRecord],
    i1: usize,
    i2: usize,
) -> Result<f64, DiagnosticsError> {
    check_window(records, i1, i2)?;
    let dm = records[i2].mass - records[i1].mass;
    let din = records[i2].cum_mass_in - records[i1].cum_mass_in;
    let dout = records[i2].cum_mass_out - records[i1].cum_mass_out;
    Ok(dm + dout - din)
}

/// Truncation profile used by the renormalized mass budget: identity below
/// `k_level`, a C^1 quadratic blend on [k, 2k], constant 3k/2 above.
/// Returns (b, b').
pub fn renormalization_profile(k_level: f64, rho: f64) -> (f64, f64) {
    if rho <= k_level {
        (rho, 1.0)
    } else if rho >= 2.0 * k_level {
        (1.5 * k_level, 0.0)
    } else {
        let s = (rho - k_level) / k_level;
        (k_level + k_level * (s - 0.5 * s * s), 1.0 - s)
    }
}

/// Boundary flux of b(rho) - rho with the same donor convention as the mass
/// flux: the interior density leaves, the prescribed trace enters on inflow.
fn truncated_flux_correction(
    state: &FlowState,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    problem: &Problem,
    k_level: f64,
) -> f64 {
    let grid = &problem.grid;
    let mut total = 0.0;
    for (f, face) in partition.faces.iter().enumerate() {
        let rho_donor = if face.un < 0.0 && face.class == BoundaryClass::Inflow {
            eq.boundary_rho[f]
        } else {
            state.rho[grid.index(face.cell[0], face.cell[1])]
        };
        let (b, _) = renormalization_profile(k_level, rho_donor);
        total += (b - rho_donor) * face.un * face.measure;
    }
    total
}

/// Volume term (rho b'(rho) - b(rho)) div u integrated over the domain,
/// with the cell-centered divergence of the ghost-extended velocity.
fn truncated_volume_term(
    state: &FlowState,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    problem: &Problem,
    k_level: f64,
) -> f64 {
    let grid = &problem.grid;
    let gh = apply_boundary(state, eq, partition, problem);
    let h = grid.spacing();
    let mut density = vec![0.0; grid.n_cells()];
    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let k = grid.index(i, j);
            let (il, ir) = (gh.at(i as i64 - 1, j as i64), gh.at(i as i64 + 1, j as i64));
            let mut div = (gh.ux[ir] - gh.ux[il]) / (2.0 * h[0]);
            if grid.dim == 2 {
                let (jd, ju) = (gh.at(i as i64, j as i64 - 1), gh.at(i as i64, j as i64 + 1));
                div += (gh.uy[ju] - gh.uy[jd]) / (2.0 * h[1]);
            }
            let rho = state.rho[k];
            let (b, bp) = renormalization_profile(k_level, rho);
            density[k] = (rho * bp - b) * div;
        }
    }
    integrate_cells(grid, &density)
}

/// Budget of the truncated density b(rho) over a record window: change of
/// the truncated mass, plus the exact boundary mass transfer, plus the
/// quadrature of the truncation corrections. For k_level above the maximal
/// density this reduces identically to the plain mass balance.
#[allow(clippy::too_many_arguments)]
pub fn renormalized_continuity_residual(
    problem: &Problem,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    records: &[DiagnosticsRecord],
    snapshots: &[FlowState],
    i1: usize,
    i2: usize,
    k_level: f64,
) -> Result<f64, DiagnosticsError> {
    if !(k_level > 0.0) || !k_level.is_finite() {
        return Err(DiagnosticsError::BadLevel("renormalization level must be positive and finite"));
    }
    check_window(records, i1, i2)?;
    if snapshots.len() != records.len() {
        return Err(DiagnosticsError::MismatchedSnapshots);
    }
    for (rec, snap) in records.iter().zip(snapshots) {
        if (rec.t - snap.t).abs() > 1e-12 * (1.0 + rec.t.abs()) {
            return Err(DiagnosticsError::MismatchedSnapshots);
        }
    }
    let grid = &problem.grid;
    let truncated_mass = |s: &FlowState| {
        let field: Vec<f64> =
            s.rho.iter().map(|&r| renormalization_profile(k_level, r).0).collect();
        integrate_cells(grid, &field)
    };
    let db = truncated_mass(&snapshots[i2]) - truncated_mass(&snapshots[i1]);
    let din = records[i2].cum_mass_in - records[i1].cum_mass_in;
    let dout = records[i2].cum_mass_out - records[i1].cum_mass_out;
    let correction = trapezoid(records, i1, i2, |k| {
        truncated_flux_correction(&snapshots[k], eq, partition, problem, k_level)
    });
    let volume = trapezoid(records, i1, i2, |k| {
        truncated_volume_term(&snapshots[k], eq, partition, problem, k_level)
    });
    Ok(db + (dout - din) + correction + volume)
}
