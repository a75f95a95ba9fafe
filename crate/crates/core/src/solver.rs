//! Conservative finite-volume discretization on the collocated grid:
//! donor-cell upwind convection, centered viscous stress and pressure
//! gradient, gravity source, explicit two-stage strong-stability-preserving
//! time stepping under acoustic and viscous step-size restrictions.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[cfg(all(not(feature = "std"), feature = "libm"))]
use crate::math::FloatExt;

use crate::diagnostics::{self, DiagnosticsRecord, EnergyThresholds};
use crate::eos::PressureLaw;
use crate::equilibrium::EquilibriumState;
use crate::geometry::{BoundaryClass, BoundaryPartition, Grid, Side};
use crate::Problem;

/// Cell-centered density and momentum at one time instant. The second
/// momentum component is kept (zero) in 1D so field layouts never branch.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub rho: Vec<f64>,
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
}

impl FlowState {
    /// The stationary state as a flow state: rho = rho_E, m = rho_E u_E.
    pub fn at_equilibrium(eq: &EquilibriumState, problem: &Problem) -> FlowState {
        let grid = &problem.grid;
        let n = grid.n_cells();
        let mut mx = vec![0.0; n];
        let mut my = vec![0.0; n];
        for j in 0..grid.cells[1] {
            for i in 0..grid.cells[0] {
                let k = grid.index(i, j);
                let u = problem.motion.velocity(grid.cell_center(i, j));
                mx[k] = eq.rho[k] * u[0];
                my[k] = eq.rho[k] * u[1];
            }
        }
        FlowState { t: 0.0, rho: eq.rho.clone(), mx, my }
    }

    pub fn mass(&self, grid: &Grid) -> f64 {
        crate::geometry::integrate_cells(grid, &self.rho)
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(&self.mx).chain(&self.my).all(|v| v.is_finite())
    }
}

/// Viscosities and step-size control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Shear viscosity, > 0.
    pub mu: f64,
    /// Bulk coefficient, >= 0; in 1D it is the only viscosity, so > 0 there.
    pub lambda: f64,
    /// Courant number in (0, 1).
    pub cfl: f64,
    /// Density level treated as loss of positivity (a failure, not a clamp).
    pub rho_floor_guard: f64,
}

impl SolverParams {
    pub fn new(mu: f64, lambda: f64) -> Self {
        SolverParams { mu, lambda, cfl: 0.4, rho_floor_guard: 1e-10 }
    }

    pub fn validate(&self, dim: usize) -> Result<(), SolverError> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(SolverError::BadParams("shear viscosity mu must be > 0"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(SolverError::BadParams("bulk coefficient lambda must be >= 0"));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(SolverError::BadParams("cfl must lie in (0, 1)"));
        }
        if !(self.rho_floor_guard > 0.0) {
            return Err(SolverError::BadParams("rho_floor_guard must be > 0"));
        }
        // The deviatoric stress vanishes identically in 1D, so the bulk
        // term carries all the damping there.
        if dim == 1 && !(self.lambda > 0.0) {
            return Err(SolverError::BadParams("effective 1D viscosity must be positive"));
        }
        Ok(())
    }
}

/// A cell hit the positivity guard: the run cannot continue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityFailure {
    pub cell: [usize; 2],
    pub t: f64,
    pub rho: f64,
    pub suggested_cfl: f64,
}

impl fmt::Display for PositivityFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "density fell to {} at cell ({}, {}) at t = {}; retry with cfl <= {}",
            self.rho, self.cell[0], self.cell[1], self.t, self.suggested_cfl
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverError {
    BadParams(&'static str),
    NonFiniteState,
    Positivity(PositivityFailure),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::BadParams(msg) => write!(f, "{msg}"),
            SolverError::NonFiniteState => write!(f, "state contains non-finite values"),
            SolverError::Positivity(p) => write!(f, "{p}"),
        }
    }
}

impl core::error::Error for SolverError {}

/// Interior fields extended by one layer of ghost cells on every side
/// (corners included), holding density and velocity.
#[derive(Debug, Clone)]
pub struct GhostField {
    pub nx: usize,
    pub ny: usize,
    pub rho: Vec<f64>,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl GhostField {
    fn zeros(grid: &Grid) -> GhostField {
        let n = (grid.cells[0] + 2) * (grid.cells[1] + 2);
        GhostField {
            nx: grid.cells[0],
            ny: grid.cells[1],
            rho: vec![0.0; n],
            ux: vec![0.0; n],
            uy: vec![0.0; n],
        }
    }

    /// Extended index; i in [-1, nx], j in [-1, ny].
    #[inline]
    pub fn at(&self, i: i64, j: i64) -> usize {
        debug_assert!(i >= -1 && i <= self.nx as i64 && j >= -1 && j <= self.ny as i64);
        ((j + 1) as usize) * (self.nx + 2) + (i + 1) as usize
    }
}

/// Boundary data gathered per side for ghost filling: class and stationary
/// density per transverse index.
#[derive(Debug, Clone)]
struct SideData {
    class: Vec<BoundaryClass>,
    rho_e: Vec<f64>,
}

fn collect_sides(part: &BoundaryPartition, eq: &EquilibriumState, grid: &Grid) -> [SideData; 4] {
    let empty = || SideData { class: Vec::new(), rho_e: Vec::new() };
    let mut sides = [empty(), empty(), empty(), empty()];
    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    sides[0].class.resize(ny, BoundaryClass::Characteristic);
    sides[0].rho_e.resize(ny, 0.0);
    sides[1].class.resize(ny, BoundaryClass::Characteristic);
    sides[1].rho_e.resize(ny, 0.0);
    if grid.dim == 2 {
        for s in 2..4 {
            sides[s].class.resize(nx, BoundaryClass::Characteristic);
            sides[s].rho_e.resize(nx, 0.0);
        }
    }
    for (face, &re) in part.faces.iter().zip(&eq.boundary_rho) {
        let s = match (face.axis, face.side) {
            (0, Side::Lower) => 0,
            (0, Side::Upper) => 1,
            (1, Side::Lower) => 2,
            _ => 3,
        };
        let t = if face.axis == 0 { face.cell[1] } else { face.cell[0] };
        sides[s].class[t] = face.class;
        sides[s].rho_e[t] = re;
    }
    sides
}

fn fill_ghosts(
    rho: &[f64],
    mx: &[f64],
    my: &[f64],
    problem: &Problem,
    eq: &EquilibriumState,
    sides: &[SideData; 4],
    out: &mut GhostField,
) {
    let grid = &problem.grid;
    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    let h = grid.spacing();
    let motion = &problem.motion;
    let formula =
        |x: [f64; 2]| problem.law.potential_prime_inverse(problem.effective_potential(x) - eq.c_e);

    for j in 0..ny {
        for i in 0..nx {
            let k = grid.index(i, j);
            let e = out.at(i as i64, j as i64);
            let r = rho[k];
            out.rho[e] = r;
            out.ux[e] = mx[k] / r;
            out.uy[e] = my[k] / r;
        }
    }

    // Side ghosts: velocity by affine reflection through the boundary face
    // (the face-interpolated velocity then equals u_E there exactly);
    // density prescribed on inflow, copied otherwise.
    for j in 0..ny {
        let y = (j as f64 + 0.5) * h[1];
        for (side, gi, ii, xb) in
            [(0usize, -1i64, 0i64, 0.0), (1, nx as i64, nx as i64 - 1, grid.extent[0])]
        {
            let eint = out.at(ii, j as i64);
            let eg = out.at(gi, j as i64);
            let ue = motion.velocity([xb, y]);
            out.ux[eg] = 2.0 * ue[0] - out.ux[eint];
            out.uy[eg] = 2.0 * ue[1] - out.uy[eint];
            out.rho[eg] = match sides[side].class[j] {
                BoundaryClass::Inflow => sides[side].rho_e[j],
                _ => out.rho[eint],
            };
        }
    }
    if grid.dim == 2 {
        for i in 0..nx {
            let x = (i as f64 + 0.5) * h[0];
            for (side, gj, jj, yb) in
                [(2usize, -1i64, 0i64, 0.0), (3, ny as i64, ny as i64 - 1, grid.extent[1])]
            {
                let eint = out.at(i as i64, jj);
                let eg = out.at(i as i64, gj);
                let ue = motion.velocity([x, yb]);
                out.ux[eg] = 2.0 * ue[0] - out.ux[eint];
                out.uy[eg] = 2.0 * ue[1] - out.uy[eint];
                out.rho[eg] = match sides[side].class[i] {
                    BoundaryClass::Inflow => sides[side].rho_e[i],
                    _ => out.rho[eint],
                };
            }
        }
        // Corner ghosts: apply the y-side rule to the already-filled x-ghost
        // columns, extending u_E and the stationary-density formula past the
        // domain; the y class is borrowed from the nearest interior column.
        for (gi, i_near) in [(-1i64, 0usize), (nx as i64, nx - 1)] {
            let xg = if gi < 0 { -0.5 * h[0] } else { grid.extent[0] + 0.5 * h[0] };
            for (side, gj, jj, yb) in
                [(2usize, -1i64, 0i64, 0.0), (3, ny as i64, ny as i64 - 1, grid.extent[1])]
            {
                let eint = out.at(gi, jj);
                let eg = out.at(gi, gj);
                let ue = motion.velocity([xg, yb]);
                out.ux[eg] = 2.0 * ue[0] - out.ux[eint];
                out.uy[eg] = 2.0 * ue[1] - out.uy[eint];
                out.rho[eg] = match sides[side].class[i_near] {
                    BoundaryClass::Inflow => formula([xg, yb]),
                    _ => out.rho[eint],
                };
            }
        }
    } else {
        // 1D: duplicate the single row into the transverse ghost rows so
        // stray reads stay finite; no y terms are ever evaluated.
        for i in -1..=(nx as i64) {
            let src = out.at(i, 0);
            let (r, ux, uy) = (out.rho[src], out.ux[src], out.uy[src]);
            for gj in [-1i64, 1] {
                let eg = out.at(i, gj);
                out.rho[eg] = r;
                out.ux[eg] = ux;
                out.uy[eg] = uy;
            }
        }
    }
}

/// Fill ghost cells for a state: reflected velocity so faces carry exactly
/// u_E, prescribed density on inflow, copied density elsewhere.
pub fn apply_boundary(
    state: &FlowState,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    problem: &Problem,
) -> GhostField {
    let sides = collect_sides(partition, eq, &problem.grid);
    let mut out = GhostField::zeros(&problem.grid);
    fill_ghosts(&state.rho, &state.mx, &state.my, problem, eq, &sides, &mut out);
    out
}

#[inline]
fn p_of(law: &PressureLaw, rho: f64) -> f64 {
    match *law {
        PressureLaw::GammaLaw { a, gamma } => {
            if gamma == 2.0 {
                a * rho * rho
            } else {
                a * rho.powf(gamma)
            }
        }
        PressureLaw::Isothermal { a } => a * rho,
    }
}

#[inline]
fn c2_of(law: &PressureLaw, rho: f64) -> f64 {
    match *law {
        PressureLaw::GammaLaw { a, gamma } => {
            if gamma == 2.0 {
                2.0 * a * rho
            } else {
                a * gamma * rho.powf(gamma - 1.0)
            }
        }
        PressureLaw::Isothermal { a } => a,
    }
}

/// Donor-cell fluxes through one x-face: (mass, x-momentum, y-momentum).
#[inline]
fn conv_flux_x(gh: &GhostField, uhat: f64, fi: i64, j: i64) -> (f64, f64, f64) {
    let up = if uhat >= 0.0 { gh.at(fi - 1, j) } else { gh.at(fi, j) };
    let fr = uhat * gh.rho[up];
    (fr, fr * gh.ux[up], fr * gh.uy[up])
}

#[inline]
fn conv_flux_y(gh: &GhostField, vhat: f64, i: i64, fj: i64) -> (f64, f64, f64) {
    let up = if vhat >= 0.0 { gh.at(i, fj - 1) } else { gh.at(i, fj) };
    let fr = vhat * gh.rho[up];
    (fr, fr * gh.ux[up], fr * gh.uy[up])
}

/// Viscous stress column S . e_x at an x-face: (S_xx, S_yx).
#[inline]
fn visc_flux_x(
    gh: &GhostField,
    params: &SolverParams,
    dim: usize,
    h: [f64; 2],
    fi: i64,
    j: i64,
) -> (f64, f64) {
    let l = gh.at(fi - 1, j);
    let r = gh.at(fi, j);
    let duxdx = (gh.ux[r] - gh.ux[l]) / h[0];
    if dim == 1 {
        // The deviatoric part vanishes in one dimension; only lambda acts.
        return (params.lambda * duxdx, 0.0);
    }
    let duydx = (gh.uy[r] - gh.uy[l]) / h[0];
    let (lu, ru) = (gh.at(fi - 1, j + 1), gh.at(fi, j + 1));
    let (ld, rd) = (gh.at(fi - 1, j - 1), gh.at(fi, j - 1));
    let duxdy = (gh.ux[lu] + gh.ux[ru] - gh.ux[ld] - gh.ux[rd]) / (4.0 * h[1]);
    let duydy = (gh.uy[lu] + gh.uy[ru] - gh.uy[ld] - gh.uy[rd]) / (4.0 * h[1]);
    let div = duxdx + duydy;
    let sxx = 2.0 * params.mu * (duxdx - 0.5 * div) + params.lambda * div;
    let syx = params.mu * (duydx + duxdy);
    (sxx, syx)
}

/// Viscous stress column S . e_y at a y-face: (S_xy, S_yy).
#[inline]
fn visc_flux_y(
    gh: &GhostField,
    params: &SolverParams,
    h: [f64; 2],
    i: i64,
    fj: i64,
) -> (f64, f64) {
    let d = gh.at(i, fj - 1);
    let u = gh.at(i, fj);
    let duxdy = (gh.ux[u] - gh.ux[d]) / h[1];
    let duydy = (gh.uy[u] - gh.uy[d]) / h[1];
    let (dl, ul) = (gh.at(i - 1, fj - 1), gh.at(i - 1, fj));
    let (dr, ur) = (gh.at(i + 1, fj - 1), gh.at(i + 1, fj));
    let duxdx = (gh.ux[dr] + gh.ux[ur] - gh.ux[dl] - gh.ux[ul]) / (4.0 * h[0]);
    let duydx = (gh.uy[dr] + gh.uy[ur] - gh.uy[dl] - gh.uy[ul]) / (4.0 * h[0]);
    let div = duxdx + duydy;
    let sxy = params.mu * (duxdy + duydx);
    let syy = 2.0 * params.mu * (duydy - 0.5 * div) + params.lambda * div;
    (sxy, syy)
}

/// Materialized convective face fluxes, plus instantaneous boundary mass
/// rates split by direction of transport.
#[derive(Debug, Clone)]
pub struct ConvectiveFluxes {
    /// Mass flux through x-faces, (nx+1) * ny, x running fastest.
    pub mass_x: Vec<f64>,
    pub mom_x: Vec<[f64; 2]>,
    /// Mass flux through y-faces, nx * (ny+1); empty in 1D.
    pub mass_y: Vec<f64>,
    pub mom_y: Vec<[f64; 2]>,
    /// Mass entering the domain per unit time (>= 0).
    pub rate_in: f64,
    /// Mass leaving the domain per unit time (>= 0).
    pub rate_out: f64,
}

/// Donor-cell upwind fluxes for the ghost-extended state. Interior faces
/// average the adjacent cell velocities; boundary faces use the exact
/// normal velocity of the rigid field.
pub fn convective_fluxes(gh: &GhostField, problem: &Problem) -> ConvectiveFluxes {
    let grid = &problem.grid;
    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    let h = grid.spacing();
    let mut mass_x = vec![0.0; (nx + 1) * ny];
    let mut mom_x = vec![[0.0; 2]; (nx + 1) * ny];
    let (mut mass_y, mut mom_y) = if grid.dim == 2 {
        (vec![0.0; nx * (ny + 1)], vec![[0.0; 2]; nx * (ny + 1)])
    } else {
        (Vec::new(), Vec::new())
    };
    let mut rate_in = 0.0;
    let mut rate_out = 0.0;

    for j in 0..ny {
        let y = (j as f64 + 0.5) * h[1];
        for fi in 0..=nx {
            let boundary = fi == 0 || fi == nx;
            let uhat = if boundary {
                problem.motion.velocity([fi as f64 * h[0], y])[0]
            } else {
                0.5 * (gh.ux[gh.at(fi as i64 - 1, j as i64)] + gh.ux[gh.at(fi as i64, j as i64)])
            };
            let (fr, fmx, fmy) = conv_flux_x(gh, uhat, fi as i64, j as i64);
            mass_x[j * (nx + 1) + fi] = fr;
            mom_x[j * (nx + 1) + fi] = [fmx, fmy];
            if boundary {
                let outflux = fr * h[1] * if fi == 0 { -1.0 } else { 1.0 };
                if outflux >= 0.0 {
                    rate_out += outflux;
                } else {
                    rate_in -= outflux;
                }
            }
        }
    }
    if grid.dim == 2 {
        for fj in 0..=ny {
            let boundary = fj == 0 || fj == ny;
            for i in 0..nx {
                let x = (i as f64 + 0.5) * h[0];
                let vhat = if boundary {
                    problem.motion.velocity([x, fj as f64 * h[1]])[1]
                } else {
                    0.5 * (gh.uy[gh.at(i as i64, fj as i64 - 1)] + gh.uy[gh.at(i as i64, fj as i64)])
                };
                let (fr, fmx, fmy) = conv_flux_y(gh, vhat, i as i64, fj as i64);
                mass_y[fj * nx + i] = fr;
                mom_y[fj * nx + i] = [fmx, fmy];
                if boundary {
                    let outflux = fr * h[0] * if fj == 0 { -1.0 } else { 1.0 };
                    if outflux >= 0.0 {
                        rate_out += outflux;
                    } else {
                        rate_in -= outflux;
                    }
                }
            }
        }
    }
    ConvectiveFluxes { mass_x, mom_x, mass_y, mom_y, rate_in, rate_out }
}

/// Force density div S - grad p per cell, as (x, y) pairs.
pub fn viscous_and_pressure(
    gh: &GhostField,
    problem: &Problem,
    params: &SolverParams,
) -> Vec<[f64; 2]> {
    let grid = &problem.grid;
    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    let h = grid.spacing();
    let mut force = vec![[0.0; 2]; grid.n_cells()];

    for j in 0..ny {
        for fi in 0..=nx {
            let (sxx, syx) = visc_flux_x(gh, params, grid.dim, h, fi as i64, j as i64);
            if fi > 0 {
                let k = grid.index(fi - 1, j);
                force[k][0] += sxx / h[0];
                force[k][1] += syx / h[0];
            }
            if fi < nx {
                let k = grid.index(fi, j);
                force[k][0] -= sxx / h[0];
                force[k][1] -= syx / h[0];
            }
        }
    }
    if grid.dim == 2 {
        for fj in 0..=ny {
            for i in 0..nx {
                let (sxy, syy) = visc_flux_y(gh, params, h, i as i64, fj as i64);
                if fj > 0 {
                    let k = grid.index(i, fj - 1);
                    force[k][0] += sxy / h[1];
                    force[k][1] += syy / h[1];
                }
                if fj < ny {
                    let k = grid.index(i, fj);
                    force[k][0] -= sxy / h[1];
                    force[k][1] -= syy / h[1];
                }
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.index(i, j);
            let (il, ir) = (gh.at(i as i64 - 1, j as i64), gh.at(i as i64 + 1, j as i64));
            force[k][0] -=
                (p_of(&problem.law, gh.rho[ir]) - p_of(&problem.law, gh.rho[il])) / (2.0 * h[0]);
            if grid.dim == 2 {
                let (jd, ju) = (gh.at(i as i64, j as i64 - 1), gh.at(i as i64, j as i64 + 1));
                force[k][1] -=
                    (p_of(&problem.law, gh.rho[ju]) - p_of(&problem.law, gh.rho[jd])) / (2.0 * h[1]);
            }
        }
    }
    force
}

/// Largest stable explicit step for the state: the acoustic bound
/// h/(|u| + c) and the viscous bound h^2 rho / (2 d (2 mu + lambda)),
/// scaled by the Courant number.
pub fn stable_dt(
    state: &FlowState,
    params: &SolverParams,
    law: &PressureLaw,
    grid: &Grid,
) -> Result<f64, SolverError> {
    if !state.is_finite() {
        return Err(SolverError::NonFiniteState);
    }
    let h = grid.min_spacing();
    let d = grid.dim as f64;
    let visc_coef = 2.0 * d * (2.0 * params.mu + params.lambda);
    let mut dt = f64::INFINITY;
    for k in 0..state.rho.len() {
        let rho = state.rho[k];
        let c = c2_of(law, rho).sqrt();
        let umax = (state.mx[k] / rho).abs().max((state.my[k] / rho).abs());
        let speed = umax + c;
        if speed > 0.0 {
            dt = dt.min(h / speed);
        }
        dt = dt.min(h * h * rho / visc_coef);
    }
    Ok(params.cfl * dt)
}

/// Exact mass carried across the boundary during one step, split by
/// direction; both entries are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepFluxes {
    pub mass_in: f64,
    pub mass_out: f64,
}

/// Reusable time stepper: owns scratch buffers and precomputed per-cell
/// source gradients so a step allocates nothing.
pub struct Stepper<'a> {
    problem: &'a Problem,
    eq: &'a EquilibriumState,
    params: SolverParams,
    sides: [SideData; 4],
    /// grad G at cell centers.
    src_g: Vec<[f64; 2]>,
    gh: GhostField,
    k1: [Vec<f64>; 3],
    k2: [Vec<f64>; 3],
    stage: [Vec<f64>; 3],
}

impl<'a> Stepper<'a> {
    pub fn new(
        problem: &'a Problem,
        eq: &'a EquilibriumState,
        partition: &BoundaryPartition,
        params: SolverParams,
    ) -> Result<Self, SolverError> {
        params.validate(problem.grid.dim)?;
        let grid = &problem.grid;
        let n = grid.n_cells();
        let mut src_g = vec![[0.0; 2]; n];
        for j in 0..grid.cells[1] {
            for i in 0..grid.cells[0] {
                src_g[grid.index(i, j)] = problem.potential.gradient(grid.cell_center(i, j));
            }
        }
        let zeros = || [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        Ok(Stepper {
            problem,
            eq,
            params,
            sides: collect_sides(partition, eq, grid),
            src_g,
            gh: GhostField::zeros(grid),
            k1: zeros(),
            k2: zeros(),
            stage: zeros(),
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// Right-hand side of the semi-discrete system for the given fields;
    /// returns the instantaneous boundary mass rates (in, out).
    fn rhs(
        gh: &GhostField,
        problem: &Problem,
        params: &SolverParams,
        src_g: &[[f64; 2]],
        drho: &mut [f64],
        dmx: &mut [f64],
        dmy: &mut [f64],
    ) -> (f64, f64) {
        let grid = &problem.grid;
        let (nx, ny) = (grid.cells[0], grid.cells[1]);
        let h = grid.spacing();
        drho.fill(0.0);
        dmx.fill(0.0);
        dmy.fill(0.0);
        let mut rate_in = 0.0;
        let mut rate_out = 0.0;

        for j in 0..ny {
            let y = (j as f64 + 0.5) * h[1];
            for fi in 0..=nx {
                let boundary = fi == 0 || fi == nx;
                let uhat = if boundary {
                    problem.motion.velocity([fi as f64 * h[0], y])[0]
                } else {
                    0.5 * (gh.ux[gh.at(fi as i64 - 1, j as i64)]
                        + gh.ux[gh.at(fi as i64, j as i64)])
                };
                let (fr, fmx, fmy) = conv_flux_x(gh, uhat, fi as i64, j as i64);
                let (sxx, syx) = visc_flux_x(gh, params, grid.dim, h, fi as i64, j as i64);
                let phix = fmx - sxx;
                let phiy = fmy - syx;
                if fi > 0 {
                    let k = grid.index(fi - 1, j);
                    drho[k] -= fr / h[0];
                    dmx[k] -= phix / h[0];
                    dmy[k] -= phiy / h[0];
                }
                if fi < nx {
                    let k = grid.index(fi, j);
                    drho[k] += fr / h[0];
                    dmx[k] += phix / h[0];
                    dmy[k] += phiy / h[0];
                }
                if boundary {
                    let outflux = fr * h[1] * if fi == 0 { -1.0 } else { 1.0 };
                    if outflux >= 0.0 {
                        rate_out += outflux;
                    } else {
                        rate_in -= outflux;
                    }
                }
            }
        }
        if grid.dim == 2 {
            for fj in 0..=ny {
                let boundary = fj == 0 || fj == ny;
                for i in 0..nx {
                    let x = (i as f64 + 0.5) * h[0];
                    let vhat = if boundary {
                        problem.motion.velocity([x, fj as f64 * h[1]])[1]
                    } else {
                        0.5 * (gh.uy[gh.at(i as i64, fj as i64 - 1)]
                            + gh.uy[gh.at(i as i64, fj as i64)])
                    };
                    let (fr, fmx, fmy) = conv_flux_y(gh, vhat, i as i64, fj as i64);
                    let (sxy, syy) = visc_flux_y(gh, params, h, i as i64, fj as i64);
                    let phix = fmx - sxy;
                    let phiy = fmy - syy;
                    if fj > 0 {
                        let k = grid.index(i, fj - 1);
                        drho[k] -= fr / h[1];
                        dmx[k] -= phix / h[1];
                        dmy[k] -= phiy / h[1];
                    }
                    if fj < ny {
                        let k = grid.index(i, fj);
                        drho[k] += fr / h[1];
                        dmx[k] += phix / h[1];
                        dmy[k] += phiy / h[1];
                    }
                    if boundary {
                        let outflux = fr * h[0] * if fj == 0 { -1.0 } else { 1.0 };
                        if outflux >= 0.0 {
                            rate_out += outflux;
                        } else {
                            rate_in -= outflux;
                        }
                    }
                }
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                let k = grid.index(i, j);
                let rho_c = gh.rho[gh.at(i as i64, j as i64)];
                let (il, ir) = (gh.at(i as i64 - 1, j as i64), gh.at(i as i64 + 1, j as i64));
                dmx[k] -= (p_of(&problem.law, gh.rho[ir]) - p_of(&problem.law, gh.rho[il]))
                    / (2.0 * h[0]);
                dmx[k] += rho_c * src_g[k][0];
                if grid.dim == 2 {
                    let (jd, ju) = (gh.at(i as i64, j as i64 - 1), gh.at(i as i64, j as i64 + 1));
                    dmy[k] -= (p_of(&problem.law, gh.rho[ju]) - p_of(&problem.law, gh.rho[jd]))
                        / (2.0 * h[1]);
                    dmy[k] += rho_c * src_g[k][1];
                }
            }
        }
        (rate_in, rate_out)
    }

    fn check_positive(
        &self,
        rho: &[f64],
        t: f64,
    ) -> Result<(), PositivityFailure> {
        let nx = self.problem.grid.cells[0];
        for (k, &r) in rho.iter().enumerate() {
            if r <= self.params.rho_floor_guard {
                return Err(PositivityFailure {
                    cell: [k % nx, k / nx],
                    t,
                    rho: r,
                    suggested_cfl: 0.5 * self.params.cfl,
                });
            }
        }
        Ok(())
    }

    /// Advance the state in place by one two-stage step of size `dt`.
    pub fn step(&mut self, state: &mut FlowState, dt: f64) -> Result<StepFluxes, PositivityFailure> {
        let n = state.rho.len();
        // stage 1
        fill_ghosts(&state.rho, &state.mx, &state.my, self.problem, self.eq, &self.sides, &mut self.gh);
        let [k1r, k1x, k1y] = &mut self.k1;
        let (in1, out1) =
            Self::rhs(&self.gh, self.problem, &self.params, &self.src_g, k1r, k1x, k1y);
        for k in 0..n {
            self.stage[0][k] = state.rho[k] + dt * self.k1[0][k];
            self.stage[1][k] = state.mx[k] + dt * self.k1[1][k];
            self.stage[2][k] = state.my[k] + dt * self.k1[2][k];
        }
        self.check_positive(&self.stage[0], state.t + dt)?;
        // stage 2
        fill_ghosts(&self.stage[0], &self.stage[1], &self.stage[2], self.problem, self.eq, &self.sides, &mut self.gh);
        let [k2r, k2x, k2y] = &mut self.k2;
        let (in2, out2) =
            Self::rhs(&self.gh, self.problem, &self.params, &self.src_g, k2r, k2x, k2y);
        for k in 0..n {
            state.rho[k] += 0.5 * dt * (self.k1[0][k] + self.k2[0][k]);
            state.mx[k] += 0.5 * dt * (self.k1[1][k] + self.k2[1][k]);
            state.my[k] += 0.5 * dt * (self.k1[2][k] + self.k2[2][k]);
        }
        self.check_positive(&state.rho, state.t + dt)?;
        state.t += dt;
        Ok(StepFluxes {
            mass_in: 0.5 * dt * (in1 + in2),
            mass_out: 0.5 * dt * (out1 + out2),
        })
    }

    pub fn stable_dt(&self, state: &FlowState) -> Result<f64, SolverError> {
        stable_dt(state, &self.params, &self.problem.law, &self.problem.grid)
    }

    /// Instantaneous boundary mass rates (in, out) for the state.
    pub fn boundary_rates(&mut self, state: &FlowState) -> (f64, f64) {
        fill_ghosts(&state.rho, &state.mx, &state.my, self.problem, self.eq, &self.sides, &mut self.gh);
        let fluxes = convective_fluxes(&self.gh, self.problem);
        (fluxes.rate_in, fluxes.rate_out)
    }
}

/// Single two-stage step as a standalone call; builds a fresh stepper, so
/// prefer [`Stepper`] in loops.
pub fn step(
    state: &mut FlowState,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    problem: &Problem,
    params: SolverParams,
    dt: f64,
) -> Result<StepFluxes, SolverError> {
    let mut stepper = Stepper::new(problem, eq, partition, params)?;
    stepper.step(state, dt).map_err(SolverError::Positivity)
}

/// Whether full field snapshots are retained alongside the records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotPolicy {
    None,
    EveryRecord,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub t_end: f64,
    pub record_interval: f64,
    pub snapshots: SnapshotPolicy,
}

/// A completed (or truncated) run: equidistant diagnostic records, optional
/// field snapshots at the same instants, and the final state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<FlowState>,
    pub final_state: FlowState,
    pub truncated: bool,
}

/// Integrate from t = 0 to t_end, recomputing the stable step each time and
/// landing exactly on the record instants. `should_stop` is polled every
/// step; a true return flags the trajectory as truncated and stops cleanly.
pub fn run(
    problem: &Problem,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    params: SolverParams,
    mut state: FlowState,
    cfg: &RunConfig,
    should_stop: &mut dyn FnMut() -> bool,
) -> Result<Trajectory, SolverError> {
    if !(cfg.t_end >= 0.0) || !cfg.t_end.is_finite() {
        return Err(SolverError::BadParams("t_end must be finite and >= 0"));
    }
    if cfg.t_end > 0.0 && !(cfg.record_interval > 0.0) {
        return Err(SolverError::BadParams("record_interval must be > 0"));
    }
    if !state.is_finite() {
        return Err(SolverError::NonFiniteState);
    }
    let mut stepper = Stepper::new(problem, eq, partition, params)?;
    stepper.check_positive(&state.rho, 0.0).map_err(SolverError::Positivity)?;
    state.t = 0.0;

    let thresholds = EnergyThresholds::default();
    let n_rec = if cfg.t_end == 0.0 {
        0
    } else {
        (cfg.t_end / cfg.record_interval).round().max(1.0) as usize
    };

    let mut records = Vec::with_capacity(n_rec + 1);
    let mut snapshots = Vec::new();
    let mut cum = StepFluxes::default();
    let mut last_dt = 0.0;
    let mut truncated = false;

    let push_record = |state: &FlowState,
                           stepper: &mut Stepper,
                           cum: StepFluxes,
                           dt_used: f64,
                           records: &mut Vec<DiagnosticsRecord>,
                           snapshots: &mut Vec<FlowState>| {
        let (rate_in, rate_out) = stepper.boundary_rates(state);
        let rec = diagnostics::assemble_record(
            state, eq, partition, problem, &params, &thresholds, dt_used, rate_in, rate_out, cum,
        )
        .expect("positivity guard keeps the state inside the energy domain");
        records.push(rec);
        if cfg.snapshots == SnapshotPolicy::EveryRecord {
            snapshots.push(state.clone());
        }
    };

    push_record(&state, &mut stepper, cum, last_dt, &mut records, &mut snapshots);

    'outer: for k in 1..=n_rec {
        let t_target = cfg.t_end * (k as f64 / n_rec as f64);
        while state.t < t_target - 1e-12 * cfg.t_end {
            if should_stop() {
                truncated = true;
                break 'outer;
            }
            let dt_max = stepper.stable_dt(&state)?;
            let dt = dt_max.min(t_target - state.t);
            if !(dt > 0.0) {
                break;
            }
            let fluxes = stepper.step(&mut state, dt).map_err(SolverError::Positivity)?;
            cum.mass_in += fluxes.mass_in;
            cum.mass_out += fluxes.mass_out;
            last_dt = dt;
        }
        state.t = t_target;
        push_record(&state, &mut stepper, cum, last_dt, &mut records, &mut snapshots);
    }

    Ok(Trajectory { records, snapshots, final_state: state, truncated })
}
