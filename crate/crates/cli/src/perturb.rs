//! Initial conditions: the stationary state itself, seeded perturbations of
//! it, or a snapshot file. All randomness is drawn from a counter-based
//! generator seeded by the scenario, so a seed fully determines the state.

use std::f64::consts::TAU;
use std::path::Path;

use baroflux_core::equilibrium::EquilibriumState;
use baroflux_core::geometry::BoundaryPartition;
use baroflux_core::solver::FlowState;
use baroflux_core::Problem;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialSpec, PerturbationKind, ScenarioConfig};
use crate::io::load_snapshot;

/// Build the initial state for a validated scenario.
pub fn build_initial(
    cfg: &ScenarioConfig,
    problem: &Problem,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
) -> Result<FlowState, String> {
    let base = FlowState::at_equilibrium(eq, problem);
    let state = match &cfg.initial {
        InitialSpec::Equilibrium => base,
        InitialSpec::File { path } => load_snapshot(Path::new(path), &problem.grid)
            .map_err(|e| format!("initial.path: {e}"))?,
        InitialSpec::Perturbation { perturbation, amplitude, floor } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            match perturbation {
                PerturbationKind::DensityBump => {
                    density_bump(base, problem, eq, partition, *amplitude, *floor, &mut rng)
                }
                PerturbationKind::VelocityShear => {
                    velocity_shear(base, problem, *amplitude, *floor, &mut rng)
                }
            }
        }
    };
    if state.rho.iter().any(|&r| !(r > 0.0)) {
        return Err(
            "initial density is not strictly positive everywhere; raise initial.floor".into()
        );
    }
    if !state.is_finite() {
        return Err("initial state contains non-finite values".into());
    }
    Ok(state)
}

/// Add a Gaussian bump to the density, clip at the floor, and restore the
/// stationary mass when the boundary is entirely characteristic (in the open
/// case the mass is not a constant of motion, so no renormalization). The
/// velocity is left at its stationary value.
fn density_bump(
    mut state: FlowState,
    problem: &Problem,
    eq: &EquilibriumState,
    partition: &BoundaryPartition,
    amplitude: f64,
    floor: f64,
    rng: &mut ChaCha8Rng,
) -> FlowState {
    let grid = &problem.grid;
    let vol_total: f64 = grid.extent[0] * if grid.dim == 2 { grid.extent[1] } else { 1.0 };
    let m0 = eq.total_mass(grid);
    let scale_rho = m0 / vol_total;

    // Center in the middle half of each axis so the bump stays interior;
    // width relative to the shortest extent.
    let mut center = [0.0f64; 2];
    for ax in 0..grid.dim {
        center[ax] = grid.extent[ax] * rng.gen_range(0.25..0.75);
    }
    let min_extent =
        if grid.dim == 2 { grid.extent[0].min(grid.extent[1]) } else { grid.extent[0] };
    let sigma = min_extent * rng.gen_range(0.08..0.2);

    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let k = grid.index(i, j);
            let c = grid.cell_center(i, j);
            let mut r2 = (c[0] - center[0]).powi(2);
            if grid.dim == 2 {
                r2 += (c[1] - center[1]).powi(2);
            }
            let bump = amplitude * scale_rho * (-r2 / (2.0 * sigma * sigma)).exp();
            state.rho[k] = (state.rho[k] + bump).max(floor);
        }
    }

    let closed = !partition.has_inflow()
        && partition.class_count(baroflux_core::geometry::BoundaryClass::Outflow) == 0;
    if closed {
        let mass = state.mass(grid);
        if mass > 0.0 {
            let factor = m0 / mass;
            for r in &mut state.rho {
                *r *= factor;
            }
        }
    }

    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let k = grid.index(i, j);
            let u = problem.motion.velocity(grid.cell_center(i, j));
            state.mx[k] = state.rho[k] * u[0];
            state.my[k] = state.rho[k] * u[1];
        }
    }
    state
}

/// Perturb the velocity around its stationary value. In 2D the perturbation
/// is the curl of a random-phase stream function, hence pointwise
/// divergence-free; in 1D a plain sine wave is used (no nonconstant
/// divergence-free field exists on an interval). The density stays at the
/// stationary profile, clipped at the floor.
fn velocity_shear(
    mut state: FlowState,
    problem: &Problem,
    amplitude: f64,
    floor: f64,
    rng: &mut ChaCha8Rng,
) -> FlowState {
    let grid = &problem.grid;
    let phase_x: f64 = rng.gen_range(0.0..TAU);
    let phase_y: f64 = rng.gen_range(0.0..TAU);
    let lx = grid.extent[0];
    let ly = if grid.dim == 2 { grid.extent[1] } else { 1.0 };

    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let k = grid.index(i, j);
            let c = grid.cell_center(i, j);
            if floor > 0.0 {
                state.rho[k] = state.rho[k].max(floor);
            }
            let rho = state.rho[k];
            let u = problem.motion.velocity(c);
            if grid.dim == 1 {
                let du = amplitude * (TAU * c[0] / lx + phase_x).sin();
                state.mx[k] = rho * (u[0] + du);
                state.my[k] = 0.0;
            } else {
                // psi = amplitude*(ly/TAU)*sin(TAU x/lx + px)*sin(TAU y/ly + py)
                let sx = (TAU * c[0] / lx + phase_x).sin();
                let cx = (TAU * c[0] / lx + phase_x).cos();
                let sy = (TAU * c[1] / ly + phase_y).sin();
                let cy = (TAU * c[1] / ly + phase_y).cos();
                let dux = amplitude * sx * cy;
                let duy = -amplitude * (ly / lx) * cx * sy;
                state.mx[k] = rho * (u[0] + dux);
                state.my[k] = rho * (u[1] + duy);
            }
        }
    }
    state
}
