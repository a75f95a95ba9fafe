//! Stationary density fields: assemble rho_E pointwise from the effective
//! potential and a constant, recover that constant from inflow data or from
//! the total mass, and validate the structural hypotheses (connected
//! positivity set, positive inflow trace) behind convergence to equilibrium.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{integrate_cells, BoundaryClass, BoundaryPartition, Grid};
use crate::Problem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquilibriumError {
    /// The constant can only be read off inflow faces if there are any.
    NoInflowBoundary,
    /// Prescribed inflow density must be strictly positive.
    NonpositiveInflowDensity { face_center: [f64; 2], value: f64 },
    /// Face-wise constants disagree beyond tolerance.
    IncompatibleInflowData { max_deviation: f64, tol: f64 },
    /// Target mass must be positive.
    NonpositiveTargetMass(f64),
    /// Bracket expansion failed; the mass map did not straddle the target.
    BracketNotFound,
    /// Inflow data array does not match the number of inflow faces.
    WrongDataLength { expected: usize, got: usize },
}

impl fmt::Display for EquilibriumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EquilibriumError::NoInflowBoundary => {
                write!(f, "no inflow faces: the constant must come from the total mass")
            }
            EquilibriumError::NonpositiveInflowDensity { face_center, value } => write!(
                f,
                "inflow density must be positive, got {value} at ({}, {})",
                face_center[0], face_center[1]
            ),
            EquilibriumError::IncompatibleInflowData { max_deviation, tol } => write!(
                f,
                "boundary data not equilibrium-compatible: face constants spread {max_deviation} exceeds {tol}"
            ),
            EquilibriumError::NonpositiveTargetMass(m) => {
                write!(f, "target mass must be positive, got {m}")
            }
            EquilibriumError::BracketNotFound => {
                write!(f, "mass bracket not found within 60 doublings")
            }
            EquilibriumError::WrongDataLength { expected, got } => {
                write!(f, "expected {expected} inflow densities, got {got}")
            }
        }
    }
}

impl core::error::Error for EquilibriumError {}

/// How the constant of a stationary state was determined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquilibriumSource {
    /// Supplied directly.
    Constant,
    /// Recovered from inflow boundary densities.
    Inflow,
    /// Chosen so the total mass matches the given value.
    Mass(f64),
}

/// A stationary density field with its constant and vacuum bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    /// Cell-centered stationary density, >= 0.
    pub rho: Vec<f64>,
    /// The constant in P'(rho_E) = G + |u_E|^2/2 - C_E.
    pub c_e: f64,
    /// Per-cell flag: rho_E = 0.
    pub vacuum_mask: Vec<bool>,
    pub source: EquilibriumSource,
    /// rho_E evaluated at boundary face centers, parallel to the partition's
    /// face order.
    pub boundary_rho: Vec<f64>,
}

impl EquilibriumState {
    pub fn vacuum_fraction(&self) -> f64 {
        if self.vacuum_mask.is_empty() {
            return 0.0;
        }
        self.vacuum_mask.iter().filter(|&&v| v).count() as f64 / self.vacuum_mask.len() as f64
    }

    pub fn total_mass(&self, grid: &Grid) -> f64 {
        integrate_cells(grid, &self.rho)
    }
}

/// Assemble the stationary density for a given constant: at every cell and
/// face center, rho_E = (P')^{-1}(G + |u_E|^2/2 - C_E), with the negative
/// part mapping to vacuum for laws that admit it.
pub fn density_from_constant(
    problem: &Problem,
    partition: &BoundaryPartition,
    c_e: f64,
) -> EquilibriumState {
    let grid = &problem.grid;
    let n = grid.n_cells();
    let mut rho = vec![0.0; n];
    let mut vacuum_mask = vec![false; n];
    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let x = grid.cell_center(i, j);
            let r = problem.law.potential_prime_inverse(problem.effective_potential(x) - c_e);
            let k = grid.index(i, j);
            rho[k] = r;
            vacuum_mask[k] = r == 0.0;
        }
    }
    let boundary_rho = partition
        .faces
        .iter()
        .map(|f| problem.law.potential_prime_inverse(problem.effective_potential(f.center) - c_e))
        .collect();
    EquilibriumState { rho, c_e, vacuum_mask, source: EquilibriumSource::Constant, boundary_rho }
}

/// Consistency summary for the inflow-data route to the constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflowReport {
    pub c_e: f64,
    /// Largest deviation of a face-wise constant from the mean.
    pub max_deviation: f64,
    pub tol: f64,
    pub faces: usize,
}

/// Recover the constant from prescribed inflow densities.
///
/// `rho_b` runs over the inflow faces in partition order. Each face yields
/// its own constant G + |u_E|^2/2 - P'(rho_b); the mean is returned and the
/// spread must stay below 1e-8 * (1 + |C_E|), otherwise the data are not the
/// trace of any stationary state.
pub fn constant_from_inflow(
    problem: &Problem,
    partition: &BoundaryPartition,
    rho_b: &[f64],
) -> Result<(f64, InflowReport), EquilibriumError> {
    let inflow: Vec<_> = partition.of_class(BoundaryClass::Inflow).collect();
    if inflow.is_empty() {
        return Err(EquilibriumError::NoInflowBoundary);
    }
    if rho_b.len() != inflow.len() {
        return Err(EquilibriumError::WrongDataLength { expected: inflow.len(), got: rho_b.len() });
    }
    let mut constants = Vec::with_capacity(inflow.len());
    for (face, &rb) in inflow.iter().zip(rho_b) {
        if !(rb > 0.0) {
            return Err(EquilibriumError::NonpositiveInflowDensity {
                face_center: face.center,
                value: rb,
            });
        }
        let slope = problem.law.potential_prime(rb).expect("positive density");
        constants.push(problem.effective_potential(face.center) - slope);
    }
    let mean = constants.iter().sum::<f64>() / constants.len() as f64;
    let max_deviation = constants.iter().map(|c| (c - mean).abs()).fold(0.0, f64::max);
    let tol = 1e-8 * (1.0 + mean.abs());
    if max_deviation > tol {
        return Err(EquilibriumError::IncompatibleInflowData { max_deviation, tol });
    }
    Ok((mean, InflowReport { c_e: mean, max_deviation, tol, faces: constants.len() }))
}

/// Total mass of the stationary density for a given constant. Continuous
/// and non-increasing in the constant, strictly decreasing while positive.
pub fn mass_map(problem: &Problem, c_e: f64) -> f64 {
    let grid = &problem.grid;
    let vol = grid.cell_volume();
    let mut sum = 0.0;
    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let x = grid.cell_center(i, j);
            sum += problem.law.potential_prime_inverse(problem.effective_potential(x) - c_e);
        }
    }
    sum * vol
}

/// Invert the mass map: find the constant whose stationary state carries the
/// target mass, by bracket doubling plus bisection on the monotone map.
pub fn constant_from_mass(problem: &Problem, m0: f64) -> Result<f64, EquilibriumError> {
    if !(m0 > 0.0) || !m0.is_finite() {
        return Err(EquilibriumError::NonpositiveTargetMass(m0));
    }
    let tol = 1e-10 * m0;

    // Center the initial guess on the effective potential's range.
    let grid = &problem.grid;
    let mut eff_min = f64::INFINITY;
    let mut eff_max = f64::NEG_INFINITY;
    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let e = problem.effective_potential(grid.cell_center(i, j));
            eff_min = eff_min.min(e);
            eff_max = eff_max.max(e);
        }
    }
    let c0 = 0.5 * (eff_min + eff_max);

    // The map decreases in the constant: expand left for more mass, right
    // for less, doubling the step each time.
    let mut c_lo = c0;
    let mut c_hi = c0;
    let m0_at_c0 = mass_map(problem, c0);
    let mut step = 1.0 + 0.5 * (eff_max - eff_min);
    if m0_at_c0 < m0 {
        let mut found = false;
        for _ in 0..60 {
            c_lo -= step;
            step *= 2.0;
            if mass_map(problem, c_lo) >= m0 {
                found = true;
                break;
            }
        }
        if !found {
            return Err(EquilibriumError::BracketNotFound);
        }
    } else {
        let mut found = false;
        for _ in 0..60 {
            c_hi += step;
            step *= 2.0;
            if mass_map(problem, c_hi) <= m0 {
                found = true;
                break;
            }
        }
        if !found {
            return Err(EquilibriumError::BracketNotFound);
        }
    }

    let mut mid = 0.5 * (c_lo + c_hi);
    for _ in 0..200 {
        mid = 0.5 * (c_lo + c_hi);
        let m = mass_map(problem, mid);
        if (m - m0).abs() <= tol {
            break;
        }
        if m > m0 {
            c_lo = mid;
        } else {
            c_hi = mid;
        }
    }
    Ok(mid)
}

/// Structural checks on a stationary state: the positivity set must be one
/// nonempty edge-connected component and the inflow trace strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesesReport {
    pub components: usize,
    pub positive_cells: usize,
    /// None when there are no inflow faces.
    pub min_inflow_density: Option<f64>,
    pub pass: bool,
}

pub fn check_hypotheses(
    eq: &EquilibriumState,
    grid: &Grid,
    partition: &BoundaryPartition,
) -> HypothesesReport {
    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    let mut seen = vec![false; grid.n_cells()];
    let mut components = 0;
    let mut positive_cells = 0;
    let mut queue = VecDeque::new();
    for start in 0..grid.n_cells() {
        if eq.vacuum_mask[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            positive_cells += 1;
            let (i, j) = (k % nx, k / nx);
            let mut neighbors = [usize::MAX; 4];
            let mut nn = 0;
            if i > 0 {
                neighbors[nn] = k - 1;
                nn += 1;
            }
            if i + 1 < nx {
                neighbors[nn] = k + 1;
                nn += 1;
            }
            if grid.dim == 2 {
                if j > 0 {
                    neighbors[nn] = k - nx;
                    nn += 1;
                }
                if j + 1 < ny {
                    neighbors[nn] = k + nx;
                    nn += 1;
                }
            }
            for &nb in &neighbors[..nn] {
                if !seen[nb] && !eq.vacuum_mask[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
    }

    let min_inflow_density = partition
        .faces
        .iter()
        .zip(&eq.boundary_rho)
        .filter(|(f, _)| f.class == BoundaryClass::Inflow)
        .map(|(_, &r)| r)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))));

    let pass = components == 1
        && positive_cells > 0
        && min_inflow_density.map_or(true, |m| m > 0.0);
    HypothesesReport { components, positive_cells, min_inflow_density, pass }
}

/// Max-norm defect of the stationary balance grad p(rho_E) =
/// rho_E grad(G + |u_E|^2/2), by centered differences against the
/// closed-form right side.
///
/// Cells whose difference stencil touches vacuum are excluded (the balance
/// degrades to first order across the vacuum edge); stencils reaching past
/// the domain boundary are padded with the stationary formula itself.
pub fn equilibrium_residual(eq: &EquilibriumState, problem: &Problem) -> f64 {
    let grid = &problem.grid;
    let law = &problem.law;
    let h = grid.spacing();
    let formula = |x: [f64; 2]| law.potential_prime_inverse(problem.effective_potential(x) - eq.c_e);

    let mut worst = 0.0f64;
    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let k = grid.index(i, j);
            let rho_c = eq.rho[k];
            let x = grid.cell_center(i, j);
            let grad_eff = problem.effective_potential_gradient(x);

            let mut ok = rho_c > 0.0;
            let mut defect = 0.0f64;
            for axis in 0..grid.dim {
                let mut xm = x;
                let mut xp = x;
                xm[axis] -= h[axis];
                xp[axis] += h[axis];
                let rm = neighbor_or_formula(eq, grid, i, j, axis, -1, xm, &formula);
                let rp = neighbor_or_formula(eq, grid, i, j, axis, 1, xp, &formula);
                if !(rm > 0.0 && rp > 0.0) {
                    ok = false;
                    break;
                }
                let dp = (law.pressure(rp).expect("nonnegative") - law.pressure(rm).expect("nonnegative"))
                    / (2.0 * h[axis]);
                defect = defect.max((dp - rho_c * grad_eff[axis]).abs());
            }
            if ok {
                worst = worst.max(defect);
            }
        }
    }
    worst
}

fn neighbor_or_formula(
    eq: &EquilibriumState,
    grid: &Grid,
    i: usize,
    j: usize,
    axis: usize,
    dir: i64,
    ghost_center: [f64; 2],
    formula: &impl Fn([f64; 2]) -> f64,
) -> f64 {
    let (mut ii, mut jj) = (i as i64, j as i64);
    if axis == 0 {
        ii += dir;
    } else {
        jj += dir;
    }
    if ii < 0 || jj < 0 || ii >= grid.cells[0] as i64 || jj >= grid.cells[1] as i64 {
        formula(ghost_center)
    } else {
        eq.rho[grid.index(ii as usize, jj as usize)]
    }
}
