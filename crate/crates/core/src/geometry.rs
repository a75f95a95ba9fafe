//! Structured grids on intervals and rectangles, rigid boundary velocity
//! fields, force potentials, boundary classification and quadrature.

use alloc::vec::Vec;
use core::fmt;

#[cfg(all(not(feature = "std"), feature = "libm"))]
use crate::math::FloatExt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometryError {
    /// Physical extent must be positive on every axis.
    BadExtent(f64),
    /// At least 4 cells per active axis.
    TooFewCells(usize),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::BadExtent(e) => write!(f, "extent must be positive, got {e}"),
            GeometryError::TooFewCells(n) => write!(f, "need at least 4 cells per axis, got {n}"),
        }
    }
}

impl core::error::Error for GeometryError {}

/// Uniform cell-centered grid on an interval (dim = 1) or axis-aligned
/// rectangle (dim = 2) anchored at the origin.
///
/// The 1D case is stored as a 2D grid with a single cell of unit extent on
/// the second axis, so volumes and areas need no special casing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub extent: [f64; 2],
    pub cells: [usize; 2],
}

impl Grid {
    pub fn new_1d(extent: f64, nx: usize) -> Result<Self, GeometryError> {
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(GeometryError::BadExtent(extent));
        }
        if nx < 4 {
            return Err(GeometryError::TooFewCells(nx));
        }
        Ok(Grid { dim: 1, extent: [extent, 1.0], cells: [nx, 1] })
    }

    pub fn new_2d(extent: [f64; 2], cells: [usize; 2]) -> Result<Self, GeometryError> {
        for e in extent {
            if !(e > 0.0) || !e.is_finite() {
                return Err(GeometryError::BadExtent(e));
            }
        }
        for n in cells {
            if n < 4 {
                return Err(GeometryError::TooFewCells(n));
            }
        }
        Ok(Grid { dim: 2, extent, cells })
    }

    /// Cell spacing per axis.
    pub fn spacing(&self) -> [f64; 2] {
        [self.extent[0] / self.cells[0] as f64, self.extent[1] / self.cells[1] as f64]
    }

    /// Smallest spacing over active axes.
    pub fn min_spacing(&self) -> f64 {
        let h = self.spacing();
        if self.dim == 1 {
            h[0]
        } else {
            h[0].min(h[1])
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    /// Row-major cell index: x runs fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [(i as f64 + 0.5) * h[0], (j as f64 + 0.5) * h[1]]
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        h[0] * h[1]
    }
}

/// Velocity field of a rigid motion: a constant translation plus, in 2D,
/// a rotation of rate omega about the origin. Its symmetric gradient
/// vanishes identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub translation: [f64; 2],
    pub omega: f64,
}

impl RigidMotion {
    pub const ZERO: RigidMotion = RigidMotion { translation: [0.0, 0.0], omega: 0.0 };

    /// u_E(x) = translation + omega * (-x2, x1).
    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        [self.translation[0] - self.omega * x[1], self.translation[1] + self.omega * x[0]]
    }

    /// Specific kinetic energy |u_E(x)|^2 / 2.
    pub fn kinetic_head(&self, x: [f64; 2]) -> f64 {
        let u = self.velocity(x);
        0.5 * (u[0] * u[0] + u[1] * u[1])
    }

    /// Closed-form gradient of the kinetic head: omega * (u2, -u1).
    ///
    /// Dotting it with u_E gives exactly zero, the orthogonality that makes
    /// the head act like an extra potential.
    pub fn head_gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let u = self.velocity(x);
        [self.omega * u[1], -self.omega * u[0]]
    }

    /// Largest speed over the closed rectangle; |u_E| is convex, so the
    /// maximum sits at a corner.
    pub fn max_speed(&self, grid: &Grid) -> f64 {
        let mut m: f64 = 0.0;
        for cx in [0.0, grid.extent[0]] {
            for cy in [0.0, grid.extent[1]] {
                let u = self.velocity([cx, cy]);
                m = m.max((u[0] * u[0] + u[1] * u[1]).sqrt());
            }
        }
        m
    }
}

/// Force potential G with a closed-form gradient, continuously
/// differentiable on the closed domain.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialField {
    Constant { c: f64 },
    /// G(x) = g . x
    Linear { g: [f64; 2] },
    /// G(x) = sum_k coeffs[k] * r^(2k) with r = |x - center|; even powers
    /// keep the gradient smooth at the center.
    Radial { center: [f64; 2], coeffs: Vec<f64> },
}

impl PotentialField {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        match self {
            PotentialField::Constant { c } => *c,
            PotentialField::Linear { g } => g[0] * x[0] + g[1] * x[1],
            PotentialField::Radial { center, coeffs } => {
                let r2 = sq_dist(x, *center);
                let mut acc = 0.0;
                let mut pow = 1.0;
                for &c in coeffs {
                    acc += c * pow;
                    pow *= r2;
                }
                acc
            }
        }
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            PotentialField::Constant { .. } => [0.0, 0.0],
            PotentialField::Linear { g } => *g,
            PotentialField::Radial { center, coeffs } => {
                // d/dx sum c_k (r^2)^k = (sum k c_k (r^2)^(k-1)) * 2(x - x0)
                let r2 = sq_dist(x, *center);
                let mut ds = 0.0;
                let mut pow = 1.0;
                for (k, &c) in coeffs.iter().enumerate().skip(1) {
                    ds += k as f64 * c * pow;
                    pow *= r2;
                }
                [2.0 * (x[0] - center[0]) * ds, 2.0 * (x[1] - center[1]) * ds]
            }
        }
    }
}

fn sq_dist(x: [f64; 2], c: [f64; 2]) -> f64 {
    let dx = x[0] - c[0];
    let dy = x[1] - c[1];
    dx * dx + dy * dy
}

/// Which side of the domain a boundary face sits on, along its normal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryClass {
    /// u_E . n < -tol: density is prescribed here.
    Inflow,
    /// u_E . n > tol: mass leaves here.
    Outflow,
    /// |u_E . n| <= tol: no mass exchange.
    Characteristic,
}

/// One boundary face of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    /// Axis of the outward normal.
    pub axis: usize,
    pub side: Side,
    /// Indices of the adjacent interior cell.
    pub cell: [usize; 2],
    pub center: [f64; 2],
    pub normal: [f64; 2],
    pub measure: f64,
    /// u_E . n at the face center.
    pub un: f64,
    pub class: BoundaryClass,
}

/// All boundary faces with their in/out/characteristic labels.
///
/// Faces are ordered by (axis, side, transverse index); every per-face
/// array in the crate follows this order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPartition {
    pub faces: Vec<BoundaryFace>,
    pub counts: [usize; 3],
    /// Discrete integral of u_E . n over the whole boundary; vanishes for
    /// rigid fields by the divergence theorem.
    pub net_flux: f64,
    pub tol_n: f64,
}

impl BoundaryPartition {
    pub fn class_count(&self, class: BoundaryClass) -> usize {
        match class {
            BoundaryClass::Inflow => self.counts[0],
            BoundaryClass::Outflow => self.counts[1],
            BoundaryClass::Characteristic => self.counts[2],
        }
    }

    pub fn of_class(&self, class: BoundaryClass) -> impl Iterator<Item = &BoundaryFace> {
        self.faces.iter().filter(move |f| f.class == class)
    }

    pub fn has_inflow(&self) -> bool {
        self.counts[0] > 0
    }
}

/// Label every boundary face by the sign of u_E . n.
///
/// `tol_n` defaults to 1e-12 * max |u_E| so that exact zeros (edge midpoints
/// under rotation, closed boxes) land deterministically in the
/// characteristic class.
pub fn classify_boundary(grid: &Grid, motion: &RigidMotion, tol_n: Option<f64>) -> BoundaryPartition {
    let tol = tol_n.unwrap_or_else(|| 1e-12 * motion.max_speed(grid));
    let h = grid.spacing();
    let mut faces = Vec::new();
    let mut counts = [0usize; 3];
    let mut net_flux = 0.0;

    let mut push = |axis: usize, side: Side, cell: [usize; 2], center: [f64; 2]| {
        let mut normal = [0.0, 0.0];
        normal[axis] = match side {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        };
        let measure = if axis == 0 { h[1] } else { h[0] };
        let u = motion.velocity(center);
        let un = u[0] * normal[0] + u[1] * normal[1];
        let class = if un < -tol {
            BoundaryClass::Inflow
        } else if un > tol {
            BoundaryClass::Outflow
        } else {
            BoundaryClass::Characteristic
        };
        counts[match class {
            BoundaryClass::Inflow => 0,
            BoundaryClass::Outflow => 1,
            BoundaryClass::Characteristic => 2,
        }] += 1;
        net_flux += un * measure;
        faces.push(BoundaryFace { axis, side, cell, center, normal, measure, un, class });
    };

    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    for side in [Side::Lower, Side::Upper] {
        let (i, xpos) = match side {
            Side::Lower => (0, 0.0),
            Side::Upper => (nx - 1, grid.extent[0]),
        };
        for j in 0..ny {
            push(0, side, [i, j], [xpos, (j as f64 + 0.5) * h[1]]);
        }
    }
    if grid.dim == 2 {
        for side in [Side::Lower, Side::Upper] {
            let (j, ypos) = match side {
                Side::Lower => (0, 0.0),
                Side::Upper => (ny - 1, grid.extent[1]),
            };
            for i in 0..nx {
                push(1, side, [i, j], [(i as f64 + 0.5) * h[0], ypos]);
            }
        }
    }

    BoundaryPartition { faces, counts, net_flux, tol_n: tol }
}

/// Which orthogonality requirement a motion/potential pair broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompatibilityViolation {
    /// grad(G) . u_E does not vanish.
    ForceAlongMotion,
    /// grad(|u_E|^2) . u_E does not vanish.
    HeadAlongMotion,
}

impl fmt::Display for CompatibilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompatibilityViolation::ForceAlongMotion => {
                write!(f, "grad(G) . u_E does not vanish")
            }
            CompatibilityViolation::HeadAlongMotion => {
                write!(f, "grad(|u_E|^2) . u_E does not vanish")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityReport {
    pub pass: bool,
    /// Worst normalized violation over all cell centers.
    pub max_violation: f64,
    pub worst_point: [f64; 2],
    pub violation: Option<CompatibilityViolation>,
}

/// Verify at every cell center that the force potential does no work along
/// the boundary motion (grad G . u_E = 0) and that the kinetic head is
/// likewise orthogonal to it (grad |u_E|^2 . u_E = 0, exact for rigid fields).
pub fn check_compatibility(
    motion: &RigidMotion,
    potential: &PotentialField,
    grid: &Grid,
    tol: f64,
) -> CompatibilityReport {
    let mut worst = 0.0f64;
    let mut worst_point = [0.0, 0.0];
    let mut which = None;
    for j in 0..grid.cells[1] {
        for i in 0..grid.cells[0] {
            let x = grid.cell_center(i, j);
            let u = motion.velocity(x);
            let unorm = (u[0] * u[0] + u[1] * u[1]).sqrt();

            let gg = potential.gradient(x);
            let gnorm = (gg[0] * gg[0] + gg[1] * gg[1]).sqrt();
            let v_force = (gg[0] * u[0] + gg[1] * u[1]).abs() / (1.0 + gnorm * unorm);

            let gh = motion.head_gradient(x);
            let hnorm = (gh[0] * gh[0] + gh[1] * gh[1]).sqrt();
            let v_head = 2.0 * (gh[0] * u[0] + gh[1] * u[1]).abs() / (1.0 + 2.0 * hnorm * unorm);

            if v_force > worst {
                worst = v_force;
                worst_point = x;
                which = Some(CompatibilityViolation::ForceAlongMotion);
            }
            if v_head > worst {
                worst = v_head;
                worst_point = x;
                which = Some(CompatibilityViolation::HeadAlongMotion);
            }
        }
    }
    let pass = worst <= tol;
    CompatibilityReport {
        pass,
        max_violation: worst,
        worst_point,
        violation: if pass { None } else { which },
    }
}

/// Midpoint quadrature: sum of cell values times cell volume.
pub fn integrate_cells(grid: &Grid, field: &[f64]) -> f64 {
    assert_eq!(field.len(), grid.n_cells(), "field must cover every cell");
    let vol = grid.cell_volume();
    field.iter().sum::<f64>() * vol
}

/// Face-midpoint quadrature over the boundary, optionally restricted to one
/// class. `values` runs parallel to `partition.faces`.
pub fn integrate_boundary(
    partition: &BoundaryPartition,
    values: &[f64],
    subset: Option<BoundaryClass>,
) -> f64 {
    assert_eq!(values.len(), partition.faces.len(), "values must cover every boundary face");
    partition
        .faces
        .iter()
        .zip(values)
        .filter(|(f, _)| subset.is_none_or(|c| f.class == c))
        .map(|(f, v)| v * f.measure)
        .sum()
}
