//! Equilibrium states, a conservative finite-volume solver and energy
//! diagnostics for barotropic flow driven by in/out-flux boundary data.
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm`
//! feature instead of `std` to get the float math from `libm`.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("baroflux-core requires either the `std` or the `libm` feature");

extern crate alloc;

mod math;

pub mod diagnostics;
pub mod eos;
pub mod equilibrium;
pub mod geometry;
pub mod solver;

use eos::PressureLaw;
use geometry::{Grid, PotentialField, RigidMotion};

/// Static problem data shared by the equilibrium, solver and diagnostics
/// layers: the domain, the pressure law, the boundary velocity field and
/// the force potential.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub law: PressureLaw,
    pub motion: RigidMotion,
    pub potential: PotentialField,
}

impl Problem {
    /// Effective potential G(x) + |u_E(x)|^2/2 entering the stationary balance.
    pub fn effective_potential(&self, x: [f64; 2]) -> f64 {
        self.potential.value(x) + self.motion.kinetic_head(x)
    }

    /// Closed-form gradient of the effective potential.
    pub fn effective_potential_gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let gp = self.potential.gradient(x);
        let gh = self.motion.head_gradient(x);
        [gp[0] + gh[0], gp[1] + gh[1]]
    }
}
