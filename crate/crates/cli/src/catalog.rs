//! Built-in scenario catalog covering the qualitative regimes: closed
//! containers with gravity, through-flow channels, an equilibrium with a
//! vacuum region, a rotating frame, and an initial-energy sweep.

use crate::config::{
    EquilibriumSpec, GridSpec, InflowDensitySpec, InitialSpec, LawSpec, MotionSpec,
    PerturbationKind, PotentialSpec, ScenarioConfig, SnapshotSpec, SolverSpec,
};

pub struct CatalogEntry {
    pub config: ScenarioConfig,
    pub doc: &'static str,
}

fn base(
    name: &str,
    grid: GridSpec,
    law: LawSpec,
    motion: MotionSpec,
    potential: PotentialSpec,
    equilibrium: EquilibriumSpec,
    solver: SolverSpec,
    t_end: f64,
) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        grid,
        law,
        motion,
        potential,
        equilibrium,
        initial: InitialSpec::Perturbation {
            perturbation: PerturbationKind::DensityBump,
            amplitude: 0.2,
            floor: 0.0,
        },
        solver,
        t_end,
        record_interval: None,
        seed: 1,
        snapshots: SnapshotSpec::Final,
        output_dir: None,
    }
}

fn grid_1d(nx: usize) -> GridSpec {
    GridSpec { dim: 1, extent: vec![1.0], cells: vec![nx] }
}

fn grid_2d(n: usize) -> GridSpec {
    GridSpec { dim: 2, extent: vec![1.0, 1.0], cells: vec![n, n] }
}

fn solver(mu: f64, lambda: f64) -> SolverSpec {
    SolverSpec { mu, lambda, cfl: 0.4, rho_floor_guard: 1e-10 }
}

/// All shipped scenarios with one-line descriptions.
pub fn builtin_scenarios() -> Vec<CatalogEntry> {
    let mut entries = vec![
        CatalogEntry {
            config: base(
                "closed-box-gravity-1d",
                grid_1d(64),
                LawSpec::Isothermal { a: 1.0 },
                MotionSpec::default(),
                PotentialSpec::Linear { g: [-1.0, 0.0] },
                EquilibriumSpec::Mass { m0: 1.0 },
                solver(0.05, 0.1),
                6.0,
            ),
            doc: "Sealed column under uniform gravity, isothermal law, unit mass; \
                  exponential stationary profile, conserved mass.",
        },
        CatalogEntry {
            config: base(
                "closed-box-gravity-2d",
                grid_2d(64),
                LawSpec::Isothermal { a: 1.0 },
                MotionSpec::default(),
                PotentialSpec::Linear { g: [0.0, -1.0] },
                EquilibriumSpec::Mass { m0: 1.0 },
                solver(0.05, 0.05),
                12.0,
            ),
            doc: "Sealed square under vertical gravity, isothermal law, unit mass; \
                  stratified stationary profile, every wall characteristic.",
        },
        CatalogEntry {
            config: base(
                "channel-inflow-1d",
                grid_1d(64),
                LawSpec::Gamma { a: 1.0, gamma: 2.0 },
                MotionSpec { translation: [1.0, 0.0], omega: 0.0 },
                PotentialSpec::Constant { c: 0.0 },
                EquilibriumSpec::Inflow { rho_b: InflowDensitySpec::Value(1.0) },
                solver(0.01, 0.1),
                4.0,
            ),
            doc: "Uniform transport through a segment, quadratic law, density one \
                  prescribed on the inflow end; constant stationary state.",
        },
        CatalogEntry {
            config: base(
                "channel-inflow-2d",
                grid_2d(64),
                LawSpec::Gamma { a: 1.0, gamma: 2.0 },
                MotionSpec { translation: [1.0, 0.0], omega: 0.0 },
                PotentialSpec::Linear { g: [0.0, -0.5] },
                EquilibriumSpec::Inflow { rho_b: InflowDensitySpec::Trace { trace_of: -1.5 } },
                solver(0.05, 0.1),
                6.0,
            ),
            doc: "Horizontal transport with transverse gravity; the stationary \
                  trace enters on the left edge and leaves on the right.",
        },
        CatalogEntry {
            config: {
                let mut c = base(
                    "vacuum-wedge-1d",
                    grid_1d(64),
                    LawSpec::Gamma { a: 1.0, gamma: 2.0 },
                    MotionSpec::default(),
                    PotentialSpec::Linear { g: [1.0, 0.0] },
                    EquilibriumSpec::Mass { m0: 0.0625 },
                    solver(0.05, 0.1),
                    6.0,
                );
                c.initial = InitialSpec::Perturbation {
                    perturbation: PerturbationKind::DensityBump,
                    amplitude: 0.2,
                    floor: 0.05,
                };
                c
            },
            doc: "Quadratic law against a rising potential with mass 1/16: the \
                  stationary density vanishes on the left half and grows \
                  linearly on the right; runs start floored above vacuum.",
        },
        CatalogEntry {
            config: base(
                "rotating-square",
                grid_2d(64),
                LawSpec::Gamma { a: 1.0, gamma: 2.0 },
                MotionSpec { translation: [0.5, -0.5], omega: 1.0 },
                PotentialSpec::Radial { center: [0.5, 0.5], coeffs: vec![0.0, 1.0] },
                EquilibriumSpec::Mass { m0: 1.0 },
                solver(0.01, 0.01),
                16.0,
            ),
            doc: "Rigid rotation about the square's center against a radial \
                  potential; every edge splits into an entering and a leaving \
                  half at its midpoint.",
        },
    ];
    for amplitude in [0.05f64, 0.1, 0.2, 0.4] {
        let tag = format!("e0-sweep-{:03}", (amplitude * 100.0).round() as u32);
        let mut c = base(
            &tag,
            grid_1d(64),
            LawSpec::Gamma { a: 1.0, gamma: 2.0 },
            MotionSpec { translation: [1.0, 0.0], omega: 0.0 },
            PotentialSpec::Constant { c: 0.0 },
            EquilibriumSpec::Inflow { rho_b: InflowDensitySpec::Value(1.0) },
            solver(0.01, 0.1),
            6.0,
        );
        c.initial = InitialSpec::Perturbation {
            perturbation: PerturbationKind::DensityBump,
            amplitude,
            floor: 0.0,
        };
        entries.push(CatalogEntry {
            config: c,
            doc: "Channel transport started at a graded perturbation amplitude; \
                  member of the initial-energy sweep family.",
        });
    }
    entries
}

/// Look a scenario up by name.
pub fn find(name: &str) -> Option<ScenarioConfig> {
    builtin_scenarios().into_iter().find(|e| e.config.name == name).map(|e| e.config)
}
