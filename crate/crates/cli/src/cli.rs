//! Command-line driver. Exit codes: 0 success, 1 usage, 2 a scenario failed
//! validation (config, compatibility, or stationary hypotheses), 3 a runtime
//! failure (positivity loss, file system).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use baroflux_core::diagnostics::{energy_inequality_residual, mass_balance_residual};
use baroflux_core::equilibrium::{
    check_hypotheses, constant_from_inflow, constant_from_mass, density_from_constant,
    equilibrium_residual, EquilibriumState, HypothesesReport,
};
use baroflux_core::geometry::{
    check_compatibility, classify_boundary, BoundaryClass, BoundaryPartition,
};
use baroflux_core::solver::{run, FlowState, SolverError, Trajectory};
use baroflux_core::Problem;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::catalog;
use crate::config::{load_config, EquilibriumSpec, InflowDensitySpec, ScenarioConfig, SnapshotSpec};
use crate::io;
use crate::perturb::build_initial;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const COMPAT_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(
    name = "baroflux",
    version,
    about = "Stationary states and transient runs for barotropic viscous flow with in/out-flux boundaries",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the stationary state for a scenario and write it out.
    Equilibrium {
        /// Builtin scenario name or path to a JSON config.
        config: String,
    },
    /// Run the transient solver and write the diagnostic time series.
    Simulate {
        /// Builtin scenario name or path to a JSON config.
        config: String,
    },
    /// Refinement study: rerun the scenario on successively doubled grids.
    Sweep {
        /// Builtin scenario name or path to a JSON config.
        config: String,
        /// Number of refinement levels (level k doubles the cells k times).
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Validate a scenario (config, compatibility, hypotheses) without running it.
    Check {
        /// Builtin scenario name or path to a JSON config.
        config: String,
    },
    /// Print the builtin scenario catalog.
    List,
}

struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn validation(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_VALIDATION, msg: msg.into() }
    }

    fn runtime(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_RUNTIME, msg: msg.into() }
    }
}

pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Command::List => cmd_list(),
        Command::Check { config } => cmd_check(&config),
        Command::Equilibrium { config } => cmd_equilibrium(&config),
        Command::Simulate { config } => cmd_simulate(&config),
        Command::Sweep { config, levels } => cmd_sweep(&config, levels),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn resolve_config(arg: &str) -> Result<ScenarioConfig, Failure> {
    if let Some(cfg) = catalog::find(arg) {
        return Ok(cfg);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Failure::validation(format!(
            "`{arg}` is neither a builtin scenario nor an existing config file \
             (run `baroflux list` for the catalog)"
        )));
    }
    load_config(path).map_err(|e| Failure::validation(e.to_string()))
}

/// Everything a scenario needs before time stepping; construction performs
/// the full validation chain (config, compatibility, equilibrium, hypotheses).
pub struct PreparedScenario {
    pub problem: Problem,
    pub partition: BoundaryPartition,
    pub eq: EquilibriumState,
    pub hypotheses: HypothesesReport,
    pub compat_violation: f64,
}

struct Prepared {
    cfg: ScenarioConfig,
    ps: PreparedScenario,
}

/// The stationary constant C_E from the configured source.
pub fn equilibrium_constant(
    cfg: &ScenarioConfig,
    problem: &Problem,
    partition: &BoundaryPartition,
) -> Result<f64, String> {
    match &cfg.equilibrium {
        EquilibriumSpec::Mass { m0 } => {
            constant_from_mass(problem, *m0).map_err(|e| format!("equilibrium: {e}"))
        }
        EquilibriumSpec::Inflow { rho_b } => {
            let n_in = partition.class_count(BoundaryClass::Inflow);
            if n_in == 0 {
                return Err(
                    "equilibrium: the scenario prescribes inflow data but no boundary face \
                     has u_E . n < 0"
                        .into(),
                );
            }
            let values: Vec<f64> = match rho_b {
                InflowDensitySpec::Value(v) => vec![*v; n_in],
                InflowDensitySpec::Trace { trace_of } => partition
                    .of_class(BoundaryClass::Inflow)
                    .map(|f| {
                        problem
                            .law
                            .potential_prime_inverse(problem.effective_potential(f.center) - trace_of)
                    })
                    .collect(),
            };
            let (c, _) = constant_from_inflow(problem, partition, &values)
                .map_err(|e| format!("equilibrium: {e}"))?;
            Ok(c)
        }
    }
}

/// Run the full pre-flight chain for a validated config: geometry,
/// compatibility, stationary state, hypotheses.
pub fn prepare_scenario(cfg: &ScenarioConfig) -> Result<PreparedScenario, String> {
    let problem = cfg.problem()?;
    let partition = classify_boundary(&problem.grid, &problem.motion, None);

    let compat = check_compatibility(&problem.motion, &problem.potential, &problem.grid, COMPAT_TOL);
    if !compat.pass {
        let which = compat
            .violation
            .map(|v| v.to_string())
            .unwrap_or_else(|| "compatibility violated".into());
        return Err(format!(
            "{which} (worst normalized violation {:.3e} at ({:.4}, {:.4}))",
            compat.max_violation, compat.worst_point[0], compat.worst_point[1]
        ));
    }

    let c_e = equilibrium_constant(cfg, &problem, &partition)?;
    let eq = density_from_constant(&problem, &partition, c_e);
    let hypotheses = check_hypotheses(&eq, &problem.grid, &partition);
    if !hypotheses.pass {
        let mut reasons = Vec::new();
        if hypotheses.positive_cells == 0 {
            reasons.push("the stationary density vanishes identically".to_string());
        } else if hypotheses.components != 1 {
            reasons.push(format!(
                "the positive region of the stationary density is disconnected \
                 ({} components)",
                hypotheses.components
            ));
        }
        if let Some(m) = hypotheses.min_inflow_density {
            if !(m > 0.0) {
                reasons.push("the stationary trace vanishes on an inflow face".to_string());
            }
        }
        return Err(format!("hypotheses: {}", reasons.join("; ")));
    }

    Ok(PreparedScenario {
        problem,
        partition,
        eq,
        hypotheses,
        compat_violation: compat.max_violation,
    })
}

fn prepare(cfg: ScenarioConfig) -> Result<Prepared, Failure> {
    let ps = prepare_scenario(&cfg).map_err(Failure::validation)?;
    Ok(Prepared { cfg, ps })
}

/// Resolve the output directory: an explicit `output_dir` wins verbatim,
/// otherwise BAROFLUX_OUT (or ./out) is used as the root with the scenario
/// name appended.
fn output_dir(cfg: &ScenarioConfig) -> PathBuf {
    match &cfg.output_dir {
        Some(dir) => PathBuf::from(dir),
        None => {
            let root = std::env::var_os("BAROFLUX_OUT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out"));
            root.join(&cfg.name)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_list() -> Result<(), Failure> {
    let entries = catalog::builtin_scenarios();
    let width = entries.iter().map(|e| e.config.name.len()).max().unwrap_or(0);
    println!("builtin scenarios:");
    for e in &entries {
        println!("  {:width$}  {}", e.config.name, e.doc);
    }
    Ok(())
}

fn describe(p: &Prepared) {
    let grid = &p.ps.problem.grid;
    let cells = if grid.dim == 1 {
        format!("{}", grid.cells[0])
    } else {
        format!("{}x{}", grid.cells[0], grid.cells[1])
    };
    println!("scenario       {}", p.cfg.name);
    println!("grid           {}D, {cells} cells", grid.dim);
    println!(
        "boundary       {} inflow / {} outflow / {} characteristic faces",
        p.ps.partition.class_count(BoundaryClass::Inflow),
        p.ps.partition.class_count(BoundaryClass::Outflow),
        p.ps.partition.class_count(BoundaryClass::Characteristic),
    );
    println!("compatibility  ok (worst violation {:.3e})", p.ps.compat_violation);
    println!("C_E            {:.12}", p.ps.eq.c_e);
    println!("mass           {:.12}", p.ps.eq.total_mass(grid));
    println!("vacuum         {:.4} of the volume", p.ps.eq.vacuum_fraction());
    println!(
        "hypotheses     ok ({} positive cells in {} component{})",
        p.ps.hypotheses.positive_cells,
        p.ps.hypotheses.components,
        if p.ps.hypotheses.components == 1 { "" } else { "s" },
    );
    println!("residual       {:.6e} (stationary balance, max norm)", {
        equilibrium_residual(&p.ps.eq, &p.ps.problem)
    });
}

fn cmd_check(arg: &str) -> Result<(), Failure> {
    let p = prepare(resolve_config(arg)?)?;
    describe(&p);
    println!("ok");
    Ok(())
}

fn cmd_equilibrium(arg: &str) -> Result<(), Failure> {
    let p = prepare(resolve_config(arg)?)?;
    describe(&p);
    let dir = output_dir(&p.cfg);
    ensure_dir(&dir)?;
    let state = FlowState::at_equilibrium(&p.ps.eq, &p.ps.problem);
    let path = dir.join("equilibrium.csv");
    io::write_snapshot(&path, &p.ps.problem.grid, &state)
        .map_err(|e| Failure::runtime(e.to_string()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate_prepared(p: &Prepared) -> Result<Trajectory, Failure> {
    let state = build_initial(&p.cfg, &p.ps.problem, &p.ps.eq, &p.ps.partition)
        .map_err(Failure::validation)?;
    let params = p.cfg.solver_params();
    run(&p.ps.problem, &p.ps.eq, &p.ps.partition, params, state, &p.cfg.run_config(), &mut || false)
        .map_err(|e| match e {
            SolverError::BadParams(msg) => Failure::validation(format!("solver: {msg}")),
            other => Failure::runtime(other.to_string()),
        })
}

fn cmd_simulate(arg: &str) -> Result<(), Failure> {
    let p = prepare(resolve_config(arg)?)?;
    let dir = output_dir(&p.cfg);
    ensure_dir(&dir)?;
    let traj = simulate_prepared(&p)?;

    let series = dir.join("series.csv");
    io::write_series(&series, &traj.records).map_err(|e| Failure::runtime(e.to_string()))?;
    if p.cfg.snapshots != SnapshotSpec::None {
        let final_path = dir.join("final.csv");
        io::write_snapshot(&final_path, &p.ps.problem.grid, &traj.final_state)
            .map_err(|e| Failure::runtime(e.to_string()))?;
    }
    if p.cfg.snapshots == SnapshotSpec::All {
        for (k, snap) in traj.snapshots.iter().enumerate() {
            let path = dir.join(format!("snap_{k:04}.csv"));
            io::write_snapshot(&path, &p.ps.problem.grid, snap)
                .map_err(|e| Failure::runtime(e.to_string()))?;
        }
    }

    let first = traj.records.first().expect("a run always has the t=0 record");
    let last = traj.records.last().expect("nonempty");
    println!("scenario   {}", p.cfg.name);
    println!("records    {} (t = {} .. {})", traj.records.len(), first.t, last.t);
    println!("E_rel      {:.6e} -> {:.6e}", first.e_rel, last.e_rel);
    if first.e_rel > 0.0 {
        println!("decay      E(end)/E(0) = {:.6e}", last.e_rel / first.e_rel);
    }
    println!("mass       {:.12} -> {:.12}", first.mass, last.mass);
    if traj.truncated {
        println!("truncated  yes (budget hit before t_end)");
    }
    println!("wrote {}", series.display());
    Ok(())
}

fn cmd_sweep(arg: &str, levels: usize) -> Result<(), Failure> {
    if levels == 0 {
        return Err(Failure::validation("sweep: --levels must be at least 1"));
    }
    let base = resolve_config(arg)?;
    let dir = output_dir(&base);
    ensure_dir(&dir)?;

    let mut rows = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut cfg = base.clone();
        cfg.name = format!("{}-L{level}", base.name);
        for c in &mut cfg.grid.cells {
            *c <<= level;
        }
        cfg.snapshots = SnapshotSpec::None;
        let p = prepare(cfg)?;
        let traj = simulate_prepared(&p)?;
        let records = &traj.records;
        let first = records.first().expect("nonempty");
        let last = records.last().expect("nonempty");
        let energy = energy_inequality_residual(records, 0, records.len() - 1)
            .map_err(|e| Failure::runtime(e.to_string()))?;
        let mass = mass_balance_residual(records, 0, records.len() - 1)
            .map_err(|e| Failure::runtime(e.to_string()))?;
        let row = io::SweepRow {
            level,
            cells_x: p.ps.problem.grid.cells[0],
            cells_y: if p.ps.problem.grid.dim == 2 { p.ps.problem.grid.cells[1] } else { 1 },
            e_rel_initial: first.e_rel,
            e_rel_final: last.e_rel,
            err_rho_lgamma: last.err_rho_lgamma,
            err_mom: last.err_mom,
            energy_residual: energy.normalized,
            mass_residual: mass,
        };
        println!(
            "level {level}: {}x{} cells, E {:.3e} -> {:.3e}, err_rho {:.3e}, \
             energy residual {:.3e}, mass residual {:.3e}",
            row.cells_x, row.cells_y, row.e_rel_initial, row.e_rel_final, row.err_rho_lgamma,
            row.energy_residual, row.mass_residual
        );
        rows.push(row);
    }

    let path = dir.join("sweep.csv");
    io::write_sweep(&path, &rows).map_err(|e| Failure::runtime(e.to_string()))?;
    println!("wrote {}", path.display());
    Ok(())
}
