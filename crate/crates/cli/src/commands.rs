//! Subcommands and their outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use oist_core::oja::{closed_form_curve, OjaParams};
use oist_core::online::{run_trajectory, summarize};
use oist_core::pde::{initial_density, solve_pde};
use oist_core::steady::{solve_at, solve_fixed_point, steady_density, sweep_omega, FixedPoint};

use crate::config::{ExperimentConfig, Format};
use crate::output::{write_json, Table};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "oist", version, about = "Online sparse PCA: simulation, scaling-limit PDE and steady states")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML experiment file; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Simulation seed (overrides `simulation.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Override one config key, e.g. `--set model.omega=0.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Monte Carlo runs of the online estimator.
    Simulate,
    /// Finite-volume solution of the scaling-limit PDE.
    Pde,
    /// Closed-form cosine-similarity curve of plain Oja.
    OjaTheory,
    /// Fixed points of the steady-state equations at one SNR.
    Steady {
        /// Also write the stationary conditional densities.
        #[arg(long)]
        density: bool,
    },
    /// Steady-state overlap across a range of SNR values.
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Pde => "pde",
            Command::OjaTheory => "oja-theory",
            Command::Steady { .. } => "steady",
            Command::Sweep => "sweep",
        }
    }
}

/// Resolves the configuration from file, overrides and flags.
pub fn resolve_config(global: &GlobalArgs) -> Result<ExperimentConfig, CliError> {
    let text = match &global.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::from_toml(&text, &global.overrides)?;
    if let Some(seed) = global.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(dir) = &global.output {
        cfg.output.directory = dir.to_string_lossy().into_owned();
    }
    if let Some(format) = global.format {
        cfg.output.format = format;
    }
    Ok(cfg)
}

/// Everything a command produced besides its tables.
struct Outcome {
    tables: Vec<Table>,
    extra: Value,
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = resolve_config(&cli.global)?;
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let start = Instant::now();
    let outcome = match cli.command {
        Command::Simulate => simulate(&cfg)?,
        Command::Pde => pde(&cfg)?,
        Command::OjaTheory => oja_theory(&cfg)?,
        Command::Steady { density } => steady(&cfg, density)?,
        Command::Sweep => sweep(&cfg)?,
    };
    let wall = start.elapsed().as_secs_f64();

    let dir = Path::new(&cfg.output.directory);
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &outcome.tables {
        files.push(t.write(dir, cfg.output.format)?);
    }
    let manifest = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.simulation.seed,
        "threads": rayon::current_num_threads(),
        "wall_time_seconds": wall,
        "files": files.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "results": outcome.extra,
        "config": serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?,
    });
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    files.push(manifest_path);
    Ok(files)
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = cfg.run_spec()?;
    log::info!("simulating {} replicas at p = {} up to t = {}", spec.replicas, spec.stream.p, spec.t_max);
    let records = run_trajectory(&spec)?;

    let mut traj = Table::new("trajectory", &["replica", "t", "Q", "misclass"]);
    let mut hist = Table::new("histograms", &["replica", "t", "xi_atom", "bin_center", "density"]);
    let centers = spec.bins.centers();
    for r in &records {
        for i in 0..r.times.len() {
            traj.push(vec![r.replica_id.into(), r.times[i].into(), r.q_values[i].into(), r.misclass[i].into()]);
        }
        for snap in &r.histograms {
            for h in &snap.atoms {
                let Some(density) = &h.density else { continue };
                for (c, d) in centers.iter().zip(density) {
                    hist.push(vec![r.replica_id.into(), snap.t.into(), h.atom.into(), (*c).into(), (*d).into()]);
                }
            }
        }
    }
    let mut summary = Table::new("summary", &["t", "Q_mean", "Q_std", "n_replicas"]);
    for row in summarize(&records) {
        summary.push(vec![row.t.into(), row.q_mean.into(), row.q_std.into(), row.n_replicas.into()]);
    }
    let steps = spec.total_steps();
    Ok(Outcome { tables: vec![traj, hist, summary], extra: json!({ "steps_per_replica": steps }) })
}

fn pde(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let pde_cfg = cfg.pde_config()?;
    let prior = cfg.discrete_prior()?;
    let init = initial_density(cfg.initial.mean, cfg.initial.variance, pde_cfg.grid, &prior, pde_cfg.threshold)?;
    let mut pde_cfg = pde_cfg;
    // the initial law may have widened the grid to cover every atom
    pde_cfg.grid = init.grid;
    let sol = solve_pde(&pde_cfg, init, &cfg.pde.record_times)?;
    log::info!("pde: {} steps, dt in [{:.3e}, {:.3e}]", sol.steps, sol.dt_min, sol.dt_max);

    let mut moments = Table::new("moments", &["t", "Q", "R"]);
    for row in &sol.series {
        moments.push(vec![row.t.into(), row.q.into(), row.r.into()]);
    }
    let mut densities = Table::new("densities", &["t", "xi_atom", "x", "density"]);
    for snap in &sol.snapshots {
        let xs = snap.grid.centers();
        for (atom, d) in snap.atoms.iter().zip(&snap.densities) {
            for (x, v) in xs.iter().zip(d) {
                densities.push(vec![snap.t.into(), atom.value.into(), (*x).into(), (*v).into()]);
            }
        }
    }
    let g = sol.final_state.grid;
    let extra = json!({
        "steps": sol.steps,
        "dt_min": sol.dt_min,
        "dt_max": sol.dt_max,
        "grid": { "x_min": g.x_min, "x_max": g.x_max, "n": g.n },
        "clipped_cells": sol.final_state.clipped,
        "final": { "t": sol.final_state.t, "Q": sol.final_state.q, "R": sol.final_state.r },
    });
    Ok(Outcome { tables: vec![moments, densities], extra })
}

fn oja_theory(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let params = OjaParams::new(cfg.algorithm.tau, cfg.model.omega)?;
    let q0 = match cfg.oja.q0 {
        Some(q) => q,
        None => cfg.x0().expected_overlap(&cfg.prior()?),
    };
    let curve = closed_form_curve(q0, &params, cfg.oja.t_max, cfg.oja.dt_out)?;
    let mut table = Table::new("oja_theory", &["t", "Q"]);
    for (t, q) in &curve {
        table.push(vec![(*t).into(), (*q).into()]);
    }
    let extra = json!({ "q0": q0, "q_limit": oist_core::oja::steady_state_q(&params) });
    Ok(Outcome { tables: vec![table], extra })
}

fn fixed_point_row(table: &mut Table, fp: &FixedPoint) {
    table.push(vec![
        fp.q.into(),
        fp.r.into(),
        fp.residual.into(),
        fp.branch.as_str().into(),
        fp.converged.into(),
        fp.iterations.into(),
    ]);
}

fn steady(cfg: &ExperimentConfig, with_density: bool) -> Result<Outcome, CliError> {
    let scfg = cfg.steady_config()?;
    let opts = cfg.fixed_point_options()?;
    let prior = cfg.discrete_prior()?;
    let point = solve_at(&scfg, &prior, &cfg.steady.starts, &opts)?;

    let mut solutions = point.solutions.clone();
    solutions.sort_by(|a, b| b.q.abs().total_cmp(&a.q.abs()));
    if solutions.is_empty() {
        // report the best unconverged iterate so the failure is visible
        let best = cfg
            .steady
            .starts
            .iter()
            .map(|&q0| solve_fixed_point(&scfg, &prior, (q0, 0.0), &opts))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .min_by(|a, b| a.residual.total_cmp(&b.residual))
            .expect("starts checked nonempty");
        solutions.push(best);
    }
    let mut table = Table::new("steady", &["Q_star", "R_star", "residual", "branch", "converged", "iterations"]);
    solutions.iter().for_each(|fp| fixed_point_row(&mut table, fp));
    let selected = solutions[0];

    let mut tables = vec![table];
    if with_density {
        let grid = cfg.pde_config()?.grid;
        let xs = grid.centers();
        let mut dens = Table::new("steady_density", &["xi_atom", "x", "density"]);
        for atom in prior.atoms() {
            let law = steady_density(atom.value, selected.q, selected.r, &scfg)?;
            for x in &xs {
                dens.push(vec![atom.value.into(), (*x).into(), law.pdf(*x).into()]);
            }
        }
        tables.push(dens);
    }
    let extra = json!({
        "omega": scfg.omega,
        "Q_star": selected.q,
        "R_star": selected.r,
        "branch": selected.branch.as_str(),
        "converged": point.converged,
        "n_solutions": point.solutions.len(),
    });
    Ok(Outcome { tables, extra })
}

fn sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let scfg = cfg.steady_config()?;
    let opts = cfg.fixed_point_options()?;
    let prior = cfg.discrete_prior()?;
    let grid = cfg.sweep_grid()?;
    let result = sweep_omega(&scfg, &prior, &grid, &cfg.steady.starts, &opts)?;
    let mut table = Table::new("sweep", &["omega", "Q_star", "converged", "branch", "n_solutions"]);
    for p in &result.points {
        table.push(vec![p.omega.into(), p.q_star.into(), p.converged.into(), p.branch.as_str().into(), p.solutions.len().into()]);
    }
    let extra = json!({ "omega_c": result.omega_c, "omega_c_uncertainty": result.omega_c_uncertainty });
    Ok(Outcome { tables: vec![table], extra })
}
