//! Config-driven pipelines behind the `wrjump` binary.
//!
//! Each subcommand validates its config block, runs the corresponding
//! library routine, writes CSV/JSON outputs into the output directory, and
//! finishes with a `manifest.json` (config echo, seed, crate version, wall
//! time, output list) sufficient to reproduce the run. Outputs are
//! byte-identical across reruns with the same config and seed; only the
//! manifest's wall-time field varies.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load_config, RunConfig};
use crate::error::{Error, Result};
use crate::guarantees::{bounds_report, BanachScaleParams};
use crate::io as fmt_io;
use crate::kinetic::{integrate_rk4, picard_solve, KineticRun, Method};
use crate::mesoscale::meso_experiment;
use crate::particles::{init_poisson, simulate, SimStats};
use crate::seeds::{derive_seed, stream_rng};
use crate::stationary::{
    classify_stability, constant_solutions, critical_wavenumber, dispersion_growth,
};

/// The six pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Kinetic,
    Simulate,
    Stationary,
    Stability,
    Meso,
    Bounds,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Kinetic => "kinetic",
            Task::Simulate => "simulate",
            Task::Stationary => "stationary",
            Task::Stability => "stability",
            Task::Meso => "meso",
            Task::Bounds => "bounds",
        }
    }
}

/// Resolved invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub task: Task,
    pub config_path: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub quiet: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    crate_version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    outputs: Vec<String>,
    /// isolated here so everything else is reproducible byte-for-byte
    wall_time_s: f64,
}

/// Exit code classification: 1 for configuration/validation problems,
/// 2 for runtime failures.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidKernel(_)
        | Error::UnsupportedDimension(_)
        | Error::NegativeRadius(_)
        | Error::InvalidGrid(_)
        | Error::InvalidConfig(_)
        | Error::GridMismatch(_)
        | Error::ScaleOutOfRange(_)
        | Error::ThetaOrdering { .. }
        | Error::UnboundedHorizon
        | Error::BudgetExceeded { .. }
        | Error::ZeroMassKernel => 1,
        Error::Integrator(_)
        | Error::PicardDiverged { .. }
        | Error::EmptyConfiguration
        | Error::Io(_)
        | Error::Json(_) => 2,
    }
}

/// Run an invocation end to end. Returns the process exit code.
pub fn execute(inv: &Invocation) -> i32 {
    if let Some(n) = inv.workers {
        // ignore the error when a pool already exists (tests, repeated calls)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(inv) {
        Ok(outputs) => {
            if !inv.quiet {
                for path in outputs {
                    println!("{}", path.display());
                }
            }
            0
        }
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn run(inv: &Invocation) -> Result<Vec<PathBuf>> {
    let started = std::time::Instant::now();
    let mut config = load_config(&inv.config_path)?;
    if let Some(seed) = inv.seed {
        config.seed = seed;
    }
    let out_dir = inv
        .out_dir
        .clone()
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| {
            Error::InvalidConfig("no output directory: set `out_dir` or pass --out".into())
        })?;

    // everything cheap to validate happens before the directory is created
    let writer = prepare(&config, inv.task)?;
    fs::create_dir_all(&out_dir)?;
    let mut outputs = writer(&config, &out_dir)?;

    let manifest = Manifest {
        command: inv.task.name(),
        crate_version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config: &config,
        outputs: outputs
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let manifest_path = out_dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    outputs.push(manifest_path);
    Ok(outputs)
}

type PipelineFn = Box<dyn Fn(&RunConfig, &Path) -> Result<Vec<PathBuf>>>;

/// Validate the pieces of `config` that `task` needs and hand back the
/// pipeline closure. Validation failures here leave no files behind.
fn prepare(config: &RunConfig, task: Task) -> Result<PipelineFn> {
    match task {
        Task::Kinetic => {
            let t = config
                .kinetic
                .clone()
                .ok_or_else(|| Error::InvalidConfig("missing `kinetic` block".into()))?;
            t.run.validate()?;
            let grid = config.grid_required()?;
            t.initial.build(grid)?;
            Ok(Box::new(move |cfg, dir| run_kinetic(cfg, &t, dir)))
        }
        Task::Simulate => {
            let t = config
                .simulate
                .clone()
                .ok_or_else(|| Error::InvalidConfig("missing `simulate` block".into()))?;
            if t.intensities[0] < 0.0 || t.intensities[1] < 0.0 {
                return Err(Error::InvalidConfig("negative intensity".into()));
            }
            if !(t.t_end >= 0.0) || !(t.snapshot_every > 0.0) || t.replicas == 0 {
                return Err(Error::InvalidConfig(
                    "simulate needs t_end >= 0, snapshot_every > 0, replicas >= 1".into(),
                ));
            }
            config.grid_required()?;
            Ok(Box::new(move |cfg, dir| run_simulate(cfg, &t, dir)))
        }
        Task::Stationary => {
            let t = config
                .stationary
                .clone()
                .ok_or_else(|| Error::InvalidConfig("missing `stationary` block".into()))?;
            if !(t.ctilde[0] > 0.0) || !(t.ctilde[1] > 0.0) {
                return Err(Error::InvalidConfig("ctilde must be positive".into()));
            }
            Ok(Box::new(move |cfg, dir| run_stationary(cfg, &t, dir)))
        }
        Task::Stability => {
            let t = config
                .stability
                .clone()
                .ok_or_else(|| Error::InvalidConfig("missing `stability` block".into()))?;
            if t.points < 2 {
                return Err(Error::InvalidConfig("need at least 2 scan points".into()));
            }
            Ok(Box::new(move |cfg, dir| run_stability(cfg, &t, dir)))
        }
        Task::Meso => {
            let t = config
                .meso
                .clone()
                .ok_or_else(|| Error::InvalidConfig("missing `meso` block".into()))?;
            let grid = config.grid_required()?;
            t.initial.build(grid)?;
            Ok(Box::new(move |cfg, dir| run_meso(cfg, &t, dir)))
        }
        Task::Bounds => {
            let t = config
                .bounds
                .clone()
                .ok_or_else(|| Error::InvalidConfig("missing `bounds` block".into()))?;
            Ok(Box::new(move |cfg, dir| run_bounds(cfg, &t, dir)))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct KineticRunManifest<'a> {
    method: Method,
    model: &'a crate::kinetic::ModelParams,
    grid: crate::kernels::GridSpec,
    run: &'a crate::kinetic::KineticRunConfig,
    snapshots: &'a [crate::kinetic::SnapshotDiagnostics],
    clamped_values: u64,
    picard_windows: &'a [f64],
    picard_iterations: usize,
    apriori_passed: bool,
    worst_envelope_ratio: f64,
    worst_min: f64,
}

fn run_kinetic(
    config: &RunConfig,
    task: &crate::config::KineticTask,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let grid = config.grid_required()?;
    let rho0 = task.initial.build(grid)?;
    let KineticRun {
        trajectory,
        diagnostics,
    } = match task.run.method {
        Method::Rk4 => integrate_rk4(&rho0, &config.model, &task.run)?,
        Method::Picard => picard_solve(&rho0, &config.model, task.run.t_end, &task.run)?,
    };
    let report = crate::kinetic::apriori_check(&trajectory, &config.model, &rho0);

    let mut outputs = Vec::new();
    // picard meshes are fine; only write the snapshot cadence
    let cadence = task.run.snapshot_every;
    let mut written = 0usize;
    let mut next_t = 0.0;
    for (k, &t) in trajectory.times.iter().enumerate() {
        let due = t + 1e-12 >= next_t || k + 1 == trajectory.times.len();
        if !due {
            continue;
        }
        next_t = t + cadence;
        for i in 0..2 {
            let path = dir.join(format!("kinetic_{written:04}_rho{i}.csv"));
            let mut file = fs::File::create(&path)?;
            fmt_io::write_field_csv(trajectory.states[k].component(i), &mut file)?;
            outputs.push(path);
        }
        written += 1;
    }

    let manifest = KineticRunManifest {
        method: task.run.method,
        model: &config.model,
        grid,
        run: &task.run,
        snapshots: &diagnostics.snapshots,
        clamped_values: diagnostics.clamped_values,
        picard_windows: &diagnostics.picard_windows,
        picard_iterations: diagnostics.picard_iterations,
        apriori_passed: report.passed(),
        worst_envelope_ratio: report.worst_envelope_ratio,
        worst_min: report.worst_min,
    };
    let path = dir.join("kinetic_run.json");
    write_json(&path, &manifest)?;
    outputs.push(path);
    Ok(outputs)
}

#[derive(Serialize)]
struct SimulateManifest {
    seed: u64,
    replicas: usize,
    per_replica: Vec<SimStats>,
    total_events: u64,
    acceptance_ratio: [f64; 2],
}

fn run_simulate(
    config: &RunConfig,
    task: &crate::config::SimulateTask,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let grid = config.grid_required()?;
    let model = config.model;
    let results: Vec<(Vec<crate::particles::Snapshot>, SimStats)> = (0..task.replicas)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let mut rng = stream_rng(config.seed, &[r as u64, 0]);
            let config0 = init_poisson(
                grid.box_length(),
                grid.dimension(),
                task.intensities[0],
                task.intensities[1],
                &mut rng,
            )?;
            let out = simulate(
                &config0,
                &model,
                task.t_end,
                task.snapshot_every,
                derive_seed(config.seed, &[r as u64, 1]),
            )?;
            Ok((out.snapshots, out.stats))
        })
        .collect::<Result<Vec<_>>>()?;

    let csv_path = dir.join("snapshots.csv");
    let mut file = std::io::BufWriter::new(fs::File::create(&csv_path)?);
    fmt_io::write_snapshot_header(grid.dimension(), &mut file)?;
    for (r, (snapshots, _)) in results.iter().enumerate() {
        for snap in snapshots {
            fmt_io::write_snapshot_rows(snap, r as u64, &mut file)?;
        }
    }
    file.flush()?;

    let mut attempted = [0u64; 2];
    let mut accepted = [0u64; 2];
    for (_, stats) in &results {
        for i in 0..2 {
            attempted[i] += stats.events_attempted[i];
            accepted[i] += stats.events_accepted[i];
        }
    }
    let ratio = |i: usize| {
        if attempted[i] == 0 {
            1.0
        } else {
            accepted[i] as f64 / attempted[i] as f64
        }
    };
    let manifest = SimulateManifest {
        seed: config.seed,
        replicas: task.replicas,
        per_replica: results.iter().map(|(_, s)| *s).collect(),
        total_events: attempted[0] + attempted[1],
        acceptance_ratio: [ratio(0), ratio(1)],
    };
    let json_path = dir.join("sim_stats.json");
    write_json(&json_path, &manifest)?;
    Ok(vec![csv_path, json_path])
}

fn run_stationary(
    config: &RunConfig,
    task: &crate::config::StationaryTask,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let points = constant_solutions(task.ctilde[0], task.ctilde[1], &config.model)?;
    let path = dir.join("stationary.json");
    write_json(&path, &points)?;
    Ok(vec![path])
}

#[derive(Serialize)]
struct StabilitySummary {
    c: [f64; 2],
    product: f64,
    classification: crate::stationary::Classification,
    p_star: Option<f64>,
}

fn run_stability(
    config: &RunConfig,
    task: &crate::config::StabilityTask,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let model = &config.model;
    let (c0, c1) = (task.c[0], task.c[1]);
    let p_star = critical_wavenumber(c0, c1, model)?;
    let p_max = task.p_max.unwrap_or_else(|| {
        let natural = 8.0 / model.potential(0).range().min(model.potential(1).range());
        match p_star {
            Some(p) => natural.max(2.0 * p),
            None => natural,
        }
    });
    let mut table = Vec::with_capacity(task.points);
    for k in 0..task.points {
        let p = p_max * k as f64 / (task.points - 1) as f64;
        table.push(dispersion_growth(p, c0, c1, model)?);
    }
    let csv_path = dir.join("dispersion.csv");
    let mut file = fs::File::create(&csv_path)?;
    fmt_io::write_dispersion_csv(&table, &mut file)?;

    let (classification, product) = classify_stability(c0, c1, model);
    let summary = StabilitySummary {
        c: task.c,
        product,
        classification,
        p_star,
    };
    let json_path = dir.join("stability.json");
    write_json(&json_path, &summary)?;
    Ok(vec![csv_path, json_path])
}

fn run_meso(config: &RunConfig, task: &crate::config::MesoTask, dir: &Path) -> Result<Vec<PathBuf>> {
    let grid = config.grid_required()?;
    let rho0 = task.initial.build(grid)?;
    let report = meso_experiment(&config.model, &rho0, &task.run, config.seed)?;
    let json_path = dir.join("scaling.json");
    write_json(&json_path, &report)?;
    let csv_path = dir.join("scaling.csv");
    let mut file = fs::File::create(&csv_path)?;
    fmt_io::write_scaling_csv(&report, &mut file)?;
    Ok(vec![json_path, csv_path])
}

fn run_bounds(
    config: &RunConfig,
    task: &crate::config::BoundsTask,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let alpha = task.alpha.unwrap_or_else(|| config.model.alpha_max());
    let c = task.c.unwrap_or_else(|| config.model.c_max());
    let params = BanachScaleParams::new(alpha, c)?;
    let report = bounds_report(
        task.theta,
        task.theta_prime,
        task.theta_dd,
        &params,
        Some(&config.model),
    )?;
    let path = dir.join("bounds.json");
    write_json(&path, &report)?;
    Ok(vec![path])
}
