//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
//! 3 reference guard tripped, 4 a diagnostic check failed.

pub mod config;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dynamics::{integrate_trajectory, Galerkin};
use crate::error::{Error, Result};
use crate::experiments::{
    cellwise_moment, convergence_in_dt, convergence_in_n, fit_rate, increment_energy_check,
    sine_moment_check, ConvergenceTable, Mode,
};
use crate::kernels::{kernel_bounds, project_kernel, projection_error, KernelNorm};
use crate::noise::{psi, sample_increments, trace, NoiseStream};
use config::{LoadedConfig, Overrides};
use plot::{LogLogPlot, Point};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "graphon-spde",
    version,
    about = "Strong-convergence experiments for noise-forced nonlocal dynamics on graphons"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment file (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed; trial k uses seed + k
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Number of Monte Carlo trials
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for the trial pool
    #[arg(long, global = true, value_name = "N", env = "GRAPHON_SPDE_THREADS")]
    pub threads: Option<usize>,
    /// Measure the maximum error over 10 checkpoints instead of the error at T
    #[arg(long, global = true)]
    pub max_error: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one sample path and write the trajectory
    Simulate,
    /// Spatial convergence study (mode = "vary_n")
    ConvergeN,
    /// Temporal convergence study (mode = "vary_dt")
    ConvergeDt,
    /// Run the statistical and analytic self-checks
    Check,
    /// Tabulate the noise rate functional Ψ(n)
    Psi,
    /// Kernel bounds and projection errors
    KernelInfo,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ConvergeN => "converge-n",
            Command::ConvergeDt => "converge-dt",
            Command::Check => "check",
            Command::Psi => "psi",
            Command::KernelInfo => "kernel-info",
        }
    }
}

/// Parses the process arguments, runs the command, and returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    run_cli(cli)
}

pub fn run_cli(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            match e {
                Error::Config { .. } => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let c = &cli.common;
    if let Some(k) = c.threads {
        if k == 0 {
            return Err(Error::Config {
                path: PathBuf::from("--threads"),
                line: 0,
                message: "thread count must be positive".into(),
            });
        }
        // a second call in the same process keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global();
    }
    let mut cfg = match &c.config {
        Some(path) => LoadedConfig::load(path)?,
        None => LoadedConfig::parse(Path::new("<defaults>"), String::new())?,
    };
    cfg.apply(&Overrides {
        seed: c.seed,
        trials: c.trials,
        out: c.out.clone(),
        max_error: c.max_error,
    });
    let name = cli.command.name();
    match cli.command {
        Command::Simulate => simulate(&cfg, name),
        Command::ConvergeN => converge(&cfg, "vary_n", name),
        Command::ConvergeDt => converge(&cfg, "vary_dt", name),
        Command::Check => check(&cfg),
        Command::Psi => psi_table(&cfg),
        Command::KernelInfo => kernel_info(&cfg),
    }
}

fn output_dir(cfg: &LoadedConfig) -> Result<PathBuf> {
    let dir = cfg.config.output.dir.clone();
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate(cfg: &LoadedConfig, command: &str) -> Result<i32> {
    let prob = cfg.problem()?;
    let e = &cfg.config.experiment;
    let n =
        e.n.ok_or_else(|| cfg.error_at("experiment", "n", "simulate needs experiment.n"))?;
    let dt =
        e.dt.ok_or_else(|| cfg.error_at("experiment", "dt", "simulate needs experiment.dt"))?;
    let steps = prob
        .steps_for(dt)
        .map_err(|err| cfg.error_at("experiment", "dt", err.to_string()))?;
    let stride = e.stride.unwrap_or(steps);
    if stride == 0 {
        return Err(cfg.error_at("experiment", "stride", "stride must be positive"));
    }
    let n_fine = e
        .n_fine
        .unwrap_or_else(|| n.max(2 * prob.noise.modes()).next_power_of_two());
    let seed = cfg.seed();
    let galerkin = Galerkin::new(&prob, n)?;
    let replay = |err: Error| Error::Trial {
        trial: 0,
        seed,
        source: Box::new(err),
    };
    let traj = if cfg.wants("noise") {
        let path = sample_increments(&prob.noise, n_fine, dt, steps, seed).map_err(replay)?;
        let mut bytes = Vec::new();
        path.write_binary(&mut bytes)?;
        let dir = output_dir(cfg)?;
        write_file(&dir.join("noise.bin"), &bytes)?;
        integrate_trajectory(&prob, &galerkin, dt, &mut path.reader(), stride)
    } else {
        NoiseStream::new(&prob.noise, n_fine, dt, steps, seed)
            .and_then(|mut s| integrate_trajectory(&prob, &galerkin, dt, &mut s, stride))
    }
    .map_err(replay)?;

    let dir = output_dir(cfg)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    write_file(&dir.join("trajectory.csv"), &csv)?;
    let mut fin = Vec::new();
    traj.final_state().write_csv(&mut fin)?;
    write_file(&dir.join("final_state.csv"), &fin)?;
    write_file(
        &dir.join("simulate.meta.toml"),
        cfg.sidecar(command)?.as_bytes(),
    )?;
    Ok(EXIT_OK)
}

fn converge(cfg: &LoadedConfig, mode: &str, command: &str) -> Result<i32> {
    let exp = cfg.experiment(Some(mode))?;
    let table = match exp.mode {
        Mode::VaryN { .. } => convergence_in_n(&exp)?,
        Mode::VaryDt { .. } => convergence_in_dt(&exp)?,
    };
    println!("{table}");
    let dir = output_dir(cfg)?;
    if cfg.wants("csv") {
        let mut csv = Vec::new();
        table.write_csv(&mut csv)?;
        write_file(&dir.join("results.csv"), &csv)?;
    }
    if cfg.wants("svg") {
        write_file(
            &dir.join("convergence.svg"),
            convergence_plot(&table).as_bytes(),
        )?;
    }
    write_file(
        &dir.join("results.meta.toml"),
        cfg.sidecar(command)?.as_bytes(),
    )?;
    if !table.guard.passed {
        let advice = match table.mode {
            Mode::VaryN { .. } => "raise n_star",
            Mode::VaryDt { .. } => "lower dt_star",
        };
        eprintln!(
            "reference guard tripped: finest MSE {:.3e} is not {}× the reference-pair MSE {:.3e}; {advice}",
            table.guard.finest_mse,
            crate::experiments::GUARD_FACTOR,
            table.guard.reference_mse
        );
        return Ok(EXIT_GUARD);
    }
    Ok(EXIT_OK)
}

fn convergence_plot(table: &ConvergenceTable) -> String {
    let (title, x_label) = match table.mode {
        Mode::VaryN { .. } => ("Mean square error vs n", "n"),
        Mode::VaryDt { .. } => ("Mean square error vs Δt", "Δt"),
    };
    LogLogPlot {
        title,
        x_label,
        y_label: "MSE",
        points: table
            .abscissae()
            .into_iter()
            .zip(&table.rows)
            .map(|(x, r)| Point {
                x,
                y: r.mse,
                err: r.std,
            })
            .collect(),
        fit: table
            .fit
            .as_ref()
            .map(|f| (f.intercept, f.slope, f.stderr_slope)),
    }
    .to_svg()
}

struct CheckRow {
    name: String,
    observed: f64,
    threshold: f64,
    passed: bool,
}

fn check(cfg: &LoadedConfig) -> Result<i32> {
    let prob = cfg.problem()?;
    let section = cfg.config.check.clone();
    let n = section.as_ref().and_then(|c| c.n).unwrap_or(64);
    let trials = cfg
        .trials_flag
        .or(section.as_ref().and_then(|c| c.trials))
        .unwrap_or(10_000);
    let slices = section.as_ref().and_then(|c| c.slices).unwrap_or(10_000);
    if trials < 1000 {
        return Err(cfg.error_at("check", "trials", "moment checks need at least 1000 trials"));
    }
    let seed = cfg.seed();
    let spec = &prob.noise;
    let t = prob.horizon;

    let (k1, k2) = kernel_bounds(&prob.kernel, 1024)?;
    println!("kernel {}: K1 = {k1}, K2 = {k2}", prob.kernel);
    println!(
        "noise {spec}: trace = {:.10e}, tail = {:.3e}",
        trace(spec),
        spec.tail()
    );
    let psis: Vec<(usize, f64)> = (4..=12)
        .map(|k| 1usize << k)
        .map(|m| (m, psi(spec, m)))
        .collect();
    for (m, v) in &psis {
        println!("psi({m}) = {v:.6e}");
    }

    let mut rows = Vec::new();
    rows.push(CheckRow {
        name: "kernel bounds finite".into(),
        observed: k1.max(k2),
        threshold: f64::INFINITY,
        passed: k1.is_finite() && k2.is_finite(),
    });
    let monotone = psis.windows(2).all(|w| w[1].1 <= w[0].1);
    rows.push(CheckRow {
        name: "psi nonincreasing in n".into(),
        observed: psis.last().map_or(0.0, |p| p.1),
        threshold: psis.first().map_or(0.0, |p| p.1),
        passed: monotone,
    });

    let n_fine = n.max(2 * spec.modes()).next_power_of_two();
    let energy = increment_energy_check(spec, n_fine, t / 1000.0, slices, seed)?;
    let dev = (energy.mean - energy.projected_trace).abs();
    rows.push(CheckRow {
        name: format!("E|dW|^2/dt = trace (n={n_fine}, {slices} slices)"),
        observed: dev,
        threshold: 4.0 * energy.stderr,
        passed: dev <= 4.0 * energy.stderr,
    });

    let sine = sine_moment_check(spec, t, n, trials, seed)?;
    rows.push(CheckRow {
        name: format!("|E sin(2 pi W)| = 0 (n={n}, {trials} trials)"),
        observed: sine.norm_of_mean,
        threshold: sine.threshold,
        passed: sine.passed(),
    });

    let cos = cellwise_moment(spec, t, n, trials, seed, |w| {
        (2.0 * std::f64::consts::PI * w).cos()
    })?;
    let predicted: Vec<f64> = spec
        .cell_variances(n)
        .iter()
        .map(|v| (-2.0 * std::f64::consts::PI.powi(2) * t * v).exp())
        .collect();
    let worst = cos
        .mean
        .iter()
        .zip(&cos.stderr)
        .zip(&predicted)
        .map(|((m, se), p)| {
            let d = (m - p).abs();
            if d == 0.0 {
                0.0
            } else {
                d / se
            }
        })
        .fold(0.0, f64::max);
    rows.push(CheckRow {
        name: "E cos(2 pi W) = exp(-2 pi^2 var), worst cell in stderr units".into(),
        observed: worst,
        threshold: 4.0,
        passed: worst <= 4.0,
    });

    println!(
        "{:<64} {:>14} {:>14}  result",
        "check", "observed", "threshold"
    );
    for r in &rows {
        println!(
            "{:<64} {:>14.6e} {:>14.6e}  {}",
            r.name,
            r.observed,
            r.threshold,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    Ok(if rows.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_CHECK
    })
}

fn default_grid(cfg: &LoadedConfig, fallback: &[usize]) -> Vec<usize> {
    cfg.config
        .experiment
        .n_list
        .clone()
        .filter(|l| !l.is_empty())
        .unwrap_or_else(|| fallback.to_vec())
}

fn psi_table(cfg: &LoadedConfig) -> Result<i32> {
    let spec = cfg.noise()?;
    let ns = default_grid(cfg, &[16, 32, 64, 128, 256, 512, 1024, 2048, 4096]);
    println!("n,psi");
    let mut pts = Vec::new();
    for &n in &ns {
        let v = psi(&spec, n);
        println!("{n},{v}");
        pts.push((n as f64, v));
    }
    if let Ok(fit) = fit_rate(&pts) {
        print!("# slope={},stderr={}", fit.slope, fit.stderr_slope);
        if let Some(s) = spec.s() {
            print!(",predicted={}", -(s - 1.0) / 2.0);
        }
        println!();
    }
    Ok(EXIT_OK)
}

fn kernel_info(cfg: &LoadedConfig) -> Result<i32> {
    let prob = cfg.problem()?;
    let kernel = &prob.kernel;
    let ns = default_grid(cfg, &[16, 32, 64, 128, 256]);
    let (k1, k2) = kernel_bounds(kernel, 1024)?;
    println!("kernel: {kernel}");
    println!("circulant: {}", kernel.is_circulant());
    match kernel.beta() {
        Some(b) => println!("beta: {b}"),
        None => println!("beta: unknown"),
    }
    println!("K1: {k1}");
    println!("K2: {k2}");
    let resolution = ns.iter().copied().max().unwrap_or(1) * 16;
    println!("n,l2xy_error,l1y_linfx_error");
    let (mut l2, mut l1) = (Vec::new(), Vec::new());
    for &n in &ns {
        let kn = project_kernel(kernel, n, crate::dynamics::KERNEL_TOL)?;
        let a = projection_error(kernel, &kn, KernelNorm::L2xy, resolution)?;
        let b = projection_error(kernel, &kn, KernelNorm::L1yLinfx, resolution)?;
        println!("{n},{a},{b}");
        l2.push((n as f64, a));
        l1.push((n as f64, b));
    }
    for (name, pts) in [("l2xy", &l2), ("l1y_linfx", &l1)] {
        if let Ok(fit) = fit_rate(pts) {
            println!("# {name} slope={},stderr={}", fit.slope, fit.stderr_slope);
        }
    }
    Ok(EXIT_OK)
}
