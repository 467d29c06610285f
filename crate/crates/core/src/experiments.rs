//! Monte Carlo strong-error studies.
//!
//! Every trial synthesizes one fine noise path from its own ChaCha stream and
//! drives all discretizations of the study with coarsenings of it. Trials run
//! on the rayon pool; results are reduced in trial order, so the statistics do
//! not depend on the number of threads.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::{coupled_solve_source, Galerkin, Problem};
use crate::error::{invalid, Error, Result};
use crate::grid::{block_average, l2_distance, nesting_ratio};
use crate::noise::{trial_seed, IncrementSource, NoiseStream, QWienerSpec};

/// Which discretization parameter a study varies.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Fixed `dt`; each `n` is compared with the `n_star` solution.
    VaryN {
        dt: f64,
        n_list: Vec<usize>,
        n_star: usize,
    },
    /// Fixed `n`; each `dt` is compared with the `dt_star` solution.
    VaryDt {
        n: usize,
        dt_list: Vec<f64>,
        dt_star: f64,
    },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::VaryN { .. } => "vary_n",
            Mode::VaryDt { .. } => "vary_dt",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub mode: Mode,
    pub trials: usize,
    pub seed: u64,
    /// Noise synthesis resolution; defaults to the smallest power of two that
    /// covers both the finest grid and twice the number of modes.
    pub n_fine: Option<usize>,
    /// When set, the error of a trial is the maximum over this many equally
    /// spaced times instead of the error at `T`.
    pub checkpoints: Option<usize>,
    /// Worker threads; `None` uses the current rayon pool.
    pub threads: Option<usize>,
}

/// Checkpoint count used for max-over-time errors.
pub const MAX_ERROR_CHECKPOINTS: usize = 10;

/// The reference solution must be at least this much closer to the truth
/// than the finest study point, measured by the MSE between the reference and
/// its half-resolution neighbour.
pub const GUARD_FACTOR: f64 = 5.0;

impl ExperimentConfig {
    pub fn new(problem: Problem, mode: Mode, trials: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            problem,
            mode,
            trials,
            seed,
            n_fine: None,
            checkpoints: None,
            threads: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn s(&self) -> Option<f64> {
        self.problem.noise.s()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        match &self.mode {
            Mode::VaryN { dt, n_list, n_star } => {
                if n_list.is_empty() {
                    return Err(invalid("n_list is empty"));
                }
                self.problem.steps_for(*dt)?;
                for &n in n_list {
                    if n == 0 || n >= *n_star || n_star % n != 0 {
                        return Err(invalid(format!(
                            "n = {n} must be below and divide n_star = {n_star}"
                        )));
                    }
                }
                if n_star % 2 != 0 {
                    return Err(invalid(format!("n_star = {n_star} must be even")));
                }
            }
            Mode::VaryDt {
                n,
                dt_list,
                dt_star,
            } => {
                if dt_list.is_empty() {
                    return Err(invalid("dt_list is empty"));
                }
                if *n == 0 {
                    return Err(invalid("n must be positive"));
                }
                self.problem.steps_for(*dt_star)?;
                self.problem.steps_for(2.0 * dt_star)?;
                for &dt in dt_list {
                    if !(dt > *dt_star) {
                        return Err(invalid(format!(
                            "dt = {dt} must exceed dt_star = {dt_star}"
                        )));
                    }
                    self.problem.steps_for(dt)?;
                    crate::noise::step_ratio(dt, *dt_star)?;
                }
            }
        }
        let n_fine = self.fine_resolution();
        let finest = self.finest_n();
        nesting_ratio(n_fine, finest)?;
        Ok(())
    }

    fn finest_n(&self) -> usize {
        match &self.mode {
            Mode::VaryN { n_star, .. } => *n_star,
            Mode::VaryDt { n, .. } => *n,
        }
    }

    pub fn fine_resolution(&self) -> usize {
        self.n_fine.unwrap_or_else(|| {
            self.finest_n()
                .max(2 * self.problem.noise.modes())
                .next_power_of_two()
        })
    }

    pub fn fine_dt(&self) -> f64 {
        match &self.mode {
            Mode::VaryN { dt, .. } => *dt,
            Mode::VaryDt { dt_star, .. } => *dt_star,
        }
    }

    /// `(n, dt)` of every study point, in table order.
    pub fn points(&self) -> Vec<(usize, f64)> {
        match &self.mode {
            Mode::VaryN { dt, n_list, .. } => n_list.iter().map(|&n| (n, *dt)).collect(),
            Mode::VaryDt { n, dt_list, .. } => dt_list.iter().map(|&dt| (*n, dt)).collect(),
        }
    }

    /// The reference discretization and its guard neighbour.
    pub fn reference(&self) -> ((usize, f64), (usize, f64)) {
        match &self.mode {
            Mode::VaryN { dt, n_star, .. } => ((*n_star, *dt), (n_star / 2, *dt)),
            Mode::VaryDt { n, dt_star, .. } => ((*n, *dt_star), (*n, 2.0 * dt_star)),
        }
    }

    fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            Some(k) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build()
                    .map_err(|e| invalid(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
            None => Ok(f()),
        }
    }
}

/// Strong-error statistics at one discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n: usize,
    pub dt: f64,
    /// per-trial `‖u − u_ref‖_{L²}` in trial order
    pub errors: Vec<f64>,
    /// mean of the squared errors
    pub mse: f64,
    /// unbiased standard deviation of the squared errors
    pub std: f64,
    /// `std / √trials`
    pub stderr: f64,
}

impl EnsembleStats {
    pub fn from_errors(n: usize, dt: f64, errors: Vec<f64>) -> Self {
        let (mse, std, stderr) = mean_std_stderr(errors.iter().map(|e| e * e));
        Self {
            n,
            dt,
            errors,
            mse,
            std,
            stderr,
        }
    }

    pub fn trials(&self) -> usize {
        self.errors.len()
    }
}

/// Mean, unbiased standard deviation and standard error; a single sample has
/// zero spread by convention.
pub fn mean_std_stderr(values: impl IntoIterator<Item = f64>) -> (f64, f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / m;
    if v.len() == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    let std = var.sqrt();
    (mean, std, std / m.sqrt())
}

/// Ordinary least squares fit of `log y = intercept + slope · log x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(invalid(format!(
            "a rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(invalid(format!(
            "rate fit needs positive data, got ({x}, {y})"
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("rate fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = logs
        .iter()
        .map(|p| {
            let r = p.1 - intercept - slope * p.0;
            r * r
        })
        .sum();
    let stderr_slope = (ssr / (m - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        stderr_slope,
        points: logs,
    })
}

/// Outcome of the reference-validity guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardReport {
    /// MSE at the finest study point
    pub finest_mse: f64,
    /// MSE between the reference and its half-resolution neighbour
    pub reference_mse: f64,
    pub passed: bool,
}

impl GuardReport {
    pub fn ratio(&self) -> f64 {
        self.finest_mse / self.reference_mse
    }
}

/// A full study: one row per point, the fit, and the guard.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub mode: Mode,
    pub s: Option<f64>,
    pub seed: u64,
    pub rows: Vec<EnsembleStats>,
    /// `None` with fewer than three points
    pub fit: Option<RateFit>,
    pub guard: GuardReport,
}

impl ConvergenceTable {
    /// The varied parameter of each row (`n` or `dt`).
    pub fn abscissae(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| match self.mode {
                Mode::VaryN { .. } => r.n as f64,
                Mode::VaryDt { .. } => r.dt,
            })
            .collect()
    }

    /// Results CSV: `mode,s,n,dt,trials,mse,std,stderr,seed` and a footer
    /// `# slope=…,stderr=…` when a fit is available.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mode,s,n,dt,trials,mse,std,stderr,seed")?;
        let s = self.s.map(|s| s.to_string()).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{s},{},{},{},{},{},{},{}",
                self.mode.name(),
                r.n,
                r.dt,
                r.trials(),
                r.mse,
                r.std,
                r.stderr,
                self.seed
            )?;
        }
        if let Some(fit) = &self.fit {
            writeln!(w, "# slope={},stderr={}", fit.slope, fit.stderr_slope)?;
        }
        Ok(())
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>12} {:>14} {:>14}", "n", "dt", "mse", "stderr")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8} {:>12e} {:>14.6e} {:>14.6e}",
                r.n, r.dt, r.mse, r.stderr
            )?;
        }
        if let Some(fit) = &self.fit {
            writeln!(f, "slope {:.4} ± {:.4}", fit.slope, fit.stderr_slope)?;
        }
        write!(
            f,
            "reference guard: {} (finest mse / reference mse = {:.3})",
            if self.guard.passed { "ok" } else { "TRIPPED" },
            self.guard.ratio()
        )
    }
}

/// Per-trial errors at each of `points` against `reference`.
fn trial_errors(
    cfg: &ExperimentConfig,
    points: &[(usize, f64)],
    reference: (usize, f64),
) -> Result<Vec<Vec<f64>>> {
    let prob = &cfg.problem;
    let mut ns: Vec<usize> = points.iter().map(|p| p.0).chain([reference.0]).collect();
    ns.sort_unstable();
    ns.dedup();
    let galerkins = ns
        .iter()
        .map(|&n| Galerkin::new(prob, n))
        .collect::<Result<Vec<_>>>()?;
    let lookup = |n: usize| &galerkins[ns.binary_search(&n).expect("registered")];
    let mut targets: Vec<(&Galerkin, f64)> =
        points.iter().map(|&(n, dt)| (lookup(n), dt)).collect();
    targets.push((lookup(reference.0), reference.1));

    let n_fine = cfg.fine_resolution();
    let dt_fine = cfg.fine_dt();
    let fine_steps = prob.steps_for(dt_fine)?;
    let checkpoints = cfg.checkpoints.unwrap_or(0);

    let run_trial = |trial: usize| -> Result<Vec<f64>> {
        let seed = trial_seed(cfg.seed, trial);
        let wrap = |e: Error| Error::Trial {
            trial,
            seed,
            source: Box::new(e),
        };
        let mut stream =
            NoiseStream::new(&prob.noise, n_fine, dt_fine, fine_steps, seed).map_err(wrap)?;
        let run = coupled_solve_source(prob, &targets, &mut stream, checkpoints).map_err(wrap)?;
        let snapshots: Vec<&Vec<_>> = if checkpoints > 0 {
            run.checkpoints.iter().collect()
        } else {
            vec![&run.finals]
        };
        let mut errors = vec![0.0_f64; points.len()];
        for states in snapshots {
            let reference = states.last().expect("reference target");
            for (e, u) in errors.iter_mut().zip(states) {
                *e = e.max(l2_distance(u, reference).map_err(wrap)?);
            }
        }
        if let Some(bad) = errors.iter().position(|e| !e.is_finite()) {
            return Err(wrap(Error::NonFinite { cell: bad, step: 0 }));
        }
        Ok(errors)
    };

    let results: Vec<Result<Vec<f64>>> =
        cfg.in_pool(|| (0..cfg.trials).into_par_iter().map(run_trial).collect())?;
    // first failure in trial order, independent of scheduling
    results.into_iter().collect()
}

fn transpose_stats(points: &[(usize, f64)], per_trial: &[Vec<f64>]) -> Vec<EnsembleStats> {
    points
        .iter()
        .enumerate()
        .map(|(k, &(n, dt))| {
            EnsembleStats::from_errors(n, dt, per_trial.iter().map(|e| e[k]).collect())
        })
        .collect()
}

/// Strong-error statistics at `point` against the configured reference.
pub fn run_ensemble(cfg: &ExperimentConfig, point: (usize, f64)) -> Result<EnsembleStats> {
    cfg.validate()?;
    let (reference, _) = cfg.reference();
    let per_trial = trial_errors(cfg, &[point], reference)?;
    Ok(transpose_stats(&[point], &per_trial).remove(0))
}

fn run_study(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let mut points = cfg.points();
    let (reference, neighbour) = cfg.reference();
    points.push(neighbour);
    let per_trial = trial_errors(cfg, &points, reference)?;
    let mut rows = transpose_stats(&points, &per_trial);
    let guard_row = rows.pop().expect("guard point");
    let finest = match &cfg.mode {
        Mode::VaryN { .. } => rows.iter().max_by_key(|r| r.n),
        Mode::VaryDt { .. } => rows.iter().min_by(|a, b| a.dt.total_cmp(&b.dt)),
    }
    .expect("non-empty");
    let guard = GuardReport {
        finest_mse: finest.mse,
        reference_mse: guard_row.mse,
        passed: finest.mse > GUARD_FACTOR * guard_row.mse,
    };
    let mut table = ConvergenceTable {
        mode: cfg.mode.clone(),
        s: cfg.s(),
        seed: cfg.seed,
        rows,
        fit: None,
        guard,
    };
    let data: Vec<(f64, f64)> = table
        .abscissae()
        .into_iter()
        .zip(table.rows.iter().map(|r| r.mse))
        .collect();
    if data.len() >= 3 && data.iter().all(|&(_, y)| y > 0.0) {
        table.fit = Some(fit_rate(&data)?);
    }
    Ok(table)
}

/// MSE against the `n_star` reference for every `n` in `n_list`.
pub fn convergence_in_n(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    if !matches!(cfg.mode, Mode::VaryN { .. }) {
        return Err(invalid("convergence_in_n needs mode vary_n"));
    }
    run_study(cfg)
}

/// MSE against the `dt_star` reference for every `dt` in `dt_list`.
pub fn convergence_in_dt(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    if !matches!(cfg.mode, Mode::VaryDt { .. }) {
        return Err(invalid("convergence_in_dt needs mode vary_dt"));
    }
    run_study(cfg)
}

/// Cellwise Monte Carlo mean of `phi(P_n W(t))` with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct CellwiseMoment {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Samples `P_n W(t)` once per trial (trial `k` uses stream `seed + k`) and
/// averages `phi` cellwise.
pub fn cellwise_moment(
    spec: &QWienerSpec,
    t: f64,
    n: usize,
    trials: usize,
    seed: u64,
    phi: impl Fn(f64) -> f64 + Sync,
) -> Result<CellwiseMoment> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let n_fine = n.max(2 * spec.modes()).next_power_of_two();
    let ratio = nesting_ratio(n_fine, n)?;
    let samples: Vec<Result<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut stream = NoiseStream::new(spec, n_fine, t, 1, trial_seed(seed, k))?;
            let mut fine = vec![0.0; n_fine];
            stream.next_slice(&mut fine);
            let mut w = vec![0.0; n];
            block_average(&fine, ratio, &mut w);
            Ok(w.into_iter().map(&phi).collect())
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let (mut mean, mut stderr) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let (m, _, se) = mean_std_stderr(samples.iter().map(|s| s[i]));
        mean.push(m);
        stderr.push(se);
    }
    Ok(CellwiseMoment { mean, stderr })
}

/// `E sin(2π P_n W(t))` should vanish for a centred Gaussian field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineMomentCheck {
    /// `‖mean‖_{L²}` of the cellwise sample means
    pub norm_of_mean: f64,
    /// 4 × the Monte Carlo standard error of that norm
    pub threshold: f64,
}

impl SineMomentCheck {
    pub fn passed(&self) -> bool {
        self.norm_of_mean <= self.threshold
    }
}

pub fn sine_moment_check(
    spec: &QWienerSpec,
    t: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<SineMomentCheck> {
    let m = cellwise_moment(spec, t, n, trials, seed, |w| {
        (2.0 * std::f64::consts::PI * w).sin()
    })?;
    let h = 1.0 / n as f64;
    let norm_of_mean = (h * m.mean.iter().map(|v| v * v).sum::<f64>()).sqrt();
    // E‖mean‖² = h Σ Var_i / trials
    let threshold = 4.0 * (h * m.stderr.iter().map(|v| v * v).sum::<f64>()).sqrt();
    Ok(SineMomentCheck {
        norm_of_mean,
        threshold,
    })
}

/// Sample mean of `‖ΔW‖²_{L²} / Δt` over `slices` increments at `n` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCheck {
    pub mean: f64,
    pub stderr: f64,
    /// `Σ λ_k ‖P_n e_k‖²`
    pub projected_trace: f64,
    /// `Σ λ_k` over the retained modes
    pub trace: f64,
}

pub fn increment_energy_check(
    spec: &QWienerSpec,
    n: usize,
    dt: f64,
    slices: usize,
    seed: u64,
) -> Result<EnergyCheck> {
    let mut stream = NoiseStream::new(spec, n, dt, slices, seed)?;
    let mut w = vec![0.0; n];
    let h = 1.0 / n as f64;
    let mut energies = Vec::with_capacity(slices);
    while stream.next_slice(&mut w) {
        energies.push(h * w.iter().map(|v| v * v).sum::<f64>() / dt);
    }
    let (mean, _, stderr) = mean_std_stderr(energies);
    Ok(EnergyCheck {
        mean,
        stderr,
        projected_trace: spec.projected_trace(n),
        trace: crate::noise::trace(spec),
    })
}

/// Ensemble RMS of `‖u(t0 + lag) − u(t0)‖_{L²}` for each lag.
pub fn time_increment_rms(
    prob: &Problem,
    n: usize,
    dt: f64,
    t0: f64,
    lags: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let galerkin = Galerkin::new(prob, n)?;
    let steps = prob.steps_for(dt)?;
    let start = (t0 / dt).round() as usize;
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if start + max_lag > steps {
        return Err(invalid("lags extend beyond the horizon"));
    }
    let n_fine = n.max(2 * prob.noise.modes()).next_power_of_two();
    let per_trial: Vec<Result<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut stream = NoiseStream::new(&prob.noise, n_fine, dt, steps, trial_seed(seed, k))?;
            let traj = crate::dynamics::integrate_trajectory(prob, &galerkin, dt, &mut stream, 1)?;
            let base = &traj.states[start];
            lags.iter()
                .map(|&l| {
                    let d = l2_distance(&traj.states[start + l], base)?;
                    Ok(d * d)
                })
                .collect()
        })
        .collect();
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(lags
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let ms = per_trial.iter().map(|v| v[j]).sum::<f64>() / trials as f64;
            (l as f64 * dt, ms.sqrt())
        })
        .collect())
}
