//! Semidiscrete vector field and the Euler-Maruyama integrator.
//!
//! The state is the coefficient vector of a piecewise-constant function on `n`
//! cells. One step reads
//!
//! ```text
//! u_i ← u_i + f(t, u_i) Δt + h Σ_j K_ij S(u_i, u_j) Δt + ΔW_i
//! ```
//!
//! with `K_ij` the cell averages of the kernel and `ΔW` a coarsening of a
//! shared fine noise path.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::grid::{self, block_average, nesting_ratio, GridFunction};
use crate::kernels::{
    parse_named, project_kernel, reject_unknown, take_param, Graphon, KernelMatrix,
};
use crate::noise::{step_ratio, IncrementSource, NoisePath, QWienerSpec};

pub type ScalarFn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absolute tolerance for kernel cell averages computed by quadrature.
pub const KERNEL_TOL: f64 = 1e-10;

#[derive(Clone)]
pub enum DriftKind {
    Zero,
    /// `f(t, u) = a + b u`
    Linear {
        a: f64,
        b: f64,
    },
    /// `f(t, u)` supplied by the caller
    Custom(ScalarFn2),
}

/// Local reaction term `f(t, u)` with its declared constants:
/// `|f(t,u) − f(t,v)| ≤ L_f |u − v|` and `|f(t,u)| ≤ A_f + B_f |u|`.
#[derive(Clone)]
pub struct Drift {
    kind: DriftKind,
    lipschitz: f64,
    growth: (f64, f64),
}

impl Drift {
    pub fn zero() -> Self {
        Self {
            kind: DriftKind::Zero,
            lipschitz: 0.0,
            growth: (0.0, 0.0),
        }
    }

    pub fn linear(a: f64, b: f64) -> Self {
        Self {
            kind: DriftKind::Linear { a, b },
            lipschitz: b.abs(),
            growth: (a.abs(), b.abs()),
        }
    }

    pub fn custom<F>(f: F, lipschitz: f64, growth: (f64, f64)) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: DriftKind::Custom(Arc::new(f)),
            lipschitz,
            growth,
        }
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn growth(&self) -> (f64, f64) {
        self.growth
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DriftKind::Zero)
    }

    #[inline]
    pub fn eval(&self, t: f64, u: f64) -> f64 {
        match &self.kind {
            DriftKind::Zero => 0.0,
            DriftKind::Linear { a, b } => a + b * u,
            DriftKind::Custom(f) => f(t, u),
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Drift({self})")
    }
}

impl fmt::Display for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DriftKind::Zero => write!(f, "zero"),
            DriftKind::Linear { a, b } => write!(f, "linear:a={a},b={b}"),
            DriftKind::Custom(_) => write!(f, "custom"),
        }
    }
}

impl FromStr for Drift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_named(s)?;
        match name {
            "zero" | "none" => {
                reject_unknown(&params, &[], "drift zero")?;
                Ok(Drift::zero())
            }
            "linear" => {
                reject_unknown(&params, &["a", "b"], "drift linear")?;
                let a = take_param(&params, "a", "drift linear")?;
                let b = take_param(&params, "b", "drift linear")?;
                Ok(Drift::linear(a, b))
            }
            other => Err(Error::Parse(format!("unknown drift {other:?}"))),
        }
    }
}

#[derive(Clone)]
pub enum InteractionKind {
    /// `S(u, v) = sin(2π(u − v))`
    KuramotoSine,
    Zero,
    Custom(ScalarFn2),
}

/// Coupling function `S(u, v)` with `|S| ≤ A_S + B_S(|u| + |v|)` and
/// Lipschitz constant `L_S` in each argument.
#[derive(Clone)]
pub struct Interaction {
    kind: InteractionKind,
    bound: f64,
    lipschitz: f64,
    growth: f64,
}

impl Interaction {
    pub fn kuramoto_sine() -> Self {
        Self {
            kind: InteractionKind::KuramotoSine,
            bound: 1.0,
            lipschitz: 2.0 * PI,
            growth: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self {
            kind: InteractionKind::Zero,
            bound: 0.0,
            lipschitz: 0.0,
            growth: 0.0,
        }
    }

    pub fn custom<F>(f: F, bound: f64, lipschitz: f64, growth: f64) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: InteractionKind::Custom(Arc::new(f)),
            bound,
            lipschitz,
            growth,
        }
    }

    pub fn kind(&self) -> &InteractionKind {
        &self.kind
    }

    /// `A_S`
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `L_S`
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `B_S`
    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, InteractionKind::Zero)
    }

    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match &self.kind {
            InteractionKind::KuramotoSine => (2.0 * PI * (u - v)).sin(),
            InteractionKind::Zero => 0.0,
            InteractionKind::Custom(f) => f(u, v),
        }
    }
}

impl fmt::Debug for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Interaction({self})")
    }
}

impl fmt::Display for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            InteractionKind::KuramotoSine => write!(f, "kuramoto_sine"),
            InteractionKind::Zero => write!(f, "zero"),
            InteractionKind::Custom(_) => write!(f, "custom"),
        }
    }
}

impl FromStr for Interaction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_named(s)?;
        reject_unknown(&params, &[], name)?;
        match name {
            "kuramoto_sine" | "sine" => Ok(Interaction::kuramoto_sine()),
            "zero" | "none" => Ok(Interaction::zero()),
            other => Err(Error::Parse(format!("unknown interaction {other:?}"))),
        }
    }
}

/// Initial condition `g` on `[0, 1]`.
#[derive(Clone)]
pub enum InitialCondition {
    /// `x (1 − x)`
    Parabola,
    Constant(f64),
    /// `sin(2πkx)`
    Sine {
        k: f64,
    },
    Custom(ScalarFn),
}

impl InitialCondition {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Parabola => x * (1.0 - x),
            Self::Constant(c) => *c,
            Self::Sine { k } => (2.0 * PI * k * x).sin(),
            Self::Custom(f) => f(x),
        }
    }

    /// `P_n g`, exact for the closed-form variants.
    pub fn project(&self, n: usize) -> Result<GridFunction> {
        if n == 0 {
            return Err(invalid("projection onto zero cells"));
        }
        let nf = n as f64;
        let node = |i: usize| i as f64 / nf;
        let averages = |anti: &dyn Fn(f64) -> f64| {
            GridFunction::new(
                (0..n)
                    .map(|i| (anti(node(i + 1)) - anti(node(i))) * nf)
                    .collect(),
            )
        };
        match self {
            Self::Parabola => averages(&|x: f64| x * x * (0.5 - x / 3.0)),
            Self::Constant(c) => GridFunction::constant(n, *c),
            Self::Sine { k } => {
                let w = 2.0 * PI * k;
                averages(&|x: f64| -(w * x).cos() / w)
            }
            Self::Custom(f) => grid::project_to_grid(&|x: f64| f(x), n),
        }
    }
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InitialCondition({self})")
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Parabola => write!(f, "parabola"),
            Self::Constant(c) => write!(f, "constant:c={c}"),
            Self::Sine { k } => write!(f, "sine:k={k}"),
            Self::Custom(_) => write!(f, "custom"),
        }
    }
}

impl FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_named(s)?;
        match name {
            "parabola" => {
                reject_unknown(&params, &[], "initial parabola")?;
                Ok(Self::Parabola)
            }
            "zero" => {
                reject_unknown(&params, &[], "initial zero")?;
                Ok(Self::Constant(0.0))
            }
            "constant" => {
                reject_unknown(&params, &["c"], "initial constant")?;
                Ok(Self::Constant(take_param(
                    &params,
                    "c",
                    "initial constant",
                )?))
            }
            "sine" => {
                reject_unknown(&params, &["k"], "initial sine")?;
                Ok(Self::Sine {
                    k: take_param(&params, "k", "initial sine")?,
                })
            }
            other => Err(Error::Parse(format!("unknown initial condition {other:?}"))),
        }
    }
}

/// A fully specified continuum problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub drift: Drift,
    pub interaction: Interaction,
    pub kernel: Graphon,
    pub noise: QWienerSpec,
    pub initial: InitialCondition,
    pub horizon: f64,
}

impl Problem {
    pub fn new(
        drift: Drift,
        interaction: Interaction,
        kernel: Graphon,
        noise: QWienerSpec,
        initial: InitialCondition,
        horizon: f64,
    ) -> Result<Self> {
        let p = Self {
            drift,
            interaction,
            kernel,
            noise,
            initial,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    /// Band kernel `r = 0.25`, sine coupling, zero drift, `g = x(1 − x)`,
    /// periodic noise with exponent `s`, `T = 1`.
    pub fn sine_model(s: f64, modes: usize) -> Result<Self> {
        Self::new(
            Drift::zero(),
            Interaction::kuramoto_sine(),
            Graphon::band(0.25)?,
            QWienerSpec::periodic(s, modes)?,
            InitialCondition::Parabola,
            1.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid(format!(
                "horizon T = {} must be positive",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Number of steps `T / dt`, which must be a positive integer.
    pub fn steps_for(&self, dt: f64) -> Result<usize> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid(format!("time step {dt} must be positive")));
        }
        step_ratio(self.horizon, dt).map_err(|_| {
            invalid(format!(
                "T / dt = {} / {dt} is not an integer number of steps",
                self.horizon
            ))
        })
    }
}

/// The problem discretized on `n` cells: projected kernel and initial state.
#[derive(Debug, Clone)]
pub struct Galerkin {
    kernel: Arc<KernelMatrix>,
    initial: GridFunction,
}

impl Galerkin {
    pub fn new(prob: &Problem, n: usize) -> Result<Self> {
        let kernel = if prob.interaction.is_zero() {
            // never read; skip a possibly expensive projection
            KernelMatrix::from_coeffs(n, vec![0.0; n * n], prob.kernel.is_circulant())?
        } else {
            project_kernel(&prob.kernel, n, KERNEL_TOL)?
        };
        Self::from_parts(kernel, prob.initial.project(n)?)
    }

    pub fn from_parts(kernel: KernelMatrix, initial: GridFunction) -> Result<Self> {
        if kernel.n() != initial.n() {
            return Err(Error::ResolutionMismatch {
                expected: kernel.n(),
                found: initial.n(),
            });
        }
        Ok(Self {
            kernel: Arc::new(kernel),
            initial,
        })
    }

    pub fn n(&self) -> usize {
        self.initial.n()
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn initial(&self) -> &GridFunction {
        &self.initial
    }
}

enum OperatorPath {
    Zero,
    Dense,
    /// `sin(a − b) = sin a cos b − cos a sin b` turns the double sum into two
    /// matrix-vector products.
    SineSeparable {
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// Circulant matrix-vector product `K z` with `z = e^{2πiu}` by FFT.
    SineCirculant {
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
        kernel_hat: Vec<Complex64>,
        z: Vec<Complex64>,
        phases: Vec<Complex64>,
        scratch: Vec<Complex64>,
    },
}

/// `u ↦ h Σ_j K_ij S(u_i, u_j)` with reusable scratch space.
pub struct NonlocalOperator<'a> {
    kernel: &'a KernelMatrix,
    interaction: &'a Interaction,
    path: OperatorPath,
    /// `A_S · sqrt(max_i h Σ_j K_ij²)`, checked against `‖N(u)‖` in debug builds
    bound: f64,
}

impl<'a> NonlocalOperator<'a> {
    /// Chooses the evaluation path. The FFT path is taken only when the
    /// matrix carries the circulant flag.
    pub fn new(kernel: &'a KernelMatrix, interaction: &'a Interaction) -> Self {
        let path = match interaction.kind() {
            InteractionKind::Zero => OperatorPath::Zero,
            InteractionKind::Custom(_) => OperatorPath::Dense,
            InteractionKind::KuramotoSine if kernel.is_circulant() => Self::circulant_path(kernel),
            InteractionKind::KuramotoSine => OperatorPath::SineSeparable {
                cos: vec![0.0; kernel.n()],
                sin: vec![0.0; kernel.n()],
            },
        };
        Self::with_path(kernel, interaction, path)
    }

    /// Forces the O(n²) evaluation of `S` at every cell pair.
    pub fn dense(kernel: &'a KernelMatrix, interaction: &'a Interaction) -> Self {
        Self::with_path(kernel, interaction, OperatorPath::Dense)
    }

    fn with_path(
        kernel: &'a KernelMatrix,
        interaction: &'a Interaction,
        path: OperatorPath,
    ) -> Self {
        // every row of a circulant matrix carries the same energy
        let energy = if kernel.is_circulant() {
            kernel.h() * kernel.row(0).iter().map(|k| k * k).sum::<f64>()
        } else {
            kernel.max_row_energy()
        };
        Self {
            kernel,
            interaction,
            path,
            bound: interaction.bound() * energy.sqrt(),
        }
    }

    fn circulant_path(kernel: &KernelMatrix) -> OperatorPath {
        let n = kernel.n();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::default(); scratch_len];
        // fold the inverse transform's 1/n into the kernel spectrum
        let inv_n = 1.0 / n as f64;
        let mut kernel_hat: Vec<Complex64> = kernel
            .first_column()
            .into_iter()
            .map(|c| Complex64::new(c * inv_n, 0.0))
            .collect();
        forward.process_with_scratch(&mut kernel_hat, &mut scratch);
        OperatorPath::SineCirculant {
            forward,
            inverse,
            kernel_hat,
            z: vec![Complex64::default(); n],
            phases: vec![Complex64::default(); n],
            scratch,
        }
    }

    pub fn n(&self) -> usize {
        self.kernel.n()
    }

    pub fn uses_fft(&self) -> bool {
        matches!(self.path, OperatorPath::SineCirculant { .. })
    }

    /// Writes `h Σ_j K_ij S(u_i, u_j)` into `out`.
    pub fn apply(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.kernel.n();
        for len in [u.len(), out.len()] {
            if len != n {
                return Err(Error::ResolutionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let h = self.kernel.h();
        match &mut self.path {
            OperatorPath::Zero => out.fill(0.0),
            OperatorPath::Dense => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = self.kernel.row(i);
                    let ui = u[i];
                    let mut acc = 0.0;
                    for (k, uj) in row.iter().zip(u) {
                        acc += k * self.interaction.eval(ui, *uj);
                    }
                    *o = h * acc;
                }
            }
            OperatorPath::SineSeparable { cos, sin } => {
                for ((c, s), x) in cos.iter_mut().zip(sin.iter_mut()).zip(u) {
                    let (sv, cv) = (2.0 * PI * x).sin_cos();
                    *c = cv;
                    *s = sv;
                }
                for (i, o) in out.iter_mut().enumerate() {
                    let row = self.kernel.row(i);
                    let (mut kc, mut ks) = (0.0, 0.0);
                    for ((k, c), s) in row.iter().zip(cos.iter()).zip(sin.iter()) {
                        kc += k * c;
                        ks += k * s;
                    }
                    *o = h * (sin[i] * kc - cos[i] * ks);
                }
            }
            OperatorPath::SineCirculant {
                forward,
                inverse,
                kernel_hat,
                z,
                phases,
                scratch,
            } => {
                for ((zi, p), x) in z.iter_mut().zip(phases.iter_mut()).zip(u) {
                    let (s, c) = (2.0 * PI * x).sin_cos();
                    *p = Complex64::new(c, s);
                    *zi = *p;
                }
                forward.process_with_scratch(z, scratch);
                for (zi, k) in z.iter_mut().zip(kernel_hat.iter()) {
                    *zi *= k;
                }
                inverse.process_with_scratch(z, scratch);
                // Σ_j K_ij sin(2π(u_i − u_j)) = Im(z_i · conj((K z)_i))
                for ((o, p), w) in out.iter_mut().zip(phases.iter()).zip(z.iter()) {
                    *o = h * (p * w.conj()).im;
                }
            }
        }
        Ok(())
    }
}

/// `h Σ_j K^n_ij S(u_i, u_j)` as a grid function.
pub fn apply_nonlocal(
    kernel: &KernelMatrix,
    interaction: &Interaction,
    u: &GridFunction,
) -> Result<GridFunction> {
    let mut out = vec![0.0; kernel.n()];
    NonlocalOperator::new(kernel, interaction).apply(u.values(), &mut out)?;
    GridFunction::new(out)
}

fn first_non_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

/// One step in place; `step` is only used to label errors.
#[allow(clippy::too_many_arguments)]
fn advance(
    state: &mut [f64],
    t: f64,
    dt: f64,
    drift: &Drift,
    op: &mut NonlocalOperator<'_>,
    dw: &[f64],
    nonlocal: &mut [f64],
    step: usize,
) -> Result<()> {
    if let Some(cell) = first_non_finite(state).or_else(|| first_non_finite(dw)) {
        return Err(Error::NonFinite { cell, step });
    }
    op.apply(state, nonlocal)?;
    debug_assert!(
        op.interaction.growth() != 0.0 || {
            let h = op.kernel.h();
            let norm = (h * nonlocal.iter().map(|v| v * v).sum::<f64>()).sqrt();
            norm <= op.bound * (1.0 + 1e-12) + 1e-300
        },
        "nonlocal term exceeds its a-priori bound"
    );
    if drift.is_zero() {
        for ((u, nl), w) in state.iter_mut().zip(nonlocal.iter()).zip(dw) {
            *u += nl * dt + w;
        }
    } else {
        for ((u, nl), w) in state.iter_mut().zip(nonlocal.iter()).zip(dw) {
            *u += drift.eval(t, *u) * dt + nl * dt + w;
        }
    }
    Ok(())
}

/// `u + f(t,u) Δt + N(u) Δt + ΔW`.
pub fn em_step(
    u: &GridFunction,
    t: f64,
    dt: f64,
    drift: &Drift,
    interaction: &Interaction,
    kernel: &KernelMatrix,
    dw: &GridFunction,
) -> Result<GridFunction> {
    if !(dt > 0.0) {
        return Err(invalid(format!("time step {dt} must be positive")));
    }
    for found in [u.n(), dw.n()] {
        if found != kernel.n() {
            return Err(Error::ResolutionMismatch {
                expected: kernel.n(),
                found,
            });
        }
    }
    let mut state = u.values().to_vec();
    let mut nonlocal = vec![0.0; kernel.n()];
    let mut op = NonlocalOperator::new(kernel, interaction);
    advance(
        &mut state,
        t,
        dt,
        drift,
        &mut op,
        dw.values(),
        &mut nonlocal,
        0,
    )?;
    GridFunction::new(state)
}

/// Recorded states `u(t_k)` for `k = 0, stride, 2·stride, …` and the final step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
}

impl Trajectory {
    pub fn final_state(&self) -> &GridFunction {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    /// CSV with header `t,cell_0,…,cell_{n−1}` and one row per recorded step.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.states.first().map_or(0, GridFunction::n);
        let mut line = String::from("t");
        for i in 0..n {
            line.push_str(&format!(",cell_{i}"));
        }
        writeln!(w, "{line}")?;
        for (t, u) in self.times.iter().zip(&self.states) {
            line.clear();
            line.push_str(&t.to_string());
            for v in u.values() {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Final state at `T` on `n` cells with step `dt`, driven by `path`.
pub fn integrate(prob: &Problem, n: usize, dt: f64, path: &NoisePath) -> Result<GridFunction> {
    let g = Galerkin::new(prob, n)?;
    let run = coupled_solve_source(prob, &[(&g, dt)], &mut path.reader(), 0)?;
    Ok(run.finals.into_iter().next().expect("one target"))
}

/// Like [`integrate`], recording every `stride`-th state.
pub fn integrate_trajectory<S: IncrementSource>(
    prob: &Problem,
    galerkin: &Galerkin,
    dt: f64,
    source: &mut S,
    stride: usize,
) -> Result<Trajectory> {
    if stride == 0 {
        return Err(invalid("recording stride must be positive"));
    }
    let steps = prob.steps_for(dt)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![galerkin.initial().clone()],
    };
    let target = Target::new(prob, galerkin, dt, source.n_fine(), source.dt_fine())?;
    let fine_steps = steps * target.time_ratio;
    let ratio = target.time_ratio;
    feed(source, fine_steps, &mut [target], |targets, j| {
        let t = &targets[0];
        let k = t.steps_done;
        if (j + 1) % ratio == 0 && (k % stride == 0 || k == steps) {
            traj.times.push(k as f64 * dt);
            traj.states
                .push(GridFunction::new(t.state.clone()).expect("n > 0"));
        }
    })?;
    Ok(traj)
}

/// One `(n, dt)` discretization advancing in lockstep with the fine source.
struct Target<'a> {
    dt: f64,
    space_ratio: usize,
    time_ratio: usize,
    drift: &'a Drift,
    op: NonlocalOperator<'a>,
    state: Vec<f64>,
    acc: Vec<f64>,
    block: Vec<f64>,
    nonlocal: Vec<f64>,
    steps_done: usize,
}

impl<'a> Target<'a> {
    fn new(
        prob: &'a Problem,
        g: &'a Galerkin,
        dt: f64,
        n_fine: usize,
        dt_fine: f64,
    ) -> Result<Self> {
        let n = g.n();
        Ok(Self {
            dt,
            space_ratio: nesting_ratio(n_fine, n)?,
            time_ratio: step_ratio(dt, dt_fine)?,
            drift: &prob.drift,
            op: NonlocalOperator::new(g.kernel(), &prob.interaction),
            state: g.initial().values().to_vec(),
            acc: vec![0.0; n],
            block: vec![0.0; n],
            nonlocal: vec![0.0; n],
            steps_done: 0,
        })
    }

    /// Accumulates one fine slice and steps once a coarse increment is complete.
    fn absorb(&mut self, slice: &[f64], fine_index: usize) -> Result<()> {
        block_average(slice, self.space_ratio, &mut self.block);
        for (a, b) in self.acc.iter_mut().zip(&self.block) {
            *a += b;
        }
        if (fine_index + 1) % self.time_ratio != 0 {
            return Ok(());
        }
        let t = self.steps_done as f64 * self.dt;
        advance(
            &mut self.state,
            t,
            self.dt,
            self.drift,
            &mut self.op,
            &self.acc,
            &mut self.nonlocal,
            self.steps_done,
        )?;
        self.acc.fill(0.0);
        self.steps_done += 1;
        Ok(())
    }
}

/// Streams `fine_steps` slices through every target, calling `after` with the
/// fine index once all targets have absorbed the slice.
fn feed<S: IncrementSource>(
    source: &mut S,
    fine_steps: usize,
    targets: &mut [Target<'_>],
    mut after: impl FnMut(&[Target<'_>], usize),
) -> Result<()> {
    if source.steps() < fine_steps {
        return Err(invalid(format!(
            "noise path has {} steps, {fine_steps} needed to reach T",
            source.steps()
        )));
    }
    let mut slice = vec![0.0; source.n_fine()];
    for j in 0..fine_steps {
        if !source.next_slice(&mut slice) {
            return Err(invalid("noise source ended early"));
        }
        for t in targets.iter_mut() {
            t.absorb(&slice, j)?;
        }
        after(targets, j);
    }
    Ok(())
}

/// Final states (and optional checkpoints) of several discretizations driven
/// by one noise source.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    /// one entry per target, in input order
    pub finals: Vec<GridFunction>,
    /// `checkpoints[c][k]`: target `k` at time `(c + 1) T / count`
    pub checkpoints: Vec<Vec<GridFunction>>,
}

/// Advances every `(galerkin, dt)` target in lockstep over one pass of
/// `source`, so each sees coarsenings of the same fine increments.
///
/// With `checkpoints > 0`, states are also captured at that many equally
/// spaced times, which must fall on step boundaries of every target.
pub fn coupled_solve_source<S: IncrementSource>(
    prob: &Problem,
    targets: &[(&Galerkin, f64)],
    source: &mut S,
    checkpoints: usize,
) -> Result<CoupledRun> {
    if targets.is_empty() {
        return Err(invalid("coupled solve needs at least one target"));
    }
    let fine_steps = prob.steps_for(source.dt_fine())?;
    let mut states = Vec::with_capacity(targets.len());
    for (g, dt) in targets {
        let t = Target::new(prob, g, *dt, source.n_fine(), source.dt_fine())?;
        prob.steps_for(*dt)?;
        if checkpoints > 0 && fine_steps % (checkpoints * t.time_ratio) != 0 {
            return Err(invalid(format!(
                "{checkpoints} checkpoints do not align with steps of size {dt}"
            )));
        }
        states.push(t);
    }
    let every = fine_steps.checked_div(checkpoints).unwrap_or(usize::MAX);
    let mut captured = Vec::new();
    feed(source, fine_steps, &mut states, |targets, j| {
        if (j + 1) % every == 0 {
            captured.push(
                targets
                    .iter()
                    .map(|t| GridFunction::new(t.state.clone()).expect("n > 0"))
                    .collect(),
            );
        }
    })?;
    Ok(CoupledRun {
        finals: states
            .into_iter()
            .map(|t| GridFunction::new(t.state).expect("n > 0"))
            .collect(),
        checkpoints: captured,
    })
}

/// Final states for every `(n, dt)` in `resolutions × dts`, all driven by
/// coarsenings of `path`.
pub fn coupled_solve(
    prob: &Problem,
    resolutions: &[usize],
    dts: &[f64],
    path: &NoisePath,
) -> Result<Vec<((usize, f64), GridFunction)>> {
    let galerkins = resolutions
        .iter()
        .map(|&n| Galerkin::new(prob, n))
        .collect::<Result<Vec<_>>>()?;
    let mut keys = Vec::new();
    let mut targets = Vec::new();
    for g in &galerkins {
        for &dt in dts {
            keys.push((g.n(), dt));
            targets.push((g, dt));
        }
    }
    let run = coupled_solve_source(prob, &targets, &mut path.reader(), 0)?;
    Ok(keys.into_iter().zip(run.finals).collect())
}
