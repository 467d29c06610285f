//! Trace-class Q-Wiener noise: spectra, path synthesis and coupled coarsening.
//!
//! Increments are synthesized directly as cell averages,
//!
//! ```text
//! ΔW_j = Σ_k √(λ_k Δt) ξ_k (P_n e_k)_j ,   ξ_k ~ N(0, 1) i.i.d.
//! ```
//!
//! where `(P_n e_k)_j` is the exact average of the trigonometric eigenfunction
//! over cell `j`. For Fourier modes this is a sinc factor times a half-cell
//! phase shift, so one inverse FFT per slice evaluates the whole sum.
//!
//! Coarser resolutions and longer steps are obtained by block-averaging in
//! space and summing in time, so every resolution sees the same Brownian path.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::grid::{block_average, nesting_ratio, GridFunction};
use crate::kernels::{parse_named, reject_unknown, take_param};

/// Orthonormal trigonometric eigenfunction on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// `√2 sin(w x)`
    Sine { wavenumber: f64 },
    /// `√2 cos(w x)`
    Cosine { wavenumber: f64 },
}

impl Mode {
    pub fn wavenumber(&self) -> f64 {
        match *self {
            Mode::Sine { wavenumber } | Mode::Cosine { wavenumber } => wavenumber,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Mode::Sine { wavenumber } => 2f64.sqrt() * (wavenumber * x).sin(),
            Mode::Cosine { wavenumber } => 2f64.sqrt() * (wavenumber * x).cos(),
        }
    }

    /// Exact average over `(a, b]`.
    pub fn cell_average(&self, a: f64, b: f64) -> f64 {
        let w = self.wavenumber();
        let c = 2f64.sqrt() / (w * (b - a));
        match self {
            Mode::Sine { .. } => c * ((w * a).cos() - (w * b).cos()),
            Mode::Cosine { .. } => c * ((w * b).sin() - (w * a).sin()),
        }
    }

    /// Analytic bound `ω₂(e, 1/n) ≤ min(w / n, 2)` from the mean value theorem
    /// and the triangle inequality.
    pub fn modulus_bound(&self, n: usize) -> f64 {
        (self.wavenumber() / n as f64).min(2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenpair {
    pub lambda: f64,
    pub mode: Mode,
}

/// Covariance of the driving Q-Wiener process.
#[derive(Debug, Clone, PartialEq)]
pub enum QWienerSpec {
    /// `Q = (−Δ_D)^{−s/2}` on `[0,1]`: `λ_k = (πk)^{−s}`, `e_k = √2 sin(πkx)`,
    /// `k = 1..=modes`.
    DirichletSine { s: f64, modes: usize },
    /// `Q = (−d²/dx²)^{−s/2}` with periodic boundary conditions, constant mode
    /// excluded: `λ = (2πk)^{−s}` for `√2 cos(2πkx)` and `√2 sin(2πkx)`, in the
    /// order cos₁, sin₁, cos₂, …, truncated after `modes` eigenpairs.
    PeriodicFourier { s: f64, modes: usize },
    /// No noise.
    Zero,
    /// An explicit finite spectrum with no tail.
    Explicit(Arc<[Eigenpair]>),
}

impl QWienerSpec {
    pub fn periodic(s: f64, modes: usize) -> Result<Self> {
        validate_exponent(s)?;
        Ok(Self::PeriodicFourier { s, modes })
    }

    pub fn dirichlet(s: f64, modes: usize) -> Result<Self> {
        validate_exponent(s)?;
        Ok(Self::DirichletSine { s, modes })
    }

    pub fn explicit(pairs: Vec<Eigenpair>) -> Result<Self> {
        for p in &pairs {
            if !(p.lambda >= 0.0 && p.lambda.is_finite()) {
                return Err(invalid(format!("eigenvalue {} must be ≥ 0", p.lambda)));
            }
            if !(p.mode.wavenumber() > 0.0) {
                return Err(invalid("mode wavenumbers must be positive"));
            }
        }
        Ok(Self::Explicit(pairs.into()))
    }

    /// Spectral decay exponent, when the family has one.
    pub fn s(&self) -> Option<f64> {
        match self {
            Self::DirichletSine { s, .. } | Self::PeriodicFourier { s, .. } => Some(*s),
            _ => None,
        }
    }

    /// Number of retained eigenpairs `M`.
    pub fn modes(&self) -> usize {
        match self {
            Self::DirichletSine { modes, .. } | Self::PeriodicFourier { modes, .. } => *modes,
            Self::Zero => 0,
            Self::Explicit(p) => p.len(),
        }
    }

    /// Retained eigenpairs in nonincreasing eigenvalue order.
    pub fn eigenpairs(&self) -> Vec<Eigenpair> {
        match self {
            Self::DirichletSine { s, modes } => (1..=*modes)
                .map(|k| {
                    let w = PI * k as f64;
                    Eigenpair {
                        lambda: w.powf(-s),
                        mode: Mode::Sine { wavenumber: w },
                    }
                })
                .collect(),
            Self::PeriodicFourier { s, modes } => (0..*modes)
                .map(|idx| {
                    let w = 2.0 * PI * (idx / 2 + 1) as f64;
                    let mode = if idx % 2 == 0 {
                        Mode::Cosine { wavenumber: w }
                    } else {
                        Mode::Sine { wavenumber: w }
                    };
                    Eigenpair {
                        lambda: w.powf(-s),
                        mode,
                    }
                })
                .collect(),
            Self::Zero => Vec::new(),
            Self::Explicit(p) => {
                let mut v = p.to_vec();
                v.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
                v
            }
        }
    }

    /// `Σ_{k>M} λ_k`: the part of the full spectrum dropped by truncation.
    pub fn tail(&self) -> f64 {
        match self {
            Self::DirichletSine { s, modes } => PI.powf(-s) * hurwitz_zeta(*s, (*modes + 1) as f64),
            Self::PeriodicFourier { s, modes } => {
                let mut t = 0.0;
                let mut next_freq = modes / 2 + 1;
                if modes % 2 == 1 {
                    // the sine partner of the last retained frequency
                    t += (2.0 * PI * (modes / 2 + 1) as f64).powf(-s);
                    next_freq += 1;
                }
                t + 2.0 * (2.0 * PI).powf(-s) * hurwitz_zeta(*s, next_freq as f64)
            }
            Self::Zero | Self::Explicit(_) => 0.0,
        }
    }

    /// `Var (P_n W(1))_i = Σ_k λ_k (P_n e_k)_i²` for each cell.
    pub fn cell_variances(&self, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        let mut var = vec![0.0; n];
        for p in self.eigenpairs() {
            for (i, v) in var.iter_mut().enumerate() {
                let a = p.mode.cell_average(i as f64 * h, (i + 1) as f64 * h);
                *v += p.lambda * a * a;
            }
        }
        var
    }

    /// `Σ_k λ_k ‖P_n e_k‖²` over the retained eigenpairs: `E‖P_n W(1)‖²`.
    pub fn projected_trace(&self, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        self.eigenpairs()
            .iter()
            .map(|p| {
                let norm2: f64 = (0..n)
                    .map(|j| {
                        let a = p.mode.cell_average(j as f64 * h, (j + 1) as f64 * h);
                        a * a
                    })
                    .sum::<f64>()
                    * h;
                p.lambda * norm2
            })
            .sum()
    }
}

fn validate_exponent(s: f64) -> Result<()> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(invalid(format!(
            "spectral exponent s = {s} must exceed 1 for a trace-class covariance"
        )));
    }
    Ok(())
}

impl fmt::Display for QWienerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PeriodicFourier { s, modes } => write!(f, "periodic:s={s},M={modes}"),
            Self::DirichletSine { s, modes } => write!(f, "dirichlet:s={s},M={modes}"),
            Self::Zero => write!(f, "zero"),
            Self::Explicit(p) => write!(f, "explicit({} modes)", p.len()),
        }
    }
}

impl FromStr for QWienerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_named(s)?;
        let ctx = format!("noise {name}");
        let family_params = |params: &[(&str, f64)]| -> Result<(f64, usize)> {
            reject_unknown(params, &["s", "M"], &ctx)?;
            let s = take_param(params, "s", &ctx)?;
            let m = take_param(params, "M", &ctx)?;
            if m < 0.0 || m.fract() != 0.0 {
                return Err(Error::Parse(format!(
                    "{ctx}: M must be a nonnegative integer"
                )));
            }
            Ok((s, m as usize))
        };
        match name {
            "periodic" | "periodic_fourier" => {
                let (s, m) = family_params(&params)?;
                QWienerSpec::periodic(s, m)
            }
            "dirichlet" | "dirichlet_sine" => {
                let (s, m) = family_params(&params)?;
                QWienerSpec::dirichlet(s, m)
            }
            "zero" | "none" => {
                reject_unknown(&params, &[], "noise zero")?;
                Ok(QWienerSpec::Zero)
            }
            other => Err(Error::Parse(format!("unknown noise family {other:?}"))),
        }
    }
}

/// `Σ_k λ_k` over the retained eigenpairs.
pub fn trace(spec: &QWienerSpec) -> f64 {
    spec.eigenpairs().iter().fold(0.0, |acc, p| acc + p.lambda)
}

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (a + k)^{−s}` for `s > 1`, `a > 0`, by
/// Euler-Maclaurin summation.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    const DIRECT: usize = 12;
    // B_{2j} / (2j)!
    const BERNOULLI: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
    ];
    let mut sum: f64 = (0..DIRECT).map(|k| (a + k as f64).powf(-s)).sum();
    let x = a + DIRECT as f64;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // rising factorial s (s+1) … (s+2j−2) times x^{−s−2j+1}
    let mut rising = s;
    let mut power = x.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        sum += b * rising * power;
        let m = 2 * j as u32 + 1;
        rising *= (s + m as f64) * (s + m as f64 + 1.0);
        power /= x * x;
    }
    sum
}

/// Evaluates the rate functional
///
/// ```text
/// Ψ(n) = ( min_{0 ≤ m ≤ M} [ Σ_{k≤m} λ_k ω₂(e_k, 1/n)² + Σ_{k>m} λ_k ] )^{1/2}
/// ```
///
/// with the analytic trigonometric bound for `ω₂` and the exact truncation
/// tail folded into the second sum.
pub fn psi(spec: &QWienerSpec, n: usize) -> f64 {
    let pairs = spec.eigenpairs();
    let omegas: Vec<f64> = pairs.iter().map(|p| p.mode.modulus_bound(n)).collect();
    let lambdas: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
    psi_from_terms(&lambdas, &omegas, spec.tail())
}

/// `Ψ` from explicit eigenvalues, moduli and a tail mass beyond the last term.
pub fn psi_from_terms(lambdas: &[f64], omegas: &[f64], tail: f64) -> f64 {
    debug_assert_eq!(lambdas.len(), omegas.len());
    let mut rest: f64 = lambdas.iter().sum::<f64>() + tail;
    let mut head = 0.0;
    let mut best = rest;
    for (l, w) in lambdas.iter().zip(omegas) {
        head += l * w * w;
        rest -= l;
        best = best.min(head + rest.max(0.0));
    }
    best.max(0.0).sqrt()
}

/// Producer of fine-resolution increment slices, consumed in time order.
pub trait IncrementSource {
    fn n_fine(&self) -> usize;
    fn dt_fine(&self) -> f64;
    fn steps(&self) -> usize;
    /// Writes the next slice into `out` (length `n_fine`); `false` when exhausted.
    fn next_slice(&mut self, out: &mut [f64]) -> bool;
}

/// Per-trial seed for an ensemble rooted at `root`.
pub fn trial_seed(root: u64, trial: usize) -> u64 {
    root.wrapping_add(trial as u64)
}

enum Synthesis {
    None,
    Fft {
        fft: Arc<dyn Fft<f64>>,
        /// (bin, weight) per eigenpair, in draw order
        weights: Vec<(usize, Complex64)>,
        buffer: Vec<Complex64>,
        scratch: Vec<Complex64>,
    },
    Direct {
        /// eigenpair-major table of `√(λ Δt) (P_n e_k)_j`
        table: Vec<f64>,
        modes: usize,
    },
}

/// Streaming synthesizer: slice `k` is the `k`-th draw from one ChaCha stream,
/// so streaming and materializing produce identical paths.
pub struct NoiseStream {
    n_fine: usize,
    dt_fine: f64,
    steps: usize,
    seed: u64,
    produced: usize,
    rng: ChaCha8Rng,
    synthesis: Synthesis,
}

impl NoiseStream {
    pub fn new(
        spec: &QWienerSpec,
        n_fine: usize,
        dt_fine: f64,
        steps: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(dt_fine > 0.0) || !dt_fine.is_finite() {
            return Err(invalid(format!(
                "fine time step {dt_fine} must be positive"
            )));
        }
        if n_fine == 0 {
            return Err(invalid("n_fine must be positive"));
        }
        let modes = spec.modes();
        if n_fine < 2 * modes {
            return Err(Error::Aliasing {
                modes,
                n_fine,
                required: 2 * modes,
            });
        }
        let pairs = spec.eigenpairs();
        let synthesis = match spec {
            QWienerSpec::Zero => Synthesis::None,
            QWienerSpec::Explicit(_) => {
                let h = 1.0 / n_fine as f64;
                let mut table = Vec::with_capacity(pairs.len() * n_fine);
                for p in &pairs {
                    let amp = (p.lambda * dt_fine).sqrt();
                    table.extend(
                        (0..n_fine)
                            .map(|j| amp * p.mode.cell_average(j as f64 * h, (j + 1) as f64 * h)),
                    );
                }
                Synthesis::Direct {
                    table,
                    modes: pairs.len(),
                }
            }
            QWienerSpec::PeriodicFourier { .. } | QWienerSpec::DirichletSine { .. } => {
                if !n_fine.is_power_of_two() {
                    return Err(invalid(format!(
                        "FFT synthesis needs a power-of-two n_fine, got {n_fine}"
                    )));
                }
                let periodic = matches!(spec, QWienerSpec::PeriodicFourier { .. });
                // periodic modes live on an n-point FFT; Dirichlet sines on a 2n-point one
                let len = if periodic { n_fine } else { 2 * n_fine };
                let nf = n_fine as f64;
                let weights = pairs
                    .iter()
                    .map(|p| {
                        let w = p.mode.wavenumber();
                        // cell average of e^{iwx} over cell j: e^{iw(j+½)h} sinc(wh/2)
                        let half = 0.5 * w / nf;
                        let sinc = half.sin() / half;
                        let phase = Complex64::from_polar(1.0, half);
                        let amp = (p.lambda * dt_fine).sqrt() * 2f64.sqrt() * sinc;
                        // √2 cos = Re √2 e^{iwx};  √2 sin = Re(−i √2 e^{iwx})
                        let rot = match p.mode {
                            Mode::Cosine { .. } => Complex64::new(1.0, 0.0),
                            Mode::Sine { .. } => Complex64::new(0.0, -1.0),
                        };
                        let bin = (w * len as f64 / (2.0 * PI * nf)).round() as usize;
                        (bin, rot * phase * amp)
                    })
                    .collect();
                let fft = FftPlanner::new().plan_fft_inverse(len);
                let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                Synthesis::Fft {
                    fft,
                    weights,
                    buffer: vec![Complex64::default(); len],
                    scratch,
                }
            }
        };
        Ok(Self {
            n_fine,
            dt_fine,
            steps,
            seed,
            produced: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            synthesis,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl IncrementSource for NoiseStream {
    fn n_fine(&self) -> usize {
        self.n_fine
    }

    fn dt_fine(&self) -> f64 {
        self.dt_fine
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn next_slice(&mut self, out: &mut [f64]) -> bool {
        if self.produced >= self.steps {
            return false;
        }
        self.produced += 1;
        let rng = &mut self.rng;
        match &mut self.synthesis {
            Synthesis::None => out.fill(0.0),
            Synthesis::Fft {
                fft,
                weights,
                buffer,
                scratch,
            } => {
                buffer.fill(Complex64::default());
                for (bin, w) in weights.iter() {
                    let xi: f64 = StandardNormal.sample(rng);
                    buffer[*bin] += w * xi;
                }
                fft.process_with_scratch(buffer, scratch);
                for (o, b) in out.iter_mut().zip(buffer.iter()) {
                    *o = b.re;
                }
            }
            Synthesis::Direct { table, modes } => {
                out.fill(0.0);
                for k in 0..*modes {
                    let xi: f64 = StandardNormal.sample(rng);
                    let row = &table[k * out.len()..(k + 1) * out.len()];
                    for (o, t) in out.iter_mut().zip(row) {
                        *o += xi * t;
                    }
                }
            }
        }
        true
    }
}

/// A materialized increment path: `steps × n_fine` cell values.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    n_fine: usize,
    dt_fine: f64,
    steps: usize,
    seed: u64,
    increments: Vec<f64>,
}

/// Synthesizes `steps` increments of `P_{n_fine} W` over steps of `dt_fine`.
pub fn sample_increments(
    spec: &QWienerSpec,
    n_fine: usize,
    dt_fine: f64,
    steps: usize,
    seed: u64,
) -> Result<NoisePath> {
    let mut stream = NoiseStream::new(spec, n_fine, dt_fine, steps, seed)?;
    let mut increments = vec![0.0; steps * n_fine];
    for slice in increments.chunks_exact_mut(n_fine) {
        stream.next_slice(slice);
    }
    Ok(NoisePath {
        n_fine,
        dt_fine,
        steps,
        seed,
        increments,
    })
}

/// `dt / dt_fine` when it is a positive integer (up to rounding).
pub fn step_ratio(dt: f64, dt_fine: f64) -> Result<usize> {
    let r = dt / dt_fine;
    let rounded = r.round();
    if !(rounded >= 1.0) || (r - rounded).abs() > 1e-9 * rounded {
        return Err(Error::Incommensurable(format!(
            "time step {dt} is not a positive integer multiple of {dt_fine}"
        )));
    }
    Ok(rounded as usize)
}

impl NoisePath {
    pub fn from_parts(
        n_fine: usize,
        dt_fine: f64,
        steps: usize,
        seed: u64,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if n_fine == 0 || increments.len() != n_fine * steps {
            return Err(invalid(format!(
                "path needs {steps} × {n_fine} values, got {}",
                increments.len()
            )));
        }
        Ok(Self {
            n_fine,
            dt_fine,
            steps,
            seed,
            increments,
        })
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn dt_fine(&self) -> f64 {
        self.dt_fine
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.increments[k * self.n_fine..(k + 1) * self.n_fine]
    }

    pub fn increment(&self, k: usize) -> GridFunction {
        GridFunction::new(self.slice(k).to_vec()).expect("n_fine > 0")
    }

    pub fn increments(&self) -> impl Iterator<Item = GridFunction> + '_ {
        (0..self.steps).map(|k| self.increment(k))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.increments
    }

    /// Cursor that replays this path as an [`IncrementSource`].
    pub fn reader(&self) -> PathReader<'_> {
        PathReader {
            path: self,
            next: 0,
        }
    }

    /// Block-averages to `n` cells and sums groups of `dt / dt_fine` steps.
    pub fn coarsen(&self, n: usize, dt: f64) -> Result<NoisePath> {
        let rs = nesting_ratio(self.n_fine, n)?;
        let rt = step_ratio(dt, self.dt_fine)?;
        if self.steps % rt != 0 {
            return Err(Error::Incommensurable(format!(
                "{} fine steps do not split into groups of {rt}",
                self.steps
            )));
        }
        let steps = self.steps / rt;
        let mut increments = vec![0.0; steps * n];
        let mut block = vec![0.0; n];
        for (k, out) in increments.chunks_exact_mut(n).enumerate() {
            for f in 0..rt {
                block_average(self.slice(k * rt + f), rs, &mut block);
                for (o, b) in out.iter_mut().zip(&block) {
                    *o += b;
                }
            }
        }
        Ok(NoisePath {
            n_fine: n,
            dt_fine: dt,
            steps,
            seed: self.seed,
            increments,
        })
    }

    /// Little-endian dump: `n_fine: u64, dt_fine: f64, steps: u64, seed: u64`,
    /// then `steps × n_fine` `f64` values in time-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n_fine as u64).to_le_bytes())?;
        w.write_all(&self.dt_fine.to_le_bytes())?;
        w.write_all(&(self.steps as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.increments.len() * 8);
        for v in &self.increments {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n_fine = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt_fine = f64::from_le_bytes(next(&mut r)?);
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * n_fine * steps {
            return Err(Error::Parse(format!(
                "noise dump holds {} bytes, header promises {}",
                bytes.len(),
                8 * n_fine * steps
            )));
        }
        let increments = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        NoisePath::from_parts(n_fine, dt_fine, steps, seed, increments)
    }
}

/// Free-function form of [`NoisePath::coarsen`], returning the increments.
pub fn coarsen_increments(path: &NoisePath, n: usize, dt: f64) -> Result<Vec<GridFunction>> {
    Ok(path.coarsen(n, dt)?.increments().collect())
}

pub struct PathReader<'a> {
    path: &'a NoisePath,
    next: usize,
}

impl IncrementSource for PathReader<'_> {
    fn n_fine(&self) -> usize {
        self.path.n_fine
    }

    fn dt_fine(&self) -> f64 {
        self.path.dt_fine
    }

    fn steps(&self) -> usize {
        self.path.steps
    }

    fn next_slice(&mut self, out: &mut [f64]) -> bool {
        if self.next >= self.path.steps {
            return false;
        }
        out.copy_from_slice(self.path.slice(self.next));
        self.next += 1;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ‖P_n e‖² through the antiderivative at the nodes (independent of the
    /// sinc route used in synthesis).
    fn projected_norm2_oracle(mode: Mode, n: usize) -> f64 {
        let w = mode.wavenumber();
        let anti = |x: f64| match mode {
            Mode::Sine { .. } => -2f64.sqrt() * (w * x).cos() / w,
            Mode::Cosine { .. } => 2f64.sqrt() * (w * x).sin() / w,
        };
        let nf = n as f64;
        (0..n)
            .map(|j| {
                let avg = (anti((j + 1) as f64 / nf) - anti(j as f64 / nf)) * nf;
                avg * avg / nf
            })
            .sum()
    }

    #[test]
    fn traces() {
        let spec = QWienerSpec::periodic(2.0, 200_000).unwrap();
        assert!((trace(&spec) + spec.tail() - 1.0 / 12.0).abs() < 1e-14);
        assert!((trace(&spec) - 1.0 / 12.0).abs() < 2e-6);
        let one = QWienerSpec::periodic(2.0, 1).unwrap();
        assert_eq!(trace(&one), (2.0 * PI).powi(-2));
        let dir = QWienerSpec::dirichlet(2.0, 3).unwrap();
        let pairs = dir.eigenpairs();
        for (k, p) in pairs.iter().enumerate() {
            assert!((p.lambda - (PI * (k + 1) as f64).powi(-2)).abs() < 1e-17);
        }
        // Σ (πk)^{-2} = 1/6
        assert!((trace(&dir) + dir.tail() - 1.0 / 6.0).abs() < 1e-14);
        assert!(trace(&QWienerSpec::Zero).to_bits() == 0);
        assert!(QWienerSpec::periodic(1.0, 4).is_err());
    }

    #[test]
    fn hurwitz_zeta_values() {
        assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((hurwitz_zeta(4.0, 1.0) - PI.powi(4) / 90.0).abs() < 1e-15);
        // ζ(2, 3) = π²/6 − 1 − 1/4
        assert!((hurwitz_zeta(2.0, 3.0) - (PI * PI / 6.0 - 1.25)).abs() < 1e-14);
        // ζ(1.5) = 2.612375348685488…
        assert!((hurwitz_zeta(1.5, 1.0) - 2.612_375_348_685_488).abs() < 1e-12);
    }

    #[test]
    fn psi_cases() {
        assert_eq!(psi(&QWienerSpec::Zero, 16), 0.0);
        let single = QWienerSpec::explicit(vec![Eigenpair {
            lambda: 1.0,
            mode: Mode::Sine {
                wavenumber: 2.0 * PI,
            },
        }])
        .unwrap();
        for n in [1, 2, 4, 8, 64] {
            let omega = (2.0 * PI / n as f64).min(2.0);
            // m = 0 gives 1, m = 1 gives ω²
            let expected = omega.min(1.0);
            assert!((psi(&single, n) - expected).abs() < 1e-15, "n={n}");
        }
        let spec = QWienerSpec::periodic(2.0, 512).unwrap();
        let mut prev = f64::INFINITY;
        for n in [1, 2, 4, 8, 16, 32, 64, 128, 256] {
            let v = psi(&spec, n);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn synthesis_rejects_bad_inputs() {
        let spec = QWienerSpec::periodic(2.0, 16).unwrap();
        assert!(matches!(
            sample_increments(&spec, 16, 0.1, 1, 0),
            Err(Error::Aliasing { .. })
        ));
        assert!(sample_increments(&spec, 48, 0.1, 1, 0).is_err());
        assert!(sample_increments(&spec, 32, 0.0, 1, 0).is_err());
        let empty = sample_increments(&spec, 32, 0.1, 0, 0).unwrap();
        assert_eq!(empty.steps(), 0);
        assert!(empty.as_slice().is_empty());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let spec = QWienerSpec::periodic(1.5, 32).unwrap();
        let a = sample_increments(&spec, 64, 1e-3, 10, 7).unwrap();
        let b = sample_increments(&spec, 64, 1e-3, 10, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_increments(&spec, 64, 1e-3, 10, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fft_synthesis_matches_direct_sum() {
        // Same draws through the FFT path and an explicit-spectrum direct sum.
        for spec in [
            QWienerSpec::periodic(2.0, 9).unwrap(),
            QWienerSpec::dirichlet(2.0, 8).unwrap(),
        ] {
            let explicit = QWienerSpec::explicit(spec.eigenpairs()).unwrap();
            let a = sample_increments(&spec, 32, 0.01, 5, 3).unwrap();
            let b = sample_increments(&explicit, 32, 0.01, 5, 3).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-14, "{spec}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn projected_norms_match_antiderivative_oracle() {
        let spec = QWienerSpec::periodic(2.0, 20).unwrap();
        for n in [4, 16, 64] {
            let oracle: f64 = spec
                .eigenpairs()
                .iter()
                .map(|p| p.lambda * projected_norm2_oracle(p.mode, n))
                .sum();
            assert!((spec.projected_trace(n) - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_variances_sum_to_projected_trace() {
        let spec = QWienerSpec::dirichlet(2.0, 12).unwrap();
        let var = spec.cell_variances(16);
        let total: f64 = var.iter().sum::<f64>() / 16.0;
        let oracle: f64 = spec
            .eigenpairs()
            .iter()
            .map(|p| p.lambda * projected_norm2_oracle(p.mode, 16))
            .sum();
        assert!((total - oracle).abs() < 1e-15);
        // stationary periodic field: every cell has the same variance
        let var = QWienerSpec::periodic(2.0, 12).unwrap().cell_variances(16);
        assert!(var.iter().all(|v| (v - var[0]).abs() < 1e-15));
    }

    #[test]
    fn coarsening_identity_and_additivity() {
        let spec = QWienerSpec::periodic(2.0, 8).unwrap();
        let path = sample_increments(&spec, 32, 0.01, 6, 11).unwrap();
        assert_eq!(path.coarsen(32, 0.01).unwrap(), path);
        let two = path.coarsen(32, 0.02).unwrap();
        for k in 0..3 {
            for j in 0..32 {
                assert_eq!(
                    two.slice(k)[j],
                    path.slice(2 * k)[j] + path.slice(2 * k + 1)[j]
                );
            }
        }
        assert!(path.coarsen(12, 0.01).is_err());
        assert!(path.coarsen(16, 0.015).is_err());
        assert!(path.coarsen(16, 0.04).is_err());
        let nested = path.coarsen(16, 0.02).unwrap().coarsen(8, 0.06).unwrap();
        let direct = path.coarsen(8, 0.06).unwrap();
        for (a, b) in nested.as_slice().iter().zip(direct.as_slice()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn binary_dump_round_trip() {
        let spec = QWienerSpec::periodic(2.0, 4).unwrap();
        let path = sample_increments(&spec, 8, 0.25, 3, 99).unwrap();
        let mut buf = Vec::new();
        path.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 8 * 24);
        assert_eq!(&buf[..8], &8u64.to_le_bytes());
        assert_eq!(NoisePath::read_binary(&buf[..]).unwrap(), path);
        assert!(NoisePath::read_binary(&buf[..40]).is_err());
    }

    #[test]
    fn parse_spec_names() {
        let s: QWienerSpec = "periodic:s=2.0,M=4096".parse().unwrap();
        assert_eq!(
            s,
            QWienerSpec::PeriodicFourier {
                s: 2.0,
                modes: 4096
            }
        );
        assert_eq!(s.to_string().parse::<QWienerSpec>().unwrap(), s);
        assert!("dirichlet:s=2,M=8".parse::<QWienerSpec>().is_ok());
        assert_eq!("zero".parse::<QWienerSpec>().unwrap(), QWienerSpec::Zero);
        assert!("periodic:s=0.5,M=8".parse::<QWienerSpec>().is_err());
        assert!("periodic:s=2,M=2.5".parse::<QWienerSpec>().is_err());
        assert!("white".parse::<QWienerSpec>().is_err());
    }
}
