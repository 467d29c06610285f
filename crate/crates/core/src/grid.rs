//! Uniform partitions of the unit interval and piecewise-constant functions.
//!
//! Cell `i` (zero-based) is the half-open interval `(i/n, (i+1)/n]`; the point
//! `x = 0` belongs to cell 0. All L² quantities are exact finite sums because
//! both operands of every distance are step functions on nested grids.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{self, QuadratureSettings};

/// Uniform partition of `[0, 1]` into `n` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Partition {
    n: usize,
}

impl Partition {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("partition needs at least one cell"));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Grid node `x_i = i/n`, computed by division so that `x_n == 1`.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n as f64
    }

    /// Zero-based index of the cell containing `x`, for `x ∈ [0, 1]`.
    pub fn cell_of(&self, x: f64) -> usize {
        let scaled = x * self.n as f64;
        let idx = scaled.ceil() as isize - 1;
        idx.clamp(0, self.n as isize - 1) as usize
    }
}

/// Step function `Σ_i values[i] · 1_{cell_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    partition: Partition,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let partition = Partition::new(values.len())?;
        Ok(Self { partition, values })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    pub fn partition(&self) -> Partition {
        self.partition
    }

    pub fn n(&self) -> usize {
        self.partition.n
    }

    pub fn h(&self) -> f64 {
        self.partition.h()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.partition.cell_of(x)]
    }

    /// `‖u‖_{L²(I)} = (h Σ u_i²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.h() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Cell averages onto a coarser nested grid. Identity when `n == self.n()`.
    pub fn coarsen(&self, n: usize) -> Result<GridFunction> {
        let m = self.n();
        let ratio = nesting_ratio(m, n)?;
        if ratio == 1 {
            return Ok(self.clone());
        }
        let mut out = vec![0.0; n];
        block_average(&self.values, ratio, &mut out);
        GridFunction::new(out)
    }

    /// Repeats each value `ratio` times: the same step function on a finer grid.
    pub fn refine(&self, m: usize) -> Result<GridFunction> {
        let ratio = nesting_ratio(m, self.n())?;
        let values = self
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, ratio))
            .collect();
        GridFunction::new(values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::with_capacity(24 * (self.n() + 2));
        writeln!(s, "n,h").unwrap();
        writeln!(s, "{},{}", self.n(), self.h()).unwrap();
        for v in &self.values {
            writeln!(s, "{v}").unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty grid function CSV".into()))??;
        if header.trim() != "n,h" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let meta = lines
            .next()
            .ok_or_else(|| Error::Parse("missing n,h row".into()))??;
        let n: usize = meta
            .split(',')
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad n,h row {meta:?}")))?;
        let mut values = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            values.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{line:?}: {e}")))?,
            );
        }
        if values.len() != n {
            return Err(Error::Parse(format!(
                "header declares {n} cells, found {}",
                values.len()
            )));
        }
        GridFunction::new(values)
    }
}

/// `fine / coarse` when `coarse` divides `fine`.
pub fn nesting_ratio(fine: usize, coarse: usize) -> Result<usize> {
    if coarse == 0 {
        return Err(invalid("resolution must be positive"));
    }
    if fine < coarse || fine % coarse != 0 {
        return Err(Error::Incommensurable(format!(
            "{coarse} does not divide {fine}"
        )));
    }
    Ok(fine / coarse)
}

/// Averages consecutive blocks of `ratio` fine values into `out`.
#[inline]
pub(crate) fn block_average(fine: &[f64], ratio: usize, out: &mut [f64]) {
    debug_assert_eq!(fine.len(), ratio * out.len());
    if ratio == 1 {
        out.copy_from_slice(fine);
        return;
    }
    let inv = 1.0 / ratio as f64;
    for (o, block) in out.iter_mut().zip(fine.chunks_exact(ratio)) {
        *o = block.iter().sum::<f64>() * inv;
    }
}

/// Sources that can be L²-projected onto `n` cells.
pub trait Projectable {
    fn project(&self, n: usize) -> Result<GridFunction>;
}

impl Projectable for GridFunction {
    fn project(&self, n: usize) -> Result<GridFunction> {
        self.coarsen(n)
    }
}

impl<F: Fn(f64) -> f64> Projectable for F {
    fn project(&self, n: usize) -> Result<GridFunction> {
        project_function(self, n, default_projection_settings(n))
    }
}

fn default_projection_settings(n: usize) -> QuadratureSettings {
    QuadratureSettings {
        abs_tol: 1e-14 / n as f64,
        max_subdivisions: 200,
    }
}

/// The L² projection `P_n f`: cell averages of `f`.
pub fn project_to_grid<P: Projectable + ?Sized>(src: &P, n: usize) -> Result<GridFunction> {
    if n == 0 {
        return Err(invalid("projection onto zero cells"));
    }
    src.project(n)
}

/// Cell averages of an evaluable function by adaptive Gauss-Kronrod.
pub fn project_function<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    n: usize,
    settings: QuadratureSettings,
) -> Result<GridFunction> {
    let part = Partition::new(n)?;
    let values = (0..n)
        .map(|i| {
            let r = quadrature::integrate(f, part.node(i), part.node(i + 1), settings);
            r.value * n as f64
        })
        .collect();
    GridFunction::new(values)
}

/// Exact `‖u − v‖_{L²(I)}` for grids where one resolution divides the other.
pub fn l2_distance(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    let (fine, coarse) = if u.n() >= v.n() { (u, v) } else { (v, u) };
    let ratio = nesting_ratio(fine.n(), coarse.n())?;
    Ok(distance_nested(fine.values(), coarse.values(), ratio))
}

/// Exact distance on a stated common refinement that both resolutions divide.
pub fn l2_distance_on(u: &GridFunction, v: &GridFunction, refinement: usize) -> Result<f64> {
    let ru = nesting_ratio(refinement, u.n())?;
    let rv = nesting_ratio(refinement, v.n())?;
    let h = 1.0 / refinement as f64;
    let sum: f64 = (0..refinement)
        .map(|k| {
            let d = u.values[k / ru] - v.values[k / rv];
            d * d
        })
        .sum();
    Ok((h * sum).sqrt())
}

pub(crate) fn distance_nested(fine: &[f64], coarse: &[f64], ratio: usize) -> f64 {
    let h = 1.0 / fine.len() as f64;
    let sum: f64 = coarse
        .iter()
        .zip(fine.chunks_exact(ratio))
        .map(|(c, block)| block.iter().map(|f| (f - c) * (f - c)).sum::<f64>())
        .sum();
    (h * sum).sqrt()
}

/// Numerical L^p modulus of continuity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulus {
    pub p: f64,
    pub delta: f64,
    pub value: f64,
}

/// Functions whose shifted differences can be integrated over `I ∩ (I − t)`.
pub trait ShiftIntegrable {
    /// `∫_0^{1−t} |φ(x+t) − φ(x)|^p dx` using `resolution` for any quadrature.
    fn shifted_lp(&self, t: f64, p: f64, resolution: usize) -> f64;
}

impl ShiftIntegrable for GridFunction {
    /// Exact: between merged breakpoints both terms are constant.
    fn shifted_lp(&self, t: f64, p: f64, _resolution: usize) -> f64 {
        let n = self.n();
        let part = self.partition;
        let end = 1.0 - t;
        if end <= 0.0 {
            return 0.0;
        }
        // breakpoints of φ(x) and φ(x+t) inside (0, 1-t)
        let mut a: Vec<f64> = (1..n).map(|i| part.node(i)).filter(|&x| x < end).collect();
        a.extend(
            (1..n)
                .map(|i| part.node(i) - t)
                .filter(|&x| x > 0.0 && x < end),
        );
        a.push(0.0);
        a.push(end);
        a.sort_by(f64::total_cmp);
        a.dedup();
        a.windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let d = (self.eval(mid + t) - self.eval(mid)).abs();
                d.powf(p) * (w[1] - w[0])
            })
            .sum()
    }
}

impl<F: Fn(f64) -> f64> ShiftIntegrable for F {
    /// Midpoint rule with `resolution` points on `[0, 1−t]`.
    fn shifted_lp(&self, t: f64, p: f64, resolution: usize) -> f64 {
        let len = 1.0 - t;
        if len <= 0.0 {
            return 0.0;
        }
        let w = len / resolution as f64;
        (0..resolution)
            .map(|k| {
                let x = (k as f64 + 0.5) * w;
                (self(x + t) - self(x)).abs().powf(p)
            })
            .sum::<f64>()
            * w
    }
}

/// `ω_p(φ, δ)` evaluated as the maximum over the shift grid
/// `{k / n_samples : 0 < k / n_samples ≤ δ}`.
///
/// This under-approximates the true supremum. Because the shift grid does not
/// depend on `δ`, the result is nondecreasing in `δ`. Negative shifts give the
/// same norms as positive ones after substitution and are not evaluated.
pub fn modulus_of_continuity<F: ShiftIntegrable + ?Sized>(
    f: &F,
    p: f64,
    delta: f64,
    n_samples: usize,
) -> Result<Modulus> {
    if !(p >= 1.0) {
        return Err(invalid(format!("modulus exponent p = {p} < 1")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("shift bound {delta} outside (0, 1)")));
    }
    if n_samples == 0 {
        return Err(invalid("n_samples must be positive"));
    }
    let shifts = (delta * n_samples as f64 * (1.0 + 1e-12)).floor() as usize;
    if shifts == 0 {
        return Err(invalid(format!(
            "shift bound {delta} is below the shift grid spacing 1/{n_samples}"
        )));
    }
    let value = (1..=shifts)
        .map(|k| {
            let t = k as f64 / n_samples as f64;
            f.shifted_lp(t, p, n_samples).powf(1.0 / p)
        })
        .fold(0.0, f64::max);
    Ok(Modulus { p, delta, value })
}
