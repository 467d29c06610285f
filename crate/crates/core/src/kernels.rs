//! Graphons and their Galerkin coefficient matrices.
//!
//! `project_kernel` produces `K^n_{ij} = n² ∬_{cell_i × cell_j} K`. The periodic
//! band and constant kernels take an exact geometric path; everything else is
//! integrated with adaptive Gauss-Kronrod per cell pair.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::nesting_ratio;
use crate::quadrature::{self, QuadratureSettings};

pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum GraphonKind {
    /// `K(x, y) = 1` when the periodic distance `min(|x−y|, 1−|x−y|) < r`.
    Band {
        radius: f64,
    },
    Constant {
        value: f64,
    },
    /// `K(x, y) = x y`.
    Product,
    Custom(KernelFn),
}

impl fmt::Debug for GraphonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Band { radius } => write!(f, "Band {{ radius: {radius} }}"),
            Self::Constant { value } => write!(f, "Constant {{ value: {value} }}"),
            Self::Product => write!(f, "Product"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A bounded kernel on the unit square with optional regularity metadata.
#[derive(Clone, Debug)]
pub struct Graphon {
    kind: GraphonKind,
    /// Declared Lipschitz exponent in `L²(I²)`.
    beta: Option<f64>,
}

impl Graphon {
    pub fn band(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < 1.0) {
            return Err(invalid(format!("band radius {radius} outside (0, 1)")));
        }
        Ok(Self {
            kind: GraphonKind::Band { radius },
            beta: Some(0.5),
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(invalid("constant kernel must be finite"));
        }
        Ok(Self {
            kind: GraphonKind::Constant { value },
            beta: Some(1.0),
        })
    }

    pub fn product() -> Self {
        Self {
            kind: GraphonKind::Product,
            beta: Some(1.0),
        }
    }

    pub fn custom<F>(f: F, beta: Option<f64>) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: GraphonKind::Custom(Arc::new(f)),
            beta,
        }
    }

    pub fn kind(&self) -> &GraphonKind {
        &self.kind
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    /// Cell integrals have a closed form.
    pub fn is_analytic(&self) -> bool {
        matches!(
            self.kind,
            GraphonKind::Band { .. } | GraphonKind::Constant { .. }
        )
    }

    /// Translation invariant on the circle, so every projection is circulant.
    pub fn is_circulant(&self) -> bool {
        self.is_analytic()
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            GraphonKind::Band { radius } => {
                let d = (x - y).abs();
                if d.min(1.0 - d) < *radius {
                    1.0
                } else {
                    0.0
                }
            }
            GraphonKind::Constant { value } => *value,
            GraphonKind::Product => x * y,
            GraphonKind::Custom(f) => f(x, y),
        }
    }
}

impl fmt::Display for Graphon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            GraphonKind::Band { radius } => write!(f, "band:r={radius}"),
            GraphonKind::Constant { value } => write!(f, "constant:c={value}"),
            GraphonKind::Product => write!(f, "product"),
            GraphonKind::Custom(_) => write!(f, "custom"),
        }
    }
}

/// Splits `name:key=value,key=value` into the name and its parameters.
pub(crate) fn parse_named(s: &str) -> Result<(&str, Vec<(&str, f64)>)> {
    let s = s.trim();
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut params = Vec::new();
    for item in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value in {item:?}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad number in {item:?}")))?;
        params.push((k.trim(), v));
    }
    Ok((name.trim(), params))
}

pub(crate) fn take_param(params: &[(&str, f64)], key: &str, ctx: &str) -> Result<f64> {
    params
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Parse(format!("{ctx}: missing parameter {key}")))
}

pub(crate) fn reject_unknown(params: &[(&str, f64)], allowed: &[&str], ctx: &str) -> Result<()> {
    match params.iter().find(|(k, _)| !allowed.contains(k)) {
        Some((k, _)) => Err(Error::Parse(format!("{ctx}: unknown parameter {k}"))),
        None => Ok(()),
    }
}

impl FromStr for Graphon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_named(s)?;
        match name {
            "band" => {
                reject_unknown(&params, &["r"], "band")?;
                Graphon::band(take_param(&params, "r", "band")?)
            }
            "constant" => {
                reject_unknown(&params, &["c"], "constant")?;
                Graphon::constant(take_param(&params, "c", "constant")?)
            }
            "product" => {
                reject_unknown(&params, &[], "product")?;
                Ok(Graphon::product())
            }
            other => Err(Error::Parse(format!("unknown kernel kind {other:?}"))),
        }
    }
}

/// Galerkin coefficients `K^n_{ij}` (row-major) on the uniform `n`-cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    coeffs: Vec<f64>,
    source_beta: Option<f64>,
    circulant: bool,
}

impl KernelMatrix {
    /// Wraps explicit coefficients. `circulant` must only be set when
    /// `coeffs[i][j]` depends on `(i − j) mod n` alone; it enables FFT paths.
    pub fn from_coeffs(n: usize, coeffs: Vec<f64>, circulant: bool) -> Result<Self> {
        if n == 0 || coeffs.len() != n * n {
            return Err(invalid(format!(
                "kernel matrix needs n² = {} coefficients, got {}",
                n * n,
                coeffs.len()
            )));
        }
        Ok(Self {
            n,
            coeffs,
            source_beta: None,
            circulant,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn source_beta(&self) -> Option<f64> {
        self.source_beta
    }

    pub fn is_circulant(&self) -> bool {
        self.circulant
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.n..(i + 1) * self.n]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// First column `c_m = K_{m,0}`; for circulant matrices `K_{ij} = c_{(i−j) mod n}`.
    pub fn first_column(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, 0)).collect()
    }

    /// `‖P_n K‖_{L²(I²)}`.
    pub fn l2_norm(&self) -> f64 {
        self.h() * self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `max_i h Σ_j K_ij²`, the discrete analogue of `K1`.
    pub fn max_row_energy(&self) -> f64 {
        (0..self.n)
            .map(|i| self.h() * self.row(i).iter().map(|c| c * c).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// 2×2 block means: the coefficients of the projection onto `n / 2` cells.
    pub fn coarsen(&self, n: usize) -> Result<KernelMatrix> {
        let r = nesting_ratio(self.n, n)?;
        let inv = 1.0 / (r * r) as f64;
        let mut coeffs = vec![0.0; n * n];
        for (i, out_row) in coeffs.chunks_exact_mut(n).enumerate() {
            for (j, out) in out_row.iter_mut().enumerate() {
                let mut s = 0.0;
                for a in 0..r {
                    let row = self.row(i * r + a);
                    s += row[j * r..(j + 1) * r].iter().sum::<f64>();
                }
                *out = s * inv;
            }
        }
        Ok(KernelMatrix {
            n,
            coeffs,
            source_beta: self.source_beta,
            circulant: self.circulant,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::with_capacity(self.n * self.n * 20);
        s.push_str(&format!("{}\n", self.n));
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads the CSV layout written by [`KernelMatrix::write_csv`]. The
    /// circulant flag is not stored and comes back `false`.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty kernel CSV".into()))??
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad size row: {e}")))?;
        let mut coeffs = Vec::with_capacity(n * n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for v in line.split(',') {
                coeffs.push(
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{v:?}: {e}")))?,
                );
            }
        }
        KernelMatrix::from_coeffs(n, coeffs, false)
    }
}

/// Fraction of the unit square `[0,1]²` where `u − v ≤ z`.
#[inline]
fn diff_cdf(z: f64) -> f64 {
    if z <= -1.0 {
        0.0
    } else if z <= 0.0 {
        0.5 * (1.0 + z) * (1.0 + z)
    } else if z < 1.0 {
        1.0 - 0.5 * (1.0 - z) * (1.0 - z)
    } else {
        1.0
    }
}

/// Exact mean of the periodic band indicator over `cell_i × cell_j`.
///
/// In cell units the difference `x − y` is `(i − j) + (u − v)` with `u, v`
/// uniform on the unit square, and the band is the union of the disjoint
/// strips `|x − y − m| < r`, `m ∈ {−1, 0, 1}` (disjoint while `r ≤ 1/2`).
pub(crate) fn band_cell_mean(i: usize, j: usize, n: usize, radius: f64) -> f64 {
    if radius > 0.5 {
        return 1.0;
    }
    let nf = n as f64;
    // the entry depends only on the periodic distance between the cells, so
    // canonicalize it to keep the matrix exactly symmetric and circulant
    let d = (i + n - j) % n;
    let d0 = d.min(n - d) as f64;
    [-1.0, 0.0, 1.0]
        .iter()
        .map(|&m: &f64| {
            let hi = (m + radius) * nf - d0;
            let lo = (m - radius) * nf - d0;
            diff_cdf(hi) - diff_cdf(lo)
        })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Projects `kernel` onto the `n × n` cell-pair grid.
///
/// Band and constant kernels are exact; others use adaptive quadrature with
/// absolute tolerance `tol` on each cell average.
pub fn project_kernel(kernel: &Graphon, n: usize, tol: f64) -> Result<KernelMatrix> {
    project_kernel_with(
        kernel,
        n,
        QuadratureSettings {
            abs_tol: tol,
            ..QuadratureSettings::default()
        },
    )
}

/// [`project_kernel`] with an explicit subdivision budget.
pub fn project_kernel_with(
    kernel: &Graphon,
    n: usize,
    settings: QuadratureSettings,
) -> Result<KernelMatrix> {
    let tol = settings.abs_tol;
    if n == 0 {
        return Err(invalid("kernel projection needs n ≥ 1"));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!(
            "quadrature tolerance {tol} must be positive"
        )));
    }
    let coeffs = match kernel.kind() {
        GraphonKind::Band { radius } => {
            let r = *radius;
            (0..n * n)
                .into_par_iter()
                .map(|k| band_cell_mean(k / n, k % n, n, r))
                .collect()
        }
        GraphonKind::Constant { value } => vec![*value; n * n],
        _ => quadrature_coeffs(kernel, n, settings)?,
    };
    Ok(KernelMatrix {
        n,
        coeffs,
        source_beta: kernel.beta(),
        circulant: kernel.is_circulant(),
    })
}

fn quadrature_coeffs(kernel: &Graphon, n: usize, outer: QuadratureSettings) -> Result<Vec<f64>> {
    let h = 1.0 / n as f64;
    let node = |i: usize| i as f64 / n as f64;
    let tol = outer.abs_tol;
    let settings = QuadratureSettings {
        abs_tol: tol * h * h,
        max_subdivisions: outer.max_subdivisions,
    };
    let results: Vec<_> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            quadrature::integrate_rect(
                |x, y| kernel.eval(x, y),
                (node(i), node(i + 1)),
                (node(j), node(j + 1)),
                settings,
            )
        })
        .collect();
    let worst = results
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.converged || !r.value.is_finite())
        .max_by(|a, b| a.1.abs_error.total_cmp(&b.1.abs_error));
    if let Some((k, r)) = worst {
        return Err(Error::QuadratureNonConvergence {
            row: k / n,
            col: k % n,
            estimate: r.abs_error / (h * h),
            tolerance: tol,
        });
    }
    Ok(results.iter().map(|r| r.value * (n * n) as f64).collect())
}

/// `K1 = ess sup_x ∫ K(x,y)² dy` and `K2 = ess sup_y ∫ K(x,y)² dx`.
///
/// Exact for band and constant kernels; otherwise the supremum is taken over
/// the nodes `i / resolution`, so the result can under-approximate.
pub fn kernel_bounds(kernel: &Graphon, resolution: usize) -> Result<(f64, f64)> {
    if resolution == 0 {
        return Err(invalid("kernel_bounds needs resolution ≥ 1"));
    }
    match kernel.kind() {
        GraphonKind::Band { radius } => {
            let mass = (2.0 * radius).min(1.0);
            Ok((mass, mass))
        }
        GraphonKind::Constant { value } => Ok((value * value, value * value)),
        _ => {
            let settings = QuadratureSettings {
                abs_tol: 1e-12,
                max_subdivisions: 1000,
            };
            let sup = |transpose: bool| -> Result<f64> {
                let vals: Vec<Result<f64>> = (0..=resolution)
                    .into_par_iter()
                    .map(|i| {
                        let x = i as f64 / resolution as f64;
                        let mut bad = None;
                        let r = quadrature::integrate(
                            |y| {
                                let (a, b) = if transpose { (y, x) } else { (x, y) };
                                let v = kernel.eval(a, b);
                                if !v.is_finite() && bad.is_none() {
                                    bad = Some((a, b));
                                }
                                v * v
                            },
                            0.0,
                            1.0,
                            settings,
                        );
                        match bad {
                            Some((x, y)) => Err(Error::UnboundedKernel { x, y }),
                            None => Ok(r.value),
                        }
                    })
                    .collect();
                vals.into_iter()
                    .try_fold(0.0_f64, |acc, v| v.map(|v| acc.max(v)))
            };
            Ok((sup(false)?, sup(true)?))
        }
    }
}

/// Norms in which the kernel projection error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelNorm {
    /// `‖K − P_n K‖_{L²(I×I)}`.
    L2xy,
    /// `sup_x ∫ |K(x,y) − (P_n K)(x,y)| dy`, sup over fine-grid midpoints.
    L1yLinfx,
}

/// Projection error of `kn` against its source kernel.
///
/// `resolution` (a multiple of `kn.n()`) sets the fine grid of `x` points for
/// the `L1yLinfx` supremum. The `L2xy` norm is computed cell by cell from
/// `∬ (K − K_ij)²`, exact for band and constant kernels.
pub fn projection_error(
    kernel: &Graphon,
    kn: &KernelMatrix,
    norm: KernelNorm,
    resolution: usize,
) -> Result<f64> {
    let n = kn.n();
    let ratio = nesting_ratio(resolution, n)?;
    let h = kn.h();
    let tol = 1e-10;
    match (norm, kernel.kind()) {
        (KernelNorm::L2xy, GraphonKind::Constant { value }) => {
            let s: f64 = kn.coeffs().iter().map(|c| (c - value) * (c - value)).sum();
            Ok(h * s.sqrt())
        }
        (KernelNorm::L1yLinfx, GraphonKind::Constant { value }) => Ok((0..n)
            .map(|i| h * kn.row(i).iter().map(|c| (c - value).abs()).sum::<f64>())
            .fold(0.0, f64::max)),
        (KernelNorm::L2xy, GraphonKind::Band { .. }) => {
            // indicator minus its mean c over a cell pair: ∬ (1_A − c)² = h² c (1 − c)
            let s: f64 = kn.coeffs().iter().map(|c| c * (1.0 - c)).sum();
            Ok((h * h * s).max(0.0).sqrt())
        }
        (KernelNorm::L2xy, _) => {
            let settings = QuadratureSettings {
                abs_tol: tol * h * h,
                max_subdivisions: 1000,
            };
            let s: f64 = (0..n * n)
                .into_par_iter()
                .map(|k| {
                    let (i, j) = (k / n, k % n);
                    let c = kn.get(i, j);
                    quadrature::integrate_rect(
                        |x, y| {
                            let d = kernel.eval(x, y) - c;
                            d * d
                        },
                        (i as f64 * h, (i + 1) as f64 * h),
                        (j as f64 * h, (j + 1) as f64 * h),
                        settings,
                    )
                    .value
                })
                .sum();
            Ok(s.max(0.0).sqrt())
        }
        (KernelNorm::L1yLinfx, kind) => {
            let radius = match kind {
                GraphonKind::Band { radius } => Some(*radius),
                _ => None,
            };
            let settings = QuadratureSettings {
                abs_tol: tol * h,
                max_subdivisions: 1000,
            };
            let worst = (0..resolution)
                .into_par_iter()
                .map(|k| {
                    let x = (k as f64 + 0.5) / resolution as f64;
                    let i = k / ratio;
                    (0..n)
                        .map(|j| {
                            let c = kn.get(i, j);
                            let (y0, y1) = (j as f64 * h, (j + 1) as f64 * h);
                            match radius {
                                Some(r) => {
                                    let m = band_overlap(x, r, y0, y1);
                                    m * (1.0 - c) + (h - m) * c
                                }
                                None => {
                                    quadrature::integrate(
                                        |y| (kernel.eval(x, y) - c).abs(),
                                        y0,
                                        y1,
                                        settings,
                                    )
                                    .value
                                }
                            }
                        })
                        .sum::<f64>()
                })
                .reduce(|| 0.0, f64::max);
            Ok(worst)
        }
    }
}

/// Length of `[y0, y1] ∩ {y : periodic distance to x < r}`.
fn band_overlap(x: f64, radius: f64, y0: f64, y1: f64) -> f64 {
    if radius > 0.5 {
        return y1 - y0;
    }
    [-1.0, 0.0, 1.0]
        .iter()
        .map(|m| {
            let lo = (x - radius + m).max(y0);
            let hi = (x + radius + m).min(y1);
            (hi - lo).max(0.0)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Polygon-clipping oracle: area of the band inside a square, by clipping
    /// the square against the half-planes of each strip and using the
    /// shoelace formula.
    fn clip(poly: &[(f64, f64)], keep: impl Fn(f64, f64) -> f64) -> Vec<(f64, f64)> {
        // keeps points where keep(x, y) >= 0; keep is affine
        let mut out = Vec::new();
        for k in 0..poly.len() {
            let p = poly[k];
            let q = poly[(k + 1) % poly.len()];
            let (fp, fq) = (keep(p.0, p.1), keep(q.0, q.1));
            if fp >= 0.0 {
                out.push(p);
            }
            if (fp >= 0.0) != (fq >= 0.0) {
                let t = fp / (fp - fq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
        out
    }

    fn shoelace(poly: &[(f64, f64)]) -> f64 {
        let mut a = 0.0;
        for k in 0..poly.len() {
            let (x0, y0) = poly[k];
            let (x1, y1) = poly[(k + 1) % poly.len()];
            a += x0 * y1 - x1 * y0;
        }
        0.5 * a.abs()
    }

    fn band_area_oracle(x0: f64, y0: f64, h: f64, r: f64) -> f64 {
        let square = vec![(x0, y0), (x0 + h, y0), (x0 + h, y0 + h), (x0, y0 + h)];
        [-1.0, 0.0, 1.0]
            .iter()
            .map(|&m: &f64| {
                let a = clip(&square, |x, y| (m + r) - (x - y));
                let b = clip(&a, |x, y| (x - y) - (m - r));
                if b.len() < 3 {
                    0.0
                } else {
                    shoelace(&b)
                }
            })
            .sum()
    }

    #[test]
    fn band_row_matches_polygon_oracle() {
        let k = project_kernel(&Graphon::band(0.25).unwrap(), 4, 1e-10).unwrap();
        let expected = [1.0, 0.5, 0.0, 0.5];
        for (j, e) in expected.iter().enumerate() {
            assert!((k.get(0, j) - e).abs() < 1e-15);
        }
        for (n, r) in [(7, 0.13), (16, 0.25), (10, 0.41), (5, 0.5)] {
            let k = project_kernel(&Graphon::band(r).unwrap(), n, 1e-10).unwrap();
            let h = 1.0 / n as f64;
            for i in 0..n {
                for j in 0..n {
                    let oracle = band_area_oracle(i as f64 * h, j as f64 * h, h, r) / (h * h);
                    assert!(
                        (k.get(i, j) - oracle).abs() < 1e-12,
                        "n={n} r={r} ({i},{j}) {} vs {oracle}",
                        k.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn band_is_symmetric_circulant_and_bounded() {
        let k = project_kernel(&Graphon::band(0.3).unwrap(), 12, 1e-10).unwrap();
        assert!(k.is_circulant());
        for i in 0..12 {
            for j in 0..12 {
                let v = k.get(i, j);
                assert!((0.0..=1.0).contains(&v));
                assert_eq!(v, k.get(j, i));
                assert_eq!(v, k.get((i + 1) % 12, (j + 1) % 12));
            }
        }
    }

    #[test]
    fn constant_and_product() {
        let k = project_kernel(&Graphon::constant(0.7).unwrap(), 5, 1e-10).unwrap();
        assert!(k.coeffs().iter().all(|&c| c == 0.7));

        let k = project_kernel(&Graphon::product(), 2, 1e-10).unwrap();
        let m = [0.25, 0.75];
        for i in 0..2 {
            for j in 0..2 {
                assert!((k.get(i, j) - m[i] * m[j]).abs() < 1e-12);
            }
        }
        assert!(!k.is_circulant());
    }

    #[test]
    fn quadrature_failure_reports_cell_pair() {
        let wild = Graphon::custom(|x, y| (1e5 * x * y).sin(), None);
        let settings = QuadratureSettings {
            abs_tol: 1e-12,
            max_subdivisions: 4,
        };
        let err = project_kernel_with(&wild, 2, settings).unwrap_err();
        assert!(
            matches!(err, Error::QuadratureNonConvergence { .. }),
            "{err}"
        );
    }

    #[test]
    fn bounds() {
        assert_eq!(
            kernel_bounds(&Graphon::band(0.2).unwrap(), 4).unwrap(),
            (0.4, 0.4)
        );
        assert_eq!(
            kernel_bounds(&Graphon::constant(1.0).unwrap(), 4).unwrap(),
            (1.0, 1.0)
        );
        let (k1, k2) = kernel_bounds(&Graphon::product(), 16).unwrap();
        assert!((k1 - 1.0 / 3.0).abs() < 1e-14 && (k2 - 1.0 / 3.0).abs() < 1e-14);
        let bad = Graphon::custom(|x, _| 1.0 / (x - 0.5), None);
        assert!(matches!(
            kernel_bounds(&bad, 2),
            Err(Error::UnboundedKernel { .. })
        ));
    }

    #[test]
    fn constant_kernel_has_zero_projection_error() {
        let g = Graphon::constant(2.0).unwrap();
        let k = project_kernel(&g, 8, 1e-10).unwrap();
        for norm in [KernelNorm::L2xy, KernelNorm::L1yLinfx] {
            assert_eq!(projection_error(&g, &k, norm, 64).unwrap(), 0.0);
        }
        assert!(matches!(
            projection_error(&g, &k, KernelNorm::L2xy, 12),
            Err(Error::Incommensurable(_))
        ));
    }

    #[test]
    fn band_l2_error_matches_quadrature_route() {
        let band = Graphon::band(0.25).unwrap();
        let k = project_kernel(&band, 8, 1e-10).unwrap();
        let exact = projection_error(&band, &k, KernelNorm::L2xy, 64).unwrap();
        let inner = band.clone();
        let as_custom = Graphon::custom(move |x, y| inner.eval(x, y), None);
        let numeric = projection_error(&as_custom, &k, KernelNorm::L2xy, 64).unwrap();
        assert!((exact - numeric).abs() < 1e-5, "{exact} vs {numeric}");
        let exact = projection_error(&band, &k, KernelNorm::L1yLinfx, 64).unwrap();
        let numeric = projection_error(&as_custom, &k, KernelNorm::L1yLinfx, 64).unwrap();
        assert!((exact - numeric).abs() < 1e-8, "{exact} vs {numeric}");
    }

    #[test]
    fn refinement_consistency() {
        let tol = 1e-10;
        for g in [
            Graphon::band(0.25).unwrap(),
            Graphon::band(0.17).unwrap(),
            Graphon::product(),
            Graphon::custom(|x, y| (3.0 * x - y).cos(), None),
        ] {
            let coarse = project_kernel(&g, 6, tol).unwrap();
            let fine = project_kernel(&g, 12, tol).unwrap().coarsen(6).unwrap();
            for (a, b) in coarse.coeffs().iter().zip(fine.coeffs()) {
                assert!((a - b).abs() <= 2.0 * tol, "{g}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn projection_contracts_l2_norm() {
        // ‖K‖² for the band is its area 2r; for xy it is 1/9.
        for (g, norm2) in [
            (Graphon::band(0.25).unwrap(), 0.5_f64),
            (Graphon::product(), 1.0 / 9.0),
        ] {
            for n in [1, 3, 8] {
                let k = project_kernel(&g, n, 1e-10).unwrap();
                assert!(k.l2_norm() <= norm2.sqrt() + 1e-12);
            }
        }
    }

    #[test]
    fn parse_names() {
        let g: Graphon = "band:r=0.25".parse().unwrap();
        assert_eq!(g.to_string(), "band:r=0.25");
        let g: Graphon = "constant:c=1.0".parse().unwrap();
        assert!(matches!(g.kind(), GraphonKind::Constant { value } if *value == 1.0));
        assert!("product".parse::<Graphon>().is_ok());
        assert!("band".parse::<Graphon>().is_err());
        assert!("band:r=2".parse::<Graphon>().is_err());
        assert!("band:q=0.1".parse::<Graphon>().is_err());
        assert!("ring:r=0.1".parse::<Graphon>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let k = project_kernel(&Graphon::band(0.3).unwrap(), 5, 1e-10).unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let back = KernelMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(back.coeffs(), k.coeffs());
    }
}
