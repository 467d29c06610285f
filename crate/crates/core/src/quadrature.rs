//! Adaptive Gauss-Kronrod (7-15) quadrature on intervals and rectangles.
//!
//! The 1D driver bisects the segment with the largest error estimate until the
//! summed estimate falls below an absolute tolerance. Rectangles are handled by
//! nesting the 1D driver.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Kronrod abscissae on [-1, 1]; odd indices are the Gauss 7-point nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub subdivisions: usize,
    pub converged: bool,
}

/// Tolerance and subdivision budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_subdivisions: 1000,
        }
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = err.abs();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    err
}

/// Single 15-point Gauss-Kronrod evaluation on `[a, b]`, returning the
/// Kronrod estimate and its error estimate.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut gauss = f_center * WG[3];
    let mut kronrod = f_center * WGK[7];
    let mut res_abs = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let x = half * XGK[j];
        let y1 = f(center - x);
        let y2 = f(center + x);
        fv1[j] = y1;
        fv2[j] = y2;
        kronrod += WGK[j] * (y1 + y2);
        res_abs += WGK[j] * (y1.abs() + y2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (y1 + y2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let err = (kronrod - gauss) * half;
    let h = half.abs();
    (kronrod * half, rescale_error(err, res_abs * h, res_asc * h))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive integration of `f` over `[a, b]` to an absolute tolerance.
///
/// Never fails: when the budget runs out, the best estimate is returned with
/// `converged == false` and callers decide what that means.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    settings: QuadratureSettings,
) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            abs_error: 0.0,
            subdivisions: 0,
            converged: true,
        };
    }
    let (value, error) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total_error = error;
    let mut total_abs = value.abs();
    let mut subdivisions = 0;
    while total_error > target(settings.abs_tol, total_abs)
        && subdivisions < settings.max_subdivisions
    {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // cannot bisect further in floating point
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        total_error += e1 + e2 - worst.error;
        total_abs += v1.abs() + v2.abs() - worst.value.abs();
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        subdivisions += 1;
    }
    // re-sum to shed the drift of the running totals
    let (value, abs_error, total_abs) = heap.iter().fold((0.0, 0.0, 0.0), |(v, e, a), s| {
        (v + s.value, e + s.error, a + s.value.abs())
    });
    Integral {
        value,
        abs_error,
        subdivisions,
        converged: abs_error <= target(settings.abs_tol, total_abs),
    }
}

/// Requested tolerance, relaxed to the rounding floor of the GK error estimate.
fn target(abs_tol: f64, total_abs: f64) -> f64 {
    abs_tol.max(100.0 * f64::EPSILON * total_abs)
}

/// Integral of `f(x, y)` over `[x0, x1] × [y0, y1]` by nesting the 1D
/// driver. The inner tolerance is scaled so that the outer integral meets
/// `settings.abs_tol`.
pub fn integrate_rect<F: Fn(f64, f64) -> f64>(
    f: F,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    settings: QuadratureSettings,
) -> Integral {
    let width = (x1 - x0).abs().max(f64::MIN_POSITIVE);
    let inner = QuadratureSettings {
        abs_tol: 0.5 * settings.abs_tol / width,
        max_subdivisions: settings.max_subdivisions,
    };
    let mut inner_ok = true;
    let mut inner_err = 0.0_f64;
    let outer = QuadratureSettings {
        abs_tol: 0.5 * settings.abs_tol,
        max_subdivisions: settings.max_subdivisions,
    };
    let mut result = integrate(
        |x| {
            let r = integrate(|y| f(x, y), y0, y1, inner);
            inner_ok &= r.converged;
            inner_err = inner_err.max(r.abs_error);
            r.value
        },
        x0,
        x1,
        outer,
    );
    result.abs_error += inner_err * width;
    result.converged = result.converged && inner_ok;
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk15_is_exact_for_polynomials() {
        // Kronrod 15 integrates degree-22 polynomials exactly.
        let (v, _) = gk15(&mut |x: f64| x.powi(10), 0.0, 1.0);
        assert!((v - 1.0 / 11.0).abs() < 1e-15);
        let (v, _) = gk15(&mut |x: f64| x * (1.0 - x), 0.0, 0.5);
        assert!((v - 1.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn adaptive_handles_jump() {
        let r = integrate(
            |x| if x < 1.0 / 3.0 { 1.0 } else { 0.0 },
            0.0,
            1.0,
            QuadratureSettings::default(),
        );
        assert!(r.converged);
        assert!((r.value - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_smooth_oscillatory() {
        let r = integrate(
            |x: f64| (40.0 * x).sin(),
            0.0,
            1.0,
            QuadratureSettings {
                abs_tol: 1e-13,
                max_subdivisions: 1000,
            },
        );
        let exact = (1.0 - 40.0_f64.cos()) / 40.0;
        assert!((r.value - exact).abs() < 1e-13);
    }

    #[test]
    fn tolerance_below_rounding_floor_still_converges() {
        let r = integrate(
            |_| 2.5,
            0.0,
            1.0,
            QuadratureSettings {
                abs_tol: 1e-18,
                max_subdivisions: 1000,
            },
        );
        assert!(r.converged);
        assert_eq!(r.subdivisions, 0);
        assert_eq!(r.value, 2.5);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let r = integrate(
            |x: f64| 1.0 / x.abs().sqrt().max(1e-300),
            -1.0,
            1.0,
            QuadratureSettings {
                abs_tol: 1e-14,
                max_subdivisions: 3,
            },
        );
        assert!(!r.converged);
    }

    #[test]
    fn rectangle_separable() {
        let r = integrate_rect(
            |x, y| x * y,
            (0.5, 1.0),
            (0.0, 0.5),
            QuadratureSettings::default(),
        );
        // (∫_{.5}^1 x)(∫_0^{.5} y) = 0.375 * 0.125
        assert!((r.value - 0.375 * 0.125).abs() < 1e-15);
        assert!(r.converged);
    }
}
