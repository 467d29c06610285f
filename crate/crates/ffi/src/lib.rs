//! C ABI for the graphon-spde solver.
//!
//! Objects are opaque handles created by `gs_*_new` style functions and
//! released with the matching `gs_*_free`. Every fallible call returns a
//! [`GsStatus`]; on failure a description is available from
//! [`gs_last_error_message`] on the same thread. Output arrays are supplied by
//! the caller together with their length.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use graphon_spde::dynamics::{self, apply_nonlocal, Drift, InitialCondition, Interaction, Problem};
use graphon_spde::experiments::{self, ExperimentConfig, Mode};
use graphon_spde::grid::GridFunction;
use graphon_spde::kernels::{self, Graphon, KernelMatrix};
use graphon_spde::noise::{self, NoisePath, QWienerSpec};
use graphon_spde::Error;

/// Result codes shared by all entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    InvalidArgument = 1,
    Incommensurable = 2,
    QuadratureNonConvergence = 3,
    Aliasing = 4,
    NonFinite = 5,
    ResolutionMismatch = 6,
    UnboundedKernel = 7,
    Parse = 8,
    Io = 9,
    NullPointer = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Opaque continuum problem.
pub struct GsProblem(Problem);

/// Opaque fine-resolution noise path.
pub struct GsNoisePath(NoisePath);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> GsStatus {
    match err {
        Error::InvalidArgument(_) => GsStatus::InvalidArgument,
        Error::Incommensurable(_) => GsStatus::Incommensurable,
        Error::QuadratureNonConvergence { .. } => GsStatus::QuadratureNonConvergence,
        Error::Aliasing { .. } => GsStatus::Aliasing,
        Error::NonFinite { .. } => GsStatus::NonFinite,
        Error::ResolutionMismatch { .. } => GsStatus::ResolutionMismatch,
        Error::UnboundedKernel { .. } => GsStatus::UnboundedKernel,
        Error::Trial { source, .. } => status_of(source),
        Error::Parse(_) | Error::Config { .. } => GsStatus::Parse,
        Error::Io(_) => GsStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Buffer { needed: usize, given: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            GsStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { needed, given })) => {
            set_error(format!(
                "output buffer holds {given} values, {needed} needed"
            ));
            GsStatus::BufferTooSmall
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            GsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Parse(format!("{what} is not valid UTF-8"))))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(
    p: *mut T,
    len: usize,
    needed: usize,
    what: &'static str,
) -> Result<&'a mut [T], Failure> {
    if len < needed {
        return Err(Failure::Buffer { needed, given: len });
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, needed))
}

unsafe fn write<T>(p: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    p.write(value);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a problem from textual component names, e.g. kernel `"band:r=0.25"`,
/// interaction `"kuramoto_sine"`, drift `"zero"`, initial `"parabola"`,
/// noise `"periodic:s=2.0,M=4096"`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_problem_new(
    kernel: *const c_char,
    interaction: *const c_char,
    drift: *const c_char,
    initial: *const c_char,
    noise: *const c_char,
    horizon: f64,
    out: *mut *mut GsProblem,
) -> GsStatus {
    guard(|| {
        let kernel: Graphon = text(kernel, "kernel")?.parse()?;
        let interaction: Interaction = text(interaction, "interaction")?.parse()?;
        let drift: Drift = text(drift, "drift")?.parse()?;
        let initial: InitialCondition = text(initial, "initial")?.parse()?;
        let noise: QWienerSpec = text(noise, "noise")?.parse()?;
        let p = Problem::new(drift, interaction, kernel, noise, initial, horizon)?;
        write(out, Box::into_raw(Box::new(GsProblem(p))), "out")
    })
}

/// # Safety
/// `problem` must come from [`gs_problem_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gs_problem_free(problem: *mut GsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

unsafe fn problem_ref<'a>(p: *const GsProblem) -> Result<&'a Problem, Failure> {
    p.as_ref().map(|p| &p.0).ok_or(Failure::Null("problem"))
}

/// Synthesizes `steps` increments of the problem's noise on `n_fine` cells.
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_noise_sample(
    problem: *const GsProblem,
    n_fine: usize,
    dt_fine: f64,
    steps: usize,
    seed: u64,
    out: *mut *mut GsNoisePath,
) -> GsStatus {
    guard(|| {
        let prob = problem_ref(problem)?;
        let path = noise::sample_increments(&prob.noise, n_fine, dt_fine, steps, seed)?;
        write(out, Box::into_raw(Box::new(GsNoisePath(path))), "out")
    })
}

/// # Safety
/// `path` must come from [`gs_noise_sample`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gs_noise_path_free(path: *mut GsNoisePath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Reports the dimensions of a noise path.
///
/// # Safety
/// `path` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_noise_path_dims(
    path: *const GsNoisePath,
    n_fine: *mut usize,
    steps: *mut usize,
) -> GsStatus {
    guard(|| {
        let p = &path.as_ref().ok_or(Failure::Null("path"))?.0;
        write(n_fine, p.n_fine(), "n_fine")?;
        write(steps, p.steps(), "steps")
    })
}

/// Copies the `steps × n_fine` increments (time-major) into `buf`.
///
/// # Safety
/// `path` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_noise_path_copy(
    path: *const GsNoisePath,
    buf: *mut f64,
    len: usize,
) -> GsStatus {
    guard(|| {
        let p = &path.as_ref().ok_or(Failure::Null("path"))?.0;
        let data = p.as_slice();
        output(buf, len, data.len(), "buf")?.copy_from_slice(data);
        Ok(())
    })
}

/// Integrates to the horizon on `n` cells with step `dt`, writing the `n`
/// final cell values.
///
/// # Safety
/// Handles must be live; `out` must hold `len ≥ n` doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_integrate(
    problem: *const GsProblem,
    n: usize,
    dt: f64,
    path: *const GsNoisePath,
    out: *mut f64,
    len: usize,
) -> GsStatus {
    guard(|| {
        let prob = problem_ref(problem)?;
        let path = &path.as_ref().ok_or(Failure::Null("path"))?.0;
        let u = dynamics::integrate(prob, n, dt, path)?;
        output(out, len, n, "out")?.copy_from_slice(u.values());
        Ok(())
    })
}

/// Cell averages of a named kernel on the `n × n` grid, row-major.
///
/// # Safety
/// `kernel` must be NUL-terminated; `out` must hold `len ≥ n²` doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_project_kernel(
    kernel: *const c_char,
    n: usize,
    tol: f64,
    out: *mut f64,
    len: usize,
) -> GsStatus {
    guard(|| {
        let g: Graphon = text(kernel, "kernel")?.parse()?;
        let k = kernels::project_kernel(&g, n, tol)?;
        output(out, len, n * n, "out")?.copy_from_slice(k.coeffs());
        Ok(())
    })
}

/// `h Σ_j K_ij S(u_i, u_j)` for a row-major `n × n` matrix `coeffs`.
/// A nonzero `circulant` enables the FFT path for the sine interaction.
///
/// # Safety
/// `coeffs` must hold `n²` doubles, `u` and `out` `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn gs_apply_nonlocal(
    coeffs: *const f64,
    n: usize,
    circulant: i32,
    interaction: *const c_char,
    u: *const f64,
    out: *mut f64,
) -> GsStatus {
    guard(|| {
        let s: Interaction = text(interaction, "interaction")?.parse()?;
        let k =
            KernelMatrix::from_coeffs(n, input(coeffs, n * n, "coeffs")?.to_vec(), circulant != 0)?;
        let u = GridFunction::new(input(u, n, "u")?.to_vec())?;
        let v = apply_nonlocal(&k, &s, &u)?;
        output(out, n, n, "out")?.copy_from_slice(v.values());
        Ok(())
    })
}

/// The noise rate functional `Ψ(n)` of a named spectrum.
///
/// # Safety
/// `noise` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_psi(noise: *const c_char, n: usize, out: *mut f64) -> GsStatus {
    guard(|| {
        let spec: QWienerSpec = text(noise, "noise")?.parse()?;
        write(out, noise::psi(&spec, n), "out")
    })
}

/// Least-squares slope of `log y` against `log x` and its standard error.
///
/// # Safety
/// `xs` and `ys` must hold `len` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_fit_rate(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    slope: *mut f64,
    stderr: *mut f64,
) -> GsStatus {
    guard(|| {
        let xs = input(xs, len, "xs")?;
        let ys = input(ys, len, "ys")?;
        let pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        let fit = experiments::fit_rate(&pts)?;
        write(slope, fit.slope, "slope")?;
        write(stderr, fit.stderr_slope, "stderr")
    })
}

/// Spatial convergence study: MSE against the `n_star` solution for each of
/// the `count` resolutions in `n_list`, written to `mse_out`.
///
/// # Safety
/// `problem` must be live; `n_list` and `mse_out` must hold `count` values.
#[no_mangle]
pub unsafe extern "C" fn gs_convergence_in_n(
    problem: *const GsProblem,
    dt: f64,
    n_list: *const usize,
    count: usize,
    n_star: usize,
    trials: usize,
    seed: u64,
    mse_out: *mut f64,
) -> GsStatus {
    guard(|| {
        let prob = problem_ref(problem)?.clone();
        let mode = Mode::VaryN {
            dt,
            n_list: input(n_list, count, "n_list")?.to_vec(),
            n_star,
        };
        let table =
            experiments::convergence_in_n(&ExperimentConfig::new(prob, mode, trials, seed)?)?;
        let out = output(mse_out, count, count, "mse_out")?;
        for (o, r) in out.iter_mut().zip(&table.rows) {
            *o = r.mse;
        }
        Ok(())
    })
}

/// Temporal convergence study: MSE against the `dt_star` solution for each of
/// the `count` steps in `dt_list`, written to `mse_out`.
///
/// # Safety
/// `problem` must be live; `dt_list` and `mse_out` must hold `count` values.
#[no_mangle]
pub unsafe extern "C" fn gs_convergence_in_dt(
    problem: *const GsProblem,
    n: usize,
    dt_list: *const f64,
    count: usize,
    dt_star: f64,
    trials: usize,
    seed: u64,
    mse_out: *mut f64,
) -> GsStatus {
    guard(|| {
        let prob = problem_ref(problem)?.clone();
        let mode = Mode::VaryDt {
            n,
            dt_list: input(dt_list, count, "dt_list")?.to_vec(),
            dt_star,
        };
        let table =
            experiments::convergence_in_dt(&ExperimentConfig::new(prob, mode, trials, seed)?)?;
        let out = output(mse_out, count, count, "mse_out")?;
        for (o, r) in out.iter_mut().zip(&table.rows) {
            *o = r.mse;
        }
        Ok(())
    })
}
