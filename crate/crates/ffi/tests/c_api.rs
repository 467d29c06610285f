use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use graphon_spde::dynamics::{self, Problem};
use graphon_spde::kernels::{self, Graphon};
use graphon_spde::noise::{self, QWienerSpec};
use graphon_spde_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        gs_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn sine_problem(noise: &str) -> *mut GsProblem {
    let mut p = ptr::null_mut();
    let st = unsafe {
        gs_problem_new(
            c("band:r=0.25").as_ptr(),
            c("kuramoto_sine").as_ptr(),
            c("zero").as_ptr(),
            c("parabola").as_ptr(),
            c(noise).as_ptr(),
            1.0,
            &mut p,
        )
    };
    assert_eq!(st, GsStatus::Ok, "{}", last_error());
    p
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(gs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn integrate_through_handles_matches_library() {
    let p = sine_problem("periodic:s=2,M=16");
    let mut path = ptr::null_mut();
    assert_eq!(
        unsafe { gs_noise_sample(p, 64, 0.01, 100, 7, &mut path) },
        GsStatus::Ok
    );
    let (mut nf, mut steps) = (0usize, 0usize);
    assert_eq!(
        unsafe { gs_noise_path_dims(path, &mut nf, &mut steps) },
        GsStatus::Ok
    );
    assert_eq!((nf, steps), (64, 100));

    let mut incs = vec![0.0; nf * steps];
    assert_eq!(
        unsafe { gs_noise_path_copy(path, incs.as_mut_ptr(), incs.len()) },
        GsStatus::Ok
    );

    let mut u = vec![0.0; 16];
    let st = unsafe { gs_integrate(p, 16, 0.02, path, u.as_mut_ptr(), u.len()) };
    assert_eq!(st, GsStatus::Ok, "{}", last_error());

    let prob = Problem::sine_model(2.0, 16).unwrap();
    let lib_path = noise::sample_increments(&prob.noise, 64, 0.01, 100, 7).unwrap();
    assert_eq!(lib_path.as_slice(), &incs[..]);
    let expect = dynamics::integrate(&prob, 16, 0.02, &lib_path).unwrap();
    assert_eq!(expect.values(), &u[..]);

    unsafe {
        gs_noise_path_free(path);
        gs_problem_free(p);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut p = ptr::null_mut();
    let st = unsafe {
        gs_problem_new(
            c("band:r=0.25").as_ptr(),
            c("sine").as_ptr(),
            c("zero").as_ptr(),
            c("parabola").as_ptr(),
            c("periodic:s=0.5,M=4").as_ptr(),
            1.0,
            &mut p,
        )
    };
    assert_eq!(st, GsStatus::InvalidArgument);
    assert!(p.is_null());
    assert!(!last_error().is_empty());

    let st = unsafe {
        gs_problem_new(
            ptr::null(),
            ptr::null(),
            ptr::null(),
            ptr::null(),
            ptr::null(),
            1.0,
            &mut p,
        )
    };
    assert_eq!(st, GsStatus::NullPointer);

    let mut psi = 0.0;
    assert_eq!(
        unsafe { gs_psi(c("gaussian").as_ptr(), 16, &mut psi) },
        GsStatus::Parse
    );

    let p = sine_problem("periodic:s=2,M=64");
    let mut path = ptr::null_mut();
    assert_eq!(
        unsafe { gs_noise_sample(p, 64, 0.01, 1, 0, &mut path) },
        GsStatus::Aliasing
    );
    assert!(last_error().contains("64"));
    unsafe { gs_problem_free(p) };
}

#[test]
fn short_buffers_are_rejected() {
    let mut out = vec![0.0; 15];
    let st = unsafe {
        gs_project_kernel(
            c("band:r=0.25").as_ptr(),
            4,
            1e-10,
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_eq!(st, GsStatus::BufferTooSmall);
    assert!(last_error().contains("16"));
}

#[test]
fn kernel_and_operator_entry_points() {
    let n = 8;
    let mut k = vec![0.0; n * n];
    let st =
        unsafe { gs_project_kernel(c("band:r=0.25").as_ptr(), n, 1e-10, k.as_mut_ptr(), k.len()) };
    assert_eq!(st, GsStatus::Ok);
    let lib = kernels::project_kernel(&Graphon::band(0.25).unwrap(), n, 1e-10).unwrap();
    assert_eq!(lib.coeffs(), &k[..]);

    let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    let (mut dense, mut fft) = (vec![0.0; n], vec![0.0; n]);
    let sine = c("kuramoto_sine");
    unsafe {
        assert_eq!(
            gs_apply_nonlocal(
                k.as_ptr(),
                n,
                0,
                sine.as_ptr(),
                u.as_ptr(),
                dense.as_mut_ptr()
            ),
            GsStatus::Ok
        );
        assert_eq!(
            gs_apply_nonlocal(
                k.as_ptr(),
                n,
                1,
                sine.as_ptr(),
                u.as_ptr(),
                fft.as_mut_ptr()
            ),
            GsStatus::Ok
        );
    }
    let h = 1.0 / n as f64;
    for i in 0..n {
        let naive: f64 = (0..n)
            .map(|j| h * k[i * n + j] * (2.0 * std::f64::consts::PI * (u[i] - u[j])).sin())
            .sum();
        assert!((dense[i] - naive).abs() < 1e-13);
        assert!((fft[i] - naive).abs() < 1e-12);
    }
}

#[test]
fn psi_and_fit_rate() {
    let mut psi = 0.0;
    assert_eq!(
        unsafe { gs_psi(c("periodic:s=2,M=4096").as_ptr(), 64, &mut psi) },
        GsStatus::Ok
    );
    let spec: QWienerSpec = "periodic:s=2,M=4096".parse().unwrap();
    assert_eq!(psi, noise::psi(&spec, 64));

    let xs = [1.0, 2.0, 4.0, 8.0];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
    let (mut slope, mut se) = (0.0, 0.0);
    assert_eq!(
        unsafe { gs_fit_rate(xs.as_ptr(), ys.as_ptr(), 4, &mut slope, &mut se) },
        GsStatus::Ok
    );
    assert!((slope + 1.5).abs() < 1e-12);
    assert!(se < 1e-10);
}

#[test]
fn deterministic_convergence_study() {
    let mut p = ptr::null_mut();
    let st = unsafe {
        gs_problem_new(
            c("band:r=0.25").as_ptr(),
            c("sine").as_ptr(),
            c("zero").as_ptr(),
            c("parabola").as_ptr(),
            c("zero").as_ptr(),
            1.0,
            &mut p,
        )
    };
    assert_eq!(st, GsStatus::Ok);
    let ns = [16usize, 32, 64];
    let mut mse = [0.0; 3];
    let st = unsafe { gs_convergence_in_n(p, 1e-2, ns.as_ptr(), 3, 512, 1, 0, mse.as_mut_ptr()) };
    assert_eq!(st, GsStatus::Ok, "{}", last_error());
    assert!(mse[0] > mse[1] && mse[1] > mse[2] && mse[2] > 0.0);
    unsafe { gs_problem_free(p) };
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/graphon_spde.h")
}

#[test]
fn header_declares_every_entry_point() {
    let h = std::fs::read_to_string(header()).unwrap();
    for f in [
        "gs_last_error_message",
        "gs_version",
        "gs_problem_new",
        "gs_problem_free",
        "gs_noise_sample",
        "gs_noise_path_free",
        "gs_noise_path_dims",
        "gs_noise_path_copy",
        "gs_integrate",
        "gs_project_kernel",
        "gs_apply_nonlocal",
        "gs_psi",
        "gs_fit_rate",
        "gs_convergence_in_n",
        "gs_convergence_in_dt",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "graphon_spde.h"

int main(void) {
    GsProblem *p = NULL;
    if (gs_problem_new("band:r=0.25", "sine", "zero", "parabola",
                       "periodic:s=2,M=8", 1.0, &p) != GS_STATUS_OK) return 1;
    GsNoisePath *w = NULL;
    if (gs_noise_sample(p, 32, 0.05, 20, 3, &w) != GS_STATUS_OK) return 2;
    double u[16];
    if (gs_integrate(p, 16, 0.05, w, u, 16) != GS_STATUS_OK) return 3;
    if (gs_integrate(p, 16, 0.05, w, u, 4) != GS_STATUS_BUFFER_TOO_SMALL) return 4;
    char msg[128];
    if (gs_last_error_message(msg, sizeof msg) == 0 || strlen(msg) == 0) return 5;
    gs_noise_path_free(w);
    gs_problem_free(p);
    printf("%.17g\n", u[0]);
    return 0;
}
"#;

/// Compiles a C client against the generated header and the static library.
/// Skipped when no C compiler or static archive is present.
#[test]
fn c_client_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libgraphon_spde_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let bin = dir.path().join("client");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to build");
    let out = Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "C client exited with {:?}",
        out.status.code()
    );

    let prob = Problem::sine_model(2.0, 8).unwrap();
    let path = noise::sample_increments(&prob.noise, 32, 0.05, 20, 3).unwrap();
    let u = dynamics::integrate(&prob, 16, 0.05, &path).unwrap();
    let printed: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert_eq!(printed, u.values()[0]);
}
