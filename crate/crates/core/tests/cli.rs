use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_graphon-spde"));
    c.env_remove("GRAPHON_SPDE_THREADS");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

const STUDY: &str = r#"
[problem]
kernel = "band:r=0.25"
interaction = "kuramoto_sine"
drift = "zero"
initial = "parabola"
horizon = 0.5
noise = "periodic:s=2.0,M=16"

[experiment]
mode = "vary_n"
dt = 1e-2
n_list = [8, 16, 32]
n_star = 256
trials = 12
seed = 5
"#;

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn converge_is_reproducible_across_threads_and_from_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "study.toml", STUDY);
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let o = run(
            &[
                "converge-n",
                "--config",
                &cfg,
                "--out",
                out,
                "--threads",
                threads,
            ],
            d,
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let a = fs::read(d.join("a/results.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b/results.csv")).unwrap());
    assert!(d.join("a/convergence.svg").exists());

    let sidecar = d.join("a/results.meta.toml").to_string_lossy().into_owned();
    let o = run(&["converge-n", "--config", &sidecar, "--out", "c"], d);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(a, fs::read(d.join("c/results.csv")).unwrap());

    let csv = String::from_utf8(a).unwrap();
    assert!(csv.starts_with("mode,s,n,dt,trials,mse,std,stderr,seed\n"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("vary_n,")).count(), 3);
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "study.toml", STUDY);
    let o = run(
        &[
            "converge-n",
            "--config",
            &cfg,
            "--out",
            "o",
            "--seed",
            "9",
            "--trials",
            "3",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(d.join("o/results.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.ends_with(",9"), "{row}");
    assert_eq!(row.split(',').nth(4), Some("3"));
}

#[test]
fn config_errors_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(
        d,
        "bad.toml",
        &STUDY.replace("n_list = [8, 16, 32]", "n_list = []"),
    );
    let o = run(&["converge-n", "--config", &cfg], d);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:13:"), "{err}");

    let cfg = write(d, "typo.toml", &STUDY.replace("trials = 12", "trails = 12"));
    assert_eq!(
        run(&["converge-n", "--config", &cfg], d).status.code(),
        Some(2)
    );

    assert_eq!(run(&["converge-n", "--bogus"], d).status.code(), Some(2));
    // a vary_n file given to the Δt study
    let cfg = write(d, "study.toml", STUDY);
    assert_eq!(
        run(&["converge-dt", "--config", &cfg], d).status.code(),
        Some(2)
    );
}

#[test]
fn unresolved_reference_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(
        d,
        "g.toml",
        &STUDY
            .replace("n_star = 256", "n_star = 64")
            .replace("trials = 12", "trials = 4"),
    );
    let o = run(&["converge-n", "--config", &cfg, "--out", "g"], d);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    // the table is still written so the failure can be inspected
    assert!(d.join("g/results.csv").exists());
}

#[test]
fn check_rejects_small_ensembles() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["check", "--trials", "10"], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn zero_dynamics_simulate_keeps_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(
        d,
        "z.toml",
        r#"
[problem]
kernel = "band:r=0.25"
interaction = "zero"
drift = "zero"
initial = "constant:c=0.5"
horizon = 0.1
noise = "zero"

[experiment]
n = 8
dt = 0.01
stride = 5
"#,
    );
    let o = run(&["simulate", "--config", &cfg, "--out", "s"], d);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let traj = fs::read_to_string(d.join("s/trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert!(lines.next().unwrap().starts_with("t,cell_0,"));
    for l in lines {
        assert!(l.split(',').skip(1).all(|v| v == "0.5"), "{l}");
    }
    assert!(d.join("s/simulate.meta.toml").exists());
}

#[test]
fn simulate_is_deterministic_and_dumps_noise() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(
        d,
        "s.toml",
        r#"
[problem]
noise = "periodic:s=2.0,M=8"
horizon = 0.2

[experiment]
n = 16
dt = 0.01
seed = 3

[output]
formats = ["csv", "noise"]
"#,
    );
    for out in ["x", "y"] {
        assert_eq!(
            run(&["simulate", "--config", &cfg, "--out", out], d)
                .status
                .code(),
            Some(0)
        );
    }
    for f in ["trajectory.csv", "final_state.csv", "noise.bin"] {
        assert_eq!(
            fs::read(d.join("x").join(f)).unwrap(),
            fs::read(d.join("y").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn psi_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["psi"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("n,psi\n"));
}
