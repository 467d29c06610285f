//! Experiment files: TOML with `[problem]`, `[noise]`, `[experiment]`,
//! `[output]` and optional `[check]` tables.
//!
//! Semantic errors are reported against the line that holds the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Drift, InitialCondition, Interaction, Problem};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentConfig, Mode};
use crate::kernels::Graphon;
use crate::noise::QWienerSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseTable>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSection>,
    /// Written into sidecars; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_interaction")]
    pub interaction: String,
    #[serde(default = "default_drift")]
    pub drift: String,
    #[serde(default = "default_initial")]
    pub initial: String,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Compact form, e.g. `"periodic:s=2.0,M=4096"`; alternative to `[noise]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTable {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_star: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fine: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Trajectory recording stride for `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_error: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSection {
    pub version: String,
    pub command: String,
    pub seed: u64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            kernel: default_kernel(),
            interaction: default_interaction(),
            drift: default_drift(),
            initial: default_initial(),
            horizon: default_horizon(),
            noise: None,
        }
    }
}

fn default_kernel() -> String {
    "band:r=0.25".into()
}
fn default_interaction() -> String {
    "kuramoto_sine".into()
}
fn default_drift() -> String {
    "zero".into()
}
fn default_initial() -> String {
    "parabola".into()
}
fn default_horizon() -> f64 {
    1.0
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<String> {
    vec!["csv".into(), "svg".into()]
}

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_SEED: u64 = 1;
/// Noise used when neither `problem.noise` nor a `[noise]` table is given.
pub const DEFAULT_NOISE: &str = "periodic:s=2.0,M=4096";
pub const KNOWN_FORMATS: [&str; 3] = ["csv", "svg", "noise"];

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub max_error: bool,
}

/// A parsed file together with its source text for line-anchored errors.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub source: String,
    pub config: RunConfig,
    /// `--trials`, which also overrides `check.trials`
    pub trials_flag: Option<usize>,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            line: 0,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(path, source)
    }

    pub fn parse(path: &Path, source: String) -> Result<Self> {
        let config: RunConfig = toml::from_str(&source).map_err(|e| {
            let line = e
                .span()
                .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Config {
                path: path.to_path_buf(),
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        let loaded = Self {
            path: path.to_path_buf(),
            source,
            config,
            trials_flag: None,
        };
        loaded.check_formats()?;
        Ok(loaded)
    }

    /// Error anchored at `key` inside `[section]`, or at the section header,
    /// or at line 0 when neither appears in the file.
    pub fn error_at(&self, section: &str, key: &str, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line: locate(&self.source, section, key),
            message: message.into(),
        }
    }

    fn check_formats(&self) -> Result<()> {
        for f in &self.config.output.formats {
            if !KNOWN_FORMATS.contains(&f.as_str()) {
                return Err(self.error_at(
                    "output",
                    "formats",
                    format!("unknown output format {f:?} (expected one of {KNOWN_FORMATS:?})"),
                ));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        let e = &mut self.config.experiment;
        if let Some(seed) = o.seed {
            e.seed = Some(seed);
        }
        if let Some(trials) = o.trials {
            e.trials = Some(trials);
            self.trials_flag = Some(trials);
        }
        if o.max_error {
            e.max_error = Some(true);
        }
        if let Some(out) = &o.out {
            self.config.output.dir = out.clone();
        }
    }

    pub fn seed(&self) -> u64 {
        self.config.experiment.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn trials(&self) -> usize {
        self.config.experiment.trials.unwrap_or(DEFAULT_TRIALS)
    }

    pub fn wants(&self, format: &str) -> bool {
        self.config.output.formats.iter().any(|f| f == format)
    }

    pub fn noise(&self) -> Result<QWienerSpec> {
        let c = &self.config;
        match (&c.problem.noise, &c.noise) {
            (Some(_), Some(_)) => Err(self.error_at(
                "noise",
                "family",
                "noise given both as problem.noise and as a [noise] table",
            )),
            (Some(s), None) => s
                .parse()
                .map_err(|e: Error| self.error_at("problem", "noise", e.to_string())),
            (None, Some(t)) => {
                let family = t.family.as_str();
                let spec = match family {
                    "zero" | "none" => Ok(QWienerSpec::Zero),
                    "periodic" | "periodic_fourier" | "dirichlet" | "dirichlet_sine" => {
                        let s =
                            t.s.ok_or_else(|| self.error_at("noise", "family", "missing s"))?;
                        let m = t
                            .modes
                            .ok_or_else(|| self.error_at("noise", "family", "missing M"))?;
                        if family.starts_with("periodic") {
                            QWienerSpec::periodic(s, m)
                        } else {
                            QWienerSpec::dirichlet(s, m)
                        }
                        .map_err(|e| self.error_at("noise", "s", e.to_string()))
                    }
                    other => Err(self.error_at(
                        "noise",
                        "family",
                        format!("unknown noise family {other:?}"),
                    )),
                }?;
                Ok(spec)
            }
            (None, None) => DEFAULT_NOISE.parse(),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let p = &self.config.problem;
        let kernel: Graphon = p
            .kernel
            .parse()
            .map_err(|e: Error| self.error_at("problem", "kernel", e.to_string()))?;
        let interaction: Interaction = p
            .interaction
            .parse()
            .map_err(|e: Error| self.error_at("problem", "interaction", e.to_string()))?;
        let drift: Drift = p
            .drift
            .parse()
            .map_err(|e: Error| self.error_at("problem", "drift", e.to_string()))?;
        let initial: InitialCondition = p
            .initial
            .parse()
            .map_err(|e: Error| self.error_at("problem", "initial", e.to_string()))?;
        let noise = self.noise()?;
        Problem::new(drift, interaction, kernel, noise, initial, p.horizon)
            .map_err(|e| self.error_at("problem", "horizon", e.to_string()))
    }

    fn require<T: Clone>(&self, value: &Option<T>, key: &str, mode: &str) -> Result<T> {
        value
            .clone()
            .ok_or_else(|| self.error_at("experiment", key, format!("mode {mode} needs {key}")))
    }

    /// The study described by `[experiment]`, validated.
    pub fn experiment(&self, expected_mode: Option<&str>) -> Result<ExperimentConfig> {
        let e = &self.config.experiment;
        let mode_name = e
            .mode
            .as_deref()
            .ok_or_else(|| self.error_at("experiment", "mode", "experiment.mode is missing"))?;
        if let Some(want) = expected_mode {
            if mode_name != want {
                return Err(self.error_at(
                    "experiment",
                    "mode",
                    format!("this command needs mode = \"{want}\", found \"{mode_name}\""),
                ));
            }
        }
        let mode = match mode_name {
            "vary_n" => {
                let n_list = self.require(&e.n_list, "n_list", mode_name)?;
                if n_list.is_empty() {
                    return Err(self.error_at("experiment", "n_list", "n_list is empty"));
                }
                Mode::VaryN {
                    dt: self.require(&e.dt, "dt", mode_name)?,
                    n_list,
                    n_star: self.require(&e.n_star, "n_star", mode_name)?,
                }
            }
            "vary_dt" => {
                let dt_list = self.require(&e.dt_list, "dt_list", mode_name)?;
                if dt_list.is_empty() {
                    return Err(self.error_at("experiment", "dt_list", "dt_list is empty"));
                }
                Mode::VaryDt {
                    n: self.require(&e.n, "n", mode_name)?,
                    dt_list,
                    dt_star: self.require(&e.dt_star, "dt_star", mode_name)?,
                }
            }
            other => {
                return Err(self.error_at(
                    "experiment",
                    "mode",
                    format!("unknown mode {other:?} (expected vary_n or vary_dt)"),
                ))
            }
        };
        let problem = self.problem()?;
        let cfg = ExperimentConfig {
            problem,
            mode,
            trials: self.trials(),
            seed: self.seed(),
            n_fine: e.n_fine,
            checkpoints: e
                .max_error
                .unwrap_or(false)
                .then_some(crate::experiments::MAX_ERROR_CHECKPOINTS),
            threads: None,
        };
        cfg.validate().map_err(|err| {
            let key = match &err {
                Error::Aliasing { .. } | Error::Incommensurable(_) => "n_fine",
                _ => match cfg.mode {
                    Mode::VaryN { .. } => "n_list",
                    Mode::VaryDt { .. } => "dt_list",
                },
            };
            self.error_at("experiment", key, err.to_string())
        })?;
        Ok(cfg)
    }

    /// Effective configuration plus provenance, re-runnable as input.
    pub fn sidecar(&self, command: &str) -> Result<String> {
        let mut c = self.config.clone();
        c.experiment.seed = Some(self.seed());
        if c.problem.noise.is_none() && c.noise.is_none() {
            c.problem.noise = Some(DEFAULT_NOISE.to_string());
        }
        if c.experiment.mode.is_some() {
            c.experiment.trials = Some(self.trials());
        }
        c.meta = Some(MetaSection {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: self.seed(),
        });
        toml::to_string(&c).map_err(|e| Error::Parse(format!("serializing sidecar: {e}")))
    }
}

/// 1-based line of `key = …` inside `[section]`, else of the header.
fn locate(source: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header_line = 0;
    for (idx, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section && header_line == 0 {
                header_line = idx + 1;
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return idx + 1;
                }
            }
        }
    }
    header_line
}
