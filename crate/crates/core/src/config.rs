//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::Observable;
use crate::dynamics::{default_dt, Configuration, Kernel};
use crate::error::{Error, Result};
use crate::graphs::AdjacencyMatrix;
use crate::signals::{gen_blinking_pairs, gen_rotating_star, PiecewiseConstantSignal, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub signal: SignalSpec,
    pub window: Window,
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Configuration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub certify: CertifySpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    pub d: usize,
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Inline {
        signal: PiecewiseConstantSignal,
    },
    File {
        path: PathBuf,
    },
    Constant {
        adjacency: AdjacencyMatrix,
    },
    RotatingStar {
        dwell: f64,
        #[serde(default)]
        seed: u64,
    },
    BlinkingPairs {
        dwell: f64,
        duty: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "one")]
    pub sample_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSet {
    /// Agents drawn uniformly from the Euclidean unit ball.
    UnitBall,
    Explicit(Vec<Configuration>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_num_initial")]
    pub num_initial: usize,
    #[serde(default = "default_init_set")]
    pub init_set: InitSet,
    #[serde(default)]
    pub seed: u64,
}

fn default_num_initial() -> usize {
    32
}

fn default_init_set() -> InitSet {
    InitSet::UnitBall
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            num_initial: default_num_initial(),
            init_set: InitSet::UnitBall,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda2Request {
    /// Certify λ₂ only when every piece is balanced.
    #[default]
    Auto,
    Required,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    #[serde(default)]
    pub lambda2: Lambda2Request,
    /// Horizon for clamped signals; defaults to `run.t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_observable")]
    pub observable: Observable,
}

fn default_observable() -> Observable {
    Observable::Diameter
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            observable: Observable::Diameter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub trajectories: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            trajectories: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text, path)?;
        // Signal files are resolved relative to the config file.
        if let SignalSpec::File { path: p } = &mut cfg.signal {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn build_signal(&self) -> Result<PiecewiseConstantSignal> {
        let field = |e: Error| Error::config("signal", e.to_string());
        match &self.signal {
            SignalSpec::Inline { signal } => Ok(signal.clone()),
            SignalSpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|source| Error::Parse {
                    path: path.clone(),
                    source,
                })
            }
            SignalSpec::Constant { adjacency } => Ok(PiecewiseConstantSignal::constant(adjacency.clone())),
            SignalSpec::RotatingStar { dwell, seed } => gen_rotating_star(self.system.n, *dwell, *seed).map_err(field),
            SignalSpec::BlinkingPairs { dwell, duty, seed } => {
                gen_blinking_pairs(self.system.n, *dwell, *duty, *seed).map_err(field)
            }
        }
    }

    /// Checks cross-field consistency and returns the resolved signal.
    pub fn validate(&self) -> Result<PiecewiseConstantSignal> {
        let s = &self.system;
        if s.n == 0 {
            return Err(Error::config("system.n", "must be >= 1"));
        }
        if s.d == 0 {
            return Err(Error::config("system.d", "must be >= 1"));
        }
        s.kernel
            .validate()
            .map_err(|e| Error::config("system.kernel", e.to_string()))?;
        self.window
            .validate()
            .map_err(|e| Error::config("window", e.to_string()))?;
        let r = &self.run;
        if !(r.t_end > 0.0) || !r.t_end.is_finite() {
            return Err(Error::config("run.t_end", format!("must be > 0, got {}", r.t_end)));
        }
        if self.window.tau > r.t_end {
            return Err(Error::config(
                "window.tau",
                format!("tau = {} exceeds run.t_end = {}", self.window.tau, r.t_end),
            ));
        }
        if let Some(dt) = r.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::config("run.dt", format!("must be > 0, got {dt}")));
            }
        }
        if r.sample_every == 0 {
            return Err(Error::config("run.sample_every", "must be >= 1"));
        }
        if let Some(h) = self.certify.horizon {
            if !(h > 0.0) {
                return Err(Error::config("certify.horizon", format!("must be > 0, got {h}")));
            }
        }
        if let Some(x) = &self.initial {
            if x.n() != s.n || x.d() != s.d {
                return Err(Error::config(
                    "initial",
                    format!("shape {}x{} does not match system {}x{}", x.n(), x.d(), s.n, s.d),
                ));
            }
        }
        if let Some(sw) = &self.sweep {
            match &sw.init_set {
                InitSet::UnitBall => {
                    if sw.num_initial == 0 {
                        return Err(Error::config("sweep.num_initial", "must be >= 1"));
                    }
                }
                InitSet::Explicit(list) => {
                    if list.is_empty() {
                        return Err(Error::config("sweep.init_set", "explicit list is empty"));
                    }
                    if let Some(k) = list.iter().position(|x| x.n() != s.n || x.d() != s.d) {
                        return Err(Error::config(
                            format!("sweep.init_set[{k}]"),
                            format!("shape does not match system {}x{}", s.n, s.d),
                        ));
                    }
                }
            }
        }
        let sig = self.build_signal()?;
        if sig.n() != s.n {
            return Err(Error::config(
                "signal",
                format!("signal has n = {} but system.n = {}", sig.n(), s.n),
            ));
        }
        Ok(sig)
    }

    /// Explicit `run.dt`, or `min(1e-2, shortest piece / 20, tau / 100)`.
    pub fn step(&self, sig: &PiecewiseConstantSignal) -> f64 {
        self.run.dt.unwrap_or_else(|| {
            let min_dwell = sig
                .breakpoints()
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            default_dt(min_dwell, self.window.tau)
        })
    }
}
