//! Configuration ingestion: a JSON file with sections `model`, `solver`,
//! `analysis`, `output`, merged with command-line flags (flags win). Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dde::{SolverConfig, DEFAULT_ODE_DT, DEFAULT_STEPS_PER_DELAY, DEFAULT_T_END};
use crate::model::{BetaRate, ModelParams};
use crate::{Error, Result};

/// Introduction-rate specification as it appears in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BetaSpec {
    Hill { beta0: f64, theta: f64, n: f64 },
}

impl BetaSpec {
    pub fn rate(&self) -> Result<BetaRate> {
        match *self {
            Self::Hill { beta0, theta, n } => BetaRate::hill(beta0, theta, n),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub delta: Option<f64>,
    pub beta: Option<BetaSpec>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub steps_per_delay: Option<usize>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub window: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub out: Option<PathBuf>,
    pub stride: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }
}

/// Model flags shared by every subcommand; unset flags fall back to the
/// config file and then to the reference parameter set.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelFlags {
    /// Death rate (1/day)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Maximal introduction rate (1/day)
    #[arg(long)]
    pub beta0: Option<f64>,
    /// Half-saturation population of the introduction rate
    #[arg(long)]
    pub theta: Option<f64>,
    /// Sensitivity exponent of the introduction rate
    #[arg(long)]
    pub n: Option<f64>,
    /// Cell cycle duration (days)
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SolverFlags {
    /// Integration horizon (days)
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Mesh steps per delay interval
    #[arg(long = "steps-per-delay")]
    pub steps_per_delay: Option<usize>,
    /// Step size for the tau = 0 ordinary system (days)
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct AnalysisFlags {
    /// Classification window (days); defaults to a third of the horizon
    #[arg(long)]
    pub window: Option<f64>,
    /// Convergence tolerance (population units)
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub delta: f64,
    pub beta: BetaSpec,
    pub tau: Option<f64>,
    pub steps_per_delay: usize,
    pub t_end: f64,
    pub dt: f64,
    pub window: Option<f64>,
    pub tol: f64,
    pub out: Option<PathBuf>,
    pub stride: usize,
}

impl RunConfig {
    /// Reference parameter set: `delta = 0.05/day`, Hill rate with
    /// `beta0 = 1.77/day`, `theta = 1`, `n = 12`.
    pub fn defaults() -> Self {
        Self {
            delta: 0.05,
            beta: BetaSpec::Hill { beta0: 1.77, theta: 1.0, n: 12.0 },
            tau: None,
            steps_per_delay: DEFAULT_STEPS_PER_DELAY,
            t_end: DEFAULT_T_END,
            dt: DEFAULT_ODE_DT,
            window: None,
            tol: crate::analysis::DEFAULT_CONVERGENCE_TOL,
            out: None,
            stride: 1,
        }
    }

    pub fn resolve(
        file: Option<&FileConfig>,
        model: &ModelFlags,
        solver: &SolverFlags,
        analysis: &AnalysisFlags,
        out: Option<&PathBuf>,
        stride: Option<usize>,
    ) -> Result<Self> {
        let mut cfg = Self::defaults();
        if let Some(file) = file {
            if let Some(d) = file.model.delta {
                cfg.delta = d;
            }
            if let Some(b) = file.model.beta {
                cfg.beta = b;
            }
            cfg.tau = file.model.tau.or(cfg.tau);
            if let Some(v) = file.solver.steps_per_delay {
                cfg.steps_per_delay = v;
            }
            if let Some(v) = file.solver.t_end {
                cfg.t_end = v;
            }
            if let Some(v) = file.solver.dt {
                cfg.dt = v;
            }
            cfg.window = file.analysis.window.or(cfg.window);
            if let Some(v) = file.analysis.tol {
                cfg.tol = v;
            }
            cfg.out = file.output.out.clone().or(cfg.out);
            if let Some(v) = file.output.stride {
                cfg.stride = v;
            }
        }

        if let Some(d) = model.delta {
            cfg.delta = d;
        }
        let BetaSpec::Hill { beta0, theta, n } = &mut cfg.beta;
        if let Some(v) = model.beta0 {
            *beta0 = v;
        }
        if let Some(v) = model.theta {
            *theta = v;
        }
        if let Some(v) = model.n {
            *n = v;
        }
        cfg.tau = model.tau.or(cfg.tau);
        if let Some(v) = solver.t_end {
            cfg.t_end = v;
        }
        if let Some(v) = solver.steps_per_delay {
            cfg.steps_per_delay = v;
        }
        if let Some(v) = solver.dt {
            cfg.dt = v;
        }
        cfg.window = analysis.window.or(cfg.window);
        if let Some(v) = analysis.tol {
            cfg.tol = v;
        }
        cfg.out = out.cloned().or(cfg.out);
        if let Some(v) = stride {
            cfg.stride = v;
        }

        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.beta.rate()?;
        if self.delta <= 0.0 || !self.delta.is_finite() {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if let Some(tau) = self.tau {
            if tau < 0.0 || !tau.is_finite() {
                return Err(Error::Config(format!("tau must be >= 0, got {tau}")));
            }
        }
        if self.steps_per_delay < 4 {
            return Err(Error::Config(format!(
                "steps_per_delay must be at least 4, got {}",
                self.steps_per_delay
            )));
        }
        if self.t_end.is_nan() || self.t_end <= 0.0 {
            return Err(Error::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if let Some(w) = self.window {
            if w.is_nan() || w <= 0.0 {
                return Err(Error::Config(format!("window must be > 0, got {w}")));
            }
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Model parameters at the given delay.
    pub fn params(&self, tau: f64) -> Result<ModelParams> {
        ModelParams::new(self.delta, tau, self.beta.rate()?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            steps_per_delay: self.steps_per_delay,
            t_end: self.t_end,
            dt: self.dt,
        }
    }

    /// Classification window: explicit, or the final third of the run.
    pub fn effective_window(&self) -> f64 {
        self.window.unwrap_or(self.t_end / 3.0)
    }
}
