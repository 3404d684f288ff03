//! Experiment configuration: JSON on disk, with command-line overrides
//! applied by the caller.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::act::ActConfig;
use crate::error::{Error, Result};
use crate::halting::{TruncationMode, DEFAULT_EPSILON};
use crate::ponder::PonderConfig;
use crate::tasks::{extrapolation_specs, ParityRule, ParitySpec};

pub const DEFAULT_LAMBDA_P: f64 = 0.2;
pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_TAU: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    ParityInterp,
    ParityExtrap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(rename = "pondernet")]
    PonderNet,
    Act,
    FixedRnn,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parity-interp" => Ok(Task::ParityInterp),
            "parity-extrap" => Ok(Task::ParityExtrap),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pondernet" => Ok(Method::PonderNet),
            "act" => Ok(Method::Act),
            "fixed-rnn" => Ok(Method::FixedRnn),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::PonderNet => "pondernet",
            Method::Act => "act",
            Method::FixedRnn => "fixed-rnn",
        })
    }
}

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    pub dim: usize,
    pub hidden_size: usize,
    pub n_max: usize,
    pub epsilon: f64,
    /// PonderNet only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_p: Option<f64>,
    /// PonderNet only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// ACT only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub batch_size: usize,
    pub lr: f64,
    pub train_steps: u64,
    pub eval_interval: u64,
    pub eval_examples: usize,
    pub truncation: TruncationMode,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub parity_rule: ParityRule,
    /// Unroll length of the fixed-rnn baseline; `n_max` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_steps: Option<usize>,
    /// Cap each PonderNet training unroll with the ε rule.
    pub dynamic_cap: bool,
    /// Stop once an evaluation reaches this MAP accuracy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_at_accuracy: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::ParityInterp,
            method: Method::PonderNet,
            dim: 64,
            hidden_size: 128,
            n_max: 20,
            epsilon: DEFAULT_EPSILON,
            lambda_p: None,
            beta: None,
            tau: None,
            batch_size: 128,
            lr: 3e-4,
            train_steps: 30_000,
            eval_interval: 1_000,
            eval_examples: 10_000,
            truncation: TruncationMode::default(),
            seed: 0,
            output_dir: None,
            parity_rule: ParityRule::default(),
            fixed_steps: None,
            dynamic_cap: false,
            stop_at_accuracy: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.dim == 0 || self.hidden_size == 0 {
            return fail("dim and hidden_size must be positive".into());
        }
        if self.batch_size == 0 || self.eval_examples == 0 {
            return fail("batch_size and eval_examples must be positive".into());
        }
        if self.eval_interval == 0 {
            return fail("eval_interval must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        if self.method != Method::PonderNet && (self.lambda_p.is_some() || self.beta.is_some()) {
            return fail(format!("lambda_p and beta only apply to pondernet, not {}", self.method));
        }
        if self.method != Method::Act && self.tau.is_some() {
            return fail(format!("tau only applies to act, not {}", self.method));
        }
        if self.method != Method::FixedRnn && self.fixed_steps.is_some() {
            return fail("fixed_steps only applies to fixed-rnn".into());
        }
        if self.fixed_steps == Some(0) {
            return fail("fixed_steps must be at least 1".into());
        }
        if let Some(a) = self.stop_at_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return fail(format!("stop_at_accuracy {a} outside [0, 1]"));
            }
        }
        if self.task == Task::ParityExtrap && !self.dim.is_multiple_of(2) {
            return fail(format!("parity-extrap needs an even dim, got {}", self.dim));
        }
        match self.method {
            Method::PonderNet => self.ponder_config().validate(),
            Method::Act => self.act_config().validate(),
            Method::FixedRnn => Ok(()),
        }
    }

    pub fn lambda_p(&self) -> f64 {
        self.lambda_p.unwrap_or(DEFAULT_LAMBDA_P)
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(DEFAULT_BETA)
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(DEFAULT_TAU)
    }

    pub fn fixed_steps(&self) -> usize {
        self.fixed_steps.unwrap_or(self.n_max)
    }

    pub fn ponder_config(&self) -> PonderConfig {
        PonderConfig {
            n_max: self.n_max,
            epsilon: self.epsilon,
            lambda_p: self.lambda_p(),
            beta: self.beta(),
            truncation: self.truncation,
            dynamic_cap: self.dynamic_cap,
        }
    }

    pub fn act_config(&self) -> ActConfig {
        ActConfig {
            n_max: self.n_max,
            epsilon: self.epsilon,
            tau: self.tau(),
        }
    }

    /// Training distribution and the primary evaluation distribution.
    pub fn parity_specs(&self) -> Result<(ParitySpec, ParitySpec)> {
        let (train, eval) = match self.task {
            Task::ParityInterp => {
                let s = ParitySpec::interpolation(self.dim)?;
                (s.clone(), s)
            }
            Task::ParityExtrap => extrapolation_specs(self.dim)?,
        };
        Ok((train.with_rule(self.parity_rule), eval.with_rule(self.parity_rule)))
    }
}
