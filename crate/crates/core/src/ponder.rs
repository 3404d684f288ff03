//! PonderNet: probabilistic halting over a recurrent step function.
//!
//! Training unrolls the step function for the whole horizon and minimizes the
//! expected per-step loss under the halting distribution plus `β` times the
//! KL divergence from that distribution to a truncated geometric prior.
//! Inference either samples the halting step or takes its mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::halting::{
    kl_to_prior_var, sample_halt, unconditional_probs, unconditional_probs_var, GeometricPrior,
    TruncationMode, DEFAULT_EPSILON,
};
use crate::stepfn::StepFunction;
use crate::tape::{Bound, Tape, Var};
use crate::tensor::Tensor;

/// Predictions are clamped into `[PROB_CLAMP, 1 − PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PonderConfig {
    pub n_max: usize,
    pub epsilon: f64,
    pub lambda_p: f64,
    pub beta: f64,
    pub truncation: TruncationMode,
    /// Stop the training unroll once the batch-mean cumulative halting
    /// probability exceeds `1 − ε`, instead of always running `n_max` steps.
    #[serde(default)]
    pub dynamic_cap: bool,
}

impl Default for PonderConfig {
    fn default() -> Self {
        PonderConfig {
            n_max: 20,
            epsilon: DEFAULT_EPSILON,
            lambda_p: 0.2,
            beta: 0.01,
            truncation: TruncationMode::default(),
            dynamic_cap: false,
        }
    }
}

impl PonderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if !(self.lambda_p > 0.0 && self.lambda_p < 1.0) {
            return Err(Error::Config(format!("lambda_p {} outside (0, 1)", self.lambda_p)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta {} must be non-negative", self.beta)));
        }
        Ok(())
    }
}

/// Loss applied to each step's prediction, per example.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerStepLoss {
    /// Binary cross-entropy on clamped probabilities.
    #[default]
    BinaryCrossEntropy,
    SquaredError,
}

impl PerStepLoss {
    /// `batch × 1` losses of `y_hat` against `target`.
    pub fn per_example(self, tape: &mut Tape, y_hat: Var, target: Var) -> Result<Var> {
        let (ps, ts) = (tape.value(y_hat).shape(), tape.value(target).shape());
        if ps != ts {
            return Err(Error::shape(
                "per_step_loss",
                &[ps, ts],
                "prediction and target shapes differ",
            ));
        }
        match self {
            PerStepLoss::BinaryCrossEntropy => {
                let p = tape.clamp(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
                let log_p = tape.log(p)?;
                let q = tape.rsub_scalar(1.0, p)?;
                let log_q = tape.log(q)?;
                let not_t = tape.rsub_scalar(1.0, target)?;
                let pos = tape.mul(target, log_p)?;
                let neg = tape.mul(not_t, log_q)?;
                let ll = tape.add(pos, neg)?;
                tape.scale(ll, -1.0)
            }
            PerStepLoss::SquaredError => {
                let d = tape.sub(y_hat, target)?;
                tape.mul(d, d)
            }
        }
    }
}

/// A training unroll over a batch.
#[derive(Clone, Debug)]
pub struct PonderUnroll {
    /// `batch × 1` prediction per step.
    pub y_hats: Vec<Var>,
    /// `batch × 1` conditional halting probability per step.
    pub lambdas: Vec<Var>,
    /// `batch × N` halting distribution.
    pub probs: Var,
    pub batch: usize,
}

impl PonderUnroll {
    pub fn steps(&self) -> usize {
        self.y_hats.len()
    }

    /// Step-function applications performed: `batch × N`.
    pub fn forward_passes(&self) -> u64 {
        (self.batch * self.steps()) as u64
    }
}

fn ensure_finite(tape: &Tape, vars: &[Var], step: usize) -> Result<()> {
    if vars.iter().all(|&v| tape.value(v).is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation { step })
    }
}

/// Unrolls `step` on `x` for `config.n_max` steps (or fewer with
/// `dynamic_cap`) and builds the halting distribution.
pub fn ponder_forward<S: StepFunction + ?Sized>(
    step: &S,
    tape: &mut Tape,
    bound: &Bound,
    x: Var,
    config: &PonderConfig,
) -> Result<PonderUnroll> {
    config.validate()?;
    let batch = tape.value(x).shape()[0];
    let mut h = step.initial_state(tape, batch);
    let mut y_hats = Vec::with_capacity(config.n_max);
    let mut lambdas = Vec::with_capacity(config.n_max);
    let mut survival = vec![1.0; batch];
    let mut halted_mass = vec![0.0; batch];
    for n in 1..=config.n_max {
        let out = step.apply(tape, bound, x, h)?;
        ensure_finite(tape, &[out.y_hat, out.h_next, out.lambda], n)?;
        y_hats.push(out.y_hat);
        lambdas.push(out.lambda);
        h = out.h_next;
        if config.dynamic_cap {
            for ((s, m), &l) in survival
                .iter_mut()
                .zip(halted_mass.iter_mut())
                .zip(tape.value(out.lambda).data())
            {
                *m += l * *s;
                *s *= 1.0 - l;
            }
            let mean = halted_mass.iter().sum::<f64>() / batch as f64;
            if mean > 1.0 - config.epsilon {
                break;
            }
        }
    }
    let probs = unconditional_probs_var(tape, &lambdas, config.truncation)?;
    Ok(PonderUnroll {
        y_hats,
        lambdas,
        probs,
        batch,
    })
}

/// Loss terms of a PonderNet unroll. All are scalars on the tape.
#[derive(Clone, Copy, Debug)]
pub struct PonderLoss {
    pub total: Var,
    /// Batch mean of `Σₙ pₙ ℓₙ`.
    pub rec: Var,
    /// Batch mean of `KL(p ‖ prior)`.
    pub reg: Var,
    /// `batch × N` per-example, per-step losses `ℓₙ`.
    pub step_losses: Var,
}

/// `L = L_Rec + β · L_Reg`, with the prior truncated at the unroll length.
pub fn ponder_loss(
    tape: &mut Tape,
    unroll: &PonderUnroll,
    targets: Var,
    config: &PonderConfig,
    loss: PerStepLoss,
) -> Result<PonderLoss> {
    let per_step = unroll
        .y_hats
        .iter()
        .map(|&y| loss.per_example(tape, y, targets))
        .collect::<Result<Vec<_>>>()?;
    let step_losses = tape.concat(&per_step, 1)?;
    let weighted = tape.mul(unroll.probs, step_losses)?;
    let summed = tape.sum(weighted, None)?;
    let rec = tape.scale(summed, 1.0 / unroll.batch as f64)?;

    let prior = GeometricPrior::new(config.lambda_p, unroll.steps())?;
    let reg = kl_to_prior_var(tape, unroll.probs, &prior)?;
    let scaled = tape.scale(reg, config.beta)?;
    let total = tape.add(rec, scaled)?;
    Ok(PonderLoss {
        total,
        rec,
        reg,
        step_losses,
    })
}

/// Per-example predictions and halting probabilities for every step.
#[derive(Clone, Debug, PartialEq)]
pub struct PonderTrace {
    /// `y[b][n]`: prediction of example `b` at step `n + 1`.
    pub y: Vec<Vec<f64>>,
    /// `lambda[b][n]`: conditional halting probability at step `n + 1`.
    pub lambda: Vec<Vec<f64>>,
}

impl PonderTrace {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn probs(&self, example: usize, mode: TruncationMode) -> Result<Vec<f64>> {
        unconditional_probs(&self.lambda[example], mode)
    }
}

/// Runs `n_max` steps without building a loss and records every step's outputs.
pub fn ponder_trace<S: StepFunction + ?Sized>(step: &S, x: &Tensor, n_max: usize) -> Result<PonderTrace> {
    if n_max < 1 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let batch = x.shape()[0];
    let mut tape = Tape::new();
    let bound = tape.bind(step.params());
    let xv = tape.constant(x.clone());
    let mut h = step.initial_state(&mut tape, batch);
    let mut y = vec![Vec::with_capacity(n_max); batch];
    let mut lambda = vec![Vec::with_capacity(n_max); batch];
    for n in 1..=n_max {
        let out = step.apply(&mut tape, &bound, xv, h)?;
        ensure_finite(&tape, &[out.y_hat, out.h_next, out.lambda], n)?;
        for b in 0..batch {
            y[b].push(tape.value(out.y_hat).data()[b]);
            lambda[b].push(tape.value(out.lambda).data()[b]);
        }
        h = out.h_next;
    }
    Ok(PonderTrace { y, lambda })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inference {
    pub prediction: f64,
    /// 1-based halting step.
    pub halt_step: usize,
}

/// Samples a halting step per example by Bernoulli draws on `λₙ`, halting
/// unconditionally at `n_max`, and returns the prediction of that step.
pub fn sample_from_trace<R: Rng + ?Sized>(trace: &PonderTrace, n_max: usize, rng: &mut R) -> Vec<Inference> {
    (0..trace.len())
        .map(|b| {
            let lambdas = &trace.lambda[b];
            let halt_step = sample_halt(|n| lambdas[n - 1], n_max, rng);
            Inference {
                prediction: trace.y[b][halt_step - 1],
                halt_step,
            }
        })
        .collect()
}

/// Sampled inference on a batch.
pub fn ponder_infer<S, R>(step: &S, x: &Tensor, n_max: usize, rng: &mut R) -> Result<Vec<Inference>>
where
    S: StepFunction + ?Sized,
    R: Rng + ?Sized,
{
    let trace = ponder_trace(step, x, n_max)?;
    Ok(sample_from_trace(&trace, n_max, rng))
}

/// Most probable halting step (1-based); ties go to the earlier step.
pub fn map_step(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best + 1
}

pub fn map_from_trace(trace: &PonderTrace, mode: TruncationMode) -> Result<Vec<Inference>> {
    (0..trace.len())
        .map(|b| {
            let halt_step = map_step(&trace.probs(b, mode)?);
            Ok(Inference {
                prediction: trace.y[b][halt_step - 1],
                halt_step,
            })
        })
        .collect()
}

/// Deterministic inference: the prediction at the most probable halting step.
pub fn ponder_infer_map<S: StepFunction + ?Sized>(
    step: &S,
    x: &Tensor,
    n_max: usize,
    mode: TruncationMode,
) -> Result<Vec<Inference>> {
    map_from_trace(&ponder_trace(step, x, n_max)?, mode)
}
