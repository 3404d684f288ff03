//! Adaptive Computation Time baseline.
//!
//! ACT halts deterministically once the running sum of halting outputs reaches
//! `1 − ε`. The last step's weight is replaced by the remainder
//! `R = 1 − Σ_{n<N} λₙ`, the output is the weighted average of the step
//! predictions, and the ponder cost `N + R` (differentiable through `R` only)
//! is added to the loss with weight `τ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::halting::DEFAULT_EPSILON;
use crate::ponder::{PerStepLoss, PonderTrace};
use crate::stepfn::StepFunction;
use crate::tape::{Bound, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActConfig {
    pub n_max: usize,
    pub epsilon: f64,
    pub tau: f64,
}

impl Default for ActConfig {
    fn default() -> Self {
        ActConfig {
            n_max: 20,
            epsilon: DEFAULT_EPSILON,
            tau: 1e-3,
        }
    }
}

impl ActConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau {} must be non-negative", self.tau)));
        }
        Ok(())
    }
}

/// Halting decision of one example.
#[derive(Clone, Debug, PartialEq)]
pub struct ActHalting {
    pub n_act: usize,
    pub remainder: f64,
    /// `λ₁ … λ_{N−1}, R`.
    pub weights: Vec<f64>,
}

/// Applies the cumulative rule to one example's halting outputs.
///
/// `lambdas` must hold at least `min(n_act, n_max)` entries; extra entries are
/// ignored.
pub fn act_halting(lambdas: &[f64], epsilon: f64, n_max: usize) -> Result<ActHalting> {
    if n_max < 1 || lambdas.is_empty() {
        return Err(Error::invalid("ACT needs at least one step"));
    }
    let threshold = 1.0 - epsilon;
    let mut cumulative = 0.0;
    let limit = n_max.min(lambdas.len());
    for (i, &l) in lambdas[..limit].iter().enumerate() {
        let n = i + 1;
        let before = cumulative;
        cumulative += l;
        if cumulative >= threshold || n == n_max {
            let remainder = 1.0 - before;
            let mut weights = lambdas[..i].to_vec();
            weights.push(remainder);
            return Ok(ActHalting {
                n_act: n,
                remainder,
                weights,
            });
        }
    }
    Err(Error::invalid("halting outputs ended before ACT halted"))
}

#[derive(Clone, Debug)]
pub struct ActUnroll {
    pub y_hats: Vec<Var>,
    pub lambdas: Vec<Var>,
    /// Per-example step counts.
    pub n_act: Vec<usize>,
    /// `batch × 1` remainders.
    pub remainder: Var,
    /// `batch × 1` weighted-average prediction.
    pub y_act: Var,
    pub batch: usize,
}

impl ActUnroll {
    /// Step applications each example actually needed: `Σ_b N_act(b)`.
    pub fn forward_passes(&self) -> u64 {
        self.n_act.iter().map(|&n| n as u64).sum()
    }
}

/// Unrolls until every example in the batch has halted; examples that halt
/// early are masked out of later steps.
pub fn act_forward<S: StepFunction + ?Sized>(
    step: &S,
    tape: &mut Tape,
    bound: &Bound,
    x: Var,
    config: &ActConfig,
) -> Result<ActUnroll> {
    config.validate()?;
    let batch = tape.value(x).shape()[0];
    let threshold = 1.0 - config.epsilon;
    let mut h = step.initial_state(tape, batch);
    let mut y_hats = Vec::new();
    let mut lambdas = Vec::new();
    let mut cumulative = vec![0.0; batch];
    let mut n_act: Vec<Option<usize>> = vec![None; batch];

    for n in 1..=config.n_max {
        let out = step.apply(tape, bound, x, h)?;
        if ![out.y_hat, out.h_next, out.lambda]
            .iter()
            .all(|&v| tape.value(v).is_finite())
        {
            return Err(Error::NonFiniteActivation { step: n });
        }
        y_hats.push(out.y_hat);
        lambdas.push(out.lambda);
        h = out.h_next;
        for (b, &l) in tape.value(out.lambda).data().iter().enumerate() {
            if n_act[b].is_none() {
                cumulative[b] += l;
                if cumulative[b] >= threshold || n == config.n_max {
                    n_act[b] = Some(n);
                }
            }
        }
        if n_act.iter().all(Option::is_some) {
            break;
        }
    }
    let n_act: Vec<usize> = n_act.into_iter().map(|n| n.expect("halted by n_max")).collect();

    let shape = [batch, 1];
    let mask = |f: &dyn Fn(usize) -> bool| {
        Tensor::new(shape.to_vec(), (0..batch).map(|b| if f(b) { 1.0 } else { 0.0 }).collect())
    };
    let mut halted_before = tape.constant(Tensor::zeros(&shape));
    let mut y_act = tape.constant(Tensor::zeros(&shape));
    let mut remainder = tape.constant(Tensor::zeros(&shape));
    for (i, (&y, &l)) in y_hats.iter().zip(&lambdas).enumerate() {
        let n = i + 1;
        let cont = tape.constant(mask(&|b| n < n_act[b])?);
        let last = tape.constant(mask(&|b| n == n_act[b])?);
        let rem = tape.rsub_scalar(1.0, halted_before)?;
        let w_cont = tape.mul(cont, l)?;
        let r_last = tape.mul(last, rem)?;
        let w = tape.add(w_cont, r_last)?;
        let contrib = tape.mul(w, y)?;
        y_act = tape.add(y_act, contrib)?;
        remainder = tape.add(remainder, r_last)?;
        halted_before = tape.add(halted_before, l)?;
    }

    Ok(ActUnroll {
        y_hats,
        lambdas,
        n_act,
        remainder,
        y_act,
        batch,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ActLoss {
    pub total: Var,
    /// Batch-mean prediction loss on the weighted-average output.
    pub prediction: Var,
    /// Batch mean of `N_act + R`.
    pub ponder_cost: Var,
}

/// `ℒ(y, ŷ_ACT) + τ · (N_act + R)`, batch-averaged.
pub fn act_loss(
    tape: &mut Tape,
    unroll: &ActUnroll,
    targets: Var,
    config: &ActConfig,
    loss: PerStepLoss,
) -> Result<ActLoss> {
    let per_example = loss.per_example(tape, unroll.y_act, targets)?;
    let prediction = tape.mean(per_example, None)?;
    let steps = Tensor::column(unroll.n_act.iter().map(|&n| n as f64).collect());
    let steps = tape.constant(steps);
    let cost = tape.add(steps, unroll.remainder)?;
    let ponder_cost = tape.mean(cost, None)?;
    let penalty = tape.scale(ponder_cost, config.tau)?;
    let total = tape.add(prediction, penalty)?;
    Ok(ActLoss {
        total,
        prediction,
        ponder_cost,
    })
}

/// ACT predictions from a full trace; returns `(ŷ_ACT, N_act)` per example.
pub fn act_from_trace(trace: &PonderTrace, config: &ActConfig) -> Result<Vec<(f64, usize)>> {
    (0..trace.len())
        .map(|b| {
            let halting = act_halting(&trace.lambda[b], config.epsilon, config.n_max)?;
            let y: f64 = halting
                .weights
                .iter()
                .zip(&trace.y[b])
                .map(|(w, y)| w * y)
                .sum();
            Ok((y, halting.n_act))
        })
        .collect()
}
