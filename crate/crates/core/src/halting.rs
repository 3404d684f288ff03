//! Halting distributions built from per-step conditional halting probabilities.
//!
//! Given conditional probabilities `λ₁..λ_N` of halting at step `n` having not
//! halted before, the unconditional probability of halting exactly at `n` is
//! `pₙ = λₙ · ∏_{j<n} (1 − λⱼ)`. Over a finite horizon these do not sum to one,
//! so a [`TruncationMode`] says how the missing mass is handled.
//!
//! Functions come in two flavours: plain `f64` versions used for reporting
//! and tests, and `*_var` versions that record on a [`Tape`] and operate on a
//! whole batch (`batch × N` tensors, one row per example).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Network-produced halting probabilities are clamped into
/// `[LAMBDA_MIN, 1 − LAMBDA_MIN]` so the KL term stays finite.
pub const LAMBDA_MIN: f64 = 1e-6;

/// Default ε for the cumulative-probability horizon rule.
pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationMode {
    /// Divide every `pₙ` by `Σ pₙ` (conditions on halting within N steps).
    NormalizeToOne,
    /// Keep `pₙ` for `n < N` and give step N all remaining mass.
    #[default]
    RemainderToLast,
}

impl std::str::FromStr for TruncationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalize-to-one" | "normalize" => Ok(TruncationMode::NormalizeToOne),
            "remainder-to-last" | "remainder" => Ok(TruncationMode::RemainderToLast),
            other => Err(Error::invalid(format!("unknown truncation mode `{other}`"))),
        }
    }
}

/// Conditional halting probabilities and the distribution they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct HaltingDistribution {
    pub lambdas: Vec<f64>,
    pub probs: Vec<f64>,
    pub mode: TruncationMode,
}

impl HaltingDistribution {
    pub fn new(lambdas: Vec<f64>, mode: TruncationMode) -> Result<Self> {
        let probs = unconditional_probs(&lambdas, mode)?;
        Ok(HaltingDistribution {
            lambdas,
            probs,
            mode,
        })
    }

    pub fn expected_steps(&self) -> f64 {
        weighted_steps(&self.probs)
    }
}

/// `pₙ` for a single example.
pub fn unconditional_probs(lambdas: &[f64], mode: TruncationMode) -> Result<Vec<f64>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("halting distribution needs at least one step"));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::invalid(format!("halting probability {bad} outside [0, 1]")));
    }
    let n = lambdas.len();
    let mut probs = Vec::with_capacity(n);
    let mut survival = 1.0;
    for (i, &lambda) in lambdas.iter().enumerate() {
        if i + 1 == n && mode == TruncationMode::RemainderToLast {
            // ∏(1 − λⱼ) over j < N equals 1 − Σ_{n<N} pₙ and cannot go negative.
            probs.push(survival);
        } else {
            probs.push(lambda * survival);
            survival *= 1.0 - lambda;
        }
    }
    if mode == TruncationMode::NormalizeToOne {
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("no halting mass within the horizon to normalize"));
        }
        probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok(probs)
}

/// Batched, differentiable `pₙ`.
///
/// `lambdas[n]` is the `batch × 1` halting probability of step `n + 1`. The
/// result is `batch × N`.
pub fn unconditional_probs_var(tape: &mut Tape, lambdas: &[Var], mode: TruncationMode) -> Result<Var> {
    let first = *lambdas
        .first()
        .ok_or_else(|| Error::invalid("halting distribution needs at least one step"))?;
    let shape = tape.value(first).shape().to_vec();
    let n = lambdas.len();
    let mut survival = tape.constant(Tensor::ones(&shape));
    let mut probs = Vec::with_capacity(n);
    for (i, &lambda) in lambdas.iter().enumerate() {
        if i + 1 == n && mode == TruncationMode::RemainderToLast {
            probs.push(survival);
        } else {
            probs.push(tape.mul(lambda, survival)?);
            if i + 1 < n {
                let cont = tape.rsub_scalar(1.0, lambda)?;
                survival = tape.mul(survival, cont)?;
            }
        }
    }
    let p = tape.concat(&probs, 1)?;
    match mode {
        TruncationMode::RemainderToLast => Ok(p),
        TruncationMode::NormalizeToOne => {
            let total = tape.sum(p, Some(1))?;
            let shape = tape.value(p).shape().to_vec();
            let total = tape.broadcast(total, &shape)?;
            tape.div(p, total)
        }
    }
}

/// Smallest `n` whose cumulative halting probability exceeds `1 − ε`.
///
/// `lambdas` yields `λ₁, λ₂, …` lazily, so the caller only computes as many
/// steps as needed. With `cap`, at most `cap` steps are consumed and `cap` is
/// returned if the threshold is never crossed.
pub fn dynamic_horizon<I>(lambdas: I, epsilon: f64, cap: Option<usize>) -> Result<usize>
where
    I: IntoIterator<Item = f64>,
{
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if cap == Some(0) {
        return Err(Error::invalid("horizon cap must be at least 1"));
    }
    let threshold = 1.0 - epsilon;
    let mut survival = 1.0;
    let mut cumulative = 0.0;
    for (i, lambda) in lambdas.into_iter().enumerate() {
        let n = i + 1;
        cumulative += lambda * survival;
        survival *= 1.0 - lambda;
        if cumulative > threshold || Some(n) == cap {
            return Ok(n);
        }
    }
    Err(Error::HorizonNotReached)
}

/// Geometric distribution over `1..=N`, renormalized after truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricPrior {
    lambda_p: f64,
    pmf: Vec<f64>,
}

impl GeometricPrior {
    pub fn new(lambda_p: f64, horizon: usize) -> Result<Self> {
        if !(lambda_p > 0.0 && lambda_p < 1.0) {
            return Err(Error::invalid(format!("prior lambda_p {lambda_p} outside (0, 1)")));
        }
        if horizon == 0 {
            return Err(Error::invalid("prior horizon must be at least 1"));
        }
        let mut pmf: Vec<f64> = (0..horizon)
            .map(|k| lambda_p * (1.0 - lambda_p).powi(k as i32))
            .collect();
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|q| *q /= total);
        Ok(GeometricPrior { lambda_p, pmf })
    }

    pub fn lambda_p(&self) -> f64 {
        self.lambda_p
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn horizon(&self) -> usize {
        self.pmf.len()
    }

    /// Mean of the untruncated geometric distribution, `1 / λ_p`.
    pub fn untruncated_mean(&self) -> f64 {
        1.0 / self.lambda_p
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// `KL(p ‖ q) = Σ pₙ log(pₙ / qₙ)` with `0 · log 0 = 0`.
pub fn kl_to_prior(p: &[f64], prior: &GeometricPrior) -> Result<f64> {
    if p.len() != prior.horizon() {
        return Err(Error::invalid(format!(
            "distribution has {} steps but the prior has {}",
            p.len(),
            prior.horizon()
        )));
    }
    check_distribution(p, "halting distribution")?;
    Ok(p.iter()
        .zip(prior.pmf())
        .filter(|(&pn, _)| pn > 0.0)
        .map(|(&pn, &qn)| pn * (pn / qn).ln())
        .sum())
}

/// Batch-mean KL from each row of `p` (`batch × N`) to the prior.
pub fn kl_to_prior_var(tape: &mut Tape, p: Var, prior: &GeometricPrior) -> Result<Var> {
    let shape = tape.value(p).shape().to_vec();
    let (batch, n) = match shape.as_slice() {
        [b, n] => (*b, *n),
        _ => return Err(Error::shape("kl_to_prior", &[&shape], "expected batch × N")),
    };
    if n != prior.horizon() {
        return Err(Error::shape(
            "kl_to_prior",
            &[&shape, &[prior.horizon()]],
            "horizon differs from the prior",
        ));
    }
    // The floor only bites on exact zeros, where p · log p is 0 anyway.
    let safe = tape.clamp(p, f64::MIN_POSITIVE, f64::MAX)?;
    let log_p = tape.log(safe)?;
    let log_q: Vec<f64> = prior.pmf().iter().map(|q| q.ln()).collect();
    let log_q = tape.constant(Tensor::new(vec![1, n], log_q)?);
    let log_q = tape.broadcast(log_q, &shape)?;
    let diff = tape.sub(log_p, log_q)?;
    let terms = tape.mul(p, diff)?;
    let total = tape.sum(terms, None)?;
    tape.scale(total, 1.0 / batch as f64)
}

fn weighted_steps(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(i, pn)| (i + 1) as f64 * pn).sum()
}

/// `Σ n · pₙ`.
pub fn expected_steps(p: &[f64]) -> Result<f64> {
    check_distribution(p, "halting distribution")?;
    Ok(weighted_steps(p))
}

/// Batch-mean expected step count for `p` of shape `batch × N`.
pub fn expected_steps_var(tape: &mut Tape, p: Var) -> Result<Var> {
    let shape = tape.value(p).shape().to_vec();
    let n = match shape.as_slice() {
        [_, n] => *n,
        _ => return Err(Error::shape("expected_steps", &[&shape], "expected batch × N")),
    };
    let steps = tape.constant(Tensor::column((1..=n).map(|k| k as f64).collect()));
    let per_example = tape.matmul(p, steps)?;
    tape.mean(per_example, None)
}

/// Samples a halting step by drawing `Bernoulli(λₙ)` at each step.
///
/// `lambda_at(n)` is queried for `n = 1, 2, …` until a halt is drawn. Reaching
/// `n_max` halts unconditionally.
pub fn sample_halt<F, R>(mut lambda_at: F, n_max: usize, rng: &mut R) -> usize
where
    F: FnMut(usize) -> f64,
    R: Rng + ?Sized,
{
    for n in 1..n_max {
        if rng.gen::<f64>() < lambda_at(n) {
            return n;
        }
    }
    n_max.max(1)
}
