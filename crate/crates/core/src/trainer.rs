//! Optimizer, training loop and evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::act::{act_forward, act_from_trace, act_loss, ActConfig};
use crate::config::{ExperimentConfig, Method, Task};
use crate::error::{Error, Result};
use crate::halting::TruncationMode;
use crate::par::{self, Exec};
use crate::params::{Gradients, ParamSet};
use crate::ponder::{
    map_from_trace, ponder_forward, ponder_loss, ponder_trace, sample_from_trace, PerStepLoss, PonderTrace,
};
use crate::stepfn::{RnnStep, StepFunction};
use crate::tape::{Bound, Tape, Var};
use crate::tasks::{gen_parity, ParityBatch, ParitySpec};
use crate::tensor::Tensor;

/// Version stamped on every metrics record.
pub const METRICS_VERSION: u32 = 1;

/// Examples per evaluation work unit.
pub const EVAL_CHUNK: usize = 500;

const STREAM_INIT: u64 = 0;
const STREAM_DATA: u64 = 1;
const STREAM_EVAL: u64 = 2;

/// SplitMix64 finalizer over `(seed, tag, index)`; used to give sweep runs
/// and evaluation sets seeds that do not collide with the training streams.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// Updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient entry
/// is non-finite; the error names the offending parameter.
pub fn adam_step(params: &mut ParamSet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::invalid(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (id, g) in grads.iter() {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(params.name(id).to_string()));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|(_, _, p)| Tensor::zeros(p.shape())).collect();
        state.v = state.m.clone();
    }
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (id, g) in grads.iter() {
        let i = id.index();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.get_mut(id).data_mut();
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// How predictions and halting steps are read off an unroll at evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalHalting {
    Ponder { n_max: usize, truncation: TruncationMode },
    Act(ActConfig),
    Fixed { steps: usize },
}

impl EvalHalting {
    pub fn for_config(config: &ExperimentConfig) -> Self {
        match config.method {
            Method::PonderNet => EvalHalting::Ponder {
                n_max: config.n_max,
                truncation: config.truncation,
            },
            Method::Act => EvalHalting::Act(config.act_config()),
            Method::FixedRnn => EvalHalting::Fixed {
                steps: config.fixed_steps(),
            },
        }
    }

    fn horizon(&self) -> usize {
        match self {
            EvalHalting::Ponder { n_max, .. } => *n_max,
            EvalHalting::Act(c) => c.n_max,
            EvalHalting::Fixed { steps } => *steps,
        }
    }
}

/// Held-out accuracy and halting statistics.
///
/// For PonderNet the sampled and MAP columns differ; ACT and the fixed
/// baseline are deterministic, so both columns hold the same numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub accuracy_sampled: f64,
    pub accuracy_map: f64,
    pub mean_halt_sampled: f64,
    pub mean_halt_map: f64,
    /// Mean of `Σ n pₙ` (PonderNet), or of the deterministic step count.
    pub mean_expected_steps: f64,
    /// `halt_histogram[n − 1]` counts sampled halts at step `n`.
    pub halt_histogram: Vec<u64>,
}

#[derive(Default)]
struct Tally {
    n: usize,
    correct_sampled: usize,
    correct_map: usize,
    halt_sampled: u64,
    halt_map: u64,
    expected: f64,
    histogram: Vec<u64>,
}

/// A prediction is correct when it lands strictly on the target's side of ½.
pub fn is_correct(prediction: f64, target: f64) -> bool {
    if target >= 0.5 {
        prediction > 0.5
    } else {
        prediction < 0.5
    }
}

fn eval_chunk<S: StepFunction + ?Sized>(
    step: &S,
    halting: &EvalHalting,
    batch: &ParityBatch,
    rng: &mut ChaCha8Rng,
) -> Result<Tally> {
    let horizon = halting.horizon();
    let targets = batch.targets.data();
    let trace = ponder_trace(step, &batch.inputs, horizon)?;
    let mut tally = Tally {
        n: targets.len(),
        histogram: vec![0; horizon],
        ..Default::default()
    };
    match halting {
        EvalHalting::Ponder { n_max, truncation } => {
            let sampled = sample_from_trace(&trace, *n_max, rng);
            let map = map_from_trace(&trace, *truncation)?;
            for (b, (s, m)) in sampled.iter().zip(&map).enumerate() {
                tally.correct_sampled += is_correct(s.prediction, targets[b]) as usize;
                tally.correct_map += is_correct(m.prediction, targets[b]) as usize;
                tally.halt_sampled += s.halt_step as u64;
                tally.halt_map += m.halt_step as u64;
                tally.histogram[s.halt_step - 1] += 1;
                let p = trace.probs(b, *truncation)?;
                tally.expected += p.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum::<f64>();
            }
        }
        EvalHalting::Act(config) => {
            for (b, (y, n)) in act_from_trace(&trace, config)?.into_iter().enumerate() {
                let ok = is_correct(y, targets[b]) as usize;
                tally.correct_sampled += ok;
                tally.correct_map += ok;
                tally.halt_sampled += n as u64;
                tally.halt_map += n as u64;
                tally.histogram[n - 1] += 1;
                tally.expected += n as f64;
            }
        }
        EvalHalting::Fixed { steps } => {
            for (b, ys) in trace.y.iter().enumerate() {
                let ok = is_correct(ys[steps - 1], targets[b]) as usize;
                tally.correct_sampled += ok;
                tally.correct_map += ok;
            }
            tally.halt_sampled = (*steps * tally.n) as u64;
            tally.halt_map = tally.halt_sampled;
            tally.histogram[steps - 1] = tally.n as u64;
            tally.expected = (*steps * tally.n) as f64;
        }
    }
    Ok(tally)
}

/// Evaluates on `examples` fresh draws from `spec`. Work is split into chunks
/// with their own random streams, so the report depends only on `seed`, not
/// on `exec` or the thread count.
pub fn evaluate<S: StepFunction + ?Sized>(
    step: &S,
    halting: &EvalHalting,
    spec: &ParitySpec,
    examples: usize,
    seed: u64,
    exec: Exec,
) -> Result<EvalReport> {
    if examples == 0 {
        return Err(Error::invalid("evaluation needs at least one example"));
    }
    let chunks: Vec<(u64, usize)> = (0..examples.div_ceil(EVAL_CHUNK))
        .map(|c| (c as u64, EVAL_CHUNK.min(examples - c * EVAL_CHUNK)))
        .collect();
    let tallies = par::map(exec, chunks, |(c, n)| {
        let mut rng = rng_stream(seed, c);
        let batch = gen_parity(spec, n, &mut rng)?;
        eval_chunk(step, halting, &batch, &mut rng)
    });
    let mut total = Tally {
        histogram: vec![0; halting.horizon()],
        ..Default::default()
    };
    for t in tallies {
        let t = t?;
        total.n += t.n;
        total.correct_sampled += t.correct_sampled;
        total.correct_map += t.correct_map;
        total.halt_sampled += t.halt_sampled;
        total.halt_map += t.halt_map;
        total.expected += t.expected;
        for (a, b) in total.histogram.iter_mut().zip(&t.histogram) {
            *a += b;
        }
    }
    let n = total.n as f64;
    Ok(EvalReport {
        examples: total.n,
        accuracy_sampled: total.correct_sampled as f64 / n,
        accuracy_map: total.correct_map as f64 / n,
        mean_halt_sampled: total.halt_sampled as f64 / n,
        mean_halt_map: total.halt_map as f64 / n,
        mean_expected_steps: total.expected / n,
        halt_histogram: total.histogram,
    })
}

/// One record of the metrics stream, emitted at every evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub version: u32,
    pub step: u64,
    /// Mean training losses since the previous record; absent at step 0.
    pub loss: Option<f64>,
    pub loss_rec: Option<f64>,
    /// KL to the prior (PonderNet) or mean `N + R` (ACT).
    pub loss_reg: Option<f64>,
    /// Cumulative step-function applications during training.
    pub forward_passes: u64,
    pub eval: EvalReport,
    /// In-range evaluation for the extrapolation task.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval_interp: Option<EvalReport>,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub loss_rec: f64,
    pub loss_reg: f64,
    /// Step-function applications in this update.
    pub forward_passes: u64,
}

/// Fixed-length unroll without halting: returns the last step's prediction.
pub fn fixed_forward<S: StepFunction + ?Sized>(
    step: &S,
    tape: &mut Tape,
    bound: &Bound,
    x: Var,
    steps: usize,
) -> Result<Var> {
    let batch = tape.value(x).shape()[0];
    let mut h = step.initial_state(tape, batch);
    let mut y = None;
    for n in 1..=steps {
        let out = step.apply(tape, bound, x, h)?;
        if !tape.value(out.h_next).is_finite() || !tape.value(out.y_hat).is_finite() {
            return Err(Error::NonFiniteActivation { step: n });
        }
        h = out.h_next;
        y = Some(out.y_hat);
    }
    y.ok_or_else(|| Error::invalid("fixed unroll needs at least one step"))
}

/// Stateful trainer for one run.
pub struct Trainer {
    config: ExperimentConfig,
    exec: Exec,
    model: RnnStep,
    adam: AdamState,
    data_rng: ChaCha8Rng,
    train_spec: ParitySpec,
    eval_spec: ParitySpec,
    step: u64,
    forward_passes: u64,
}

impl Trainer {
    pub fn new(config: ExperimentConfig, exec: Exec) -> Result<Self> {
        config.validate()?;
        let model = RnnStep::init(&mut rng_stream(config.seed, STREAM_INIT), config.dim, config.hidden_size)?;
        Self::with_model(config, exec, model)
    }

    pub fn with_model(config: ExperimentConfig, exec: Exec, model: RnnStep) -> Result<Self> {
        config.validate()?;
        if model.input_dim() != config.dim || model.hidden_size() != config.hidden_size {
            return Err(Error::Config(format!(
                "model is {}→{} but config asks for {}→{}",
                model.input_dim(),
                model.hidden_size(),
                config.dim,
                config.hidden_size
            )));
        }
        let (train_spec, eval_spec) = config.parity_specs()?;
        let adam = AdamState::new(AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        });
        Ok(Trainer {
            data_rng: rng_stream(config.seed, STREAM_DATA),
            config,
            exec,
            model,
            adam,
            train_spec,
            eval_spec,
            step: 0,
            forward_passes: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &RnnStep {
        &self.model
    }

    pub fn into_model(self) -> RnnStep {
        self.model
    }

    /// Optimizer updates applied so far.
    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn forward_passes(&self) -> u64 {
        self.forward_passes
    }

    /// Draws the next training batch from the data stream.
    pub fn draw_batch(&mut self) -> Result<ParityBatch> {
        gen_parity(&self.train_spec, self.config.batch_size, &mut self.data_rng)
    }

    /// One optimizer update on the next batch.
    pub fn step(&mut self) -> Result<StepStats> {
        let batch = self.draw_batch()?;
        self.step_on(&batch)
    }

    /// One optimizer update on `batch`. Nothing changes if the loss or any
    /// gradient is non-finite.
    pub fn step_on(&mut self, batch: &ParityBatch) -> Result<StepStats> {
        let next = self.step + 1;
        let mut tape = Tape::new();
        let bound = tape.bind(self.model.params());
        let x = tape.constant(batch.inputs.clone());
        let t = tape.constant(batch.targets.clone());
        let (total, rec, reg, passes) = match self.config.method {
            Method::PonderNet => {
                let cfg = self.config.ponder_config();
                let unroll = ponder_forward(&self.model, &mut tape, &bound, x, &cfg)?;
                let loss = ponder_loss(&mut tape, &unroll, t, &cfg, PerStepLoss::BinaryCrossEntropy)?;
                (loss.total, loss.rec, loss.reg, unroll.forward_passes())
            }
            Method::Act => {
                let cfg = self.config.act_config();
                let unroll = act_forward(&self.model, &mut tape, &bound, x, &cfg)?;
                let loss = act_loss(&mut tape, &unroll, t, &cfg, PerStepLoss::BinaryCrossEntropy)?;
                (loss.total, loss.prediction, loss.ponder_cost, unroll.forward_passes())
            }
            Method::FixedRnn => {
                let steps = self.config.fixed_steps();
                let y = fixed_forward(&self.model, &mut tape, &bound, x, steps)?;
                let per = PerStepLoss::BinaryCrossEntropy.per_example(&mut tape, y, t)?;
                let loss = tape.mean(per, None)?;
                let zero = tape.constant(Tensor::scalar(0.0));
                (loss, loss, zero, (batch.len() * steps) as u64)
            }
        };
        let stats = StepStats {
            loss: tape.value(total).item()?,
            loss_rec: tape.value(rec).item()?,
            loss_reg: tape.value(reg).item()?,
            forward_passes: passes,
        };
        if !stats.loss.is_finite() {
            return Err(Error::NonFiniteLoss(next));
        }
        let grads = tape.backward(total, self.model.params())?;
        adam_step(self.model.params_mut(), &grads, &mut self.adam)?;
        self.step = next;
        self.forward_passes += passes;
        Ok(stats)
    }

    /// Evaluates the current model on fresh draws from the primary split and,
    /// for the extrapolation task, from the training range too. The draws
    /// depend only on the run seed and the current step.
    pub fn evaluate(&self) -> Result<(EvalReport, Option<EvalReport>)> {
        let halting = EvalHalting::for_config(&self.config);
        let n = self.config.eval_examples;
        let seed = self.config.seed;
        let eval = evaluate(
            &self.model,
            &halting,
            &self.eval_spec,
            n,
            derive_seed(seed, STREAM_EVAL, 2 * self.step),
            self.exec,
        )?;
        let interp = match self.config.task {
            Task::ParityInterp => None,
            Task::ParityExtrap => Some(evaluate(
                &self.model,
                &halting,
                &self.train_spec,
                n,
                derive_seed(seed, STREAM_EVAL, 2 * self.step + 1),
                self.exec,
            )?),
        };
        Ok((eval, interp))
    }

    /// Full per-example trace of the current model on `inputs`.
    pub fn trace(&self, inputs: &Tensor) -> Result<PonderTrace> {
        ponder_trace(&self.model, inputs, self.config.n_max)
    }
}

/// Result of [`train`].
pub struct TrainOutcome {
    pub model: RnnStep,
    pub steps: u64,
    pub forward_passes: u64,
    pub failed: bool,
    pub last: RunMetrics,
}

fn is_divergence(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFiniteLoss(_) | Error::NonFiniteGradient(_) | Error::NonFiniteActivation { .. }
    )
}

/// Trains for `config.train_steps` updates, evaluating every
/// `eval_interval` steps (and at steps 0 and the last). Each record is handed
/// to `observer` as soon as it exists. Divergence ends the run with a record
/// flagged `failed` rather than an error.
pub fn train<F>(config: &ExperimentConfig, exec: Exec, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&RunMetrics) -> Result<()>,
{
    let mut trainer = Trainer::new(config.clone(), exec)?;
    let (eval, eval_interp) = trainer.evaluate()?;
    let mut last = RunMetrics {
        version: METRICS_VERSION,
        step: 0,
        loss: None,
        loss_rec: None,
        loss_reg: None,
        forward_passes: 0,
        eval,
        eval_interp,
        failed: false,
        failure: None,
    };
    observer(&last)?;

    let mut sums = [0.0f64; 3];
    let mut count = 0u64;
    let mut failed = false;
    while trainer.steps_done() < config.train_steps {
        match trainer.step() {
            Ok(s) => {
                sums[0] += s.loss;
                sums[1] += s.loss_rec;
                sums[2] += s.loss_reg;
                count += 1;
            }
            Err(e) if is_divergence(&e) => {
                last = RunMetrics {
                    step: trainer.steps_done() + 1,
                    forward_passes: trainer.forward_passes(),
                    failed: true,
                    failure: Some(e.to_string()),
                    ..last
                };
                observer(&last)?;
                failed = true;
                break;
            }
            Err(e) => return Err(e),
        }
        let step = trainer.steps_done();
        if step % config.eval_interval == 0 || step == config.train_steps {
            let (eval, eval_interp) = trainer.evaluate()?;
            let mean = |s: f64| Some(s / count as f64);
            last = RunMetrics {
                version: METRICS_VERSION,
                step,
                loss: mean(sums[0]),
                loss_rec: mean(sums[1]),
                loss_reg: mean(sums[2]),
                forward_passes: trainer.forward_passes(),
                eval,
                eval_interp,
                failed: false,
                failure: None,
            };
            observer(&last)?;
            sums = [0.0; 3];
            count = 0;
            if config.stop_at_accuracy.is_some_and(|a| last.eval.accuracy_map >= a) {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        steps: trainer.steps_done(),
        forward_passes: trainer.forward_passes(),
        model: trainer.into_model(),
        failed,
        last,
    })
}
