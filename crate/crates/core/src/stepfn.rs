//! Step functions `s(x, hₙ) → (ŷₙ, hₙ₊₁, λₙ)` and the tanh RNN used for parity.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::halting::LAMBDA_MIN;
use crate::params::{ParamId, ParamSet};
use crate::tape::{Bound, Tape, Var};
use crate::tensor::Tensor;

/// One application of a step function on a batch.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    /// `batch × 1` prediction (a probability for parity).
    pub y_hat: Var,
    /// `batch × state_dim` next state.
    pub h_next: Var,
    /// `batch × 1` conditional halting probability, already clamped.
    pub lambda: Var,
}

pub trait StepFunction: Sync {
    fn input_dim(&self) -> usize;

    fn state_dim(&self) -> usize;

    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    /// `h₀`: zeros.
    fn initial_state(&self, tape: &mut Tape, batch: usize) -> Var {
        tape.constant(Tensor::zeros(&[batch, self.state_dim()]))
    }

    /// Applies the step to `x` (`batch × input_dim`) and `h` (`batch × state_dim`).
    /// `bound` must come from binding [`StepFunction::params`] on `tape`.
    fn apply(&self, tape: &mut Tape, bound: &Bound, x: Var, h: Var) -> Result<StepOutput>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct RnnIds {
    w_xh: ParamId,
    w_hh: ParamId,
    b_h: ParamId,
    w_hy: ParamId,
    b_y: ParamId,
    w_hl: ParamId,
    b_l: ParamId,
}

/// Elman RNN cell with a sigmoid prediction head and a sigmoid halting head:
///
/// ```text
/// h' = tanh(x·W_xh + h·W_hh + b_h)
/// ŷ  = sigmoid(h'·W_hy + b_y)
/// λ  = clamp(sigmoid(h'·W_hl + b_l), λ_min, 1 − λ_min)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct RnnStep {
    params: ParamSet,
    ids: RnnIds,
    input_dim: usize,
    hidden: usize,
}

pub const RNN_PARAM_NAMES: [&str; 7] = ["w_xh", "w_hh", "b_h", "w_hy", "b_y", "w_hl", "b_l"];

fn rnn_shapes(d: usize, h: usize) -> [[usize; 2]; 7] {
    [[d, h], [h, h], [1, h], [h, 1], [1, 1], [h, 1], [1, 1]]
}

impl RnnStep {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input_dim: usize, hidden: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::invalid("RNN dimensions must be at least 1"));
        }
        let mut params = ParamSet::new();
        for (name, shape) in RNN_PARAM_NAMES.iter().zip(rnn_shapes(input_dim, hidden)) {
            let tensor = if name.starts_with("b_") {
                Tensor::zeros(&shape)
            } else {
                glorot_uniform(rng, shape[0], shape[1])
            };
            params.insert(*name, tensor)?;
        }
        Self::from_params(params)
    }

    /// Wraps an existing parameter set, checking names and shapes.
    pub fn from_params(params: ParamSet) -> Result<Self> {
        let w_xh = params
            .by_name("w_xh")
            .ok_or_else(|| Error::Checkpoint("missing parameter `w_xh`".into()))?;
        let (input_dim, hidden) = w_xh
            .dims2()
            .ok_or_else(|| Error::Checkpoint("`w_xh` must be a matrix".into()))?;
        let mut ids = Vec::with_capacity(RNN_PARAM_NAMES.len());
        for (name, shape) in RNN_PARAM_NAMES.iter().zip(rnn_shapes(input_dim, hidden)) {
            let id = params
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if params.get(id).shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    params.get(id).shape()
                )));
            }
            ids.push(id);
        }
        if params.len() != RNN_PARAM_NAMES.len() {
            return Err(Error::Checkpoint("unexpected extra parameters".into()));
        }
        let ids = RnnIds {
            w_xh: ids[0],
            w_hh: ids[1],
            b_h: ids[2],
            w_hy: ids[3],
            b_y: ids[4],
            w_hl: ids[5],
            b_l: ids[6],
        };
        Ok(RnnStep {
            params,
            ids,
            input_dim,
            hidden,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }
}

/// Bound used by [`glorot_uniform`]: `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = glorot_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches data")
}

fn affine(tape: &mut Tape, input: Var, w: Var, b: Var) -> Result<Var> {
    let z = tape.matmul(input, w)?;
    let shape = tape.value(z).shape().to_vec();
    let b = tape.broadcast(b, &shape)?;
    tape.add(z, b)
}

impl StepFunction for RnnStep {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn state_dim(&self) -> usize {
        self.hidden
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn apply(&self, tape: &mut Tape, bound: &Bound, x: Var, h: Var) -> Result<StepOutput> {
        let ids = &self.ids;
        let from_x = tape.matmul(x, bound.get(ids.w_xh))?;
        let from_h = tape.matmul(h, bound.get(ids.w_hh))?;
        let pre = tape.add(from_x, from_h)?;
        let shape = tape.value(pre).shape().to_vec();
        let b_h = tape.broadcast(bound.get(ids.b_h), &shape)?;
        let pre = tape.add(pre, b_h)?;
        let h_next = tape.tanh(pre)?;

        let y_logit = affine(tape, h_next, bound.get(ids.w_hy), bound.get(ids.b_y))?;
        let y_hat = tape.sigmoid(y_logit)?;

        let l_logit = affine(tape, h_next, bound.get(ids.w_hl), bound.get(ids.b_l))?;
        let lambda = tape.sigmoid(l_logit)?;
        let lambda = tape.clamp(lambda, LAMBDA_MIN, 1.0 - LAMBDA_MIN)?;

        Ok(StepOutput {
            y_hat,
            h_next,
            lambda,
        })
    }
}

const CHECKPOINT_HEADER: &str = "# ponderlab checkpoint v1";

/// Writes parameters as text, one per line in iteration order:
///
/// ```text
/// # ponderlab checkpoint v1
/// <name> <ndim> <dim_1> … <dim_k> <v_1> … <v_n>
/// ```
///
/// Values are row-major and printed in shortest round-trip form, so a save and
/// load reproduces every bit.
pub fn write_checkpoint<W: Write>(params: &ParamSet, mut out: W) -> Result<()> {
    writeln!(out, "{CHECKPOINT_HEADER}")?;
    for (_, name, tensor) in params.iter() {
        write!(out, "{name} {}", tensor.ndim())?;
        for d in tensor.shape() {
            write!(out, " {d}")?;
        }
        for v in tensor.data() {
            write!(out, " {v:e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<ParamSet> {
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == CHECKPOINT_HEADER => {}
        _ => return Err(Error::Checkpoint("missing header line".into())),
    }
    let mut params = ParamSet::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Checkpoint(format!("line {}: {msg}", lineno + 2));
        let mut fields = line.split_whitespace();
        let name = fields.next().ok_or_else(|| bad("empty record"))?;
        let ndim: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("bad rank"))?;
        let shape = (0..ndim)
            .map(|_| fields.next().and_then(|f| f.parse().ok()))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| bad("bad shape"))?;
        let data = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad value"))?;
        let tensor = Tensor::new(shape, data).map_err(|_| bad("value count does not match shape"))?;
        params.insert(name, tensor)?;
    }
    Ok(params)
}
