//! Parity data: vectors of `{−1, 0, +1}` labelled by the parity of their `+1`s.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Interpolation,
    ExtrapolationTrain,
    ExtrapolationEval,
}

/// Which entries are counted for the label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParityRule {
    /// Parity of the number of `+1` entries.
    #[default]
    PlusOnes,
    /// Parity of the number of non-zero entries.
    Nonzero,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParitySpec {
    pub dim: usize,
    pub min_nonzero: usize,
    pub max_nonzero: usize,
    pub split: Split,
    #[serde(default)]
    pub rule: ParityRule,
}

impl ParitySpec {
    /// Every count of non-zero entries from 1 to `dim`.
    pub fn interpolation(dim: usize) -> Result<Self> {
        let spec = ParitySpec {
            dim,
            min_nonzero: 1,
            max_nonzero: dim,
            split: Split::Interpolation,
            rule: ParityRule::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_rule(mut self, rule: ParityRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.min_nonzero && self.min_nonzero <= self.max_nonzero && self.max_nonzero <= self.dim) {
            return Err(Error::Config(format!(
                "parity range [{}, {}] invalid for dim {}",
                self.min_nonzero, self.max_nonzero, self.dim
            )));
        }
        Ok(())
    }
}

/// Train on `1..=dim/2` non-zero entries, evaluate on `dim/2+1..=dim`.
pub fn extrapolation_specs(dim: usize) -> Result<(ParitySpec, ParitySpec)> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::Config(format!("extrapolation needs an even dim, got {dim}")));
    }
    let half = dim / 2;
    let train = ParitySpec {
        dim,
        min_nonzero: 1,
        max_nonzero: half,
        split: Split::ExtrapolationTrain,
        rule: ParityRule::default(),
    };
    let eval = ParitySpec {
        dim,
        min_nonzero: half + 1,
        max_nonzero: dim,
        split: Split::ExtrapolationEval,
        rule: ParityRule::default(),
    };
    Ok((train, eval))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParityBatch {
    /// `batch × dim`, entries in `{−1, 0, +1}`.
    pub inputs: Tensor,
    /// `batch × 1`, entries in `{0, 1}`.
    pub targets: Tensor,
}

impl ParityBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

pub fn parity_label(row: &[f64], rule: ParityRule) -> f64 {
    let count = match rule {
        ParityRule::PlusOnes => row.iter().filter(|&&v| v == 1.0).count(),
        ParityRule::Nonzero => row.iter().filter(|&&v| v != 0.0).count(),
    };
    (count % 2) as f64
}

/// Draws a batch: the non-zero count is uniform over `spec`'s range, the
/// positions are uniform without replacement and each sign is a fair coin.
pub fn gen_parity<R: Rng + ?Sized>(spec: &ParitySpec, batch: usize, rng: &mut R) -> Result<ParityBatch> {
    spec.validate()?;
    let mut inputs = vec![0.0; batch * spec.dim];
    let mut targets = Vec::with_capacity(batch);
    for row in inputs.chunks_mut(spec.dim) {
        let k = rng.gen_range(spec.min_nonzero..=spec.max_nonzero);
        for pos in sample(rng, spec.dim, k) {
            row[pos] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        targets.push(parity_label(row, spec.rule));
    }
    Ok(ParityBatch {
        inputs: Tensor::matrix(batch, spec.dim, inputs)?,
        targets: Tensor::column(targets),
    })
}

/// Writes one example per line: the entries then the target, space separated,
/// all as integers.
pub fn write_dataset<W: Write>(batch: &ParityBatch, mut out: W) -> Result<()> {
    for (b, &t) in batch.targets.data().iter().enumerate() {
        for v in batch.inputs.row(b) {
            write!(out, "{} ", *v as i64)?;
        }
        writeln!(out, "{}", t as i64)?;
    }
    Ok(())
}
