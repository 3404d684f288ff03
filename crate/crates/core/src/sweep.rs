//! Hyperparameter sweeps: many seeds per value, runs spread over a pool.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::run::run_experiment;
use crate::trainer::derive_seed;

pub const SWEEP_FILE: &str = "sweep.csv";

/// Interval the τ sweep draws from.
pub const TAU_RANGE: (f64, f64) = (2e-4, 2e-2);

const SEED_TAG: u64 = 0x5EED;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    LambdaP,
    Tau,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::LambdaP => "lambda-p",
            SweepParam::Tau => "tau",
        }
    }

    pub fn method(self) -> Method {
        match self {
            SweepParam::LambdaP => Method::PonderNet,
            SweepParam::Tau => Method::Act,
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda-p" | "lambda_p" => Ok(SweepParam::LambdaP),
            "tau" => Ok(SweepParam::Tau),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

/// Draws `count` sweep values from `seed`, sorted ascending.
///
/// λ_p is uniform on `(0, 1)`. τ takes `count − 1` uniform draws from
/// [`TAU_RANGE`] plus τ = 0.
pub fn sample_values(param: SweepParam, count: usize, seed: u64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Config("a sweep needs at least one value".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = match param {
        SweepParam::LambdaP => (0..count)
            .map(|_| loop {
                let v: f64 = rng.gen();
                if v > 0.0 {
                    break v;
                }
            })
            .collect(),
        SweepParam::Tau => std::iter::once(0.0)
            .chain((1..count).map(|_| rng.gen_range(TAU_RANGE.0..=TAU_RANGE.1)))
            .collect(),
    };
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// One run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub value: f64,
    pub seed_index: usize,
    pub config: ExperimentConfig,
}

/// Crosses `values` with `seeds` seeds. Seed `k` is the same for every value,
/// so values are compared on common initializations and data.
pub fn plan_sweep(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
    seeds: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRun>> {
    if seeds == 0 || values.is_empty() {
        return Err(Error::Config("a sweep needs at least one value and one seed".into()));
    }
    let mut runs = Vec::with_capacity(values.len() * seeds);
    for &value in values {
        for k in 0..seeds {
            let mut config = base.clone();
            config.method = param.method();
            config.lambda_p = None;
            config.beta = None;
            config.tau = None;
            config.fixed_steps = None;
            match param {
                SweepParam::LambdaP => {
                    config.lambda_p = Some(value);
                    config.beta = base.beta;
                }
                SweepParam::Tau => config.tau = Some(value),
            }
            config.seed = derive_seed(base.seed, SEED_TAG, k as u64);
            config.output_dir = out_dir.map(|d| run_dir(d, param, value, k));
            config.validate()?;
            runs.push(SweepRun {
                value,
                seed_index: k,
                config,
            });
        }
    }
    Ok(runs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed_index: usize,
    pub seed: u64,
    pub steps: u64,
    pub forward_passes: u64,
    pub accuracy_sampled: f64,
    pub accuracy_map: f64,
    pub mean_halt_sampled: f64,
    pub mean_expected_steps: f64,
    pub failed: bool,
}

/// Runs every planned run, at most `jobs` at once (0: one per core). Rows come
/// back in plan order.
pub fn run_sweep(runs: Vec<SweepRun>, exec: Exec, jobs: usize) -> Result<Vec<SweepRow>> {
    let rows = par::with_jobs(jobs, || {
        par::map(exec, runs, |run| {
            let out = run_experiment(&run.config, Exec::Sequential, run.config.output_dir.as_deref(), |_| {})?;
            Ok(SweepRow {
                value: run.value,
                seed_index: run.seed_index,
                seed: run.config.seed,
                steps: out.steps,
                forward_passes: out.forward_passes,
                accuracy_sampled: out.last.eval.accuracy_sampled,
                accuracy_map: out.last.eval.accuracy_map,
                mean_halt_sampled: out.last.eval.mean_halt_sampled,
                mean_expected_steps: out.last.eval.mean_expected_steps,
                failed: out.failed,
            })
        })
    });
    rows.into_iter().collect()
}

const SWEEP_HEADER: &str =
    "param,value,seed_index,seed,steps,forward_passes,accuracy_sampled,accuracy_map,mean_halt_sampled,mean_expected_steps,failed";

pub fn write_sweep_csv<W: Write>(param: SweepParam, rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            param.name(),
            r.value,
            r.seed_index,
            r.seed,
            r.steps,
            r.forward_passes,
            r.accuracy_sampled,
            r.accuracy_map,
            r.mean_halt_sampled,
            r.mean_expected_steps,
            r.failed
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: BufRead>(input: R) -> Result<(SweepParam, Vec<SweepRow>)> {
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h == SWEEP_HEADER => {}
        _ => return Err(Error::invalid("not a sweep summary")),
    }
    let mut param = None;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::invalid(format!("sweep summary row {}: malformed", i + 2));
        if f.len() != 11 {
            return Err(bad());
        }
        param = Some(f[0].parse::<SweepParam>()?);
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad());
        rows.push(SweepRow {
            value: num(f[1])?,
            seed_index: int(f[2])? as usize,
            seed: int(f[3])?,
            steps: int(f[4])?,
            forward_passes: int(f[5])?,
            accuracy_sampled: num(f[6])?,
            accuracy_map: num(f[7])?,
            mean_halt_sampled: num(f[8])?,
            mean_expected_steps: num(f[9])?,
            failed: f[10].parse().map_err(|_| bad())?,
        });
    }
    let param = param.ok_or_else(|| Error::invalid("sweep summary has no rows"))?;
    Ok((param, rows))
}

/// Directory holding one run of a sweep.
pub fn run_dir(root: &Path, param: SweepParam, value: f64, seed_index: usize) -> PathBuf {
    root.join(format!("{}-{value:.6}", param.name())).join(format!("seed-{seed_index}"))
}
