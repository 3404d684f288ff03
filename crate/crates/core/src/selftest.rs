//! Quick built-in checks: analytic gradients against finite differences and
//! the basic invariants of halting distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::act::{act_forward, act_loss, ActConfig};
use crate::error::Result;
use crate::gradcheck::finite_diff_check;
use crate::halting::{kl_to_prior, sample_halt, unconditional_probs, GeometricPrior, TruncationMode};
use crate::ponder::{ponder_forward, ponder_loss, PerStepLoss, PonderConfig};
use crate::stepfn::{RnnStep, StepFunction};
use crate::tasks::{gen_parity, ParitySpec};

/// Relative-error bound for gradient checks.
pub const GRAD_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelfTestReport {
    pub checks: Vec<Check>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

pub fn run_selftest(seed: u64) -> Result<SelfTestReport> {
    let mut report = SelfTestReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = RnnStep::init(&mut rng, 3, 4)?;
    let batch = gen_parity(&ParitySpec::interpolation(3)?, 2, &mut rng)?;

    for mode in [TruncationMode::RemainderToLast, TruncationMode::NormalizeToOne] {
        let config = PonderConfig {
            n_max: 5,
            truncation: mode,
            ..PonderConfig::default()
        };
        let r = finite_diff_check(
            |tape, params| {
                let step = RnnStep::from_params(params.clone())?;
                let bound = tape.bind(step.params());
                let x = tape.constant(batch.inputs.clone());
                let t = tape.constant(batch.targets.clone());
                let unroll = ponder_forward(&step, tape, &bound, x, &config)?;
                Ok(ponder_loss(tape, &unroll, t, &config, PerStepLoss::BinaryCrossEntropy)?.total)
            },
            model.params(),
            FD_STEP,
            GRAD_TOLERANCE,
        )?;
        report.push(
            format!("pondernet gradient ({mode:?})"),
            r.passed(),
            format!("max relative error {:.3e} over {} entries", r.max_rel_error, r.checked),
        );
    }

    let act = ActConfig {
        n_max: 5,
        tau: 0.01,
        ..ActConfig::default()
    };
    let r = finite_diff_check(
        |tape, params| {
            let step = RnnStep::from_params(params.clone())?;
            let bound = tape.bind(step.params());
            let x = tape.constant(batch.inputs.clone());
            let t = tape.constant(batch.targets.clone());
            let unroll = act_forward(&step, tape, &bound, x, &act)?;
            Ok(act_loss(tape, &unroll, t, &act, PerStepLoss::BinaryCrossEntropy)?.total)
        },
        model.params(),
        FD_STEP,
        GRAD_TOLERANCE,
    )?;
    report.push(
        "act gradient",
        r.passed(),
        format!("max relative error {:.3e} over {} entries", r.max_rel_error, r.checked),
    );

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(1..=30);
        let lambdas: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        for mode in [TruncationMode::RemainderToLast, TruncationMode::NormalizeToOne] {
            let p = unconditional_probs(&lambdas, mode)?;
            worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        }
    }
    report.push(
        "halting distributions sum to one",
        worst < 1e-9,
        format!("max |Σp − 1| = {worst:.2e}"),
    );

    let prior = GeometricPrior::new(0.2, 10)?;
    let self_kl = kl_to_prior(prior.pmf(), &prior)?;
    let uniform = vec![0.1; 10];
    let kl = kl_to_prior(&uniform, &prior)?;
    report.push(
        "kl to prior",
        self_kl.abs() < 1e-12 && kl > 0.0,
        format!("KL(prior‖prior) = {self_kl:.2e}, KL(uniform‖prior) = {kl:.4}"),
    );

    let lambdas = [0.3, 0.5, 0.2, 0.6];
    let exact = unconditional_probs(&lambdas, TruncationMode::RemainderToLast)?;
    let draws = 20_000;
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        counts[sample_halt(|n| lambdas[n - 1], 4, &mut rng) - 1] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(&exact)
        .map(|(&c, &p)| (c as f64 / draws as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    report.push(
        "sampled halting matches distribution",
        tv < 0.02,
        format!("total variation {tv:.4} over {draws} draws"),
    );
    Ok(report)
}
