//! End-to-end acceptance checks. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero if any fails.
//!
//! `PONDERLAB_ACCEPTANCE=1,2,3` restricts the run to the listed criteria. The
//! training criteria (4–6) take the longest; progress goes to stderr.

mod support;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;

use ponderlab::act::{act_forward, act_loss, ActConfig};
use ponderlab::gradcheck::finite_diff_check;
use ponderlab::halting::unconditional_probs;
use ponderlab::metrics::MetricsWriter;
use ponderlab::ponder::{ponder_forward, ponder_infer, ponder_loss, ponder_trace, PerStepLoss, PonderConfig};
use ponderlab::stepfn::write_checkpoint;
use ponderlab::tasks::{gen_parity, ParityBatch, ParitySpec};
use ponderlab::trainer::{adam_step, derive_seed, evaluate, train, AdamConfig, AdamState, EvalHalting, EvalReport, Trainer};
use ponderlab::{Exec, ExperimentConfig, Method, RnnStep, StepFunction, Tape, Task, Tensor, TruncationMode};
use support::oracles::{oracle_act, oracle_halting, total_variation, OracleReport, Truncation};

/// Seeds tried by the training criteria, in order; the first success counts.
const TRAINING_SEEDS: [u64; 3] = [0, 1, 2];
/// Stream tag for confirmation evaluations, disjoint from the trainer's own.
const CONFIRM_STREAM: u64 = 17;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn minutes(d: Duration) -> String {
    format!("{:.1} min", d.as_secs_f64() / 60.0)
}

/// Cache of training searches so criteria sharing a
/// configuration (4 and 6 at λ_p = 0.2) train it once.
#[derive(Default)]
struct Searches {
    done: HashMap<String, Vec<SeedSearch>>,
}

#[derive(Clone, Debug)]
struct Checkpoint {
    step: u64,
    confirm: EvalReport,
    confirm_interp: Option<EvalReport>,
}

#[derive(Clone, Debug)]
struct SeedSearch {
    seed: u64,
    steps: u64,
    /// Confirmation evaluations, taken whenever the routine evaluation
    /// reached `confirm_from`.
    confirmed: Vec<Checkpoint>,
    /// Best confirmed MAP accuracy, if any evaluation was confirmed.
    best_map: Option<f64>,
    /// Best and final routine-evaluation MAP accuracy.
    best_routine: f64,
    last_routine: f64,
    diverged: bool,
    elapsed: Duration,
}

fn desk_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        task: Task::ParityInterp,
        method: Method::PonderNet,
        dim: 16,
        hidden_size: 64,
        n_max: 10,
        lambda_p: Some(0.2),
        beta: Some(0.01),
        batch_size: 128,
        lr: 3e-4,
        train_steps: 30_000,
        eval_interval: 1_000,
        eval_examples: 10_000,
        seed,
        ..ExperimentConfig::default()
    }
}

/// Trains `cfg` until `done` accepts a confirmed checkpoint or the step
/// budget runs out. A routine evaluation at or above `confirm_from` triggers
/// a second, independent evaluation on fresh examples; only that second
/// evaluation is used to judge success.
fn search(cfg: &ExperimentConfig, confirm_from: f64, done: &dyn Fn(&Checkpoint) -> bool) -> SeedSearch {
    let started = Instant::now();
    let mut trainer = Trainer::new(cfg.clone(), Exec::default()).expect("valid config");
    let (train_spec, eval_spec) = cfg.parity_specs().expect("valid specs");
    let halting = EvalHalting::for_config(cfg);
    let mut out = SeedSearch {
        seed: cfg.seed,
        steps: 0,
        confirmed: Vec::new(),
        best_map: None,
        best_routine: 0.0,
        last_routine: 0.0,
        diverged: false,
        elapsed: Duration::ZERO,
    };
    while trainer.steps_done() < cfg.train_steps {
        if trainer.step().is_err() {
            out.diverged = true;
            break;
        }
        let step = trainer.steps_done();
        if step % cfg.eval_interval != 0 {
            continue;
        }
        let (primary, _) = trainer.evaluate().expect("evaluation");
        eprintln!(
            "  [{} seed {} step {step}] map {:.4} halt {:.2}",
            cfg.method, cfg.seed, primary.accuracy_map, primary.mean_halt_sampled
        );
        out.best_routine = out.best_routine.max(primary.accuracy_map);
        out.last_routine = primary.accuracy_map;
        if primary.accuracy_map < confirm_from {
            continue;
        }
        let n = cfg.eval_examples;
        let confirm = evaluate(
            trainer.model(),
            &halting,
            &eval_spec,
            n,
            derive_seed(cfg.seed, CONFIRM_STREAM, 2 * step),
            Exec::default(),
        )
        .expect("evaluation");
        let confirm_interp = (cfg.task == Task::ParityExtrap).then(|| {
            evaluate(
                trainer.model(),
                &halting,
                &train_spec,
                n,
                derive_seed(cfg.seed, CONFIRM_STREAM, 2 * step + 1),
                Exec::default(),
            )
            .expect("evaluation")
        });
        out.best_map = Some(out.best_map.map_or(confirm.accuracy_map, |b| b.max(confirm.accuracy_map)));
        let cp = Checkpoint {
            step,
            confirm,
            confirm_interp,
        };
        let stop = done(&cp);
        out.confirmed.push(cp);
        if stop {
            break;
        }
    }
    out.steps = trainer.steps_done();
    out.elapsed = started.elapsed();
    out
}

impl Searches {
    /// Runs seeds in order until one satisfies `done`, reusing earlier
    /// searches stored under `key`.
    fn best_of_seeds(
        &mut self,
        key: &str,
        make: &dyn Fn(u64) -> ExperimentConfig,
        confirm_from: f64,
        done: &dyn Fn(&Checkpoint) -> bool,
    ) -> Vec<SeedSearch> {
        let cached = self.done.entry(key.to_string()).or_default();
        let mut out = Vec::new();
        for seed in TRAINING_SEEDS {
            let run = match cached.iter().find(|r| r.seed == seed) {
                Some(r) => r.clone(),
                None => {
                    let r = search(&make(seed), confirm_from, done);
                    cached.push(r.clone());
                    r
                }
            };
            let ok = run.confirmed.iter().any(|c| done(c));
            out.push(run);
            if ok {
                break;
            }
        }
        out
    }
}

fn describe(runs: &[SeedSearch]) -> String {
    runs.iter()
        .map(|r| {
            let confirmed = match r.best_map {
                Some(m) => format!(", best confirmed {m:.4}"),
                None => String::new(),
            };
            format!(
                "seed {}: {} steps, routine MAP best {:.4} final {:.4}{confirmed}{}",
                r.seed,
                r.steps,
                r.best_routine,
                r.last_routine,
                if r.diverged { " (diverged)" } else { "" }
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let mut rng = support::rng(1);
    let mut sum_err = 0.0f64;
    let mut report = OracleReport::new("halting", 1e-12);
    for _ in 0..1000 {
        let len = rng.gen_range(1..=30);
        let lambdas: Vec<f64> = (0..len).map(|_| rng.gen_range(1e-6..1.0 - 1e-6)).collect();
        for mode in [TruncationMode::RemainderToLast, TruncationMode::NormalizeToOne] {
            let p = unconditional_probs(&lambdas, mode).expect("valid lambdas");
            sum_err = sum_err.max((p.iter().sum::<f64>() - 1.0).abs());
            report.observe_all(&p, &oracle_halting(&lambdas, Truncation::from(mode)));
        }
    }
    let elapsed = started.elapsed();
    Verdict::new(
        sum_err <= 1e-9 && report.passed_abs() && within(elapsed, Duration::from_secs(5)),
        format!(
            "max |Σp − 1| = {sum_err:.2e}, max |p − oracle| = {:.2e}, {:.2} s",
            report.max_abs_error,
            elapsed.as_secs_f64()
        ),
    )
}

/// Draws a batch whose cumulative halting sums all stay `margin` away from
/// the ACT threshold. Within that margin the ACT loss is discontinuous in the
/// parameters and finite differences do not estimate a derivative.
fn act_safe_batch(model: &RnnStep, cfg: &ActConfig, spec: &ParitySpec, rng: &mut impl Rng) -> ParityBatch {
    loop {
        let data = gen_parity(spec, 2, rng).expect("valid spec");
        let trace = ponder_trace(model, &data.inputs, cfg.n_max).expect("trace");
        let clear = trace.lambda.iter().all(|ls| {
            let mut c = 0.0;
            ls.iter().all(|l| {
                c += l;
                (c - (1.0 - cfg.epsilon)).abs() > 1e-3
            })
        });
        if clear {
            return data;
        }
    }
}

fn criterion_2() -> Verdict {
    let started = Instant::now();
    let dim = 4;
    let spec = ParitySpec::interpolation(dim).expect("valid spec");
    let pcfg = PonderConfig {
        n_max: 5,
        ..PonderConfig::default()
    };
    let acfg = ActConfig {
        n_max: 5,
        ..ActConfig::default()
    };
    let (mut worst_ponder, mut worst_act) = (0.0f64, 0.0f64);
    let mut all_passed = true;
    for seed in 0..20 {
        let mut rng = support::rng(10_000 + seed);
        let rnn = RnnStep::init(&mut rng, dim, 4).expect("init");
        let data = gen_parity(&spec, 2, &mut rng).expect("batch");
        let ponder = finite_diff_check(
            |tape, params| {
                let step = RnnStep::from_params(params.clone())?;
                let bound = tape.bind(step.params());
                let x = tape.constant(data.inputs.clone());
                let t = tape.constant(data.targets.clone());
                let unroll = ponder_forward(&step, tape, &bound, x, &pcfg)?;
                Ok(ponder_loss(tape, &unroll, t, &pcfg, PerStepLoss::BinaryCrossEntropy)?.total)
            },
            rnn.params(),
            1e-6,
            1e-4,
        )
        .expect("gradient check");
        let act_data = act_safe_batch(&rnn, &acfg, &spec, &mut rng);
        let act = finite_diff_check(
            |tape, params| {
                let step = RnnStep::from_params(params.clone())?;
                let bound = tape.bind(step.params());
                let x = tape.constant(act_data.inputs.clone());
                let t = tape.constant(act_data.targets.clone());
                let unroll = act_forward(&step, tape, &bound, x, &acfg)?;
                Ok(act_loss(tape, &unroll, t, &acfg, PerStepLoss::BinaryCrossEntropy)?.total)
            },
            rnn.params(),
            1e-6,
            1e-4,
        )
        .expect("gradient check");
        worst_ponder = worst_ponder.max(ponder.max_rel_error);
        worst_act = worst_act.max(act.max_rel_error);
        all_passed &= ponder.passed() && act.passed();
    }
    let elapsed = started.elapsed();
    Verdict::new(
        all_passed && worst_ponder < 1e-4 && worst_act < 1e-4 && within(elapsed, Duration::from_secs(60)),
        format!(
            "max relative error PonderNet {worst_ponder:.2e}, ACT {worst_act:.2e} over 20 seeds, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Verdict {
    let started = Instant::now();
    let (dim, n_max) = (8, 10);
    let mut rng = support::rng(3);
    let mut model = RnnStep::init(&mut rng, dim, 16).expect("init");
    // Shift the halting bias so the mass spreads over several steps.
    let id = model.params().id("b_l").expect("halting bias");
    model.params_mut().get_mut(id).data_mut()[0] = -1.5;
    let example = gen_parity(&ParitySpec::interpolation(dim).expect("spec"), 1, &mut rng).expect("batch");
    let exact = ponder_trace(&model, &example.inputs, n_max)
        .and_then(|t| t.probs(0, TruncationMode::RemainderToLast))
        .expect("trace");

    let chunk = 10_000;
    let repeated = Tensor::matrix(chunk, dim, example.inputs.data().repeat(chunk)).expect("shape");
    let mut counts = vec![0u64; n_max];
    for _ in 0..10 {
        for inf in ponder_infer(&model, &repeated, n_max, &mut rng).expect("inference") {
            counts[inf.halt_step - 1] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let tv = total_variation(&empirical, &exact);
    let elapsed = started.elapsed();
    Verdict::new(
        total == 100_000 && tv < 0.01 && within(elapsed, Duration::from_secs(30)),
        format!("TV {tv:.4} over {total} samples, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn criterion_4(searches: &mut Searches) -> Verdict {
    let runs = searches.best_of_seeds("lambda_p=0.2", &desk_config, 0.9, &|c| c.confirm.accuracy_map >= 0.95);
    let elapsed: Duration = runs.iter().map(|r| r.elapsed).sum();
    let solved = runs.iter().any(|r| r.confirmed.iter().any(|c| c.confirm.accuracy_map >= 0.95));
    Verdict::new(
        solved && within(elapsed, Duration::from_secs(20 * 60)),
        format!("{} ({} total)", describe(&runs), minutes(elapsed)),
    )
}

fn extrapolation_config(method: Method, seed: u64) -> ExperimentConfig {
    let base = desk_config(seed);
    ExperimentConfig {
        task: Task::ParityExtrap,
        method,
        dim: 24,
        train_steps: 60_000,
        eval_interval: 2_000,
        lambda_p: (method == Method::PonderNet).then_some(0.2),
        beta: (method == Method::PonderNet).then_some(0.01),
        ..base
    }
}

fn extrapolates(c: &Checkpoint) -> bool {
    let interp = c.confirm_interp.as_ref().expect("extrapolation runs report both splits");
    c.confirm.accuracy_map >= 0.80 && c.confirm.mean_halt_sampled > interp.mean_halt_sampled
}

fn criterion_5(searches: &mut Searches) -> Verdict {
    let make = |seed| extrapolation_config(Method::PonderNet, seed);
    let runs = searches.best_of_seeds("extrap", &make, 0.8, &extrapolates);
    let solved = runs
        .iter()
        .flat_map(|r| r.confirmed.iter())
        .find(|c| extrapolates(c))
        .cloned();

    // The baseline trains for the whole budget on the first seed; every
    // routine evaluation must stay below 60 %.
    let started = Instant::now();
    let baseline_cfg = extrapolation_config(Method::FixedRnn, TRAINING_SEEDS[0]);
    let mut baseline_best = 0.0f64;
    let baseline = train(&baseline_cfg, Exec::default(), |m| {
        if m.step % 10_000 == 0 {
            eprintln!("  [fixed-rnn step {}] map {:.4}", m.step, m.eval.accuracy_map);
        }
        baseline_best = baseline_best.max(m.eval.accuracy_map);
        Ok(())
    })
    .expect("baseline run");
    let baseline_elapsed = started.elapsed();
    let baseline_ok = !baseline.failed && baseline.steps == baseline_cfg.train_steps && baseline_best < 0.60;

    let elapsed = runs.iter().map(|r| r.elapsed).sum::<Duration>() + baseline_elapsed;
    let halting = match &solved {
        Some(c) => format!(
            "solved at step {}: extrap MAP {:.4}, sampled steps extrap {:.2} vs interp {:.2}",
            c.step,
            c.confirm.accuracy_map,
            c.confirm.mean_halt_sampled,
            c.confirm_interp.as_ref().map_or(f64::NAN, |e| e.mean_halt_sampled)
        ),
        None => {
            let last = runs.iter().flat_map(|r| r.confirmed.last()).last();
            match last {
                Some(c) => format!(
                    "last confirmed: extrap MAP {:.4}, steps {:.2} vs {:.2}",
                    c.confirm.accuracy_map,
                    c.confirm.mean_halt_sampled,
                    c.confirm_interp.as_ref().map_or(f64::NAN, |e| e.mean_halt_sampled)
                ),
                None => "no checkpoint reached 80 %".into(),
            }
        }
    };
    Verdict::new(
        solved.is_some() && baseline_ok && within(elapsed, Duration::from_secs(45 * 60)),
        format!(
            "{}; {halting}; fixed-rnn best extrap MAP {baseline_best:.4}; {} total",
            describe(&runs),
            minutes(elapsed)
        ),
    )
}

fn criterion_6(searches: &mut Searches) -> Verdict {
    let mut parts = Vec::new();
    let mut passed = true;
    for lambda_p in [0.1, 0.2, 0.5] {
        let make = move |seed| ExperimentConfig {
            lambda_p: Some(lambda_p),
            ..desk_config(seed)
        };
        let ok = move |c: &Checkpoint| c.confirm.accuracy_map >= 0.90 && (lambda_p != 0.1 || c.confirm.mean_halt_sampled < 6.0);
        let key = format!("lambda_p={lambda_p}");
        // The λ_p = 0.2 search is shared with criterion 4, which stops at the
        // stricter 95 %; any checkpoint it confirmed at ≥ 90 % counts here.
        let runs = if lambda_p == 0.2 {
            searches.best_of_seeds(&key, &desk_config, 0.9, &|c| c.confirm.accuracy_map >= 0.95)
        } else {
            searches.best_of_seeds(&key, &make, 0.9, &ok)
        };
        let hit = runs.iter().flat_map(|r| r.confirmed.iter()).find(|c| ok(c));
        passed &= hit.is_some();
        parts.push(match hit {
            Some(c) => format!(
                "λ_p={lambda_p}: MAP {:.4}, sampled steps {:.2} at step {}",
                c.confirm.accuracy_map, c.confirm.mean_halt_sampled, c.step
            ),
            None => format!("λ_p={lambda_p}: not reached ({})", describe(&runs)),
        });
    }
    Verdict::new(passed, parts.join("; "))
}

fn criterion_7() -> Verdict {
    let started = Instant::now();
    let cfg = desk_config(0);
    let pcfg = cfg.ponder_config();
    let mut rng = support::rng(7);
    let mut model = RnnStep::init(&mut rng, cfg.dim, cfg.hidden_size).expect("init");
    let spec = ParitySpec::interpolation(cfg.dim).expect("spec");
    let held_out = gen_parity(&spec, 2_000, &mut rng).expect("batch");
    let kl_on = |model: &RnnStep, batch: &ParityBatch| -> f64 {
        let mut tape = Tape::new();
        let bound = tape.bind(model.params());
        let x = tape.constant(batch.inputs.clone());
        let t = tape.constant(batch.targets.clone());
        let unroll = ponder_forward(model, &mut tape, &bound, x, &pcfg).expect("forward");
        let loss = ponder_loss(&mut tape, &unroll, t, &pcfg, PerStepLoss::BinaryCrossEntropy).expect("loss");
        tape.value(loss.reg).item().expect("scalar")
    };
    let initial = kl_on(&model, &held_out);
    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    for _ in 0..1000 {
        let batch = gen_parity(&spec, cfg.batch_size, &mut rng).expect("batch");
        let mut tape = Tape::new();
        let bound = tape.bind(model.params());
        let x = tape.constant(batch.inputs.clone());
        let t = tape.constant(batch.targets.clone());
        let unroll = ponder_forward(&model, &mut tape, &bound, x, &pcfg).expect("forward");
        let loss = ponder_loss(&mut tape, &unroll, t, &pcfg, PerStepLoss::BinaryCrossEntropy).expect("loss");
        let objective = tape.scale(loss.reg, pcfg.beta).expect("scale");
        let grads = tape.backward(objective, model.params()).expect("backward");
        adam_step(model.params_mut(), &grads, &mut adam).expect("update");
    }
    let fin = kl_on(&model, &held_out);
    let elapsed = started.elapsed();
    let ratio = initial / fin;
    Verdict::new(
        ratio >= 10.0 && within(elapsed, Duration::from_secs(60)),
        format!(
            "KL {initial:.4e} → {fin:.4e} (×{ratio:.1} reduction, Adam lr {}), {:.2} s",
            cfg.lr,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut parts = Vec::new();
    let mut passed = true;
    for method in [Method::PonderNet, Method::Act, Method::FixedRnn] {
        let cfg = ExperimentConfig {
            method,
            lambda_p: None,
            beta: None,
            train_steps: 100,
            eval_interval: 100,
            eval_examples: 1_000,
            ..desk_config(8)
        };
        let mut trainer = Trainer::new(cfg.clone(), Exec::default()).expect("trainer");
        let mut expected_total = 0u64;
        let mut mismatches = 0;
        for _ in 0..cfg.train_steps {
            let batch = trainer.draw_batch().expect("batch");
            let expected = match method {
                Method::PonderNet => (cfg.batch_size * cfg.n_max) as u64,
                Method::FixedRnn => (cfg.batch_size * cfg.fixed_steps()) as u64,
                Method::Act => {
                    let acfg = cfg.act_config();
                    let trace = trainer.trace(&batch.inputs).expect("trace");
                    trace
                        .lambda
                        .iter()
                        .map(|ls| oracle_act(ls, acfg.epsilon, acfg.n_max).0 as u64)
                        .sum()
                }
            };
            let stats = trainer.step_on(&batch).expect("step");
            expected_total += expected;
            if stats.forward_passes != expected || trainer.forward_passes() != expected_total {
                mismatches += 1;
            }
        }
        // The full training loop follows the same batch stream.
        let outcome = train(&cfg, Exec::default(), |_| Ok(())).expect("run");
        let ok = mismatches == 0 && outcome.forward_passes == expected_total && outcome.last.forward_passes == expected_total;
        passed &= ok;
        parts.push(format!("{method}: {expected_total} passes, {mismatches} mismatching steps"));
    }
    Verdict::new(passed, parts.join("; "))
}

fn metric_bytes(cfg: &ExperimentConfig, exec: Exec) -> (Vec<u8>, Vec<u8>) {
    let mut writer = MetricsWriter::new(Vec::new(), cfg).expect("writer");
    let outcome = train(cfg, exec, |m| writer.record(m)).expect("run");
    let mut checkpoint = Vec::new();
    write_checkpoint(outcome.model.params(), &mut checkpoint).expect("checkpoint");
    (writer.into_inner(), checkpoint)
}

fn criterion_9() -> Verdict {
    let mut parts = Vec::new();
    let mut passed = true;
    for method in [Method::PonderNet, Method::Act, Method::FixedRnn] {
        let cfg = ExperimentConfig {
            method,
            lambda_p: None,
            beta: None,
            train_steps: 200,
            eval_interval: 20,
            eval_examples: 1_000,
            ..desk_config(9)
        };
        let first = metric_bytes(&cfg, Exec::default());
        let second = metric_bytes(&cfg, Exec::default());
        let other_exec = metric_bytes(&cfg, Exec::Sequential);
        let ok = first == second && first == other_exec;
        passed &= ok;
        parts.push(format!(
            "{method}: {} metric bytes {}",
            first.0.len(),
            if ok { "identical" } else { "differ" }
        ));
    }
    Verdict::new(passed, parts.join("; "))
}

fn selected() -> Vec<u32> {
    match std::env::var("PONDERLAB_ACCEPTANCE") {
        Ok(list) if !list.trim().is_empty() => list
            .split(',')
            .map(|s| s.trim().parse().expect("PONDERLAB_ACCEPTANCE takes comma-separated criterion numbers"))
            .collect(),
        _ => (1..=9).collect(),
    }
}

fn main() {
    let titles = [
        "halting distribution matches the oracle",
        "loss gradients match finite differences",
        "sampled halting matches p",
        "dim-16 parity interpolation",
        "dim-24 parity extrapolation",
        "robustness to the prior",
        "regularizer alone shrinks KL",
        "forward-pass accounting",
        "bitwise-deterministic metrics",
    ];
    let mut searches = Searches::default();
    let mut failures = 0;
    for id in selected() {
        eprintln!("criterion {id}: {}", titles[id as usize - 1]);
        let verdict = match id {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(&mut searches),
            5 => criterion_5(&mut searches),
            6 => criterion_6(&mut searches),
            7 => criterion_7(),
            8 => criterion_8(),
            9 => criterion_9(),
            other => panic!("no criterion {other}"),
        };
        if !verdict.passed {
            failures += 1;
        }
        println!(
            "{} criterion {id} ({}): {}",
            if verdict.passed { "PASS" } else { "FAIL" },
            titles[id as usize - 1],
            verdict.detail
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
