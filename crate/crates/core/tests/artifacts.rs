//! Files written by runs and sweeps: configs, metrics streams, summaries,
//! checkpoints and plots.

use std::io::BufReader;

use proptest::prelude::*;

use ponderlab::metrics::{read_metrics, read_metrics_file, MetricsWriter, SUMMARY_HEADER};
use ponderlab::plot::{emit_plots, emit_sweep_plots, LabelledRun};
use ponderlab::run::{run_experiment, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, SUMMARY_FILE};
use ponderlab::stepfn::read_checkpoint;
use ponderlab::sweep::{plan_sweep, read_sweep_csv, run_sweep, sample_values, write_sweep_csv, SweepParam, TAU_RANGE};
use ponderlab::{Exec, ExperimentConfig, Method, RnnStep, StepFunction, Task, TruncationMode};

fn tiny(method: Method) -> ExperimentConfig {
    ExperimentConfig {
        method,
        dim: 6,
        hidden_size: 8,
        n_max: 5,
        batch_size: 8,
        train_steps: 12,
        eval_interval: 4,
        eval_examples: 200,
        seed: 21,
        ..ExperimentConfig::default()
    }
}

#[test]
fn a_run_directory_is_complete_and_rereadable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Method::PonderNet);
    let mut seen = 0;
    let outcome = run_experiment(&cfg, Exec::default(), Some(dir.path()), |_| seen += 1).unwrap();

    assert_eq!(ExperimentConfig::load(&dir.path().join(CONFIG_FILE)).unwrap(), cfg);

    let log = read_metrics_file(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(log.config.as_ref(), Some(&cfg));
    assert!(!log.truncated);
    assert_eq!(log.records.len(), seen);
    assert_eq!(log.records.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 4, 8, 12]);
    assert_eq!(log.records.last().unwrap(), &outcome.last);

    let summary = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some(SUMMARY_HEADER));
    assert_eq!(lines.count(), 4);

    let text = std::fs::read(dir.path().join(CHECKPOINT_FILE)).unwrap();
    let params = read_checkpoint(BufReader::new(text.as_slice())).unwrap();
    assert_eq!(&params, outcome.model.params());
    assert!(RnnStep::from_params(params).is_ok());
}

#[test]
fn metrics_stay_readable_when_a_run_is_cut_short() {
    let cfg = tiny(Method::Act);
    let mut writer = MetricsWriter::new(Vec::new(), &cfg).unwrap();
    ponderlab::trainer::train(&cfg, Exec::default(), |m| writer.record(m)).unwrap();
    let bytes = writer.into_inner();
    let full = read_metrics(bytes.as_slice()).unwrap();
    assert_eq!(full.records.len(), 4);

    // Cutting the stream anywhere keeps every complete record and flags a
    // torn final line instead of failing.
    let text = String::from_utf8(bytes).unwrap();
    let ends: Vec<usize> = text.match_indices('\n').map(|(i, _)| i + 1).collect();
    for (line, &end) in ends.iter().enumerate() {
        let start = if line == 0 { 0 } else { ends[line - 1] };
        let whole = read_metrics(text[..end].as_bytes()).unwrap();
        assert!(!whole.truncated);
        assert_eq!(whole.records.as_slice(), &full.records[..line]);

        let torn = read_metrics(text[..(start + end) / 2].as_bytes()).unwrap();
        assert!(torn.truncated, "line {line} cut in half");
        assert_eq!(torn.records.as_slice(), &full.records[..line.saturating_sub(1)]);
    }
}

#[test]
fn configs_reject_inconsistent_fields() {
    let bad = [
        ExperimentConfig { tau: Some(0.01), ..tiny(Method::PonderNet) },
        ExperimentConfig { lambda_p: Some(0.3), ..tiny(Method::Act) },
        ExperimentConfig { beta: Some(0.1), ..tiny(Method::FixedRnn) },
        ExperimentConfig { fixed_steps: Some(3), ..tiny(Method::PonderNet) },
        ExperimentConfig { task: Task::ParityExtrap, dim: 7, ..tiny(Method::PonderNet) },
        ExperimentConfig { n_max: 0, ..tiny(Method::PonderNet) },
        ExperimentConfig { epsilon: 1.0, ..tiny(Method::Act) },
        ExperimentConfig { lambda_p: Some(1.5), ..tiny(Method::PonderNet) },
        ExperimentConfig { batch_size: 0, ..tiny(Method::PonderNet) },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    assert!(ExperimentConfig::from_json(r#"{"dim": 8, "bogus": 1}"#).is_err());
    let misplaced = ExperimentConfig::from_json(r#"{"method": "pondernet", "tau": 0.1}"#).unwrap();
    assert!(misplaced.validate().is_err());
}

fn any_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        prop_oneof![Just(Method::PonderNet), Just(Method::Act), Just(Method::FixedRnn)],
        prop_oneof![Just(Task::ParityInterp), Just(Task::ParityExtrap)],
        1usize..=32,
        1usize..=64,
        1usize..=25,
        0.001f64..0.999,
        0.001f64..0.999,
        0.0f64..1.0,
        (1usize..=256, 1e-5f64..1e-1, 1u64..100_000, any::<u64>(), any::<bool>()),
    )
        .prop_map(|(method, task, half, hidden, n_max, eps, lp, reg, (batch, lr, steps, seed, normalize))| {
            let mut c = ExperimentConfig {
                method,
                task,
                dim: 2 * half,
                hidden_size: hidden,
                n_max,
                epsilon: eps,
                batch_size: batch,
                lr,
                train_steps: steps,
                eval_interval: 1 + steps / 7,
                seed,
                truncation: if normalize { TruncationMode::NormalizeToOne } else { TruncationMode::RemainderToLast },
                ..ExperimentConfig::default()
            };
            match method {
                Method::PonderNet => {
                    c.lambda_p = Some(lp);
                    c.beta = Some(reg);
                }
                Method::Act => c.tau = Some(reg * 0.02),
                Method::FixedRnn => c.fixed_steps = Some(n_max),
            }
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn configs_round_trip_through_json(cfg in any_config()) {
        prop_assert!(cfg.validate().is_ok());
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn sweep_values_follow_the_documented_ranges() {
    let lp = sample_values(SweepParam::LambdaP, 10, 1).unwrap();
    assert_eq!(lp.len(), 10);
    assert!(lp.iter().all(|&v| v > 0.0 && v < 1.0));
    assert!(lp.windows(2).all(|w| w[0] <= w[1]));

    let tau = sample_values(SweepParam::Tau, 20, 1).unwrap();
    assert_eq!(tau.len(), 20);
    assert_eq!(tau[0], 0.0);
    assert!(tau[1..].iter().all(|&v| (TAU_RANGE.0..=TAU_RANGE.1).contains(&v)));
    assert_eq!(TAU_RANGE, (2e-4, 2e-2));
}

#[test]
fn sweeps_lay_out_runs_and_rows() {
    let root = tempfile::tempdir().unwrap();
    let base = ExperimentConfig {
        train_steps: 4,
        eval_interval: 4,
        ..tiny(Method::PonderNet)
    };
    let values = [0.2, 0.6];
    let runs = plan_sweep(&base, SweepParam::LambdaP, &values, 3, Some(root.path())).unwrap();
    assert_eq!(runs.len(), 6);
    for pair in runs.chunks(3).collect::<Vec<_>>().windows(2) {
        let seeds = |c: &[ponderlab::sweep::SweepRun]| c.iter().map(|r| r.config.seed).collect::<Vec<_>>();
        assert_eq!(seeds(pair[0]), seeds(pair[1]), "seed k is shared across values");
    }
    let dirs: std::collections::BTreeSet<_> = runs.iter().map(|r| r.config.output_dir.clone().unwrap()).collect();
    assert_eq!(dirs.len(), 6);

    let parallel = run_sweep(runs.clone(), Exec::Parallel, 0).unwrap();
    let sequential = run_sweep(runs.clone(), Exec::Sequential, 1).unwrap();
    assert_eq!(parallel, sequential);
    for (row, run) in parallel.iter().zip(&runs) {
        assert_eq!((row.value, row.seed_index, row.seed), (run.value, run.seed_index, run.config.seed));
        assert!(run.config.output_dir.as_ref().unwrap().join(METRICS_FILE).exists());
    }

    let mut csv = Vec::new();
    write_sweep_csv(SweepParam::LambdaP, &parallel, &mut csv).unwrap();
    let (param, back) = read_sweep_csv(csv.as_slice()).unwrap();
    assert_eq!(param, SweepParam::LambdaP);
    assert_eq!(back, parallel);

    let plots = emit_sweep_plots(param, &back, &root.path().join("plots")).unwrap();
    assert_eq!(plots.len(), 2);
    let svg = std::fs::read_to_string(&plots[0]).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("0.2") && svg.contains("0.6"));
}

#[test]
fn one_ponder_run_and_one_act_run_make_a_two_curve_accuracy_plot() {
    let mut runs = Vec::new();
    for method in [Method::PonderNet, Method::Act] {
        let mut records = Vec::new();
        ponderlab::trainer::train(&tiny(method), Exec::default(), |m| {
            records.push(m.clone());
            Ok(())
        })
        .unwrap();
        runs.push(LabelledRun {
            label: method.to_string(),
            records,
        });
    }
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plots(&runs, dir.path()).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["accuracy.svg", "ponder_steps.svg", "compute.svg", "accuracy_vs_compute.svg"]);
    let accuracy = std::fs::read_to_string(&files[0]).unwrap();
    // One polyline per series plus the black axis frame.
    assert_eq!(accuracy.matches("<polyline").count(), 3);
    assert_eq!(accuracy.matches("stroke-width=\"2\"/>").count(), 4, "two curves, two legend swatches");
    assert!(accuracy.contains(">pondernet<") && accuracy.contains(">act<"));
    assert!(accuracy.trim_end().ends_with("</svg>"));

    assert!(emit_plots(&[], dir.path()).is_err());
    let empty = LabelledRun {
        label: "empty".into(),
        records: Vec::new(),
    };
    assert!(emit_plots(&[empty], dir.path()).is_err());
}
