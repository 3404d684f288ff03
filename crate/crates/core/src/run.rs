//! Running one experiment end to end, with its artifacts on disk.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::metrics::{write_summary_csv, MetricsWriter};
use crate::par::Exec;
use crate::stepfn::{write_checkpoint, StepFunction};
use crate::trainer::{train, RunMetrics, TrainOutcome};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

/// Trains `config`. With an output directory, writes `config.json` up front,
/// streams `metrics.jsonl` during training, and writes `summary.csv` and
/// `checkpoint.txt` at the end. `progress` sees every record.
pub fn run_experiment(
    config: &ExperimentConfig,
    exec: Exec,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&RunMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            config.save(&dir.join(CONFIG_FILE))?;
            Some(MetricsWriter::create(&dir.join(METRICS_FILE), config)?)
        }
        None => None,
    };
    let mut records = Vec::new();
    let outcome = train(config, exec, |m| {
        progress(m);
        records.push(m.clone());
        match writer.as_mut() {
            Some(w) => w.record(m),
            None => Ok(()),
        }
    })?;
    if let Some(dir) = out_dir {
        write_summary_csv(&records, BufWriter::new(File::create(dir.join(SUMMARY_FILE))?))?;
        write_checkpoint(
            outcome.model.params(),
            BufWriter::new(File::create(dir.join(CHECKPOINT_FILE))?),
        )?;
    }
    Ok(outcome)
}
