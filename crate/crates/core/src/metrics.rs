//! Metrics files: a JSON-lines stream written as training progresses, and a
//! one-row-per-evaluation CSV summary.
//!
//! The stream starts with a header line carrying the run configuration; every
//! following line is a self-contained evaluation record. Lines are flushed as
//! they are written, so a partially written file from an interrupted run is
//! still readable up to its last complete line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::trainer::{RunMetrics, METRICS_VERSION};

pub const METRICS_SCHEMA: &str = "ponderlab.metrics";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricsLine {
    Header {
        schema: String,
        version: u32,
        config: ExperimentConfig,
    },
    Eval(RunMetrics),
}

pub struct MetricsWriter<W: Write> {
    out: W,
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: &Path, config: &ExperimentConfig) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), config)
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W, config: &ExperimentConfig) -> Result<Self> {
        let mut w = MetricsWriter { out };
        w.write_line(&MetricsLine::Header {
            schema: METRICS_SCHEMA.to_string(),
            version: METRICS_VERSION,
            config: config.clone(),
        })?;
        Ok(w)
    }

    pub fn record(&mut self, metrics: &RunMetrics) -> Result<()> {
        self.write_line(&MetricsLine::Eval(metrics.clone()))
    }

    fn write_line(&mut self, line: &MetricsLine) -> Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// A parsed metrics stream.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsLog {
    pub config: Option<ExperimentConfig>,
    pub records: Vec<RunMetrics>,
    /// Set when the final line was cut off mid-write and skipped.
    pub truncated: bool,
}

pub fn read_metrics<R: BufRead>(input: R) -> Result<MetricsLog> {
    let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
    let mut log = MetricsLog {
        config: None,
        records: Vec::new(),
        truncated: false,
    };
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<MetricsLine>(line) {
            Ok(MetricsLine::Header { schema, version, config }) => {
                if schema != METRICS_SCHEMA || version > METRICS_VERSION {
                    return Err(Error::invalid(format!("unsupported metrics schema {schema} v{version}")));
                }
                log.config = Some(config);
            }
            Ok(MetricsLine::Eval(m)) => log.records.push(m),
            Err(_) if i == last => log.truncated = true,
            Err(e) => return Err(Error::invalid(format!("metrics line {}: {e}", i + 1))),
        }
    }
    Ok(log)
}

pub fn read_metrics_file(path: &Path) -> Result<MetricsLog> {
    read_metrics(BufReader::new(File::open(path)?))
}

pub const SUMMARY_HEADER: &str = "step,loss,loss_rec,loss_reg,forward_passes,accuracy_sampled,accuracy_map,\
mean_halt_sampled,mean_halt_map,mean_expected_steps,interp_accuracy_map,interp_mean_halt_sampled,failed";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(records: &[RunMetrics], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for m in records {
        let interp = m.eval_interp.as_ref();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.step,
            opt(m.loss),
            opt(m.loss_rec),
            opt(m.loss_reg),
            m.forward_passes,
            m.eval.accuracy_sampled,
            m.eval.accuracy_map,
            m.eval.mean_halt_sampled,
            m.eval.mean_halt_map,
            m.eval.mean_expected_steps,
            opt(interp.map(|e| e.accuracy_map)),
            opt(interp.map(|e| e.mean_halt_sampled)),
            m.failed,
        )?;
    }
    out.flush()?;
    Ok(())
}
