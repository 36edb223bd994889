//! Full experiment run from a [`PipelineConfig`], with every artifact
//! written under the output directory.

use std::path::{Path, PathBuf};

use silhouette_core::dataset::Benchmark;
use silhouette_core::graph_search::GraphSearchError;
use silhouette_core::metrics::EvalReport;
use silhouette_core::parallel::Executor;
use silhouette_core::pipeline::{run_experiment, Event, LinkerTable, PipelineError};
use silhouette_core::seq2seq::Seq2SeqError;
use silhouette_core::toybench::{generate_toybench, ToybenchError};

use crate::checkpoint::{self, CheckpointError, Progress};
use crate::config::{ConfigError, PipelineConfig};
use crate::io::{self, BenchmarkPaths, DataError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Toybench(#[from] ToybenchError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl RunError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            RunError::Pipeline(PipelineError::Seq2Seq(Seq2SeqError::Divergence { .. }))
                | RunError::Pipeline(PipelineError::GraphSearch(GraphSearchError::Divergence { .. }))
        )
    }
}

pub const MASKED_TRAIN: &str = "masked_train.jsonl";
pub const MASKED_TEST: &str = "masked_test.jsonl";
pub const STAGE1_CKPT: &str = "stage1.ckpt";
pub const STAGE2_CKPT: &str = "stage2.ckpt";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const EVENTS: &str = "events.jsonl";

/// Reads the configured data, or generates it from the `[toybench]` spec.
pub fn load_benchmark(cfg: &PipelineConfig) -> Result<Benchmark, RunError> {
    if let Some(spec) = &cfg.toybench {
        return Ok(generate_toybench(spec)?);
    }
    let need = |p: &Option<PathBuf>, name: &str| p.clone().ok_or_else(|| ConfigError::Invalid(format!("paths.{name} is required")));
    let (kg, train, test, emb) = (need(&cfg.paths.kg, "kg")?, need(&cfg.paths.train, "train")?, need(&cfg.paths.test, "test")?, need(&cfg.paths.embeddings, "embeddings")?);
    Ok(io::read_benchmark(&BenchmarkPaths {
        kg: &kg,
        train: &train,
        val: cfg.paths.val.as_deref(),
        test: &test,
        embeddings: &emb,
    })?)
}

/// Runs the experiment and writes masked splits, checkpoints,
/// predictions, the report and the event log to `paths.output`. Output
/// bytes depend only on the configuration, not on the worker count.
pub fn run_pipeline<X: Executor>(cfg: &PipelineConfig, exec: &X) -> Result<EvalReport, RunError> {
    cfg.validate()?;
    let out = cfg.paths.output.clone().expect("validated");
    let bench = load_benchmark(cfg)?;
    let links: Option<LinkerTable> = cfg.paths.linker.as_deref().map(io::read_linker_table).transpose()?;
    let mut events = Vec::new();
    let outcome = run_experiment(&bench, &cfg.experiment(), links.as_ref(), exec, &mut |e: Event| events.push(e));
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            // Keep the log of whatever ran before the failure.
            io::write_jsonl(&out.join(EVENTS), &events)?;
            return Err(e.into());
        }
    };
    write_outputs(&out, &outcome, &events)?;
    Ok(outcome.report)
}

fn write_outputs(out: &Path, o: &silhouette_core::pipeline::ExperimentOutcome, events: &[Event]) -> Result<(), RunError> {
    io::write_jsonl(&out.join(MASKED_TRAIN), &o.masked_train)?;
    io::write_jsonl(&out.join(MASKED_TEST), &o.masked_test)?;
    let last = o.stage1_log.epochs.last();
    checkpoint::save_seq2seq(
        &out.join(STAGE1_CKPT),
        &o.stage1,
        Progress {
            epoch: last.map_or(0, |e| e.epoch),
            loss: last.map(|e| e.loss),
        },
    )?;
    if let Some(gs) = &o.stage2 {
        checkpoint::save_graph_search(&out.join(STAGE2_CKPT), gs, Progress::default())?;
    }
    io::write_jsonl(&out.join(PREDICTIONS), &o.predictions)?;
    let json = serde_json::to_string_pretty(&o.report).map_err(|e| DataError::invalid(&out.join(REPORT_JSON), e))?;
    io::write_text(&out.join(REPORT_JSON), &(json + "\n"))?;
    io::write_text(&out.join(REPORT_TXT), &o.report.table("Test"))?;
    io::write_jsonl(&out.join(EVENTS), events)?;
    Ok(())
}
