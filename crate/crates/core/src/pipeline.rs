//! The two-stage experiment: link and mask, train the translator, decode
//! silhouettes, optionally correct them, execute and score. Every step
//! works per question so one bad record cannot sink a run.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::dataset::{answer_text, Benchmark, QaRecord};
use crate::graph_search::{
    apply_stage2, build_stage2_vocab, stage2_examples, train_stage2, EncoderConfig, GraphSearchConfig, GraphSearchError, GraphSearchModel, RelationExample, Stage2Change, TypeExample,
};
use crate::kg::KnowledgeGraph;
use crate::metrics::{answer_set, EvalReport, MetricsError, QuestionResult};
use crate::noise::{gold_linker, mask_scenario_a, mask_scenario_b, mask_scenario_c, simulate_linker, demask, LinkerNoiseConfig, LinkerOutput, MaskedPair, NoiseError, Scenario};
use crate::parallel::Executor;
use crate::seq2seq::{build_vocab, train_stage1, Example, Seq2SeqConfig, Seq2SeqError, Seq2SeqModel, TrainLog};
use crate::sparql::{parse_sparql, ParseError, SparqlQuery};
use crate::text::{tokenize_question, EmbeddingTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("{id}: gold SPARQL does not parse: {source}")]
    GoldParse { id: String, source: ParseError },
    #[error("{id}: {source}")]
    Linker { id: String, source: NoiseError },
    #[error("no usable training questions")]
    NoTrainingData,
    #[error(transparent)]
    Seq2Seq(#[from] Seq2SeqError),
    #[error(transparent)]
    GraphSearch(#[from] GraphSearchError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Settings {
    pub alpha: f64,
    pub encoder: EncoderConfig,
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for Stage2Settings {
    fn default() -> Self {
        Stage2Settings {
            alpha: 0.4,
            encoder: EncoderConfig::default(),
            learning_rate: 0.05,
            momentum: 0.9,
            clip_norm: Some(1.0),
            batch_size: 8,
            max_epochs: 60,
            seed: 1,
        }
    }
}

impl Stage2Settings {
    /// Full configuration with universes taken from `kg`.
    pub fn graph_config(&self, kg: &KnowledgeGraph) -> GraphSearchConfig {
        GraphSearchConfig {
            alpha: self.alpha,
            encoder: self.encoder.clone(),
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            clip_norm: self.clip_norm,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            seed: self.seed,
            ..GraphSearchConfig::for_kg(kg)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Linker degradation for scenarios B and C; ignored for A.
    pub linker: LinkerNoiseConfig,
    pub seq2seq: Seq2SeqConfig,
    pub stage2: Stage2Settings,
    pub enable_stage2: bool,
    pub enable_type_head: bool,
}

impl ExperimentConfig {
    /// Sets every module seed from one number.
    pub fn reseed(&mut self, seed: u64) {
        self.linker.seed = seed;
        self.seq2seq.seed = seed.wrapping_add(1);
        self.stage2.seed = seed.wrapping_add(2);
    }
}

/// A question after linking and masking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedRecord {
    pub id: String,
    pub question: Vec<String>,
    pub linker: LinkerOutput,
    pub pair: MaskedPair,
}

/// Links for one question: gold alignments, degraded for B and C.
pub fn link_question(
    id: &str,
    question: &[String],
    gold: &SparqlQuery,
    scenario: Scenario,
    noise: &LinkerNoiseConfig,
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
) -> Result<LinkerOutput, NoiseError> {
    let perfect = gold_linker(question, gold, emb);
    match scenario {
        Scenario::A => Ok(perfect),
        Scenario::B | Scenario::C => simulate_linker(&perfect, noise, kg, question.len(), id),
    }
}

pub fn mask_with(scenario: Scenario, question: &[String], gold: &SparqlQuery, linker: &LinkerOutput, emb: &EmbeddingTable) -> MaskedPair {
    match scenario {
        Scenario::A => mask_scenario_a(question, gold, emb),
        Scenario::B => mask_scenario_b(question, gold, linker),
        Scenario::C => mask_scenario_c(question, gold, linker),
    }
}

/// Links and masks one record. With `linker` given, those links are used
/// as is instead of being simulated.
pub fn mask_record(
    record: &QaRecord,
    scenario: Scenario,
    noise: &LinkerNoiseConfig,
    linker: Option<&LinkerOutput>,
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
) -> Result<MaskedRecord, PipelineError> {
    let gold = parse_sparql(&record.sparql).map_err(|source| PipelineError::GoldParse { id: record.id.clone(), source })?;
    let question = tokenize_question(&record.question);
    let linker = match linker {
        Some(l) => {
            l.validate(question.len()).map_err(|source| PipelineError::Linker { id: record.id.clone(), source })?;
            l.clone()
        }
        None => link_question(&record.id, &question, &gold, scenario, noise, kg, emb).map_err(|source| PipelineError::Linker { id: record.id.clone(), source })?,
    };
    let pair = mask_with(scenario, &question, &gold, &linker, emb);
    Ok(MaskedRecord {
        id: record.id.clone(),
        question,
        linker,
        pair,
    })
}

/// External linker results by question id.
pub type LinkerTable = BTreeMap<String, LinkerOutput>;

/// Masks a split in parallel; failures come back per record, in order.
/// For B and C, questions found in `links` use those links; the rest are
/// simulated from `noise`.
pub fn mask_split<X: Executor>(
    records: &[QaRecord],
    scenario: Scenario,
    noise: &LinkerNoiseConfig,
    links: Option<&LinkerTable>,
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
    exec: &X,
) -> Vec<Result<MaskedRecord, PipelineError>> {
    exec.map(records, |r| {
        let given = match scenario {
            Scenario::A => None,
            Scenario::B | Scenario::C => links.and_then(|l| l.get(&r.id)),
        };
        mask_record(r, scenario, noise, given, kg, emb)
    })
}

/// Builds vocabularies from masked training pairs and trains a fresh model.
pub fn fit_stage1<X, H>(pairs: &[MaskedPair], config: &Seq2SeqConfig, exec: &X, on_epoch: H) -> Result<(Seq2SeqModel, TrainLog), Seq2SeqError>
where
    X: Executor,
    H: FnMut(&crate::seq2seq::EpochStats, &Seq2SeqModel) -> ControlFlow<()>,
{
    let (src, tgt) = build_vocab(pairs, 1)?;
    let examples: Vec<Example> = pairs
        .iter()
        .map(|p| Example {
            src: src.encode(&p.masked_question),
            tgt: tgt.encode(&p.masked_sparql),
        })
        .collect();
    let mut model = Seq2SeqModel::new(config.clone(), src, tgt)?;
    let log = train_stage1(&mut model, &examples, exec, on_epoch)?;
    Ok((model, log))
}

/// Stage-II training data from gold queries.
pub fn stage2_training_data(records: &[QaRecord]) -> (Vec<RelationExample>, Vec<TypeExample>) {
    let (mut rel, mut types) = (Vec::new(), Vec::new());
    for r in records {
        if let Ok(gold) = parse_sparql(&r.sparql) {
            let (a, b) = stage2_examples(&tokenize_question(&r.question), &gold);
            rel.extend(a);
            types.extend(b);
        }
    }
    (rel, types)
}

/// Builds and trains a graph-search model on `records`' gold queries.
/// Examples whose gold relation or class the KG lacks are dropped.
pub fn fit_stage2<X: Executor>(
    records: &[QaRecord],
    settings: &Stage2Settings,
    kg: &KnowledgeGraph,
    exec: &X,
) -> Result<(GraphSearchModel, crate::graph_search::Stage2Log), GraphSearchError> {
    let cfg = settings.graph_config(kg);
    let (rel, types) = stage2_training_data(records);
    let rel: Vec<RelationExample> = rel
        .into_iter()
        .filter(|ex| kg.valid_relations(&ex.input.entity, ex.input.marker.position()).is_ok_and(|v| v.contains(&ex.gold)))
        .collect();
    let types: Vec<TypeExample> = types.into_iter().filter(|t| cfg.class_universe.contains(&t.class)).collect();
    let mut model = GraphSearchModel::new(cfg, build_stage2_vocab(&rel, &types))?;
    let log = train_stage2(&mut model, &rel, &types, kg, exec)?;
    Ok((model, log))
}

/// Stage-I output for one masked question, demasked. On a placeholder
/// the table cannot resolve, the raw token string comes back as `Err`.
pub fn predict_silhouette(model: &Seq2SeqModel, masked: &MaskedRecord) -> Result<String, String> {
    let tokens = model.translate(&masked.pair.masked_question).map_err(|e| format!("decode failed: {e}"))?;
    demask(&tokens, &masked.pair.mask_table).map_err(|_| tokens.join(" "))
}

/// Stage-II correction of a silhouette string. Unparseable input is
/// returned unchanged.
pub fn correct_silhouette(silhouette: &str, question: &[String], model: &GraphSearchModel, kg: &KnowledgeGraph, use_type_head: bool) -> (String, Vec<Stage2Change>) {
    match parse_sparql(silhouette) {
        Ok(q) if q.is_executable() => {
            let (fixed, changes) = apply_stage2(&q, question, model, kg, use_type_head);
            (fixed.serialize(), changes)
        }
        _ => (silhouette.to_string(), Vec::new()),
    }
}

/// Answers of a predicted query; anything that fails yields none.
pub fn predicted_answers(sparql: &str, kg: &KnowledgeGraph) -> Vec<String> {
    answer_text(sparql, kg).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted_sparql: String,
    pub silhouette_sparql: String,
    pub answers: Vec<String>,
}

/// Scores predictions against gold records, in gold order. A gold record
/// without a prediction counts as an empty answer set.
pub fn evaluate(gold: &[QaRecord], predictions: &[Prediction]) -> Result<EvalReport, MetricsError> {
    let by_id: BTreeMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let results = gold
        .iter()
        .map(|g| {
            let predicted = by_id.get(g.id.as_str()).map(|p| answer_set(&p.answers)).unwrap_or_default();
            QuestionResult::new(g.id.clone(), answer_set(&g.answers), predicted)
        })
        .collect();
    EvalReport::from_results(results)
}

/// Structured log lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Skipped { split: String, id: String, reason: String },
    Stage1Epoch { epoch: usize, loss: f64, grad_norm: f64 },
    Stage2Epoch { head: String, epoch: usize, loss: f64, grad_norm: f64 },
    Stage2Change { id: String, triple_index: usize, before: String, after: String },
    Question { id: String, silhouette_sparql: String, predicted_sparql: String, f1: f64 },
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub masked_train: Vec<MaskedRecord>,
    pub masked_test: Vec<MaskedRecord>,
    pub stage1: Seq2SeqModel,
    pub stage1_log: TrainLog,
    pub stage2: Option<GraphSearchModel>,
    pub predictions: Vec<Prediction>,
    pub report: EvalReport,
}

fn masked_or_skip(split: &str, results: Vec<Result<MaskedRecord, PipelineError>>, sink: &mut dyn FnMut(Event)) -> Vec<MaskedRecord> {
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(m) => ok.push(m),
            Err(e) => {
                let id = match &e {
                    PipelineError::GoldParse { id, .. } | PipelineError::Linker { id, .. } => id.clone(),
                    _ => String::new(),
                };
                sink(Event::Skipped {
                    split: split.into(),
                    id,
                    reason: e.to_string(),
                });
            }
        }
    }
    ok
}

/// Mask → train stage I → decode test → demask → (stage II) → execute →
/// evaluate. Test questions whose gold query does not parse are left out
/// of the evaluation.
pub fn run_experiment<X: Executor>(
    bench: &Benchmark,
    cfg: &ExperimentConfig,
    links: Option<&LinkerTable>,
    exec: &X,
    sink: &mut dyn FnMut(Event),
) -> Result<ExperimentOutcome, PipelineError> {
    let kg = &bench.kg;
    let emb = &bench.embeddings;
    let masked_train = masked_or_skip("train", mask_split(&bench.train, cfg.scenario, &cfg.linker, links, kg, emb, exec), sink);
    if masked_train.is_empty() {
        return Err(PipelineError::NoTrainingData);
    }
    let masked_test = masked_or_skip("test", mask_split(&bench.test, cfg.scenario, &cfg.linker, links, kg, emb, exec), sink);

    let pairs: Vec<MaskedPair> = masked_train.iter().map(|m| m.pair.clone()).collect();
    let (stage1, stage1_log) = fit_stage1(&pairs, &cfg.seq2seq, exec, |s, _| {
        sink(Event::Stage1Epoch {
            epoch: s.epoch,
            loss: s.loss,
            grad_norm: s.grad_norm,
        });
        ControlFlow::Continue(())
    })?;

    let stage2 = if cfg.enable_stage2 {
        let (model, log) = fit_stage2(&bench.train, &cfg.stage2, kg, exec)?;
        for (head, stats) in [("relation", &log.relation), ("type", &log.types)] {
            for s in stats {
                sink(Event::Stage2Epoch {
                    head: head.into(),
                    epoch: s.epoch,
                    loss: s.loss,
                    grad_norm: s.grad_norm,
                });
            }
        }
        Some(model)
    } else {
        None
    };

    let outputs = exec.map(&masked_test, |m| {
        let silhouette = predict_silhouette(&stage1, m).unwrap_or_else(|raw| raw);
        let (predicted, changes) = match &stage2 {
            Some(gs) => correct_silhouette(&silhouette, &m.question, gs, kg, cfg.enable_type_head),
            None => (silhouette.clone(), Vec::new()),
        };
        let answers = predicted_answers(&predicted, kg);
        (
            Prediction {
                id: m.id.clone(),
                predicted_sparql: predicted,
                silhouette_sparql: silhouette,
                answers,
            },
            changes,
        )
    });
    let mut predictions = Vec::with_capacity(outputs.len());
    for (p, changes) in outputs {
        for c in changes {
            sink(Event::Stage2Change {
                id: p.id.clone(),
                triple_index: c.triple_index,
                before: c.before,
                after: c.after,
            });
        }
        predictions.push(p);
    }

    let kept: alloc::collections::BTreeSet<&str> = masked_test.iter().map(|m| m.id.as_str()).collect();
    let evaluated: Vec<QaRecord> = bench.test.iter().filter(|r| kept.contains(r.id.as_str())).cloned().collect();
    let report = evaluate(&evaluated, &predictions)?;
    for (p, r) in predictions.iter().zip(&report.results) {
        sink(Event::Question {
            id: p.id.clone(),
            silhouette_sparql: p.silhouette_sparql.clone(),
            predicted_sparql: p.predicted_sparql.clone(),
            f1: r.f1,
        });
    }
    Ok(ExperimentOutcome {
        masked_train,
        masked_test,
        stage1,
        stage1_log,
        stage2,
        predictions,
        report,
    })
}
