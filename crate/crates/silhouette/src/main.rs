use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use silhouette::checkpoint::{self, Progress};
use silhouette::config::{parse_scenario, PipelineConfig};
use silhouette::io::{self, LinkerRecord};
use silhouette::{run_pipeline, Pool, RunError};
use silhouette_core::graph_search::GraphSearchError;
use silhouette_core::kg::KnowledgeGraph;
use silhouette_core::noise::{LinkerNoiseConfig, MaskedPair, Scenario};
use silhouette_core::parallel::Executor;
use silhouette_core::pipeline::{
    correct_silhouette, evaluate, fit_stage1, fit_stage2, link_question, mask_split, predict_silhouette, predicted_answers, Event, MaskedRecord, Prediction, Stage2Settings,
};
use silhouette_core::seq2seq::{Seq2SeqConfig, Seq2SeqError, Seq2SeqModel};
use silhouette_core::sparql::parse_sparql;
use silhouette_core::text::tokenize_question;
use silhouette_core::toybench::{generate_toybench, ToybenchSpec};

#[derive(Parser)]
#[command(name = "silhouette", version, about = "Two-stage question answering over a knowledge graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic benchmark
    #[command(subcommand)]
    Toybench(ToybenchCmd),
    /// Knowledge graph files
    #[command(subcommand)]
    Kg(KgCmd),
    /// Link and mask a dataset for one scenario
    Mask(MaskArgs),
    /// Linker simulation
    #[command(subcommand)]
    Linker(LinkerCmd),
    /// Model training
    #[command(subcommand)]
    Train(TrainCmd),
    /// Decode silhouettes with a stage-I checkpoint
    Predict(PredictArgs),
    /// Correct predicted queries with a stage-II checkpoint
    Correct(CorrectArgs),
    /// Score predictions against gold answers
    Eval(EvalArgs),
    /// End-to-end experiment
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Subcommand)]
enum ToybenchCmd {
    /// Write kg.tsv, train/val/test.jsonl and embeddings.txt
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with ToybenchSpec keys
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_val: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
    },
}

#[derive(Subcommand)]
enum KgCmd {
    /// Parse a TSV graph and print its size
    Validate {
        #[arg(long)]
        kg: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    A,
    B,
    C,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::A => Scenario::A,
            ScenarioArg::B => Scenario::B,
            ScenarioArg::C => Scenario::C,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct NoiseArgs {
    #[arg(long)]
    recall_entity: Option<f64>,
    #[arg(long)]
    recall_relation: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    spurious_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    wrong_link_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl NoiseArgs {
    fn config(self) -> Option<LinkerNoiseConfig> {
        match (self.recall_entity, self.recall_relation) {
            (None, None) => None,
            (e, r) => Some(LinkerNoiseConfig {
                recall_entity: e.unwrap_or(1.0),
                recall_relation: r.unwrap_or(1.0),
                spurious_rate: self.spurious_rate,
                wrong_link_rate: self.wrong_link_rate,
                seed: self.seed,
            }),
        }
    }
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    #[command(flatten)]
    data: DataArgs,
    /// Linker output to use for B and C
    #[arg(long)]
    linker: Option<PathBuf>,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum LinkerCmd {
    /// Degrade gold links with the given noise and write them out
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Train the translator on masked pairs
    Stage1 {
        /// Output of `mask`
        #[arg(long)]
        masked: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file; its [seq2seq] section is used
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the graph-search heads on gold queries
    Stage2 {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file; its [stage2] section is used
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    masked: PathBuf,
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    kg: PathBuf,
    /// Masked records supplying the tokenized questions
    #[arg(long)]
    masked: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_type_head: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Write the full report as JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Mask, train, predict, correct and evaluate from one config file
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        no_stage2: bool,
        #[arg(long)]
        no_type_head: bool,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Divergence(_) => 3,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn emit(e: &Event) {
    eprintln!("{}", serde_json::to_string(e).expect("event serializes"));
}

/// Deserializes one table of a TOML file, or the default without a file.
fn section<T: DeserializeOwned + Default>(path: Option<&Path>, key: &str) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = io::read_text(path).map_err(data)?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    match table.remove(key) {
        Some(v) => v.try_into().map_err(|e| Failure::Usage(format!("{}: [{key}]: {e}", path.display()))),
        None => Ok(T::default()),
    }
}

fn read_masked(path: &Path) -> Result<Vec<MaskedRecord>, Failure> {
    io::read_jsonl(path).map_err(data)
}

fn read_kg(path: &Path) -> Result<KnowledgeGraph, Failure> {
    io::read_kg(path).map_err(data)
}

fn toybench_generate(out: &Path, config: Option<&Path>, seed: Option<u64>, sizes: [Option<usize>; 3]) -> Result<(), Failure> {
    let mut spec: ToybenchSpec = match config {
        Some(p) => toml::from_str(&io::read_text(p).map_err(data)?).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => ToybenchSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let [tr, va, te] = sizes;
    spec.n_train = tr.unwrap_or(spec.n_train);
    spec.n_val = va.unwrap_or(spec.n_val);
    spec.n_test = te.unwrap_or(spec.n_test);
    let bench = generate_toybench(&spec).map_err(data)?;
    io::write_benchmark(out, &bench).map_err(data)?;
    println!(
        "{} facts, {} train, {} val, {} test questions written to {}",
        bench.kg.facts().len(),
        bench.train.len(),
        bench.val.len(),
        bench.test.len(),
        out.display()
    );
    Ok(())
}

fn mask(args: &MaskArgs, exec: &Pool) -> Result<(), Failure> {
    let scenario: Scenario = args.scenario.into();
    let kg = read_kg(&args.data.kg)?;
    let emb = io::read_embeddings(&args.data.embeddings).map_err(data)?;
    let records = io::read_dataset(&args.data.dataset).map_err(data)?;
    let links = args.linker.as_deref().map(io::read_linker_table).transpose().map_err(data)?;
    let noise = args.noise.config();
    if scenario != Scenario::A && links.is_none() && noise.is_none() {
        return Err(Failure::Usage(format!("scenario {scenario} needs --linker or --recall-entity/--recall-relation")));
    }
    let noise = noise.unwrap_or(LinkerNoiseConfig::perfect(args.noise.seed));
    let mut kept = Vec::new();
    for (rec, r) in records.iter().zip(mask_split(&records, scenario, &noise, links.as_ref(), &kg, &emb, exec)) {
        match r {
            Ok(m) => kept.push(m),
            Err(e) => emit(&Event::Skipped {
                split: "input".into(),
                id: rec.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    io::write_jsonl(&args.out, &kept).map_err(data)?;
    println!("{} of {} questions masked", kept.len(), records.len());
    Ok(())
}

fn linker_simulate(d: &DataArgs, noise: NoiseArgs, out: &Path, exec: &Pool) -> Result<(), Failure> {
    let cfg = noise.config().unwrap_or(LinkerNoiseConfig::perfect(noise.seed));
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let kg = read_kg(&d.kg)?;
    let emb = io::read_embeddings(&d.embeddings).map_err(data)?;
    let records = io::read_dataset(&d.dataset).map_err(data)?;
    let linked = exec.map(&records, |r| {
        let gold = parse_sparql(&r.sparql).map_err(|e| e.to_string())?;
        let q = tokenize_question(&r.question);
        link_question(&r.id, &q, &gold, Scenario::C, &cfg, &kg, &emb)
            .map(|output| LinkerRecord { id: r.id.clone(), output })
            .map_err(|e| e.to_string())
    });
    let mut kept = Vec::new();
    for (r, l) in records.iter().zip(linked) {
        match l {
            Ok(l) => kept.push(l),
            Err(reason) => emit(&Event::Skipped {
                split: "input".into(),
                id: r.id.clone(),
                reason,
            }),
        }
    }
    io::write_jsonl(out, &kept).map_err(data)?;
    println!("{} linker records written", kept.len());
    Ok(())
}

fn train_stage1(masked: &Path, out: &Path, config: Option<&Path>, epochs: Option<usize>, seed: Option<u64>, exec: &Pool) -> Result<(), Failure> {
    let mut cfg: Seq2SeqConfig = section(config, "seq2seq")?;
    if let Some(e) = epochs {
        cfg.max_epochs = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let pairs: Vec<MaskedPair> = read_masked(masked)?.into_iter().map(|m| m.pair).collect();
    let mut last_good: Option<(Seq2SeqModel, Progress)> = None;
    let result = fit_stage1(&pairs, &cfg, exec, |s, m| {
        emit(&Event::Stage1Epoch {
            epoch: s.epoch,
            loss: s.loss,
            grad_norm: s.grad_norm,
        });
        last_good = Some((m.clone(), Progress { epoch: s.epoch, loss: Some(s.loss) }));
        ControlFlow::Continue(())
    });
    match result {
        Ok((model, log)) => {
            let last = log.epochs.last();
            let progress = Progress {
                epoch: last.map_or(0, |e| e.epoch),
                loss: last.map(|e| e.loss),
            };
            checkpoint::save_seq2seq(out, &model, progress).map_err(data)?;
            println!("saved {} ({} parameters, final loss {:?})", out.display(), model.num_parameters(), progress.loss);
            Ok(())
        }
        Err(e @ Seq2SeqError::Divergence { .. }) => {
            if let Some((m, p)) = &last_good {
                checkpoint::save_seq2seq(out, m, *p).map_err(data)?;
                return Err(Failure::Divergence(format!("{e}; last good checkpoint (epoch {}) saved to {}", p.epoch, out.display())));
            }
            Err(Failure::Divergence(e.to_string()))
        }
        Err(e @ Seq2SeqError::InvalidConfig(_)) => Err(Failure::Usage(e.to_string())),
        Err(e) => Err(data(e)),
    }
}

#[allow(clippy::too_many_arguments)]
fn train_stage2(kg: &Path, dataset: &Path, out: &Path, config: Option<&Path>, alpha: Option<f64>, epochs: Option<usize>, seed: Option<u64>, exec: &Pool) -> Result<(), Failure> {
    let mut settings: Stage2Settings = section(config, "stage2")?;
    if let Some(a) = alpha {
        settings.alpha = a;
    }
    if let Some(e) = epochs {
        settings.max_epochs = e;
    }
    if let Some(s) = seed {
        settings.seed = s;
    }
    let kg = read_kg(kg)?;
    let records = io::read_dataset(dataset).map_err(data)?;
    let (model, log) = fit_stage2(&records, &settings, &kg, exec).map_err(|e| match e {
        GraphSearchError::Divergence { .. } => Failure::Divergence(e.to_string()),
        GraphSearchError::InvalidConfig(_) => Failure::Usage(e.to_string()),
        _ => data(e),
    })?;
    for (head, stats) in [("relation", &log.relation), ("type", &log.types)] {
        for s in stats {
            emit(&Event::Stage2Epoch {
                head: head.into(),
                epoch: s.epoch,
                loss: s.loss,
                grad_norm: s.grad_norm,
            });
        }
    }
    let progress = Progress {
        epoch: settings.max_epochs,
        loss: log.relation.last().map(|e| e.loss),
    };
    checkpoint::save_graph_search(out, &model, progress).map_err(data)?;
    println!("saved {}", out.display());
    Ok(())
}

fn predict(args: &PredictArgs, exec: &Pool) -> Result<(), Failure> {
    let (model, _) = checkpoint::load_seq2seq(&args.model).map_err(data)?;
    let kg = read_kg(&args.kg)?;
    let masked = read_masked(&args.masked)?;
    let predictions = exec.map(&masked, |m| {
        let silhouette = predict_silhouette(&model, m).unwrap_or_else(|raw| raw);
        Prediction {
            id: m.id.clone(),
            answers: predicted_answers(&silhouette, &kg),
            predicted_sparql: silhouette.clone(),
            silhouette_sparql: silhouette,
        }
    });
    io::write_jsonl(&args.out, &predictions).map_err(data)?;
    println!("{} predictions written", predictions.len());
    Ok(())
}

fn correct(args: &CorrectArgs, exec: &Pool) -> Result<(), Failure> {
    let (model, _) = checkpoint::load_graph_search(&args.model).map_err(data)?;
    let kg = read_kg(&args.kg)?;
    let questions: BTreeMap<String, Vec<String>> = read_masked(&args.masked)?.into_iter().map(|m| (m.id, m.question)).collect();
    let preds: Vec<Prediction> = io::read_jsonl(&args.predictions).map_err(data)?;
    let fixed = exec.map(&preds, |p| {
        let q = questions.get(&p.id).cloned().unwrap_or_default();
        let (sparql, changes) = correct_silhouette(&p.silhouette_sparql, &q, &model, &kg, !args.no_type_head);
        let out = Prediction {
            id: p.id.clone(),
            answers: predicted_answers(&sparql, &kg),
            predicted_sparql: sparql,
            silhouette_sparql: p.silhouette_sparql.clone(),
        };
        (out, changes)
    });
    let mut out = Vec::with_capacity(fixed.len());
    for (p, changes) in fixed {
        for c in changes {
            emit(&Event::Stage2Change {
                id: p.id.clone(),
                triple_index: c.triple_index,
                before: c.before,
                after: c.after,
            });
        }
        out.push(p);
    }
    io::write_jsonl(&args.out, &out).map_err(data)?;
    println!("{} predictions corrected", out.len());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), Failure> {
    let gold = io::read_dataset(&args.gold).map_err(data)?;
    let preds: Vec<Prediction> = io::read_jsonl(&args.predictions).map_err(data)?;
    let report = evaluate(&gold, &preds).map_err(data)?;
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&report).map_err(data)?;
        io::write_text(out, &(json + "\n")).map_err(data)?;
    }
    print!("{}", report.table("Test"));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn pipeline_run(config: &Path, seed: Option<u64>, scenario: Option<&str>, output: Option<PathBuf>, no_stage2: bool, no_type_head: bool, exec: &Pool) -> Result<(), Failure> {
    let mut cfg = PipelineConfig::load(config).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = scenario {
        cfg.scenario = parse_scenario(s).ok_or_else(|| Failure::Usage(format!("unknown scenario {s:?}")))?;
    }
    if output.is_some() {
        cfg.paths.output = output;
    }
    cfg.enable_stage2 &= !no_stage2;
    cfg.enable_type_head &= !no_type_head;
    match run_pipeline(&cfg, exec) {
        Ok(report) => {
            print!("{}", report.table(&format!("Scenario {}", cfg.scenario)));
            Ok(())
        }
        Err(e) if e.is_divergence() => Err(Failure::Divergence(e.to_string())),
        Err(e @ RunError::Config(_)) => Err(Failure::Usage(e.to_string())),
        Err(e) => Err(data(e)),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let exec = Pool::from_env();
    match cli.command {
        Command::Toybench(ToybenchCmd::Generate { out, config, seed, n_train, n_val, n_test }) => toybench_generate(&out, config.as_deref(), seed, [n_train, n_val, n_test]),
        Command::Kg(KgCmd::Validate { kg }) => {
            let g = read_kg(&kg)?;
            println!(
                "ok: {} facts, {} entities, {} relations, {} classes",
                g.facts().len(),
                g.entities().len(),
                g.relations().len(),
                g.ontology_classes().len()
            );
            Ok(())
        }
        Command::Mask(args) => mask(&args, &exec),
        Command::Linker(LinkerCmd::Simulate { data, noise, out }) => linker_simulate(&data, noise, &out, &exec),
        Command::Train(TrainCmd::Stage1 { masked, out, config, epochs, seed }) => train_stage1(&masked, &out, config.as_deref(), epochs, seed, &exec),
        Command::Train(TrainCmd::Stage2 { kg, dataset, out, config, alpha, epochs, seed }) => train_stage2(&kg, &dataset, &out, config.as_deref(), alpha, epochs, seed, &exec),
        Command::Predict(args) => predict(&args, &exec),
        Command::Correct(args) => correct(&args, &exec),
        Command::Eval(args) => eval(&args),
        Command::Pipeline(PipelineCmd::Run { config, seed, scenario, output, no_stage2, no_type_head }) => {
            pipeline_run(&config, seed, scenario.as_deref(), output, no_stage2, no_type_head, &exec)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Data(m) | Failure::Divergence(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
