//! Stage-II relation correction. A text classifier scores every relation
//! for a grounded (entity, position) slot of the silhouette; inference is
//! restricted to relations the KG actually has for that slot. A second,
//! independent classifier predicts the ontology class of `rdf:type`
//! patterns from the question alone.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{batch_gradients, AutodiffError, Nag, NagConfig, Padding, ParamId, ParamStore, Tape, Tensor, Var};
use crate::kg::{Iri, KnowledgeGraph, Position};
use crate::parallel::Executor;
use crate::seq2seq::{EpochStats, Vocabulary};
use crate::sparql::{SparqlQuery, Term};
use crate::text::entity_label_tokens;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const SUB: &str = "[SUB]";
pub const OBJ: &str = "[OBJ]";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphSearchError {
    #[error("the KG has no valid relation for this slot")]
    EmptyValidSet,
    #[error("gold relation {0} is not in the relation universe")]
    GoldOutsideUniverse(Iri),
    #[error("invalid graph-search configuration: {0}")]
    InvalidConfig(String),
    #[error("stage-II training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    /// Odd.
    pub kernel_width: usize,
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embed_dim: 32,
            kernel_width: 3,
            layers: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSearchConfig {
    pub alpha: f64,
    /// Order matters: ties resolve to the earlier relation.
    pub relation_universe: Vec<Iri>,
    pub class_universe: Vec<Iri>,
    pub encoder: EncoderConfig,
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl GraphSearchConfig {
    /// Universes taken from a KG: all its relations except `rdf:type`,
    /// and all its ontology classes, both in sorted order.
    pub fn for_kg(kg: &KnowledgeGraph) -> Self {
        GraphSearchConfig {
            alpha: 0.4,
            relation_universe: kg.relations().iter().filter(|r| !r.is_rdf_type()).cloned().collect(),
            class_universe: kg.ontology_classes().iter().cloned().collect(),
            encoder: EncoderConfig::default(),
            learning_rate: 0.05,
            momentum: 0.9,
            clip_norm: Some(1.0),
            batch_size: 8,
            max_epochs: 60,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), GraphSearchError> {
        let bad = |m: &str| Err(GraphSearchError::InvalidConfig(m.into()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.relation_universe.is_empty() || self.class_universe.is_empty() {
            return bad("universes must be nonempty");
        }
        let dedup = |u: &[Iri]| u.iter().collect::<BTreeSet<_>>().len() == u.len();
        if !dedup(&self.relation_universe) || !dedup(&self.class_universe) {
            return bad("universes must not contain duplicates");
        }
        if self.relation_universe.iter().any(Iri::is_rdf_type) {
            return bad("rdf:type is not a correctable relation");
        }
        if self.encoder.embed_dim == 0 || self.encoder.kernel_width % 2 == 0 || self.encoder.layers == 0 {
            return bad("encoder needs a positive width, an odd kernel and at least one layer");
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return bad("batch_size and learning_rate must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marker {
    Sub,
    Obj,
}

impl Marker {
    pub fn position(self) -> Position {
        match self {
            Marker::Sub => Position::Subject,
            Marker::Obj => Position::Object,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionInput {
    pub question: Vec<String>,
    pub marker: Marker,
    pub entity: Iri,
    pub triple_index: usize,
}

impl CorrectionInput {
    /// `[CLS] q [SEP] [SUB|OBJ] [SEP] entity label tokens`.
    pub fn tokens(&self) -> Vec<String> {
        let mut t = Vec::with_capacity(self.question.len() + 8);
        t.push(CLS.to_string());
        t.extend(self.question.iter().cloned());
        t.push(SEP.to_string());
        t.push(match self.marker {
            Marker::Sub => SUB,
            Marker::Obj => OBJ,
        }
        .to_string());
        t.push(SEP.to_string());
        t.extend(entity_label_tokens(&self.entity));
        t
    }
}

/// `[CLS] q`.
pub fn type_input_tokens(question: &[String]) -> Vec<String> {
    core::iter::once(CLS.to_string()).chain(question.iter().cloned()).collect()
}

/// Triples with a non-`rdf:type` relation whose subject or object (not
/// both) is a grounded entity and the other side a variable.
pub fn correctable_triples(query: &SparqlQuery, question: &[String]) -> Vec<CorrectionInput> {
    let mut out = Vec::new();
    for (i, p) in query.patterns.iter().enumerate() {
        let Term::Relation(r) = &p.relation else { continue };
        if r.is_rdf_type() {
            continue;
        }
        let (marker, entity) = match (&p.subject, &p.object) {
            (Term::Entity(e), Term::Variable(_)) => (Marker::Sub, e),
            (Term::Variable(_), Term::Entity(e)) => (Marker::Obj, e),
            _ => continue,
        };
        out.push(CorrectionInput {
            question: question.to_vec(),
            marker,
            entity: entity.clone(),
            triple_index: i,
        });
    }
    out
}

fn universe_indices(universe: &[Iri], gold: &Iri, valid: &BTreeSet<Iri>) -> Result<(usize, Vec<usize>), GraphSearchError> {
    let g = universe.iter().position(|r| r == gold).ok_or_else(|| GraphSearchError::GoldOutsideUniverse(gold.clone()))?;
    let v: Vec<usize> = universe.iter().enumerate().filter(|(_, r)| valid.contains(*r)).map(|(i, _)| i).collect();
    if v.is_empty() {
        return Err(GraphSearchError::EmptyValidSet);
    }
    Ok((g, v))
}

/// `(1 − α)·(−log p[gold]) + α·mean_{r ∈ valid}(−log p[r])`, with `valid`
/// intersected with the universe.
pub fn stage2_loss(p: &[f64], universe: &[Iri], gold: &Iri, valid: &BTreeSet<Iri>, alpha: f64) -> Result<f64, GraphSearchError> {
    if p.len() != universe.len() {
        return Err(AutodiffError::ShapeMismatch {
            op: "stage2_loss",
            left: vec![p.len()],
            right: vec![universe.len()],
        }
        .into());
    }
    let (g, v) = universe_indices(universe, gold, valid)?;
    let lc = -libm::log(p[g]);
    let lgs = -v.iter().map(|&i| libm::log(p[i])).sum::<f64>() / v.len() as f64;
    Ok((1.0 - alpha) * lc + alpha * lgs)
}

/// Tape version of [`stage2_loss`] on a `[1, |universe|]` log-probability
/// row, with gold and valid given as universe indices.
pub fn stage2_loss_var(tape: &mut Tape<'_>, log_probs: Var, gold: usize, valid: &[usize], alpha: f64) -> Result<Var, GraphSearchError> {
    let n = tape.value(log_probs).len();
    let mut w = vec![0.0; n];
    w[gold] -= 1.0 - alpha;
    for &i in valid {
        w[i] -= alpha / valid.len() as f64;
    }
    let w = tape.constant(Tensor::matrix(1, n, w));
    Ok(tape.dot(log_probs, w)?)
}

/// Embedding, a stack of same-padded conv + GLU blocks with residuals,
/// and mean pooling into a single vector. This is the only part of a head
/// that touches tokens, so a different sentence encoder can replace it.
#[derive(Clone, Debug)]
struct ConvTextEncoder {
    embed: ParamId,
    layers: Vec<(ParamId, ParamId)>,
}

impl ConvTextEncoder {
    fn shapes(vocab: usize, cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
        let (d, k) = (cfg.embed_dim, cfg.kernel_width);
        let mut out = vec![("enc.embed".to_string(), vec![vocab, d])];
        for l in 0..cfg.layers {
            out.push((format!("enc.{l}.conv.w"), vec![k, d, 2 * d]));
            out.push((format!("enc.{l}.conv.b"), vec![2 * d]));
        }
        out
    }

    fn init(p: &mut ParamStore, vocab: usize, cfg: &EncoderConfig, rng: &mut ChaCha8Rng) {
        let fan_in = (cfg.kernel_width * cfg.embed_dim) as f64;
        for (name, shape) in Self::shapes(vocab, cfg) {
            if name == "enc.embed" {
                p.insert_normal(&name, &shape, 0.1, rng);
            } else if name.ends_with(".w") {
                p.insert_normal(&name, &shape, libm::sqrt(1.0 / fan_in), rng);
            } else {
                p.insert_zeros(&name, &shape);
            }
        }
    }

    fn bind(p: &ParamStore, cfg: &EncoderConfig) -> Result<Self, AutodiffError> {
        Ok(ConvTextEncoder {
            embed: p.id("enc.embed")?,
            layers: (0..cfg.layers)
                .map(|l| Ok((p.id(&format!("enc.{l}.conv.w"))?, p.id(&format!("enc.{l}.conv.b"))?)))
                .collect::<Result<_, AutodiffError>>()?,
        })
    }

    fn encode_on(&self, tape: &mut Tape<'_>, ids: &[usize]) -> Result<Var, AutodiffError> {
        let table = tape.param(self.embed);
        let mut h = tape.embedding_lookup(table, ids)?;
        for &(w, b) in &self.layers {
            let (w, b) = (tape.param(w), tape.param(b));
            let c = tape.conv1d(h, w, b, Padding::Same)?;
            let g = tape.glu(c)?;
            h = tape.add(g, h)?;
        }
        Ok(tape.mean_rows(h))
    }
}

/// Encoder plus a linear layer onto one universe.
#[derive(Clone, Debug)]
pub struct Head {
    pub params: ParamStore,
    encoder: ConvTextEncoder,
    out_w: ParamId,
    out_b: ParamId,
}

impl Head {
    fn new(vocab: usize, outputs: usize, cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut p = ParamStore::new();
        ConvTextEncoder::init(&mut p, vocab, cfg, rng);
        p.insert_normal("out.w", &[cfg.embed_dim, outputs], libm::sqrt(1.0 / cfg.embed_dim as f64), rng);
        p.insert_zeros("out.b", &[outputs]);
        Self::from_params(p, vocab, outputs, cfg).expect("freshly built head")
    }

    /// Binds named parameters, checking shapes.
    pub fn from_params(params: ParamStore, vocab: usize, outputs: usize, cfg: &EncoderConfig) -> Result<Self, AutodiffError> {
        let d = cfg.embed_dim;
        let mut expected = ConvTextEncoder::shapes(vocab, cfg);
        expected.push(("out.w".into(), vec![d, outputs]));
        expected.push(("out.b".into(), vec![outputs]));
        for (name, shape) in expected {
            let got = params.get(params.id(&name)?).shape();
            if got != shape.as_slice() {
                return Err(AutodiffError::ShapeMismatch { op: "load", left: shape, right: got.to_vec() });
            }
        }
        Ok(Head {
            encoder: ConvTextEncoder::bind(&params, cfg)?,
            out_w: params.id("out.w")?,
            out_b: params.id("out.b")?,
            params,
        })
    }

    fn log_probs_on(&self, tape: &mut Tape<'_>, ids: &[usize]) -> Result<Var, AutodiffError> {
        let h = self.encoder.encode_on(tape, ids)?;
        let (w, b) = (tape.param(self.out_w), tape.param(self.out_b));
        let m = tape.matmul(h, w)?;
        let logits = tape.add_row(m, b)?;
        Ok(tape.log_softmax(logits))
    }

    /// Graph-search loss of one encoded input.
    pub fn loss_on(&self, tape: &mut Tape<'_>, ids: &[usize], gold: usize, valid: &[usize], alpha: f64) -> Result<Var, GraphSearchError> {
        let lp = self.log_probs_on(tape, ids)?;
        stage2_loss_var(tape, lp, gold, valid, alpha)
    }

    fn probs(&self, ids: &[usize]) -> Result<Vec<f64>, AutodiffError> {
        let mut tape = Tape::new(&self.params);
        let lp = self.log_probs_on(&mut tape, ids)?;
        Ok(tape.value(lp).data().iter().map(|x| libm::exp(*x)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct GraphSearchModel {
    pub config: GraphSearchConfig,
    pub vocab: Vocabulary,
    pub relation_head: Head,
    pub type_head: Head,
}

fn argmax_first(scores: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|b| b.0)
}

impl GraphSearchModel {
    pub fn new(config: GraphSearchConfig, vocab: Vocabulary) -> Result<Self, GraphSearchError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let relation_head = Head::new(vocab.len(), config.relation_universe.len(), &config.encoder, &mut rng);
        let type_head = Head::new(vocab.len(), config.class_universe.len(), &config.encoder, &mut rng);
        Ok(GraphSearchModel { config, vocab, relation_head, type_head })
    }

    pub fn from_params(config: GraphSearchConfig, vocab: Vocabulary, relation: ParamStore, types: ParamStore) -> Result<Self, GraphSearchError> {
        config.validate()?;
        let relation_head = Head::from_params(relation, vocab.len(), config.relation_universe.len(), &config.encoder)?;
        let type_head = Head::from_params(types, vocab.len(), config.class_universe.len(), &config.encoder)?;
        Ok(GraphSearchModel { config, vocab, relation_head, type_head })
    }

    /// `p_r` over the relation universe.
    pub fn relation_probs(&self, input: &CorrectionInput) -> Result<Vec<f64>, GraphSearchError> {
        Ok(self.relation_head.probs(&self.vocab.encode(&input.tokens()))?)
    }

    pub fn class_probs(&self, question: &[String]) -> Result<Vec<f64>, GraphSearchError> {
        Ok(self.type_head.probs(&self.vocab.encode(&type_input_tokens(question)))?)
    }

    /// Best relation among those the KG has for the input's entity and
    /// position. A `dbp:` winner is swapped for its `dbo:` twin when the
    /// twin is also valid.
    pub fn predict_relation(&self, input: &CorrectionInput, kg: &KnowledgeGraph) -> Result<Iri, GraphSearchError> {
        let valid = kg.valid_relations(&input.entity, input.marker.position()).map_err(|_| GraphSearchError::EmptyValidSet)?;
        let p = self.relation_probs(input)?;
        let universe = &self.config.relation_universe;
        let best = argmax_first(universe.iter().enumerate().filter(|(_, r)| valid.contains(*r)).map(|(i, _)| (i, p[i]))).ok_or(GraphSearchError::EmptyValidSet)?;
        let winner = &universe[best];
        Ok(match winner.relation_twin() {
            Some(twin) if winner.prefix == crate::kg::Prefix::Dbp && valid.contains(&twin) => twin,
            _ => winner.clone(),
        })
    }

    pub fn predict_type(&self, question: &[String]) -> Result<Iri, GraphSearchError> {
        let p = self.class_probs(question)?;
        let best = argmax_first(p.iter().copied().enumerate()).expect("nonempty class universe");
        Ok(self.config.class_universe[best].clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationExample {
    pub input: CorrectionInput,
    pub gold: Iri,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeExample {
    pub question: Vec<String>,
    pub class: Iri,
}

/// Training examples from one gold query: each correctable triple gives a
/// relation example and each `rdf:type` pattern a type example.
pub fn stage2_examples(question: &[String], gold: &SparqlQuery) -> (Vec<RelationExample>, Vec<TypeExample>) {
    let rel = correctable_triples(gold, question)
        .into_iter()
        .filter_map(|input| match &gold.patterns[input.triple_index].relation {
            Term::Relation(r) => Some(RelationExample { gold: r.clone(), input }),
            _ => None,
        })
        .collect();
    let types = gold
        .patterns
        .iter()
        .filter(|p| p.is_type_pattern())
        .filter_map(|p| match &p.object {
            Term::Class(c) => Some(TypeExample { question: question.to_vec(), class: c.clone() }),
            _ => None,
        })
        .collect();
    (rel, types)
}

/// Word vocabulary over both heads' inputs, markers included. Words of
/// entity labels are left out, so every name reads as `<unk>`; otherwise
/// the heads learn which relations the training entities happened to use.
pub fn build_stage2_vocab(relations: &[RelationExample], types: &[TypeExample]) -> Vocabulary {
    let mut words: BTreeSet<String> = [CLS, SEP, SUB, OBJ].iter().map(|s| s.to_string()).collect();
    let mut names = BTreeSet::new();
    for r in relations {
        words.extend(r.input.tokens());
        names.extend(entity_label_tokens(&r.input.entity));
    }
    for t in types {
        words.extend(type_input_tokens(&t.question));
    }
    Vocabulary::from_tokens(words.into_iter().filter(|w| !names.contains(w)))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stage2Log {
    pub relation: Vec<EpochStats>,
    pub types: Vec<EpochStats>,
}

/// (token ids, target index, valid indices); the type head's valid list is
/// unused because its loss is plain cross-entropy (α = 0).
type Prepared = (Vec<usize>, usize, Vec<usize>);

fn fit<X: Executor>(head: &mut Head, data: &[Prepared], alpha: f64, cfg: &GraphSearchConfig, stream: u64, exec: &X) -> Result<Vec<EpochStats>, GraphSearchError> {
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ stream);
    let mut opt = Nag::new(
        NagConfig {
            learning_rate: cfg.learning_rate,
            momentum: cfg.momentum,
            clip_norm: cfg.clip_norm,
        },
        &head.params,
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut norm_sum, mut steps) = (0.0, 0.0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = {
                let h = &*head;
                batch_gradients(exec, &h.params, &batch, |tape, (ids, gold, valid)| h.loss_on(tape, ids, *gold, valid, alpha))?
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(GraphSearchError::Divergence { epoch });
            }
            norm_sum += opt.step(&mut head.params, &grads);
            loss_sum += loss * batch.len() as f64;
            steps += 1;
        }
        log.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            grad_norm: norm_sum / steps as f64,
        });
    }
    Ok(log)
}

/// Trains the relation head with the graph-search loss (valid sets from
/// `kg`) and the type head with cross-entropy. Examples whose gold is
/// outside the universe are rejected.
pub fn train_stage2<X: Executor>(
    model: &mut GraphSearchModel,
    relations: &[RelationExample],
    types: &[TypeExample],
    kg: &KnowledgeGraph,
    exec: &X,
) -> Result<Stage2Log, GraphSearchError> {
    let cfg = model.config.clone();
    let mut rel_data = Vec::with_capacity(relations.len());
    for ex in relations {
        let valid = kg.valid_relations(&ex.input.entity, ex.input.marker.position()).cloned().unwrap_or_default();
        let (g, v) = universe_indices(&cfg.relation_universe, &ex.gold, &valid)?;
        rel_data.push((model.vocab.encode(&ex.input.tokens()), g, v));
    }
    let mut type_data = Vec::with_capacity(types.len());
    for ex in types {
        let g = cfg
            .class_universe
            .iter()
            .position(|c| c == &ex.class)
            .ok_or_else(|| GraphSearchError::InvalidConfig(format!("class {} is not in the class universe", ex.class)))?;
        type_data.push((model.vocab.encode(&type_input_tokens(&ex.question)), g, vec![g]));
    }
    let relation = fit(&mut model.relation_head, &rel_data, cfg.alpha, &cfg, 0x5EED_0002, exec)?;
    let types = fit(&mut model.type_head, &type_data, 0.0, &cfg, 0x5EED_0003, exec)?;
    Ok(Stage2Log { relation, types })
}

/// Relation accuracy of restricted inference on held-out examples.
pub fn relation_accuracy(model: &GraphSearchModel, examples: &[RelationExample], kg: &KnowledgeGraph) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let hits = examples.iter().filter(|ex| model.predict_relation(&ex.input, kg).is_ok_and(|r| r == ex.gold)).count();
    hits as f64 / examples.len() as f64
}

/// Trains one relation head per α on `train` and reports restricted
/// accuracy on `val` for each, in the order given.
pub fn alpha_sweep<X: Executor>(
    base: &GraphSearchConfig,
    train: &[RelationExample],
    val: &[RelationExample],
    kg: &KnowledgeGraph,
    alphas: &[f64],
    exec: &X,
) -> Result<Vec<(f64, f64)>, GraphSearchError> {
    let vocab = build_stage2_vocab(train, &[]);
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let cfg = GraphSearchConfig { alpha, ..base.clone() };
        let mut model = GraphSearchModel::new(cfg, vocab.clone())?;
        train_stage2(&mut model, train, &[], kg, exec)?;
        out.push((alpha, relation_accuracy(&model, val, kg)));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Change {
    pub triple_index: usize,
    pub before: String,
    pub after: String,
}

/// Replaces the relation of every correctable triple with the restricted
/// prediction and, when `use_type_head` is set, the class of every
/// `rdf:type` pattern with the type head's prediction. Triples without a
/// valid relation are left alone. Returns the corrected query and one
/// record per visited slot.
pub fn apply_stage2(
    silhouette: &SparqlQuery,
    question: &[String],
    model: &GraphSearchModel,
    kg: &KnowledgeGraph,
    use_type_head: bool,
) -> (SparqlQuery, Vec<Stage2Change>) {
    let mut out = silhouette.clone();
    let mut changes = Vec::new();
    for input in correctable_triples(silhouette, question) {
        if let Ok(r) = model.predict_relation(&input, kg) {
            let slot = &mut out.patterns[input.triple_index].relation;
            changes.push(Stage2Change {
                triple_index: input.triple_index,
                before: slot.to_string(),
                after: r.to_string(),
            });
            *slot = Term::Relation(r);
        }
    }
    if use_type_head {
        let mut predicted: Option<Iri> = None;
        for (i, p) in out.patterns.iter_mut().enumerate() {
            if !p.is_type_pattern() || !matches!(p.object, Term::Class(_)) {
                continue;
            }
            if predicted.is_none() {
                predicted = model.predict_type(question).ok();
            }
            if let Some(c) = &predicted {
                changes.push(Stage2Change {
                    triple_index: i,
                    before: p.object.to_string(),
                    after: c.to_string(),
                });
                p.object = Term::Class(c.clone());
            }
        }
    }
    out.raw_tokens = crate::sparql::tokenize_sparql(&out.serialize()).unwrap_or_default();
    (out, changes)
}
