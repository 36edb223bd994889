//! Linker simulation and the three masking scenarios.
//!
//! A = gold links, B = intersection of gold and linker links, C = linker
//! links only. Placeholders are `<e0>`, `<e1>`, … for entities and
//! `<r0>`, … for relations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::kg::{Iri, KnowledgeGraph, Prefix};
use crate::sparql::{extract_terms, is_placeholder, SparqlQuery};
use crate::text::{align_entity, align_relation, entity_label_tokens, find_exact, iri_label_tokens, jaccard, EmbeddingTable, Span};

/// Placeholders available per kind; links beyond the cap stay concrete.
pub const MAX_PLACEHOLDERS: usize = 10;
/// Partial-match acceptance for linker mentions.
pub const PARTIAL_MATCH_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoiseError {
    #[error("unknown placeholder `{0}`")]
    UnknownPlaceholder(String),
    #[error("invalid linker config: {0}")]
    InvalidConfig(String),
    #[error("{iri} cannot be linked as {kind}")]
    KindMismatch { iri: Iri, kind: LinkKind },
    #[error("span {span} outside question of length {len}")]
    SpanOutOfBounds { span: Span, len: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Entity,
    Relation,
}

impl LinkKind {
    /// Kind implied by the IRI prefix (`dbr` ⇒ entity, `dbo`/`dbp` ⇒ relation).
    pub fn of(iri: &Iri) -> Option<LinkKind> {
        match iri.prefix {
            Prefix::Dbr => Some(LinkKind::Entity),
            Prefix::Dbo | Prefix::Dbp => Some(LinkKind::Relation),
            _ => None,
        }
    }

    fn letter(self) -> char {
        match self {
            LinkKind::Entity => 'e',
            LinkKind::Relation => 'r',
        }
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkKind::Entity => "entity",
            LinkKind::Relation => "relation",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkerItem {
    pub span: Option<Span>,
    pub iri: Iri,
    pub kind: LinkKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkerOutput {
    pub items: Vec<LinkerItem>,
}

impl LinkerOutput {
    pub fn validate(&self, question_len: usize) -> Result<(), NoiseError> {
        for item in &self.items {
            if LinkKind::of(&item.iri) != Some(item.kind) {
                return Err(NoiseError::KindMismatch {
                    iri: item.iri.clone(),
                    kind: item.kind,
                });
            }
            if let Some(span) = item.span {
                if !span.within(question_len) {
                    return Err(NoiseError::SpanOutOfBounds { span, len: question_len });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkerNoiseConfig {
    pub recall_entity: f64,
    pub recall_relation: f64,
    pub spurious_rate: f64,
    pub wrong_link_rate: f64,
    pub seed: u64,
}

impl LinkerNoiseConfig {
    pub fn perfect(seed: u64) -> Self {
        LinkerNoiseConfig {
            recall_entity: 1.0,
            recall_relation: 1.0,
            spurious_rate: 0.0,
            wrong_link_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.recall_entity) || !unit(self.recall_relation) {
            return Err(NoiseError::InvalidConfig("recall must lie in [0, 1]".into()));
        }
        if !unit(self.wrong_link_rate) {
            return Err(NoiseError::InvalidConfig("wrong_link_rate must lie in [0, 1]".into()));
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate.is_finite()) {
            return Err(NoiseError::InvalidConfig("spurious_rate must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub iri: Iri,
    pub span: Option<Span>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedPair {
    pub masked_question: Vec<String>,
    pub masked_sparql: Vec<String>,
    pub mask_table: BTreeMap<String, MaskEntry>,
    pub scenario: Scenario,
}

impl MaskedPair {
    /// Placeholders that made it into the SPARQL side.
    pub fn sparql_placeholders(&self) -> BTreeSet<&str> {
        self.masked_sparql.iter().filter(|t| is_placeholder(t)).map(String::as_str).collect()
    }
}

/// Aligns every gold entity and relation to the question: entities first
/// (each claiming its span), then relations on the remaining words.
pub fn gold_linker(question: &[String], gold: &SparqlQuery, emb: &EmbeddingTable) -> LinkerOutput {
    let terms = extract_terms(gold);
    let mut claimed: Vec<Span> = Vec::new();
    let mut items = Vec::new();
    for e in &terms.entities {
        let span = align_entity(e, question, emb, &claimed);
        claimed.extend(span);
        items.push(LinkerItem {
            span,
            iri: e.clone(),
            kind: LinkKind::Entity,
        });
    }
    for r in &terms.relations {
        let span = align_relation(r, question, emb, &claimed);
        claimed.extend(span);
        items.push(LinkerItem {
            span,
            iri: r.clone(),
            kind: LinkKind::Relation,
        });
    }
    LinkerOutput { items }
}

/// FNV-1a, used to derive a per-question RNG stream from its id.
pub fn stream_id(id: &str) -> u64 {
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Degrades a gold linker output: drops items (recall), swaps IRIs for
/// random same-kind KG IRIs (wrong links) and appends Poisson-many random
/// spurious links. The random stream depends only on `cfg.seed` and
/// `question_id`.
pub fn simulate_linker(
    gold: &LinkerOutput,
    cfg: &LinkerNoiseConfig,
    kg: &KnowledgeGraph,
    question_len: usize,
    question_id: &str,
) -> Result<LinkerOutput, NoiseError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream_id(question_id));
    let entities: Vec<&Iri> = kg.entities().iter().collect();
    let relations: Vec<&Iri> = kg.relations().iter().filter(|r| !r.is_rdf_type()).collect();
    let pool = |kind: LinkKind| match kind {
        LinkKind::Entity => &entities,
        LinkKind::Relation => &relations,
    };

    let mut items = Vec::new();
    for item in &gold.items {
        let recall = match item.kind {
            LinkKind::Entity => cfg.recall_entity,
            LinkKind::Relation => cfg.recall_relation,
        };
        // Always draw both numbers so one item's fate does not shift the
        // stream for the next.
        let keep = rng.random::<f64>() < recall;
        let wrong = rng.random::<f64>() < cfg.wrong_link_rate;
        let pick = rng.random::<u64>();
        if !keep {
            continue;
        }
        let mut iri = item.iri.clone();
        if wrong {
            let others: Vec<&&Iri> = pool(item.kind).iter().filter(|c| ***c != item.iri).collect();
            if !others.is_empty() {
                iri = (**others[(pick % others.len() as u64) as usize]).clone();
            }
        }
        items.push(LinkerItem {
            span: item.span,
            iri,
            kind: item.kind,
        });
    }

    if cfg.spurious_rate > 0.0 && question_len > 0 {
        let n = Poisson::new(cfg.spurious_rate)
            .map_err(|e| NoiseError::InvalidConfig(format!("{e}")))?
            .sample(&mut rng) as usize;
        for _ in 0..n {
            let kind = if rng.random::<bool>() {
                LinkKind::Entity
            } else {
                LinkKind::Relation
            };
            let candidates = pool(kind);
            if candidates.is_empty() {
                continue;
            }
            let iri = candidates[rng.random_range(0..candidates.len())].clone();
            let max_len = if kind == LinkKind::Entity { 2.min(question_len) } else { 1 };
            let len = rng.random_range(1..=max_len);
            let start = rng.random_range(0..=question_len - len);
            items.push(LinkerItem {
                span: Some(Span::new(start, start + len)),
                iri,
                kind,
            });
        }
    }
    Ok(LinkerOutput { items })
}

fn label_tokens(iri: &Iri, kind: LinkKind) -> Vec<String> {
    match kind {
        LinkKind::Entity => entity_label_tokens(iri),
        LinkKind::Relation => iri_label_tokens(iri),
    }
}

/// Question span for a link: the linker's own mention when it is in
/// bounds and unclaimed; otherwise an exact label match; otherwise the
/// unclaimed window with the highest label Jaccard at or above the
/// partial-match threshold.
fn locate(iri: &Iri, kind: LinkKind, mention: Option<Span>, question: &[String], claimed: &[Span]) -> Option<Span> {
    if let Some(m) = mention {
        if m.within(question.len()) && !claimed.iter().any(|c| c.overlaps(&m)) {
            return Some(m);
        }
    }
    let label = label_tokens(iri, kind);
    if let Some(s) = find_exact(&label, question, claimed) {
        return Some(s);
    }
    let label_set: BTreeSet<&str> = label.iter().map(String::as_str).collect();
    let mut best: Option<(f64, Span)> = None;
    for len in 1..=(label.len() + 1).min(question.len()) {
        for start in 0..=question.len() - len {
            let w = Span::new(start, start + len);
            if claimed.iter().any(|c| c.overlaps(&w)) {
                continue;
            }
            let set: BTreeSet<&str> = question[w.start..w.end].iter().map(String::as_str).collect();
            let score = jaccard(&label_set, &set);
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, w));
            }
        }
    }
    best.filter(|(s, _)| *s >= PARTIAL_MATCH_THRESHOLD).map(|(_, w)| w)
}

struct Candidate {
    iri: Iri,
    kind: LinkKind,
    span: Option<Span>,
    in_sparql: bool,
}

fn token_iri(token: &str) -> Option<Iri> {
    if is_placeholder(token) || token.starts_with(['?', '$', '"', '\'']) {
        return None;
    }
    token.parse().ok()
}

fn build_pair(question: &[String], gold: &SparqlQuery, candidates: Vec<Candidate>, scenario: Scenario) -> MaskedPair {
    let sparql_iris: Vec<Option<Iri>> = gold.raw_tokens.iter().map(|t| token_iri(t)).collect();
    let first_in_sparql = |c: &Candidate| -> Option<usize> {
        if !c.in_sparql {
            return None;
        }
        sparql_iris
            .iter()
            .position(|t| t.as_ref().is_some_and(|i| *i == c.iri && LinkKind::of(i) == Some(c.kind)))
    };

    // (kind, sort key, candidate, sparql position)
    let mut placed: Vec<(LinkKind, (u8, usize), Candidate, Option<usize>)> = Vec::new();
    for c in candidates {
        let pos = first_in_sparql(&c);
        let key = match (c.span, pos) {
            (Some(s), _) => (0, s.start),
            (None, Some(p)) => (1, p),
            (None, None) => continue,
        };
        placed.push((c.kind, key, c, pos));
    }
    placed.sort_by_key(|(kind, key, _, _)| (*kind, *key));

    let mut table = BTreeMap::new();
    let mut question_marks: BTreeMap<usize, (usize, String)> = BTreeMap::new();
    let mut sparql_marks: Vec<(Iri, String)> = Vec::new();
    let mut counters = [0usize; 2];
    for (kind, _, c, pos) in placed {
        let n = &mut counters[kind as usize];
        if *n >= MAX_PLACEHOLDERS {
            continue;
        }
        let ph = format!("<{}{}>", kind.letter(), *n);
        *n += 1;
        if let Some(s) = c.span {
            question_marks.insert(s.start, (s.end, ph.clone()));
        }
        if pos.is_some() {
            sparql_marks.push((c.iri.clone(), ph.clone()));
        }
        table.insert(ph, MaskEntry { iri: c.iri, span: c.span });
    }

    let mut masked_question = Vec::with_capacity(question.len());
    let mut i = 0;
    while i < question.len() {
        if let Some((end, ph)) = question_marks.get(&i) {
            masked_question.push(ph.clone());
            i = *end;
        } else {
            masked_question.push(question[i].clone());
            i += 1;
        }
    }
    let masked_sparql = gold
        .raw_tokens
        .iter()
        .zip(&sparql_iris)
        .map(|(tok, iri)| {
            iri.as_ref()
                .and_then(|iri| sparql_marks.iter().find(|(m, _)| m == iri))
                .map_or_else(|| tok.clone(), |(_, ph)| ph.clone())
        })
        .collect();
    MaskedPair {
        masked_question,
        masked_sparql,
        mask_table: table,
        scenario,
    }
}

/// Scenario A: a perfect linker. Every gold entity and relation is masked
/// in the SPARQL; those that align are also masked in the question.
pub fn mask_scenario_a(question: &[String], gold: &SparqlQuery, emb: &EmbeddingTable) -> MaskedPair {
    let candidates = gold_linker(question, gold, emb)
        .items
        .into_iter()
        .map(|i| Candidate {
            iri: i.iri,
            kind: i.kind,
            span: i.span,
            in_sparql: true,
        })
        .collect();
    build_pair(question, gold, candidates, Scenario::A)
}

fn dedup_links(linker: &LinkerOutput) -> Vec<&LinkerItem> {
    let mut seen = BTreeSet::new();
    let mut out: Vec<&LinkerItem> = linker.items.iter().filter(|i| seen.insert((i.kind, &i.iri))).collect();
    out.sort_by_key(|i| i.kind);
    out
}

/// Scenario B: only gold terms the linker also found are masked.
pub fn mask_scenario_b(question: &[String], gold: &SparqlQuery, linker: &LinkerOutput) -> MaskedPair {
    let terms = extract_terms(gold);
    let links = dedup_links(linker);
    let gold_terms = terms
        .entities
        .iter()
        .map(|e| (LinkKind::Entity, e))
        .chain(terms.relations.iter().map(|r| (LinkKind::Relation, r)));
    let mut claimed = Vec::new();
    let mut candidates = Vec::new();
    for (kind, iri) in gold_terms {
        let Some(link) = links.iter().find(|l| l.kind == kind && l.iri == *iri) else {
            continue;
        };
        let span = locate(iri, kind, link.span, question, &claimed);
        claimed.extend(span);
        candidates.push(Candidate {
            iri: iri.clone(),
            kind,
            span,
            in_sparql: true,
        });
    }
    build_pair(question, gold, candidates, Scenario::B)
}

/// Scenario C: every linker item masks the question; a gold SPARQL term is
/// masked only when the linker produced exactly that IRI.
pub fn mask_scenario_c(question: &[String], gold: &SparqlQuery, linker: &LinkerOutput) -> MaskedPair {
    let terms = extract_terms(gold);
    let mut claimed = Vec::new();
    let mut candidates = Vec::new();
    for link in dedup_links(linker) {
        let span = locate(&link.iri, link.kind, link.span, question, &claimed);
        claimed.extend(span);
        let in_sparql = match link.kind {
            LinkKind::Entity => terms.entities.contains(&link.iri),
            LinkKind::Relation => terms.relations.contains(&link.iri),
        };
        candidates.push(Candidate {
            iri: link.iri.clone(),
            kind: link.kind,
            span,
            in_sparql,
        });
    }
    build_pair(question, gold, candidates, Scenario::C)
}

/// Replaces placeholders with their IRIs and joins tokens with spaces.
pub fn demask<S: AsRef<str>>(tokens: &[S], table: &BTreeMap<String, MaskEntry>) -> Result<String, NoiseError> {
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    for t in tokens {
        let t = t.as_ref();
        if is_placeholder(t) {
            let entry = table.get(t).ok_or_else(|| NoiseError::UnknownPlaceholder(t.to_string()))?;
            out.push(entry.iri.to_string());
        } else {
            out.push(t.to_string());
        }
    }
    Ok(out.join(" "))
}

/// Percentage of distinct eval IRIs per namespace also seen in train;
/// `None` when the eval split has no IRI of that namespace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub dbr: Option<f64>,
    pub dbp: Option<f64>,
    pub dbo: Option<f64>,
}

fn term_set(queries: &[SparqlQuery]) -> BTreeSet<Iri> {
    let mut set = BTreeSet::new();
    for q in queries {
        let t = extract_terms(q);
        set.extend(t.entities);
        set.extend(t.relations);
        set.extend(t.classes);
    }
    set
}

pub fn coverage_stats(train: &[SparqlQuery], eval: &[SparqlQuery]) -> CoverageStats {
    let train = term_set(train);
    let eval = term_set(eval);
    let pct = |prefix: Prefix| {
        let of: Vec<&Iri> = eval.iter().filter(|i| i.prefix == prefix).collect();
        if of.is_empty() {
            return None;
        }
        let seen = of.iter().filter(|i| train.contains(**i)).count();
        Some(100.0 * seen as f64 / of.len() as f64)
    };
    CoverageStats {
        dbr: pct(Prefix::Dbr),
        dbp: pct(Prefix::Dbp),
        dbo: pct(Prefix::Dbo),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Node, Triple};
    use crate::sparql::{parse_sparql, tokenize_sparql};
    use crate::text::tokenize_question;
    use alloc::vec;

    const SCARFACE: &str = "SELECT DISTINCT ?uri WHERE { dbr:Scarface dbo:alias ?uri }";

    fn scarface_emb() -> EmbeddingTable {
        let mut emb = EmbeddingTable::new(3);
        emb.insert("alias", vec![1.0, 0.0, 0.0]).unwrap();
        emb.insert("called", vec![0.9, 0.1, 0.0]).unwrap();
        emb.insert("who", vec![0.0, 1.0, 0.0]).unwrap();
        emb.insert("was", vec![0.0, 0.0, 1.0]).unwrap();
        emb
    }

    #[test]
    fn scarface_gold_linker() {
        let q = tokenize_question("Who was called Scarface?");
        let out = gold_linker(&q, &parse_sparql(SCARFACE).unwrap(), &scarface_emb());
        assert_eq!(
            out.items,
            vec![
                LinkerItem { span: Some(Span::new(3, 4)), iri: Iri::dbr("Scarface"), kind: LinkKind::Entity },
                LinkerItem { span: Some(Span::new(2, 3)), iri: Iri::dbo("alias"), kind: LinkKind::Relation },
            ]
        );
    }

    #[test]
    fn scarface_scenario_a_round_trip() {
        let q = tokenize_question("Who was called Scarface?");
        let gold = parse_sparql(SCARFACE).unwrap();
        let pair = mask_scenario_a(&q, &gold, &scarface_emb());
        assert_eq!(pair.masked_sparql.join(" "), "SELECT DISTINCT ?uri WHERE { <e0> <r0> ?uri }");
        assert_eq!(pair.masked_question, ["who", "was", "<r0>", "<e0>"]);
        assert_eq!(demask(&pair.masked_sparql, &pair.mask_table).unwrap(), SCARFACE);
    }

    #[test]
    fn no_terms_is_identity() {
        let q = tokenize_question("is anything true");
        let gold = parse_sparql("ASK WHERE { ?x ?p ?y }").unwrap();
        let pair = mask_scenario_a(&q, &gold, &EmbeddingTable::new(2));
        assert!(pair.mask_table.is_empty());
        assert_eq!(pair.masked_question, q);
        assert_eq!(pair.masked_sparql, gold.raw_tokens);
        assert_eq!(gold_linker(&q, &gold, &EmbeddingTable::new(2)).items, vec![]);
    }

    #[test]
    fn scenario_b_cases() {
        let q = tokenize_question("Who was called Scarface?");
        let gold = parse_sparql(SCARFACE).unwrap();
        let emb = scarface_emb();
        let full = gold_linker(&q, &gold, &emb);
        let b = mask_scenario_b(&q, &gold, &full);
        let a = mask_scenario_a(&q, &gold, &emb);
        assert_eq!((b.masked_question, b.masked_sparql, b.mask_table), (a.masked_question, a.masked_sparql, a.mask_table));

        let empty = mask_scenario_b(&q, &gold, &LinkerOutput::default());
        assert!(empty.mask_table.is_empty());
        assert_eq!(empty.masked_sparql, gold.raw_tokens);

        let no_rel = LinkerOutput { items: full.items[..1].to_vec() };
        let pair = mask_scenario_b(&q, &gold, &no_rel);
        assert_eq!(pair.masked_sparql.join(" "), "SELECT DISTINCT ?uri WHERE { <e0> dbo:alias ?uri }");
    }

    #[test]
    fn scenario_c_wrong_entity() {
        let q = tokenize_question("Who was called Scarface?");
        let gold = parse_sparql(SCARFACE).unwrap();
        let linker = LinkerOutput {
            items: vec![
                LinkerItem { span: Some(Span::new(3, 4)), iri: Iri::dbr("Scarface_(1983_film)"), kind: LinkKind::Entity },
                LinkerItem { span: Some(Span::new(2, 3)), iri: Iri::dbo("alias"), kind: LinkKind::Relation },
            ],
        };
        let pair = mask_scenario_c(&q, &gold, &linker);
        assert_eq!(pair.masked_question, ["who", "was", "<r0>", "<e0>"]);
        assert_eq!(pair.masked_sparql.join(" "), "SELECT DISTINCT ?uri WHERE { dbr:Scarface <r0> ?uri }");
        assert_eq!(pair.mask_table["<e0>"].iri, Iri::dbr("Scarface_(1983_film)"));

        let empty = mask_scenario_c(&q, &gold, &LinkerOutput::default());
        assert_eq!(empty.masked_question, q);
        assert_eq!(empty.masked_sparql, gold.raw_tokens);
    }

    #[test]
    fn partial_match_fallback() {
        let q = tokenize_question("where is austin college texas located");
        let gold = parse_sparql("SELECT ?x WHERE { dbr:Austin_College_Texas dbo:capital ?x }").unwrap();
        let linker = LinkerOutput {
            items: vec![LinkerItem { span: None, iri: Iri::dbr("Austin_College_Texas"), kind: LinkKind::Entity }],
        };
        let pair = mask_scenario_b(&q, &gold, &linker);
        assert_eq!(pair.mask_table["<e0>"].span, Some(Span::new(2, 5)));
        let linker = LinkerOutput {
            items: vec![LinkerItem { span: None, iri: Iri::dbr("Austin_College_Of_Texas"), kind: LinkKind::Entity }],
        };
        // {austin, college, texas} vs {austin, college, of, texas} = 0.75.
        let pair = mask_scenario_c(&q, &gold, &linker);
        assert_eq!(pair.mask_table["<e0>"].span, Some(Span::new(2, 5)));
    }

    #[test]
    fn demask_errors_and_identity() {
        let table = BTreeMap::new();
        assert_eq!(demask(&["ASK", "{", "}"], &table).unwrap(), "ASK { }");
        assert_eq!(demask(&["<e3>"], &table), Err(NoiseError::UnknownPlaceholder("<e3>".into())));
    }

    fn toy_kg() -> KnowledgeGraph {
        KnowledgeGraph::from_triples([
            Triple::new(Iri::dbr("A"), Iri::dbo("p"), Node::Iri(Iri::dbr("B"))),
            Triple::new(Iri::dbr("C"), Iri::dbp("q"), Node::Iri(Iri::dbr("D"))),
        ])
        .unwrap()
    }

    fn items(n: usize) -> LinkerOutput {
        LinkerOutput {
            items: (0..n)
                .map(|i| LinkerItem {
                    span: Some(Span::new(i % 5, i % 5 + 1)),
                    iri: if i % 2 == 0 { Iri::dbr("A") } else { Iri::dbo("p") },
                    kind: if i % 2 == 0 { LinkKind::Entity } else { LinkKind::Relation },
                })
                .collect(),
        }
    }

    #[test]
    fn simulate_identity_and_empty() {
        let kg = toy_kg();
        let gold = items(6);
        assert_eq!(simulate_linker(&gold, &LinkerNoiseConfig::perfect(3), &kg, 5, "q1").unwrap(), gold);
        let none = LinkerNoiseConfig { recall_entity: 0.0, recall_relation: 0.0, ..LinkerNoiseConfig::perfect(3) };
        assert!(simulate_linker(&gold, &none, &kg, 5, "q1").unwrap().items.is_empty());
        let bad = LinkerNoiseConfig { recall_entity: 1.5, ..LinkerNoiseConfig::perfect(3) };
        assert!(simulate_linker(&gold, &bad, &kg, 5, "q1").is_err());
    }

    #[test]
    fn simulate_recall_and_wrong_links() {
        let kg = toy_kg();
        let gold = items(10_000);
        let cfg = LinkerNoiseConfig { recall_entity: 0.6, recall_relation: 0.6, spurious_rate: 0.0, wrong_link_rate: 0.0, seed: 11 };
        let kept = simulate_linker(&gold, &cfg, &kg, 5, "bulk").unwrap().items.len() as f64 / 10_000.0;
        assert!((kept - 0.6).abs() <= 0.02, "kept {kept}");

        let cfg = LinkerNoiseConfig { wrong_link_rate: 1.0, ..LinkerNoiseConfig::perfect(5) };
        let out = simulate_linker(&items(20), &cfg, &kg, 5, "w").unwrap();
        for (o, g) in out.items.iter().zip(&items(20).items) {
            assert_ne!(o.iri, g.iri);
            assert_eq!(LinkKind::of(&o.iri), Some(o.kind));
        }
    }

    #[test]
    fn simulate_is_reproducible_and_spurious_in_bounds() {
        let kg = toy_kg();
        let cfg = LinkerNoiseConfig { recall_entity: 0.5, recall_relation: 0.5, spurious_rate: 2.0, wrong_link_rate: 0.3, seed: 9 };
        let a = simulate_linker(&items(8), &cfg, &kg, 4, "x").unwrap();
        let b = simulate_linker(&items(8), &cfg, &kg, 4, "x").unwrap();
        assert_eq!(a, b);
        let mut total = 0;
        for id in 0..200 {
            let out = simulate_linker(&LinkerOutput::default(), &cfg, &kg, 4, &format!("{id}")).unwrap();
            out.validate(4).unwrap();
            total += out.items.len();
        }
        let mean = total as f64 / 200.0;
        assert!((mean - 2.0).abs() < 0.3, "mean spurious {mean}");
    }

    #[test]
    fn coverage() {
        let q = |s: &str| parse_sparql(s).unwrap();
        let train = [q("SELECT ?x WHERE { dbr:A dbo:p ?x . ?x a dbo:C }")];
        let same = coverage_stats(&train, &train);
        assert_eq!((same.dbr, same.dbo, same.dbp), (Some(100.0), Some(100.0), None));
        let other = coverage_stats(&train, &[q("SELECT ?x WHERE { dbr:Z dbp:z ?x . ?x a dbo:Y }")]);
        assert_eq!((other.dbr, other.dbo, other.dbp), (Some(0.0), Some(0.0), Some(0.0)));
    }

    #[test]
    fn masked_tokens_reparse() {
        let gold = parse_sparql("SELECT DISTINCT ?uri WHERE { ?uri dbo:currency dbr:Aureus . ?uri a dbo:Country }").unwrap();
        let q = tokenize_question("Name the country with currency as Aureus?");
        let pair = mask_scenario_a(&q, &gold, &EmbeddingTable::new(2));
        // The class stays concrete; rdf:type is never a link.
        assert!(pair.masked_sparql.contains(&"dbo:Country".to_string()));
        let text = demask(&pair.masked_sparql, &pair.mask_table).unwrap();
        assert_eq!(tokenize_sparql(&text).unwrap(), gold.raw_tokens);
    }
}
