//! In-memory knowledge graph: entity set, relation set, fact set and the
//! per-entity relation indexes used by restricted inference and by the
//! SPARQL executor.
//!
//! Facts are `⟨subject, relation, object⟩` where the subject is a `dbr:`
//! entity, the relation a `dbo:`/`dbp:`/`rdf:` IRI and the object either an
//! IRI or an opaque literal. `rdf:type` facts stay in the fact set but feed
//! `classes_of` instead of the relation indexes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Namespace prefixes understood by the toolkit. Anything else is carried
/// opaquely in [`Prefix::Other`]; an empty `Other` prefix marks an absolute
/// IRI written as `<...>`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prefix {
    Dbr,
    Dbo,
    Dbp,
    Rdf,
    Other(String),
}

const NAMESPACES: &[(&str, &str)] = &[
    ("dbr", "http://dbpedia.org/resource/"),
    ("dbo", "http://dbpedia.org/ontology/"),
    ("dbp", "http://dbpedia.org/property/"),
    ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
    ("dct", "http://purl.org/dc/terms/"),
    ("dbc", "http://dbpedia.org/resource/Category:"),
];

impl Prefix {
    pub fn as_str(&self) -> &str {
        match self {
            Prefix::Dbr => "dbr",
            Prefix::Dbo => "dbo",
            Prefix::Dbp => "dbp",
            Prefix::Rdf => "rdf",
            Prefix::Other(p) => p,
        }
    }

    fn from_label(label: &str) -> Prefix {
        match label {
            "dbr" | "res" => Prefix::Dbr,
            "dbo" => Prefix::Dbo,
            "dbp" => Prefix::Dbp,
            "rdf" => Prefix::Rdf,
            other => Prefix::Other(other.to_string()),
        }
    }

    pub fn is_relation(&self) -> bool {
        matches!(self, Prefix::Dbo | Prefix::Dbp | Prefix::Rdf)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IriError {
    #[error("empty IRI")]
    Empty,
    #[error("IRI `{0}` has no prefix")]
    MissingPrefix(String),
    #[error("IRI `{0}` has an empty local name")]
    EmptyLocalName(String),
    #[error("IRI `{0}` contains whitespace")]
    Whitespace(String),
}

/// A prefixed IRI such as `dbr:Austin_College`. Case-sensitive.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Iri {
    pub prefix: Prefix,
    pub local_name: String,
}

impl Iri {
    pub fn new(prefix: Prefix, local_name: impl Into<String>) -> Self {
        let local_name = local_name.into();
        debug_assert!(!local_name.is_empty());
        Iri { prefix, local_name }
    }

    pub fn dbr(local: impl Into<String>) -> Self {
        Iri::new(Prefix::Dbr, local)
    }

    pub fn dbo(local: impl Into<String>) -> Self {
        Iri::new(Prefix::Dbo, local)
    }

    pub fn dbp(local: impl Into<String>) -> Self {
        Iri::new(Prefix::Dbp, local)
    }

    pub fn rdf_type() -> Self {
        Iri::new(Prefix::Rdf, "type")
    }

    pub fn is_rdf_type(&self) -> bool {
        self.prefix == Prefix::Rdf && self.local_name == "type"
    }

    pub fn is_entity(&self) -> bool {
        self.prefix == Prefix::Dbr
    }

    /// The same relation under the other DBpedia relation namespace
    /// (`dbp:x` ↔ `dbo:x`), if there is one.
    pub fn relation_twin(&self) -> Option<Iri> {
        match self.prefix {
            Prefix::Dbo => Some(Iri::dbp(self.local_name.clone())),
            Prefix::Dbp => Some(Iri::dbo(self.local_name.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.prefix {
            Prefix::Other(p) if p.is_empty() => write!(f, "<{}>", self.local_name),
            p => write!(f, "{}:{}", p.as_str(), self.local_name),
        }
    }
}

impl FromStr for Iri {
    type Err = IriError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(IriError::Empty);
        }
        if s.chars().any(char::is_whitespace) {
            return Err(IriError::Whitespace(s.to_string()));
        }
        if let Some(inner) = s.strip_prefix('<').and_then(|r| r.strip_suffix('>')) {
            if inner.is_empty() {
                return Err(IriError::Empty);
            }
            // Longest namespace first so `dbc` wins over `dbr`.
            let mut best: Option<(&str, &str)> = None;
            for (label, ns) in NAMESPACES {
                if inner.starts_with(ns) && best.is_none_or(|(_, b)| ns.len() > b.len()) {
                    best = Some((label, ns));
                }
            }
            if let Some((label, ns)) = best {
                let local = &inner[ns.len()..];
                if !local.is_empty() {
                    return Ok(Iri::new(Prefix::from_label(label), local));
                }
            }
            return Ok(Iri::new(Prefix::Other(String::new()), inner));
        }
        let (prefix, local) = s
            .split_once(':')
            .ok_or_else(|| IriError::MissingPrefix(s.to_string()))?;
        if prefix.is_empty() {
            return Err(IriError::MissingPrefix(s.to_string()));
        }
        if local.is_empty() {
            return Err(IriError::EmptyLocalName(s.to_string()));
        }
        Ok(Iri::new(Prefix::from_label(prefix), local))
    }
}

impl Serialize for Iri {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Iri {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Object slot of a fact: an IRI or an opaque literal. Literals keep only
/// their lexical form; language tags and datatypes are dropped on parse.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Iri(Iri),
    Literal(String),
}

impl Node {
    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Node::Iri(i) => Some(i),
            Node::Literal(_) => None,
        }
    }

    /// Answer-set rendering: IRIs in prefixed form, literals as their
    /// lexical value.
    pub fn answer_string(&self) -> String {
        match self {
            Node::Iri(i) => i.to_string(),
            Node::Literal(l) => l.clone(),
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Iri(i) => write!(f, "{i}"),
            Node::Literal(l) => {
                f.write_str("\"")?;
                for c in l.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LiteralError {
    #[error("literal is not quoted")]
    NotQuoted,
    #[error("unterminated literal")]
    Unterminated,
    #[error("unexpected text after literal: `{0}`")]
    TrailingText(String),
}

/// Parses `"text"`, `'text'`, `"text"@en` or `"1"^^xsd:int` into its lexical
/// value.
pub fn parse_literal(s: &str) -> Result<String, LiteralError> {
    let mut chars = s.chars();
    let quote = match chars.next() {
        Some(q @ ('"' | '\'')) => q,
        _ => return Err(LiteralError::NotQuoted),
    };
    let mut value = String::new();
    let mut rest = None;
    let mut escaped = false;
    for (i, c) in s.char_indices().skip(1) {
        if escaped {
            value.push(c);
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == quote {
            rest = Some(&s[i + c.len_utf8()..]);
            break;
        } else {
            value.push(c);
        }
    }
    let rest = rest.ok_or(LiteralError::Unterminated)?;
    let suffix_ok = rest.is_empty()
        || (rest.starts_with('@') && rest.len() > 1)
        || (rest.starts_with("^^") && rest.len() > 2);
    if !suffix_ok {
        return Err(LiteralError::TrailingText(rest.to_string()));
    }
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: Iri,
    pub relation: Iri,
    pub object: Node,
}

impl Triple {
    pub fn new(subject: Iri, relation: Iri, object: Node) -> Self {
        Triple { subject, relation, object }
    }
}

/// Side of a triple an entity occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Position {
    Subject,
    Object,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KgError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("knowledge graph contains no triples")]
    EmptyGraph,
    #[error("unknown entity {0}")]
    UnknownEntity(Iri),
}

/// `G = (E, R, F)` plus derived indexes. Immutable once built.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeGraph {
    entities: BTreeSet<Iri>,
    relations: BTreeSet<Iri>,
    facts: Vec<Triple>,
    rel_by_subject: BTreeMap<Iri, BTreeSet<Iri>>,
    rel_by_object: BTreeMap<Iri, BTreeSet<Iri>>,
    classes_of: BTreeMap<Iri, BTreeSet<Iri>>,
    ontology_classes: BTreeSet<Iri>,
    // Fact positions in `facts`, for pattern matching.
    facts_by_subject: BTreeMap<Iri, Vec<usize>>,
    facts_by_object: BTreeMap<Node, Vec<usize>>,
    facts_by_relation: BTreeMap<Iri, Vec<usize>>,
}

static EMPTY: BTreeSet<Iri> = BTreeSet::new();

impl KnowledgeGraph {
    /// Builds the graph from triples, deduplicating. Fails on zero triples.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Result<Self, KgError> {
        let facts: BTreeSet<Triple> = triples.into_iter().collect();
        if facts.is_empty() {
            return Err(KgError::EmptyGraph);
        }
        let mut kg = KnowledgeGraph {
            facts: facts.into_iter().collect(),
            ..Default::default()
        };
        for (idx, t) in kg.facts.iter().enumerate() {
            kg.entities.insert(t.subject.clone());
            kg.relations.insert(t.relation.clone());
            kg.facts_by_subject.entry(t.subject.clone()).or_default().push(idx);
            kg.facts_by_object.entry(t.object.clone()).or_default().push(idx);
            kg.facts_by_relation.entry(t.relation.clone()).or_default().push(idx);
            if t.relation.is_rdf_type() {
                if let Node::Iri(class) = &t.object {
                    kg.classes_of.entry(t.subject.clone()).or_default().insert(class.clone());
                    kg.ontology_classes.insert(class.clone());
                }
                continue;
            }
            kg.rel_by_subject
                .entry(t.subject.clone())
                .or_default()
                .insert(t.relation.clone());
            if let Node::Iri(object) = &t.object {
                kg.entities.insert(object.clone());
                kg.rel_by_object
                    .entry(object.clone())
                    .or_default()
                    .insert(t.relation.clone());
            }
        }
        Ok(kg)
    }

    /// Parses the tab-separated triple format: three fields per line, the
    /// third may be a quoted literal; blank lines and `#` comments skipped.
    pub fn from_tsv(text: &str) -> Result<Self, KgError> {
        let mut triples = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            triples.push(parse_tsv_line(trimmed).map_err(|reason| KgError::Parse { line, reason })?);
        }
        Self::from_triples(triples)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.facts {
            out.push_str(&format!("{}\t{}\t{}\n", t.subject, t.relation, t.object));
        }
        out
    }

    pub fn entities(&self) -> &BTreeSet<Iri> {
        &self.entities
    }

    pub fn relations(&self) -> &BTreeSet<Iri> {
        &self.relations
    }

    /// Facts in sorted order.
    pub fn facts(&self) -> &[Triple] {
        &self.facts
    }

    pub fn ontology_classes(&self) -> &BTreeSet<Iri> {
        &self.ontology_classes
    }

    pub fn classes_of(&self, entity: &Iri) -> &BTreeSet<Iri> {
        self.classes_of.get(entity).unwrap_or(&EMPTY)
    }

    pub fn contains_entity(&self, entity: &Iri) -> bool {
        self.entities.contains(entity)
    }

    /// Relations `r` with `⟨entity, r, ?x⟩` (subject) or `⟨?x, r, entity⟩`
    /// (object) in the graph, `rdf:type` excluded.
    pub fn valid_relations(&self, entity: &Iri, position: Position) -> Result<&BTreeSet<Iri>, KgError> {
        if !self.entities.contains(entity) {
            return Err(KgError::UnknownEntity(entity.clone()));
        }
        let index = match position {
            Position::Subject => &self.rel_by_subject,
            Position::Object => &self.rel_by_object,
        };
        Ok(index.get(entity).unwrap_or(&EMPTY))
    }

    pub fn has_triple(&self, subject: &Iri, relation: &Iri, object: &Node) -> bool {
        self.facts_by_subject.get(subject).is_some_and(|idxs| {
            idxs.iter().any(|&i| {
                let t = &self.facts[i];
                &t.relation == relation && &t.object == object
            })
        })
    }

    pub(crate) fn fact_ids_with_subject(&self, subject: &Iri) -> &[usize] {
        self.facts_by_subject.get(subject).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn fact_ids_with_object(&self, object: &Node) -> &[usize] {
        self.facts_by_object.get(object).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn fact_ids_with_relation(&self, relation: &Iri) -> &[usize] {
        self.facts_by_relation.get(relation).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn parse_tsv_line(line: &str) -> Result<Triple, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated fields, found {}", fields.len()));
    }
    let subject: Iri = fields[0].trim().parse().map_err(|e: IriError| e.to_string())?;
    let relation: Iri = fields[1].trim().parse().map_err(|e: IriError| e.to_string())?;
    let raw_object = fields[2].trim();
    let object = if raw_object.starts_with('"') || raw_object.starts_with('\'') {
        Node::Literal(parse_literal(raw_object).map_err(|e| e.to_string())?)
    } else {
        Node::Iri(raw_object.parse().map_err(|e: IriError| e.to_string())?)
    };
    if subject.prefix != Prefix::Dbr {
        return Err(format!("subject {subject} is not a dbr: entity"));
    }
    if !relation.prefix.is_relation() {
        return Err(format!("relation {relation} must use dbo:, dbp: or rdf:"));
    }
    Ok(Triple::new(subject, relation, object))
}
