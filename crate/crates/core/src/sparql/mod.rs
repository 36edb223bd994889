//! The SPARQL fragment the pipeline reads and emits.
//!
//! Executable fragment: `SELECT`, `SELECT DISTINCT`, `SELECT COUNT` and
//! `ASK` over conjunctive triple patterns (with `a` as `rdf:type`).
//! `GROUP BY`, `HAVING`, `UNION`, `FILTER`, `OPTIONAL`, `ORDER BY`,
//! `LIMIT`, `OFFSET` and `dct:`/`dbc:` terms parse but are recorded in
//! [`SparqlQuery::unsupported_features`] and refused by [`execute`].

mod exec;
mod lexer;
mod parser;

pub use exec::{execute, solutions, AnswerSet, Binding, ExecError};
pub use lexer::{tokenize_sparql, LexError};
pub use parser::{parse_query, parse_sparql, ParseError};

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::kg::Iri;

/// One slot of a triple pattern.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    /// `?name`, stored with its leading `?`.
    Variable(String),
    /// `dbr:` resource.
    Entity(Iri),
    /// Predicate-position `dbo:`/`dbp:`/`rdf:` IRI.
    Relation(Iri),
    /// `dbo:` IRI outside predicate position (object of `rdf:type`).
    Class(Iri),
    Literal(String),
    /// Unresolved mask token such as `<e0>` or `<r1>`.
    Placeholder(String),
    /// Any IRI outside the DBpedia namespaces above.
    Other(Iri),
}

impl Term {
    pub fn is_variable(&self) -> bool {
        matches!(self, Term::Variable(_))
    }

    pub fn iri(&self) -> Option<&Iri> {
        match self {
            Term::Entity(i) | Term::Relation(i) | Term::Class(i) | Term::Other(i) => Some(i),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Variable(v) | Term::Placeholder(v) => f.write_str(v),
            Term::Relation(i) if i.is_rdf_type() => f.write_str("a"),
            Term::Entity(i) | Term::Relation(i) | Term::Class(i) | Term::Other(i) => write!(f, "{i}"),
            Term::Literal(l) => write!(f, "{}", crate::kg::Node::Literal(l.clone())),
        }
    }
}

/// Recognises the mask vocabulary: `<e0>`, `<e1>`, …, `<r0>`, ….
pub fn is_placeholder(token: &str) -> bool {
    let Some(inner) = token.strip_prefix('<').and_then(|t| t.strip_suffix('>')) else {
        return false;
    };
    let mut chars = inner.chars();
    matches!(chars.next(), Some('e' | 'r')) && !inner[1..].is_empty() && inner[1..].bytes().all(|b| b.is_ascii_digit())
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriplePattern {
    pub subject: Term,
    pub relation: Term,
    pub object: Term,
}

impl TriplePattern {
    pub fn new(subject: Term, relation: Term, object: Term) -> Self {
        TriplePattern { subject, relation, object }
    }

    pub fn is_type_pattern(&self) -> bool {
        matches!(&self.relation, Term::Relation(r) if r.is_rdf_type())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QueryForm {
    Select,
    SelectCount,
    Ask,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparqlQuery {
    pub form: QueryForm,
    pub distinct: bool,
    pub projection: Vec<String>,
    pub patterns: Vec<TriplePattern>,
    pub unsupported_features: Vec<String>,
    pub raw_tokens: Vec<String>,
}

impl SparqlQuery {
    /// Equality ignoring `raw_tokens`.
    pub fn same_structure(&self, other: &SparqlQuery) -> bool {
        self.form == other.form
            && self.distinct == other.distinct
            && self.projection == other.projection
            && self.patterns == other.patterns
            && self.unsupported_features == other.unsupported_features
    }

    pub fn is_executable(&self) -> bool {
        self.unsupported_features.is_empty()
    }

    /// Canonical text. Queries outside the executable fragment are
    /// rendered from their original tokens.
    pub fn serialize(&self) -> String {
        if !self.is_executable() {
            return self.raw_tokens.join(" ");
        }
        let mut out = String::new();
        match self.form {
            QueryForm::Ask => out.push_str("ASK WHERE {"),
            QueryForm::Select | QueryForm::SelectCount => {
                out.push_str("SELECT");
                if self.distinct {
                    out.push_str(" DISTINCT");
                }
                if self.form == QueryForm::SelectCount {
                    out.push_str(" COUNT(");
                    out.push_str(self.projection.first().map_or("*", String::as_str));
                    out.push(')');
                } else {
                    for v in &self.projection {
                        out.push(' ');
                        out.push_str(v);
                    }
                }
                out.push_str(" WHERE {");
            }
        }
        for (i, p) in self.patterns.iter().enumerate() {
            if i > 0 {
                out.push_str(" .");
            }
            out.push(' ');
            out.push_str(&p.subject.to_string());
            out.push(' ');
            out.push_str(&p.relation.to_string());
            out.push(' ');
            out.push_str(&p.object.to_string());
        }
        out.push_str(" }");
        out
    }

    pub fn variables(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for p in &self.patterns {
            for t in [&p.subject, &p.relation, &p.object] {
                if let Term::Variable(v) = t {
                    if !seen.contains(&v.as_str()) {
                        seen.push(v);
                    }
                }
            }
        }
        seen
    }
}

/// Gold terms of a query, each list deduplicated in order of first
/// appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueryTerms {
    pub entities: Vec<Iri>,
    pub relations: Vec<Iri>,
    pub classes: Vec<Iri>,
}

impl QueryTerms {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty() && self.classes.is_empty()
    }
}

/// Entities (`dbr:`), relations (`dbo:`/`dbp:` in predicate position,
/// `rdf:type` excluded) and ontology classes (objects of `rdf:type`).
pub fn extract_terms(query: &SparqlQuery) -> QueryTerms {
    fn push(list: &mut Vec<Iri>, iri: &Iri) {
        if !list.contains(iri) {
            list.push(iri.clone());
        }
    }
    let mut terms = QueryTerms::default();
    for p in &query.patterns {
        for t in [&p.subject, &p.object] {
            if let Term::Entity(e) = t {
                push(&mut terms.entities, e);
            }
        }
        if let Term::Relation(r) = &p.relation {
            if !r.is_rdf_type() {
                push(&mut terms.relations, r);
            }
        }
        if p.is_type_pattern() {
            if let Term::Class(c) = &p.object {
                push(&mut terms.classes, c);
            }
        }
    }
    terms
}

pub(crate) fn keyword_eq(token: &str, kw: &str) -> bool {
    token.eq_ignore_ascii_case(kw)
}

pub(crate) fn feature(list: &mut Vec<String>, name: &str) {
    if !list.iter().any(|f| f == name) {
        list.push(name.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const SCARFACE: &str = "SELECT DISTINCT ?uri WHERE { dbr:Scarface dbo:alias ?uri }";

    #[test]
    fn scarface_parse_and_terms() {
        let q = parse_sparql(SCARFACE).unwrap();
        assert_eq!(q.form, QueryForm::Select);
        assert!(q.distinct);
        assert_eq!(q.patterns.len(), 1);
        let t = extract_terms(&q);
        assert_eq!(t.entities, vec![Iri::dbr("Scarface")]);
        assert_eq!(t.relations, vec![Iri::dbo("alias")]);
        assert!(t.classes.is_empty());
        assert_eq!(q.serialize(), SCARFACE);
    }

    #[test]
    fn type_pattern_classes() {
        let q = parse_sparql("SELECT DISTINCT ?uri WHERE { ?uri dbo:currency dbr:Aureus . ?uri a dbo:Country }").unwrap();
        let t = extract_terms(&q);
        assert_eq!(t.classes, vec![Iri::dbo("Country")]);
        assert_eq!(t.relations, vec![Iri::dbo("currency")]);
    }

    #[test]
    fn empty_patterns_have_no_terms() {
        let q = parse_sparql("ASK WHERE { }").unwrap();
        assert!(extract_terms(&q).is_empty());
        let again = parse_sparql(&q.serialize()).unwrap();
        assert!(again.same_structure(&q));
    }

    #[test]
    fn placeholder_recognition() {
        assert!(is_placeholder("<e0>"));
        assert!(is_placeholder("<r12>"));
        assert!(!is_placeholder("<x0>"));
        assert!(!is_placeholder("<e>"));
        assert!(!is_placeholder("<http://e.org/>"));
    }
}
