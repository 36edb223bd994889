//! Brute-force reference implementations and generators shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use silhouette_core::kg::{Iri, KnowledgeGraph, Node, Triple};
use silhouette_core::sparql::{QueryForm, SparqlQuery, Term, TriplePattern};

type Row = BTreeMap<String, Node>;

fn bind(row: &mut Row, term: &Term, value: Node) -> bool {
    match term {
        Term::Variable(v) => match row.get(v) {
            Some(old) => *old == value,
            None => {
                row.insert(v.clone(), value);
                true
            }
        },
        Term::Entity(i) | Term::Relation(i) | Term::Class(i) | Term::Other(i) => value == Node::Iri(i.clone()),
        Term::Literal(l) => value == Node::Literal(l.clone()),
        Term::Placeholder(_) => false,
    }
}

fn matches(row: &Row, p: &TriplePattern, f: &Triple) -> Option<Row> {
    let mut next = row.clone();
    let ok = bind(&mut next, &p.subject, Node::Iri(f.subject.clone()))
        && bind(&mut next, &p.relation, Node::Iri(f.relation.clone()))
        && bind(&mut next, &p.object, f.object.clone());
    ok.then_some(next)
}

/// Every binding of every pattern, joined one pattern at a time by scanning
/// all facts. No indexes, no reordering.
pub fn nested_loop_rows(patterns: &[TriplePattern], kg: &KnowledgeGraph) -> BTreeSet<Row> {
    let mut rows = vec![Row::new()];
    for p in patterns {
        let mut next = Vec::new();
        for row in &rows {
            for f in kg.facts() {
                if let Some(r) = matches(row, p, f) {
                    next.push(r);
                }
            }
        }
        rows = next;
    }
    rows.into_iter().collect()
}

/// Answer strings the executor should produce for `q`.
pub fn nested_loop_answers(q: &SparqlQuery, kg: &KnowledgeGraph) -> BTreeSet<String> {
    let rows = nested_loop_rows(&q.patterns, kg);
    let render = |n: &Node| match n {
        Node::Iri(i) => i.to_string(),
        Node::Literal(l) => l.clone(),
    };
    match q.form {
        QueryForm::Ask => [(!rows.is_empty()).to_string()].into(),
        QueryForm::SelectCount => {
            let n = match (q.distinct, q.projection.first()) {
                (true, Some(v)) => rows.iter().filter_map(|r| r.get(v)).collect::<BTreeSet<_>>().len(),
                _ => rows.len(),
            };
            [n.to_string()].into()
        }
        QueryForm::Select => rows.iter().flat_map(|r| q.projection.iter().filter_map(|v| r.get(v)).map(render)).collect(),
    }
}

const LOCALS: &[&str] = &["Scarface", "Al_Capone", "Paris", "France", "Tom_Hanks", "Apollo_11", "Rome", "X"];
const RELS: &[&str] = &["alias", "capital", "director", "birthPlace", "deathPlace", "currency", "starring"];
const CLASSES: &[&str] = &["Film", "Country", "Person", "City"];
const LITERALS: &[&str] = &["Al Capone", "1984", "say \"hi\"", "back\\slash", "é", ""];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

fn var<R: Rng>(rng: &mut R) -> Term {
    Term::Variable(["?uri", "?x", "?y"][rng.random_range(0..3)].to_string())
}

/// A random query inside the executable fragment whose projection only
/// names variables that occur in its patterns.
pub fn random_query<R: Rng>(rng: &mut R) -> SparqlQuery {
    let n = rng.random_range(0..4);
    let mut patterns = Vec::new();
    for _ in 0..n {
        let subject = match rng.random_range(0..3) {
            0 => Term::Entity(Iri::dbr(pick(rng, LOCALS))),
            1 => Term::Placeholder(format!("<e{}>", rng.random_range(0..3))),
            _ => var(rng),
        };
        let (relation, object) = match rng.random_range(0..5) {
            0 => (Term::Relation(Iri::rdf_type()), Term::Class(Iri::dbo(pick(rng, CLASSES)))),
            1 => (Term::Placeholder(format!("<r{}>", rng.random_range(0..3))), var(rng)),
            2 => (var(rng), Term::Literal(pick(rng, LITERALS).to_string())),
            _ => {
                let rel = if rng.random_bool(0.7) { Iri::dbo(pick(rng, RELS)) } else { Iri::dbp(pick(rng, RELS)) };
                let obj = if rng.random_bool(0.5) { var(rng) } else { Term::Entity(Iri::dbr(pick(rng, LOCALS))) };
                (Term::Relation(rel), obj)
            }
        };
        patterns.push(TriplePattern::new(subject, relation, object));
    }
    let mut q = SparqlQuery {
        form: QueryForm::Ask,
        distinct: false,
        projection: Vec::new(),
        patterns,
        unsupported_features: Vec::new(),
        raw_tokens: Vec::new(),
    };
    let vars: Vec<String> = q.variables().into_iter().map(String::from).collect();
    if !vars.is_empty() {
        match rng.random_range(0..3) {
            0 => {}
            1 => {
                q.form = QueryForm::SelectCount;
                q.distinct = rng.random_bool(0.5);
                q.projection = vec![vars[rng.random_range(0..vars.len())].clone()];
            }
            _ => {
                q.form = QueryForm::Select;
                q.distinct = rng.random_bool(0.7);
                q.projection = vars.into_iter().filter(|_| rng.random_bool(0.6)).collect();
                if q.projection.is_empty() {
                    q.projection.push(q.variables()[0].to_string());
                }
            }
        }
    }
    q
}
