use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{QueryForm, SparqlQuery, Term, TriplePattern};
use crate::kg::{KnowledgeGraph, Node, Triple};

/// Variable name (with `?`) → bound value. Predicate variables bind to
/// `Node::Iri`.
pub type Binding = BTreeMap<String, Node>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnswerSet {
    Values(BTreeSet<Node>),
    Count(usize),
    Boolean(bool),
}

impl AnswerSet {
    /// String form used by the metrics: IRIs prefixed, literals lexical,
    /// counts as decimal integers, booleans as `true`/`false`.
    pub fn to_strings(&self) -> BTreeSet<String> {
        match self {
            AnswerSet::Values(v) => v.iter().map(Node::answer_string).collect(),
            AnswerSet::Count(n) => core::iter::once(n.to_string()).collect(),
            AnswerSet::Boolean(b) => core::iter::once(b.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("query uses unsupported features: {0:?}")]
    UnsupportedFeature(Vec<String>),
    #[error("projected variable {0} does not occur in any pattern")]
    UnboundProjection(String),
}

/// Runs a query from the executable fragment against the graph.
pub fn execute(query: &SparqlQuery, kg: &KnowledgeGraph) -> Result<AnswerSet, ExecError> {
    if !query.unsupported_features.is_empty() {
        return Err(ExecError::UnsupportedFeature(query.unsupported_features.clone()));
    }
    let vars = query.variables();
    if let Some(missing) = query.projection.iter().find(|v| !vars.contains(&v.as_str())) {
        return Err(ExecError::UnboundProjection(missing.clone()));
    }
    let rows = solutions(&query.patterns, kg);
    Ok(match query.form {
        QueryForm::Ask => AnswerSet::Boolean(!rows.is_empty()),
        QueryForm::SelectCount => match query.projection.first() {
            Some(var) if query.distinct => {
                let distinct: BTreeSet<&Node> = rows.iter().filter_map(|b| b.get(var)).collect();
                AnswerSet::Count(distinct.len())
            }
            _ => AnswerSet::Count(rows.len()),
        },
        QueryForm::Select => {
            let mut values = BTreeSet::new();
            for row in &rows {
                for var in &query.projection {
                    if let Some(v) = row.get(var) {
                        values.insert(v.clone());
                    }
                }
            }
            AnswerSet::Values(values)
        }
    })
}

/// All distinct variable bindings satisfying every pattern, in sorted
/// order. Unresolved placeholders never match.
pub fn solutions(patterns: &[TriplePattern], kg: &KnowledgeGraph) -> Vec<Binding> {
    let mut out = BTreeSet::new();
    let mut remaining: Vec<usize> = (0..patterns.len()).collect();
    search(patterns, kg, &mut remaining, &Binding::new(), &mut out);
    out.into_iter().collect()
}

fn search(
    patterns: &[TriplePattern],
    kg: &KnowledgeGraph,
    remaining: &mut Vec<usize>,
    binding: &Binding,
    out: &mut BTreeSet<Binding>,
) {
    if remaining.is_empty() {
        out.insert(binding.clone());
        return;
    }
    // Most constrained pattern first; ties go to the earliest.
    let (slot, _) = remaining
        .iter()
        .enumerate()
        .max_by_key(|(i, &p)| (boundness(&patterns[p], binding), usize::MAX - i))
        .expect("non-empty");
    let pid = remaining.remove(slot);
    let pattern = &patterns[pid];

    let subject = resolve(&pattern.subject, binding);
    let relation = resolve(&pattern.relation, binding);
    let object = resolve(&pattern.object, binding);
    if [&subject, &relation, &object].iter().any(|r| matches!(r, Resolved::Never)) {
        remaining.insert(slot, pid);
        return;
    }
    let all: Vec<usize>;
    let candidates: &[usize] = match (&subject, &object, &relation) {
        (Resolved::Value(Node::Iri(s)), _, _) => kg.fact_ids_with_subject(s),
        (_, Resolved::Value(o), _) => kg.fact_ids_with_object(o),
        (_, _, Resolved::Value(Node::Iri(r))) => kg.fact_ids_with_relation(r),
        (Resolved::Value(Node::Literal(_)), _, _) | (_, _, Resolved::Value(Node::Literal(_))) => &[],
        _ => {
            all = (0..kg.facts().len()).collect();
            &all
        }
    };
    for &fid in candidates {
        let fact = &kg.facts()[fid];
        if let Some(next) = unify(pattern, fact, binding) {
            search(patterns, kg, remaining, &next, out);
        }
    }
    remaining.insert(slot, pid);
}

enum Resolved {
    Value(Node),
    Free,
    Never,
}

fn resolve(term: &Term, binding: &Binding) -> Resolved {
    match term {
        Term::Variable(v) => binding.get(v).cloned().map_or(Resolved::Free, Resolved::Value),
        Term::Entity(i) | Term::Relation(i) | Term::Class(i) | Term::Other(i) => Resolved::Value(Node::Iri(i.clone())),
        Term::Literal(l) => Resolved::Value(Node::Literal(l.clone())),
        Term::Placeholder(_) => Resolved::Never,
    }
}

fn boundness(p: &TriplePattern, binding: &Binding) -> u8 {
    let bound = |t: &Term| !matches!(resolve(t, binding), Resolved::Free);
    (bound(&p.subject) as u8) * 4 + (bound(&p.object) as u8) * 2 + bound(&p.relation) as u8
}

fn unify(pattern: &TriplePattern, fact: &Triple, binding: &Binding) -> Option<Binding> {
    let mut next = binding.clone();
    let slots = [
        (&pattern.subject, Node::Iri(fact.subject.clone())),
        (&pattern.relation, Node::Iri(fact.relation.clone())),
        (&pattern.object, fact.object.clone()),
    ];
    for (term, value) in slots {
        match resolve(term, &next) {
            Resolved::Never => return None,
            Resolved::Value(v) if v != value => return None,
            Resolved::Value(_) => {}
            Resolved::Free => {
                if let Term::Variable(name) = term {
                    next.insert(name.clone(), value);
                }
            }
        }
    }
    Some(next)
}
