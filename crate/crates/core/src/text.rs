//! Word embeddings, token-set similarity and alignment of KG terms to
//! question mentions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kg::Iri;

/// Minimum cosine for the embedding fallback of entity alignment.
pub const ENTITY_FALLBACK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Token → vector table. Lookups are case-folded; unknown tokens map to
/// the zero vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.vectors.insert(token.to_lowercase(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        self.get(token).map_or_else(|| vec![0.0; self.dim], <[f64]>::to_vec)
    }

    /// Mean of the token vectors (OOV tokens contribute zeros).
    pub fn mean<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        if tokens.is_empty() {
            return acc;
        }
        for t in tokens {
            if let Some(v) = self.get(t.as_ref()) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
        }
        let n = tokens.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Parses the text format: a `<vocab_size> <dim>` header, then one
    /// token followed by `dim` reals per line.
    pub fn from_text(text: &str) -> Result<Self, EmbeddingError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(EmbeddingError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().ok();
        let (Some(count), Some(dim)) = (
            head.first().and_then(|s| parse_usize(s)),
            head.get(1).and_then(|s| parse_usize(s)),
        ) else {
            return Err(EmbeddingError::Parse {
                line: 1,
                reason: "header must be `<vocab_size> <dim>`".into(),
            });
        };
        if dim == 0 || head.len() != 2 {
            return Err(EmbeddingError::Parse {
                line: 1,
                reason: "header must be `<vocab_size> <dim>` with dim > 0".into(),
            });
        }
        let mut table = EmbeddingTable::new(dim);
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line");
            let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| EmbeddingError::Parse {
                line: i + 1,
                reason: format!("{e}"),
            })?;
            if values.len() != dim {
                return Err(EmbeddingError::Parse {
                    line: i + 1,
                    reason: format!("expected {dim} components, found {}", values.len()),
                });
            }
            table.insert(token, values)?;
        }
        if table.len() != count {
            return Err(EmbeddingError::Parse {
                line: 1,
                reason: format!("header announces {count} vectors, file has {}", table.len()),
            });
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.vectors.len(), self.dim);
        for (token, v) in &self.vectors {
            out.push_str(token);
            for x in v {
                out.push_str(&format!(" {x}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `u·v / (|u||v|)`, or 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = libm::sqrt(u.iter().map(|a| a * a).sum());
    let nv = libm::sqrt(v.iter().map(|a| a * a).sum());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// `|a ∩ b| / |a ∪ b|`, defined as 1 for two empty sets.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn normalize_token(raw: &str) -> Option<String> {
    let t = raw
        .trim_matches(|c: char| matches!(c, '?' | '!' | '.' | ',' | ';' | ':' | '"' | '\'' | '(' | ')'))
        .to_lowercase();
    (!t.is_empty()).then_some(t)
}

/// Lowercase, whitespace split, terminal punctuation stripped.
pub fn tokenize_question(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(normalize_token).collect()
}

/// Surface label of an entity IRI: underscores become spaces, then the
/// question tokenizer applies.
pub fn entity_label_tokens(iri: &Iri) -> Vec<String> {
    tokenize_question(&iri.local_name.replace('_', " "))
}

/// Local name split on `_` and camelCase boundaries, lowercased:
/// `dbo:placeOfDeath` → `[place, of, death]`.
pub fn iri_label_tokens(iri: &Iri) -> Vec<String> {
    let mut out = Vec::new();
    for part in iri.local_name.split('_') {
        let chars: Vec<char> = part.chars().collect();
        let mut word = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let boundary = i > 0
                && c.is_uppercase()
                && (chars[i - 1].is_lowercase()
                    || chars[i - 1].is_ascii_digit()
                    || (chars[i - 1].is_uppercase() && chars.get(i + 1).is_some_and(|n| n.is_lowercase())));
            if boundary && !word.is_empty() {
                out.extend(normalize_token(&word));
                word.clear();
            }
            word.push(c);
        }
        out.extend(normalize_token(&word));
    }
    out
}

/// Half-open token range `[start, end)` on the tokenized question.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn within(&self, len: usize) -> bool {
        self.start < self.end && self.end <= len
    }
}

fn free(span: &Span, claimed: &[Span]) -> bool {
    !claimed.iter().any(|c| c.overlaps(span))
}

/// Aligns an entity to the question. Exact label match first (earliest,
/// not overlapping `claimed`); otherwise the label-length window whose
/// averaged embedding is closest in cosine to the averaged label
/// embedding, if that cosine reaches [`ENTITY_FALLBACK_THRESHOLD`].
pub fn align_entity(entity: &Iri, question: &[String], emb: &EmbeddingTable, claimed: &[Span]) -> Option<Span> {
    let label = entity_label_tokens(entity);
    let n = label.len();
    if n == 0 || n > question.len() {
        return None;
    }
    let windows = || (0..=question.len() - n).map(|s| Span::new(s, s + n)).filter(|w| free(w, claimed));
    if let Some(w) = windows().find(|w| question[w.start..w.end] == label[..]) {
        return Some(w);
    }
    let target = emb.mean(&label);
    let mut best: Option<(f64, Span)> = None;
    for w in windows() {
        let score = cosine(&emb.mean(&question[w.start..w.end]), &target).expect("same table");
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, w));
        }
    }
    best.filter(|(s, _)| *s >= ENTITY_FALLBACK_THRESHOLD).map(|(_, w)| w)
}

/// Aligns a relation to the single unclaimed question word whose vector is
/// closest in cosine to the mean of the relation's label-token vectors.
/// Ties go to the earliest word; `None` when every score is zero.
pub fn align_relation(relation: &Iri, question: &[String], emb: &EmbeddingTable, claimed: &[Span]) -> Option<Span> {
    let target = emb.mean(&iri_label_tokens(relation));
    let mut best: Option<(f64, usize)> = None;
    let mut any_nonzero = false;
    for (i, word) in question.iter().enumerate() {
        let span = Span::new(i, i + 1);
        if !free(&span, claimed) {
            continue;
        }
        let score = cosine(&emb.vector(word), &target).expect("same table");
        any_nonzero |= score != 0.0;
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, i));
        }
    }
    if !any_nonzero {
        return None;
    }
    best.map(|(_, i)| Span::new(i, i + 1))
}

/// Exact contiguous match of `needle` in `haystack` avoiding `claimed`.
pub fn find_exact(needle: &[String], haystack: &[String], claimed: &[Span]) -> Option<Span> {
    let n = needle.len();
    if n == 0 || n > haystack.len() {
        return None;
    }
    (0..=haystack.len() - n)
        .map(|s| Span::new(s, s + n))
        .find(|w| free(w, claimed) && haystack[w.start..w.end] == needle[..])
}

impl core::fmt::Display for Span {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}
