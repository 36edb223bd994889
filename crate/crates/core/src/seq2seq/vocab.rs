use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::noise::{MaskedPair, MAX_PLACEHOLDERS};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Query keywords and punctuation that are always in the target vocabulary.
pub const SPARQL_KEYWORDS: &[&str] = &[
    "SELECT", "DISTINCT", "COUNT", "ASK", "WHERE", "{", "}", "(", ")", ".", "a", "?uri", "?x",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary must start with the special tokens")]
    MissingSpecials,
    #[error("duplicate token `{0}`")]
    Duplicate(String),
}

/// Dense token ↔ id map. Ids 0..4 are `<pad>`, `<bos>`, `<eos>`, `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = VocabError;

    fn try_from(tokens: Vec<String>) -> Result<Self, VocabError> {
        if tokens.len() < SPECIALS.len() || tokens.iter().zip(SPECIALS).any(|(t, s)| t != s) {
            return Err(VocabError::MissingSpecials);
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        Ok(Vocabulary { tokens, index })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Specials followed by `tokens` (duplicates and specials skipped).
    pub fn from_tokens<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        let mut all: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: BTreeMap<String, usize> = all.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        for t in tokens {
            let t = t.into();
            if !index.contains_key(&t) {
                index.insert(t.clone(), all.len());
                all.push(t);
            }
        }
        Vocabulary { tokens: all, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }
}

/// All placeholder tokens up to the cap.
pub fn placeholder_tokens() -> Vec<String> {
    let mut out = Vec::with_capacity(2 * MAX_PLACEHOLDERS);
    for kind in ['e', 'r'] {
        for i in 0..MAX_PLACEHOLDERS {
            out.push(format!("<{kind}{i}>"));
        }
    }
    out
}

fn ranked(counts: BTreeMap<&str, usize>, min_count: usize, forced: &[String]) -> Vec<String> {
    let mut by_freq: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    // BTreeMap order is lexicographic, and the sort is stable.
    by_freq.sort_by(|a, b| b.1.cmp(&a.1));
    let mut out: Vec<String> = by_freq.into_iter().map(|(t, _)| t.to_string()).collect();
    let mut rest: Vec<&String> = forced.iter().filter(|f| !out.contains(f)).collect();
    rest.sort();
    rest.dedup();
    out.extend(rest.into_iter().cloned());
    out
}

/// Source and target vocabularies from a masked corpus: tokens by
/// descending frequency then lexicographically, after the specials.
/// Placeholders are always present on both sides, SPARQL keywords on the
/// target side.
pub fn build_vocab(pairs: &[MaskedPair], min_count: usize) -> Result<(Vocabulary, Vocabulary), VocabError> {
    if pairs.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    let mut src: BTreeMap<&str, usize> = BTreeMap::new();
    let mut tgt: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pairs {
        for t in &p.masked_question {
            *src.entry(t).or_default() += 1;
        }
        for t in &p.masked_sparql {
            *tgt.entry(t).or_default() += 1;
        }
    }
    let placeholders = placeholder_tokens();
    let mut tgt_forced = placeholders.clone();
    tgt_forced.extend(SPARQL_KEYWORDS.iter().map(|s| s.to_string()));
    Ok((
        Vocabulary::from_tokens(ranked(src, min_count, &placeholders)),
        Vocabulary::from_tokens(ranked(tgt, min_count, &tgt_forced)),
    ))
}
