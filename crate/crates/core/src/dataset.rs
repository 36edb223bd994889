//! Question/answer records as stored in dataset files.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kg::KnowledgeGraph;
use crate::text::EmbeddingTable;
use crate::sparql::{execute, parse_sparql, ExecError, ParseError, SparqlQuery};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub question: String,
    pub sparql: String,
    /// Sorted answer strings (IRIs prefixed, literals lexical, counts in
    /// decimal, booleans as `true`/`false`).
    pub answers: Vec<String>,
}

/// A KG with its question splits and word embeddings.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub kg: KnowledgeGraph,
    pub train: Vec<QaRecord>,
    pub val: Vec<QaRecord>,
    pub test: Vec<QaRecord>,
    pub embeddings: EmbeddingTable,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnswerError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Runs a query and renders its answers as sorted strings.
pub fn answer_strings(query: &SparqlQuery, kg: &KnowledgeGraph) -> Result<Vec<String>, ExecError> {
    Ok(execute(query, kg)?.to_strings().into_iter().collect())
}

/// Parses and runs query text.
pub fn answer_text(sparql: &str, kg: &KnowledgeGraph) -> Result<Vec<String>, AnswerError> {
    let q = parse_sparql(sparql)?;
    Ok(answer_strings(&q, kg)?)
}
