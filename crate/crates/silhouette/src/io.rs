//! Dataset, KG, embedding and JSON-lines files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use silhouette_core::dataset::{Benchmark, QaRecord};
use silhouette_core::kg::KnowledgeGraph;
use silhouette_core::noise::LinkerOutput;
use silhouette_core::pipeline::LinkerTable;
use silhouette_core::text::EmbeddingTable;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn invalid(path: &Path, reason: impl ToString) -> Self {
        DataError::Invalid {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| DataError::invalid(path, e))?;
        w.write_all(b"\n").map_err(|e| DataError::io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn read_kg(path: &Path) -> Result<KnowledgeGraph, DataError> {
    KnowledgeGraph::from_tsv(&read_text(path)?).map_err(|e| DataError::invalid(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable, DataError> {
    EmbeddingTable::from_text(&read_text(path)?).map_err(|e| DataError::invalid(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<QaRecord>, DataError> {
    read_jsonl(path)
}

/// Linker output for one question, as stored in linker files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkerRecord {
    pub id: String,
    #[serde(flatten)]
    pub output: LinkerOutput,
}

pub fn read_linker_table(path: &Path) -> Result<LinkerTable, DataError> {
    let records: Vec<LinkerRecord> = read_jsonl(path)?;
    Ok(records.into_iter().map(|r| (r.id, r.output)).collect())
}

/// File names used for a benchmark directory.
pub const KG_FILE: &str = "kg.tsv";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const VAL_FILE: &str = "val.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

pub fn write_benchmark(dir: &Path, bench: &Benchmark) -> Result<(), DataError> {
    write_text(&dir.join(KG_FILE), &bench.kg.to_tsv())?;
    write_jsonl(&dir.join(TRAIN_FILE), &bench.train)?;
    write_jsonl(&dir.join(VAL_FILE), &bench.val)?;
    write_jsonl(&dir.join(TEST_FILE), &bench.test)?;
    write_text(&dir.join(EMBEDDINGS_FILE), &bench.embeddings.to_text())
}

pub struct BenchmarkPaths<'a> {
    pub kg: &'a Path,
    pub train: &'a Path,
    pub val: Option<&'a Path>,
    pub test: &'a Path,
    pub embeddings: &'a Path,
}

pub fn read_benchmark(p: &BenchmarkPaths<'_>) -> Result<Benchmark, DataError> {
    Ok(Benchmark {
        kg: read_kg(p.kg)?,
        train: read_dataset(p.train)?,
        val: p.val.map(read_dataset).transpose()?.unwrap_or_default(),
        test: read_dataset(p.test)?,
        embeddings: read_embeddings(p.embeddings)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_skips_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/x.jsonl");
        let recs = vec![QaRecord {
            id: "q1".into(),
            question: "Who?".into(),
            sparql: "ASK WHERE { dbr:A dbo:b dbr:C }".into(),
            answers: vec!["true".into()],
        }];
        write_jsonl(&path, &recs).unwrap();
        let mut text = read_text(&path).unwrap();
        text.push_str("\n\n");
        write_text(&path, &text).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), recs);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        write_text(&path, "{\"id\":\"a\",\"question\":\"q\",\"sparql\":\"s\",\"answers\":[]}\nnot json\n").unwrap();
        match read_dataset(&path) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
