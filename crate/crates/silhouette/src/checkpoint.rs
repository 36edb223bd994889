//! Binary checkpoints.
//!
//! Layout: 8-byte magic, u32 LE header length, UTF-8 JSON header, the
//! tensors' values as f64 LE in header order, then a SHA-256 of everything
//! before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use silhouette_core::autodiff::{ParamStore, Tensor};
use silhouette_core::graph_search::{GraphSearchConfig, GraphSearchModel};
use silhouette_core::seq2seq::{Seq2SeqConfig, Seq2SeqModel, Vocabulary};

pub const MAGIC: &[u8; 8] = b"SILCKPT\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint format version {found}, expected {expected}")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    WrongKind { found: String, expected: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

fn corrupt(m: impl ToString) -> CheckpointError {
    CheckpointError::CorruptCheckpoint(m.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    /// Named token lists, each with its SHA-256 in `vocab_hashes`.
    pub vocabularies: Vec<(String, Vocabulary)>,
    pub vocab_hashes: Vec<(String, String)>,
    pub epoch: usize,
    pub loss: Option<f64>,
    pub tensors: Vec<TensorEntry>,
}

/// Training progress stored alongside the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Progress {
    pub epoch: usize,
    pub loss: Option<f64>,
}

pub fn vocab_hash(v: &Vocabulary) -> String {
    let mut h = Sha256::new();
    for t in v.tokens() {
        h.update(t.as_bytes());
        h.update([b'\n']);
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(kind: &str, config: serde_json::Value, vocabs: &[(&str, &Vocabulary)], stores: &[(&str, &ParamStore)], progress: Progress) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    for (prefix, store) in stores {
        for (name, t) in store.iter() {
            tensors.push(TensorEntry {
                name: format!("{prefix}{name}"),
                shape: t.shape().to_vec(),
            });
            for x in t.data() {
                data.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: kind.into(),
        config,
        vocabularies: vocabs.iter().map(|(n, v)| (n.to_string(), (*v).clone())).collect(),
        vocab_hashes: vocabs.iter().map(|(n, v)| (n.to_string(), vocab_hash(v))).collect(),
        epoch: progress.epoch,
        loss: progress.loss,
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + data.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Parsed checkpoint: header plus tensors by full name, in file order.
pub struct Decoded {
    pub header: Header,
    pub tensors: Vec<(String, Tensor)>,
}

pub fn decode(bytes: &[u8]) -> Result<Decoded, CheckpointError> {
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(corrupt("file too short"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let hlen = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
    let hend = 12usize.checked_add(hlen).filter(|&e| e <= body.len()).ok_or_else(|| corrupt("header overruns file"))?;
    let header: Header = serde_json::from_slice(&body[12..hend]).map_err(corrupt)?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::FormatVersionMismatch {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    for ((name, v), (hname, h)) in header.vocabularies.iter().zip(&header.vocab_hashes) {
        if name != hname || &vocab_hash(v) != h {
            return Err(corrupt(format!("vocabulary {name} does not match its hash")));
        }
    }
    if header.vocabularies.len() != header.vocab_hashes.len() {
        return Err(corrupt("vocabulary hash list length"));
    }
    let mut data = body[hend..].chunks_exact(8);
    if data.remainder().len() != 0 {
        return Err(corrupt("tensor data is not a whole number of f64"));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let c = data.next().ok_or_else(|| corrupt("tensor data truncated"))?;
            values.push(f64::from_le_bytes(c.try_into().expect("8 bytes")));
        }
        tensors.push((entry.name.clone(), Tensor::new(entry.shape.clone(), values)));
    }
    if data.next().is_some() {
        return Err(corrupt("trailing tensor data"));
    }
    Ok(Decoded { header, tensors })
}

impl Decoded {
    fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.header.kind != kind {
            return Err(CheckpointError::WrongKind {
                found: self.header.kind.clone(),
                expected: kind.into(),
            });
        }
        Ok(())
    }

    fn vocab(&self, name: &str) -> Result<Vocabulary, CheckpointError> {
        self.header
            .vocabularies
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| corrupt(format!("missing vocabulary {name}")))
    }

    fn store(&self, prefix: &str) -> ParamStore {
        let mut p = ParamStore::new();
        for (name, t) in &self.tensors {
            if let Some(rest) = name.strip_prefix(prefix) {
                p.insert(rest, t.clone());
            }
        }
        p
    }

    fn config<T: serde::de::DeserializeOwned>(&self) -> Result<T, CheckpointError> {
        serde_json::from_value(self.header.config.clone()).map_err(corrupt)
    }

    pub fn progress(&self) -> Progress {
        Progress {
            epoch: self.header.epoch,
            loss: self.header.loss,
        }
    }
}

const SEQ2SEQ: &str = "seq2seq";
const GRAPH_SEARCH: &str = "graph_search";

pub fn encode_seq2seq(model: &Seq2SeqModel, progress: Progress) -> Vec<u8> {
    encode(
        SEQ2SEQ,
        serde_json::to_value(&model.config).expect("config serializes"),
        &[("source", &model.src_vocab), ("target", &model.tgt_vocab)],
        &[("", &model.params)],
        progress,
    )
}

pub fn decode_seq2seq(bytes: &[u8]) -> Result<(Seq2SeqModel, Progress), CheckpointError> {
    let d = decode(bytes)?;
    d.expect_kind(SEQ2SEQ)?;
    let config: Seq2SeqConfig = d.config()?;
    let model = Seq2SeqModel::from_params(config, d.vocab("source")?, d.vocab("target")?, d.store("")).map_err(corrupt)?;
    Ok((model, d.progress()))
}

pub fn encode_graph_search(model: &GraphSearchModel, progress: Progress) -> Vec<u8> {
    encode(
        GRAPH_SEARCH,
        serde_json::to_value(&model.config).expect("config serializes"),
        &[("words", &model.vocab)],
        &[("relation/", &model.relation_head.params), ("type/", &model.type_head.params)],
        progress,
    )
}

pub fn decode_graph_search(bytes: &[u8]) -> Result<(GraphSearchModel, Progress), CheckpointError> {
    let d = decode(bytes)?;
    d.expect_kind(GRAPH_SEARCH)?;
    let config: GraphSearchConfig = d.config()?;
    let model = GraphSearchModel::from_params(config, d.vocab("words")?, d.store("relation/"), d.store("type/")).map_err(corrupt)?;
    Ok((model, d.progress()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    // Write then rename so a crash never leaves a half-written file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_seq2seq(path: &Path, model: &Seq2SeqModel, progress: Progress) -> Result<(), CheckpointError> {
    write_bytes(path, &encode_seq2seq(model, progress))
}

pub fn load_seq2seq(path: &Path) -> Result<(Seq2SeqModel, Progress), CheckpointError> {
    decode_seq2seq(&fs::read(path)?)
}

pub fn save_graph_search(path: &Path, model: &GraphSearchModel, progress: Progress) -> Result<(), CheckpointError> {
    write_bytes(path, &encode_graph_search(model, progress))
}

pub fn load_graph_search(path: &Path) -> Result<(GraphSearchModel, Progress), CheckpointError> {
    decode_graph_search(&fs::read(path)?)
}
