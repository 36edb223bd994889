use silhouette::checkpoint::{self, decode, CheckpointError, Header, Progress, FORMAT_VERSION, MAGIC};
use silhouette_core::autodiff::ParamStore;
use silhouette_core::graph_search::{build_stage2_vocab, GraphSearchConfig, GraphSearchModel};
use silhouette_core::noise::mask_scenario_a;
use silhouette_core::pipeline::stage2_training_data;
use silhouette_core::seq2seq::{build_vocab, Seq2SeqConfig, Seq2SeqModel};
use silhouette_core::sparql::parse_sparql;
use silhouette_core::text::tokenize_question;
use silhouette_core::toybench::{generate_toybench, ToybenchSpec};
use sha2::{Digest, Sha256};

fn bits(p: &ParamStore) -> Vec<(String, Vec<usize>, Vec<u64>)> {
    p.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data().iter().map(|x| x.to_bits()).collect())).collect()
}

fn seq2seq_model() -> (Seq2SeqModel, Vec<Vec<String>>) {
    let b = generate_toybench(&ToybenchSpec { n_train: 30, n_val: 1, n_test: 1, seed: 5, ..Default::default() }).unwrap();
    let pairs: Vec<_> = b
        .train
        .iter()
        .map(|r| mask_scenario_a(&tokenize_question(&r.question), &parse_sparql(&r.sparql).unwrap(), &b.embeddings))
        .collect();
    let (src, tgt) = build_vocab(&pairs, 1).unwrap();
    let cfg = Seq2SeqConfig { embed_dim: 8, hidden_dim: 12, encoder_layers: 2, decoder_layers: 1, max_decode_len: 20, seed: 3, ..Default::default() };
    let m = Seq2SeqModel::new(cfg, src, tgt).unwrap();
    (m, pairs.into_iter().map(|p| p.masked_question).collect())
}

fn graph_model() -> GraphSearchModel {
    let b = generate_toybench(&ToybenchSpec { n_train: 30, n_val: 1, n_test: 1, seed: 6, ..Default::default() }).unwrap();
    let (rel, types) = stage2_training_data(&b.train);
    GraphSearchModel::new(GraphSearchConfig { seed: 4, ..GraphSearchConfig::for_kg(&b.kg) }, build_stage2_vocab(&rel, &types)).unwrap()
}

#[test]
fn seq2seq_round_trip_is_bit_exact() {
    let (m, _) = seq2seq_model();
    let bytes = checkpoint::encode_seq2seq(&m, Progress { epoch: 7, loss: Some(1.25) });
    let (back, progress) = checkpoint::decode_seq2seq(&bytes).unwrap();
    assert_eq!(bits(&back.params), bits(&m.params));
    assert_eq!(back.config, m.config);
    assert_eq!(back.src_vocab, m.src_vocab);
    assert_eq!(back.tgt_vocab, m.tgt_vocab);
    assert_eq!(progress, Progress { epoch: 7, loss: Some(1.25) });
    // Encoding is a pure function of the model.
    assert_eq!(checkpoint::encode_seq2seq(&back, progress), bytes);
}

#[test]
fn graph_search_round_trip_through_a_file() {
    let m = graph_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gs.ckpt");
    checkpoint::save_graph_search(&path, &m, Progress::default()).unwrap();
    let (back, _) = checkpoint::load_graph_search(&path).unwrap();
    assert_eq!(bits(&back.relation_head.params), bits(&m.relation_head.params));
    assert_eq!(bits(&back.type_head.params), bits(&m.type_head.params));
    assert_eq!(back.config, m.config);
    assert_eq!(back.vocab, m.vocab);
    assert!(matches!(checkpoint::load_seq2seq(&path), Err(CheckpointError::WrongKind { .. })));
}

#[test]
fn decoded_model_translates_identically_on_100_inputs() {
    let (m, questions) = seq2seq_model();
    let (back, _) = checkpoint::decode_seq2seq(&checkpoint::encode_seq2seq(&m, Progress::default())).unwrap();
    let b = generate_toybench(&ToybenchSpec { n_train: 70, n_val: 1, n_test: 1, seed: 8, ..Default::default() }).unwrap();
    let inputs: Vec<Vec<String>> = questions.into_iter().chain(b.train.iter().map(|r| tokenize_question(&r.question))).take(100).collect();
    assert_eq!(inputs.len(), 100);
    for q in &inputs {
        assert_eq!(back.translate(q).unwrap(), m.translate(q).unwrap());
    }

    let g = graph_model();
    let (gb, _) = checkpoint::decode_graph_search(&checkpoint::encode_graph_search(&g, Progress::default())).unwrap();
    for q in &inputs {
        assert_eq!(gb.predict_type(q).unwrap(), g.predict_type(q).unwrap());
    }
}

#[test]
fn truncated_or_flipped_files_are_corrupt() {
    let (m, _) = seq2seq_model();
    let bytes = checkpoint::encode_seq2seq(&m, Progress::default());
    for cut in [0, 5, 12, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode(&bytes[..cut]), Err(CheckpointError::CorruptCheckpoint(_))), "cut at {cut}");
    }
    let mut flipped = bytes.clone();
    let mid = flipped.len() - 100;
    flipped[mid] ^= 1;
    assert!(matches!(decode(&flipped), Err(CheckpointError::CorruptCheckpoint(_))));
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(decode(&magic), Err(CheckpointError::CorruptCheckpoint(_))));
}

/// Rebuilds a file around an edited header, with a valid checksum.
fn reencode(bytes: &[u8], edit: impl FnOnce(&mut Header)) -> Vec<u8> {
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut header: Header = serde_json::from_slice(&bytes[12..12 + hlen]).unwrap();
    edit(&mut header);
    let json = serde_json::to_vec(&header).unwrap();
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&bytes[12 + hlen..bytes.len() - 32]);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

#[test]
fn other_format_versions_are_rejected() {
    let (m, _) = seq2seq_model();
    let bytes = checkpoint::encode_seq2seq(&m, Progress::default());
    assert!(decode(&reencode(&bytes, |_| {})).is_ok());
    let v2 = reencode(&bytes, |h| h.format_version = FORMAT_VERSION + 1);
    match decode(&v2) {
        Err(CheckpointError::FormatVersionMismatch { found, expected }) => assert_eq!((found, expected), (FORMAT_VERSION + 1, FORMAT_VERSION)),
        other => panic!("{:?}", other.err()),
    }
    let bad_vocab = reencode(&bytes, |h| h.vocab_hashes[0].1 = "00".repeat(32));
    assert!(matches!(decode(&bad_vocab), Err(CheckpointError::CorruptCheckpoint(_))));
}
