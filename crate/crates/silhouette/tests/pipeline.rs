use std::fs;
use std::path::Path;

use silhouette::io::{self, write_benchmark};
use silhouette::run::{self, run_pipeline};
use silhouette::{PipelineConfig, Pool};
use silhouette_core::pipeline::{Event, Prediction};
use silhouette_core::toybench::{generate_toybench, ToybenchSpec};

const SMALL: &str = r#"
seed = 2
scenario = "A"

[seq2seq]
embed_dim = 16
hidden_dim = 16
encoder_layers = 1
decoder_layers = 1
max_epochs = 3
max_decode_len = 24

[stage2]
max_epochs = 2

[stage2.encoder]
embed_dim = 8
layers = 1
"#;

fn config(dir: &Path, extra: &str) -> PipelineConfig {
    PipelineConfig::from_toml(&format!("{SMALL}\n{extra}"), dir).unwrap()
}

fn toy(out: &str) -> String {
    format!("[paths]\noutput = \"{out}\"\n\n[toybench]\nseed = 4\nn_train = 30\nn_val = 2\nn_test = 12\n")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn identical_outputs_for_any_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let one = config(tmp.path(), &toy("one"));
    let four = config(tmp.path(), &toy("four"));
    let r1 = run_pipeline(&one, &Pool::new(1)).unwrap();
    let r4 = run_pipeline(&four, &Pool::new(4)).unwrap();
    assert_eq!(r1, r4);
    for f in [run::PREDICTIONS, run::REPORT_JSON, run::REPORT_TXT, run::STAGE1_CKPT, run::STAGE2_CKPT, run::MASKED_TEST, run::EVENTS] {
        assert_eq!(read(&tmp.path().join("one"), f), read(&tmp.path().join("four"), f), "{f}");
    }
}

#[test]
fn stage2_toggle_only_touches_later_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let on = config(tmp.path(), &toy("on"));
    let mut off = config(tmp.path(), &toy("off"));
    off.enable_stage2 = false;
    run_pipeline(&on, &Pool::new(2)).unwrap();
    run_pipeline(&off, &Pool::new(2)).unwrap();
    let (a, b) = (tmp.path().join("on"), tmp.path().join("off"));
    for f in [run::MASKED_TRAIN, run::MASKED_TEST, run::STAGE1_CKPT] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    assert!(a.join(run::STAGE2_CKPT).exists());
    assert!(!b.join(run::STAGE2_CKPT).exists());
    let pa: Vec<Prediction> = io::read_jsonl(&a.join(run::PREDICTIONS)).unwrap();
    let pb: Vec<Prediction> = io::read_jsonl(&b.join(run::PREDICTIONS)).unwrap();
    assert_eq!(pa.len(), pb.len());
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!((&x.id, &x.silhouette_sparql), (&y.id, &y.silhouette_sparql));
        assert_eq!(y.predicted_sparql, y.silhouette_sparql);
    }
}

#[test]
fn one_unparseable_gold_query_is_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bench = generate_toybench(&ToybenchSpec { seed: 4, n_train: 30, n_val: 2, n_test: 12, ..Default::default() }).unwrap();
    let data = tmp.path().join("data");
    write_benchmark(&data, &bench).unwrap();
    let files = format!(
        "[paths]\noutput = \"{{}}\"\nkg = \"data/{}\"\ntrain = \"data/{}\"\ntest = \"data/{}\"\nembeddings = \"data/{}\"\n",
        io::KG_FILE,
        io::TRAIN_FILE,
        io::TEST_FILE,
        io::EMBEDDINGS_FILE
    );
    let clean = run_pipeline(&config(tmp.path(), &files.replace("{}", "clean")), &Pool::new(2)).unwrap();

    bench.test[5].sparql = "SELECT DISTINCT ?uri WHERE { dbr:Broken".into();
    write_benchmark(&data, &bench).unwrap();
    let broken = run_pipeline(&config(tmp.path(), &files.replace("{}", "broken")), &Pool::new(2)).unwrap();
    assert_eq!(broken.n_questions, clean.n_questions - 1);
    assert!(broken.results.iter().all(|r| r.id != bench.test[5].id));

    let events: Vec<Event> = io::read_jsonl(&tmp.path().join("broken").join(run::EVENTS)).unwrap();
    let skipped: Vec<_> = events.iter().filter(|e| matches!(e, Event::Skipped { .. })).collect();
    assert_eq!(skipped.len(), 1);
    assert!(matches!(skipped[0], Event::Skipped { id, split, .. } if *id == bench.test[5].id && split == "test"));
}

#[test]
fn noisy_scenario_needs_a_linker_source() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), &toy("c"));
    cfg.scenario = silhouette_core::noise::Scenario::C;
    assert!(run_pipeline(&cfg, &Pool::new(1)).is_err());
    assert!(!tmp.path().join("c").exists());
}
