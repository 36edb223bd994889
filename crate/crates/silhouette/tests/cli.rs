use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silhouette")).args(args).current_dir(cwd).env("SILHOUETTE_THREADS", "2").output().unwrap()
}

fn lines(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["no-such-command"], tmp.path()).status.code(), Some(1));
    assert_eq!(cli(&["mask", "--scenario", "d"], tmp.path()).status.code(), Some(1));
    assert_eq!(cli(&["kg", "validate", "--kg", "missing.tsv"], tmp.path()).status.code(), Some(2));
    std::fs::write(tmp.path().join("bad.tsv"), "dbr:A\tdbo:p\n").unwrap();
    assert_eq!(cli(&["kg", "validate", "--kg", "bad.tsv"], tmp.path()).status.code(), Some(2));
    assert_eq!(cli(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn staged_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let ok = |args: &[&str]| {
        let out = cli(args, d);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    ok(&["toybench", "generate", "--out", "data", "--seed", "3", "--n-train", "50", "--n-val", "10", "--n-test", "20"]);
    assert_eq!([lines(&d.join("data/train.jsonl")), lines(&d.join("data/val.jsonl")), lines(&d.join("data/test.jsonl"))], [50, 10, 20]);
    ok(&["toybench", "generate", "--out", "again", "--seed", "3", "--n-train", "50", "--n-val", "10", "--n-test", "20"]);
    for f in ["kg.tsv", "train.jsonl", "val.jsonl", "test.jsonl", "embeddings.txt"] {
        assert_eq!(std::fs::read(d.join("data").join(f)).unwrap(), std::fs::read(d.join("again").join(f)).unwrap(), "{f}");
    }
    ok(&["kg", "validate", "--kg", "data/kg.tsv"]);

    for split in ["train", "test"] {
        ok(&["mask", "--scenario", "a", "--kg", "data/kg.tsv", "--dataset", &format!("data/{split}.jsonl"), "--embeddings", "data/embeddings.txt", "--out", &format!("{split}.masked.jsonl")]);
    }
    assert_eq!(lines(&d.join("test.masked.jsonl")), 20);
    std::fs::write(d.join("s1.toml"), "[seq2seq]\nembed_dim = 16\nhidden_dim = 16\nencoder_layers = 1\ndecoder_layers = 1\n").unwrap();
    ok(&["train", "stage1", "--masked", "train.masked.jsonl", "--out", "s1.ckpt", "--config", "s1.toml", "--epochs", "3"]);
    ok(&["train", "stage2", "--kg", "data/kg.tsv", "--dataset", "data/train.jsonl", "--out", "s2.ckpt", "--epochs", "2"]);
    ok(&["predict", "--model", "s1.ckpt", "--masked", "test.masked.jsonl", "--kg", "data/kg.tsv", "--out", "pred.jsonl"]);
    ok(&["correct", "--model", "s2.ckpt", "--kg", "data/kg.tsv", "--masked", "test.masked.jsonl", "--predictions", "pred.jsonl", "--out", "fixed.jsonl"]);
    ok(&["eval", "--gold", "data/test.jsonl", "--predictions", "fixed.jsonl", "--out", "report.json"]);
    assert_eq!(lines(&d.join("fixed.jsonl")), 20);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_questions"], 20);
}
