use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn mmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmc"))
        .args(args)
        .env_remove("MMC_OUT_DIR")
        .output()
        .expect("spawn mmc")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scoring_gold_answers_gives_full_marks() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("xquad.en.json");
    let ds = mmc::Dataset::from_path(&data).unwrap();
    let gold: std::collections::BTreeMap<_, _> =
        ds.qas().map(|r| (r.qa.id.clone(), r.qa.answers[0].text.clone())).collect();
    let pred = dir.path().join("pred.json");
    fs::write(&pred, serde_json::to_vec(&gold).unwrap()).unwrap();

    let out = mmc(&["score", "--pred", s(&pred), "--data", s(&data)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["exact_match"], 100.0);
    assert_eq!(v["f1"], 100.0);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(mmc(&["score", "--data", "x.json"]).status.code(), Some(2));
    assert_eq!(mmc(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(mmc(&["variant", "--setting", "xx-yy", "--en", "a", "--hi", "b", "--out", "c"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one_with_kind() {
    let out = mmc(&["validate", "--data", "/nonexistent/data.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: kind=io: "), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, b"not a checkpoint").unwrap();
    let out = mmc(&["predict", "--ckpt", s(&bad), "--data", s(&fixture("xquad.en.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: kind=checkpoint: "));
}

#[test]
fn variant_writes_cross_language_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("eh.json");
    let en = fixture("xquad.en.json");
    let hi = fixture("xquad.hi.json");
    let out = mmc(&["variant", "--setting", "en-hi", "--en", s(&en), "--hi", s(&hi), "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let en = mmc::Dataset::from_path(&en).unwrap();
    let hi = mmc::Dataset::from_path(&hi).unwrap();
    let v = mmc::Dataset::from_path(&out_path).unwrap();
    assert_eq!(v.qa_count(), en.qa_count());
    let questions: Vec<_> = v.qas().map(|r| r.qa.question.clone()).collect();
    let contexts: Vec<_> = v.qas().map(|r| r.context.to_string()).collect();
    assert_eq!(questions, en.qas().map(|r| r.qa.question.clone()).collect::<Vec<_>>());
    assert_eq!(contexts, hi.qas().map(|r| r.context.to_string()).collect::<Vec<_>>());

    let check = mmc(&["validate", "--data", s(&out_path)]);
    assert_eq!(check.status.code(), Some(0));
}

#[test]
fn finetune_then_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("xquad.en.json");
    let cfg = dir.path().join("model.toml");
    fs::write(
        &cfg,
        "[hyperparams]\nmax_seq_len = 64\nmax_query_len = 16\ntrain_batch = 4\n\
         [encoder]\nhidden = 8\nlayers = 1\nheads = 2\nffn = 16\nmax_positions = 64\n",
    )
    .unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let out = mmc(&[
        "finetune", "--data", s(&data), "--out", s(&ckpt), "--config", s(&cfg), "--steps", "2", "--seed", "3",
        "--size", "300",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let pred = dir.path().join("pred.json");
    let out = mmc(&["predict", "--ckpt", s(&ckpt), "--data", s(&data), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let preds: std::collections::BTreeMap<String, String> = serde_json::from_slice(&fs::read(&pred).unwrap()).unwrap();
    assert_eq!(preds.len(), mmc::Dataset::from_path(&data).unwrap().qa_count());

    let out = mmc(&["score", "--pred", s(&pred), "--data", s(&data)]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn sanitize_reads_lines() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "a  b\n").unwrap();
    let out = mmc(&["sanitize", "--data", s(&input)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "a b\n");
}
