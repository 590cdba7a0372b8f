use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn iclcover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iclcover"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn synthetic(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/synthetic")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn select_coverage_and_report_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run").display().to_string();
    let (pool, test, parses) = (synthetic("pool.jsonl"), synthetic("test.jsonl"), synthetic("parses.jsonl"));
    let o = iclcover(&[
        "select", "--pool", &pool, "--test", &test, "--parses", &parses, "--metric", "bm25:depst4",
        "--selector", "set_greedy", "--k", "3", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Set-BM25[depst4]"));
    assert_eq!(iclcover(&["coverage", &out]).status.code(), Some(0));
    let o = iclcover(&["report", "--csv", &out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("method,em,"));
}

#[test]
fn config_file_drives_select() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        format!(
            "pool_path = {:?}\ntest_path = {:?}\nembeddings_dir = {:?}\noutput_dir = \"run\"\nk = 2\nselector = \"independent\"\n\n[metric]\nkind = \"cosine\"\n",
            synthetic("pool.jsonl"),
            synthetic("test.jsonl"),
            synthetic("embeddings")
        ),
    )
    .unwrap();
    let o = iclcover(&["select", "--config", cfg.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("run/selections.jsonl").exists());
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run").display().to_string();
    let (pool, test) = (synthetic("pool.jsonl"), synthetic("test.jsonl"));
    // bsr needs embeddings
    let o = iclcover(&["select", "--pool", &pool, "--test", &test, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("embeddings"));
    // bsp does not decompose, so it cannot drive set selection
    let emb = synthetic("embeddings");
    let o = iclcover(&["select", "--pool", &pool, "--test", &test, "--embeddings", &emb, "--metric", "bsp", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(iclcover(&["select", "--metric", "nope"]).status.code(), Some(2));
    assert_eq!(iclcover(&["select", "--pool", &pool]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("pool.jsonl");
    fs::write(&bad, "{\"id\": \"a\", \"input\": \"x\"}\nnot json\n").unwrap();
    let out = tmp.path().join("run").display().to_string();
    let o = iclcover(&[
        "select", "--pool", bad.to_str().unwrap(), "--test", &synthetic("test.jsonl"), "--metric", "bm25",
        "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(iclcover(&["coverage", tmp.path().to_str().unwrap()]).status.code(), Some(1));
}
