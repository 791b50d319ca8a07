use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(p: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(p)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partadvise"))
        .args(args)
        .env_remove("LACHESIS_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn enumerate_shipped_fixture() {
    let out = stdout(&run(&[
        "enumerate",
        "--ir",
        &fixture("irs/reddit-features.json"),
        &fixture("irs/comments-by-author.json"),
        "--dataset",
        "comments",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert!(out.contains("classify"));
}

#[test]
fn pcc_reports_every_feature() {
    let mut args = vec!["pcc".to_string(), "--log".into(), fixture("runs.jsonl"), "--ir".into()];
    for ir in ["reddit-features", "comments-by-author", "comment-loader", "author-loader", "features-report"] {
        args.push(fixture(&format!("irs/{ir}.json")));
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = stdout(&run(&refs));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "feature,n,pcc");
    assert_eq!(lines.len(), 9);
    assert!(lines.iter().any(|l| l.starts_with("frequency,100,")));
}

#[test]
fn train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let go = |name: &str| {
        let out = dir.path().join(name);
        stdout(&run(&[
            "train",
            "--env",
            &fixture("env.json"),
            "--epochs",
            "2",
            "--seed",
            "5",
            "--out",
            &out.display().to_string(),
        ]));
        std::fs::read(out).unwrap()
    };
    assert_eq!(go("a.bin"), go("b.bin"));
}

#[test]
fn simulate_fixture_env() {
    let out = stdout(&run(&["simulate", "--env", &fixture("env.json")]));
    assert!(out.contains("comments-by-author"));
}

#[test]
fn match_after_demo() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().display().to_string();
    stdout(&run(&["demo", "--dir", &d, "--epochs", "5"]));
    let out = stdout(&run(&[
        "match",
        "--dataset-scheme",
        &format!("{d}/applied.json"),
        "--consumer",
        &format!("{d}/irs/comments-by-author.json"),
    ]));
    assert!(out.contains("\"verdict\""));
    let absent = run(&[
        "match",
        "--dataset-scheme",
        &format!("{d}/applied.json"),
        "--consumer",
        &format!("{d}/irs/features-report.json"),
    ]);
    assert_eq!(absent.status.code(), Some(1));
    // A second demo into the same directory is refused.
    assert_eq!(run(&["demo", "--dir", &d]).status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["enumerate", "--dataset", "x"]).status.code(), Some(2));
    assert_eq!(
        run(&["enumerate", "--ir", "/nonexistent.json", "--dataset", "x"]).status.code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_partadvise"))
        .args(["simulate", "--env", &fixture("env.json")])
        .env("LACHESIS_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
