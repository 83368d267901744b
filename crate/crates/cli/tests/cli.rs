use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn ssa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssa"))
        .args(args)
        .env_remove("SSA_GENERATOR")
        .env_remove("SSA_SCORER")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ssa(args);
    assert!(out.status.success(), "ssa {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(String::from).collect()
}

/// Data lines, without the provenance header.
fn records(p: &Path) -> Vec<serde_json::Value> {
    lines(p)
        .iter()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v.get("_provenance").is_none())
        .collect()
}

fn run_into(dir: &Path, extra: &[&str]) {
    let config = fixtures().join("pipeline.toml");
    let mut args = vec!["run", "--config", s(&config), "--out-dir", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn run_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_into(a.path(), &[]);
    run_into(b.path(), &[]);
    for name in ["original.jsonl", "meta.jsonl", "samples.jsonl", "pairs.jsonl", "mixed.jsonl", "report.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_percent_mix_keeps_only_originals() {
    let d = tempfile::tempdir().unwrap();
    run_into(d.path(), &["--mix-strategy", "random", "--mix-p", "0"]);
    assert_eq!(records(&d.path().join("mixed.jsonl")), records(&d.path().join("original.jsonl")));
    assert!(!records(&d.path().join("pairs.jsonl")).is_empty());
}

#[test]
fn stages_chain_like_run() {
    let d = tempfile::tempdir().unwrap();
    let p = |n: &str| d.path().join(n);
    let fx = fixtures();
    ok(&["ground", "--input", s(&fx.join("records.jsonl")), "--out", s(&p("grounded.jsonl"))]);
    assert_eq!(records(&p("grounded.jsonl")).len(), 7);
    ok(&[
        "merge",
        "--input",
        s(&fx.join("records.jsonl")),
        "--embeddings",
        s(&fx.join("embeddings.txt")),
        "--out",
        s(&p("meta.jsonl")),
        "--seed",
        "13",
    ]);
    assert_eq!(records(&p("meta.jsonl")).len(), 3);
    ok(&["sample", "--meta", s(&p("meta.jsonl")), "--seed", "13", "--out", s(&p("samples.jsonl"))]);
    ok(&["augment", "--samples", s(&p("samples.jsonl")), "--out", s(&p("pairs.jsonl"))]);

    run_into(&p("run"), &[]);
    assert_eq!(records(&p("meta.jsonl")), records(&p("run/meta.jsonl")));
    assert_eq!(records(&p("samples.jsonl")), records(&p("run/samples.jsonl")));
    assert_eq!(records(&p("pairs.jsonl")), records(&p("run/pairs.jsonl")));

    ok(&[
        "mix",
        "--original",
        s(&p("run/original.jsonl")),
        "--ssa",
        s(&p("pairs.jsonl")),
        "--strategy",
        "random",
        "--p",
        "100",
        "--out",
        s(&p("mixed.jsonl")),
    ]);
    assert_eq!(records(&p("mixed.jsonl")).len(), 7 + records(&p("pairs.jsonl")).len());

    ok(&[
        "eval",
        "--pairs",
        s(&p("mixed.jsonl")),
        "--embeddings",
        s(&fx.join("embeddings.txt")),
        "--nouns",
        &format!("lexicon:{}", s(&fx.join("nouns.txt"))),
        "--report",
        s(&p("report.json")),
    ]);
    let table = ok(&["report", "--report", s(&p("report.json")), "--csv", s(&p("bands.csv"))]);
    assert!(!table.is_empty());
    let csv = lines(&p("bands.csv"));
    assert_eq!(csv.len(), 11, "header plus ten bands");
}

#[test]
fn exit_codes_follow_failure_kind() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("missing.toml");
    assert_eq!(ssa(&["run", "--config", s(&missing)]).status.code(), Some(2));

    let config = fixtures().join("pipeline.toml");
    let bad_th = ssa(&["run", "--config", s(&config), "--out-dir", s(d.path()), "--gruen-th", "1.5"]);
    assert_eq!(bad_th.status.code(), Some(2));

    let broken = d.path().join("broken.jsonl");
    fs::write(&broken, "{\"image_id\": \n").unwrap();
    let out = ssa(&["ground", "--input", s(&broken), "--out", s(&d.path().join("g.jsonl"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let unreachable = ssa(&[
        "run",
        "--config",
        s(&config),
        "--out-dir",
        s(&d.path().join("out")),
        "--generator",
        "bridge:127.0.0.1:1",
    ]);
    assert_eq!(unreachable.status.code(), Some(4));
}

#[test]
fn smatch_prints_four_decimals() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a.txt");
    let b = d.path().join("b.txt");
    fs::write(&a, "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))\n").unwrap();
    fs::write(&b, "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 (g2 / girl)))\n").unwrap();
    let out = ok(&["smatch", "--a", s(&a), "--b", s(&b)]);
    let exact = ok(&["smatch", "--a", s(&a), "--b", s(&b), "--brute-force"]);
    assert_eq!(out, exact);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 3);
    for (row, label) in rows.iter().zip(["Precision", "Recall", "F1"]) {
        let value = row.strip_prefix(&format!("{label}: ")).unwrap();
        assert_eq!(value.split('.').nth(1).unwrap().len(), 4, "{row}");
    }
    assert_eq!(ok(&["smatch", "--a", s(&a), "--b", s(&a)]), "Precision: 1.0000\nRecall: 1.0000\nF1: 1.0000\n");
}

#[test]
fn parse_keeps_metadata_comments() {
    let d = tempfile::tempdir().unwrap();
    let input = d.path().join("in.txt");
    fs::write(&input, "# ::id 1\n# ::snt the boy wants\n(w / want-01\n   :ARG0 (b / boy))\n").unwrap();
    let out = ok(&["parse", "--input", s(&input)]);
    assert!(out.contains("# ::id 1") && out.contains("# ::snt the boy wants"), "{out}");
    assert!(out.contains("(w / want-01"));
    let triples = ok(&["parse", "--input", s(&input), "--format", "triples"]);
    assert!(triples.contains("boy"));
}

#[test]
fn endpoints_can_come_from_the_environment() {
    let (strict, bridged) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = fixtures().join("pipeline.toml");
    let run_env = |dir: &Path, key: &str, value: &str| {
        Command::new(env!("CARGO_BIN_EXE_ssa"))
            .args(["run", "--config", s(&config), "--out-dir", s(dir)])
            .env(key, value)
            .output()
            .unwrap()
    };
    assert!(run_env(strict.path(), "SSA_SCORER", "const:0.0").status.success());
    assert!(records(&strict.path().join("pairs.jsonl")).is_empty());
    assert_eq!(
        records(&strict.path().join("mixed.jsonl")),
        records(&strict.path().join("original.jsonl"))
    );
    assert_eq!(run_env(bridged.path(), "SSA_GENERATOR", "bridge:127.0.0.1:1").status.code(), Some(4));
}

#[test]
fn mock_bridge_pairs_keep_stub_controls() {
    let (stub, mock) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_into(stub.path(), &[]);
    run_into(mock.path(), &["--generator", "bridge:mock"]);
    let controls = |d: &Path| -> Vec<serde_json::Value> {
        records(&d.join("pairs.jsonl")).into_iter().map(|p| p["control"].clone()).collect()
    };
    assert_eq!(controls(stub.path()), controls(mock.path()));
}
