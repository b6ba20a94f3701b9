use std::path::Path;
use std::process::{Command, Output};

use ppcstore::metrics;

fn ppcs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppcs"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn ppcs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn gen(dir: &Path) {
    ok(&ppcs(
        dir,
        &[
            "gen-corpus",
            "--out",
            "c.jsonl",
            "--files",
            "400",
            "--mib",
            "2",
            "--seed",
            "3",
        ],
    ));
}

#[test]
fn build_verify_query_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    let common = [
        "--data-dir",
        "s",
        "--energy",
        "off",
        "--csv",
        "rows.csv",
        "--write-buffer-mib",
        "16",
    ];
    let out = ok(&ppcs(
        d,
        &[
            &["build", "--corpus", "c.jsonl", "--codec", "zstd:6", "--block-kib", "16"][..],
            &common,
        ]
        .concat(),
    ));
    assert!(out.contains("build zstd-6/16KiB"), "{out}");
    assert!(ok(&ppcs(d, &["verify", "--corpus", "c.jsonl", "--data-dir", "s"])).contains("matched 400"));

    let q = [
        "query",
        "--threads",
        "1,2",
        "--repeats",
        "2",
        "--dist",
        "powerlaw",
        "--batch",
        "20",
        "--queries",
        "200",
        "--workload-out",
        "w1.txt",
    ];
    ok(&ppcs(d, &[&q[..], &common].concat()));
    let replay = [
        "query",
        "--threads",
        "1",
        "--repeats",
        "1",
        "--workload",
        "w1.txt",
        "--ordered",
    ];
    ok(&ppcs(d, &[&replay[..], &common].concat()));
    let mut q2 = q;
    q2[12] = "w2.txt";
    ok(&ppcs(d, &[&q2[..], &common].concat()));
    assert_eq!(
        std::fs::read(d.join("w1.txt")).unwrap(),
        std::fs::read(d.join("w2.txt")).unwrap()
    );

    let rows = metrics::read_csv(std::fs::File::open(d.join("rows.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1 + 2 + 1 + 2);
    assert!(rows.iter().all(|r| r.joules.is_none() && r.ratio.is_some()));
    assert_eq!(rows[1].bytes, rows[2].bytes);
    assert_eq!(rows[3].distribution.as_deref(), Some("powerlaw-ordered"));

    let rep = ok(&ppcs(
        d,
        &[
            "report",
            "rows.csv",
            "--objective",
            "ratio:min",
            "--objective",
            "mib_per_s:max",
            "--out",
            "f.csv",
        ],
    ));
    assert!(rep.contains("configuration"));
    let frontier = metrics::read_csv(std::fs::File::open(d.join("f.csv")).unwrap()).unwrap();
    assert!(!frontier.is_empty() && frontier.len() <= rows.len());
}

#[test]
fn ingest_is_incremental() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    let out = ok(&ppcs(
        d,
        &[
            "ingest",
            "--corpus",
            "c.jsonl",
            "--data-dir",
            "s",
            "--write-buffer-mib",
            "1",
        ],
    ));
    assert!(out.contains("ingested 400"));
    // re-ingesting overwrites in place
    ok(&ppcs(
        d,
        &[
            "ingest",
            "--corpus",
            "c.jsonl",
            "--data-dir",
            "s",
            "--write-buffer-mib",
            "1",
        ],
    ));
    assert!(ok(&ppcs(d, &["verify", "--corpus", "c.jsonl", "--data-dir", "s"])).contains("matched 400"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| ppcs(d, args).status.code();

    assert_eq!(code(&["no-such-command"]), Some(1));
    assert_eq!(code(&["query", "--dist", "zipf"]), Some(1));
    assert_eq!(code(&["--help"]), Some(0));

    let out = ppcs(d, &["derive-key", "Makefile", "swh:1:cnt:00"]);
    let line = ok(&out);
    assert!(line.starts_with(&hex::encode(b"\0Makefile\0swh:1:cnt:00")), "{line}");
    assert_eq!(code(&["derive-key", "a\u{1}b", ""]), Some(2));

    // corpus errors are data errors
    std::fs::write(d.join("bad.jsonl"), "{\"id\": 1}\n").unwrap();
    assert_eq!(code(&["build", "--corpus", "bad.jsonl", "--data-dir", "b"]), Some(2));
    // unreadable input is an I/O error
    assert_eq!(
        code(&["build", "--corpus", "missing.jsonl", "--data-dir", "m"]),
        Some(3)
    );

    // tampered value: verify reports an integrity failure
    gen(d);
    ok(&ppcs(
        d,
        &[
            "build",
            "--corpus",
            "c.jsonl",
            "--data-dir",
            "s",
            "--energy",
            "off",
            "--write-buffer-mib",
            "16",
        ],
    ));
    let text = std::fs::read_to_string(d.join("c.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    rec["content"] = serde_json::Value::String("eA==".into());
    lines[0] = rec.to_string();
    std::fs::write(d.join("t.jsonl"), lines.join("\n") + "\n").unwrap();
    let out = ppcs(d, &["verify", "--corpus", "t.jsonl", "--data-dir", "s"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mismatch"));

    // uniform workload larger than the store
    assert_eq!(
        code(&["query", "--data-dir", "s", "--queries", "100000", "--energy", "off"]),
        Some(1)
    );
}
