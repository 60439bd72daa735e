use std::path::Path;
use std::process::{Command, Output};

use qvf_core::merge::{Tensor, TensorFile};

fn qvf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvf"))
        .args(args)
        .output()
        .expect("spawn qvf")
}

fn ok(args: &[&str]) -> serde_json::Value {
    let out = qvf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn diagnostic(out: &Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim())
        .unwrap_or_else(|_| panic!("stderr is not one JSON line: {line}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn chain(dir: &Path, pool: &str) {
    let tasks = dir.join("tasks.jsonl");
    let cands = dir.join("cands.jsonl");
    let run = dir.join("run");
    ok(&[
        "generate",
        "--count",
        "12",
        "--seed",
        "7",
        "--out",
        s(&tasks),
    ]);
    ok(&[
        "sample",
        "--tasks",
        s(&tasks),
        "--seed",
        "7",
        "--n",
        "8",
        "--out",
        s(&cands),
    ]);
    ok(&[
        "verify",
        "--tasks",
        s(&tasks),
        "--candidates",
        s(&cands),
        "--pool-size",
        pool,
        "--out-dir",
        s(&run),
    ]);
    ok(&[
        "mine-dpo",
        "--buckets",
        s(&run),
        "--seed",
        "7",
        "--n-per-prompt",
        "8",
        "--out",
        s(&dir.join("pairs.jsonl")),
    ]);
}

const CHAIN_FILES: [&str; 9] = [
    "tasks.jsonl",
    "tasks.jsonl.manifest.json",
    "cands.jsonl",
    "cands.jsonl.manifest.json",
    "run/bucket_a.jsonl",
    "run/bucket_b.jsonl",
    "run/run.json",
    "pairs.jsonl",
    "pairs.jsonl.manifest.json",
];

#[test]
fn chain_is_byte_identical_across_reruns_and_pool_sizes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    chain(a.path(), "1");
    chain(b.path(), "8");
    for f in CHAIN_FILES {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    assert!(a.path().join("run/timing.json").exists());
}

#[test]
fn artifacts_carry_hash_and_prng() {
    let dir = tempfile::tempdir().unwrap();
    chain(dir.path(), "2");
    for f in [
        "tasks.jsonl.manifest.json",
        "cands.jsonl.manifest.json",
        "run/run.json",
        "pairs.jsonl.manifest.json",
    ] {
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(f)).unwrap()).unwrap();
        assert_eq!(v["config_hash"].as_str().unwrap().len(), 64, "{f}");
        assert!(
            v["prng_algorithm"].as_str().unwrap().starts_with("chacha8"),
            "{f}"
        );
    }
    let m: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("cands.jsonl.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["input_digests"]["tasks"].as_str().unwrap().len(), 64);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 3, "count": 5}"#).unwrap();
    let out = dir.path().join("t.jsonl");
    let v = ok(&["--config", s(&cfg), "generate", "--out", s(&out)]);
    assert_eq!(v["counts"]["tasks"], 5);
    let v = ok(&[
        "--config",
        s(&cfg),
        "generate",
        "--count",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(v["counts"]["tasks"], 2);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("t.jsonl.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["seeds"]["config"], 3);
}

#[test]
fn config_errors_exit_2_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sede": 3}"#).unwrap();
    let out = dir.path().join("t.jsonl");
    let cases: Vec<Vec<&str>> = vec![
        vec!["--config", s(&cfg), "generate", "--out", s(&out)],
        vec!["generate", "--count", "0", "--out", s(&out)],
        vec!["generate", "--families", "t9", "--out", s(&out)],
        vec!["frobnicate"],
        vec![
            "merge",
            "--a",
            "x",
            "--b",
            "y",
            "--t",
            "1.5",
            "--out",
            s(&out),
        ],
        vec![
            "sample",
            "--tasks",
            "/nonexistent/tasks.jsonl",
            "--out",
            s(&out),
        ],
        vec![
            "sample",
            "--tasks",
            s(&cfg),
            "--generator",
            "http",
            "--out",
            s(&out),
        ],
    ];
    for args in cases {
        let o = qvf(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let d = diagnostic(&o);
        assert_eq!(d["error"]["kind"], "config", "{args:?}");
        assert_eq!(d["error"]["exit_code"], 2);
    }
    assert!(!out.exists());
}

#[test]
fn unreachable_generator_exits_3_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    let cands = dir.path().join("cands.jsonl");
    ok(&["generate", "--count", "2", "--out", s(&tasks)]);
    let o = qvf(&[
        "sample",
        "--tasks",
        s(&tasks),
        "--generator",
        "http",
        "--endpoint",
        "http://127.0.0.1:9",
        "--out",
        s(&cands),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(diagnostic(&o)["error"]["kind"], "infrastructure");
    let m: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("cands.jsonl.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["failures"].as_array().unwrap().len(), 2);
}

#[test]
fn help_and_version_exit_0() {
    for flag in ["--help", "--version"] {
        let o = qvf(&[flag]);
        assert!(o.status.success());
        assert!(!o.stdout.is_empty());
    }
}

fn tensors(scale: f32) -> TensorFile {
    TensorFile {
        tensors: vec![
            Tensor::new("w", vec![2, 2], vec![1.0 * scale, -2.0, 0.5, 3.0]).unwrap(),
            Tensor::new("b", vec![3], vec![0.0, 1.0, scale]).unwrap(),
        ],
    }
}

#[test]
fn merge_endpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.qt"), dir.path().join("b.qt"));
    tensors(1.0).write(&a).unwrap();
    tensors(-4.0).write(&b).unwrap();
    let out = dir.path().join("m.qt");
    for (t, src) in [("0", &a), ("1", &b)] {
        ok(&[
            "merge",
            "--a",
            s(&a),
            "--b",
            s(&b),
            "--t",
            t,
            "--out",
            s(&out),
        ]);
        let merged = TensorFile::read(&out).unwrap();
        assert_eq!(merged, TensorFile::read(src).unwrap().canonical());
    }
    let v = ok(&[
        "merge",
        "--a",
        s(&a),
        "--b",
        s(&b),
        "--t",
        "0.5",
        "--out",
        s(&out),
    ]);
    assert_eq!(v["counts"]["tensors"], 2);
    let side: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m.qt.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(side["details"]["tensors"].as_array().unwrap().len(), 2);
    assert_eq!(side["input_digests"].as_object().unwrap().len(), 2);
}

#[test]
fn eval_and_grpo_batch_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    let bench = dir.path().join("bench.jsonl");
    let report = dir.path().join("report.json");
    ok(&[
        "generate",
        "--count",
        "6",
        "--seed",
        "11",
        "--out",
        s(&tasks),
    ]);
    ok(&["make-bench", "--tasks", s(&tasks), "--out", s(&bench)]);
    let v = ok(&[
        "eval",
        "--bench",
        s(&bench),
        "--n",
        "16",
        "--k",
        "1",
        "--k",
        "4,8",
        "--out",
        s(&report),
    ]);
    let p = &v["pass_at_k"];
    let (p1, p4, p8) = (
        p["pass@1"].as_f64().unwrap(),
        p["pass@4"].as_f64().unwrap(),
        p["pass@8"].as_f64().unwrap(),
    );
    assert!(p1 <= p4 && p4 <= p8, "{p}");
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["schema"], "report/1");

    let greedy = ok(&[
        "eval",
        "--bench",
        s(&bench),
        "--greedy",
        "--mutation-rate",
        "0",
        "--out",
        s(&report),
    ]);
    assert_eq!(greedy["pass_at_k"]["pass@1"], 1.0);

    let grpo = dir.path().join("grpo.jsonl");
    let v = ok(&[
        "grpo-batch",
        "--tasks",
        s(&tasks),
        "--group-size",
        "6",
        "--out",
        s(&grpo),
    ]);
    assert_eq!(v["counts"]["groups"], 6);
    let text = std::fs::read_to_string(&grpo).unwrap();
    for line in text.lines() {
        let g: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(g["schema"], "grpo/1");
        let adv: Vec<f64> = g["advantages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(adv.len(), 6);
        assert!(adv.iter().sum::<f64>().abs() < 1e-9);
    }
}
