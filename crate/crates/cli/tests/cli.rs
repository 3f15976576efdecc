use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_genotok"));
    c.env_remove("GENOTOK_SEED").env_remove("GENOTOK_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_jsonl(path: PathBuf) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut fasta = String::new();
    let bases = b"ACGT";
    let mut x: u64 = 12345;
    for r in 0..30 {
        fasta.push_str(&format!(">rec{r} sample\n"));
        let len = 20 + (r * 37) % 900;
        for i in 0..len {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            fasta.push(if r % 7 == 3 && i % 50 < 4 { 'N' } else { bases[(x >> 62) as usize] as char });
            if i % 60 == 59 {
                fasta.push('\n');
            }
        }
        fasta.push('\n');
    }
    std::fs::write(dir.path().join("in.fa"), fasta).unwrap();
    ok(dir.path(), &["build-vocab", "--kind", "kmer", "--k", "3", "-o", "v3.json"]);
    dir
}

fn manifest_digest(dir: &Path, name: &str) -> String {
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.manifest.json"))).unwrap())
            .unwrap();
    m["outputs"][0]["sha256"].as_str().unwrap().to_string()
}

#[test]
fn mask_is_deterministic_across_runs_and_threads() {
    let dir = fixture();
    let d = dir.path();
    let base = ["mask", "--vocab", "v3.json", "-i", "in.fa", "--seed", "11"];
    ok(d, &[&base[..], &["-o", "a.jsonl", "--threads", "1"]].concat());
    ok(d, &[&base[..], &["-o", "b.jsonl", "--threads", "1"]].concat());
    ok(d, &[&base[..], &["-o", "c.jsonl", "--threads", "4"]].concat());
    let a = manifest_digest(d, "a.jsonl");
    assert_eq!(a, manifest_digest(d, "b.jsonl"));
    assert_eq!(a, manifest_digest(d, "c.jsonl"));
    assert_eq!(
        std::fs::read(d.join("a.jsonl")).unwrap(),
        std::fs::read(d.join("c.jsonl")).unwrap()
    );

    let mut env_run = bin();
    env_run
        .current_dir(d)
        .env("GENOTOK_SEED", "11")
        .args(["mask", "--vocab", "v3.json", "-i", "in.fa", "-o", "e.jsonl"]);
    assert!(env_run.status().unwrap().success());
    assert_eq!(a, manifest_digest(d, "e.jsonl"));

    ok(d, &["mask", "--vocab", "v3.json", "-i", "in.fa", "--seed", "12", "-o", "f.jsonl"]);
    assert_ne!(a, manifest_digest(d, "f.jsonl"));
}

#[test]
fn batch_records_follow_input_order() {
    let dir = fixture();
    let d = dir.path();
    ok(d, &["mask", "--vocab", "v3.json", "-i", "in.fa", "-o", "a.jsonl", "--max-len", "100"]);
    let recs = read_jsonl(d.join("a.jsonl"));
    let mut last = (0usize, -1i64);
    for r in &recs {
        let id = r["seq_id"].as_str().unwrap();
        let (rec, win) = match id.split_once('/') {
            Some((a, b)) => (a, b.parse::<i64>().unwrap()),
            None => (id, 0),
        };
        let n: usize = rec.trim_start_matches("rec").parse().unwrap();
        assert!((n, win) > last, "{id} after {last:?}");
        last = (n, win);
        assert!(r["input_ids"].as_array().unwrap().len() <= 100);
    }
    assert!(recs.len() > 30);
}

#[test]
fn flawed_and_fixed_differ_in_specials_and_labels() {
    let dir = fixture();
    let d = dir.path();
    let base = ["mask", "--vocab", "v3.json", "-i", "in.fa", "--p", "0.3"];
    ok(d, &[&base[..], &["-o", "fixed.jsonl"]].concat());
    ok(d, &[&base[..], &["-o", "flawed.jsonl", "--mode", "flawed"]].concat());
    let vocab: Value = serde_json::from_str(&std::fs::read_to_string(d.join("v3.json")).unwrap()).unwrap();
    let mask = vocab["specials"]["MASK"].as_u64().unwrap();
    let fixed = read_jsonl(d.join("fixed.jsonl"));
    let flawed = read_jsonl(d.join("flawed.jsonl"));
    let mut masked_sentinel = 0;
    for (a, b) in fixed.iter().zip(&flawed) {
        assert_eq!(a["seq_id"], b["seq_id"]);
        // same targets, different expansion
        assert_eq!(a["m"], b["m"]);
        let ids = a["input_ids"].as_array().unwrap();
        assert_ne!(ids[0].as_u64(), Some(mask));
        assert_ne!(ids.last().unwrap().as_u64(), Some(mask));
        let label_keys = |r: &Value| -> Vec<usize> {
            r["labels"].as_object().unwrap().keys().map(|k| k.parse().unwrap()).collect()
        };
        let sorted = |mut v: Vec<usize>| {
            v.sort();
            v
        };
        let m: Vec<usize> = serde_json::from_value(a["m"].clone()).unwrap();
        let m_in_flawed: Vec<usize> = serde_json::from_value(b["m_in"].clone()).unwrap();
        assert_eq!(sorted(label_keys(a)), m);
        assert_eq!(sorted(label_keys(b)), m_in_flawed);
        let fl = b["input_ids"].as_array().unwrap();
        if fl[0].as_u64() == Some(mask) || fl.last().unwrap().as_u64() == Some(mask) {
            masked_sentinel += 1;
        }
    }
    assert!(masked_sentinel > 0);
}

#[test]
fn guiding_tasks_and_gzip() {
    let dir = fixture();
    let d = dir.path();
    for task in ["ftm", "mst", "sop", "csp"] {
        let out = format!("{task}.jsonl");
        ok(d, &["guide", "--vocab", "v3.json", "-i", "in.fa", "--task", task, "-o", &out, "--sop-prob", "0.5"]);
        let recs = read_jsonl(d.join(&out));
        assert!(recs.iter().all(|r| r["guiding"]["task"] == task));
        if task == "sop" {
            assert!(recs.iter().any(|r| r["guiding"]["label"] == 1));
            assert!(recs.iter().any(|r| r["guiding"]["label"] == 0));
        }
    }
    ok(d, &["mask", "--vocab", "v3.json", "-i", "in.fa", "-o", "z.jsonl.gz", "--gzip"]);
    let gz = std::fs::read(d.join("z.jsonl.gz")).unwrap();
    assert_eq!(&gz[..2], &[0x1f, 0x8b]);

    ok(d, &["build-vocab", "--kind", "kmer", "--k", "1", "-o", "v1.json"]);
    let out = run(d, &["guide", "--vocab", "v1.json", "-i", "in.fa", "--task", "ftm", "-o", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported_task"));
}

#[test]
fn empty_fasta_gives_empty_batch() {
    let dir = fixture();
    let d = dir.path();
    std::fs::write(d.join("empty.fa"), "").unwrap();
    ok(d, &["mask", "--vocab", "v3.json", "-i", "empty.fa", "-o", "e.jsonl"]);
    assert_eq!(std::fs::read(d.join("e.jsonl")).unwrap().len(), 0);
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("e.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["records"], 0);
    assert_eq!(m["config"]["seed"], 0);
}

#[test]
fn exit_codes() {
    let dir = fixture();
    let d = dir.path();
    assert_eq!(run(d, &["nonsense"]).status.code(), Some(1));
    assert_eq!(run(d, &["mask", "--vocab", "v3.json"]).status.code(), Some(1));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    assert_eq!(
        run(d, &["mask", "--vocab", "v3.json", "-i", "in.fa", "-o", "x", "--p", "2"]).status.code(),
        Some(1)
    );

    std::fs::write(d.join("bad.fa"), ">a\nACGT\nACXT\n").unwrap();
    let out = run(d, &["mask", "--vocab", "v3.json", "-i", "bad.fa", "-o", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.fa:3"), "{err}");

    let out = run(d, &["cull", "--vocab", "v3.json", "--remove", "0,1,2,3,4,5,6", "-o", "c.json"]);
    assert_eq!(out.status.code(), Some(3));
    ok(d, &["cull", "--vocab", "v3.json", "--remove", "0,1,2,3,4,5", "-o", "c.json", "--remap", "r.json"]);
    let remap: Vec<u32> = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(remap.len(), 69);
    assert!(remap[..6].iter().all(|&i| i == remap[0]));
}

#[test]
fn tokenize_and_leakage() {
    let dir = fixture();
    let d = dir.path();
    ok(d, &["tokenize", "--vocab", "v3.json", "-i", "in.fa", "-o", "t.jsonl", "--no-sentinels"]);
    let recs = read_jsonl(d.join("t.jsonl"));
    assert_eq!(recs.len(), 30);
    assert_eq!(recs[0]["ids"].as_array().unwrap().len(), 18);

    let out = ok(d, &["leakage", "--k", "3", "--m", "4"]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["ratio_percent"], 50.0);
    assert_eq!(r["candidate_sizes"], serde_json::json!([4, 16, 16, 4]));

    ok(d, &["mask", "--vocab", "v3.json", "-i", "in.fa", "-o", "m.jsonl"]);
    let out = ok(d, &["leakage", "--k", "3", "--batch", "m.jsonl"]);
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), read_jsonl(d.join("m.jsonl")).len());
    assert!(lines.iter().all(|l| (0.0..=100.0).contains(&l["leakage"].as_f64().unwrap())));
}

#[test]
fn vocab_stats_and_bpe() {
    let dir = fixture();
    let d = dir.path();
    let acc: String = std::iter::once("token_id,accuracy".to_string())
        .chain((0..64).map(|i| format!("{i},{}", (i * 7 % 64) as f64 / 64.0)))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(d.join("acc.csv"), acc).unwrap();
    ok(d, &[
        "vocab-stats", "--vocab", "v3.json", "-i", "in.fa", "--accuracy", "acc.csv", "-o", "s.csv",
    ]);
    let csv = std::fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",low") || l.ends_with(",high")));

    ok(d, &["build-vocab", "--kind", "bpe", "--corpus", "in.fa", "--size", "40", "-o", "b1.json"]);
    ok(d, &["build-vocab", "--kind", "bpe", "--corpus", "in.fa", "--size", "40", "-o", "b2.json"]);
    assert_eq!(std::fs::read(d.join("b1.json")).unwrap(), std::fs::read(d.join("b2.json")).unwrap());
    ok(d, &["mask", "--vocab", "b1.json", "-i", "in.fa", "-o", "bpe.jsonl"]);
}

#[test]
fn benchstats_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut runs = String::from("dataset_id,variant,seed,metric_value\n");
    let mut scaling = String::from("dataset_id,pretrain_size,metric_value\n");
    for (i, name) in ["a", "b", "c", "d"].iter().enumerate() {
        let spread = [0.1, 0.12, 0.11, 5.0][i];
        for s in 0..3 {
            runs.push_str(&format!("{name},pretrained,{s},{}\n", 60.0 + spread * s as f64));
        }
        runs.push_str(&format!("{name},baseline:cnn,0,50\n"));
        for (j, x) in ["1e6", "1e7", "1e8"].iter().enumerate() {
            scaling.push_str(&format!("{name},{x},{}\n", 50 + j));
        }
    }
    std::fs::write(d.join("runs.csv"), runs).unwrap();
    std::fs::write(d.join("scaling.csv"), scaling).unwrap();
    let out = ok(d, &[
        "benchstats", "--runs", "runs.csv", "--scaling", "scaling.csv", "--format", "json", "--report", "r.json",
    ]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["datasets"]["a"]["selected"], true);
    assert_eq!(r["datasets"]["d"]["stability"], "fail");
    assert!(d.join("r.json").exists());
    let table = ok(d, &["benchstats", "--runs", "runs.csv", "--scaling", "scaling.csv", "--std", "population"]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("threshold="));
}
