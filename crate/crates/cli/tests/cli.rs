use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bigi() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bigi"));
    for (key, _) in std::env::vars() {
        if key.starts_with("BIGI_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn bigi");
    assert!(
        out.status.success(),
        "bigi failed ({}):\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_edges(dir: &Path) -> PathBuf {
    let path = dir.join("edges.tsv");
    let mut text = String::new();
    for u in 0..20 {
        for k in 0..4 {
            let v = (u * 7 + k * 3) % 25;
            text.push_str(&format!("user{u}\titem{v}\t{}\n", 1 + k));
        }
    }
    fs::write(&path, text).unwrap();
    path
}

fn train(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let data = write_edges(dir);
    let out = dir.join(name);
    run(bigi()
        .args([
            "train",
            "--quiet",
            "--format",
            "tsv-rated",
            "--dim",
            "8",
            "--depth",
            "1",
            "--epochs",
            "2",
        ])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .args(extra));
    out
}

fn config_value(run_dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(run_dir.join("config")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap()
        .to_owned()
}

#[test]
fn train_writes_a_self_describing_run() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = train(dir.path(), "run", &["--seed", "3"]);
    for file in ["manifest", "config", "loss.csv", "epoch_2.ckpt", "test_edges.tsv"] {
        assert!(run_dir.join(file).is_file(), "missing {file}");
    }
    assert_eq!(fs::read_to_string(run_dir.join("loss.csv")).unwrap().lines().count(), 3);
    let manifest = fs::read_to_string(run_dir.join("manifest")).unwrap();
    assert!(manifest.starts_with("command=train\n"));
    assert!(manifest.contains("\nformat=tsv-rated\n"));
    assert!(manifest.contains("\nseed=3\n"));
    // 80 edges at the default 0.6 train ratio.
    assert_eq!(
        fs::read_to_string(run_dir.join("test_edges.tsv"))
            .unwrap()
            .lines()
            .count(),
        32
    );
}

#[test]
fn identical_reruns_give_identical_losses() {
    let dir = tempfile::tempdir().unwrap();
    let a = train(dir.path(), "a", &["--seed", "9"]);
    let b = train(dir.path(), "b", &["--seed", "9"]);
    let c = train(dir.path(), "c", &["--seed", "10"]);
    let loss = |d: &Path| fs::read_to_string(d.join("loss.csv")).unwrap();
    assert_eq!(loss(&a), loss(&b));
    assert_ne!(loss(&a), loss(&c));
    assert_eq!(
        fs::read(a.join("epoch_2.ckpt")).unwrap(),
        fs::read(b.join("epoch_2.ckpt")).unwrap()
    );
}

#[test]
fn even_hop_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_edges(dir.path());
    let out = bigi()
        .args(["train", "--hop", "2", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hop must be odd"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn evaluate_emits_the_topk_grid() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = train(dir.path(), "run", &[]);
    let csv = dir.path().join("m.csv");
    run(bigi()
        .args(["evaluate", "--task", "topk", "--K", "3,5,10", "--run"])
        .arg(&run_dir)
        .arg("--out")
        .arg(&csv));
    let text = fs::read_to_string(&csv).unwrap();
    let names: Vec<&str> = text
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').next())
        .filter(|n| n.contains('@'))
        .collect();
    assert_eq!(
        names,
        ["F1@10", "NDCG@3", "NDCG@5", "NDCG@10", "MAP@3", "MAP@5", "MAP@10", "MRR@3", "MRR@5", "MRR@10"]
    );

    run(bigi().args(["evaluate", "--task", "all", "--run"]).arg(&run_dir));
    let text = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(text.contains("AUC-ROC,") && text.contains("AUC-PR,"));
}

#[test]
fn evaluate_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = train(dir.path(), "run", &[]);
    fs::remove_file(run_dir.join("epoch_2.ckpt")).unwrap();
    let out = bigi().args(["evaluate", "--run"]).arg(&run_dir).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no checkpoint"));

    let out = bigi()
        .args(["evaluate", "--run"])
        .arg(&run_dir)
        .arg("--checkpoint")
        .arg(run_dir.join("epoch_9.ckpt"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch_9.ckpt"));
}

#[test]
fn evaluate_rejects_a_mismatched_variant() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = train(dir.path(), "run", &["--local-rep", "pair"]);
    let out = bigi()
        .args(["evaluate", "--local-rep", "node", "--run"])
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    run(bigi().args(["evaluate", "--local-rep", "pair", "--run"]).arg(&run_dir));
}

#[test]
fn embed_writes_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = train(dir.path(), "run", &[]);
    let tsv = dir.path().join("emb.tsv");
    run(bigi().args(["embed", "--run"]).arg(&run_dir).arg("--out").arg(&tsv));
    let text = fs::read_to_string(&tsv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    let items: std::collections::BTreeSet<_> = fs::read_to_string(dir.path().join("edges.tsv"))
        .unwrap()
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().to_owned())
        .collect();
    assert_eq!(rows.len(), 20 + items.len());
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 9);
        if i < 20 {
            assert_eq!(row[0], format!("user{i}"));
        } else {
            assert!(items.contains(row[0]));
        }
        for x in &row[1..] {
            assert!(x.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn analyze_writes_clustering_and_pair_scores() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = train(dir.path(), "run", &[]);
    let pairs = dir.path().join("pairs.tsv");
    fs::write(&pairs, "user0\titem0\nuser3\titem1\n").unwrap();
    let out = dir.path().join("analysis");
    run(bigi()
        .args(["analyze", "--clusters", "2,3", "--run"])
        .arg(&run_dir)
        .arg("--pairs")
        .arg(&pairs)
        .arg("--out")
        .arg(&out));
    let chi = fs::read_to_string(out.join("clustering.csv")).unwrap();
    for name in ["U.CHI@2", "U.CHI@3", "V.CHI@2", "V.CHI@3"] {
        assert!(chi.contains(&format!("{name},")), "{name} missing from\n{chi}");
    }
    let scores = fs::read_to_string(out.join("pair_scores.csv")).unwrap();
    let lines: Vec<&str> = scores.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "u,v,distance,score");
    assert!(lines[1].starts_with("user0,item0,1,"));

    fs::write(&pairs, "user0\tnobody\n").unwrap();
    let bad = bigi()
        .args(["analyze", "--run"])
        .arg(&run_dir)
        .arg("--pairs")
        .arg(&pairs)
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn precedence_is_file_then_env_then_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bigi.conf");
    fs::write(&cfg, "# comment\ngamma=0.7\nlambda=0.2\nbatch_size=64\n").unwrap();
    let conf = cfg.to_str().unwrap();

    let a = train(dir.path(), "a", &["--config", conf]);
    assert_eq!(config_value(&a, "gamma"), "0.7");
    assert_eq!(config_value(&a, "lambda"), "0.2");

    let data = dir.path().join("edges.tsv");
    let b = dir.path().join("b");
    run(bigi()
        .env("BIGI_LAMBDA", "0.4")
        .env("BIGI_BATCH_SIZE", "16")
        .args([
            "train",
            "--quiet",
            "--format",
            "tsv-rated",
            "--dim",
            "8",
            "--depth",
            "1",
            "--epochs",
            "1",
        ])
        .args(["--config", conf, "--batch-size", "8", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&b));
    assert_eq!(config_value(&b, "gamma"), "0.7");
    assert_eq!(config_value(&b, "lambda"), "0.4");
    assert_eq!(config_value(&b, "batch_size"), "8");
    assert_eq!(config_value(&b, "dim"), "8");
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bigi.conf");
    fs::write(&cfg, "dimension=4\n").unwrap();
    let data = write_edges(dir.path());
    let out = bigi()
        .args(["train", "--config", cfg.to_str().unwrap(), "--data"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}
