use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cogtree(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogtree"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cogtree(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_train_evaluate_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("cfg.toml"), "seed = 4\n[neural]\nhidden = 4\nepochs = 15\n").unwrap();

    ok(dir, &["synth-data", "-c", "cfg.toml", "--out", "data", "--users", "24", "--utterances", "6"]);
    assert!(dir.join("data/manifest.toml").exists());

    ok(dir, &["train", "-c", "cfg.toml", "--data", "data/manifest.toml", "--out", "t.bin", "--losses", "loss.csv"]);
    let losses = fs::read_to_string(dir.join("loss.csv")).unwrap();
    assert!(losses.starts_with("node,epoch,loss"));

    let eval = ok(dir, &["evaluate", "--tree", "t.bin", "--data", "data/manifest.toml"]);
    let mut lines = eval.lines();
    assert_eq!(lines.next(), Some("tp,fp,tn,fn,pc,rc_plus,rc_minus,f1,accuracy,video_accuracy"));
    let counts: Vec<usize> = lines.next().unwrap().split(',').take(4).map(|x| x.parse().unwrap()).collect();
    assert!(counts.iter().sum::<usize>() > 0);
    assert!(eval.contains("depth,nodes,f1,mean_f1,accuracy"));

    let predictions = ok(dir, &["predict", "--tree", "t.bin", "--data", "data/manifest.toml"]);
    assert_eq!(predictions.lines().count(), 1 + 24);

    let dot = ok(dir, &["inspect-tree", "--tree", "t.bin"]);
    assert!(dot.starts_with("digraph"));
    let table = ok(dir, &["inspect-tree", "--tree", "t.bin", "--format", "csv"]);
    assert!(table.lines().nth(1).unwrap().starts_with("0,-,0,24,"));

    let quality = ok(dir, &["partition-metrics", "--tree", "t.bin"]);
    assert!(quality.starts_with("depth,clusters,silhouette,davies_bouldin,note"));
}

#[test]
fn same_seed_gives_same_tree_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth-data", "--seed", "9", "--out", "data", "--users", "20", "--utterances", "5"]);
    ok(dir, &["build-tree", "--seed", "9", "--data", "data/manifest.toml", "--out", "a.bin"]);
    ok(dir, &["build-tree", "--seed", "9", "--data", "data/manifest.toml", "--out", "b.bin"]);
    assert_eq!(fs::read(dir.join("a.bin")).unwrap(), fs::read(dir.join("b.bin")).unwrap());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("junk.bin"), b"not a tree").unwrap();
    let out = cogtree(dir, &["inspect-tree", "--tree", "junk.bin"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));

    let out = cogtree(dir, &["build-tree", "--data", "missing.toml", "--out", "x.bin"]);
    assert!(!out.status.success());

    fs::write(dir.join("cfg.toml"), "[tree]\ntheta_e = 7.0\n").unwrap();
    let out = cogtree(dir, &["synth-data", "-c", "cfg.toml", "--out", "d"]);
    assert!(!out.status.success());
}
