//! End-to-end tests driving the installed binary exactly as a user would:
//! generate a corpus, train, annotate with both systems, score, augment,
//! and run a scripted experiment, all at toy scale.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_moranno"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should launch")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A recipe small enough that the whole pipeline runs in seconds.
const TINY_CONFIG: &str = r#"
seed = 7

[lexicon]
n_words = 12
homograph_rate = 0.25

[corpus]
n_train = 30
n_val = 8
n_test = 10

[model]
d_model = 8
n_heads = 2
n_enc_layers = 1
n_dec_layers = 1
ff_dim = 16

[train]
steps = 40
batch_size = 2
warmup_steps = 5
eval_every = 10
"#;

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path
}

fn gen(config: &Path, out: &Path, features: bool) {
    let mut args = vec![
        "gen",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    if features {
        args.push("--features");
    }
    assert_ok(&run(&args), "gen");
}

/// Every regular file under `dir`, as paths relative to it.
fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    files.sort();
    files
}

#[test]
fn gen_writes_the_advertised_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let data = dir.path().join("data");
    gen(&config, &data, true);

    for file in [
        "lexicon.json",
        "vocab.tsv",
        "train.jsonl",
        "val.jsonl",
        "test.jsonl",
        "transcripts-train.txt",
        "transcripts-val.txt",
        "transcripts-test.txt",
        "manifest.json",
    ] {
        assert!(data.join(file).is_file(), "missing {file}");
    }
    // One feature file per utterance across the three splits.
    let n_feats = walk(&data)
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .count();
    assert_eq!(n_feats, 30 + 8 + 10);

    let transcripts = std::fs::read_to_string(data.join("transcripts-test.txt")).unwrap();
    assert_eq!(transcripts.lines().count(), 10);
}

#[test]
fn gen_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    gen(&config, &a, true);
    gen(&config, &b, true);

    let files = walk(&a);
    assert_eq!(files, walk(&b), "the two runs produced different file sets");
    for rel in files {
        // The manifest records wall-clock times; everything else must match.
        if rel == Path::new("manifest.json") {
            continue;
        }
        let bytes_a = std::fs::read(a.join(&rel)).unwrap();
        let bytes_b = std::fs::read(b.join(&rel)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{} differs between reruns", rel.display());
    }
}

#[test]
fn train_annotate_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let data = dir.path().join("data");
    gen(&config, &data, false);

    let run_dir = dir.path().join("run");
    assert_ok(
        &run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
        ]),
        "train",
    );
    assert!(run_dir.join("model.ckpt").is_file());
    let log = std::fs::read_to_string(run_dir.join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,lr,train_loss,val_loss\n"));
    assert_eq!(log.lines().count(), 1 + 40, "one row per step plus header");

    assert_ok(
        &run(&[
            "annotate",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--system",
            "model",
            "--model",
            run_dir.join("model.ckpt").to_str().unwrap(),
            "--beam",
            "2",
            "--out",
            run_dir.to_str().unwrap(),
        ]),
        "annotate --system model",
    );
    let model_hyp = run_dir.join("test-model.jsonl");
    assert_eq!(
        std::fs::read_to_string(&model_hyp).unwrap().lines().count(),
        10
    );

    assert_ok(
        &run(&[
            "annotate",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--system",
            "cascade",
            "--err-rate",
            "0.2",
            "--out",
            run_dir.to_str().unwrap(),
        ]),
        "annotate --system cascade",
    );
    let cascade_hyp = run_dir.join("test-cascade.jsonl");
    assert!(cascade_hyp.is_file());

    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--hyp",
        &format!("annotator={}", model_hyp.display()),
        "--hyp",
        &format!("cascade={}", cascade_hyp.display()),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "evaluate");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("annotator"), "report names each system");
    assert!(stdout.contains("cascade"));
    assert!(eval_dir.join("test-report.txt").is_file());
    let csv = std::fs::read_to_string(eval_dir.join("test-report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2, "header plus one row per system");
}

#[test]
fn annotate_is_stable_under_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let data = dir.path().join("data");
    gen(&config, &data, false);

    let mut outputs = Vec::new();
    for (name, jobs) in [("serial", "1"), ("parallel", "4")] {
        let out_dir = dir.path().join(name);
        assert_ok(
            &run(&[
                "annotate",
                "--config",
                config.to_str().unwrap(),
                "--data",
                data.to_str().unwrap(),
                "--system",
                "cascade",
                "--err-rate",
                "0.3",
                "--jobs",
                jobs,
                "--out",
                out_dir.to_str().unwrap(),
            ]),
            "annotate",
        );
        outputs.push(std::fs::read(out_dir.join("test-cascade.jsonl")).unwrap());
    }
    assert_eq!(
        outputs[0], outputs[1],
        "thread count changed the annotation output"
    );
}

#[test]
fn augment_writes_samples_features_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let data = dir.path().join("data");
    gen(&config, &data, false);

    let aug_dir = dir.path().join("aug");
    assert_ok(
        &run(&[
            "augment",
            "--config",
            config.to_str().unwrap(),
            "--labeled",
            data.to_str().unwrap(),
            "--text",
            data.join("transcripts-val.txt").to_str().unwrap(),
            "--n-labeled",
            "12",
            "--out",
            aug_dir.to_str().unwrap(),
        ]),
        "augment",
    );

    let rows = std::fs::read_to_string(aug_dir.join("augmented.jsonl")).unwrap();
    assert!(
        rows.lines().count() >= 12,
        "expected at least the labeled originals, got {}",
        rows.lines().count()
    );
    assert!(aug_dir.join("speaker.json").is_file());
    let manifest = std::fs::read_to_string(aug_dir.join("manifest.json")).unwrap();
    for key in ["n_labeled", "n_text_only", "n_synthesized", "n_deduped", "policy"] {
        assert!(manifest.contains(key), "manifest missing {key}");
    }
    // Every sample's features were written alongside the labels.
    let n_feats = walk(&aug_dir)
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .count();
    assert_eq!(n_feats, rows.lines().count());
}

#[test]
fn experiment_runs_a_scaled_down_study_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_dir = dir.path().join("exp");
    let out = run(&[
        "experiment",
        "homograph",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "experiment homograph");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("annotator"));
    assert!(out_dir.join("experiment-homograph.json").is_file());
    assert!(out_dir.join("experiment-homograph.txt").is_file());
}

#[test]
fn rejected_config_exits_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[model]\nd_model = 9\nn_heads = 2\n").unwrap();
    let out = run(&[
        "gen",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("data").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn malformed_hyp_spec_exits_with_the_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let data = dir.path().join("data");
    gen(&config, &data, false);
    let out = run(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--hyp",
        "no-equals-sign",
        "--out",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_model_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let data = dir.path().join("data");
    gen(&config, &data, false);
    let out = run(&[
        "annotate",
        "--data",
        data.to_str().unwrap(),
        "--system",
        "model",
        "--out",
        dir.path().join("ann").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
}
