use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn delirium(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delirium"))
        .args(args)
        .env_remove("DELIRIUM_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = delirium(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, notes: usize, seed: u64) -> PathBuf {
    let out = dir.join("synth");
    ok(&["--out-dir", p(&out), "--seed", &seed.to_string(), "synth", "--notes", &notes.to_string()]);
    out.join("corpus.jsonl")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evaluate_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 20, 1);
    let out = dir.path().join("eval");
    let text = ok(&["--out-dir", p(&out), "evaluate", "--gold", p(&corpus), "--pred", p(&corpus)]);
    assert!(text.contains("Micro average"));
    let report = json(&out.join("eval_report.json"));
    for mode in ["strict", "lenient"] {
        assert_eq!(report[mode]["micro"]["f1"], 1.0);
        assert_eq!(report[mode]["micro"]["precision"], 1.0);
    }
    assert!(out.join("eval_report.csv").exists());
    assert!(out.join("evaluate.manifest.json").exists());
}

#[test]
fn filter_then_sample_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 1000, 2);
    let f = dir.path().join("filter");
    ok(&["--out-dir", p(&f), "filter", "--corpus", p(&corpus), "--min-hits", "3"]);
    let ids = f.join("filtered_ids.txt");
    assert!(fs::read_to_string(&ids).unwrap().lines().count() >= 600);
    let mut lists = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        ok(&["--out-dir", p(&out), "--seed", "42", "sample", "--ids", p(&ids), "--n", "600"]);
        lists.push(fs::read_to_string(out.join("sampled_ids.txt")).unwrap());
    }
    assert_eq!(lists[0], lists[1]);
    assert_eq!(lists[0].lines().count(), 600);
}

#[test]
fn summarize_percentages_follow_split_totals() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 60, 3);
    let split = dir.path().join("split");
    ok(&["--out-dir", p(&split), "--seed", "3", "split", "--corpus", p(&corpus)]);
    let out = dir.path().join("summary");
    let text = ok(&[
        "--out-dir",
        p(&out),
        "summarize",
        "--corpus",
        p(&corpus),
        "--split",
        p(&split.join("split.tsv")),
    ]);
    assert!(text.contains("Psychomotor activity"));
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<(String, u64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    for split in ["train", "dev", "test"] {
        let total: u64 = rows.iter().filter(|r| r.0 == split).map(|r| r.1).sum();
        for (_, count, pct) in rows.iter().filter(|r| r.0 == split) {
            let expected = (*count as f64 * 100.0 / total as f64 * 100.0).round() / 100.0;
            assert!((pct - expected).abs() < 1e-9, "{split}: {count}/{total} -> {pct}");
        }
    }
}

#[test]
fn corrupted_intermediate_aborts_naming_stage() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 30, 4);
    let split = dir.path().join("split");
    ok(&["--out-dir", p(&split), "--seed", "4", "split", "--corpus", p(&corpus)]);
    let pre = dir.path().join("pre");
    ok(&["--out-dir", p(&pre), "preprocess", p(&split.join("train.jsonl"))]);
    let seq = pre.join("train.seq");
    let mut text = fs::read_to_string(&seq).unwrap();
    text.insert_str(text.len() / 2, "\ngarbage line without tabs\n");
    fs::write(&seq, text).unwrap();
    let out = delirium(&["--out-dir", p(&dir.path().join("model")), "--seed", "4", "train", "--train", p(&seq)]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("train stage failed"), "{stderr}");
    assert!(stderr.contains("train.seq"), "{stderr}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(delirium(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(delirium(&["--out-dir", p(&out), "synth"]).status.code(), Some(2));
    let missing = delirium(&["--out-dir", p(&out), "evaluate", "--gold", "nope.jsonl", "--pred", "nope.jsonl"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.jsonl"));
    let no_out = delirium(&["--seed", "1", "synth"]);
    assert_eq!(no_out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_out.stderr).contains("DELIRIUM_OUT"));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_delirium"))
        .args(["--seed", "1", "synth", "--notes", "3"])
        .env("DELIRIUM_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("corpus.jsonl").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let out = dir.path().join("cfg-out");
    fs::write(
        &config,
        format!("seed = 1\n[paths]\nout_dir = \"{}\"\n[synth]\nnotes = 4\n", out.display()),
    )
    .unwrap();
    ok(&["--config", p(&config), "synth"]);
    let m = json(&out.join("synth.manifest.json"));
    assert_eq!(m["seed"], 1);
    assert_eq!(m["params"]["notes"], 4);
    ok(&["--config", p(&config), "--seed", "9", "synth", "--notes", "5"]);
    let m = json(&out.join("synth.manifest.json"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["params"]["notes"], 5);
    fs::write(&config, "seed = 1\nbogus_key = 2\n").unwrap();
    assert_eq!(delirium(&["--config", p(&config), "synth"]).status.code(), Some(2));
}

fn full_config(dir: &Path, corpus: &Path, out: &Path) -> PathBuf {
    let config = dir.join("pipeline.toml");
    fs::write(
        &config,
        format!(
            "seed = 7\n[paths]\ncorpus = \"{}\"\nout_dir = \"{}\"\n[sample]\nn = 50\n[train]\nepochs = 8\n",
            corpus.display(),
            out.display()
        ),
    )
    .unwrap();
    config
}

#[test]
fn separate_stages_match_monolithic_run() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 80, 7);
    let before = fs::read(&corpus).unwrap();
    let mono = dir.path().join("mono");
    ok(&["--config", p(&full_config(dir.path(), &corpus, &mono)), "run"]);
    assert_eq!(fs::read(&corpus).unwrap(), before, "corpus was modified");

    let s = dir.path().join("staged");
    let d = |x: &str| s.join(x);
    let c = p(&corpus);
    ok(&["--out-dir", p(&d("filter")), "filter", "--corpus", c]);
    ok(&["--out-dir", p(&d("sample")), "--seed", "7", "sample", "--ids", p(&d("filter/filtered_ids.txt")), "--n", "50"]);
    ok(&["--out-dir", p(&d("split")), "--seed", "7", "split", "--corpus", c, "--ids", p(&d("sample/sampled_ids.txt"))]);
    ok(&[
        "--out-dir",
        p(&d("preprocess")),
        "preprocess",
        p(&d("split/train.jsonl")),
        p(&d("split/dev.jsonl")),
        p(&d("split/test.jsonl")),
    ]);
    ok(&[
        "--out-dir",
        p(&d("train")),
        "--seed",
        "7",
        "train",
        "--train",
        p(&d("preprocess/train.seq")),
        "--dev",
        p(&d("preprocess/dev.seq")),
        "--epochs",
        "8",
    ]);
    ok(&["--out-dir", p(&d("predict")), "predict", "--model", p(&d("train/model.bin")), "--input", p(&d("preprocess/test.seq"))]);
    ok(&["--out-dir", p(&d("evaluate")), "evaluate", "--gold", p(&d("split/test.jsonl")), "--pred", p(&d("predict/predictions.seq"))]);
    ok(&["--out-dir", p(&d("confusion")), "confusion", "--gold", p(&d("split/test.jsonl")), "--pred", p(&d("predict/predictions.seq"))]);

    for f in [
        "split/split.tsv",
        "train/model.bin",
        "predict/predictions.seq",
        "evaluate/eval_report.json",
        "evaluate/eval_report.txt",
        "evaluate/eval_report.csv",
        "confusion/confusion.csv",
    ] {
        assert_eq!(fs::read(mono.join(f)).unwrap(), fs::read(s.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn rerun_from_manifest_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke");
    ok(&["--out-dir", p(&out), "--seed", "11", "smoke", "--notes", "40"]);
    for stage in ["train", "evaluate"] {
        let manifest = out.join(stage).join(format!("{stage}.manifest.json"));
        let before = fs::read(&manifest).unwrap();
        ok(&["rerun", p(&manifest)]);
        assert_eq!(fs::read(&manifest).unwrap(), before, "{stage}");
    }
}

#[test]
fn agreement_between_annotators() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("two.jsonl");
    fs::write(
        &corpus,
        concat!(
            r#"{"id":"a","text":"Pt is confused and agitated.","annotations":["#,
            r#"{"start":6,"end":14,"category":"DisturbedAttention","surface":"confused","annotator":"x"},"#,
            r#"{"start":6,"end":14,"category":"DisturbedAttention","surface":"confused","annotator":"y"},"#,
            r#"{"start":19,"end":27,"category":"PsychomotorActivity","surface":"agitated","annotator":"x"}]}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("agree");
    let text = ok(&["--out-dir", p(&out), "agreement", "--corpus", p(&corpus), "--reference", "x", "--response", "y"]);
    assert!(text.contains("strict"));
    let a = json(&out.join("agreement.json"));
    assert_eq!(a["strict"]["precision"], 1.0);
    assert_eq!(a["strict"]["recall"], 0.5);
}
