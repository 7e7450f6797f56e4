use std::path::Path;
use std::process::{Command, Output};

fn compex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compex"))
        .args(args)
        .env_remove("COMPEX_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout {}\nstderr {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fails_with(out: &Output, code: i32) -> String {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    let last = err.lines().last().unwrap_or("");
    assert!(last.starts_with("error:"), "{err}");
    err
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn prepare_reports_stats_of_a_camera_review_shaped_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    ok(&compex(&[
        "synth",
        "--shape",
        "camera-review",
        "--seed",
        "1",
        "--output",
        p(&raw),
    ]));
    let out = dir.path().join("prepared.jsonl");
    let stats = dir.path().join("stats.json");
    let stdout = ok(&compex(&[
        "prepare",
        "--input",
        p(&raw),
        "--output",
        p(&out),
        "--stats",
        p(&stats),
    ]));
    assert!(stdout.contains("sentences 1279"));
    assert!(stdout.contains("relations 1780"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(json["counts"]["1"], 952);
}

#[test]
fn prepare_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("empty.jsonl");
    std::fs::write(&raw, "\n").unwrap();
    let out = dir.path().join("out.jsonl");
    fails_with(
        &compex(&["prepare", "--input", p(&raw), "--output", p(&out)]),
        2,
    );
    assert!(!out.exists());
}

#[test]
fn prepare_warns_once_for_an_ungrounded_relation() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    std::fs::write(
        &raw,
        concat!(
            r#"{"id":"a","text":"D80 beats D70 on weight","relations":[{"t1":"D80","t2":"D70","aspect":"weight"}]}"#,
            "\n",
            r#"{"id":"b","text":"D80 beats D70 on weight","relations":[{"t1":"D80","t2":"D90","aspect":"weight"}]}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = compex(&[
        "prepare",
        "--input",
        p(&raw),
        "--output",
        p(&dir.path().join("o.jsonl")),
    ]);
    ok(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let warnings: Vec<&str> = stderr
        .lines()
        .filter(|l| l.starts_with("warning:"))
        .collect();
    assert_eq!(warnings.len(), 1, "{stderr}");
    assert!(warnings[0].contains("D90"));
}

#[test]
fn prepare_reads_tsv_and_rejects_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.tsv");
    std::fs::write(
        &raw,
        "1\tD80 beats D70 on weight\tD80\tD70\tweight\n2\tnothing here\n",
    )
    .unwrap();
    let out = dir.path().join("o.jsonl");
    let stdout = ok(&compex(&[
        "prepare",
        "--input",
        p(&raw),
        "--output",
        p(&out),
    ]));
    assert!(stdout.contains("sentences 2") && stdout.contains("relations 1"));
    let first = std::fs::read_to_string(&out).unwrap();
    assert!(
        first.starts_with(r#"{"id":"1","text":"D80 beats D70 on weight","relations":[{"t1":"D80""#)
    );

    std::fs::write(&raw, "1\tonly\tthree\n").unwrap();
    let err = fails_with(
        &compex(&["prepare", "--input", p(&raw), "--output", p(&out)]),
        2,
    );
    assert!(err.contains("line 1"));
}

#[test]
fn eval_of_gold_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    ok(&compex(&[
        "synth",
        "--sentences",
        "40",
        "--output",
        p(&gold),
    ]));
    let out_dir = dir.path().join("metrics");
    let stdout = ok(&compex(&[
        "eval",
        "--predictions",
        p(&gold),
        "--gold",
        p(&gold),
        "--out-dir",
        p(&out_dir),
    ]));
    assert!(stdout.lines().nth(1).unwrap().starts_with("all"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(json["overall"]["f1"], 1.0);
    assert_eq!(json["predictions_deduplicated"], true);
    assert!(out_dir.join("metrics.txt").is_file());
}

#[test]
fn eval_reports_missing_ids() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    ok(&compex(&[
        "synth",
        "--sentences",
        "10",
        "--output",
        p(&gold),
    ]));
    let pred = dir.path().join("pred.jsonl");
    let text = std::fs::read_to_string(&gold).unwrap();
    std::fs::write(&pred, text.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
    let err = fails_with(
        &compex(&[
            "eval",
            "--predictions",
            p(&pred),
            "--gold",
            p(&gold),
            "--out-dir",
            p(dir.path()),
        ]),
        2,
    );
    assert!(err.contains("syn-00001"), "{err}");
}

#[test]
fn augment_rejects_zero_pairs_and_appends_otherwise() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    ok(&compex(&[
        "synth",
        "--sentences",
        "12",
        "--output",
        p(&train),
    ]));
    let out = dir.path().join("aug.jsonl");
    fails_with(
        &compex(&[
            "augment",
            "--input",
            p(&train),
            "--num-pairs",
            "0",
            "--output",
            p(&out),
        ]),
        2,
    );
    ok(&compex(&[
        "augment",
        "--input",
        p(&train),
        "--num-pairs",
        "5",
        "--output",
        p(&out),
    ]));
    let lines = std::fs::read_to_string(&out).unwrap().lines().count();
    assert_eq!(lines, 17);
    fails_with(
        &compex(&[
            "augment",
            "--input",
            p(&train),
            "--num-pairs",
            "1000",
            "--output",
            p(&out),
        ]),
        2,
    );
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: Option<&str>, name: &str| {
        let path = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_compex"));
        cmd.args(["synth", "--sentences", "20", "--output", p(&path)]);
        match seed {
            Some(s) => cmd.env("COMPEX_SEED", s),
            None => cmd.env_remove("COMPEX_SEED"),
        };
        ok(&cmd.output().unwrap());
        std::fs::read_to_string(path).unwrap()
    };
    assert_eq!(run(Some("9"), "a"), run(Some("9"), "b"));
    assert_ne!(run(Some("9"), "c"), run(None, "d"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fails_with(&compex(&["train", "--out-dir", p(dir.path())]), 2);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let err = fails_with(&compex(&["train", "--config", p(&cfg)]), 2);
    assert!(err.contains("bogus"));
    assert_eq!(compex(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn crf_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    ok(&compex(&[
        "synth",
        "--sentences",
        "120",
        "--seed",
        "3",
        "--output",
        p(&data),
    ]));
    let run = dir.path().join("run");
    let cfg = dir.path().join("crf.cfg");
    std::fs::write(
        &cfg,
        format!("data = {}\nbackend = crf\ncrf_epochs = 5\n", data.display()),
    )
    .unwrap();
    ok(&compex(&[
        "train",
        "--config",
        p(&cfg),
        "--out-dir",
        p(&run),
    ]));
    for f in [
        "train.jsonl",
        "dev.jsonl",
        "test.jsonl",
        "model.json",
        "loss.csv",
        "config.txt",
        "train_report.json",
    ] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert_eq!(
        std::fs::read_to_string(run.join("test.jsonl"))
            .unwrap()
            .lines()
            .count(),
        24
    );
    let pred = dir.path().join("pred.jsonl");
    let audit = dir.path().join("audit.jsonl");
    ok(&compex(&[
        "extract",
        "--checkpoint",
        p(&run.join("model.json")),
        "--input",
        p(&run.join("test.jsonl")),
        "--output",
        p(&pred),
        "--audit",
        p(&audit),
    ]));
    assert_eq!(std::fs::read_to_string(&audit).unwrap().lines().count(), 24);
    let stdout = ok(&compex(&[
        "eval",
        "--predictions",
        p(&pred),
        "--gold",
        p(&run.join("test.jsonl")),
        "--out-dir",
        p(&dir.path().join("m")),
    ]));
    assert!(stdout.contains("all"));
}

#[test]
fn mini_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    ok(&compex(&[
        "synth",
        "--sentences",
        "30",
        "--output",
        p(&data),
    ]));
    let mut predictions = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        ok(&compex(&[
            "train",
            "--data",
            p(&data),
            "--out-dir",
            p(&run),
            "--epochs",
            "2",
            "--seed",
            "5",
            "--set",
            "width=16",
            "--set",
            "ffn_width=32",
            "--set",
            "heads=2",
        ]));
        let pred = run.join("pred.jsonl");
        ok(&compex(&[
            "extract",
            "--checkpoint",
            p(&run.join("model.json")),
            "--input",
            p(&run.join("test.jsonl")),
            "--output",
            p(&pred),
        ]));
        let metrics = run.join("metrics");
        ok(&compex(&[
            "eval",
            "--predictions",
            p(&pred),
            "--gold",
            p(&run.join("test.jsonl")),
            "--out-dir",
            p(&metrics),
        ]));
        assert!(std::fs::read_to_string(run.join("loss.csv"))
            .unwrap()
            .starts_with("epoch,mean_loss\n1,"));
        let config = std::fs::read_to_string(run.join("config.txt")).unwrap();
        assert!(config.contains("seed = 5") && config.contains("width = 16"));
        predictions.push((
            std::fs::read(pred).unwrap(),
            std::fs::read(metrics.join("metrics.json")).unwrap(),
            std::fs::read(run.join("model.json")).unwrap(),
        ));
    }
    assert_eq!(predictions[0], predictions[1]);
}

#[test]
fn ablate_writes_a_ranked_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    ok(&compex(&[
        "synth",
        "--sentences",
        "30",
        "--output",
        p(&data),
    ]));
    let prompts = dir.path().join("prompts.txt");
    std::fs::write(&prompts, "comparative relations tuple:\n\nMy name:\n").unwrap();
    let csv = dir.path().join("ablation.csv");
    let cfg = dir.path().join("a.cfg");
    std::fs::write(&cfg, "epochs = 1\nwidth = 16\nffn_width = 32\nheads = 2\n").unwrap();
    ok(&compex(&[
        "ablate",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--prompts",
        p(&prompts),
        "--output",
        p(&csv),
    ]));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "prompt,precision,recall,f1");
    assert_eq!(lines.len(), 3);
    let f1 = |l: &str| l.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    assert!(f1(lines[1]) >= f1(lines[2]));

    std::fs::write(&prompts, "only one:\n").unwrap();
    fails_with(
        &compex(&[
            "ablate",
            "--config",
            p(&cfg),
            "--data",
            p(&data),
            "--prompts",
            p(&prompts),
            "--output",
            p(&csv),
        ]),
        2,
    );
}
