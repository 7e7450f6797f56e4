use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use compex_core::baseline::{CrfBaseline, CrfModel, CHECKPOINT_FORMAT as CRF_FORMAT};
use compex_core::corpus::{
    augment_concat, dataset_stats, load_dataset, load_inputs, split_dataset, DatasetStats,
};
use compex_core::eval::{ablation_csv, prompt_ablation, EvalSummary};
use compex_core::io::{sentences_to_jsonl, write_atomic, write_sentences};
use compex_core::lmcore::{
    build_training_pairs, load_backend, loss_history_csv, train as train_generator, MiniBackend,
    ProcessBackend, PromptSpec, DEFAULT_PROMPTS,
};
use compex_core::pipeline::{
    gold_map, predict_baseline, predict_generator, predictions_jsonl, train_baseline, train_mini,
};
use compex_core::synth::{synth_corpus, synth_with_counts, CAMERA_REVIEW_SHAPE, COMPSENT_SHAPE};
use compex_core::Sentence;

use crate::config::{Backend, EvalSplit, RunConfig};
use crate::tsv::parse_tsv;
use crate::{RunArgs, UsageError};

fn print_stats(stats: &DatasetStats) {
    println!("sentences {}", stats.sentences);
    println!("relations {}", stats.relations);
    println!("relations per sentence:");
    for (n, count) in &stats.counts {
        println!("  {n}: {count} ({:.4})", stats.fraction(*n));
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn prepare(
    input: &Path,
    output: &Path,
    format: Option<&str>,
    stats_path: Option<&Path>,
) -> Result<()> {
    let format = format.map(str::to_string).unwrap_or_else(|| {
        match input.extension().and_then(|e| e.to_str()) {
            Some("tsv") => "tsv".into(),
            _ => "jsonl".into(),
        }
    });
    let sentences = match format.as_str() {
        "jsonl" => {
            let loaded = load_dataset(input)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            loaded.sentences
        }
        "tsv" => {
            let content = std::fs::read_to_string(input)
                .map_err(|e| UsageError(format!("{}: {e}", input.display())))?;
            let sentences = parse_tsv(&content)
                .map_err(|e| UsageError(format!("{}: {}", input.display(), e.0)))?;
            for s in &sentences {
                for (relation, element) in s.ungrounded_elements() {
                    eprintln!(
                        "warning: sentence {}: element {element:?} of relation {relation} is not grounded in the text",
                        s.id
                    );
                }
            }
            sentences
        }
        other => {
            return Err(
                UsageError(format!("unknown input format {other:?}; use jsonl or tsv")).into(),
            )
        }
    };
    write_sentences(output, &sentences)?;
    let stats = dataset_stats(&sentences);
    print_stats(&stats);
    if let Some(path) = stats_path {
        write_json(path, &stats)?;
    }
    Ok(())
}

fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Ok(seed) = std::env::var("COMPEX_SEED") {
        config.set("seed", &seed)?;
    }
    if let Some(path) = &args.config {
        config.apply_file(path)?;
    }
    let flags = [
        ("data", args.data.as_ref().map(|p| p.display().to_string())),
        (
            "out_dir",
            args.out_dir.as_ref().map(|p| p.display().to_string()),
        ),
        ("backend", args.backend.clone()),
        ("prompt", args.prompt.clone()),
        ("epochs", args.epochs.clone()),
        ("seed", args.seed.map(|s| s.to_string())),
    ];
    for (key, value) in flags {
        if let Some(value) = value {
            config.set(key, &value)?;
        }
    }
    for item in &args.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {item:?}")))?;
        config.set(key.trim(), value.trim())?;
    }
    config.resolve_seeds();
    Ok(config)
}

fn load_split(config: &RunConfig) -> Result<compex_core::corpus::DatasetSplit> {
    let loaded = load_dataset(config.data_path()?)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(split_dataset(&loaded.sentences, config.split_seed())?)
}

fn training_set(config: &RunConfig, train: &[Sentence]) -> Result<Vec<Sentence>> {
    let mut out = train.to_vec();
    if let Some(n) = config.augment {
        out.extend(augment_concat(train, n, config.seed)?);
    }
    Ok(out)
}

pub fn train(args: &RunArgs) -> Result<()> {
    let config = resolve(args)?;
    let prompt = config.prompt_spec()?;
    config.train.validate()?;
    config.data_path()?;
    config.prepare_out_dir()?;
    let out = &config.out_dir;
    let split = load_split(&config)?;
    write_sentences(out.join("train.jsonl"), &split.train)?;
    write_sentences(out.join("dev.jsonl"), &split.dev)?;
    write_sentences(out.join("test.jsonl"), &split.test)?;
    let train_set = training_set(&config, &split.train)?;
    if config.augment.is_some() {
        write_sentences(out.join("train_augmented.jsonl"), &train_set)?;
    }
    let checkpoint = out.join("model.json");
    match &config.backend {
        Backend::Mini => {
            let run = train_mini(&train_set, &prompt, &config.train, &config.mini)?;
            run.backend.save(&checkpoint)?;
            write_atomic(
                out.join("loss.csv"),
                loss_history_csv(&run.training.epoch_losses).as_bytes(),
            )?;
            write_json(
                &out.join("train_report.json"),
                &json!({"pairs": run.pairs, "training": run.training}),
            )?;
            println!(
                "trained mini backend on {} pairs, final loss {:.4}",
                run.training.samples,
                run.training
                    .epoch_losses
                    .last()
                    .copied()
                    .unwrap_or(f64::NAN)
            );
        }
        Backend::Crf => {
            let (baseline, report) = train_baseline(&train_set, &config.crf, config.pair_mode)?;
            baseline.model.save(&checkpoint)?;
            let mut csv = String::from("epoch,log_likelihood\n");
            for (i, ll) in report.epoch_log_likelihood.iter().enumerate() {
                csv.push_str(&format!("{},{ll}\n", i + 1));
            }
            write_atomic(out.join("loss.csv"), csv.as_bytes())?;
            write_json(&out.join("train_report.json"), &report)?;
            println!(
                "trained crf on {} sentences, {} features",
                report.sentences,
                baseline.model.num_features()
            );
        }
        Backend::Adapter(program) => {
            let (pairs, pair_report) = build_training_pairs(&train_set, &prompt);
            let mut backend = ProcessBackend::spawn(program)?;
            let report = train_generator(&mut backend, &pairs, &config.train)?;
            backend.save(&checkpoint, out.join("adapter_state"))?;
            write_atomic(
                out.join("loss.csv"),
                loss_history_csv(&report.epoch_losses).as_bytes(),
            )?;
            write_json(
                &out.join("train_report.json"),
                &json!({"pairs": pair_report, "training": report}),
            )?;
            println!("trained adapter on {} pairs", report.samples);
        }
    }
    write_atomic(out.join("config.txt"), config.render().as_bytes())?;
    println!("checkpoint {}", checkpoint.display());
    Ok(())
}

fn checkpoint_format(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| UsageError(format!("{}: not a checkpoint: {e}", path.display())))?;
    header["format"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| {
            UsageError(format!(
                "{}: checkpoint has no format field",
                path.display()
            ))
            .into()
        })
}

pub fn extract(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    config_path: Option<&Path>,
    prompt: Option<String>,
    audit: Option<&Path>,
) -> Result<()> {
    let mut config = RunConfig::default();
    let sibling: Option<PathBuf> = checkpoint
        .parent()
        .map(|d| d.join("config.txt"))
        .filter(|p| p.is_file());
    if let Some(path) = config_path.map(Path::to_path_buf).or(sibling) {
        config.apply_file(&path)?;
    }
    if let Some(p) = prompt {
        config.prompt = p;
    }
    let prompt: PromptSpec = config.prompt_spec()?;
    let sentences = load_inputs(input)?.sentences;
    let mut audit_lines = String::new();
    let predictions = if checkpoint_format(checkpoint)? == CRF_FORMAT {
        let baseline = CrfBaseline {
            model: CrfModel::load(checkpoint)?,
            mode: config.pair_mode,
        };
        let predictions = predict_baseline(&baseline, &sentences);
        for s in &sentences {
            let tags = compex_core::baseline::crf_decode(&baseline.model, s);
            audit_lines.push_str(&(json!({"id": s.id, "tags": tags}).to_string() + "\n"));
        }
        predictions
    } else {
        let backend = load_backend(checkpoint)?;
        let extractions = predict_generator(backend.as_ref(), &sentences, &prompt, &config.train)?;
        for (s, e) in sentences.iter().zip(&extractions) {
            let line = json!({
                "id": s.id,
                "generated": e.generated,
                "malformed_segments": e.malformed_segments,
                "discarded": e.discarded,
            });
            audit_lines.push_str(&(line.to_string() + "\n"));
        }
        extractions.into_iter().map(|e| e.relations).collect()
    };
    write_atomic(
        output,
        predictions_jsonl(&sentences, &predictions).as_bytes(),
    )?;
    if let Some(path) = audit {
        write_atomic(path, audit_lines.as_bytes())?;
    }
    let total: usize = predictions.iter().map(Vec::len).sum();
    println!("{total} relations over {} sentences", sentences.len());
    Ok(())
}

pub fn eval(predictions: &Path, gold: &Path, out_dir: &Path) -> Result<()> {
    let predicted = load_dataset(predictions)
        .with_context(|| format!("predictions {}", predictions.display()))?;
    let gold_set = load_dataset(gold).with_context(|| format!("gold {}", gold.display()))?;
    for w in &gold_set.warnings {
        eprintln!("warning: gold {w}");
    }
    let summary = EvalSummary::compute(
        &gold_map(&predicted.sentences),
        &gold_map(&gold_set.sentences),
    )?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| UsageError(format!("{}: {e}", out_dir.display())))?;
    write_atomic(out_dir.join("metrics.json"), summary.to_json().as_bytes())?;
    write_atomic(out_dir.join("metrics.txt"), summary.table().as_bytes())?;
    print!("{}", summary.table());
    Ok(())
}

pub fn ablate(args: &RunArgs, prompts_path: Option<&Path>, output: &Path) -> Result<()> {
    let config = resolve(args)?;
    if config.backend != Backend::Mini {
        return Err(UsageError("ablate trains mini backends; set backend = mini".into()).into());
    }
    config.train.validate()?;
    let prompts: Vec<PromptSpec> = match prompts_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| PromptSpec::with_separator(l.trim(), config.separator.clone()))
                .collect::<Result<_, _>>()?
        }
        None => DEFAULT_PROMPTS
            .iter()
            .map(|p| PromptSpec::with_separator(*p, config.separator.clone()))
            .collect::<Result<_, _>>()?,
    };
    let split = load_split(&config)?;
    let train_set = training_set(&config, &split.train)?;
    let eval_split = match config.eval_split {
        EvalSplit::Dev => &split.dev,
        EvalSplit::Test => &split.test,
    };
    let mini = config.mini.clone();
    let rows = prompt_ablation(
        |pairs| MiniBackend::for_samples(pairs, mini.clone()),
        &train_set,
        eval_split,
        &prompts,
        &config.train,
    )?;
    let csv = ablation_csv(&rows);
    write_atomic(output, csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

pub fn augment(input: &Path, num_pairs: usize, seed: u64, output: &Path) -> Result<()> {
    let mut sentences = load_dataset(input)?.sentences;
    let added = augment_concat(&sentences, num_pairs, seed)?;
    println!(
        "added {} concatenated sentences to {}",
        added.len(),
        sentences.len()
    );
    sentences.extend(added);
    write_atomic(output, sentences_to_jsonl(&sentences).as_bytes())?;
    Ok(())
}

pub fn synth(sentences: usize, shape: &str, seed: u64, output: &Path) -> Result<()> {
    let corpus = match shape {
        "default" => {
            if sentences == 0 {
                return Err(UsageError("--sentences must be positive".into()).into());
            }
            synth_corpus(sentences, seed)
        }
        "camera-review" => synth_with_counts(&CAMERA_REVIEW_SHAPE, seed)?,
        "compsent" => synth_with_counts(&COMPSENT_SHAPE, seed)?,
        other => {
            return Err(UsageError(format!(
                "unknown shape {other:?}; use default, camera-review or compsent"
            ))
            .into())
        }
    };
    write_sentences(output, &corpus)?;
    print_stats(&dataset_stats(&corpus));
    Ok(())
}
