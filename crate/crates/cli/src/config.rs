//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Later assignments
//! win, and command-line flags are applied after the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use compex_core::baseline::{CrfConfig, PairMode};
use compex_core::lmcore::{MiniConfig, PromptSpec, TrainConfig, BEST_PROMPT};

use crate::UsageError;

#[derive(Clone, Debug, PartialEq)]
pub enum Backend {
    Mini,
    Crf,
    Adapter(PathBuf),
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mini" => Ok(Backend::Mini),
            "crf" => Ok(Backend::Crf),
            _ => match s.strip_prefix("adapter:") {
                Some(program) if !program.is_empty() => Ok(Backend::Adapter(program.into())),
                _ => Err(format!(
                    "expected mini, crf or adapter:<program>, got {s:?}"
                )),
            },
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Mini => f.write_str("mini"),
            Backend::Crf => f.write_str("crf"),
            Backend::Adapter(p) => write!(f, "adapter:{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Dev,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub split_seed: Option<u64>,
    pub backend: Backend,
    pub prompt: String,
    pub separator: String,
    pub train: TrainConfig,
    pub mini: MiniConfig,
    pub crf: CrfConfig,
    pub pair_mode: PairMode,
    pub augment: Option<usize>,
    pub eval_split: EvalSplit,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out_dir: PathBuf::from("run"),
            seed: 0,
            split_seed: None,
            backend: Backend::Mini,
            prompt: BEST_PROMPT.to_string(),
            separator: " ".to_string(),
            train: TrainConfig::default(),
            mini: MiniConfig::default(),
            crf: CrfConfig::default(),
            pair_mode: PairMode::Unordered,
            augment: None,
            eval_split: EvalSplit::Test,
        }
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("data", "JSONL dataset to split 7:1:2"),
    (
        "out_dir",
        "directory for split files, checkpoint and reports",
    ),
    ("seed", "seed for training, initialization and augmentation"),
    (
        "split_seed",
        "seed for the train/dev/test shuffle (defaults to seed)",
    ),
    ("backend", "mini, crf, or adapter:<program>"),
    ("prompt", "prompt appended to each sentence"),
    ("separator", "text between sentence and prompt"),
    ("epochs", "generator training epochs"),
    ("batch_size", "generator minibatch size"),
    ("learning_rate", "generator peak learning rate"),
    ("lr_decay", "cosine learning-rate decay: on or off"),
    ("max_target_length", "decoding cap in tokens"),
    ("layers", "mini transformer blocks"),
    ("width", "mini model width"),
    ("heads", "mini attention heads"),
    ("ffn_width", "mini MLP width"),
    ("context_len", "mini context length in tokens"),
    ("dropout", "mini training dropout rate"),
    ("weight_decay", "mini decoupled weight decay"),
    (
        "tied_head",
        "mini output layer shares the token embedding: on or off",
    ),
    (
        "copy_head",
        "mini output mixes in a pointer over the context: on or off",
    ),
    ("crf_epochs", "CRF training epochs"),
    ("crf_learning_rate", "CRF step size"),
    ("pair_mode", "CRF target pairing: unordered or ordered"),
    (
        "augment",
        "off, or number of concatenated pairs added to training",
    ),
    ("eval_split", "split scored by ablate: dev or test"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, UsageError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| UsageError(format!("config key {key}: invalid value {value:?}: {e}")))
}

fn quoted(value: &str) -> String {
    serde_json::to_string(value).expect("strings serialize")
}

fn switch(key: &str, value: &str) -> Result<bool, UsageError> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(UsageError(format!(
            "config key {key}: expected on or off, got {value:?}"
        ))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        match key {
            "data" => self.data = Some(value.into()),
            "out_dir" => self.out_dir = value.into(),
            "seed" => self.seed = parse(key, value)?,
            "split_seed" => self.split_seed = Some(parse(key, value)?),
            "backend" => self.backend = parse(key, value)?,
            "prompt" => self.prompt = value.to_string(),
            "separator" => self.separator = value.to_string(),
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "lr_decay" => self.train.lr_decay = switch(key, value)?,
            "max_target_length" => self.train.max_target_length = parse(key, value)?,
            "layers" => self.mini.layers = parse(key, value)?,
            "width" => self.mini.width = parse(key, value)?,
            "heads" => self.mini.heads = parse(key, value)?,
            "ffn_width" => self.mini.ffn_width = parse(key, value)?,
            "context_len" => self.mini.context_len = parse(key, value)?,
            "dropout" => self.mini.dropout = parse(key, value)?,
            "weight_decay" => self.mini.weight_decay = parse(key, value)?,
            "tied_head" => self.mini.tied_head = switch(key, value)?,
            "copy_head" => self.mini.copy_head = switch(key, value)?,
            "crf_epochs" => self.crf.epochs = parse(key, value)?,
            "crf_learning_rate" => self.crf.learning_rate = parse(key, value)?,
            "pair_mode" => self.pair_mode = parse(key, value)?,
            "augment" => {
                self.augment = match value {
                    "off" => None,
                    n => Some(parse(key, n)?),
                }
            }
            "eval_split" => {
                self.eval_split = match value {
                    "dev" => EvalSplit::Dev,
                    "test" => EvalSplit::Test,
                    _ => {
                        return Err(UsageError(format!(
                            "config key eval_split: expected dev or test, got {value:?}"
                        )))
                    }
                }
            }
            _ => {
                let known: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
                return Err(UsageError(format!(
                    "unknown config key {key:?} (known: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// Applies `key=value` or `key = value` lines.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), UsageError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("{origin}:{}: expected key = value", i + 1)))?;
            let at = |msg: String| UsageError(format!("{origin}:{}: {msg}", i + 1));
            let value = value.trim();
            let value = if value.starts_with('"') {
                serde_json::from_str::<String>(value)
                    .map_err(|e| at(format!("bad quoted value: {e}")))?
            } else {
                value.to_string()
            };
            self.set(key.trim(), &value).map_err(|e| at(e.0))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())?;
        Ok(())
    }

    /// Copies the global seed into every seeded component.
    pub fn resolve_seeds(&mut self) {
        self.train.seed = self.seed;
        self.mini.seed = self.seed;
        self.crf.seed = self.seed;
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.seed)
    }

    pub fn prompt_spec(&self) -> Result<PromptSpec, UsageError> {
        PromptSpec::with_separator(self.prompt.clone(), self.separator.clone())
            .map_err(|e| UsageError(e.to_string()))
    }

    pub fn data_path(&self) -> Result<&Path, UsageError> {
        let path = self.data.as_deref().ok_or_else(|| {
            UsageError("no dataset: set data in the config or pass --data".into())
        })?;
        if !path.is_file() {
            return Err(UsageError(format!(
                "dataset {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_out_dir(&self) -> Result<(), UsageError> {
        let fail = |e: std::io::Error| {
            UsageError(format!("output directory {}: {e}", self.out_dir.display()))
        };
        std::fs::create_dir_all(&self.out_dir).map_err(fail)?;
        tempfile::NamedTempFile::new_in(&self.out_dir).map_err(fail)?;
        Ok(())
    }

    /// The resolved configuration in the file format, loadable again.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(data) = &self.data {
            line("data", data.display().to_string());
        }
        line("out_dir", self.out_dir.display().to_string());
        line("seed", self.seed.to_string());
        line("split_seed", self.split_seed().to_string());
        line("backend", self.backend.to_string());
        line("prompt", quoted(&self.prompt));
        line("separator", quoted(&self.separator));
        line("epochs", self.train.epochs.to_string());
        line("batch_size", self.train.batch_size.to_string());
        line("learning_rate", self.train.learning_rate.to_string());
        line(
            "lr_decay",
            if self.train.lr_decay { "on" } else { "off" }.into(),
        );
        line(
            "max_target_length",
            self.train.max_target_length.to_string(),
        );
        line("layers", self.mini.layers.to_string());
        line("width", self.mini.width.to_string());
        line("heads", self.mini.heads.to_string());
        line("ffn_width", self.mini.ffn_width.to_string());
        line("context_len", self.mini.context_len.to_string());
        line("dropout", self.mini.dropout.to_string());
        line("weight_decay", self.mini.weight_decay.to_string());
        line(
            "tied_head",
            if self.mini.tied_head { "on" } else { "off" }.into(),
        );
        line(
            "copy_head",
            if self.mini.copy_head { "on" } else { "off" }.into(),
        );
        line("crf_epochs", self.crf.epochs.to_string());
        line("crf_learning_rate", self.crf.learning_rate.to_string());
        line("pair_mode", format!("{:?}", self.pair_mode).to_lowercase());
        line(
            "augment",
            self.augment.map_or("off".into(), |n| n.to_string()),
        );
        line(
            "eval_split",
            match self.eval_split {
                EvalSplit::Dev => "dev",
                EvalSplit::Test => "test",
            }
            .into(),
        );
        out
    }
}
