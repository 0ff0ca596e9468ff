//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::DEFAULT_SEED;
use crate::inference::{BackendKind, BackendSelection};
use crate::linear::{LossKind, TrainConfig};
use crate::longitudinal::DEFAULT_SMOOTHING_YEARS;
use crate::timeline::DEFAULT_WINDOW_MINUTES;
use crate::vectorizer::DEFAULT_MAX_FEATURES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimePredicate {
    /// A cue counts as abusive when it contains a lexicon term.
    Lexicon,
    /// A cue counts as abusive when the abuse classifier says so.
    Classifier,
}

impl FromStr for TimePredicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lexicon" => Ok(TimePredicate::Lexicon),
            "classifier" => Ok(TimePredicate::Classifier),
            _ => Err(Error::Config(format!(
                "unknown abusive time predicate `{s}`"
            ))),
        }
    }
}

impl TimePredicate {
    pub fn as_str(self) -> &'static str {
        match self {
            TimePredicate::Lexicon => "lexicon",
            TimePredicate::Classifier => "classifier",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus_root: PathBuf,
    pub catalog: PathBuf,
    pub stopwords_ngram: Option<PathBuf>,
    pub stopwords_classify: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub backend: BackendSelection,
    pub sentiment_model: Option<PathBuf>,
    pub abuse_model: Option<PathBuf>,
    pub sentiment_data: Option<PathBuf>,
    pub abuse_data: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub window_minutes: u32,
    pub smoothing_years: usize,
    pub ngram_top_k: usize,
    pub abusive_time: TimePredicate,
    pub loss: LossKind,
    pub train: TrainConfig,
    pub max_features: usize,
    /// Hex SHA-256 over the sorted key/value pairs as written.
    pub hash: String,
}

const KEYS: &[&str] = &[
    "corpus_root",
    "catalog",
    "stopwords_ngram",
    "stopwords_classify",
    "lexicon",
    "weights",
    "backend",
    "endpoint",
    "timeout_ms",
    "max_batch",
    "max_in_flight",
    "sentiment_model",
    "abuse_model",
    "sentiment_data",
    "abuse_data",
    "output_dir",
    "seed",
    "window_minutes",
    "smoothing_years",
    "ngram_top_k",
    "abusive_time",
    "loss",
    "learning_rate",
    "epochs",
    "batch_size",
    "l2",
    "max_features",
];

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let k = k.trim().to_owned();
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key `{k}`", no + 1)));
        }
        if out.insert(k.clone(), v.trim().to_owned()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{k}`",
                no + 1
            )));
        }
    }
    Ok(out)
}

fn number<T: FromStr>(pairs: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match pairs.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("`{key}` has invalid value `{v}`"))),
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let path_of = |key: &str| {
            pairs
                .get(key)
                .filter(|v| !v.is_empty())
                .map(|v| base.join(v))
        };
        let required = |key: &str| {
            path_of(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
        };

        let defaults = BackendSelection::default();
        let backend = BackendSelection {
            kind: number(&pairs, "backend", BackendKind::NativeLinear)?,
            endpoint: pairs.get("endpoint").cloned().unwrap_or(defaults.endpoint),
            timeout_ms: number(&pairs, "timeout_ms", defaults.timeout_ms)?,
            max_batch: number(&pairs, "max_batch", defaults.max_batch)?,
            max_in_flight: number(&pairs, "max_in_flight", defaults.max_in_flight)?,
        };
        backend.validate()?;

        let seed = number(&pairs, "seed", DEFAULT_SEED)?;
        let t = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: number(&pairs, "learning_rate", t.learning_rate)?,
            epochs: number(&pairs, "epochs", t.epochs)?,
            batch_size: number(&pairs, "batch_size", t.batch_size)?,
            l2: number(&pairs, "l2", t.l2)?,
            seed,
            ..t
        };
        train.validate()?;

        let config = Self {
            corpus_root: required("corpus_root")?,
            catalog: required("catalog")?,
            stopwords_ngram: path_of("stopwords_ngram"),
            stopwords_classify: path_of("stopwords_classify"),
            lexicon: path_of("lexicon"),
            weights: path_of("weights"),
            backend,
            sentiment_model: path_of("sentiment_model"),
            abuse_model: path_of("abuse_model"),
            sentiment_data: path_of("sentiment_data"),
            abuse_data: path_of("abuse_data"),
            output_dir: required("output_dir")?,
            seed,
            window_minutes: number(&pairs, "window_minutes", DEFAULT_WINDOW_MINUTES)?,
            smoothing_years: number(&pairs, "smoothing_years", DEFAULT_SMOOTHING_YEARS)?,
            ngram_top_k: number(&pairs, "ngram_top_k", 20)?,
            abusive_time: number(&pairs, "abusive_time", TimePredicate::Lexicon)?,
            loss: number(&pairs, "loss", LossKind::Logistic)?,
            train,
            max_features: number(&pairs, "max_features", DEFAULT_MAX_FEATURES)?,
            hash: config_hash(&pairs),
        };
        if config.window_minutes == 0 || config.smoothing_years == 0 || config.ngram_top_k == 0 {
            return Err(Error::Config(
                "window_minutes, smoothing_years and ngram_top_k must be positive".into(),
            ));
        }
        config.check_files()?;
        Ok(config)
    }

    fn check_files(&self) -> Result<()> {
        let must_exist = [Some(&self.corpus_root), Some(&self.catalog)]
            .into_iter()
            .chain(
                [
                    &self.stopwords_ngram,
                    &self.stopwords_classify,
                    &self.lexicon,
                    &self.weights,
                ]
                .map(Option::as_ref),
            );
        for p in must_exist.flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn short_hash(&self) -> &str {
        &self.hash[..12]
    }
}

pub fn config_hash(pairs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in pairs {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
