//! A vocabulary, a linear model and label names bundled for raw-text input.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linear::{LinearModel, LossKind};
use crate::textprep::{prepare, remove_stopwords, StopwordSet, TokenSequence};
use crate::vectorizer::{SparseFeatureVector, Vocabulary};

const MODEL_FILE: &str = "model.txt";
const VOCAB_FILE: &str = "vocab.tsv";
const LABELS_FILE: &str = "labels.txt";
const STOPWORDS_FILE: &str = "stopwords.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifier {
    pub vocabulary: Vocabulary,
    pub model: LinearModel,
    pub labels: Vec<String>,
    pub stopwords: StopwordSet,
}

impl TextClassifier {
    pub fn new(
        vocabulary: Vocabulary,
        model: LinearModel,
        labels: Vec<String>,
        stopwords: StopwordSet,
    ) -> Result<Self> {
        if model.n_features != vocabulary.len() {
            return Err(Error::DimensionMismatch {
                expected: vocabulary.len(),
                actual: model.n_features,
            });
        }
        if labels.len() != model.n_labels() {
            return Err(Error::DimensionMismatch {
                expected: model.n_labels(),
                actual: labels.len(),
            });
        }
        Ok(Self {
            vocabulary,
            model,
            labels,
            stopwords,
        })
    }

    pub fn tokens(&self, text: &str) -> TokenSequence {
        remove_stopwords(&prepare(text), &self.stopwords)
    }

    pub fn features(&self, text: &str) -> SparseFeatureVector {
        self.vocabulary.transform(&self.tokens(text))
    }

    /// One probability row per text. Requires a logistic model.
    pub fn predict_proba(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if self.model.loss != LossKind::Logistic {
            return Err(Error::UnsupportedForLoss(self.model.loss.as_str()));
        }
        texts
            .iter()
            .map(|t| self.model.predict_proba(&self.features(t)))
            .collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>, meta: &[(String, String)]) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.model.save(dir.join(MODEL_FILE), meta)?;
        self.vocabulary.save(dir.join(VOCAB_FILE), meta)?;
        let labels = dir.join(LABELS_FILE);
        std::fs::write(&labels, self.labels.join("\n") + "\n")
            .map_err(|e| Error::io(&labels, e))?;
        let stop = dir.join(STOPWORDS_FILE);
        let mut body = format!("# {}\n", self.stopwords.name);
        for w in &self.stopwords.words {
            body.push_str(w);
            body.push('\n');
        }
        std::fs::write(&stop, body).map_err(|e| Error::io(&stop, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let model = LinearModel::load(dir.join(MODEL_FILE))?;
        let vocabulary = Vocabulary::load(dir.join(VOCAB_FILE))?;
        let labels_path = dir.join(LABELS_FILE);
        let labels = std::fs::read_to_string(&labels_path)
            .map_err(|e| Error::io(&labels_path, e))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().to_owned())
            .collect();
        let stop_path = dir.join(STOPWORDS_FILE);
        let raw = std::fs::read_to_string(&stop_path).map_err(|e| Error::io(&stop_path, e))?;
        let name = raw
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .unwrap_or("custom")
            .to_owned();
        let stopwords = StopwordSet::parse(name, &raw);
        Self::new(vocabulary, model, labels, stopwords)
    }
}
