//! One-vs-rest linear classifiers trained by mini-batch gradient descent.
//!
//! Each label column minimizes
//! `mean_i loss(y_i, w·x_i + b) + (λ/2)·‖w‖²` independently. The L2 term is
//! applied as a proximal shrink after every step, `w ← (w − η·g) / (1 + ηλ)`,
//! which keeps training stable for any λ and lets sparse updates touch only
//! the features present in the batch.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectorizer::SparseFeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Logistic,
    Hinge,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::Hinge => "hinge",
        }
    }

    /// Per-example loss for a score and a 0/1 target.
    pub fn loss(self, score: f64, positive: bool) -> f64 {
        match self {
            LossKind::Logistic => softplus(score) - if positive { score } else { 0.0 },
            LossKind::Hinge => {
                let y = if positive { 1.0 } else { -1.0 };
                (1.0 - y * score).max(0.0)
            }
        }
    }

    /// Derivative of [`LossKind::loss`] with respect to the score. For hinge
    /// this is a subgradient that is 0 exactly on the margin.
    pub fn dloss(self, score: f64, positive: bool) -> f64 {
        match self {
            LossKind::Logistic => sigmoid(score) - if positive { 1.0 } else { 0.0 },
            LossKind::Hinge => {
                let y = if positive { 1.0 } else { -1.0 };
                if y * score < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" | "lr" => Ok(LossKind::Logistic),
            "hinge" | "svm" | "lsvm" => Ok(LossKind::Hinge),
            _ => Err(Error::InvalidArgument(format!("unknown loss `{s}`"))),
        }
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Examples per step; anything at least the dataset size is full-batch.
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 30,
            batch_size: 8,
            l2: 1e-4,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidArgument(
                "regularization must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub loss: LossKind,
    pub l2: f64,
    pub n_features: usize,
    /// One row of length `n_features` per label.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(loss: LossKind, labels: usize, n_features: usize, l2: f64) -> Self {
        Self {
            loss,
            l2,
            n_features,
            weights: vec![vec![0.0; n_features]; labels],
            bias: vec![0.0; labels],
        }
    }

    pub fn n_labels(&self) -> usize {
        self.bias.len()
    }

    fn check_dim(&self, x: &SparseFeatureVector) -> Result<()> {
        if x.dim != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.dim,
            });
        }
        Ok(())
    }

    pub fn decision_scores(&self, x: &SparseFeatureVector) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| x.dot(w) + b)
            .collect())
    }

    pub fn predict_proba(&self, x: &SparseFeatureVector) -> Result<Vec<f64>> {
        if self.loss != LossKind::Logistic {
            return Err(Error::UnsupportedForLoss(self.loss.as_str()));
        }
        Ok(self.decision_scores(x)?.into_iter().map(sigmoid).collect())
    }

    /// Logistic: probability ≥ threshold. Hinge: score ≥ 0 (threshold unused).
    pub fn predict_labels(&self, x: &SparseFeatureVector, threshold: f64) -> Result<Vec<bool>> {
        match self.loss {
            LossKind::Logistic => {
                if !(threshold > 0.0 && threshold < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "threshold {threshold} outside (0, 1)"
                    )));
                }
                Ok(self
                    .predict_proba(x)?
                    .into_iter()
                    .map(|p| p >= threshold)
                    .collect())
            }
            LossKind::Hinge => Ok(self
                .decision_scores(x)?
                .into_iter()
                .map(|s| s >= 0.0)
                .collect()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias
            .iter()
            .chain(self.weights.iter().flatten())
            .all(|v| v.is_finite())
    }

    pub fn write_to<W: Write>(&self, mut w: W, meta: &[(String, String)]) -> Result<()> {
        writeln!(w, "# subtrend linear model v1")?;
        for (k, v) in meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "loss={}", self.loss)?;
        writeln!(w, "labels={}", self.n_labels())?;
        writeln!(w, "features={}", self.n_features)?;
        writeln!(w, "lambda={}", self.l2)?;
        for (l, (row, b)) in self.weights.iter().zip(&self.bias).enumerate() {
            let nnz = row.iter().filter(|v| **v != 0.0).count();
            writeln!(w, "label={l} bias={b} nnz={nnz}")?;
            for (j, v) in row.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                writeln!(w, "{j} {v}")?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: &[(String, String)]) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w, meta)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let bad = |msg: String| Error::Format(format!("linear model: {msg}"));
        let mut lines = r
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.is_empty() || s.starts_with('#')));
        let header = |lines: &mut dyn Iterator<Item = std::io::Result<String>>,
                      key: &str|
         -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing `{key}`")))??;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected `{key}=`, found {line:?}")))
        };
        let loss: LossKind = header(&mut lines, "loss")?.parse()?;
        let labels: usize = header(&mut lines, "labels")?
            .parse()
            .map_err(|_| bad("bad labels".into()))?;
        let features: usize = header(&mut lines, "features")?
            .parse()
            .map_err(|_| bad("bad features".into()))?;
        let l2: f64 = header(&mut lines, "lambda")?
            .parse()
            .map_err(|_| bad("bad lambda".into()))?;
        if labels == 0 {
            return Err(bad("model needs at least one label".into()));
        }
        let mut model = LinearModel::zeros(loss, labels, features, l2);
        for l in 0..labels {
            let line = header(&mut lines, "label")?;
            let mut parts = line.split_whitespace();
            let idx: usize = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| bad(line.clone()))?;
            if idx != l {
                return Err(bad(format!("labels out of order at {idx}")));
            }
            let field = |p: Option<&str>, key: &str| -> Result<String> {
                p.and_then(|p| p.strip_prefix(key))
                    .map(str::to_owned)
                    .ok_or_else(|| bad(format!("missing `{key}` in label line")))
            };
            model.bias[l] = field(parts.next(), "bias=")?
                .parse()
                .map_err(|_| bad("bad bias".into()))?;
            let nnz: usize = field(parts.next(), "nnz=")?
                .parse()
                .map_err(|_| bad("bad nnz".into()))?;
            for _ in 0..nnz {
                let line = lines
                    .next()
                    .ok_or_else(|| bad("truncated weights".into()))??;
                let (j, v) = line
                    .split_once(' ')
                    .ok_or_else(|| bad(format!("bad weight {line:?}")))?;
                let j: usize = j.parse().map_err(|_| bad(format!("bad index {j:?}")))?;
                if j >= features {
                    return Err(bad(format!("weight index {j} >= {features}")));
                }
                model.weights[l][j] = v.parse().map_err(|_| bad(format!("bad weight {v:?}")))?;
            }
        }
        if !model.is_finite() {
            return Err(bad("non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Full-data objective for one label column.
pub fn objective(
    loss: LossKind,
    l2: f64,
    xs: &[SparseFeatureVector],
    ys: &[bool],
    weights: &[f64],
    bias: f64,
) -> f64 {
    let n = xs.len().max(1) as f64;
    let data: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| loss.loss(x.dot(weights) + bias, y))
        .sum();
    data / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`objective`] as `(d/dw, d/db)`.
pub fn gradient(
    loss: LossKind,
    l2: f64,
    xs: &[SparseFeatureVector],
    ys: &[bool],
    weights: &[f64],
    bias: f64,
) -> (Vec<f64>, f64) {
    let n = xs.len().max(1) as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let d = loss.dloss(x.dot(weights) + bias, y);
        for (j, v) in x.iter() {
            gw[j] += d * v;
        }
        gb += d;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

/// Per-epoch objective values, one vector per label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub objective: Vec<Vec<f64>>,
}

pub fn train(
    xs: &[SparseFeatureVector],
    ys: &[Vec<bool>],
    loss: LossKind,
    config: &TrainConfig,
) -> Result<LinearModel> {
    train_with_history(xs, ys, loss, config).map(|(m, _)| m)
}

pub fn train_with_history(
    xs: &[SparseFeatureVector],
    ys: &[Vec<bool>],
    loss: LossKind,
    config: &TrainConfig,
) -> Result<(LinearModel, TrainingHistory)> {
    config.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptySelection("no training examples".into()));
    }
    let dim = xs[0].dim;
    if let Some(x) = xs.iter().find(|x| x.dim != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: x.dim,
        });
    }
    let labels = ys[0].len();
    if labels == 0 {
        return Err(Error::InvalidArgument("label matrix has no columns".into()));
    }
    if let Some(row) = ys.iter().find(|r| r.len() != labels) {
        return Err(Error::DimensionMismatch {
            expected: labels,
            actual: row.len(),
        });
    }

    let columns: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..labels)
        .into_par_iter()
        .map(|l| {
            let target: Vec<bool> = ys.iter().map(|r| r[l]).collect();
            train_column(xs, &target, dim, loss, config)
        })
        .collect::<Result<_>>()?;

    let mut model = LinearModel::zeros(loss, labels, dim, config.l2);
    let mut history = TrainingHistory::default();
    for (l, (w, b, h)) in columns.into_iter().enumerate() {
        model.weights[l] = w;
        model.bias[l] = b;
        history.objective.push(h);
    }
    Ok((model, history))
}

fn train_column(
    xs: &[SparseFeatureVector],
    ys: &[bool],
    dim: usize,
    loss: LossKind,
    config: &TrainConfig,
) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let lr = config.learning_rate;
    let shrink = 1.0 + lr * config.l2;
    // weights = scale * v
    let mut v = vec![0.0; dim];
    let mut scale = 1.0f64;
    let mut bias = 0.0;
    let mut acc = vec![0.0; dim];
    let mut touched: Vec<usize> = Vec::new();
    let mut is_touched = vec![false; dim];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(config.batch_size) {
            let mut gb = 0.0;
            for &i in batch {
                let x = &xs[i];
                let score = scale * x.dot(&v) + bias;
                let d = loss.dloss(score, ys[i]);
                if d == 0.0 {
                    continue;
                }
                for (j, xv) in x.iter() {
                    acc[j] += d * xv;
                    if !is_touched[j] {
                        is_touched[j] = true;
                        touched.push(j);
                    }
                }
                gb += d;
            }
            let m = batch.len() as f64;
            for &j in &touched {
                v[j] -= lr * acc[j] / (m * scale);
                acc[j] = 0.0;
                is_touched[j] = false;
            }
            touched.clear();
            bias -= lr * gb / m;
            scale /= shrink;
            if scale < 1e-30 {
                v.iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
        }
        let weights: Vec<f64> = v.iter().map(|x| x * scale).collect();
        let obj = objective(loss, config.l2, xs, ys, &weights, bias);
        if !obj.is_finite() || !bias.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(obj);
    }
    let weights = v.into_iter().map(|x| x * scale).collect();
    Ok((weights, bias, history))
}
