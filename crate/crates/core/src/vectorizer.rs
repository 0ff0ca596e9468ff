//! TF-IDF features over unigrams and bigrams.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::TokenSequence;

pub const DEFAULT_MAX_FEATURES: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorizerConfig {
    pub max_features: usize,
    /// Inclusive n-gram order range.
    pub ngram_range: (usize, usize),
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        Self {
            max_features: DEFAULT_MAX_FEATURES,
            ngram_range: (1, 2),
        }
    }
}

impl VectorizerConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "bad n-gram range ({lo}, {hi})"
            )));
        }
        if self.max_features == 0 {
            return Err(Error::InvalidArgument(
                "max_features must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// All candidate terms of a document, n-grams joined by a space.
fn document_terms(
    tokens: &[String],
    (lo, hi): (usize, usize),
) -> impl Iterator<Item = String> + '_ {
    (lo..=hi).flat_map(move |n| tokens.windows(n).map(|w| w.join(" ")))
}

/// Sparse row with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseFeatureVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseFeatureVector {
    /// Builds a vector from unsorted pairs, summing repeated indices.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            if i as usize >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: i as usize + 1,
                });
            }
            *map.entry(i).or_default() += v;
        }
        let (indices, values) = map.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .unzip();
        Self {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    config: VectorizerConfig,
    corpus_size: usize,
    terms: Vec<String>,
    document_frequency: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    #[serde(skip)]
    idf: Vec<f64>,
}

impl Vocabulary {
    fn build(
        config: VectorizerConfig,
        corpus_size: usize,
        terms: Vec<String>,
        document_frequency: Vec<u64>,
    ) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let n = corpus_size as f64;
        let idf = document_frequency
            .iter()
            .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
            .collect();
        Self {
            config,
            corpus_size,
            terms,
            document_frequency,
            index,
            idf,
        }
    }

    pub fn config(&self) -> VectorizerConfig {
        self.config
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| i as usize)
    }

    pub fn document_frequency(&self, term: &str) -> Option<u64> {
        self.index_of(term).map(|i| self.document_frequency[i])
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    /// Raw term counts times smoothed idf, L2-normalized. Unknown terms are ignored.
    pub fn transform(&self, doc: &TokenSequence) -> SparseFeatureVector {
        let mut tf: BTreeMap<u32, u64> = BTreeMap::new();
        for term in document_terms(&doc.tokens, self.config.ngram_range) {
            if let Some(&i) = self.index.get(&term) {
                *tf.entry(i).or_default() += 1;
            }
        }
        let mut indices = Vec::with_capacity(tf.len());
        let mut values = Vec::with_capacity(tf.len());
        for (i, count) in tf {
            indices.push(i);
            values.push(count as f64 * self.idf[i as usize]);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        SparseFeatureVector {
            dim: self.terms.len(),
            indices,
            values,
        }
    }

    pub fn transform_all(&self, docs: &[TokenSequence]) -> Vec<SparseFeatureVector> {
        docs.iter().map(|d| self.transform(d)).collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W, meta: &[(String, String)]) -> Result<()> {
        writeln!(w, "# subtrend vocabulary v1")?;
        for (k, v) in meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "corpus_size={}", self.corpus_size)?;
        writeln!(w, "max_features={}", self.config.max_features)?;
        writeln!(
            w,
            "ngram_range={},{}",
            self.config.ngram_range.0, self.config.ngram_range.1
        )?;
        for (i, (term, df)) in self.terms.iter().zip(&self.document_frequency).enumerate() {
            writeln!(w, "{term}\t{i}\t{df}")?;
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
        let mut corpus_size = None;
        let mut max_features = None;
        let mut ngram_range = None;
        let mut terms = Vec::new();
        let mut dfs = Vec::new();
        let bad = |msg: String| Error::Format(format!("vocabulary: {msg}"));
        for line in r.lines() {
            let line = line?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=').filter(|_| !line.contains('\t')) {
                match key {
                    "corpus_size" => corpus_size = value.parse().ok(),
                    "max_features" => max_features = value.parse().ok(),
                    "ngram_range" => {
                        ngram_range = value
                            .split_once(',')
                            .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                    }
                    _ => return Err(bad(format!("unknown header key `{key}`"))),
                }
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(term), Some(index), Some(df), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(format!("bad term line {line:?}")));
            };
            let index: usize = index
                .parse()
                .map_err(|_| bad(format!("bad index in {line:?}")))?;
            if index != terms.len() {
                return Err(bad(format!("indices not contiguous at `{term}`")));
            }
            let df: u64 = df.parse().map_err(|_| bad(format!("bad df in {line:?}")))?;
            if df == 0 {
                return Err(bad(format!("zero document frequency for `{term}`")));
            }
            terms.push(term.to_owned());
            dfs.push(df);
        }
        let config = VectorizerConfig {
            max_features: max_features.ok_or_else(|| bad("missing max_features".into()))?,
            ngram_range: ngram_range.ok_or_else(|| bad("missing ngram_range".into()))?,
        };
        config.validate()?;
        let corpus_size = corpus_size.ok_or_else(|| bad("missing corpus_size".into()))?;
        Ok(Self::build(config, corpus_size, terms, dfs))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Keeps the `max_features` terms with the highest total frequency across
/// the training documents (ties resolved lexicographically) and indexes them
/// in lexicographic order.
pub fn fit_vocabulary(train: &[TokenSequence], config: VectorizerConfig) -> Result<Vocabulary> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySelection(
            "cannot fit a vocabulary on zero documents".into(),
        ));
    }
    let mut stats: HashMap<String, (u64, u64)> = HashMap::new();
    for doc in train {
        let mut seen = HashSet::new();
        for term in document_terms(&doc.tokens, config.ngram_range) {
            let entry = stats.entry(term.clone()).or_default();
            entry.0 += 1;
            if seen.insert(term) {
                entry.1 += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u64, u64)> =
        stats.into_iter().map(|(t, (tf, df))| (t, tf, df)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(config.max_features);
    ranked.sort_by(|a, b| a.0.cmp(&b.0));
    let (terms, dfs) = ranked.into_iter().map(|(t, _, df)| (t, df)).unzip();
    Ok(Vocabulary::build(config, train.len(), terms, dfs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(words: &[&str]) -> TokenSequence {
        words.iter().copied().collect()
    }

    #[test]
    fn cap_keeps_most_frequent_then_lexicographic() {
        let docs = [seq(&["a", "b"]), seq(&["b", "c"])];
        let cfg = VectorizerConfig {
            max_features: 2,
            ngram_range: (1, 2),
        };
        let vocab = fit_vocabulary(&docs, cfg).unwrap();
        assert_eq!(vocab.terms(), &["a".to_owned(), "b".to_owned()]);
        assert_eq!(vocab.document_frequency("b"), Some(2));
    }

    #[test]
    fn large_cap_keeps_everything() {
        let docs = [seq(&["a", "b"]), seq(&["b", "c"])];
        let vocab = fit_vocabulary(&docs, VectorizerConfig::default()).unwrap();
        assert_eq!(vocab.terms(), &["a", "a b", "b", "b c", "c"]);
        assert_eq!(vocab.config().max_features, 50_000);
        assert_eq!(vocab.config().ngram_range, (1, 2));
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(fit_vocabulary(&[], VectorizerConfig::default()).is_err());
    }

    #[test]
    fn out_of_vocabulary_is_zero() {
        let vocab = fit_vocabulary(&[seq(&["a"])], VectorizerConfig::default()).unwrap();
        let v = vocab.transform(&seq(&["zzz", "yyy"]));
        assert_eq!(v.nnz(), 0);
        assert_eq!(v.dim, 1);
    }

    #[test]
    fn persistence_round_trip() {
        let docs = [seq(&["a", "b"]), seq(&["b", "c", "c"])];
        let vocab = fit_vocabulary(&docs, VectorizerConfig::default()).unwrap();
        let mut buf = Vec::new();
        vocab
            .write_to(&mut buf, &[("config_hash".into(), "abc".into())])
            .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("b c\t3\t1\n"));
        let back = Vocabulary::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, vocab);
        assert_eq!(back.transform(&docs[1]), vocab.transform(&docs[1]));
    }

    proptest! {
        #[test]
        fn rows_are_unit_norm_and_positive(
            docs in proptest::collection::vec(proptest::collection::vec("[a-e]", 0..10), 1..8),
            probe in proptest::collection::vec("[a-g]", 0..12),
        ) {
            let docs: Vec<TokenSequence> = docs.into_iter().map(TokenSequence::from).collect();
            let vocab = fit_vocabulary(&docs, VectorizerConfig::default()).unwrap();
            let v = vocab.transform(&TokenSequence::from(probe));
            prop_assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(v.values.iter().all(|&x| x > 0.0 && x.is_finite()));
            if v.nnz() > 0 {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
            prop_assert!(vocab.len() <= 50_000);
        }

        #[test]
        fn fitting_is_deterministic(
            docs in proptest::collection::vec(proptest::collection::vec("[a-e]", 0..10), 1..8),
            cap in 1usize..12,
        ) {
            let docs: Vec<TokenSequence> = docs.into_iter().map(TokenSequence::from).collect();
            let cfg = VectorizerConfig { max_features: cap, ngram_range: (1, 2) };
            let a = fit_vocabulary(&docs, cfg).unwrap();
            let mut rev = docs.clone();
            rev.reverse();
            let b = fit_vocabulary(&rev, cfg).unwrap();
            prop_assert_eq!(a.terms(), b.terms());
            prop_assert!(a.len() <= cap);
        }
    }
}
