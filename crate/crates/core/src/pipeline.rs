//! The `ingest`, `train`, `analyze` and `export` commands.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::TextClassifier;
use crate::config::{RunConfig, TimePredicate};
use crate::corpus::{
    load_catalog, load_srt, Catalog, FilmCatalogEntry, GenreMismatch, SubtitleDocument,
};
use crate::error::{Error, Result};
use crate::eval::{
    compute_binary_metrics, compute_multilabel_metrics, iterative_stratified_split,
    stratified_binary_split, MetricReport, SplitAssignment, SplitFractions,
};
use crate::inference::{FallbackEvent, InferenceClient, NATIVE_BACKEND};
use crate::lexicon::{abusive_time, count_abusive, AbuseCount, AbuseLexicon};
use crate::linear::{train, LossKind};
use crate::longitudinal::{
    abuse_probability_by_year, abuse_trend, abusive_time_by_decade, cooccurrence, emotion_counts,
    normalized_abuse_by_genre, sentiment_by_decade, words_per_decade, write_emotion_counts_csv,
    CooccurrenceMatrix, FilmSummary, Grouping, LabelSet, TrendSeries,
};
use crate::ngram::{document_ngrams, era_tables, write_ranked_csv, Era, RankedNgram};
use crate::sentiment::{
    film_score, weighted_score, LabelValues, SentimentLabel, SentimentWeights, NUM_LABELS,
};
use crate::textprep::{clean_text, prepare, remove_stopwords, StopwordSet, TokenSequence};
use crate::timeline::{cue_table, film_timeline, write_cue_table_csv, CueRow, TimelineSeries};
use crate::vectorizer::{fit_vocabulary, VectorizerConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_DIR: &str = "report";
pub const FILMS_DIR: &str = "films";
pub const MODELS_DIR: &str = "models";
const POSITIVE: f64 = 0.5;

/// Provenance stamped into every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub lexicon_version: String,
    pub weights_profile: String,
    pub backend: String,
}

impl RunMeta {
    pub fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("config_hash".into(), self.config_hash.clone()),
            ("lexicon_version".into(), self.lexicon_version.clone()),
            ("weights_profile".into(), self.weights_profile.clone()),
            ("backend".into(), self.backend.clone()),
        ]
    }
}

/// Stopword profiles, lexicon and weights named by a config, bundled defaults otherwise.
#[derive(Debug, Clone)]
pub struct Resources {
    pub ngram_stopwords: StopwordSet,
    pub classify_stopwords: StopwordSet,
    pub lexicon: AbuseLexicon,
    pub weights: SentimentWeights,
}

impl Resources {
    pub fn load(config: &RunConfig) -> Result<Self> {
        Ok(Self {
            ngram_stopwords: config
                .stopwords_ngram
                .as_ref()
                .map_or_else(|| Ok(StopwordSet::ngram()), StopwordSet::load)?,
            classify_stopwords: config
                .stopwords_classify
                .as_ref()
                .map_or_else(|| Ok(StopwordSet::classify()), StopwordSet::load)?,
            lexicon: config
                .lexicon
                .as_ref()
                .map_or_else(|| Ok(AbuseLexicon::bundled()), AbuseLexicon::load)?,
            weights: config
                .weights
                .as_ref()
                .map_or_else(|| Ok(SentimentWeights::bundled()), SentimentWeights::load)?,
        })
    }

    pub fn meta(&self, config: &RunConfig, backend: impl Into<String>) -> RunMeta {
        RunMeta {
            config_hash: config.hash.clone(),
            lexicon_version: format!("{}@{}", self.lexicon.name, self.lexicon.version),
            weights_profile: self.weights.name.clone(),
            backend: backend.into(),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `# key=value` provenance lines, then the CSV body.
fn write_csv_file<F>(path: &Path, meta: &RunMeta, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (k, v) in meta.pairs() {
        writeln!(w, "# {k}={v}").map_err(|e| Error::io(path, e))?;
    }
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFilm {
    pub film_id: String,
    pub title: String,
    pub year: i32,
    pub award_class: String,
    pub genre: String,
    /// Relative to the corpus root, `/`-separated.
    pub subtitle_file: String,
    pub cue_count: usize,
    pub length_ms: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedFilm {
    pub film_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// The only field that changes between identical runs.
    pub generated_at_unix: u64,
    pub meta: RunMeta,
    pub films: Vec<ManifestFilm>,
    pub failed: Vec<FailedFilm>,
    pub missing_subtitles: Vec<String>,
    pub unmatched_files: Vec<String>,
    pub genre_mismatches: Vec<GenreMismatch>,
}

fn collect_srt_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("srt"))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Maps film ids (file stems) to subtitle paths. Duplicate stems keep the
/// first path in sorted order; later ones are reported as unmatched.
fn subtitle_index(root: &Path) -> Result<(BTreeMap<String, PathBuf>, Vec<String>)> {
    let mut index = BTreeMap::new();
    let mut duplicates = Vec::new();
    for path in collect_srt_files(root)? {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match index.entry(stem) {
            std::collections::btree_map::Entry::Occupied(_) => {
                duplicates.push(relative(root, &path));
            }
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(path);
            }
        }
    }
    Ok((index, duplicates))
}

pub fn cmd_ingest(config: &RunConfig) -> Result<Manifest> {
    let catalog = load_catalog(&config.catalog)?;
    let resources = Resources::load(config)?;
    let (index, mut unmatched) = subtitle_index(&config.corpus_root)?;
    let catalog_ids: BTreeSet<&str> = catalog.entries.iter().map(|e| e.film_id.as_str()).collect();
    unmatched.extend(
        index
            .iter()
            .filter(|(id, _)| !catalog_ids.contains(id.as_str()))
            .map(|(_, p)| relative(&config.corpus_root, p)),
    );
    unmatched.sort();
    let missing: Vec<String> = catalog
        .entries
        .iter()
        .filter(|e| !index.contains_key(&e.film_id))
        .map(|e| e.film_id.clone())
        .collect();

    let parsed: Vec<std::result::Result<ManifestFilm, FailedFilm>> = catalog
        .entries
        .par_iter()
        .filter_map(|entry| index.get(&entry.film_id).map(|p| (entry, p)))
        .map(|(entry, path)| match load_srt(path, &entry.film_id) {
            Ok((doc, report)) => Ok(ManifestFilm {
                film_id: entry.film_id.clone(),
                title: entry.title.clone(),
                year: entry.year,
                award_class: entry.award_class.to_string(),
                genre: entry.genre.to_string(),
                subtitle_file: relative(&config.corpus_root, path),
                cue_count: doc.cues.len(),
                length_ms: doc.length_ms(),
                warnings: report.warnings(),
            }),
            Err(e) => Err(FailedFilm {
                film_id: entry.film_id.clone(),
                error: e.to_string(),
            }),
        })
        .collect();
    let (mut films, mut failed) = (Vec::new(), Vec::new());
    for p in parsed {
        match p {
            Ok(f) => films.push(f),
            Err(f) => failed.push(f),
        }
    }

    let manifest = Manifest {
        generated_at_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        meta: resources.meta(config, "none"),
        films,
        failed,
        missing_subtitles: missing,
        unmatched_files: unmatched,
        genre_mismatches: catalog.genre_mismatches.clone(),
    };
    write_json(&config.output_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Sentiment,
    Abuse,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sentiment => "sentiment",
            Task::Abuse => "abuse",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentiment" => Ok(Task::Sentiment),
            "abuse" => Ok(Task::Abuse),
            _ => Err(Error::InvalidArgument(format!("unknown task `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub texts: Vec<String>,
    pub labels: Vec<Vec<bool>>,
    pub label_names: Vec<String>,
}

const TEXT_COLUMNS: &[&str] = &["text", "tweet", "content", "comment", "sentence"];
const ABUSE_COLUMNS: &[&str] = &["label", "is_abusive", "abusive", "class", "offensive"];

fn parse_flag(raw: &str, row: usize, column: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" => Ok(true),
        "0" | "0.0" | "false" | "no" | "" => Ok(false),
        other => Err(Error::MalformedRow {
            row,
            reason: format!("column `{column}`: `{other}` is not a 0/1 flag"),
        }),
    }
}

/// Reads a labelled CSV. Sentiment data needs the ten label columns (aliases
/// accepted, any order); abuse data needs one binary column.
pub fn read_dataset<R: std::io::Read>(reader: R, task: Task) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let find = |names: &[&str]| {
        header
            .iter()
            .position(|h| names.contains(&h.to_ascii_lowercase().as_str()))
    };
    let text_col = find(TEXT_COLUMNS)
        .ok_or_else(|| Error::Format(format!("no text column among {header:?}")))?;
    let (cols, label_names): (Vec<usize>, Vec<String>) = match task {
        Task::Sentiment => {
            let mut slots = [None; NUM_LABELS];
            for (i, h) in header.iter().enumerate() {
                if let Some(l) = SentimentLabel::from_alias(h) {
                    if slots[l.index()].replace(i).is_some() {
                        return Err(Error::Format(format!(
                            "label `{l}` appears twice in header"
                        )));
                    }
                }
            }
            let cols = slots
                .iter()
                .zip(SentimentLabel::ALL)
                .map(|(s, l)| s.ok_or_else(|| Error::Format(format!("missing label column `{l}`"))))
                .collect::<Result<_>>()?;
            (cols, SentimentLabel::names())
        }
        Task::Abuse => {
            let col =
                find(ABUSE_COLUMNS).ok_or_else(|| Error::Format("no abuse label column".into()))?;
            (vec![col], vec!["abusive".into()])
        }
    };
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        texts.push(rec.get(text_col).unwrap_or_default().to_owned());
        labels.push(
            cols.iter()
                .map(|&c| parse_flag(rec.get(c).unwrap_or_default(), row, &header[c]))
                .collect::<Result<Vec<bool>>>()?,
        );
    }
    if texts.is_empty() {
        return Err(Error::EmptySelection("dataset has no rows".into()));
    }
    Ok(Dataset {
        texts,
        labels,
        label_names,
    })
}

pub fn load_dataset(path: &Path, task: Task) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(file), task)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub meta: RunMeta,
    pub task: Task,
    pub model: String,
    pub loss: LossKind,
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub split_warnings: Vec<String>,
    pub validation: MetricReport,
    pub test: MetricReport,
}

fn model_name(loss: LossKind) -> &'static str {
    match loss {
        LossKind::Logistic => "Logistic Regression",
        LossKind::Hinge => "Linear SVM",
    }
}

pub fn model_dir(config: &RunConfig, task: Task) -> PathBuf {
    let configured = match task {
        Task::Sentiment => &config.sentiment_model,
        Task::Abuse => &config.abuse_model,
    };
    configured
        .clone()
        .unwrap_or_else(|| config.output_dir.join(MODELS_DIR).join(task.as_str()))
}

fn evaluate(
    clf: &TextClassifier,
    tokens: &[TokenSequence],
    labels: &[Vec<bool>],
    idx: &[usize],
    task: Task,
) -> Result<MetricReport> {
    if idx.is_empty() {
        return Ok(MetricReport::default());
    }
    let truth: Vec<Vec<bool>> = idx.iter().map(|&i| labels[i].clone()).collect();
    let pred: Vec<Vec<bool>> = idx
        .iter()
        .map(|&i| {
            clf.model
                .predict_labels(&clf.vocabulary.transform(&tokens[i]), POSITIVE)
        })
        .collect::<Result<_>>()?;
    Ok(match task {
        Task::Sentiment => MetricReport {
            multilabel: Some(compute_multilabel_metrics(&truth, &pred)?),
            binary: None,
        },
        Task::Abuse => {
            let t: Vec<bool> = truth.iter().map(|r| r[0]).collect();
            let p: Vec<bool> = pred.iter().map(|r| r[0]).collect();
            MetricReport {
                multilabel: None,
                binary: Some(compute_binary_metrics(&t, &p)?),
            }
        }
    })
}

/// Split, vectorize, fit and evaluate. Writes the model directory plus
/// `metrics.json` and `metrics.csv` inside it.
pub fn cmd_train(config: &RunConfig, task: Task, data: Option<&Path>) -> Result<TrainReport> {
    let configured = match task {
        Task::Sentiment => config.sentiment_data.as_deref(),
        Task::Abuse => config.abuse_data.as_deref(),
    };
    let path = data.or(configured).ok_or_else(|| {
        Error::Config(format!(
            "no training data given for the {} task",
            task.as_str()
        ))
    })?;
    let dataset = load_dataset(path, task)?;
    let resources = Resources::load(config)?;
    let fractions = SplitFractions::default();
    let (split, split_warnings): (SplitAssignment, Vec<String>) = match task {
        Task::Sentiment => (
            iterative_stratified_split(&dataset.labels, fractions, config.seed)?,
            Vec::new(),
        ),
        Task::Abuse => {
            let flat: Vec<bool> = dataset.labels.iter().map(|r| r[0]).collect();
            stratified_binary_split(&flat, fractions, config.seed)?
        }
    };
    let tokens: Vec<TokenSequence> = dataset
        .texts
        .par_iter()
        .map(|t| remove_stopwords(&prepare(t), &resources.classify_stopwords))
        .collect();
    let train_tokens: Vec<TokenSequence> = split.train.iter().map(|&i| tokens[i].clone()).collect();
    let vocab = fit_vocabulary(
        &train_tokens,
        VectorizerConfig {
            max_features: config.max_features,
            ..VectorizerConfig::default()
        },
    )?;
    let xs = vocab.transform_all(&train_tokens);
    let ys: Vec<Vec<bool>> = split
        .train
        .iter()
        .map(|&i| dataset.labels[i].clone())
        .collect();
    let model = train(&xs, &ys, config.loss, &config.train)?;
    let clf = TextClassifier::new(
        vocab,
        model,
        dataset.label_names.clone(),
        resources.classify_stopwords.clone(),
    )?;

    let meta = resources.meta(config, NATIVE_BACKEND);
    let report = TrainReport {
        meta: meta.clone(),
        task,
        model: model_name(config.loss).into(),
        loss: config.loss,
        seed: config.seed,
        n_train: split.train.len(),
        n_validation: split.validation.len(),
        n_test: split.test.len(),
        n_features: clf.vocabulary.len(),
        split_warnings,
        validation: evaluate(&clf, &tokens, &dataset.labels, &split.validation, task)?,
        test: evaluate(&clf, &tokens, &dataset.labels, &split.test, task)?,
    };
    let dir = model_dir(config, task);
    let mut pairs = meta.pairs();
    pairs.push(("task".into(), task.as_str().into()));
    pairs.push(("seed".into(), config.seed.to_string()));
    clf.save(&dir, &pairs)?;
    write_json(&dir.join("metrics.json"), &report)?;
    write_csv_file(&dir.join("metrics.csv"), &meta, |w| {
        report.test.write_csv(&report.model, w)
    })?;
    Ok(report)
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Corpus,
    Film(String),
}

/// Scores for every cue of one film plus its aggregate summary.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmAnalysis {
    pub doc: SubtitleDocument,
    /// `None` for cues with no text left after cleaning.
    pub cue_values: Vec<Option<LabelValues>>,
    pub cue_polarity: Vec<f64>,
    pub cue_abuse: Vec<f64>,
    pub cue_lexicon: Vec<AbuseCount>,
    pub ngram_tokens: Vec<TokenSequence>,
    pub summary: FilmSummary,
}

fn load_film(config: &RunConfig, entry: &ManifestFilm) -> Result<SubtitleDocument> {
    let path = config.corpus_root.join(&entry.subtitle_file);
    load_srt(&path, &entry.film_id).map(|(doc, _)| doc)
}

fn analyse_film(
    config: &RunConfig,
    resources: &Resources,
    client: &InferenceClient,
    entry: &FilmCatalogEntry,
    doc: SubtitleDocument,
) -> Result<FilmAnalysis> {
    let texts: Vec<String> = doc.cues.iter().map(|c| c.text()).collect();
    let scored: Vec<usize> = (0..texts.len())
        .filter(|&i| !clean_text(&texts[i]).is_empty())
        .collect();
    let batch: Vec<String> = scored.iter().map(|&i| texts[i].clone()).collect();
    let (values, abuse) = if batch.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (
            client.classify_sentiment_batch(&batch)?,
            client.classify_abuse_batch(&batch)?,
        )
    };
    let n = texts.len();
    let mut cue_values = vec![None; n];
    let mut cue_polarity = vec![0.0; n];
    let mut cue_abuse = vec![0.0; n];
    for ((&i, v), a) in scored.iter().zip(&values).zip(&abuse) {
        cue_values[i] = Some(*v);
        cue_polarity[i] = weighted_score(v, &resources.weights).score;
        cue_abuse[i] = a.probability;
    }
    let all_tokens: Vec<TokenSequence> = texts.iter().map(|t| prepare(t)).collect();
    let cue_lexicon = all_tokens
        .iter()
        .map(|t| count_abusive(t, &resources.lexicon))
        .collect::<Result<Vec<_>>>()?;
    let ngram_tokens = all_tokens
        .iter()
        .map(|t| remove_stopwords(t, &resources.ngram_stopwords))
        .collect();

    let mut labels: LabelSet = [false; NUM_LABELS];
    for v in &values {
        for (set, p) in labels.iter_mut().zip(v.0) {
            *set |= p >= POSITIVE;
        }
    }
    let mut abuse_total = AbuseCount::default();
    for c in &cue_lexicon {
        abuse_total += *c;
    }
    let mut k = 0usize;
    let time = abusive_time(&doc, |_| {
        let flagged = match config.abusive_time {
            TimePredicate::Lexicon => cue_lexicon[k].abusive > 0,
            TimePredicate::Classifier => cue_abuse[k] >= POSITIVE && cue_values[k].is_some(),
        };
        k += 1;
        flagged
    });
    let summary = FilmSummary {
        film_id: entry.film_id.clone(),
        year: entry.year,
        award_class: entry.award_class,
        genre: entry.genre,
        labels,
        abuse: abuse_total,
        mean_abuse_probability: (!abuse.is_empty())
            .then(|| abuse.iter().map(|a| a.probability).sum::<f64>() / abuse.len() as f64),
        sentiment_score: film_score(&values, &resources.weights).ok(),
        time,
    };
    Ok(FilmAnalysis {
        doc,
        cue_values,
        cue_polarity,
        cue_abuse,
        cue_lexicon,
        ngram_tokens,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramPanel {
    pub era: Era,
    pub n: usize,
    pub rows: Vec<RankedNgram>,
}

impl NgramPanel {
    pub fn file_name(&self) -> String {
        let kind = if self.n == 2 { "bigrams" } else { "trigrams" };
        format!("{kind}_{}.csv", self.era)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub meta: RunMeta,
    pub film_count: usize,
    pub films: Vec<FilmSummary>,
    pub ngrams: Vec<NgramPanel>,
    pub emotion_counts_corpus: BTreeMap<String, [u64; NUM_LABELS]>,
    pub emotion_counts_genre: BTreeMap<String, [u64; NUM_LABELS]>,
    pub cooccurrence: CooccurrenceMatrix,
    pub series: Vec<TrendSeries>,
    pub fallbacks: Vec<FallbackEvent>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmReport {
    pub meta: RunMeta,
    pub summary: FilmSummary,
    pub timeline: TimelineSeries,
    pub cues: Vec<CueRow>,
    pub fallbacks: Vec<FallbackEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisOutput {
    Corpus(Box<CorpusReport>),
    Film(Box<FilmReport>),
}

/// Builds the inference front end named by the config. Native models are
/// loaded from their directories when present.
pub fn build_client(
    config: &RunConfig,
    transport: Option<std::sync::Arc<dyn crate::inference::Transport>>,
) -> Result<InferenceClient> {
    let load = |task: Task| -> Result<Option<TextClassifier>> {
        let dir = model_dir(config, task);
        if dir.join("model.txt").exists() {
            TextClassifier::load(&dir).map(Some)
        } else {
            Ok(None)
        }
    };
    let (sentiment, abuse) = (load(Task::Sentiment)?, load(Task::Abuse)?);
    if config.backend.kind != crate::inference::BackendKind::RemoteService
        && (sentiment.is_none() || abuse.is_none())
    {
        return Err(Error::Config(format!(
            "backend `{}` needs trained sentiment and abuse models; run `train` first",
            config.backend.kind
        )));
    }
    InferenceClient::new(config.backend.clone(), transport, sentiment, abuse)
}

fn backend_label(client: &InferenceClient) -> String {
    let used = client.backends_used();
    if used.is_empty() {
        client.selection().kind.to_string()
    } else {
        used.join("+")
    }
}

pub fn cmd_analyze(config: &RunConfig, scope: &Scope) -> Result<AnalysisOutput> {
    analyze_with(config, scope, &build_client(config, None)?)
}

pub fn analyze_with(
    config: &RunConfig,
    scope: &Scope,
    client: &InferenceClient,
) -> Result<AnalysisOutput> {
    let manifest_path = config.output_dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(Error::Config(
            "no manifest found; run `ingest` first".into(),
        ));
    }
    let manifest: Manifest = read_json(&manifest_path)?;
    let catalog: Catalog = load_catalog(&config.catalog)?;
    let resources = Resources::load(config)?;
    let entries: Vec<&ManifestFilm> = match scope {
        Scope::Corpus => manifest.films.iter().collect(),
        Scope::Film(id) => vec![manifest
            .films
            .iter()
            .find(|f| &f.film_id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown film id `{id}`")))?],
    };
    let analyses: Vec<FilmAnalysis> = entries
        .par_iter()
        .map(|m| {
            let entry = catalog.get(&m.film_id).ok_or_else(|| {
                Error::InvalidArgument(format!("film `{}` is no longer in the catalog", m.film_id))
            })?;
            analyse_film(config, &resources, client, entry, load_film(config, m)?)
        })
        .collect::<Result<_>>()?;
    let meta = resources.meta(config, backend_label(client));

    match scope {
        Scope::Film(_) => {
            let a = &analyses[0];
            let report = FilmReport {
                meta,
                summary: a.summary.clone(),
                timeline: film_timeline(
                    &a.doc,
                    &a.cue_polarity,
                    &a.cue_abuse,
                    config.window_minutes,
                )?,
                cues: cue_table(&a.doc, &a.cue_polarity, &a.cue_abuse)?,
                fallbacks: client.fallback_events(),
            };
            let dir = film_dir(config, &a.summary.film_id);
            write_json(&dir.join("film.json"), &report)?;
            write_film_csvs(&report, &dir)?;
            Ok(AnalysisOutput::Film(Box::new(report)))
        }
        Scope::Corpus => {
            let report = corpus_report(config, meta, &analyses, client.fallback_events())?;
            let dir = config.output_dir.join(REPORT_DIR);
            write_json(&dir.join("report.json"), &report)?;
            write_corpus_csvs(&report, &dir)?;
            Ok(AnalysisOutput::Corpus(Box::new(report)))
        }
    }
}

fn film_dir(config: &RunConfig, film_id: &str) -> PathBuf {
    config.output_dir.join(FILMS_DIR).join(film_id)
}

fn corpus_report(
    config: &RunConfig,
    meta: RunMeta,
    analyses: &[FilmAnalysis],
    fallbacks: Vec<FallbackEvent>,
) -> Result<CorpusReport> {
    let films: Vec<FilmSummary> = analyses.iter().map(|a| a.summary.clone()).collect();
    let mut warnings = Vec::new();
    let mut ngrams = Vec::new();
    for n in [2, 3] {
        let tables = analyses
            .iter()
            .map(|a| Ok((a.summary.year, document_ngrams(&a.ngram_tokens, n)?)))
            .collect::<Result<Vec<_>>>()?;
        for era in Era::panels() {
            match era_tables(
                tables.iter().map(|(y, t)| (*y, t)),
                era,
                n,
                config.ngram_top_k,
            ) {
                Ok(rows) => ngrams.push(NgramPanel { era, n, rows }),
                Err(Error::EmptySelection(msg)) => {
                    if n == 2 {
                        warnings.push(msg);
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
    let label_sets: Vec<LabelSet> = films.iter().map(|f| f.labels).collect();
    let (normalized, w1) = normalized_abuse_by_genre(&films);
    let (sentiment, w2) = sentiment_by_decade(&films);
    warnings.extend(w1);
    warnings.extend(w2);
    let series = vec![
        abuse_trend(&films),
        abuse_probability_by_year(&films, config.smoothing_years)?,
        normalized,
        words_per_decade(&films),
        abusive_time_by_decade(&films),
        sentiment,
    ];
    Ok(CorpusReport {
        meta,
        film_count: films.len(),
        emotion_counts_corpus: emotion_counts(&films, Grouping::Corpus),
        emotion_counts_genre: emotion_counts(&films, Grouping::Genre),
        cooccurrence: cooccurrence(&label_sets),
        films,
        ngrams,
        series,
        fallbacks,
        warnings,
    })
}

fn write_film_summaries<W: Write + ?Sized>(films: &[FilmSummary], writer: &mut W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = [
        "film_id",
        "year",
        "award_class",
        "genre",
        "abusive_words",
        "total_words",
        "mean_abuse_probability",
        "sentiment_score",
        "dialogue_ms",
        "abusive_ms",
    ]
    .map(String::from)
    .to_vec();
    header.extend(SentimentLabel::names());
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for f in films {
        let mut rec = vec![
            f.film_id.clone(),
            f.year.to_string(),
            f.award_class.to_string(),
            f.genre.to_string(),
            f.abuse.abusive.to_string(),
            f.abuse.total.to_string(),
            opt(f.mean_abuse_probability),
            opt(f.sentiment_score),
            f.time.total_ms.to_string(),
            f.time.abusive_ms.to_string(),
        ];
        rec.extend(f.labels.iter().map(|&b| u8::from(b).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every corpus CSV from a report bundle.
pub fn write_corpus_csvs(report: &CorpusReport, dir: &Path) -> Result<()> {
    let meta = &report.meta;
    for panel in &report.ngrams {
        write_csv_file(&dir.join("ngrams").join(panel.file_name()), meta, |w| {
            write_ranked_csv(&panel.rows, w)
        })?;
    }
    write_csv_file(&dir.join("emotion_counts_corpus.csv"), meta, |w| {
        write_emotion_counts_csv(&report.emotion_counts_corpus, w)
    })?;
    write_csv_file(&dir.join("emotion_counts_genre.csv"), meta, |w| {
        write_emotion_counts_csv(&report.emotion_counts_genre, w)
    })?;
    write_csv_file(&dir.join("cooccurrence.csv"), meta, |w| {
        report.cooccurrence.write_csv(w)
    })?;
    for s in &report.series {
        write_csv_file(&dir.join(format!("{}.csv", s.name)), meta, |w| {
            s.write_csv(w)
        })?;
    }
    write_csv_file(&dir.join("films.csv"), meta, |w| {
        write_film_summaries(&report.films, w)
    })
}

pub fn write_film_csvs(report: &FilmReport, dir: &Path) -> Result<()> {
    write_csv_file(&dir.join("timeline.csv"), &report.meta, |w| {
        report.timeline.write_csv(w)
    })?;
    write_csv_file(&dir.join("cues.csv"), &report.meta, |w| {
        write_cue_table_csv(&report.cues, w)
    })
}

/// Rewrites all CSVs from the JSON bundles under the output directory.
/// Returns the number of bundles exported.
pub fn cmd_export(config: &RunConfig) -> Result<usize> {
    let mut count = 0;
    let report_dir = config.output_dir.join(REPORT_DIR);
    let corpus = report_dir.join("report.json");
    if corpus.exists() {
        write_corpus_csvs(&read_json(&corpus)?, &report_dir)?;
        count += 1;
    }
    let films = config.output_dir.join(FILMS_DIR);
    if films.is_dir() {
        let mut dirs: Vec<PathBuf> = fs::read_dir(&films)
            .map_err(|e| Error::io(&films, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("film.json").exists())
            .collect();
        dirs.sort();
        for d in dirs {
            write_film_csvs(&read_json(&d.join("film.json"))?, &d)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptySelection(
            "nothing to export; run `analyze` first".into(),
        ));
    }
    Ok(count)
}
