//! Corpus-level aggregations keyed by year, decade, award class and genre.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AwardClass, Genre};
use crate::error::{Error, Result};
use crate::lexicon::{AbuseCount, AbusiveTime};
use crate::sentiment::{decade_average, SentimentLabel, NUM_LABELS};

pub type LabelSet = [bool; NUM_LABELS];

pub const DEFAULT_SMOOTHING_YEARS: usize = 10;

pub fn decade_of(year: i32) -> i32 {
    year.div_euclid(10) * 10
}

pub fn decade_label(year: i32) -> String {
    format!("{}s", decade_of(year))
}

/// Everything the aggregations need to know about one film.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmSummary {
    pub film_id: String,
    pub year: i32,
    pub award_class: AwardClass,
    pub genre: Genre,
    /// Label `l` is set when any cue of the film is positive for it.
    pub labels: LabelSet,
    pub abuse: AbuseCount,
    pub mean_abuse_probability: Option<f64>,
    pub sentiment_score: Option<f64>,
    pub time: AbusiveTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub counts: [[u64; NUM_LABELS]; NUM_LABELS],
}

impl CooccurrenceMatrix {
    pub fn get(&self, a: SentimentLabel, b: SentimentLabel) -> u64 {
        self.counts[a.index()][b.index()]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["label".to_owned()];
        header.extend(SentimentLabel::names());
        w.write_record(&header)?;
        for (label, row) in SentimentLabel::ALL.iter().zip(&self.counts) {
            let mut rec = vec![label.as_str().to_owned()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn cooccurrence(label_sets: &[LabelSet]) -> CooccurrenceMatrix {
    let mut counts = [[0u64; NUM_LABELS]; NUM_LABELS];
    for set in label_sets {
        for a in 0..NUM_LABELS {
            if !set[a] {
                continue;
            }
            for b in 0..NUM_LABELS {
                if set[b] {
                    counts[a][b] += 1;
                }
            }
        }
    }
    CooccurrenceMatrix { counts }
}

/// A keyed table of one or more values per row, plus the group size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub name: String,
    pub key_columns: Vec<String>,
    pub value_columns: Vec<String>,
    pub rows: Vec<TrendRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub key: Vec<String>,
    pub values: Vec<f64>,
    pub n: usize,
}

impl TrendSeries {
    fn new(name: &str, keys: &[&str], values: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            key_columns: keys.iter().map(|s| (*s).to_owned()).collect(),
            value_columns: values.iter().map(|s| (*s).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&self, key: &[&str]) -> Option<&TrendRow> {
        self.rows
            .iter()
            .find(|r| r.key.iter().map(String::as_str).eq(key.iter().copied()))
    }

    /// Adds values and group sizes key by key. Valid for summed series.
    pub fn merge_sum(&self, other: &TrendSeries) -> TrendSeries {
        let mut map: BTreeMap<Vec<String>, (Vec<f64>, usize)> = BTreeMap::new();
        for r in self.rows.iter().chain(&other.rows) {
            let e = map
                .entry(r.key.clone())
                .or_insert_with(|| (vec![0.0; r.values.len()], 0));
            e.0.iter_mut().zip(&r.values).for_each(|(a, b)| *a += b);
            e.1 += r.n;
        }
        TrendSeries {
            rows: map
                .into_iter()
                .map(|(key, (values, n))| TrendRow { key, values, n })
                .collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.key_columns.clone();
        header.extend(self.value_columns.iter().cloned());
        header.push("n".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = row.key.clone();
            rec.extend(row.values.iter().map(|v| format!("{v:.6}")));
            rec.push(row.n.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grouping {
    Corpus,
    Genre,
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "corpus" => Ok(Grouping::Corpus),
            "genre" => Ok(Grouping::Genre),
            _ => Err(Error::InvalidArgument(format!("unknown grouping `{s}`"))),
        }
    }
}

/// Positive-label counts per group. Corpus grouping uses the single key `all`.
pub fn emotion_counts(
    films: &[FilmSummary],
    grouping: Grouping,
) -> BTreeMap<String, [u64; NUM_LABELS]> {
    let mut out: BTreeMap<String, [u64; NUM_LABELS]> = BTreeMap::new();
    if grouping == Grouping::Genre {
        for g in Genre::ALL {
            out.insert(g.as_str().to_owned(), [0; NUM_LABELS]);
        }
    }
    for film in films {
        let key = match grouping {
            Grouping::Corpus => "all".to_owned(),
            Grouping::Genre => film.genre.as_str().to_owned(),
        };
        let counts = out.entry(key).or_insert([0; NUM_LABELS]);
        for (c, &set) in counts.iter_mut().zip(&film.labels) {
            *c += u64::from(set);
        }
    }
    out
}

pub fn write_emotion_counts_csv<W: Write>(
    groups: &BTreeMap<String, [u64; NUM_LABELS]>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "label", "count"])?;
    for (group, counts) in groups {
        for (label, c) in SentimentLabel::ALL.iter().zip(counts) {
            w.write_record([group.as_str(), label.as_str(), &c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summed abusive-word counts per (year, award class).
pub fn abuse_trend(films: &[FilmSummary]) -> TrendSeries {
    let mut map: BTreeMap<(i32, AwardClass), (u64, usize)> = BTreeMap::new();
    for f in films {
        let e = map.entry((f.year, f.award_class)).or_default();
        e.0 += f.abuse.abusive;
        e.1 += 1;
    }
    let mut s = TrendSeries::new("abuse_trend", &["year", "award_class"], &["abusive_words"]);
    s.rows = map
        .into_iter()
        .map(|((year, class), (sum, n))| TrendRow {
            key: vec![year.to_string(), class.to_string()],
            values: vec![sum as f64],
            n,
        })
        .collect();
    s
}

/// Yearly mean of per-film abuse probability per award class, smoothed by a
/// trailing moving average over the last `window_years` years that have data.
/// `n` counts the films inside the window.
pub fn abuse_probability_by_year(
    films: &[FilmSummary],
    window_years: usize,
) -> Result<TrendSeries> {
    if window_years == 0 {
        return Err(Error::InvalidArgument(
            "smoothing window must be at least one year".into(),
        ));
    }
    let mut yearly: BTreeMap<AwardClass, BTreeMap<i32, Vec<f64>>> = BTreeMap::new();
    for f in films {
        if let Some(p) = f.mean_abuse_probability {
            yearly
                .entry(f.award_class)
                .or_default()
                .entry(f.year)
                .or_default()
                .push(p);
        }
    }
    let mut s = TrendSeries::new(
        "abuse_probability_by_year",
        &["year", "award_class"],
        &["yearly_mean", "smoothed"],
    );
    let mut rows = Vec::new();
    for (class, years) in &yearly {
        let means: BTreeMap<i32, (f64, usize)> = years
            .iter()
            .map(|(&y, ps)| (y, (ps.iter().sum::<f64>() / ps.len() as f64, ps.len())))
            .collect();
        for (&year, &(mean, _)) in &means {
            let lo = year - window_years as i32 + 1;
            let window: Vec<(f64, usize)> = means.range(lo..=year).map(|(_, v)| *v).collect();
            let smoothed = window.iter().map(|(m, _)| m).sum::<f64>() / window.len() as f64;
            rows.push((
                year,
                *class,
                mean,
                smoothed,
                window.iter().map(|(_, n)| n).sum(),
            ));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    s.rows = rows
        .into_iter()
        .map(|(year, class, mean, smoothed, n)| TrendRow {
            key: vec![year.to_string(), class.to_string()],
            values: vec![mean, smoothed],
            n,
        })
        .collect();
    Ok(s)
}

/// Mean per-film share of abusive words per (genre, decade). Films without
/// any words are excluded and reported.
pub fn normalized_abuse_by_genre(films: &[FilmSummary]) -> (TrendSeries, Vec<String>) {
    let mut map: BTreeMap<(Genre, i32), Vec<f64>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for f in films {
        if f.abuse.total == 0 {
            warnings.push(format!(
                "film `{}` has no words and was excluded",
                f.film_id
            ));
            continue;
        }
        map.entry((f.genre, decade_of(f.year)))
            .or_default()
            .push(f.abuse.abusive as f64 / f.abuse.total as f64);
    }
    let mut s = TrendSeries::new(
        "normalized_abuse_by_genre",
        &["genre", "decade"],
        &["normalized_abuse"],
    );
    s.rows = map
        .into_iter()
        .map(|((genre, decade), ratios)| TrendRow {
            key: vec![genre.to_string(), format!("{decade}s")],
            values: vec![ratios.iter().sum::<f64>() / ratios.len() as f64],
            n: ratios.len(),
        })
        .collect();
    (s, warnings)
}

pub fn words_per_decade(films: &[FilmSummary]) -> TrendSeries {
    let mut map: BTreeMap<i32, (AbuseCount, usize)> = BTreeMap::new();
    for f in films {
        let e = map.entry(decade_of(f.year)).or_default();
        e.0 += f.abuse;
        e.1 += 1;
    }
    let mut s = TrendSeries::new(
        "words_per_decade",
        &["decade"],
        &["total_words", "abusive_words"],
    );
    s.rows = map
        .into_iter()
        .map(|(decade, (c, n))| TrendRow {
            key: vec![format!("{decade}s")],
            values: vec![c.total as f64, c.abusive as f64],
            n,
        })
        .collect();
    s
}

/// Average dialogue length and average flagged time per decade, in minutes.
pub fn abusive_time_by_decade(films: &[FilmSummary]) -> TrendSeries {
    let mut map: BTreeMap<i32, (u64, u64, usize)> = BTreeMap::new();
    for f in films {
        let e = map.entry(decade_of(f.year)).or_default();
        e.0 += f.time.total_ms;
        e.1 += f.time.abusive_ms;
        e.2 += 1;
    }
    let mut s = TrendSeries::new(
        "abusive_time_by_decade",
        &["decade"],
        &["mean_movie_minutes", "mean_abusive_minutes"],
    );
    s.rows = map
        .into_iter()
        .map(|(decade, (total, abusive, n))| TrendRow {
            key: vec![format!("{decade}s")],
            values: vec![
                total as f64 / n as f64 / 60_000.0,
                abusive as f64 / n as f64 / 60_000.0,
            ],
            n,
        })
        .collect();
    s
}

/// Film sentiment scores per (decade, award class): mean and population std.
pub fn sentiment_by_decade(films: &[FilmSummary]) -> (TrendSeries, Vec<String>) {
    let mut groups: BTreeMap<(i32, AwardClass), Vec<f64>> = BTreeMap::new();
    for f in films {
        if let Some(score) = f.sentiment_score {
            groups
                .entry((decade_of(f.year), f.award_class))
                .or_default()
                .push(score);
        }
    }
    let (stats, warnings) = decade_average(&groups);
    let mut s = TrendSeries::new(
        "sentiment_by_decade",
        &["decade", "award_class"],
        &["mean", "std"],
    );
    s.rows = stats
        .into_iter()
        .map(|((decade, class), st)| TrendRow {
            key: vec![format!("{decade}s"), class.to_string()],
            values: vec![st.mean, st.std],
            n: st.n,
        })
        .collect();
    (s, warnings)
}
