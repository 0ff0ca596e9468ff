//! Per-film windowed series and the per-cue report table.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{format_timestamp, SubtitleDocument};
use crate::error::{Error, Result};
use crate::sentiment::Polarity;

pub const DEFAULT_WINDOW_MINUTES: u32 = 5;
pub const ABUSE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineWindow {
    pub start_minute: u32,
    pub cue_count: usize,
    pub mean_polarity: Option<f64>,
    pub abuse_count: usize,
    pub mean_abuse_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSeries {
    pub film_id: String,
    pub window_minutes: u32,
    pub windows: Vec<TimelineWindow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl TimelineSeries {
    pub fn total_cues(&self) -> usize {
        self.windows.iter().map(|w| w.cue_count).sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "window_start_min",
            "cue_count",
            "mean_polarity",
            "abuse_count",
            "mean_abuse_probability",
        ])?;
        for win in &self.windows {
            w.write_record([
                win.start_minute.to_string(),
                win.cue_count.to_string(),
                opt(win.mean_polarity),
                win.abuse_count.to_string(),
                opt(win.mean_abuse_probability),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_scores(doc: &SubtitleDocument, polarity: &[f64], abuse: &[f64]) -> Result<()> {
    if doc.cues.is_empty() {
        return Err(Error::NoScoredContent(doc.film_id.clone()));
    }
    for len in [polarity.len(), abuse.len()] {
        if len != doc.cues.len() {
            return Err(Error::DimensionMismatch {
                expected: doc.cues.len(),
                actual: len,
            });
        }
    }
    Ok(())
}

/// Buckets cues by start time. `polarity[i]` and `abuse[i]` belong to `doc.cues[i]`.
pub fn film_timeline(
    doc: &SubtitleDocument,
    polarity: &[f64],
    abuse: &[f64],
    window_minutes: u32,
) -> Result<TimelineSeries> {
    if window_minutes == 0 {
        return Err(Error::InvalidArgument(
            "window must be at least one minute".into(),
        ));
    }
    check_scores(doc, polarity, abuse)?;
    let width = u64::from(window_minutes) * 60_000;
    let n_windows = (doc.length_ms().div_ceil(width)).max(1) as usize;
    let mut sums = vec![(0usize, 0.0f64, 0usize, 0.0f64); n_windows];
    for ((cue, &pol), &p) in doc.cues.iter().zip(polarity).zip(abuse) {
        // a cue starting exactly at the film end still needs a home
        let k = ((cue.start_ms / width) as usize).min(n_windows - 1);
        let s = &mut sums[k];
        s.0 += 1;
        s.1 += pol;
        s.2 += usize::from(p >= ABUSE_THRESHOLD);
        s.3 += p;
    }
    let windows = sums
        .into_iter()
        .enumerate()
        .map(|(k, (n, pol, hits, p))| TimelineWindow {
            start_minute: k as u32 * window_minutes,
            cue_count: n,
            mean_polarity: (n > 0).then(|| pol / n as f64),
            abuse_count: hits,
            mean_abuse_probability: (n > 0).then(|| p / n as f64),
        })
        .collect();
    Ok(TimelineSeries {
        film_id: doc.film_id.clone(),
        window_minutes,
        windows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AbusiveLevel {
    Low,
    Medium,
    High,
}

impl AbusiveLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            AbusiveLevel::Low => "Low",
            AbusiveLevel::Medium => "Medium",
            AbusiveLevel::High => "High",
        }
    }
}

impl fmt::Display for AbusiveLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Equal-width tertiles of the abuse probability.
pub fn abusive_level(p: f64) -> Result<AbusiveLevel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(if p < 1.0 / 3.0 {
        AbusiveLevel::Low
    } else if p < 2.0 / 3.0 {
        AbusiveLevel::Medium
    } else {
        AbusiveLevel::High
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueRow {
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
    pub polarity_score: f64,
    pub sentiment: Polarity,
    pub abuse_probability: f64,
    pub level: AbusiveLevel,
}

pub fn cue_table(doc: &SubtitleDocument, polarity: &[f64], abuse: &[f64]) -> Result<Vec<CueRow>> {
    check_scores(doc, polarity, abuse)?;
    doc.cues
        .iter()
        .zip(polarity)
        .zip(abuse)
        .map(|((cue, &score), &p)| {
            Ok(CueRow {
                start_ms: cue.start_ms,
                end_ms: cue.end_ms,
                text: cue.text(),
                polarity_score: score,
                sentiment: Polarity::of(score),
                abuse_probability: p,
                level: abusive_level(p)?,
            })
        })
        .collect()
}

pub fn write_cue_table_csv<W: Write>(rows: &[CueRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "Start Time",
        "End Time",
        "Text",
        "Sentiment",
        "Abusive Level",
    ])?;
    for r in rows {
        w.write_record([
            format_timestamp(r.start_ms).as_str(),
            &format_timestamp(r.end_ms),
            &r.text,
            r.sentiment.as_str(),
            r.level.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
