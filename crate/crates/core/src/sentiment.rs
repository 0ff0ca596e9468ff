//! Weighted polarity over the ten sentiment labels.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LABELS: usize = 10;
pub const MIN_WEIGHT: f64 = -4.0;
pub const MAX_WEIGHT: f64 = 3.0;

const DEFAULT_WEIGHTS: &str = include_str!("../assets/weights_default.txt");

/// The ten labels; declaration order is the vector order used everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentLabel {
    Optimistic,
    Thankful,
    Empathetic,
    Pessimistic,
    Anxious,
    Sad,
    Annoyed,
    Denial,
    OfficialReport,
    Joking,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; NUM_LABELS] = [
        SentimentLabel::Optimistic,
        SentimentLabel::Thankful,
        SentimentLabel::Empathetic,
        SentimentLabel::Pessimistic,
        SentimentLabel::Anxious,
        SentimentLabel::Sad,
        SentimentLabel::Annoyed,
        SentimentLabel::Denial,
        SentimentLabel::OfficialReport,
        SentimentLabel::Joking,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Optimistic => "optimistic",
            SentimentLabel::Thankful => "thankful",
            SentimentLabel::Empathetic => "empathetic",
            SentimentLabel::Pessimistic => "pessimistic",
            SentimentLabel::Anxious => "anxious",
            SentimentLabel::Sad => "sad",
            SentimentLabel::Annoyed => "annoyed",
            SentimentLabel::Denial => "denial",
            SentimentLabel::OfficialReport => "official_report",
            SentimentLabel::Joking => "joking",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|l| l.as_str().to_owned()).collect()
    }

    /// Resolves canonical names and the alternative names used by annotation
    /// schemes and figure legends (`gratitude`, `Joking(Humour)`, ...).
    pub fn from_alias(name: &str) -> Option<SentimentLabel> {
        let base = name.split('(').next().unwrap_or(name);
        let key: String = base
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        use SentimentLabel::*;
        Some(match key.as_str() {
            "optimistic" | "optimism" => Optimistic,
            "thankful" | "gratitude" | "grateful" => Thankful,
            "empathetic" | "compassion" | "empathy" | "compassionate" => Empathetic,
            "pessimistic" | "pessimism" => Pessimistic,
            "anxious" | "anxiety" => Anxious,
            "sad" | "sadness" => Sad,
            "annoyed" | "anger" | "angry" => Annoyed,
            "denial" => Denial,
            "official_report" | "official_reports" | "official" => OfficialReport,
            "joking" | "jokes" | "joke" | "humour" | "humor" => Joking,
            _ => return None,
        })
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_alias(s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sentiment label `{s}`")))
    }
}

/// Ten per-label values in `[0, 1]`: probabilities or 0/1 indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelValues(pub [f64; NUM_LABELS]);

impl LabelValues {
    pub fn new(values: [f64; NUM_LABELS]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "label value {v} outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_LABELS] = values.try_into().map_err(|_| Error::DimensionMismatch {
            expected: NUM_LABELS,
            actual: values.len(),
        })?;
        Self::new(arr)
    }

    pub fn from_flags(flags: [bool; NUM_LABELS]) -> Self {
        Self(flags.map(|f| if f { 1.0 } else { 0.0 }))
    }

    /// Labels at or above `threshold`.
    pub fn threshold(&self, threshold: f64) -> [bool; NUM_LABELS] {
        self.0.map(|v| v >= threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentWeights {
    pub name: String,
    pub values: [f64; NUM_LABELS],
}

impl SentimentWeights {
    pub fn new(name: impl Into<String>, values: [f64; NUM_LABELS]) -> Result<Self> {
        for (label, w) in SentimentLabel::ALL.iter().zip(values) {
            if !(MIN_WEIGHT..=MAX_WEIGHT).contains(&w) {
                return Err(Error::InvalidArgument(format!(
                    "weight {w} for `{label}` outside [{MIN_WEIGHT}, {MAX_WEIGHT}]"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            values,
        })
    }

    pub fn is_usable(&self) -> bool {
        self.values.iter().any(|w| *w != 0.0)
    }

    pub fn get(&self, label: SentimentLabel) -> f64 {
        self.values[label.index()]
    }

    /// `label=value` lines, one per label, `#` comments allowed.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut values = [None; NUM_LABELS];
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("weights: expected `label=value`, found {line:?}"))
            })?;
            let label: SentimentLabel = key.parse()?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("weights: bad value in {line:?}")))?;
            if values[label.index()].replace(value).is_some() {
                return Err(Error::Format(format!("weights: `{label}` given twice")));
            }
        }
        let mut out = [0.0; NUM_LABELS];
        for (slot, (label, v)) in out.iter_mut().zip(SentimentLabel::ALL.iter().zip(values)) {
            *slot = v.ok_or_else(|| Error::Format(format!("weights: missing `{label}`")))?;
        }
        let weights = Self::new(name, out)?;
        if !weights.is_usable() {
            return Err(Error::InvalidArgument(format!(
                "weights `{name}` are all zero"
            )));
        }
        Ok(weights)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "weights".into());
        Self::parse(&name, &text)
    }

    /// Hand-assigned profile: positive labels positive, negative labels negative.
    pub fn bundled() -> Self {
        Self::parse("default-hand-v1", DEFAULT_WEIGHTS).expect("bundled weights are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub fn of(score: f64) -> Self {
        if score > 0.0 {
            Polarity::Positive
        } else if score < 0.0 {
            Polarity::Negative
        } else {
            Polarity::Neutral
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "Positive",
            Polarity::Negative => "Negative",
            Polarity::Neutral => "Neutral",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarityResult {
    pub score: f64,
    pub sign: Polarity,
}

pub fn weighted_score(values: &LabelValues, weights: &SentimentWeights) -> PolarityResult {
    let score: f64 = values
        .0
        .iter()
        .zip(&weights.values)
        .map(|(v, w)| v * w)
        .sum();
    PolarityResult {
        score,
        sign: Polarity::of(score),
    }
}

/// Mean of the per-cue weighted scores.
pub fn film_score(cues: &[LabelValues], weights: &SentimentWeights) -> Result<f64> {
    if cues.is_empty() {
        return Err(Error::NoScoredContent("film has no scored cues".into()));
    }
    let sum: f64 = cues.iter().map(|v| weighted_score(v, weights).score).sum();
    Ok(sum / cues.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: f64,
    /// Population standard deviation (divisor N).
    pub std: f64,
    pub n: usize,
}

pub fn group_stats(values: &[f64]) -> Option<GroupStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(GroupStats {
        mean,
        std: var.sqrt(),
        n: values.len(),
    })
}

/// Mean and population standard deviation per group. Empty groups are
/// dropped and named in the returned warnings.
pub fn decade_average<K: Ord + Clone + fmt::Debug>(
    groups: &BTreeMap<K, Vec<f64>>,
) -> (BTreeMap<K, GroupStats>, Vec<String>) {
    let mut out = BTreeMap::new();
    let mut warnings = Vec::new();
    for (key, values) in groups {
        match group_stats(values) {
            Some(stats) => {
                out.insert(key.clone(), stats);
            }
            None => warnings.push(format!("group {key:?} is empty and was omitted")),
        }
    }
    (out, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn weights(pairs: &[(SentimentLabel, f64)]) -> SentimentWeights {
        let mut v = [0.0; NUM_LABELS];
        for (l, w) in pairs {
            v[l.index()] = *w;
        }
        SentimentWeights::new("t", v).unwrap()
    }

    fn values(pairs: &[(SentimentLabel, f64)]) -> LabelValues {
        let mut v = [0.0; NUM_LABELS];
        for (l, x) in pairs {
            v[l.index()] = *x;
        }
        LabelValues::new(v).unwrap()
    }

    #[test]
    fn scoring_examples() {
        let zero = SentimentWeights::new("z", [0.0; NUM_LABELS]).unwrap();
        let r = weighted_score(&LabelValues([0.7; NUM_LABELS]), &zero);
        assert_eq!((r.score, r.sign), (0.0, Polarity::Neutral));

        let w = weights(&[(SentimentLabel::Joking, 2.0), (SentimentLabel::Sad, -3.0)]);
        let r = weighted_score(
            &values(&[(SentimentLabel::Joking, 1.0), (SentimentLabel::Sad, 1.0)]),
            &w,
        );
        assert_eq!((r.score, r.sign), (-1.0, Polarity::Negative));

        let r = weighted_score(
            &LabelValues([0.0; NUM_LABELS]),
            &SentimentWeights::bundled(),
        );
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn film_score_examples() {
        let w = weights(&[
            (SentimentLabel::Optimistic, 1.0),
            (SentimentLabel::Sad, -1.0),
        ]);
        let a = values(&[(SentimentLabel::Optimistic, 0.2)]);
        let b = values(&[(SentimentLabel::Sad, 0.4)]);
        assert_eq!(film_score(&[a], &w).unwrap(), weighted_score(&a, &w).score);
        assert!((film_score(&[a, b], &w).unwrap() - (-0.1)).abs() < 1e-15);
        assert!(matches!(
            film_score(&[], &w),
            Err(Error::NoScoredContent(_))
        ));
    }

    #[test]
    fn group_statistics() {
        let s = group_stats(&[0.1, 0.3]).unwrap();
        assert!((s.mean - 0.2).abs() < 1e-15);
        assert!((s.std - 0.1).abs() < 1e-15);
        assert_eq!(group_stats(&[0.4]).unwrap().std, 0.0);
        let mut groups = BTreeMap::new();
        groups.insert((1950, "oscar"), vec![0.1, 0.3]);
        groups.insert((1950, "blockbuster"), vec![]);
        let (stats, warnings) = decade_average(&groups);
        assert_eq!(stats.len(), 1);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn weight_file_validation() {
        let w = SentimentWeights::bundled();
        assert!(w.is_usable());
        assert!(w
            .values
            .iter()
            .all(|v| (MIN_WEIGHT..=MAX_WEIGHT).contains(v)));
        assert_eq!(w.get(SentimentLabel::OfficialReport), 0.0);
        for l in [
            SentimentLabel::Optimistic,
            SentimentLabel::Thankful,
            SentimentLabel::Empathetic,
            SentimentLabel::Joking,
        ] {
            assert!(w.get(l) > 0.0);
        }
        let full: String = SentimentLabel::ALL
            .iter()
            .map(|l| format!("{l}=1\n"))
            .collect();
        assert!(SentimentWeights::parse("x", &full).is_ok());
        assert!(SentimentWeights::parse("x", &full.replace("sad=1", "sad=-5")).is_err());
        assert!(SentimentWeights::parse("x", &full.replace("sad=1", "sad=3.5")).is_err());
        assert!(SentimentWeights::parse("x", &full.replace("sad=1", "glum=1")).is_err());
        assert!(SentimentWeights::parse("x", &full.replace("sad=1\n", "")).is_err());
        assert!(SentimentWeights::parse("x", &format!("{full}sad=2\n")).is_err());
    }

    #[test]
    fn aliases() {
        assert_eq!(
            SentimentLabel::from_alias("Joking(Humour)"),
            Some(SentimentLabel::Joking)
        );
        assert_eq!(
            SentimentLabel::from_alias("Official report"),
            Some(SentimentLabel::OfficialReport)
        );
        assert_eq!(
            SentimentLabel::from_alias("gratitude"),
            Some(SentimentLabel::Thankful)
        );
        assert_eq!(
            SentimentLabel::from_alias("anger"),
            Some(SentimentLabel::Annoyed)
        );
        assert_eq!(SentimentLabel::from_alias("surprise"), None);
        for l in SentimentLabel::ALL {
            assert_eq!(SentimentLabel::from_alias(l.as_str()), Some(l));
        }
    }

    #[test]
    fn values_are_validated() {
        assert!(LabelValues::new([1.5; NUM_LABELS]).is_err());
        assert!(LabelValues::from_slice(&[0.5; 9]).is_err());
    }

    fn unit() -> impl Strategy<Value = [f64; NUM_LABELS]> {
        proptest::array::uniform10(0.0f64..=1.0)
    }

    fn weight_vec() -> impl Strategy<Value = [f64; NUM_LABELS]> {
        proptest::array::uniform10(MIN_WEIGHT..=MAX_WEIGHT)
    }

    proptest! {
        #[test]
        fn score_is_linear_and_bounded(v in unit(), u in unit(), w in weight_vec(), alpha in 0.0f64..1.0) {
            let w = SentimentWeights::new("p", w).unwrap();
            let s = weighted_score(&LabelValues(v), &w).score;
            prop_assert!((-40.0..=30.0).contains(&s));
            let scaled = weighted_score(&LabelValues(v.map(|x| x * alpha)), &w).score;
            prop_assert!((scaled - alpha * s).abs() < 1e-9);
            let half_sum: [f64; NUM_LABELS] = std::array::from_fn(|i| v[i] / 2.0 + u[i] / 2.0);
            let lhs = weighted_score(&LabelValues(half_sum), &w).score;
            let rhs = weighted_score(&LabelValues(v.map(|x| x / 2.0)), &w).score
                + weighted_score(&LabelValues(u.map(|x| x / 2.0)), &w).score;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn film_score_order_and_scaling(cues in proptest::collection::vec(unit(), 1..8), w in weight_vec(), k in 0.1f64..1.0) {
            let w0 = SentimentWeights::new("p", w).unwrap();
            let vals: Vec<LabelValues> = cues.iter().map(|c| LabelValues(*c)).collect();
            let a = film_score(&vals, &w0).unwrap();
            let mut rev = vals.clone();
            rev.reverse();
            prop_assert!((film_score(&rev, &w0).unwrap() - a).abs() < 1e-12);
            let w1 = SentimentWeights::new("p", w.map(|x| x * k)).unwrap();
            prop_assert!((film_score(&vals, &w1).unwrap() - k * a).abs() < 1e-9);
        }
    }
}
