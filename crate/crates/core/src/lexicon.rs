//! Dictionary lookup of abusive words.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{SubtitleCue, SubtitleDocument};
use crate::error::{Error, Result};
use crate::textprep::TokenSequence;

const DEFAULT_LEXICON: &str = include_str!("../assets/lexicon_default.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbuseLexicon {
    pub name: String,
    pub version: String,
    unigrams: HashMap<String, Option<String>>,
    /// first token -> second token -> category
    bigrams: HashMap<String, HashMap<String, Option<String>>>,
}

impl AbuseLexicon {
    /// Builds a lexicon from terms; a term with one space is a bigram.
    pub fn from_terms<I, S>(name: &str, version: &str, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = Self {
            name: name.to_owned(),
            version: version.to_owned(),
            unigrams: HashMap::new(),
            bigrams: HashMap::new(),
        };
        for term in terms {
            lex.insert(term.as_ref(), None)?;
        }
        lex.ensure_non_empty()?;
        Ok(lex)
    }

    pub fn insert(&mut self, term: &str, category: Option<String>) -> Result<()> {
        let term = term.trim().to_lowercase();
        let parts: Vec<&str> = term.split_whitespace().collect();
        match parts.as_slice() {
            [w] => {
                self.unigrams.insert((*w).to_owned(), category);
            }
            [a, b] => {
                self.bigrams
                    .entry((*a).to_owned())
                    .or_default()
                    .insert((*b).to_owned(), category);
            }
            _ => {
                return Err(Error::Format(format!(
                    "lexicon term {term:?} must be one or two tokens"
                )))
            }
        }
        Ok(())
    }

    fn ensure_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "lexicon `{}` is empty",
                self.name
            )));
        }
        Ok(())
    }

    /// Parses the lexicon file format: a `version=` header, `#` comments, one
    /// term per line with an optional tab-separated category.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut version = None;
        let mut lex = Self {
            name: name.to_owned(),
            version: String::new(),
            unigrams: HashMap::new(),
            bigrams: HashMap::new(),
        };
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            if version.is_none() {
                let v = line.strip_prefix("version=").ok_or_else(|| {
                    Error::Format(format!(
                        "lexicon `{name}`: first entry must be `version=<string>`"
                    ))
                })?;
                version = Some(v.trim().to_owned());
                continue;
            }
            let (term, category) = match line.split_once('\t') {
                Some((t, c)) => (t, Some(c.trim().to_owned()).filter(|c| !c.is_empty())),
                None => (line, None),
            };
            lex.insert(term, category)?;
        }
        lex.version = version
            .ok_or_else(|| Error::Format(format!("lexicon `{name}`: missing version header")))?;
        lex.ensure_non_empty()?;
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "lexicon".into());
        Self::parse(&name, &text)
    }

    /// The small bundled list used by tests and fixtures.
    pub fn bundled() -> Self {
        Self::parse("default", DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.unigrams.len() + self.bigrams.values().map(HashMap::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains_unigram(&self, w: &str) -> bool {
        self.unigrams.contains_key(w)
    }

    pub fn contains_bigram(&self, a: &str, b: &str) -> bool {
        self.bigrams.get(a).is_some_and(|m| m.contains_key(b))
    }

    pub fn category(&self, term: &str) -> Option<&str> {
        match term.split_once(' ') {
            None => self.unigrams.get(term)?.as_deref(),
            Some((a, b)) => self.bigrams.get(a)?.get(b)?.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AbuseCount {
    pub abusive: u64,
    pub total: u64,
}

impl std::ops::AddAssign for AbuseCount {
    fn add_assign(&mut self, rhs: Self) {
        self.abusive += rhs.abusive;
        self.total += rhs.total;
    }
}

/// Counts lexicon hits in a token sequence.
///
/// Each token is matched at most once, either as a unigram or as one half of
/// a bigram. Among the non-overlapping ways to match, the one with the most
/// matches is taken, so adding a term to the lexicon never lowers a count.
pub fn count_abusive(tokens: &TokenSequence, lexicon: &AbuseLexicon) -> Result<AbuseCount> {
    lexicon.ensure_non_empty()?;
    let t = &tokens.tokens;
    let is_bigram = |i: usize| i + 1 < t.len() && lexicon.contains_bigram(&t[i], &t[i + 1]);
    // best[i]: most matches achievable in t[i..]
    let mut best = vec![0u64; t.len() + 2];
    for i in (0..t.len()).rev() {
        let single = best[i + 1] + u64::from(lexicon.contains_unigram(&t[i]));
        let pair = if is_bigram(i) { 1 + best[i + 2] } else { 0 };
        best[i] = single.max(pair);
    }
    Ok(AbuseCount {
        abusive: best[0],
        total: t.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AbusiveTime {
    pub abusive_ms: u64,
    /// End of the last cue.
    pub total_ms: u64,
}

/// Summed duration of the cues the predicate flags.
pub fn abusive_time<F>(doc: &SubtitleDocument, mut flagged: F) -> AbusiveTime
where
    F: FnMut(&SubtitleCue) -> bool,
{
    AbusiveTime {
        abusive_ms: doc
            .cues
            .iter()
            .filter(|c| flagged(c))
            .map(SubtitleCue::duration_ms)
            .sum(),
        total_ms: doc.length_ms(),
    }
}
