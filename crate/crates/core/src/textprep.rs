//! Dialogue normalization, tokenization and stopword filtering.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S*").unwrap());
static HASHTAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\w+").unwrap());

const NGRAM_PROFILE: &str = include_str!("../assets/stopwords_ngram.txt");
const CLASSIFY_PROFILE: &str = include_str!("../assets/stopwords_classify.txt");

fn is_symbol(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::OtherSymbol | GeneralCategory::ModifierSymbol
    ) || matches!(c, '\u{200d}' | '\u{20e3}' | '\u{fe0e}' | '\u{fe0f}')
}

fn strip_once(text: &str) -> String {
    let text = URL_RE.replace_all(text, " ");
    let text = HASHTAG_RE.replace_all(&text, " ");
    text.chars()
        .map(|c| if is_symbol(c) { ' ' } else { c })
        .collect()
}

/// Lowercases and removes URLs, hashtags and emoji/symbol codepoints, then
/// collapses whitespace. Idempotent.
pub fn clean_text(raw: &str) -> String {
    let mut text = raw.to_lowercase();
    // Removing one pattern can expose another (`#😀fun` becomes `#fun`),
    // so repeat until nothing changes.
    loop {
        let next = strip_once(&text);
        if next == text {
            break;
        }
        text = next;
    }
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }
}

impl From<Vec<String>> for TokenSequence {
    fn from(tokens: Vec<String>) -> Self {
        Self { tokens }
    }
}

impl<'a> FromIterator<&'a str> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        Self {
            tokens: iter.into_iter().map(str::to_owned).collect(),
        }
    }
}

/// Splits on anything that is not alphanumeric. An apostrophe between two
/// alphanumeric characters stays inside the token.
pub fn tokenize(clean: &str) -> TokenSequence {
    let chars: Vec<char> = clean.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if matches!(c, '\'' | '\u{2019}')
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence { tokens }
}

/// `tokenize(clean_text(raw))`.
pub fn prepare(raw: &str) -> TokenSequence {
    tokenize(&clean_text(raw))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopwordSet {
    pub name: String,
    pub words: BTreeSet<String>,
}

impl StopwordSet {
    pub fn new<I, S>(name: impl Into<String>, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            name: name.into(),
            words: words
                .into_iter()
                .map(|w| w.as_ref().to_lowercase())
                .collect(),
        }
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self::new(name, std::iter::empty::<&str>())
    }

    /// Parses one token per line; blank lines and `#` comments are ignored.
    pub fn parse(name: impl Into<String>, text: &str) -> Self {
        Self::new(
            name,
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".to_owned());
        Ok(Self::parse(name, &text))
    }

    /// Function words only; keeps interjections and pronoun-free phrases intact.
    pub fn ngram() -> Self {
        Self::parse("ngram", NGRAM_PROFILE)
    }

    /// Fuller list that keeps negations.
    pub fn classify() -> Self {
        Self::parse("classify", CLASSIFY_PROFILE)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn remove_stopwords(tokens: &TokenSequence, profile: &StopwordSet) -> TokenSequence {
    TokenSequence {
        tokens: tokens
            .tokens
            .iter()
            .filter(|t| !profile.contains(t))
            .cloned()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> TokenSequence {
        words.iter().copied().collect()
    }

    #[test]
    fn clean_examples() {
        assert_eq!(
            clean_text("♪ The enemy of one the enemy of all is"),
            "the enemy of one the enemy of all is"
        );
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("Good night #fun 😀 http://x.y"), "good night");
        assert_eq!(clean_text("♫ la la ♪"), "la la");
        assert_eq!(clean_text("see www.example.com now"), "see now");
        assert_eq!(clean_text("thumbs 👍🏽 up ❤️"), "thumbs up");
    }

    #[test]
    fn clean_exposed_patterns() {
        // The emoji becomes a separator, so `fun` is no longer a hashtag.
        assert_eq!(clean_text("a #😀fun b"), "a # fun b");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("let go"), toks(&["let", "go"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("that's my boy!"), toks(&["that's", "my", "boy"]));
        assert_eq!(tokenize("'quoted' -- don’t"), toks(&["quoted", "don't"]));
        assert_eq!(
            tokenize("...because it's real"),
            toks(&["because", "it's", "real"])
        );
        assert_eq!(
            tokenize("Ring-a-ring o'Roses"),
            toks(&["ring", "a", "ring", "o'roses"])
        );
    }

    #[test]
    fn stopword_profiles() {
        let ngram = StopwordSet::ngram();
        let classify = StopwordSet::classify();
        assert_eq!(
            remove_stopwords(&toks(&["the", "enemy", "of", "all"]), &ngram),
            toks(&["enemy"])
        );
        assert_eq!(
            remove_stopwords(&toks(&["the", "enemy", "of", "all"]), &classify),
            toks(&["enemy"])
        );
        assert_eq!(
            remove_stopwords(&toks(&["yes", "sir"]), &ngram),
            toks(&["yes", "sir"])
        );
        for kept in ["go", "let", "good", "night", "oh", "hey", "come"] {
            assert!(!ngram.contains(kept), "{kept}");
        }
        for neg in ["not", "no", "never", "nor", "don't"] {
            assert!(!classify.contains(neg), "{neg}");
        }
        let any = toks(&["the", "x"]);
        assert_eq!(remove_stopwords(&any, &StopwordSet::empty("none")), any);
    }

    #[test]
    fn stopword_file_format() {
        let set = StopwordSet::parse("t", "# comment\nThe\n\n  of \n");
        assert_eq!(set.len(), 2);
        assert!(set.contains("the"));
        assert!(set.contains("of"));
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(s in "\\PC{0,40}") {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once);
        }

        #[test]
        fn clean_is_idempotent_on_tricky_mix(parts in proptest::collection::vec(
            prop_oneof![Just("#"), Just("www."), Just("http://"), Just("😀"), Just("a"), Just(" "), Just("♪"), Just("İ"), Just("Σ")], 0..16)) {
            let s: String = parts.concat();
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once);
        }

        #[test]
        fn tokens_are_nonempty_without_whitespace(s in "\\PC{0,60}") {
            for t in tokenize(&clean_text(&s)).tokens {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }

        #[test]
        fn stopword_removal_is_subsequence(words in proptest::collection::vec("[a-z]{1,4}", 0..30)) {
            let input: TokenSequence = words.iter().map(String::as_str).collect();
            let out = remove_stopwords(&input, &StopwordSet::classify());
            let mut it = input.tokens.iter();
            for t in &out.tokens {
                prop_assert!(it.any(|x| x == t));
            }
        }
    }
}
