//! Bigram and trigram frequency tables and era-level rankings.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::TokenSequence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramTable {
    n: usize,
    counts: BTreeMap<Vec<String>, u64>,
    total: u64,
}

fn check_order(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "n-gram order must be 2 or 3, got {n}"
        )))
    }
}

impl NgramTable {
    pub fn new(n: usize) -> Result<Self> {
        check_order(n)?;
        Ok(Self {
            n,
            counts: BTreeMap::new(),
            total: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &BTreeMap<Vec<String>, u64> {
        &self.counts
    }

    pub fn count(&self, gram: &[&str]) -> u64 {
        let key: Vec<String> = gram.iter().map(|s| (*s).to_owned()).collect();
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// Adds the sliding windows of one utterance. Windows never span two calls.
    pub fn add_sequence(&mut self, tokens: &[String]) {
        for window in tokens.windows(self.n) {
            *self.counts.entry(window.to_vec()).or_default() += 1;
            self.total += 1;
        }
    }

    pub fn merge(&mut self, other: &NgramTable) -> Result<()> {
        if other.n != self.n {
            return Err(Error::InvalidArgument(format!(
                "cannot merge {}-gram table into {}-gram table",
                other.n, self.n
            )));
        }
        for (gram, count) in &other.counts {
            *self.counts.entry(gram.clone()).or_default() += count;
        }
        self.total += other.total;
        Ok(())
    }
}

pub fn extract_ngrams(tokens: &TokenSequence, n: usize) -> Result<NgramTable> {
    let mut table = NgramTable::new(n)?;
    table.add_sequence(&tokens.tokens);
    Ok(table)
}

/// One table for a whole film, built cue by cue.
pub fn document_ngrams<'a, I>(cues: I, n: usize) -> Result<NgramTable>
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    let mut table = NgramTable::new(n)?;
    for cue in cues {
        table.add_sequence(&cue.tokens);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedNgram {
    pub ngram: String,
    pub count: u64,
}

/// Highest counts first; equal counts ordered by the space-joined n-gram.
pub fn top_k(table: &NgramTable, k: usize) -> Result<Vec<RankedNgram>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut all: Vec<RankedNgram> = table
        .counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(gram, &count)| RankedNgram {
            ngram: gram.join(" "),
            count,
        })
        .collect();
    all.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.ngram.cmp(&b.ngram)));
    all.truncate(k);
    Ok(all)
}

/// An inclusive year range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Era {
    pub start: i32,
    pub end: i32,
}

impl Era {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidArgument(format!("empty era {start}-{end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    /// The four twenty-year panels covering 1950-2024.
    pub fn panels() -> [Era; 4] {
        [
            Era {
                start: 1950,
                end: 1969,
            },
            Era {
                start: 1970,
                end: 1989,
            },
            Era {
                start: 1990,
                end: 2009,
            },
            Era {
                start: 2010,
                end: 2024,
            },
        ]
    }
}

impl fmt::Display for Era {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Merges the per-film tables of every film released within `era`, then ranks.
pub fn era_tables<'a, I>(films: I, era: Era, n: usize, k: usize) -> Result<Vec<RankedNgram>>
where
    I: IntoIterator<Item = (i32, &'a NgramTable)>,
{
    let mut merged = NgramTable::new(n)?;
    let mut selected = 0usize;
    for (year, table) in films {
        if era.contains(year) && table.n == n {
            merged.merge(table)?;
            selected += 1;
        }
    }
    if selected == 0 {
        return Err(Error::EmptySelection(format!("no films in era {era}")));
    }
    top_k(&merged, k)
}

pub fn write_ranked_csv<W: Write>(rows: &[RankedNgram], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "ngram", "count"])?;
    for (i, row) in rows.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            row.ngram.clone(),
            row.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(words: &[&str]) -> TokenSequence {
        words.iter().copied().collect()
    }

    #[test]
    fn bigram_examples() {
        let t = extract_ngrams(&seq(&["go", "go", "go"]), 2).unwrap();
        assert_eq!(t.count(&["go", "go"]), 2);
        assert_eq!(t.total(), 2);
        assert_eq!(t.len(), 1);

        let t = extract_ngrams(&seq(&["hi"]), 2).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.total(), 0);

        let t = extract_ngrams(&seq(&["come", "let", "go"]), 3).unwrap();
        assert_eq!(t.count(&["come", "let", "go"]), 1);
        assert_eq!(t.total(), 1);
    }

    #[test]
    fn order_must_be_two_or_three() {
        assert!(extract_ngrams(&seq(&["a"]), 1).is_err());
        assert!(extract_ngrams(&seq(&["a"]), 4).is_err());
    }

    #[test]
    fn cues_do_not_bridge() {
        let cues = [seq(&["go", "go"]), seq(&["go"])];
        let t = document_ngrams(&cues, 3).unwrap();
        assert_eq!(t.total(), 0);
    }

    #[test]
    fn top_k_ties_are_lexicographic() {
        let mut t = NgramTable::new(2).unwrap();
        for _ in 0..3 {
            t.add_sequence(&["b".into(), "c".into()]);
            t.add_sequence(&["a".into(), "b".into()]);
        }
        t.add_sequence(&["c".into(), "d".into()]);
        let top = top_k(&t, 2).unwrap();
        assert_eq!(
            top,
            vec![
                RankedNgram {
                    ngram: "a b".into(),
                    count: 3
                },
                RankedNgram {
                    ngram: "b c".into(),
                    count: 3
                }
            ]
        );
        assert!(top_k(&NgramTable::new(2).unwrap(), 10).unwrap().is_empty());
        assert!(top_k(&t, 0).is_err());
    }

    #[test]
    fn era_selection() {
        let a = extract_ngrams(&seq(&["yes", "sir"]), 2).unwrap();
        let b = extract_ngrams(&seq(&["yes", "sir", "yes"]), 2).unwrap();
        let top = era_tables([(1955, &a), (1961, &b)], Era::panels()[0], 2, 10).unwrap();
        assert_eq!(
            top[0],
            RankedNgram {
                ngram: "yes sir".into(),
                count: 2
            }
        );
        assert_eq!(
            top[1],
            RankedNgram {
                ngram: "sir yes".into(),
                count: 1
            }
        );
        let err = era_tables([(1955, &a)], Era::panels()[3], 2, 10).unwrap_err();
        assert!(matches!(err, Error::EmptySelection(_)));
        assert_eq!(
            Era::panels().map(|e| e.to_string()),
            ["1950-1969", "1970-1989", "1990-2009", "2010-2024"]
        );
    }

    #[test]
    fn csv_export() {
        let rows = vec![RankedNgram {
            ngram: "let go".into(),
            count: 4,
        }];
        let mut out = Vec::new();
        write_ranked_csv(&rows, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "rank,ngram,count\n1,let go,4\n"
        );
    }

    fn cue_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
        proptest::collection::vec(proptest::collection::vec("[a-c]", 0..8), 0..6)
    }

    proptest! {
        #[test]
        fn bigram_total_matches_cue_lengths(cues in cue_strategy()) {
            let seqs: Vec<TokenSequence> = cues.into_iter().map(TokenSequence::from).collect();
            let t = document_ngrams(&seqs, 2).unwrap();
            let expected: u64 = seqs.iter().map(|s| s.len().saturating_sub(1) as u64).sum();
            prop_assert_eq!(t.total(), expected);
            prop_assert_eq!(t.counts().values().sum::<u64>(), t.total());
        }

        #[test]
        fn merge_is_additive_and_commutative(a in cue_strategy(), b in cue_strategy()) {
            let sa: Vec<TokenSequence> = a.into_iter().map(TokenSequence::from).collect();
            let sb: Vec<TokenSequence> = b.into_iter().map(TokenSequence::from).collect();
            let ta = document_ngrams(&sa, 3).unwrap();
            let tb = document_ngrams(&sb, 3).unwrap();
            let mut ab = ta.clone();
            ab.merge(&tb).unwrap();
            let mut ba = tb.clone();
            ba.merge(&ta).unwrap();
            prop_assert_eq!(&ab, &ba);
            let all = document_ngrams(sa.iter().chain(sb.iter()), 3).unwrap();
            prop_assert_eq!(ab, all);
        }

        #[test]
        fn top_k_is_prefix_of_full_order(cues in cue_strategy(), k in 1usize..6) {
            let seqs: Vec<TokenSequence> = cues.into_iter().map(TokenSequence::from).collect();
            let t = document_ngrams(&seqs, 2).unwrap();
            let full = top_k(&t, usize::MAX).unwrap();
            let head = top_k(&t, k).unwrap();
            prop_assert_eq!(&full[..head.len()], &head[..]);
        }
    }
}
