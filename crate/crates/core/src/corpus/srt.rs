//! SubRip (`.srt`) parsing and canonical serialization.

use std::fmt::Write as _;
use std::io::Read;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static TAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>|\{[^}]*\}").unwrap());

/// One timed subtitle block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtitleCue {
    pub index: u32,
    pub start_ms: u64,
    pub end_ms: u64,
    pub lines: Vec<String>,
}

impl SubtitleCue {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms.saturating_sub(self.start_ms)
    }

    /// Cue text with lines joined by a single space.
    pub fn text(&self) -> String {
        self.lines.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubtitleDocument {
    pub film_id: String,
    pub cues: Vec<SubtitleCue>,
}

impl SubtitleDocument {
    pub fn new(film_id: impl Into<String>, cues: Vec<SubtitleCue>) -> Self {
        Self {
            film_id: film_id.into(),
            cues,
        }
    }

    /// Largest cue end time, used as the film's dialogue length.
    pub fn length_ms(&self) -> u64 {
        self.cues.iter().map(|c| c.end_ms).max().unwrap_or(0)
    }

    pub fn total_cue_duration_ms(&self) -> u64 {
        self.cues.iter().map(SubtitleCue::duration_ms).sum()
    }

    /// Checks the invariants a document must satisfy to survive a
    /// serialize/parse round trip unchanged.
    pub fn validate(&self) -> Result<()> {
        let mut prev_start = 0;
        for (i, cue) in self.cues.iter().enumerate() {
            if cue.index == 0 {
                return Err(Error::Format(format!("cue {i}: index must be >= 1")));
            }
            if cue.start_ms >= cue.end_ms {
                return Err(Error::Format(format!("cue {i}: start must precede end")));
            }
            if cue.start_ms < prev_start {
                return Err(Error::Format(format!("cue {i}: cues not ordered by start")));
            }
            prev_start = cue.start_ms;
            if cue.lines.is_empty() {
                return Err(Error::Format(format!("cue {i}: no text lines")));
            }
            for line in &cue.lines {
                if line.is_empty()
                    || line.trim() != line
                    || line.contains(['\n', '\r'])
                    || TAG_RE.is_match(line)
                {
                    return Err(Error::Format(format!(
                        "cue {i}: invalid text line {line:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A block the parser could not use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedBlock {
    /// 1-based line number where the block starts.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub skipped: Vec<SkippedBlock>,
    /// True when cues were out of order and had to be sorted.
    pub reordered: bool,
}

impl ParseReport {
    pub fn is_clean(&self) -> bool {
        self.skipped.is_empty() && !self.reordered
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .skipped
            .iter()
            .map(|s| format!("line {}: skipped block ({})", s.line, s.reason))
            .collect();
        if self.reordered {
            out.push("cues were not ordered by start time and have been sorted".to_owned());
        }
        out
    }
}

/// Removes `<...>` and `{...}` formatting tags.
pub fn strip_tags(line: &str) -> String {
    TAG_RE.replace_all(line, "").into_owned()
}

pub fn parse_srt<R: Read>(mut reader: R, film_id: &str) -> Result<(SubtitleDocument, ParseReport)> {
    let mut raw = String::new();
    reader.read_to_string(&mut raw)?;
    parse_srt_str(&raw, film_id)
}

pub fn parse_srt_str(raw: &str, film_id: &str) -> Result<(SubtitleDocument, ParseReport)> {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    let mut report = ParseReport::default();
    let mut cues = Vec::new();

    let mut block: Vec<&str> = Vec::new();
    let mut block_start = 0;
    let lines = raw.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            if !block.is_empty() {
                take_block(&block, block_start, &mut cues, &mut report);
                block.clear();
            }
        } else {
            if block.is_empty() {
                block_start = lineno + 1;
            }
            block.push(line);
        }
    }
    if !block.is_empty() {
        take_block(&block, block_start, &mut cues, &mut report);
    }

    if cues.is_empty() && !raw.trim().is_empty() {
        return Err(Error::Format(format!(
            "no well-formed cues in subtitle input ({} blocks skipped)",
            report.skipped.len()
        )));
    }
    if cues.windows(2).any(|w| w[1].start_ms < w[0].start_ms) {
        cues.sort_by_key(|c: &SubtitleCue| c.start_ms);
        report.reordered = true;
    }
    Ok((SubtitleDocument::new(film_id, cues), report))
}

fn take_block(block: &[&str], line: usize, cues: &mut Vec<SubtitleCue>, report: &mut ParseReport) {
    match parse_block(block) {
        Ok(cue) => cues.push(cue),
        Err(reason) => report.skipped.push(SkippedBlock { line, reason }),
    }
}

fn parse_block(block: &[&str]) -> std::result::Result<SubtitleCue, String> {
    if block.len() < 3 {
        return Err("block needs an index, a time line and text".to_owned());
    }
    let index: u32 = block[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad index line {:?}", block[0].trim()))?;
    if index == 0 {
        return Err("cue index must be >= 1".to_owned());
    }
    let (start_ms, end_ms) = parse_time_line(block[1])?;
    if start_ms >= end_ms {
        return Err(format!("start {start_ms} ms not before end {end_ms} ms"));
    }
    let lines: Vec<String> = block[2..]
        .iter()
        .map(|l| strip_tags(l).trim().to_owned())
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err("cue has no text after tag removal".to_owned());
    }
    Ok(SubtitleCue {
        index,
        start_ms,
        end_ms,
        lines,
    })
}

fn parse_time_line(line: &str) -> std::result::Result<(u64, u64), String> {
    let (start, rest) = line
        .trim()
        .split_once("-->")
        .ok_or_else(|| format!("bad time line {line:?}"))?;
    // Some encoders append positioning after the end time.
    let end = rest.split_whitespace().next().unwrap_or("");
    let start = parse_timestamp(start.trim()).ok_or_else(|| format!("bad start time {start:?}"))?;
    let end = parse_timestamp(end).ok_or_else(|| format!("bad end time {end:?}"))?;
    Ok((start, end))
}

/// Parses `HH:MM:SS,mmm` into milliseconds.
pub fn parse_timestamp(s: &str) -> Option<u64> {
    let (hms, millis) = s.split_once(',')?;
    let mut parts = hms.split(':');
    let (h, m, sec) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || m.len() != 2 || sec.len() != 2 || millis.len() != 3 || h.is_empty()
    {
        return None;
    }
    let digits = |x: &str| x.bytes().all(|b| b.is_ascii_digit());
    if !(digits(h) && digits(m) && digits(sec) && digits(millis)) {
        return None;
    }
    let (h, m, sec, millis): (u64, u64, u64, u64) = (
        h.parse().ok()?,
        m.parse().ok()?,
        sec.parse().ok()?,
        millis.parse().ok()?,
    );
    if m >= 60 || sec >= 60 {
        return None;
    }
    Some(((h * 60 + m) * 60 + sec) * 1000 + millis)
}

pub fn format_timestamp(ms: u64) -> String {
    let (millis, secs) = (ms % 1000, ms / 1000);
    format!(
        "{:02}:{:02}:{:02},{:03}",
        secs / 3600,
        secs / 60 % 60,
        secs % 60,
        millis
    )
}

/// Canonical SRT text for a document. Each cue block ends with a blank line.
pub fn serialize_srt(doc: &SubtitleDocument) -> String {
    let mut out = String::new();
    for cue in &doc.cues {
        let _ = writeln!(out, "{}", cue.index);
        let _ = writeln!(
            out,
            "{} --> {}",
            format_timestamp(cue.start_ms),
            format_timestamp(cue.end_ms)
        );
        for line in &cue.lines {
            out.push_str(line);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEPARTED: &str =
        "1\n00:27:32,684 --> 00:27:34,777\nYeah, that's right, fancy.\nAre you a statie?\n";

    #[test]
    fn parses_departed_cue() {
        let (doc, report) = parse_srt_str(DEPARTED, "departed").unwrap();
        assert!(report.is_clean());
        assert_eq!(doc.cues.len(), 1);
        let cue = &doc.cues[0];
        assert_eq!(cue.index, 1);
        assert_eq!(cue.start_ms, 1_652_684);
        assert_eq!(cue.end_ms, 1_654_777);
        assert_eq!(
            cue.lines,
            vec!["Yeah, that's right, fancy.", "Are you a statie?"]
        );
    }

    #[test]
    fn serializes_departed_cue() {
        let (doc, _) = parse_srt_str(DEPARTED, "departed").unwrap();
        let text = serialize_srt(&doc);
        assert!(text.contains("00:27:32,684 --> 00:27:34,777\n"));
        assert_eq!(text, format!("{DEPARTED}\n"));
    }

    #[test]
    fn empty_input_gives_empty_document() {
        let (doc, report) = parse_srt_str("", "x").unwrap();
        assert!(doc.cues.is_empty());
        assert!(report.skipped.is_empty());
        assert_eq!(serialize_srt(&doc), "");
    }

    #[test]
    fn strips_tags_and_round_trips() {
        let raw = "1\r\n00:00:01,000 --> 00:00:02,500\r\nHello there\r\n\r\n2\r\n00:00:03,000 --> 00:00:04,000\r\n<i>hi</i>\r\n";
        let (doc, _) = parse_srt_str(raw, "f").unwrap();
        assert_eq!(doc.cues[1].lines, vec!["hi"]);
        let (again, report) = parse_srt_str(&serialize_srt(&doc), "f").unwrap();
        assert!(report.is_clean());
        assert_eq!(again, doc);
    }

    #[test]
    fn bom_and_brace_tags() {
        let raw = "\u{feff}1\n00:00:01,000 --> 00:00:02,000\n{\\an8}Top line\n";
        let (doc, _) = parse_srt_str(raw, "f").unwrap();
        assert_eq!(doc.cues[0].lines, vec!["Top line"]);
    }

    #[test]
    fn malformed_blocks_are_skipped_and_counted() {
        let raw = "1\n00:00:01,000 --> 00:00:02,000\nok\n\nx\n00:00:03,000 --> 00:00:04,000\nbad index\n\n3\n00:00:05.000 --> 00:00:06,000\nbad sep\n\n4\n00:00:09,000 --> 00:00:08,000\nbackwards\n";
        let (doc, report) = parse_srt_str(raw, "f").unwrap();
        assert_eq!(doc.cues.len(), 1);
        assert_eq!(report.skipped.len(), 3);
        assert_eq!(report.skipped[0].line, 5);
    }

    #[test]
    fn all_malformed_is_format_error() {
        let err = parse_srt_str("garbage\nmore garbage\n", "f").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn out_of_order_cues_are_sorted_stably() {
        let raw = "2\n00:00:05,000 --> 00:00:06,000\nsecond\n\n1\n00:00:01,000 --> 00:00:02,000\nfirst\n\n3\n00:00:01,000 --> 00:00:03,000\nthird\n";
        let (doc, report) = parse_srt_str(raw, "f").unwrap();
        assert!(report.reordered);
        let idx: Vec<u32> = doc.cues.iter().map(|c| c.index).collect();
        assert_eq!(idx, vec![1, 3, 2]);
    }

    #[test]
    fn overlapping_cues_are_allowed() {
        let raw = "1\n00:00:01,000 --> 00:00:05,000\na\n\n2\n00:00:02,000 --> 00:00:03,000\nb\n";
        let (doc, report) = parse_srt_str(raw, "f").unwrap();
        assert!(report.is_clean());
        assert_eq!(doc.cues.len(), 2);
    }

    #[test]
    fn timestamp_edge_cases() {
        assert_eq!(parse_timestamp("00:00:00,000"), Some(0));
        assert_eq!(parse_timestamp("01:32:36,031"), Some(5_556_031));
        assert_eq!(parse_timestamp("00:60:00,000"), None);
        assert_eq!(parse_timestamp("00:00:00,00"), None);
        assert_eq!(parse_timestamp("00:00:00.000"), None);
        assert_eq!(format_timestamp(5_556_031), "01:32:36,031");
    }

    #[test]
    fn invalid_utf8_is_io_error() {
        let bytes: &[u8] = &[0xff, 0xfe, 0x00];
        assert!(matches!(parse_srt(bytes, "f"), Err(Error::Stream(_))));
    }
}
