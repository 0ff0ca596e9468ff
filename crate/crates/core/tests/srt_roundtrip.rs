use proptest::prelude::*;
use subtrend::corpus::{parse_srt_str, serialize_srt, SubtitleCue, SubtitleDocument};

fn text_line() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 ,.!?'\"\u{00e9}\u{266a}-]{1,40}"
        .prop_map(|s| s.trim().to_owned())
        .prop_filter("non-empty", |s| !s.is_empty())
}

fn document() -> impl Strategy<Value = SubtitleDocument> {
    prop::collection::vec(
        (
            0u64..360_000_000,
            1u64..20_000,
            prop::collection::vec(text_line(), 1..4),
        ),
        0..30,
    )
    .prop_map(|mut raw| {
        raw.sort_by_key(|(start, ..)| *start);
        let cues = raw
            .into_iter()
            .enumerate()
            .map(|(i, (start, len, lines))| SubtitleCue {
                index: i as u32 + 1,
                start_ms: start,
                end_ms: start + len,
                lines,
            })
            .collect();
        SubtitleDocument::new("gen", cues)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn serialize_then_parse_is_identity(doc in document()) {
        let text = serialize_srt(&doc);
        let (back, report) = parse_srt_str(&text, "gen").unwrap();
        prop_assert!(report.is_clean());
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(serialize_srt(&back), text);
    }
}

#[test]
fn crlf_and_bom_files_parse_like_plain_ones() {
    let plain = "1\n00:00:01,000 --> 00:00:02,500\nHello there.\n\n2\n00:00:03,000 --> 00:00:04,000\n<b>General</b> {\\an8}Kenobi.\n";
    let dos = format!("\u{feff}{}", plain.replace('\n', "\r\n"));
    let (a, _) = parse_srt_str(plain, "x").unwrap();
    let (b, _) = parse_srt_str(&dos, "x").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cues[1].lines, vec!["General Kenobi."]);
}
