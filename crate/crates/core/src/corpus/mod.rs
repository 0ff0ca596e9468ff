//! Subtitle documents and the film catalog.

mod catalog;
mod srt;

pub use catalog::{
    genre_counts, load_catalog, merge_genre, read_catalog, AwardClass, Catalog, FilmCatalogEntry,
    Genre, GenreMismatch, MAX_YEAR, MIN_YEAR,
};
pub use srt::{
    format_timestamp, parse_srt, parse_srt_str, parse_timestamp, serialize_srt, strip_tags,
    ParseReport, SkippedBlock, SubtitleCue, SubtitleDocument,
};

use std::path::Path;

use crate::error::{Error, Result};

/// Parses one `.srt` file from disk.
pub fn load_srt(path: impl AsRef<Path>, film_id: &str) -> Result<(SubtitleDocument, ParseReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_srt(std::io::BufReader::new(file), film_id).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

/// A catalog entry together with its parsed subtitles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Film {
    pub entry: FilmCatalogEntry,
    pub subtitles: SubtitleDocument,
}
