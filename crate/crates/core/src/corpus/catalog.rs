//! Film catalog ingestion and genre merging.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_YEAR: i32 = 1950;
pub const MAX_YEAR: i32 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Genre {
    Action,
    Comedy,
    Drama,
    Thriller,
}

impl Genre {
    pub const ALL: [Genre; 4] = [Genre::Action, Genre::Comedy, Genre::Drama, Genre::Thriller];

    pub fn as_str(self) -> &'static str {
        match self {
            Genre::Action => "Action",
            Genre::Comedy => "Comedy",
            Genre::Drama => "Drama",
            Genre::Thriller => "Thriller",
        }
    }

    /// Maps a single IMDb genre name onto a merged genre, if it has one.
    pub fn from_imdb(name: &str) -> Option<Genre> {
        match name.trim().to_ascii_lowercase().as_str() {
            "action" | "adventure" | "crime" => Some(Genre::Action),
            "horror" | "thriller" => Some(Genre::Thriller),
            "comedy" => Some(Genre::Comedy),
            "drama" => Some(Genre::Drama),
            _ => None,
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Genre {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Genre::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown genre `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AwardClass {
    Oscar,
    Blockbuster,
}

impl AwardClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AwardClass::Oscar => "oscar",
            AwardClass::Blockbuster => "blockbuster",
        }
    }
}

impl fmt::Display for AwardClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AwardClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oscar" => Ok(AwardClass::Oscar),
            "blockbuster" => Ok(AwardClass::Blockbuster),
            _ => Err(Error::InvalidArgument(format!("unknown award class `{s}`"))),
        }
    }
}

/// Reduces an ordered IMDb genre list to one of the four merged genres.
///
/// The first genre decides. When it belongs to none of the merged groups
/// the next mappable genre in the list is used instead.
pub fn merge_genre<S: AsRef<str>>(raw_genres: &[S]) -> Result<Genre> {
    raw_genres
        .iter()
        .find_map(|g| Genre::from_imdb(g.as_ref()))
        .ok_or_else(|| {
            Error::UnmappedGenre(raw_genres.iter().map(|g| g.as_ref().to_owned()).collect())
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilmCatalogEntry {
    pub film_id: String,
    pub title: String,
    pub year: i32,
    pub award_class: AwardClass,
    pub raw_genres: Vec<String>,
    pub genre: Genre,
}

/// A catalog row whose declared `genre` column disagrees with the merged genre.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreMismatch {
    pub film_id: String,
    pub declared: String,
    pub computed: Genre,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub entries: Vec<FilmCatalogEntry>,
    pub genre_mismatches: Vec<GenreMismatch>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, film_id: &str) -> Option<&FilmCatalogEntry> {
        self.entries.iter().find(|e| e.film_id == film_id)
    }

    /// Number of films per merged genre; every genre is present, possibly with 0.
    pub fn genre_counts(&self) -> BTreeMap<Genre, usize> {
        genre_counts(&self.entries)
    }
}

pub fn genre_counts(entries: &[FilmCatalogEntry]) -> BTreeMap<Genre, usize> {
    let mut counts: BTreeMap<Genre, usize> = Genre::ALL.iter().map(|&g| (g, 0)).collect();
    for e in entries {
        *counts.entry(e.genre).or_default() += 1;
    }
    counts
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_catalog(file)
}

/// Reads a catalog with header `film_id,title,year,award_class,genres[,genre]`.
pub fn read_catalog<R: std::io::Read>(reader: R) -> Result<Catalog> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let required = ["film_id", "title", "year", "award_class", "genres"];
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(required) {
        *slot = column(name).ok_or_else(|| Error::MalformedRow {
            row: 0,
            reason: format!("missing column `{name}` in header"),
        })?;
    }
    let declared_col = column("genre");

    let mut catalog = Catalog::default();
    let mut seen = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |c: usize| -> Result<&str> {
            record.get(c).ok_or_else(|| Error::MalformedRow {
                row,
                reason: format!("expected at least {} fields, found {}", c + 1, record.len()),
            })
        };
        let film_id = field(idx[0])?.to_owned();
        if film_id.is_empty() {
            return Err(Error::MalformedRow {
                row,
                reason: "empty film_id".into(),
            });
        }
        let title = field(idx[1])?.to_owned();
        let year_text = field(idx[2])?;
        let year: i32 = year_text.parse().map_err(|_| Error::MalformedRow {
            row,
            reason: format!("bad year `{year_text}`"),
        })?;
        if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
            return Err(Error::YearOutOfRange { row, year });
        }
        let award_class: AwardClass =
            field(idx[3])?
                .parse()
                .map_err(|e: Error| Error::MalformedRow {
                    row,
                    reason: e.to_string(),
                })?;
        let raw_genres: Vec<String> = field(idx[4])?
            .split('|')
            .map(|g| g.trim().to_owned())
            .filter(|g| !g.is_empty())
            .collect();
        if raw_genres.is_empty() || raw_genres.len() > 3 {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected 1-3 genres, found {}", raw_genres.len()),
            });
        }
        let genre = merge_genre(&raw_genres).map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if !seen.insert(film_id.clone()) {
            return Err(Error::DuplicateFilm(film_id));
        }
        if let Some(declared) = declared_col
            .and_then(|c| record.get(c))
            .filter(|d| !d.is_empty())
        {
            if !declared.eq_ignore_ascii_case(genre.as_str()) {
                catalog.genre_mismatches.push(GenreMismatch {
                    film_id: film_id.clone(),
                    declared: declared.to_owned(),
                    computed: genre,
                });
            }
        }
        catalog.entries.push(FilmCatalogEntry {
            film_id,
            title,
            year,
            award_class,
            raw_genres,
            genre,
        });
    }
    Ok(catalog)
}
