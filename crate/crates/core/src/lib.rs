//! Longitudinal sentiment and abusive-language analysis over movie subtitle
//! corpora.
//!
//! The crate is organised as a pipeline: [`corpus`] parses subtitles and the
//! film catalog, [`textprep`] normalizes dialogue, [`ngram`] and
//! [`vectorizer`] turn it into counts and features, [`linear`] and [`eval`]
//! train and score baseline classifiers, and [`lexicon`], [`sentiment`],
//! [`longitudinal`] and [`timeline`] produce the corpus- and film-level
//! series that [`pipeline`] writes out.

pub mod classifier;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod inference;
pub mod lexicon;
pub mod linear;
pub mod longitudinal;
pub mod ngram;
pub mod pipeline;
pub mod sentiment;
pub mod textprep;
pub mod timeline;
pub mod vectorizer;

pub use error::{Error, Result};
