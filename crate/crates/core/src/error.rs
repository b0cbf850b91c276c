use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Location of a token inside a corpus, used in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub sentence: usize,
    pub token: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sentence {}, token {}", self.sentence, self.token)
    }
}

fn at(position: &Option<Position>) -> String {
    match position {
        Some(p) => format!(" at {p}"),
        None => String::new(),
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("no training data")]
    NoTrainingData,

    #[error("unknown tag type `{tag}`{}", at(.position))]
    UnknownTag { tag: String, position: Option<Position> },

    #[error("unknown label `{tag}={label}`{}", at(.position))]
    UnknownLabel {
        tag: String,
        label: String,
        position: Option<Position>,
    },

    #[error("line {line}: {message}")]
    Conllu { line: usize, message: String },

    #[error("low-resource corpus has {available} sentences but tgt_size is {requested}")]
    NotEnoughSentences { requested: usize, available: usize },

    #[error("cannot build a factor graph for an empty sentence")]
    EmptySentence,

    #[error("empty token{}", at(.position))]
    EmptyToken { position: Option<Position> },

    #[error("unknown language `{language}` (known: {})", .known.join(", "))]
    UnknownLanguage { language: String, known: Vec<String> },

    #[error("pairwise tags must be ordered i < j, got ({i}, {j})")]
    PairOrder { i: usize, j: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss or gradient on sentence {sentence}")]
    NonFinite { sentence: usize },

    #[error("no tokens")]
    NoTokens,

    #[error("length mismatch: {pred} predicted vs {gold} gold")]
    LengthMismatch { pred: usize, gold: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("unknown tag type `{tag}` (available: {})", .available.join(", "))]
    NoSuchTag { tag: String, available: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
