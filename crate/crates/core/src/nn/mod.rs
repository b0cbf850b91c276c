//! Neural potentials: a character biLSTM token embedder feeding a word biLSTM
//! and a language-specific linear layer.

mod emitter;
mod lstm;

pub use emitter::{
    emitter_backward, BiLstm, CharVocab, Dropout, EmitterConfig, EmitterParams, EmitterTrace, LinearHead,
};
pub use lstm::{Lstm, LstmTrace};

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::schema::{Sentence, TagSchema};

/// Per-token neural scores split into one segment per tag type.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionScores {
    scores: Array2<f64>,
    offsets: Vec<usize>,
    sizes: Vec<usize>,
}

impl EmissionScores {
    /// Wraps a `T × Σ|Y_m|` score matrix.
    pub fn new(scores: Array2<f64>, schema: &TagSchema) -> Result<Self> {
        Self::from_sizes(scores, schema.domain_sizes())
    }

    pub fn from_sizes(scores: Array2<f64>, sizes: Vec<usize>) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        if scores.ncols() != total {
            return Err(Error::Shape(format!(
                "score width {} does not match {total} labels",
                scores.ncols()
            )));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &n in &sizes {
            offsets.push(acc);
            acc += n;
        }
        Ok(EmissionScores { scores, offsets, sizes })
    }

    pub fn length(&self) -> usize {
        self.scores.nrows()
    }

    pub fn num_tags(&self) -> usize {
        self.sizes.len()
    }

    /// Scores of tag type `m` at token `t`, one per label.
    pub fn get(&self, t: usize, m: usize) -> ArrayView1<'_, f64> {
        let start = self.offsets[m];
        self.scores.row(t).slice_move(ndarray::s![start..start + self.sizes[m]])
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Deterministic neural factor scores for `sentence` in its own language.
pub fn emission_scores(params: &EmitterParams, sentence: &Sentence, schema: &TagSchema) -> Result<EmissionScores> {
    let head = params.head_index(&sentence.language)?;
    EmissionScores::new(params.scores(&sentence.tokens, head)?, schema)
}
