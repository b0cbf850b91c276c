//! Character-level token embedder, word-level biLSTM and per-language output
//! heads, with hand-written reverse mode.
//!
//! ```text
//! v_t    = [charLSTM(c_1..c_n) ; charLSTM'(c_n..c_1)]      final hidden states
//! e_t    = biLSTM^L(v_1..v_T)[t]                           L stacked layers
//! out_t  = W_lang e_t + b_lang
//! ```

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{uniform_matrix, Lstm, LstmTrace};
use crate::error::{Error, Result};
use crate::params::{slice, slice_mut, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitterConfig {
    /// Character embedding size and character LSTM hidden size.
    pub char_dim: usize,
    /// Hidden size of each direction of the word biLSTM.
    pub word_hidden: usize,
    pub word_layers: usize,
}

impl Default for EmitterConfig {
    /// 128-dimensional token embeddings (64 per character direction), a
    /// 2-layer word biLSTM with 256 units per direction.
    fn default() -> Self {
        EmitterConfig {
            char_dim: 64,
            word_hidden: 256,
            word_layers: 2,
        }
    }
}

/// Characters seen in training. Index 0 is reserved for unknown characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharVocab {
    chars: Vec<char>,
}

impl CharVocab {
    pub const UNK: usize = 0;

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut chars: Vec<char> = tokens.into_iter().flat_map(str::chars).collect();
        chars.sort_unstable();
        chars.dedup();
        CharVocab { chars }
    }

    pub fn index(&self, c: char) -> usize {
        self.chars.binary_search(&c).map_or(Self::UNK, |i| i + 1)
    }

    /// Vocabulary size including the UNK slot.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    /// `K × 2H`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All emitter parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    pub config: EmitterConfig,
    pub vocab: CharVocab,
    /// One output head per language, in this order.
    pub languages: Vec<String>,
    /// `|V| × char_dim`
    pub char_embeddings: Array2<f64>,
    pub char_forward: Lstm,
    pub char_backward: Lstm,
    pub word: Vec<BiLstm>,
    pub heads: Vec<LinearHead>,
}

/// Dropout applied to the input of every word biLSTM layer during training.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

struct TokenTrace {
    ids: Vec<usize>,
    forward: LstmTrace,
    backward: LstmTrace,
}

struct LayerTrace {
    mask: Option<Array2<f64>>,
    forward: LstmTrace,
    backward: LstmTrace,
}

/// Forward-pass activations needed by [`EmitterParams::backward`].
pub struct EmitterTrace {
    tokens: Vec<TokenTrace>,
    layers: Vec<LayerTrace>,
    top: Array2<f64>,
    head: usize,
}

fn reversed(a: ArrayView2<'_, f64>) -> Array2<f64> {
    a.slice(s![..;-1, ..]).to_owned()
}

impl EmitterParams {
    /// Random initialization, uniform in `[-0.1, 0.1]`; head biases start at 0.
    pub fn new(config: EmitterConfig, vocab: CharVocab, languages: Vec<String>, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.char_dim;
        let h = config.word_hidden;
        let char_embeddings = uniform_matrix(vocab.len(), d, &mut rng);
        let char_forward = Lstm::new(d, d, &mut rng);
        let char_backward = Lstm::new(d, d, &mut rng);
        let word = (0..config.word_layers)
            .map(|layer| {
                let input = if layer == 0 { 2 * d } else { 2 * h };
                BiLstm {
                    forward: Lstm::new(input, h, &mut rng),
                    backward: Lstm::new(input, h, &mut rng),
                }
            })
            .collect();
        let heads = languages
            .iter()
            .map(|_| LinearHead {
                weight: uniform_matrix(output_dim, 2 * h, &mut rng),
                bias: Array1::zeros(output_dim),
            })
            .collect();
        EmitterParams {
            config,
            vocab,
            languages,
            char_embeddings,
            char_forward,
            char_backward,
            word,
            heads,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn output_dim(&self) -> usize {
        self.heads.first().map_or(0, |h| h.bias.len())
    }

    pub fn head_index(&self, language: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|l| l == language)
            .ok_or_else(|| Error::UnknownLanguage {
                language: language.to_string(),
                known: self.languages.clone(),
            })
    }

    fn encode(&self, token: &str) -> Vec<usize> {
        token.chars().map(|c| self.vocab.index(c)).collect()
    }

    fn embed_ids(&self, ids: &[usize]) -> TokenTrace {
        let chars = self.char_embeddings.select(Axis(0), ids);
        TokenTrace {
            ids: ids.to_vec(),
            forward: self.char_forward.forward(chars.view()),
            backward: self.char_backward.forward(reversed(chars.view()).view()),
        }
    }

    /// Token representation `[fwd_last ; bwd_last]`, length `2 * char_dim`.
    pub fn embed_token(&self, token: &str) -> Result<Array1<f64>> {
        if token.is_empty() {
            return Err(Error::EmptyToken { position: None });
        }
        let trace = self.embed_ids(&self.encode(token));
        Ok(concatenate![
            Axis(0),
            trace.forward.last_hidden(),
            trace.backward.last_hidden()
        ])
    }

    /// Runs the network on `tokens` through the head of language `head`.
    /// Returns `T × K` scores and the trace for the backward pass.
    pub fn forward<R: Rng>(
        &self,
        tokens: &[String],
        head: usize,
        mut dropout: Option<Dropout<'_, R>>,
    ) -> Result<(Array2<f64>, EmitterTrace)> {
        let d = self.config.char_dim;
        let mut token_traces = Vec::with_capacity(tokens.len());
        let mut input = Array2::zeros((tokens.len(), 2 * d));
        for (t, token) in tokens.iter().enumerate() {
            if token.is_empty() {
                return Err(Error::EmptyToken { position: None });
            }
            let trace = self.embed_ids(&self.encode(token));
            input.slice_mut(s![t, ..d]).assign(&trace.forward.last_hidden());
            input.slice_mut(s![t, d..]).assign(&trace.backward.last_hidden());
            token_traces.push(trace);
        }

        let mut layers = Vec::with_capacity(self.word.len());
        for layer in &self.word {
            let mask = dropout.as_mut().filter(|d| d.rate > 0.0).map(|d| {
                let keep = 1.0 - d.rate;
                Array2::from_shape_simple_fn(input.raw_dim(), || {
                    if d.rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            });
            if let Some(mask) = &mask {
                input *= mask;
            }
            let forward = layer.forward.forward(input.view());
            let backward = layer.backward.forward(reversed(input.view()).view());
            input = concatenate![Axis(1), forward.hidden, reversed(backward.hidden.view())];
            layers.push(LayerTrace {
                mask,
                forward,
                backward,
            });
        }

        let head_params = &self.heads[head];
        let scores = (input.dot(&head_params.weight.t()) + &head_params.bias)
            .as_standard_layout()
            .into_owned();
        Ok((
            scores,
            EmitterTrace {
                tokens: token_traces,
                layers,
                top: input,
                head,
            },
        ))
    }

    /// Deterministic forward pass (no dropout).
    pub fn scores(&self, tokens: &[String], head: usize) -> Result<Array2<f64>> {
        Ok(self.forward::<ChaCha8Rng>(tokens, head, None)?.0)
    }

    /// Accumulates into `grad` the gradient of `Σ_t ⟨d_scores[t], scores[t]⟩`.
    pub fn backward(
        &self,
        trace: &EmitterTrace,
        d_scores: ArrayView2<'_, f64>,
        grad: &mut EmitterParams,
    ) -> Result<()> {
        if d_scores.dim() != (trace.top.nrows(), self.output_dim()) {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, scores are {:?}",
                d_scores.dim(),
                (trace.top.nrows(), self.output_dim())
            )));
        }
        let head = &self.heads[trace.head];
        let head_grad = &mut grad.heads[trace.head];
        head_grad.weight += &d_scores.t().dot(&trace.top);
        head_grad.bias += &d_scores.sum_axis(Axis(0));
        let mut d_out = d_scores.dot(&head.weight);

        let h = self.config.word_hidden;
        for (l, layer_trace) in trace.layers.iter().enumerate().rev() {
            let layer = &self.word[l];
            let layer_grad = &mut grad.word[l];
            let d_fwd = d_out.slice(s![.., ..h]);
            let d_bwd = reversed(d_out.slice(s![.., h..]));
            let dx_fwd = layer
                .forward
                .backward(&layer_trace.forward, d_fwd, &mut layer_grad.forward);
            let dx_bwd = layer
                .backward
                .backward(&layer_trace.backward, d_bwd.view(), &mut layer_grad.backward);
            let mut d_in = dx_fwd + reversed(dx_bwd.view());
            if let Some(mask) = &layer_trace.mask {
                d_in *= mask;
            }
            d_out = d_in;
        }

        let d = self.config.char_dim;
        for (t, token) in trace.tokens.iter().enumerate() {
            let n = token.ids.len();
            let mut dh = Array2::zeros((n, d));
            dh.row_mut(n - 1).assign(&d_out.slice(s![t, ..d]));
            let dx_fwd = self
                .char_forward
                .backward(&token.forward, dh.view(), &mut grad.char_forward);
            dh.row_mut(n - 1).assign(&d_out.slice(s![t, d..]));
            let dx_bwd = self
                .char_backward
                .backward(&token.backward, dh.view(), &mut grad.char_backward);
            for (k, &id) in token.ids.iter().enumerate() {
                let mut row = grad.char_embeddings.row_mut(id);
                row += &dx_fwd.row(k);
                row += &dx_bwd.row(n - 1 - k);
            }
        }
        Ok(())
    }

    /// Zeroes one language's output layer.
    pub fn zero_head(&mut self, head: usize) {
        self.heads[head].weight.fill(0.0);
        self.heads[head].bias.fill(0.0);
    }
}

/// Gradient of `Σ ⟨upstream[t], scores[t]⟩` for a sentence in `language`,
/// recomputing the deterministic forward pass.
pub fn emitter_backward(
    params: &EmitterParams,
    tokens: &[String],
    language: &str,
    upstream: ArrayView2<'_, f64>,
) -> Result<EmitterParams> {
    let head = params.head_index(language)?;
    let (_, trace) = params.forward::<ChaCha8Rng>(tokens, head, None)?;
    let mut grad = params.zeros_like();
    params.backward(&trace, upstream, &mut grad)?;
    Ok(grad)
}

impl Parameters for EmitterParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![slice(&self.char_embeddings)];
        out.extend(self.char_forward.tensors());
        out.extend(self.char_backward.tensors());
        for layer in &self.word {
            out.extend(layer.forward.tensors());
            out.extend(layer.backward.tensors());
        }
        for head in &self.heads {
            out.push(slice(&head.weight));
            out.push(slice(&head.bias));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![slice_mut(&mut self.char_embeddings)];
        out.extend(self.char_forward.tensors_mut());
        out.extend(self.char_backward.tensors_mut());
        for layer in &mut self.word {
            out.extend(layer.forward.tensors_mut());
            out.extend(layer.backward.tensors_mut());
        }
        for head in &mut self.heads {
            out.push(slice_mut(&mut head.weight));
            out.push(slice_mut(&mut head.bias));
        }
        out
    }
}
