//! The factorial CRF tagger: neural unary factors from the emitter, pairwise
//! and transition tables from [`FactorWeights`], inference by loopy BP.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{BeliefState, BpConfig, LogPotentials, LoopyBp};
use crate::decode::mbr_decode;
use crate::error::{Error, Result};
use crate::graph::{Factor, FactorGraph, FactorSet};
use crate::nn::{CharVocab, Dropout, EmissionScores, EmitterConfig, EmitterParams};
use crate::params::Parameters;
use crate::potentials::FactorWeights;
use crate::schema::{Corpus, Sentence, TagAssignment, TagSchema};

/// Every trainable parameter of the FCRF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub emitter: EmitterParams,
    pub factors: FactorWeights,
}

/// Accumulator with the same layout as [`ModelParams`].
pub type GradientBuffer = ModelParams;

impl ModelParams {
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.emitter.tensors();
        out.extend(self.factors.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.emitter.tensors_mut();
        out.extend(self.factors.tensors_mut());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcrfModel {
    pub schema: TagSchema,
    pub factor_set: FactorSet,
    pub bp: BpConfig,
    pub params: ModelParams,
}

/// Per-sentence training statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceStats {
    /// `log Z - score(gold)`, with the Bethe estimate of `log Z`.
    pub nll: f64,
    pub converged: bool,
}

/// Picks the language whose parameters tag `language`: itself when trained,
/// otherwise `fallback` when that one is.
pub fn resolve_language<'a>(known: &[String], language: &'a str, fallback: Option<&'a str>) -> Result<&'a str> {
    if known.iter().any(|l| l == language) {
        return Ok(language);
    }
    match fallback {
        Some(f) if known.iter().any(|l| l == f) => Ok(f),
        Some(f) => Err(Error::UnknownLanguage {
            language: f.to_string(),
            known: known.to_vec(),
        }),
        None => Err(Error::UnknownLanguage {
            language: language.to_string(),
            known: known.to_vec(),
        }),
    }
}

fn flat_labels(gold: &[TagAssignment]) -> Vec<usize> {
    gold.iter().flat_map(|a| a.labels.iter().copied()).collect()
}

impl FcrfModel {
    /// Fresh model: random emitter, zero factor weights. Language-specific
    /// factor tables exist only when more than one language is given.
    pub fn new(
        schema: TagSchema,
        languages: Vec<String>,
        vocab: CharVocab,
        emitter: EmitterConfig,
        factor_set: FactorSet,
        bp: BpConfig,
        seed: u64,
    ) -> Self {
        let factor_languages = if languages.len() > 1 {
            languages.clone()
        } else {
            Vec::new()
        };
        let factors = FactorWeights::zeros(&schema, &factor_languages);
        let emitter = EmitterParams::new(emitter, vocab, languages, schema.total_labels(), seed);
        FcrfModel {
            schema,
            factor_set,
            bp,
            params: ModelParams { emitter, factors },
        }
    }

    /// Fresh model sized for a training corpus.
    pub fn for_corpus(
        corpus: &Corpus,
        schema: TagSchema,
        emitter: EmitterConfig,
        factor_set: FactorSet,
        bp: BpConfig,
        seed: u64,
    ) -> Self {
        let vocab = CharVocab::from_tokens(
            corpus
                .sentences
                .iter()
                .flat_map(|s| s.tokens.iter().map(String::as_str)),
        );
        FcrfModel::new(
            schema,
            corpus.languages().into_iter().collect(),
            vocab,
            emitter,
            factor_set,
            bp,
            seed,
        )
    }

    pub fn languages(&self) -> &[String] {
        &self.params.emitter.languages
    }

    fn graph(&self, length: usize) -> Result<FactorGraph> {
        FactorGraph::new(length, self.schema.num_tags(), self.factor_set)
    }

    fn potentials(&self, emissions: &EmissionScores, language: &str) -> Result<LogPotentials> {
        let lang = self.params.factors.language_index(language)?;
        Ok(LogPotentials::assemble(emissions, &self.params.factors, lang))
    }

    /// Deterministic neural scores for `sentence` read as `language`.
    pub fn emissions(&self, sentence: &Sentence, language: &str) -> Result<EmissionScores> {
        let head = self.params.emitter.head_index(language)?;
        EmissionScores::new(self.params.emitter.scores(&sentence.tokens, head)?, &self.schema)
    }

    pub fn beliefs(&self, sentence: &Sentence, fallback: Option<&str>) -> Result<BeliefState> {
        let language = resolve_language(self.languages(), &sentence.language, fallback)?;
        let emissions = self.emissions(sentence, language)?;
        let graph = self.graph(sentence.len())?;
        LoopyBp::new(&graph, self.potentials(&emissions, language)?)?.run(&self.bp)
    }

    /// MBR assignments for every token.
    pub fn predict(&self, sentence: &Sentence, fallback: Option<&str>) -> Result<Vec<TagAssignment>> {
        Ok(mbr_decode(&self.beliefs(sentence, fallback)?))
    }

    pub fn predict_corpus(&self, corpus: &Corpus, fallback: Option<&str>) -> Result<Vec<Vec<TagAssignment>>> {
        corpus.sentences.par_iter().map(|s| self.predict(s, fallback)).collect()
    }

    /// Surrogate log-likelihood of `gold`: `score(gold) - log Z_Bethe`. Exact
    /// when the graph is a tree.
    pub fn log_likelihood(&self, sentence: &Sentence, gold: &[TagAssignment]) -> Result<f64> {
        let emissions = self.emissions(sentence, &sentence.language)?;
        let graph = self.graph(sentence.len())?;
        let potentials = self.potentials(&emissions, &sentence.language)?;
        let gold_score = potentials.score(&graph, &flat_labels(gold));
        let beliefs = LoopyBp::new(&graph, potentials)?.run(&self.bp)?;
        Ok(gold_score - beliefs.log_partition)
    }

    /// Accumulates the surrogate log-likelihood gradient of one sentence into
    /// `grad`, with optional dropout in the emitter.
    pub fn accumulate_gradient(
        &self,
        sentence: &Sentence,
        gold: &[TagAssignment],
        dropout: Option<Dropout<'_, ChaCha8Rng>>,
        grad: &mut GradientBuffer,
    ) -> Result<SentenceStats> {
        if gold.len() != sentence.len() {
            return Err(Error::LengthMismatch {
                pred: sentence.len(),
                gold: gold.len(),
            });
        }
        let emitter = &self.params.emitter;
        let head = emitter.head_index(&sentence.language)?;
        let (scores, trace) = emitter.forward(&sentence.tokens, head, dropout)?;
        let emissions = EmissionScores::new(scores, &self.schema)?;
        let graph = self.graph(sentence.len())?;
        let lang = self.params.factors.language_index(&sentence.language)?;
        let potentials = LogPotentials::assemble(&emissions, &self.params.factors, lang);
        let gold_score = potentials.score(&graph, &flat_labels(gold));
        let beliefs = LoopyBp::new(&graph, potentials)?.run(&self.bp)?;

        factor_weight_gradient(&graph, &beliefs, gold, lang, &mut grad.factors)?;
        let upstream = neural_score_gradient(&beliefs, gold, &emissions)?;
        emitter.backward(&trace, upstream.view(), &mut grad.emitter)?;
        Ok(SentenceStats {
            nll: beliefs.log_partition - gold_score,
            converged: beliefs.converged,
        })
    }
}

/// Adds `one_hot(gold) - belief` for every pairwise and transition factor to
/// the general tables and, when `lang` is given, to that language's tables.
pub fn factor_weight_gradient(
    graph: &FactorGraph,
    beliefs: &BeliefState,
    gold: &[TagAssignment],
    lang: Option<usize>,
    grad: &mut FactorWeights,
) -> Result<()> {
    if beliefs.factors.len() != graph.factors().len() || gold.len() != graph.length() {
        return Err(Error::Shape(format!(
            "beliefs cover {} factors over {} tokens, graph has {} over {}",
            beliefs.factors.len(),
            gold.len(),
            graph.factors().len(),
            graph.length()
        )));
    }
    for (factor, belief) in graph.factors().iter().zip(&beliefs.factors) {
        let (targets, a, b): (Vec<&mut Array2<f64>>, usize, usize) = match *factor {
            Factor::Neural { .. } => continue,
            Factor::Pairwise { t, i, j, pair } => {
                let tables = &mut grad.pairwise;
                let mut targets = vec![&mut tables.general[pair]];
                if let Some(l) = lang {
                    targets.push(&mut tables.language[l][pair]);
                }
                (targets, gold[t].labels[i], gold[t].labels[j])
            }
            Factor::Transition { t, m } => {
                let tables = &mut grad.transition;
                let mut targets = vec![&mut tables.general[m]];
                if let Some(l) = lang {
                    targets.push(&mut tables.language[l][m]);
                }
                (targets, gold[t].labels[m], gold[t + 1].labels[m])
            }
        };
        for table in targets {
            if table.dim() != belief.dim() {
                return Err(Error::Shape(format!(
                    "gradient table is {:?}, belief is {:?}",
                    table.dim(),
                    belief.dim()
                )));
            }
            *table -= belief;
            table[[a, b]] += 1.0;
        }
    }
    Ok(())
}

/// `one_hot(gold) - belief` per variable, laid out like the emitter output
/// (`T × Σ|Y_m|`).
pub fn neural_score_gradient(
    beliefs: &BeliefState,
    gold: &[TagAssignment],
    layout: &EmissionScores,
) -> Result<Array2<f64>> {
    let m = layout.num_tags();
    if gold.len() != layout.length() || beliefs.variables.len() != layout.length() * m {
        return Err(Error::Shape(
            "beliefs, gold and scores disagree on sentence size".into(),
        ));
    }
    let mut out = Array2::zeros(layout.matrix().raw_dim());
    for (t, token) in gold.iter().enumerate() {
        for k in 0..m {
            let offset = layout.offsets()[k];
            for (l, &p) in beliefs.variables[t * m + k].iter().enumerate() {
                out[[t, offset + l]] = -p;
            }
            out[[t, offset + token.labels[k]]] += 1.0;
        }
    }
    Ok(out)
}
