//! Comparison taggers.
//!
//! The tag-set baseline treats every full tag set seen in training as one
//! class and predicts it with a per-token softmax on the shared emitter. The
//! tag-wise model predicts each tag type independently; it is the FCRF with
//! no pairwise or transition factors.

use std::collections::HashMap;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcrf::{resolve_language, FcrfModel};
use crate::logspace::{argmax, log_sum_exp};
use crate::nn::{CharVocab, Dropout, EmitterParams};
use crate::schema::{Corpus, Sentence, TagAssignment, TagSchema};
use crate::train::{run_training, EpochMetrics, ExampleStats, Learner, TrainConfig, Trained};

/// The observed tag-set inventory, in order of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<TagAssignment>", into = "Vec<TagAssignment>")]
pub struct TagSetVocabulary {
    classes: Vec<TagAssignment>,
    index: HashMap<TagAssignment, usize>,
}

impl From<Vec<TagAssignment>> for TagSetVocabulary {
    fn from(items: Vec<TagAssignment>) -> Self {
        let mut vocab = TagSetVocabulary {
            classes: Vec::new(),
            index: HashMap::new(),
        };
        for a in items {
            vocab.insert(a);
        }
        vocab
    }
}

impl From<TagSetVocabulary> for Vec<TagAssignment> {
    fn from(v: TagSetVocabulary) -> Self {
        v.classes
    }
}

impl TagSetVocabulary {
    pub fn from_gold<'a>(gold: impl IntoIterator<Item = &'a TagAssignment>) -> Self {
        gold.into_iter().cloned().collect::<Vec<_>>().into()
    }

    fn insert(&mut self, a: TagAssignment) -> usize {
        if let Some(&i) = self.index.get(&a) {
            return i;
        }
        self.classes.push(a.clone());
        self.index.insert(a, self.classes.len() - 1);
        self.classes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_of(&self, a: &TagAssignment) -> Option<usize> {
        self.index.get(a).copied()
    }

    pub fn class(&self, i: usize) -> &TagAssignment {
        &self.classes[i]
    }

    pub fn contains(&self, a: &TagAssignment) -> bool {
        self.index.contains_key(a)
    }

    pub fn classes(&self) -> &[TagAssignment] {
        &self.classes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub schema: TagSchema,
    pub tag_sets: TagSetVocabulary,
    /// Output heads score the tag-set classes.
    pub emitter: EmitterParams,
}

impl BaselineModel {
    pub fn languages(&self) -> &[String] {
        &self.emitter.languages
    }

    /// Per-token class scores (`T × |Ỹ|`).
    pub fn class_scores(&self, sentence: &Sentence, fallback: Option<&str>) -> Result<Array2<f64>> {
        let language = resolve_language(self.languages(), &sentence.language, fallback)?;
        self.emitter
            .scores(&sentence.tokens, self.emitter.head_index(language)?)
    }

    pub fn predict_corpus(&self, corpus: &Corpus, fallback: Option<&str>) -> Result<Vec<Vec<TagAssignment>>> {
        corpus
            .sentences
            .par_iter()
            .map(|s| baseline_predict(self, s, fallback))
            .collect()
    }
}

/// Highest-scoring observed tag set per token; ties go to the earliest class.
pub fn baseline_predict(
    model: &BaselineModel,
    sentence: &Sentence,
    fallback: Option<&str>,
) -> Result<Vec<TagAssignment>> {
    let scores = model.class_scores(sentence, fallback)?;
    Ok(scores
        .rows()
        .into_iter()
        .map(|row| {
            model
                .tag_sets
                .class(argmax(row.as_slice().expect("row-major scores")))
                .clone()
        })
        .collect())
}

/// Independent per-tag argmax of the neural scores, ignoring any pairwise or
/// transition weights the model carries.
pub fn tagwise_predict(model: &FcrfModel, sentence: &Sentence, fallback: Option<&str>) -> Result<Vec<TagAssignment>> {
    let language = resolve_language(model.languages(), &sentence.language, fallback)?;
    let e = model.emissions(sentence, language)?;
    Ok((0..e.length())
        .map(|t| TagAssignment {
            labels: (0..e.num_tags())
                .map(|m| argmax(e.get(t, m).as_slice().expect("contiguous segment")))
                .collect(),
        })
        .collect())
}

struct BaselineLearner<'a> {
    model: BaselineModel,
    corpus: &'a Corpus,
    classes: Vec<Vec<usize>>,
}

impl Learner for BaselineLearner<'_> {
    type Params = EmitterParams;

    fn params(&self) -> &EmitterParams {
        &self.model.emitter
    }

    fn params_mut(&mut self) -> &mut EmitterParams {
        &mut self.model.emitter
    }

    fn num_examples(&self) -> usize {
        self.corpus.len()
    }

    fn accumulate(
        &self,
        index: usize,
        dropout: Option<Dropout<'_, ChaCha8Rng>>,
        grad: &mut EmitterParams,
    ) -> Result<ExampleStats> {
        let sentence = &self.corpus.sentences[index];
        let emitter = &self.model.emitter;
        let head = emitter.head_index(&sentence.language)?;
        let (scores, trace) = emitter.forward(&sentence.tokens, head, dropout)?;
        let mut upstream = Array2::zeros(scores.raw_dim());
        let mut nll = 0.0;
        for (t, &gold) in self.classes[index].iter().enumerate() {
            let row = scores.row(t);
            let row = row.as_slice().expect("row-major scores");
            let z = log_sum_exp(row);
            nll += z - row[gold];
            for (k, &s) in row.iter().enumerate() {
                upstream[[t, k]] = -(s - z).exp();
            }
            upstream[[t, gold]] += 1.0;
        }
        emitter.backward(&trace, upstream.view(), grad)?;
        Ok(ExampleStats { nll, converged: true })
    }

    fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<Vec<TagAssignment>>> {
        self.model.predict_corpus(corpus, None)
    }

    fn schema(&self) -> &TagSchema {
        &self.model.schema
    }
}

/// Trains the tag-set softmax baseline: cross-entropy over the tag sets seen
/// in `corpus`, one output head per language.
pub fn baseline_train(
    corpus: &Corpus,
    schema: &TagSchema,
    cfg: &TrainConfig,
    dev: Option<&Corpus>,
    observer: &mut (dyn FnMut(&EpochMetrics) + Send),
) -> Result<Trained<BaselineModel>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let gold = schema.complete_corpus(corpus)?;
    let tag_sets = TagSetVocabulary::from_gold(gold.iter().flatten());
    let classes = gold
        .iter()
        .map(|s| {
            s.iter()
                .map(|a| tag_sets.class_of(a).expect("every gold set is a class"))
                .collect()
        })
        .collect();
    let vocab = CharVocab::from_tokens(
        corpus
            .sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str)),
    );
    let emitter = EmitterParams::new(
        cfg.emitter,
        vocab,
        corpus.languages().into_iter().collect(),
        tag_sets.len(),
        cfg.seed,
    );
    let mut learner = BaselineLearner {
        model: BaselineModel {
            schema: schema.clone(),
            tag_sets,
            emitter,
        },
        corpus,
        classes,
    };
    let report = run_training(&mut learner, cfg, dev, observer)?;
    Ok(Trained {
        model: learner.model,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::BpConfig;
    use crate::decode::mbr_decode;
    use crate::graph::FactorSet;
    use crate::nn::EmitterConfig;
    use crate::schema::{build_schema, PartialTags};

    fn tags(pairs: &[(&str, &str)]) -> PartialTags {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn corpus() -> Corpus {
        Corpus::new(vec![
            Sentence::annotated(
                vec!["la".into(), "casa".into(), "es".into()],
                "es",
                vec![
                    tags(&[("POS", "Det"), ("Gender", "Fem")]),
                    tags(&[("POS", "Noun"), ("Gender", "Fem")]),
                    tags(&[("POS", "Verb")]),
                ],
            ),
            Sentence::annotated(
                vec!["el".into(), "gato".into()],
                "es",
                vec![
                    tags(&[("POS", "Det"), ("Gender", "Masc")]),
                    tags(&[("POS", "Noun"), ("Gender", "Masc")]),
                ],
            ),
        ])
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 2,
            emitter: EmitterConfig {
                char_dim: 3,
                word_hidden: 4,
                word_layers: 1,
            },
            ..TrainConfig::baseline()
        }
    }

    #[test]
    fn vocabulary_deduplicates_in_order() {
        let a = TagAssignment { labels: vec![1, 0] };
        let b = TagAssignment { labels: vec![0, 2] };
        let v = TagSetVocabulary::from_gold([&a, &b, &a]);
        assert_eq!(v.len(), 2);
        assert_eq!(v.class_of(&a), Some(0));
        assert_eq!(v.class(1), &b);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<TagSetVocabulary>(&json).unwrap(), v);
    }

    #[test]
    fn single_tag_set_is_always_predicted() {
        let c = Corpus::new(vec![Sentence::annotated(
            vec!["a".into(), "b".into()],
            "xx",
            vec![tags(&[("POS", "X")]), tags(&[("POS", "X")])],
        )]);
        let schema = build_schema(&c).unwrap();
        let m = baseline_train(&c, &schema, &cfg(), None, &mut |_| {}).unwrap().model;
        assert_eq!(m.tag_sets.len(), 1);
        let pred = baseline_predict(
            &m,
            &Sentence::new(vec!["zz".into(), "q".into(), "a".into()], "xx"),
            None,
        )
        .unwrap();
        assert!(pred.iter().all(|p| p == m.tag_sets.class(0)));
    }

    #[test]
    fn baseline_output_is_always_an_observed_tag_set() {
        let c = corpus();
        let schema = build_schema(&c).unwrap();
        let m = baseline_train(&c, &schema, &cfg(), None, &mut |_| {}).unwrap().model;
        assert_eq!(m.tag_sets.len(), 5);
        let probe = Sentence::new(vec!["gata".into(), "los".into(), "e".into(), "casas".into()], "es");
        for p in baseline_predict(&m, &probe, None).unwrap() {
            assert!(m.tag_sets.contains(&p));
        }
    }

    #[test]
    fn zero_heads_pick_the_first_class() {
        let c = corpus();
        let schema = build_schema(&c).unwrap();
        let mut m = baseline_train(&c, &schema, &cfg(), None, &mut |_| {}).unwrap().model;
        m.emitter.zero_head(0);
        let pred = baseline_predict(&m, &c.sentences[0], None).unwrap();
        assert!(pred.iter().all(|p| p == m.tag_sets.class(0)));
    }

    #[test]
    fn unknown_language_without_fallback_fails() {
        let c = corpus();
        let m = baseline_train(&c, &build_schema(&c).unwrap(), &cfg(), None, &mut |_| {})
            .unwrap()
            .model;
        let s = Sentence::new(vec!["casa".into()], "pt");
        assert!(baseline_predict(&m, &s, None).is_err());
        assert!(baseline_predict(&m, &s, Some("es")).is_ok());
    }

    #[test]
    fn tagwise_matches_factor_free_decoding() {
        let c = corpus();
        let schema = build_schema(&c).unwrap();
        let m = FcrfModel::for_corpus(&c, schema, cfg().emitter, FactorSet::FULL, BpConfig::default(), 3);
        for s in &c.sentences {
            let tw = tagwise_predict(&m, s, None).unwrap();
            assert_eq!(tw, m.predict(s, None).unwrap());
            let bare = FcrfModel {
                factor_set: FactorSet::NONE,
                ..m.clone()
            };
            assert_eq!(tw, mbr_decode(&bare.beliefs(s, None).unwrap()));
        }
    }

    #[test]
    fn flat_scores_decode_to_null() {
        let c = corpus();
        let mut m = FcrfModel::for_corpus(
            &c,
            build_schema(&c).unwrap(),
            cfg().emitter,
            FactorSet::NONE,
            BpConfig::default(),
            3,
        );
        m.params.emitter.zero_head(0);
        for a in tagwise_predict(&m, &c.sentences[0], None).unwrap() {
            assert!(a.labels.iter().all(|&l| l == crate::schema::NULL));
        }
    }
}
