//! Mini-batch training shared by the FCRF and the tag-set baseline.
//!
//! Within a batch, per-sentence gradients are computed in parallel over fixed
//! chunks and summed in chunk order, so results do not depend on the number
//! of worker threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::BpConfig;
use crate::error::{Error, Result};
use crate::eval::evaluate_corpus;
use crate::fcrf::FcrfModel;
use crate::graph::FactorSet;
use crate::nn::{Dropout, EmitterConfig};
use crate::optim::{clip_global_norm, optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
use crate::params::Parameters;
use crate::schema::{Corpus, TagAssignment, TagSchema};

/// Sentences per parallel work unit.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// `None` picks the optimizer's default.
    pub learning_rate: Option<f64>,
    pub seed: u64,
    pub dropout: f64,
    /// Global L2 norm bound on the batch gradient.
    pub clip: Option<f64>,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub emitter: EmitterConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            learning_rate: None,
            seed: 1,
            dropout: 0.2,
            clip: None,
            workers: None,
            emitter: EmitterConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for the tag-set baseline, which trains with SGD.
    pub fn baseline() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::default()
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
            .unwrap_or_else(|| self.optimizer.default_learning_rate())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        let lr = self.learning_rate();
        if !lr.is_finite() || lr <= 0.0 {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if matches!(self.clip, Some(c) if c.is_nan() || c <= 0.0) {
            return bad("clip norm must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if self.emitter.char_dim == 0 || self.emitter.word_hidden == 0 || self.emitter.word_layers == 0 {
            return bad("emitter dimensions must be positive");
        }
        Ok(())
    }

    pub(crate) fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig::new(self.optimizer, self.learning_rate())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevMetrics {
    pub token_accuracy: f64,
    pub f1_macro: f64,
    pub f1_micro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-sentence negative log-likelihood seen during the epoch.
    pub train_loss: f64,
    /// Sentences whose BP run hit the iteration limit.
    pub unconverged: usize,
    pub dev: Option<DevMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept, when a dev set drove selection.
    pub selected_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub report: TrainReport,
}

pub(crate) struct ExampleStats {
    pub nll: f64,
    pub converged: bool,
}

/// A model together with its training examples.
pub(crate) trait Learner: Send + Sync {
    type Params: Parameters + Clone + Send + Sync;

    fn params(&self) -> &Self::Params;
    fn params_mut(&mut self) -> &mut Self::Params;
    fn num_examples(&self) -> usize;
    /// Accumulates the log-likelihood gradient of training example `index`.
    fn accumulate(
        &self,
        index: usize,
        dropout: Option<Dropout<'_, ChaCha8Rng>>,
        grad: &mut Self::Params,
    ) -> Result<ExampleStats>;
    fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<Vec<TagAssignment>>>;
    fn schema(&self) -> &TagSchema;
}

fn zeros_like<P: Parameters + Clone>(p: &P) -> P {
    let mut z = p.clone();
    z.fill_zero();
    z
}

/// Dropout stream for one example in one epoch, independent of batch layout.
fn dropout_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + ((epoch as u64) << 32 | index as u64));
    rng
}

pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub(crate) fn run_training<L: Learner>(
    learner: &mut L,
    cfg: &TrainConfig,
    dev: Option<&Corpus>,
    observer: &mut (dyn FnMut(&EpochMetrics) + Send),
) -> Result<TrainReport> {
    cfg.validate()?;
    if learner.num_examples() == 0 {
        return Err(Error::NoTrainingData);
    }
    with_workers(cfg.workers, || training_loop(learner, cfg, dev, observer))?
}

fn training_loop<L: Learner>(
    learner: &mut L,
    cfg: &TrainConfig,
    dev: Option<&Corpus>,
    observer: &mut (dyn FnMut(&EpochMetrics) + Send),
) -> Result<TrainReport> {
    let opt = cfg.optimizer_config();
    let mut state = OptimizerState::default();
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..learner.num_examples()).collect();

    if let Some(d) = dev {
        // fail before the first epoch on unannotated dev data
        learner.schema().extended_with(d).complete_corpus(d)?;
    }

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, L::Params)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total_loss = 0.0;
        let mut unconverged = 0;
        for batch in order.chunks(cfg.batch_size) {
            let learner_ref = &*learner;
            let parts: Vec<Result<(L::Params, f64, usize)>> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grad = zeros_like(learner_ref.params());
                    let mut loss = 0.0;
                    let mut missed = 0;
                    for &index in chunk {
                        let mut rng = dropout_rng(cfg.seed, epoch, index);
                        let dropout = (cfg.dropout > 0.0).then_some(Dropout {
                            rate: cfg.dropout,
                            rng: &mut rng,
                        });
                        let stats = learner_ref.accumulate(index, dropout, &mut grad)?;
                        if !stats.nll.is_finite() || !grad.all_finite() {
                            return Err(Error::NonFinite { sentence: index });
                        }
                        loss += stats.nll;
                        missed += usize::from(!stats.converged);
                    }
                    Ok((grad, loss, missed))
                })
                .collect();
            let mut grad: Option<L::Params> = None;
            for part in parts {
                let (g, loss, missed) = part?;
                total_loss += loss;
                unconverged += missed;
                match grad.as_mut() {
                    None => grad = Some(g),
                    Some(acc) => acc.add_assign(&g),
                }
            }
            let mut grad = grad.expect("batches are non-empty");
            grad.scale(1.0 / batch.len() as f64);
            if let Some(max_norm) = cfg.clip {
                clip_global_norm(&mut grad, max_norm);
            }
            optimizer_step(learner.params_mut(), &grad, &mut state, &opt);
        }

        let dev_metrics = match dev {
            Some(corpus) => {
                let pred = learner.predict_corpus(corpus)?;
                let r = evaluate_corpus(&pred, corpus, learner.schema())?;
                Some(DevMetrics {
                    token_accuracy: r.token_accuracy,
                    f1_macro: r.f1_macro,
                    f1_micro: r.f1_micro,
                })
            }
            None => None,
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss: total_loss / learner.num_examples() as f64,
            unconverged,
            dev: dev_metrics,
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4}, unconverged {unconverged}{}",
            cfg.epochs,
            metrics.train_loss,
            dev_metrics.map_or(String::new(), |d| format!(
                ", dev accuracy {:.4}, dev F1 micro {:.4}",
                d.token_accuracy, d.f1_micro
            ))
        );
        observer(&metrics);
        if let Some(d) = dev_metrics {
            if best.as_ref().is_none_or(|(f1, _, _)| d.f1_micro > *f1) {
                best = Some((d.f1_micro, epoch, learner.params().clone()));
            }
        }
        epochs.push(metrics);
    }

    let selected_epoch = best.map(|(_, epoch, params)| {
        *learner.params_mut() = params;
        epoch
    });
    Ok(TrainReport { epochs, selected_epoch })
}

struct FcrfLearner<'a> {
    model: FcrfModel,
    corpus: &'a Corpus,
    gold: Vec<Vec<TagAssignment>>,
}

impl Learner for FcrfLearner<'_> {
    type Params = crate::fcrf::ModelParams;

    fn params(&self) -> &Self::Params {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut Self::Params {
        &mut self.model.params
    }

    fn num_examples(&self) -> usize {
        self.corpus.len()
    }

    fn accumulate(
        &self,
        index: usize,
        dropout: Option<Dropout<'_, ChaCha8Rng>>,
        grad: &mut Self::Params,
    ) -> Result<ExampleStats> {
        let stats = self
            .model
            .accumulate_gradient(&self.corpus.sentences[index], &self.gold[index], dropout, grad)?;
        Ok(ExampleStats {
            nll: stats.nll,
            converged: stats.converged,
        })
    }

    fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<Vec<TagAssignment>>> {
        self.model.predict_corpus(corpus, None)
    }

    fn schema(&self) -> &TagSchema {
        &self.model.schema
    }
}

/// Trains a fresh FCRF (or, with [`FactorSet::NONE`], the tag-wise model) on
/// `corpus`. With a dev corpus, the parameters of the epoch with the best dev
/// F1-micro are returned.
pub fn train(
    corpus: &Corpus,
    schema: &TagSchema,
    factor_set: FactorSet,
    bp: BpConfig,
    cfg: &TrainConfig,
    dev: Option<&Corpus>,
    observer: &mut (dyn FnMut(&EpochMetrics) + Send),
) -> Result<Trained<FcrfModel>> {
    cfg.validate()?;
    bp.validate()?;
    if corpus.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let model = FcrfModel::for_corpus(corpus, schema.clone(), cfg.emitter, factor_set, bp, cfg.seed);
    train_model(model, corpus, cfg, dev, observer)
}

/// Continues training an existing model.
pub fn train_model(
    model: FcrfModel,
    corpus: &Corpus,
    cfg: &TrainConfig,
    dev: Option<&Corpus>,
    observer: &mut (dyn FnMut(&EpochMetrics) + Send),
) -> Result<Trained<FcrfModel>> {
    let gold = model.schema.complete_corpus(corpus)?;
    let mut learner = FcrfLearner { model, corpus, gold };
    let report = run_training(&mut learner, cfg, dev, observer)?;
    Ok(Trained {
        model: learner.model,
        report,
    })
}

/// Mean per-sentence surrogate negative log-likelihood, without dropout.
pub fn corpus_nll(model: &FcrfModel, corpus: &Corpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let gold = model.schema.complete_corpus(corpus)?;
    let lls: Vec<f64> = corpus
        .sentences
        .par_iter()
        .zip(&gold)
        .map(|(s, g)| model.log_likelihood(s, g))
        .collect::<Result<_>>()?;
    Ok(-lls.iter().sum::<f64>() / corpus.len() as f64)
}
