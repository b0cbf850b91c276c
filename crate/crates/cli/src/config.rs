//! Run configuration: defaults, then an optional JSON file, then flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use morphfg::bp::BpConfig;
use morphfg::graph::FactorSet;
use morphfg::nn::EmitterConfig;
use morphfg::optim::OptimizerKind;
use morphfg::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[default]
    Fcrf,
    Baseline,
    Tagwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub transition: bool,
    pub pairwise: bool,

    pub hrl_train: Option<PathBuf>,
    pub lrl_train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub hrl_lang: Option<String>,
    pub lrl_lang: Option<String>,
    /// Language of the dev and test sentences.
    pub eval_lang: Option<String>,
    /// `None` takes every LRL sentence.
    pub tgt_size: Option<usize>,
    pub upsample: usize,
    /// Draw the LRL subset at random instead of taking the first sentences.
    pub subsample_seed: Option<u64>,

    pub epochs: usize,
    pub batch_size: usize,
    /// `None` picks Adam for the factor models and SGD for the baseline.
    pub optimizer: Option<OptimizerKind>,
    pub lr: Option<f64>,
    pub seed: u64,
    pub dropout: f64,
    pub clip: Option<f64>,
    pub workers: Option<usize>,
    pub char_dim: usize,
    pub word_hidden: usize,
    pub word_layers: usize,

    pub bp_threshold: f64,
    pub bp_max_iters: usize,
    pub lang_fallback: Option<String>,

    pub model_file: Option<PathBuf>,
    /// Line-JSON metrics log; defaults to the model path with a
    /// `.metrics.jsonl` suffix.
    pub metrics: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let bp = BpConfig::default();
        RunConfig {
            model: ModelChoice::Fcrf,
            transition: true,
            pairwise: true,
            hrl_train: None,
            lrl_train: None,
            dev: None,
            test: None,
            hrl_lang: None,
            lrl_lang: None,
            eval_lang: None,
            tgt_size: None,
            upsample: 1,
            subsample_seed: None,
            epochs: train.epochs,
            batch_size: train.batch_size,
            optimizer: None,
            lr: None,
            seed: train.seed,
            dropout: train.dropout,
            clip: None,
            workers: None,
            char_dim: train.emitter.char_dim,
            word_hidden: train.emitter.word_hidden,
            word_layers: train.emitter.word_layers,
            bp_threshold: bp.residual_threshold,
            bp_max_iters: bp.max_iterations,
            lang_fallback: None,
            model_file: None,
            metrics: None,
        }
    }
}

/// Flags shared by every command that trains.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// JSON run configuration; flags given here override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Drop the per-tag transition factors.
    #[arg(long)]
    pub no_transition: bool,
    /// Drop the pairwise factors between tags of the same token.
    #[arg(long)]
    pub no_pairwise: bool,

    /// High-resource (or only) training treebank.
    #[arg(long, visible_alias = "train", value_name = "CONLLU")]
    pub hrl_train: Option<PathBuf>,
    #[arg(long, value_name = "CONLLU")]
    pub lrl_train: Option<PathBuf>,
    #[arg(long, value_name = "CONLLU")]
    pub dev: Option<PathBuf>,
    #[arg(long, value_name = "CONLLU")]
    pub test: Option<PathBuf>,
    /// Language ID of the HRL file; defaults to its file-name prefix.
    #[arg(long)]
    pub hrl_lang: Option<String>,
    #[arg(long)]
    pub lrl_lang: Option<String>,
    /// Language ID of dev and test sentences; defaults to the LRL, else the HRL.
    #[arg(long)]
    pub eval_lang: Option<String>,
    /// Number of LRL sentences to train on.
    #[arg(long)]
    pub tgt_size: Option<usize>,
    /// Repetitions of the selected LRL sentences.
    #[arg(long)]
    pub upsample: Option<usize>,
    /// Pick the LRL sentences at random with this seed.
    #[arg(long)]
    pub subsample_seed: Option<u64>,

    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Global gradient-norm bound.
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub char_dim: Option<usize>,
    #[arg(long)]
    pub word_hidden: Option<usize>,
    #[arg(long)]
    pub word_layers: Option<usize>,

    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

/// Flags shared by every command, including inference.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonFlags {
    #[arg(long, value_name = "FILE")]
    pub model_file: Option<PathBuf>,
    /// Worker threads; defaults to every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// BP stops once no message changes by more than this.
    #[arg(long)]
    pub bp_threshold: Option<f64>,
    #[arg(long)]
    pub bp_max_iters: Option<usize>,
    /// Known language whose parameters tag sentences of unseen languages.
    #[arg(long)]
    pub lang_fallback: Option<String>,
    /// Machine-readable output on stdout.
    #[arg(long)]
    pub json: bool,
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse().map_err(|e: morphfg::Error| e.to_string())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::read(path, source))?;
        serde_json::from_str(&text).map_err(|source| CliError::Config {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn resolve(run: &RunFlags, common: &CommonFlags) -> CliResult<Self> {
        let mut cfg = match &run.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.model, run.model);
        if run.no_transition {
            cfg.transition = false;
        }
        if run.no_pairwise {
            cfg.pairwise = false;
        }
        set_opt(&mut cfg.hrl_train, run.hrl_train.clone());
        set_opt(&mut cfg.lrl_train, run.lrl_train.clone());
        set_opt(&mut cfg.dev, run.dev.clone());
        set_opt(&mut cfg.test, run.test.clone());
        set_opt(&mut cfg.hrl_lang, run.hrl_lang.clone());
        set_opt(&mut cfg.lrl_lang, run.lrl_lang.clone());
        set_opt(&mut cfg.eval_lang, run.eval_lang.clone());
        set_opt(&mut cfg.tgt_size, run.tgt_size);
        set(&mut cfg.upsample, run.upsample);
        set_opt(&mut cfg.subsample_seed, run.subsample_seed);
        set(&mut cfg.epochs, run.epochs);
        set(&mut cfg.batch_size, run.batch_size);
        set_opt(&mut cfg.optimizer, run.optimizer);
        set_opt(&mut cfg.lr, run.lr);
        set(&mut cfg.seed, run.seed);
        set(&mut cfg.dropout, run.dropout);
        set_opt(&mut cfg.clip, run.clip);
        set(&mut cfg.char_dim, run.char_dim);
        set(&mut cfg.word_hidden, run.word_hidden);
        set(&mut cfg.word_layers, run.word_layers);
        set_opt(&mut cfg.metrics, run.metrics.clone());

        set_opt(&mut cfg.model_file, common.model_file.clone());
        set_opt(&mut cfg.workers, common.workers);
        set(&mut cfg.bp_threshold, common.bp_threshold);
        set(&mut cfg.bp_max_iters, common.bp_max_iters);
        set_opt(&mut cfg.lang_fallback, common.lang_fallback.clone());

        if cfg.optimizer.is_none() {
            cfg.optimizer = Some(match cfg.model {
                ModelChoice::Baseline => OptimizerKind::Sgd,
                _ => OptimizerKind::Adam,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if self.model == ModelChoice::Baseline && !(self.transition && self.pairwise) {
            return Err(CliError::usage(
                "--no-transition and --no-pairwise apply only to --model fcrf",
            ));
        }
        if self.lrl_train.is_none() && (self.tgt_size.is_some() || self.upsample != 1) {
            return Err(CliError::usage("--tgt-size and --upsample need --lrl-train"));
        }
        if self.upsample == 0 {
            return Err(CliError::usage("--upsample must be at least 1"));
        }
        self.train_config().validate()?;
        self.bp_config().validate()?;
        Ok(())
    }

    pub fn factor_set(&self) -> FactorSet {
        match self.model {
            ModelChoice::Tagwise => FactorSet::NONE,
            _ => FactorSet {
                transition: self.transition,
                pairwise: self.pairwise,
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer.unwrap_or(OptimizerKind::Adam),
            learning_rate: self.lr,
            seed: self.seed,
            dropout: self.dropout,
            clip: self.clip,
            workers: self.workers,
            emitter: EmitterConfig {
                char_dim: self.char_dim,
                word_hidden: self.word_hidden,
                word_layers: self.word_layers,
            },
        }
    }

    pub fn bp_config(&self) -> BpConfig {
        BpConfig {
            residual_threshold: self.bp_threshold,
            max_iterations: self.bp_max_iters,
        }
    }

    pub fn metrics_path(&self) -> Option<PathBuf> {
        self.metrics.clone().or_else(|| {
            self.model_file.as_ref().map(|m| {
                let mut name = m.clone().into_os_string();
                name.push(".metrics.jsonl");
                PathBuf::from(name)
            })
        })
    }
}

/// `fi_tdt-ud-train.conllu` → `fi`.
pub fn language_from_path(path: &Path) -> String {
    let stem = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.split(['_', '-', '.']).next().unwrap_or_default().to_string()
}
