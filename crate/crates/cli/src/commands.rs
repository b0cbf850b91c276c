use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use morphfg::baseline::baseline_train;
use morphfg::conllu::{make_training_mixture, parse_conllu, write_conllu, write_predictions, SplitConfig, Subsample};
use morphfg::eval::{evaluate_corpus, EvalReport};
use morphfg::export::{export_weights, Scope, WeightKind};
use morphfg::graph::FactorSet;
use morphfg::model::{Model, ModelFile};
use morphfg::schema::{build_schema, Corpus};
use morphfg::synth;
use morphfg::train::{train, EpochMetrics, TrainReport};
use serde_json::json;

use crate::config::{language_from_path, CommonFlags, ModelChoice, RunConfig, RunFlags};
use crate::error::{with_hint, CliError, CliResult};

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::write(path, e))
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => write_text(path, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| CliError::write(Path::new("<stdout>"), e))
        }
    }
}

fn read_corpus(path: &Path, language: &str) -> CliResult<Corpus> {
    let corpus = parse_conllu(&read_text(path)?, language).map_err(|e| CliError::in_file(path, e))?;
    log::info!(
        "read {} sentences ({} tokens) from {}",
        corpus.len(),
        corpus.num_tokens(),
        path.display()
    );
    Ok(corpus)
}

fn init_workers(workers: Option<usize>) {
    if let Some(n) = workers {
        // a second call within one process fails harmlessly
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_model(path: Option<&PathBuf>, common: &CommonFlags) -> CliResult<ModelFile> {
    let path = path.ok_or_else(|| CliError::usage("this command needs --model-file"))?;
    let mut file = ModelFile::load(path).map_err(|e| match e {
        morphfg::Error::Io(source) => CliError::read(path, source),
        other => CliError::in_file(path, other),
    })?;
    if let Model::Fcrf(m) = &mut file.model {
        if let Some(t) = common.bp_threshold {
            m.bp.residual_threshold = t;
        }
        if let Some(n) = common.bp_max_iters {
            m.bp.max_iterations = n;
        }
        m.bp.validate()?;
    }
    log::info!("loaded {} model from {}", file.model.kind(), path.display());
    Ok(file)
}

struct Data {
    train: Corpus,
    dev: Option<Corpus>,
    test: Option<Corpus>,
}

fn load_data(cfg: &RunConfig) -> CliResult<Data> {
    let hrl_path = cfg
        .hrl_train
        .as_ref()
        .ok_or_else(|| CliError::usage("training needs --hrl-train"))?;
    let hrl_lang = cfg.hrl_lang.clone().unwrap_or_else(|| language_from_path(hrl_path));
    let hrl = read_corpus(hrl_path, &hrl_lang)?;
    let (train, eval_default) = match &cfg.lrl_train {
        None => (hrl, hrl_lang),
        Some(lrl_path) => {
            let lrl_lang = cfg.lrl_lang.clone().unwrap_or_else(|| language_from_path(lrl_path));
            if lrl_lang == hrl_lang {
                return Err(CliError::usage(format!(
                    "HRL and LRL both have language ID `{hrl_lang}`; set --hrl-lang and --lrl-lang"
                )));
            }
            let lrl = read_corpus(lrl_path, &lrl_lang)?;
            let split = SplitConfig {
                tgt_size: cfg.tgt_size.unwrap_or(lrl.len()),
                upsample_factor: cfg.upsample,
                hrl_language: hrl_lang,
                lrl_language: lrl_lang.clone(),
                subsample: cfg
                    .subsample_seed
                    .map_or(Subsample::First, |seed| Subsample::Random { seed }),
            };
            let mixture = make_training_mixture(&hrl, &lrl, &split)?;
            log::info!("training mixture: {} sentences", mixture.len());
            (mixture, lrl_lang)
        }
    };
    let eval_lang = cfg.eval_lang.clone().unwrap_or(eval_default);
    let dev = cfg.dev.as_deref().map(|p| read_corpus(p, &eval_lang)).transpose()?;
    let test = cfg.test.as_deref().map(|p| read_corpus(p, &eval_lang)).transpose()?;
    Ok(Data { train, dev, test })
}

/// Line-JSON log. The first write error is kept and reported after training.
struct MetricsLog {
    path: Option<PathBuf>,
    out: Option<BufWriter<File>>,
    error: Option<io::Error>,
}

impl MetricsLog {
    fn create(path: Option<PathBuf>) -> CliResult<Self> {
        let out = match &path {
            Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| CliError::write(p, e))?)),
            None => None,
        };
        Ok(MetricsLog { path, out, error: None })
    }

    fn write(&mut self, value: serde_json::Value) {
        if let (Some(out), None) = (&mut self.out, &self.error) {
            if let Err(e) = writeln!(out, "{value}") {
                self.error = Some(e);
            }
        }
    }

    fn finish(mut self) -> CliResult<()> {
        if let Some(out) = &mut self.out {
            if let Err(e) = out.flush() {
                self.error.get_or_insert(e);
            }
        }
        match (self.error, self.path) {
            (Some(e), Some(p)) => Err(CliError::write(&p, e)),
            _ => Ok(()),
        }
    }
}

fn fit(
    cfg: &RunConfig,
    factor_set: FactorSet,
    data: &Data,
    label: &str,
    metrics: &mut MetricsLog,
) -> CliResult<(Model, TrainReport)> {
    let schema = build_schema(&data.train)?;
    let tc = cfg.train_config();
    let mut observer = |m: &EpochMetrics| {
        let mut line = serde_json::to_value(m).expect("metrics serialize");
        line["event"] = json!("epoch");
        line["variant"] = json!(label);
        metrics.write(line);
    };
    let dev = data.dev.as_ref();
    let (model, report) = match cfg.model {
        ModelChoice::Baseline => {
            let t = baseline_train(&data.train, &schema, &tc, dev, &mut observer).map_err(with_hint)?;
            (Model::Baseline(t.model), t.report)
        }
        _ => {
            let t = train(
                &data.train,
                &schema,
                factor_set,
                cfg.bp_config(),
                &tc,
                dev,
                &mut observer,
            )
            .map_err(with_hint)?;
            (Model::Fcrf(t.model), t.report)
        }
    };
    if let Some(e) = report.selected_epoch {
        log::info!("kept parameters from epoch {e}");
    }
    Ok((model, report))
}

fn log_config(cfg: &RunConfig) -> serde_json::Value {
    let value = serde_json::to_value(cfg).expect("config serializes");
    log::info!("resolved config: {value}");
    value
}

pub fn train_command(run: &RunFlags, common: &CommonFlags) -> CliResult<()> {
    let cfg = RunConfig::resolve(run, common)?;
    let model_path = cfg
        .model_file
        .clone()
        .ok_or_else(|| CliError::usage("train needs --model-file to save the model"))?;
    let config = log_config(&cfg);
    init_workers(cfg.workers);
    let data = load_data(&cfg)?;

    let mut metrics = MetricsLog::create(cfg.metrics_path())?;
    metrics.write(json!({"event": "config", "config": config}));
    let kind = match cfg.model {
        ModelChoice::Baseline => "baseline",
        ModelChoice::Tagwise => "tagwise",
        ModelChoice::Fcrf => "fcrf",
    };
    let (model, report) = fit(&cfg, cfg.factor_set(), &data, kind, &mut metrics)?;
    let file = ModelFile::new(model, config);
    file.save(&model_path).map_err(|e| match e {
        morphfg::Error::Io(source) => CliError::write(&model_path, source),
        other => CliError::Core(other),
    })?;
    log::info!("saved model to {}", model_path.display());

    let test = match &data.test {
        Some(test) => {
            let pred = file
                .model
                .predict_corpus(test, cfg.lang_fallback.as_deref())
                .map_err(with_hint)?;
            let r = evaluate_corpus(&pred, test, file.model.schema())?;
            metrics.write(json!({"event": "test", "report": r}));
            Some(r)
        }
        None => None,
    };
    metrics.write(json!({"event": "done", "selected_epoch": report.selected_epoch}));
    metrics.finish()?;

    if common.json {
        emit(None, &format!("{}\n", json!({"report": report, "test": test})))?;
    } else if let Some(r) = test {
        emit(None, &r.to_string())?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TagArgs {
    /// CoNLL-U file to tag; existing UPOS and FEATS are replaced.
    #[arg(long, value_name = "CONLLU")]
    pub input: PathBuf,
    /// Language ID of the input; defaults to its file-name prefix.
    #[arg(long)]
    pub lang: Option<String>,
    /// Defaults to stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn tag_command(args: &TagArgs, common: &CommonFlags) -> CliResult<()> {
    init_workers(common.workers);
    let file = load_model(common.model_file.as_ref(), common)?;
    let lang = args.lang.clone().unwrap_or_else(|| language_from_path(&args.input));
    let corpus = read_corpus(&args.input, &lang)?;
    let pred = file
        .model
        .predict_corpus(&corpus, common.lang_fallback.as_deref())
        .map_err(with_hint)?;
    let schema = file.model.schema();
    let mut out = String::new();
    for (sentence, tags) in corpus.sentences.iter().zip(&pred) {
        let partial: Vec<_> = tags.iter().map(|a| schema.to_partial(a)).collect();
        write_predictions(sentence, &partial, &mut out);
    }
    emit(args.output.as_deref(), &out)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Gold CoNLL-U file.
    #[arg(long, visible_alias = "gold", value_name = "CONLLU")]
    pub test: PathBuf,
    /// Score this prediction file instead of running a model.
    #[arg(long, value_name = "CONLLU", conflicts_with = "model_file")]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub lang: Option<String>,
    /// Also write the JSON report here.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn eval_command(args: &EvalArgs, common: &CommonFlags) -> CliResult<()> {
    init_workers(common.workers);
    let lang = args.lang.clone().unwrap_or_else(|| language_from_path(&args.test));
    let gold = read_corpus(&args.test, &lang)?;
    let report = match &args.pred {
        Some(pred_path) => {
            let pred = read_corpus(pred_path, &lang)?;
            score_files(&pred, &gold)?
        }
        None => {
            let file = load_model(common.model_file.as_ref(), common)?;
            let pred = file
                .model
                .predict_corpus(&gold, common.lang_fallback.as_deref())
                .map_err(with_hint)?;
            evaluate_corpus(&pred, &gold, file.model.schema())?
        }
    };
    let json_text = report.to_json()?;
    if let Some(path) = &args.output {
        write_text(path, &format!("{json_text}\n"))?;
    }
    if common.json {
        emit(None, &format!("{json_text}\n"))
    } else {
        emit(None, &report.to_string())
    }
}

fn score_files(pred: &Corpus, gold: &Corpus) -> CliResult<EvalReport> {
    if pred.len() != gold.len() {
        return Err(CliError::usage(format!(
            "prediction file has {} sentences, gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    for (i, (p, g)) in pred.sentences.iter().zip(&gold.sentences).enumerate() {
        if p.tokens != g.tokens {
            return Err(CliError::usage(format!(
                "sentence {} has different tokens in prediction and gold",
                i + 1
            )));
        }
    }
    let schema = build_schema(pred)?;
    let extended = schema.extended_with(gold);
    let pred = extended.complete_corpus(pred)?;
    Ok(evaluate_corpus(&pred, gold, &extended)?)
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Transition weights of one tag type.
    #[arg(
        long,
        value_name = "TAG",
        required_unless_present = "pairwise",
        conflicts_with = "pairwise"
    )]
    pub transition: Option<String>,
    /// Pairwise weights between two tag types, in schema order.
    #[arg(long, num_args = 2, value_names = ["FIRST", "SECOND"])]
    pub pairwise: Option<Vec<String>>,
    /// `gen`, `lang:<id>` or `sum:<id>`.
    #[arg(long, default_value = "gen")]
    pub scope: String,
    /// Defaults to stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn export_command(args: &ExportArgs, common: &CommonFlags) -> CliResult<()> {
    let file = load_model(common.model_file.as_ref(), common)?;
    let Model::Fcrf(model) = &file.model else {
        return Err(CliError::usage("the baseline has no factor weights to export"));
    };
    let what = match (&args.transition, &args.pairwise) {
        (Some(tag), _) => WeightKind::Transition { tag: tag.clone() },
        (None, Some(pair)) => WeightKind::Pairwise {
            first: pair[0].clone(),
            second: pair[1].clone(),
        },
        (None, None) => return Err(CliError::usage("pass --transition TAG or --pairwise FIRST SECOND")),
    };
    let scope: Scope = args.scope.parse()?;
    let matrix = export_weights(model, &what, &scope)?;
    emit(args.output.as_deref(), &matrix.to_csv()?)
}

const VARIANTS: [(&str, FactorSet); 4] = [
    ("fcrf", FactorSet::FULL),
    (
        "transition only",
        FactorSet {
            transition: true,
            pairwise: false,
        },
    ),
    (
        "pairwise only",
        FactorSet {
            transition: false,
            pairwise: true,
        },
    ),
    ("tagwise", FactorSet::NONE),
];

pub fn ablate_command(run: &RunFlags, common: &CommonFlags) -> CliResult<()> {
    let cfg = RunConfig::resolve(run, common)?;
    if cfg.model != ModelChoice::Fcrf || !(cfg.transition && cfg.pairwise) {
        return Err(CliError::usage(
            "ablate trains all four factor variants itself; drop --model and --no-* flags",
        ));
    }
    let config = log_config(&cfg);
    init_workers(cfg.workers);
    let data = load_data(&cfg)?;
    let test = data
        .test
        .as_ref()
        .ok_or_else(|| CliError::usage("ablate needs --test"))?;
    let mut metrics = MetricsLog::create(cfg.metrics.clone())?;
    metrics.write(json!({"event": "config", "config": config}));

    let mut rows = Vec::new();
    for (name, set) in VARIANTS {
        log::info!("training variant: {name}");
        let (model, _) = fit(&cfg, set, &data, name, &mut metrics)?;
        let pred = model
            .predict_corpus(test, cfg.lang_fallback.as_deref())
            .map_err(with_hint)?;
        let r = evaluate_corpus(&pred, test, model.schema())?;
        metrics.write(json!({"event": "test", "variant": name, "report": r}));
        rows.push((name, r));
    }
    metrics.finish()?;

    let mut out = String::new();
    if common.json {
        for (name, r) in &rows {
            let line = json!({
                "variant": name,
                "token_accuracy": r.token_accuracy,
                "f1_micro": r.f1_micro,
                "f1_macro": r.f1_macro,
            });
            out.push_str(&format!("{line}\n"));
        }
    } else {
        out.push_str(&format!(
            "{:<16}  {:>8}  {:>8}  {:>8}\n",
            "variant", "accuracy", "F1 micro", "F1 macro"
        ));
        for (name, r) in &rows {
            out.push_str(&format!(
                "{name:<16}  {:>8.4}  {:>8.4}  {:>8.4}\n",
                r.token_accuracy, r.f1_micro, r.f1_macro
            ));
        }
    }
    emit(None, &out)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    /// One tag type following a Markov chain.
    Chain,
    /// Gender and number agreement inside noun phrases.
    Agreement,
    /// Two tag types whose combination (a2, b2) appears only in test data.
    Unseen,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 100)]
    pub sentences: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Language ID recorded on the generated sentences.
    #[arg(long, default_value = "xx")]
    pub lang: String,
    /// Size of the held-out split for `--kind unseen`.
    #[arg(long, default_value_t = 20)]
    pub test_sentences: usize,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Held-out file for `--kind unseen`.
    #[arg(long, value_name = "FILE")]
    pub test_output: Option<PathBuf>,
}

pub fn synth_command(args: &SynthArgs) -> CliResult<()> {
    match args.kind {
        SynthKind::Chain => {
            let corpus = synth::chain_corpus(args.sentences, args.seed, &args.lang);
            write_text(&args.output, &write_conllu(&corpus))
        }
        SynthKind::Agreement => {
            let corpus = synth::agreement_corpus(args.sentences, args.seed, &args.lang);
            write_text(&args.output, &write_conllu(&corpus))
        }
        SynthKind::Unseen => {
            let test_path = args
                .test_output
                .as_ref()
                .ok_or_else(|| CliError::usage("--kind unseen needs --test-output for the held-out split"))?;
            let (train, test) =
                synth::unseen_combination_corpus(args.sentences, args.test_sentences, args.seed, &args.lang);
            write_text(&args.output, &write_conllu(&train))?;
            write_text(test_path, &write_conllu(&test))
        }
    }
}
