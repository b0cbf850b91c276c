//! Acceptance suite. Every criterion runs in one test so the timing bounds are
//! measured without other tests competing for cores. Each prints one
//! PASS/FAIL line to stderr, bypassing the test harness's output capture.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use morphfg::baseline::{baseline_predict, baseline_train};
use morphfg::bp::{BpConfig, LogPotentials, LoopyBp};
use morphfg::decode::mbr_decode;
use morphfg::eval::{evaluate, evaluate_corpus, f1_scores, token_accuracy};
use morphfg::fcrf::FcrfModel;
use morphfg::graph::{Factor, FactorGraph, FactorSet};
use morphfg::nn::{CharVocab, EmitterConfig};
use morphfg::params::Parameters;
use morphfg::schema::{build_schema, Corpus, PartialTags, Sentence, TagAssignment, TagSchema, TagType};
use morphfg::synth::{agreement_corpus, unseen_combination_corpus};
use morphfg::train::{train, TrainConfig};
use morphfg_oracle::{central_difference, Instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// First index of the largest entry.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn report(id: &str, title: &str, o: &Outcome) {
    let line = format!(
        "{} criterion {id}: {title} ({})\n",
        if o.passed { "PASS" } else { "FAIL" },
        o.detail
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn engine_view(inst: &Instance) -> (FactorGraph, LogPotentials) {
    let table = |rows: &Vec<Vec<f64>>| {
        let cols = rows[0].len();
        ndarray::Array2::from_shape_fn((rows.len(), cols), |(a, b)| rows[a][b])
    };
    let set = FactorSet {
        transition: !inst.transition.is_empty(),
        pairwise: !inst.pairwise.is_empty(),
    };
    let graph = FactorGraph::new(inst.length, inst.num_tags(), set).unwrap();
    let potentials = LogPotentials {
        unary: inst.unary.clone(),
        pairwise: inst.pairwise.iter().map(table).collect(),
        transition: inst.transition.iter().map(table).collect(),
    };
    (graph, potentials)
}

fn acyclic_instances() -> Vec<Instance> {
    let mut r = rng(2024);
    (0..200)
        .map(|_| {
            let length = r.gen_range(1..=5);
            let labels = r.gen_range(2..=4);
            let mut sample = || r.gen_range(-2.0..2.0);
            Instance::random(length, vec![labels], false, true, &mut sample)
        })
        .collect()
}

fn bp_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut unconverged = 0;
    for inst in acyclic_instances() {
        let (graph, potentials) = engine_view(&inst);
        let b = LoopyBp::new(&graph, potentials)
            .unwrap()
            .run(&BpConfig::default())
            .unwrap();
        if !b.converged {
            unconverged += 1;
        }
        let exact = inst.marginals();
        for (v, belief) in b.variables.iter().enumerate() {
            worst = worst.max(max_gap(belief, &exact.variables[v]));
        }
        for (f, factor) in graph.factors().iter().enumerate() {
            let reference = match *factor {
                Factor::Neural { var } => exact.variables[graph.variable_index(var)].clone(),
                Factor::Transition { t, m } => exact.transition[t][m].concat(),
                Factor::Pairwise { t, pair, .. } => exact.pairwise[t][pair].concat(),
            };
            let ours: Vec<f64> = b.factors[f].iter().copied().collect();
            worst = worst.max(max_gap(&ours, &reference));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-8 && unconverged == 0 && elapsed < Duration::from_secs(5),
        format!("max L-inf gap {worst:.2e}, unconverged {unconverged}, {:.2?}", elapsed),
    )
}

fn loopy_sanity() -> Outcome {
    let mut r = rng(77);
    let cfg = BpConfig::default();
    let (mut converged, mut worst_norm, mut l1_total, mut variables) = (0, 0.0f64, 0.0, 0);
    let total = 50;
    for _ in 0..total {
        let length = r.gen_range(2..=3);
        let num_tags = r.gen_range(2..=3);
        let domains: Vec<usize> = (0..num_tags).map(|_| r.gen_range(2..=3)).collect();
        let mut sample = || r.gen_range(-1.0..1.0);
        let inst = Instance::random(length, domains, true, true, &mut sample);
        let (graph, potentials) = engine_view(&inst);
        let b = LoopyBp::new(&graph, potentials).unwrap().run(&cfg).unwrap();
        if b.converged && b.iterations <= cfg.max_iterations {
            converged += 1;
        }
        for belief in &b.variables {
            worst_norm = worst_norm.max((belief.iter().sum::<f64>() - 1.0).abs());
        }
        for table in &b.factors {
            worst_norm = worst_norm.max((table.sum() - 1.0).abs());
        }
        let exact = inst.marginals();
        for (v, belief) in b.variables.iter().enumerate() {
            l1_total += belief
                .iter()
                .zip(&exact.variables[v])
                .map(|(a, e)| (a - e).abs())
                .sum::<f64>();
            variables += 1;
        }
    }
    outcome(
        converged * 10 >= total * 9 && worst_norm <= 1e-8,
        format!(
            "{converged}/{total} converged, normalization error {worst_norm:.1e}, mean per-variable L1 gap {:.4}",
            l1_total / variables as f64
        ),
    )
}

/// Oracle instance holding the model's potentials for `sentence`.
fn model_instance(model: &FcrfModel, sentence: &Sentence) -> Instance {
    let e = model.emissions(sentence, &sentence.language).unwrap();
    let w = &model.params.factors;
    let lang = w.language_index(&sentence.language).unwrap();
    let rows = |a: ndarray::Array2<f64>| -> Vec<Vec<f64>> { a.rows().into_iter().map(|r| r.to_vec()).collect() };
    let mut unary = Vec::new();
    for t in 0..e.length() {
        for m in 0..e.num_tags() {
            unary.push(e.get(t, m).to_vec());
        }
    }
    Instance {
        length: sentence.len(),
        domains: model.schema.domain_sizes(),
        unary,
        pairwise: (0..w.pairwise.general.len())
            .map(|p| rows(w.pairwise_table(p, lang)))
            .collect(),
        transition: (0..w.transition.general.len())
            .map(|m| rows(w.transition_table(m, lang)))
            .collect(),
    }
}

fn flat(gold: &[TagAssignment]) -> Vec<usize> {
    gold.iter().flat_map(|a| a.labels.iter().copied()).collect()
}

/// Random bilingual model with small emitter on an acyclic graph: a chain
/// with one tag type or a single token with two.
fn gradient_setup(seed: u64) -> (FcrfModel, Sentence, Vec<TagAssignment>) {
    let mut r = rng(seed);
    let (length, num_tags) = if r.gen_bool(0.5) {
        (r.gen_range(1..=4), 1)
    } else {
        (1, 2)
    };
    let tag_types = (0..num_tags)
        .map(|m| TagType {
            name: format!("T{m}"),
            labels: std::iter::once("NULL".to_string())
                .chain((1..r.gen_range(2..=3)).map(|l| format!("l{l}")))
                .collect(),
        })
        .collect();
    let cfg = EmitterConfig {
        char_dim: 3,
        word_hidden: 4,
        word_layers: 2,
    };
    let languages = vec!["aa".to_string(), "bb".to_string()];
    let mut model = FcrfModel::new(
        TagSchema::new(tag_types).unwrap(),
        languages.clone(),
        CharVocab::from_tokens(["abcd"]),
        cfg,
        FactorSet::FULL,
        BpConfig::default(),
        seed,
    );
    for t in model.params.factors.tensors_mut() {
        t.iter_mut().for_each(|x| *x = r.gen_range(-1.0..1.0));
    }
    for t in model.params.emitter.tensors_mut() {
        t.iter_mut().for_each(|x| *x *= 5.0);
    }
    let tokens = (0..length)
        .map(|_| {
            (0..r.gen_range(1..=3))
                .map(|_| ['a', 'b', 'c', 'd', 'e'][r.gen_range(0..5)])
                .collect()
        })
        .collect();
    let sentence = Sentence::new(tokens, languages[r.gen_range(0..2)].clone());
    let sizes = model.schema.domain_sizes();
    let gold = (0..length)
        .map(|_| TagAssignment {
            labels: sizes.iter().map(|&n| r.gen_range(0..n)).collect(),
        })
        .collect();
    (model, sentence, gold)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let eps = 1e-5;
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for seed in 0..20 {
        let (mut model, sentence, gold) = gradient_setup(1000 + seed);
        let mut grad = model.params.zeros_like();
        model.accumulate_gradient(&sentence, &gold, None, &mut grad).unwrap();
        let analytic = grad.to_flat();
        let mut theta = model.params.to_flat();
        let labels = flat(&gold);
        for (i, &a) in analytic.iter().enumerate() {
            let numeric = central_difference(&mut theta, i, eps, |x| {
                model.params.set_flat(x);
                model_instance(&model, &sentence).log_likelihood(&labels)
            });
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            checked += 1;
        }
        model.params.set_flat(&theta);
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(30),
        format!("{checked} parameters, max relative error {worst:.2e}, {:.2?}", elapsed),
    )
}

fn decode_oracle() -> Outcome {
    let mut mismatches = 0;
    let mut variables = 0;
    for inst in acyclic_instances() {
        let (graph, potentials) = engine_view(&inst);
        let b = LoopyBp::new(&graph, potentials)
            .unwrap()
            .run(&BpConfig::default())
            .unwrap();
        let decoded = flat(&mbr_decode(&b));
        let exact = inst.marginals();
        for (v, marginal) in exact.variables.iter().enumerate() {
            variables += 1;
            if decoded[v] != argmax(marginal) {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches over {variables} variables"),
    )
}

fn small_training(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: Some(0.01),
        emitter: EmitterConfig {
            char_dim: 8,
            word_hidden: 16,
            word_layers: 1,
        },
        ..TrainConfig::default()
    }
}

fn unseen_tag_sets() -> Outcome {
    let (train_corpus, test) = unseen_combination_corpus(300, 50, 3, "xx");
    let schema = build_schema(&train_corpus).unwrap();
    let target = schema
        .complete(
            &[("A", "a2"), ("B", "b2")]
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
        .unwrap();
    let cfg = small_training(10);
    let fcrf = train(
        &train_corpus,
        &schema,
        FactorSet::FULL,
        BpConfig::default(),
        &cfg,
        None,
        &mut |_| {},
    )
    .unwrap()
    .model;
    let fcrf_hits: usize = fcrf
        .predict_corpus(&test, None)
        .unwrap()
        .iter()
        .flatten()
        .filter(|a| **a == target)
        .count();

    let baseline_cfg = TrainConfig {
        optimizer: morphfg::optim::OptimizerKind::Sgd,
        learning_rate: None,
        ..small_training(10)
    };
    let baseline = baseline_train(&train_corpus, &schema, &baseline_cfg, None, &mut |_| {})
        .unwrap()
        .model;
    let mut outside = 0;
    let mut baseline_hits = 0;
    for sentence in &test.sentences {
        for a in baseline_predict(&baseline, sentence, None).unwrap() {
            outside += usize::from(!baseline.tag_sets.contains(&a));
            baseline_hits += usize::from(a == target);
        }
    }
    outcome(
        fcrf_hits >= 1 && outside == 0 && baseline_hits == 0 && !baseline.tag_sets.contains(&target),
        format!(
            "FCRF predicts (a2, b2) on {fcrf_hits} test tokens; baseline: {baseline_hits} such tokens, {outside} outside its {} training tag sets",
            baseline.tag_sets.len()
        ),
    )
}

fn learnability() -> Outcome {
    let start = Instant::now();
    let train_corpus = agreement_corpus(500, 11, "xx");
    let test = agreement_corpus(100, 12, "xx");
    let schema = build_schema(&train_corpus).unwrap();
    let cfg = small_training(10);
    let score = |set: FactorSet| {
        let model = train(
            &train_corpus,
            &schema,
            set,
            BpConfig::default(),
            &cfg,
            None,
            &mut |_| {},
        )
        .unwrap()
        .model;
        let pred = model.predict_corpus(&test, None).unwrap();
        evaluate_corpus(&pred, &test, &model.schema).unwrap().f1_micro
    };
    let fcrf = score(FactorSet::FULL);
    let tagwise = score(FactorSet::NONE);
    let elapsed = start.elapsed();
    outcome(
        fcrf >= 0.95 && tagwise < fcrf && elapsed < Duration::from_secs(300),
        format!("FCRF F1 micro {fcrf:.4}, tag-wise {tagwise:.4}, {:.2?}", elapsed),
    )
}

fn metric_examples() -> Outcome {
    let tags =
        |pairs: &[(&str, &str)]| -> PartialTags { pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() };
    let corpus = Corpus::new(vec![Sentence::annotated(
        vec!["x".into(), "y".into()],
        "xx",
        vec![
            tags(&[("POS", "Noun"), ("Gender", "Masc"), ("Number", "Sing")]),
            tags(&[("POS", "Noun"), ("Gender", "Fem"), ("Number", "Sing")]),
        ],
    )]);
    let schema = build_schema(&corpus).unwrap();
    let assign = |pairs: &[(&str, &str)]| schema.complete(&tags(pairs)).unwrap();

    // gold {POS: Noun, Gender: Masc}, predicted {POS: Noun, Gender: Fem}
    let gold = vec![vec![assign(&[("POS", "Noun"), ("Gender", "Masc")])]];
    let pred = vec![vec![assign(&[("POS", "Noun"), ("Gender", "Fem")])]];
    let half = f1_scores(&pred, &gold, &schema).unwrap();
    let half_acc = token_accuracy(&pred, &gold).unwrap();
    let first = half.precision_micro == 0.5 && half.recall_micro == 0.5 && half.f1_micro == 0.5 && half_acc == 0.0;

    // Noun+Masc+Sing predicted as Noun+Fem+Sing
    let gold = vec![vec![assign(&[("POS", "Noun"), ("Gender", "Masc"), ("Number", "Sing")])]];
    let pred = vec![vec![assign(&[("POS", "Noun"), ("Gender", "Fem"), ("Number", "Sing")])]];
    let r = evaluate(&pred, &gold, &schema).unwrap();
    let second = r.f1_micro > 0.0 && r.token_accuracy == 0.0 && (r.f1_micro - 2.0 / 3.0).abs() < 1e-15;

    outcome(
        first && second,
        format!(
            "micro P/R/F1 {}/{}/{} with accuracy {half_acc}; gender error gives F1 {:.4} with accuracy {}",
            half.precision_micro, half.recall_micro, half.f1_micro, r.f1_micro, r.token_accuracy
        ),
    )
}

/// Trains for one epoch through the CLI and returns the BP settings echoed in
/// the log, the metrics file and the model file.
fn cli_bp_echo(dir: &Path, extra: &[&str]) -> Vec<(f64, u64)> {
    let data = dir.join("xx-train.conllu");
    let model = dir.join("model.json");
    let out = Command::new(env!("CARGO_BIN_EXE_morphfg"))
        .args(["train", "--train"])
        .arg(&data)
        .arg("--model-file")
        .arg(&model)
        .args([
            "--epochs",
            "1",
            "--char-dim",
            "2",
            "--word-hidden",
            "2",
            "--word-layers",
            "1",
        ])
        .args(extra)
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let logged = stderr
        .lines()
        .find_map(|l| l.split_once("resolved config: ").map(|(_, json)| json.to_string()))
        .expect("config echo in log");
    let logged: serde_json::Value = serde_json::from_str(&logged).unwrap();
    let metrics = std::fs::read_to_string(dir.join("model.json.metrics.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    let pick = |v: &serde_json::Value| (v["bp_threshold"].as_f64().unwrap(), v["bp_max_iters"].as_u64().unwrap());
    vec![
        pick(&logged),
        pick(&first["config"]),
        pick(&saved["config"]),
        (
            saved["model"]["bp"]["residual_threshold"].as_f64().unwrap(),
            saved["model"]["bp"]["max_iterations"].as_u64().unwrap(),
        ),
    ]
}

fn convergence_defaults() -> Outcome {
    let defaults = BpConfig::default();
    let library = defaults.residual_threshold == 0.05 && defaults.max_iterations == 40;

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("xx-train.conllu"),
        morphfg::conllu::write_conllu(&agreement_corpus(4, 1, "xx")),
    )
    .unwrap();
    let default_echo = cli_bp_echo(dir.path(), &[]);
    let override_echo = cli_bp_echo(dir.path(), &["--bp-threshold", "0.01", "--bp-max-iters", "7"]);
    let cli = default_echo.iter().all(|&e| e == (0.05, 40)) && override_echo.iter().all(|&e| e == (0.01, 7));
    outcome(
        library && cli,
        format!(
            "library default {defaults:?}; CLI echo {:?} by default, {:?} with flags",
            default_echo[0], override_echo[0]
        ),
    )
}

#[test]
fn acceptance_criteria() {
    type Criterion = (&'static str, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("1", "BP is exact on acyclic graphs", bp_exactness),
        ("2", "loopy BP converges and stays normalized", loopy_sanity),
        (
            "3",
            "gradients match finite differences of the exact likelihood",
            gradient_correctness,
        ),
        ("4", "MBR decode equals argmax of exact marginals", decode_oracle),
        (
            "5",
            "FCRF emits an unseen tag set, the baseline cannot",
            unseen_tag_sets,
        ),
        ("6", "end-to-end learnability beats the tag-wise model", learnability),
        ("7", "metric examples", metric_examples),
        ("8", "BP defaults and CLI overrides are echoed", convergence_defaults),
    ];
    let mut failed = Vec::new();
    for (id, title, run) in criteria {
        let o = run();
        report(id, title, &o);
        if !o.passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

/// Real treebanks: set `MORPHFG_UD_DIR` to a directory holding
/// `<lang>-train.conllu`, `<lang>-dev.conllu` and `<lang>-test.conllu` for
/// da, sv, ru, bg, fi, hu, es and pt. Takes hours.
#[test]
#[ignore]
fn real_treebanks_fcrf_beats_baseline() {
    let Ok(dir) = std::env::var("MORPHFG_UD_DIR") else {
        report(
            "9",
            "FCRF beats baseline on UD pairs",
            &outcome(false, "MORPHFG_UD_DIR is not set"),
        );
        panic!("MORPHFG_UD_DIR is not set");
    };
    let dir = Path::new(&dir);
    let read = |lang: &str, split: &str| {
        let text = std::fs::read_to_string(dir.join(format!("{lang}-{split}.conllu"))).unwrap();
        morphfg::conllu::parse_conllu(&text, lang).unwrap()
    };
    let mut wins = Vec::new();
    for (hrl, lrl) in [("da", "sv"), ("ru", "bg"), ("fi", "hu"), ("es", "pt")] {
        let split = morphfg::conllu::SplitConfig {
            tgt_size: 100,
            upsample_factor: 10,
            hrl_language: hrl.into(),
            lrl_language: lrl.into(),
            subsample: Default::default(),
        };
        let mixture = morphfg::conllu::make_training_mixture(&read(hrl, "train"), &read(lrl, "train"), &split).unwrap();
        let (dev, test) = (read(lrl, "dev"), read(lrl, "test"));
        let schema = build_schema(&mixture).unwrap();
        let fcrf = train(
            &mixture,
            &schema,
            FactorSet::FULL,
            BpConfig::default(),
            &TrainConfig::default(),
            Some(&dev),
            &mut |_| {},
        )
        .unwrap()
        .model;
        let fcrf_f1 = evaluate_corpus(&fcrf.predict_corpus(&test, None).unwrap(), &test, &schema)
            .unwrap()
            .f1_macro;
        let baseline = baseline_train(&mixture, &schema, &TrainConfig::baseline(), Some(&dev), &mut |_| {})
            .unwrap()
            .model;
        let base_f1 = evaluate_corpus(&baseline.predict_corpus(&test, None).unwrap(), &test, &schema)
            .unwrap()
            .f1_macro;
        wins.push((format!("{hrl}/{lrl}"), fcrf_f1, base_f1));
    }
    let count = wins.iter().filter(|(_, f, b)| f > b).count();
    let o = outcome(count >= 3, format!("FCRF ahead on {count}/4 pairs: {wins:?}"));
    report("9", "FCRF beats baseline on UD pairs", &o);
    assert!(o.passed);
}
