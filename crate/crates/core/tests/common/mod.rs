#![allow(dead_code)]

use morphfg::bp::LogPotentials;
use morphfg::graph::{FactorGraph, FactorSet};
use morphfg_oracle::Instance;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn table(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), cols), |(a, b)| rows[a][b])
}

/// Graph and log-potentials describing the same model as `inst`.
pub fn engine_view(inst: &Instance) -> (FactorGraph, LogPotentials) {
    let set = FactorSet {
        transition: !inst.transition.is_empty(),
        pairwise: !inst.pairwise.is_empty(),
    };
    let graph = FactorGraph::new(inst.length, inst.num_tags(), set).unwrap();
    let potentials = LogPotentials {
        unary: inst.unary.clone(),
        pairwise: inst.pairwise.iter().map(|t| table(t)).collect(),
        transition: inst.transition.iter().map(|t| table(t)).collect(),
    };
    (graph, potentials)
}

pub fn random_instance(
    rng: &mut ChaCha8Rng,
    length: usize,
    domains: Vec<usize>,
    range: f64,
    set: FactorSet,
) -> Instance {
    Instance::random(length, domains, set.pairwise, set.transition, || {
        rng.gen_range(-range..range)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Oracle instance with the model's potentials for `sentence`.
pub fn model_instance(model: &morphfg::fcrf::FcrfModel, sentence: &morphfg::schema::Sentence) -> Instance {
    let e = model.emissions(sentence, &sentence.language).unwrap();
    let w = &model.params.factors;
    let lang = w.language_index(&sentence.language).unwrap();
    let rows = |a: Array2<f64>| -> Vec<Vec<f64>> { a.rows().into_iter().map(|r| r.to_vec()).collect() };
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
        pairwise: if model.factor_set.pairwise {
            (0..w.pairwise.general.len())
                .map(|p| rows(w.pairwise_table(p, lang)))
                .collect()
        } else {
            Vec::new()
        },
        transition: if model.factor_set.transition {
            (0..w.transition.general.len())
                .map(|m| rows(w.transition_table(m, lang)))
                .collect()
        } else {
            Vec::new()
        },
    }
}

pub fn flat(gold: &[morphfg::schema::TagAssignment]) -> Vec<usize> {
    gold.iter().flat_map(|a| a.labels.iter().copied()).collect()
}
