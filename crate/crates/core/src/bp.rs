//! Loopy sum-product belief propagation over a [`FactorGraph`].
//!
//! Messages live in log space and are normalized after every update.
//! One iteration is a forward sweep followed by a backward sweep:
//!
//! * forward, `t = 0 .. T-1`: the pairwise factors at `t` (both variables into
//!   the factor, then the factor back out to both), then the transition
//!   messages from `t` into `t + 1`;
//! * backward, `t = T-1 .. 0`: the pairwise factors at `t`, then the
//!   transition messages from `t` into `t - 1`.
//!
//! Neural factors are unary, so their outgoing messages are fixed and set once
//! at initialization. After each iteration the residual is the largest
//! L∞ change of any message, measured on normalized probabilities; iteration
//! stops once it falls below the threshold or the iteration budget is spent.
//! On a tree a single iteration already yields exact marginals.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Factor, FactorGraph, VariableId};
use crate::logspace::{log_sum_exp, normalize_log};
use crate::nn::EmissionScores;
use crate::potentials::FactorWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub residual_threshold: f64,
    pub max_iterations: usize,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            residual_threshold: 0.05,
            max_iterations: 40,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.residual_threshold.is_nan() || self.residual_threshold <= 0.0 {
            return Err(Error::InvalidConfig("BP residual threshold must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("BP needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Log-potential tables for one sentence. Binary tables are indexed
/// `[row label, column label]` following the factor scope order.
#[derive(Debug, Clone)]
pub struct LogPotentials {
    /// Per variable (`t * M + m`), one entry per label.
    pub unary: Vec<Vec<f64>>,
    /// Per tag pair, shared across timesteps.
    pub pairwise: Vec<Array2<f64>>,
    /// Per tag type, shared across timesteps.
    pub transition: Vec<Array2<f64>>,
}

impl LogPotentials {
    /// Tables for a sentence: neural scores from `emissions`, structured
    /// tables from `weights` for language `lang`.
    pub fn assemble(emissions: &EmissionScores, weights: &FactorWeights, lang: Option<usize>) -> Self {
        let mut unary = Vec::with_capacity(emissions.length() * emissions.num_tags());
        for t in 0..emissions.length() {
            for m in 0..emissions.num_tags() {
                unary.push(emissions.get(t, m).to_vec());
            }
        }
        LogPotentials {
            unary,
            pairwise: (0..weights.pairwise.general.len())
                .map(|p| weights.pairwise_table(p, lang))
                .collect(),
            transition: (0..weights.transition.general.len())
                .map(|m| weights.transition_table(m, lang))
                .collect(),
        }
    }

    /// Unnormalized log-score of a complete assignment, one label per
    /// variable (`t * M + m`).
    pub fn score(&self, graph: &FactorGraph, labels: &[usize]) -> f64 {
        graph
            .factors()
            .iter()
            .map(|factor| {
                let scope = factor.scope();
                let label = |k: usize| labels[graph.variable_index(scope[k])];
                match self.table(factor) {
                    None => self.unary[graph.variable_index(scope[0])][label(0)],
                    Some(table) => table[[label(0), label(1)]],
                }
            })
            .sum()
    }

    /// Log-potential table of a binary factor.
    pub fn table(&self, factor: &Factor) -> Option<&Array2<f64>> {
        match *factor {
            Factor::Neural { .. } => None,
            Factor::Pairwise { pair, .. } => Some(&self.pairwise[pair]),
            Factor::Transition { m, .. } => Some(&self.transition[m]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    VariableToFactor,
    FactorToVariable,
}

/// A normalized log-space message over one variable's labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub direction: Direction,
    pub variable: VariableId,
    pub factor: usize,
    pub values: Vec<f64>,
}

fn uniform_log(size: usize) -> Vec<f64> {
    vec![-(size as f64).ln(); size]
}

impl Message {
    pub fn probabilities(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.exp()).collect()
    }
}

/// Converged (or budget-limited) approximate marginals.
#[derive(Debug, Clone)]
pub struct BeliefState {
    /// Per variable (`t * M + m`), a distribution over its labels.
    pub variables: Vec<Vec<f64>>,
    /// Per factor, a distribution over its joint labels. Binary factors are
    /// `|Y_row| × |Y_col|`; neural factors are `|Y| × 1`.
    pub factors: Vec<Array2<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    /// Bethe approximation of `log Z`; exact on trees.
    pub log_partition: f64,
    num_tags: usize,
}

impl BeliefState {
    pub fn variable(&self, v: VariableId) -> &[f64] {
        &self.variables[v.t * self.num_tags + v.m]
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn length(&self) -> usize {
        self.variables.len() / self.num_tags
    }
}

/// Message state of one run. Edges are (factor, slot) pairs.
pub struct LoopyBp<'g> {
    graph: &'g FactorGraph,
    potentials: LogPotentials,
    edge_start: Vec<usize>,
    edge_var: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
    to_var: Vec<Vec<f64>>,
    to_factor: Vec<Vec<f64>>,
    pairwise_at: Vec<Vec<usize>>,
    transition_at: Vec<Vec<usize>>,
}

/// Sum-product message from a binary factor with log-table `table` toward its
/// row variable (`toward_row`) or column variable, given the normalized
/// message arriving from the other variable. Returns normalized log-values.
pub fn binary_factor_message(table: &Array2<f64>, incoming: &[f64], toward_row: bool) -> Vec<f64> {
    let mut buf = Vec::with_capacity(incoming.len());
    let mut values: Vec<f64> = if toward_row {
        (0..table.nrows())
            .map(|a| {
                buf.clear();
                buf.extend((0..table.ncols()).map(|b| table[[a, b]] + incoming[b]));
                log_sum_exp(&buf)
            })
            .collect()
    } else {
        (0..table.ncols())
            .map(|b| {
                buf.clear();
                buf.extend((0..table.nrows()).map(|a| table[[a, b]] + incoming[a]));
                log_sum_exp(&buf)
            })
            .collect()
    };
    normalize_log(&mut values);
    values
}

impl<'g> LoopyBp<'g> {
    pub fn new(graph: &'g FactorGraph, potentials: LogPotentials) -> Result<Self> {
        if potentials.unary.len() != graph.num_variables() {
            return Err(Error::Shape(format!(
                "{} unary tables for {} variables",
                potentials.unary.len(),
                graph.num_variables()
            )));
        }
        let mut edge_start = Vec::with_capacity(graph.factors().len());
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); graph.num_variables()];
        let mut pairwise_at = vec![Vec::new(); graph.length()];
        let mut transition_at = vec![Vec::new(); graph.length()];
        for (f, factor) in graph.factors().iter().enumerate() {
            edge_start.push(edge_var.len());
            for v in factor.scope() {
                let vi = graph.variable_index(v);
                var_edges[vi].push(edge_var.len());
                edge_var.push(vi);
            }
            if let Some(table) = potentials.table(factor) {
                let scope = factor.scope();
                let rows = potentials.unary[graph.variable_index(scope[0])].len();
                let cols = potentials.unary[graph.variable_index(scope[1])].len();
                if table.dim() != (rows, cols) {
                    return Err(Error::Shape(format!(
                        "factor {f} table is {:?}, variables need {:?}",
                        table.dim(),
                        (rows, cols)
                    )));
                }
            }
            match *factor {
                Factor::Neural { .. } => {}
                Factor::Pairwise { t, .. } => pairwise_at[t].push(f),
                Factor::Transition { t, .. } => transition_at[t].push(f),
            }
        }
        let size = |e: usize| potentials.unary[edge_var[e]].len();
        let uniform = |e: usize| uniform_log(size(e));
        let mut to_var: Vec<Vec<f64>> = (0..edge_var.len()).map(uniform).collect();
        let to_factor: Vec<Vec<f64>> = (0..edge_var.len()).map(uniform).collect();
        for (f, factor) in graph.factors().iter().enumerate() {
            if let Factor::Neural { var } = factor {
                let mut m = potentials.unary[graph.variable_index(*var)].clone();
                normalize_log(&mut m);
                to_var[edge_start[f]] = m;
            }
        }
        Ok(LoopyBp {
            graph,
            potentials,
            edge_start,
            edge_var,
            var_edges,
            to_var,
            to_factor,
            pairwise_at,
            transition_at,
        })
    }

    fn edge(&self, factor: usize, v: VariableId) -> usize {
        let vi = self.graph.variable_index(v);
        let start = self.edge_start[factor];
        let slots = self.graph.factor(factor).scope().len();
        (start..start + slots)
            .find(|&e| self.edge_var[e] == vi)
            .unwrap_or_else(|| panic!("variable {v:?} is not in the scope of factor {factor}"))
    }

    fn var_to_factor_edge(&self, e: usize) -> Vec<f64> {
        let v = self.edge_var[e];
        let mut values = vec![0.0; self.potentials.unary[v].len()];
        for &other in &self.var_edges[v] {
            if other != e {
                for (acc, x) in values.iter_mut().zip(&self.to_var[other]) {
                    *acc += x;
                }
            }
        }
        normalize_log(&mut values);
        values
    }

    fn factor_to_var_edge(&self, e: usize, factor: usize) -> Vec<f64> {
        let start = self.edge_start[factor];
        match self.potentials.table(self.graph.factor(factor)) {
            None => self.to_var[e].clone(),
            Some(table) => {
                let toward_row = e == start;
                let other = if toward_row { start + 1 } else { start };
                binary_factor_message(table, &self.to_factor[other], toward_row)
            }
        }
    }

    /// Product of the latest messages into `v` from every incident factor
    /// except `factor`.
    pub fn send_variable_to_factor(&self, v: VariableId, factor: usize) -> Message {
        Message {
            direction: Direction::VariableToFactor,
            variable: v,
            factor,
            values: self.var_to_factor_edge(self.edge(factor, v)),
        }
    }

    /// Sum-product message from `factor` to `v` given the current
    /// variable-to-factor messages.
    pub fn send_factor_to_variable(&self, factor: usize, v: VariableId) -> Message {
        Message {
            direction: Direction::FactorToVariable,
            variable: v,
            factor,
            values: self.factor_to_var_edge(self.edge(factor, v), factor),
        }
    }

    fn update_in(&mut self, e: usize) {
        self.to_factor[e] = self.var_to_factor_edge(e);
    }

    fn update_out(&mut self, e: usize, factor: usize) {
        self.to_var[e] = self.factor_to_var_edge(e, factor);
    }

    fn update_pairwise(&mut self, t: usize) {
        for k in 0..self.pairwise_at[t].len() {
            let f = self.pairwise_at[t][k];
            let start = self.edge_start[f];
            self.update_in(start);
            self.update_in(start + 1);
            self.update_out(start, f);
            self.update_out(start + 1, f);
        }
    }

    /// One forward and one backward sweep. Returns the residual.
    pub fn iterate(&mut self) -> f64 {
        let before_var = self.to_var.clone();
        let before_factor = self.to_factor.clone();
        let length = self.graph.length();
        for t in 0..length {
            self.update_pairwise(t);
            if t + 1 < length {
                for k in 0..self.transition_at[t].len() {
                    let f = self.transition_at[t][k];
                    let start = self.edge_start[f];
                    self.update_in(start);
                    self.update_out(start + 1, f);
                }
            }
        }
        for t in (0..length).rev() {
            self.update_pairwise(t);
            if t > 0 {
                for k in 0..self.transition_at[t - 1].len() {
                    let f = self.transition_at[t - 1][k];
                    let start = self.edge_start[f];
                    self.update_in(start + 1);
                    self.update_out(start, f);
                }
            }
        }
        let change = |old: &[Vec<f64>], new: &[Vec<f64>]| {
            old.iter()
                .zip(new)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x.exp() - y.exp()).abs()))
                .fold(0.0, f64::max)
        };
        change(&before_var, &self.to_var).max(change(&before_factor, &self.to_factor))
    }

    /// Beliefs from the current messages.
    pub fn beliefs(&self, converged: bool, iterations: usize, final_residual: f64) -> BeliefState {
        let xlogx = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
        let mut log_partition = 0.0;

        let variables: Vec<Vec<f64>> = (0..self.graph.num_variables())
            .map(|v| {
                let mut values = vec![0.0; self.potentials.unary[v].len()];
                for &e in &self.var_edges[v] {
                    for (acc, x) in values.iter_mut().zip(&self.to_var[e]) {
                        *acc += x;
                    }
                }
                normalize_log(&mut values);
                let probs: Vec<f64> = values.iter().map(|x| x.exp()).collect();
                let degree = self.var_edges[v].len() as f64;
                log_partition += (degree - 1.0) * probs.iter().map(|&p| xlogx(p)).sum::<f64>();
                probs
            })
            .collect();

        let factors = self
            .graph
            .factors()
            .iter()
            .enumerate()
            .map(|(f, factor)| {
                let start = self.edge_start[f];
                match self.potentials.table(factor) {
                    None => {
                        let v = self.edge_var[start];
                        let b = &variables[v];
                        log_partition += b
                            .iter()
                            .zip(&self.potentials.unary[v])
                            .map(|(&p, &u)| p * u - xlogx(p))
                            .sum::<f64>();
                        Array2::from_shape_vec((b.len(), 1), b.clone()).expect("column belief")
                    }
                    Some(table) => {
                        let row = self.var_to_factor_edge(start);
                        let col = self.var_to_factor_edge(start + 1);
                        let mut logits = table.clone();
                        for ((a, b), x) in logits.indexed_iter_mut() {
                            *x += row[a] + col[b];
                        }
                        let z = log_sum_exp(logits.as_slice().expect("contiguous"));
                        let belief = logits.mapv(|x| (x - z).exp());
                        log_partition += belief
                            .iter()
                            .zip(table.iter())
                            .map(|(&p, &lp)| if p > 0.0 { p * lp - xlogx(p) } else { 0.0 })
                            .sum::<f64>();
                        belief
                    }
                }
            })
            .collect();

        BeliefState {
            variables,
            factors,
            converged,
            iterations,
            final_residual,
            log_partition,
            num_tags: self.graph.num_tags(),
        }
    }

    /// Iterates until the residual drops below the threshold or the budget
    /// runs out.
    pub fn run(mut self, cfg: &BpConfig) -> Result<BeliefState> {
        cfg.validate()?;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < cfg.max_iterations {
            residual = self.iterate();
            iterations += 1;
            if residual < cfg.residual_threshold {
                break;
            }
        }
        Ok(self.beliefs(residual < cfg.residual_threshold, iterations, residual))
    }
}

/// Runs BP for one sentence with neural scores `emissions` and the structured
/// tables of `weights` for language `lang`.
pub fn run_bp(
    graph: &FactorGraph,
    weights: &FactorWeights,
    emissions: &EmissionScores,
    lang: Option<usize>,
    cfg: &BpConfig,
) -> Result<BeliefState> {
    if emissions.length() != graph.length() || emissions.num_tags() != graph.num_tags() {
        return Err(Error::Shape(format!(
            "emissions are {}×{}, graph is {}×{}",
            emissions.length(),
            emissions.num_tags(),
            graph.length(),
            graph.num_tags()
        )));
    }
    LoopyBp::new(graph, LogPotentials::assemble(emissions, weights, lang))?.run(cfg)
}
