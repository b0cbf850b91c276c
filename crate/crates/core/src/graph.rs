//! Per-sentence factorial CRF topology.
//!
//! One variable per (timestep, tag type). Every variable has a neural factor;
//! cotemporal variables are linked by a pairwise factor for every tag pair;
//! each tag type forms a chain of transition factors over time. Factors carry
//! topology only. Their tables come from the emitter and the weight store.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::tag_pairs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableId {
    pub t: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Neural,
    Pairwise,
    Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Neural {
        var: VariableId,
    },
    /// Tags `i < j` at timestep `t`; `pair` indexes the pairwise weight tables.
    Pairwise {
        t: usize,
        i: usize,
        j: usize,
        pair: usize,
    },
    /// Tag `m` between timesteps `t` and `t + 1`.
    Transition {
        t: usize,
        m: usize,
    },
}

impl Factor {
    pub fn kind(&self) -> FactorKind {
        match self {
            Factor::Neural { .. } => FactorKind::Neural,
            Factor::Pairwise { .. } => FactorKind::Pairwise,
            Factor::Transition { .. } => FactorKind::Transition,
        }
    }

    /// Variables in scope; binary factors list the row variable first.
    pub fn scope(&self) -> Vec<VariableId> {
        match *self {
            Factor::Neural { var } => vec![var],
            Factor::Pairwise { t, i, j, .. } => vec![VariableId { t, m: i }, VariableId { t, m: j }],
            Factor::Transition { t, m } => vec![VariableId { t, m }, VariableId { t: t + 1, m }],
        }
    }
}

/// Which structured factor families a graph includes. Neural factors are
/// always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSet {
    pub transition: bool,
    pub pairwise: bool,
}

impl FactorSet {
    pub const FULL: FactorSet = FactorSet {
        transition: true,
        pairwise: true,
    };
    pub const NONE: FactorSet = FactorSet {
        transition: false,
        pairwise: false,
    };
}

impl Default for FactorSet {
    fn default() -> Self {
        FactorSet::FULL
    }
}

#[derive(Debug, Clone)]
pub struct FactorGraph {
    length: usize,
    num_tags: usize,
    factors: Vec<Factor>,
    /// Incident factor indices per variable, in factor order.
    adjacency: Vec<Vec<usize>>,
}

/// Full topology for a sentence of `length` tokens over `num_tags` tag types.
pub fn build_graph(length: usize, num_tags: usize) -> Result<FactorGraph> {
    FactorGraph::new(length, num_tags, FactorSet::FULL)
}

impl FactorGraph {
    pub fn new(length: usize, num_tags: usize, set: FactorSet) -> Result<Self> {
        if length == 0 {
            return Err(Error::EmptySentence);
        }
        if num_tags == 0 {
            return Err(Error::InvalidConfig("factor graph needs at least one tag type".into()));
        }
        let pairs = tag_pairs(num_tags);
        let mut factors = Vec::new();
        for t in 0..length {
            for m in 0..num_tags {
                factors.push(Factor::Neural {
                    var: VariableId { t, m },
                });
            }
            if set.pairwise {
                for (pair, &(i, j)) in pairs.iter().enumerate() {
                    factors.push(Factor::Pairwise { t, i, j, pair });
                }
            }
            if set.transition && t + 1 < length {
                for m in 0..num_tags {
                    factors.push(Factor::Transition { t, m });
                }
            }
        }
        let mut adjacency = vec![Vec::new(); length * num_tags];
        for (f, factor) in factors.iter().enumerate() {
            for v in factor.scope() {
                adjacency[v.t * num_tags + v.m].push(f);
            }
        }
        Ok(FactorGraph {
            length,
            num_tags,
            factors,
            adjacency,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn num_variables(&self) -> usize {
        self.length * self.num_tags
    }

    pub fn variable_index(&self, v: VariableId) -> usize {
        v.t * self.num_tags + v.m
    }

    pub fn variable(&self, index: usize) -> VariableId {
        VariableId {
            t: index / self.num_tags,
            m: index % self.num_tags,
        }
    }

    pub fn variables(&self) -> impl Iterator<Item = VariableId> + '_ {
        (0..self.num_variables()).map(|i| self.variable(i))
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, f: usize) -> &Factor {
        &self.factors[f]
    }

    pub fn incident(&self, v: VariableId) -> &[usize] {
        &self.adjacency[self.variable_index(v)]
    }

    pub fn count(&self, kind: FactorKind) -> usize {
        self.factors.iter().filter(|f| f.kind() == kind).count()
    }

    /// True when the factor graph has no cycles, i.e. belief propagation is
    /// exact on it.
    pub fn is_acyclic(&self) -> bool {
        // Union-find over variable and factor nodes; an edge joining two
        // already-connected nodes closes a cycle.
        let nodes = self.num_variables() + self.factors.len();
        let mut parent: Vec<usize> = (0..nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (f, factor) in self.factors.iter().enumerate() {
            for v in factor.scope() {
                let a = find(&mut parent, self.num_variables() + f);
                let b = find(&mut parent, self.variable_index(v));
                if a == b {
                    return false;
                }
                parent[a] = b;
            }
        }
        true
    }

    /// Human-readable factor list.
    pub fn dump(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FactorGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "factor graph: T={} M={} variables={} factors={}",
            self.length,
            self.num_tags,
            self.num_variables(),
            self.factors.len()
        )?;
        for (idx, factor) in self.factors.iter().enumerate() {
            let scope: Vec<String> = factor.scope().iter().map(|v| format!("y[{},{}]", v.t, v.m)).collect();
            writeln!(f, "  #{idx:<4} {:?} {}", factor.kind(), scope.join(" -- "))?;
        }
        Ok(())
    }
}
