//! Exhaustive-enumeration reference for tiny factorial CRFs.
//!
//! Everything here walks the full joint label space, so it is only usable on
//! instances with a few thousand assignments at most. It shares no code with
//! the message-passing engine and exists so tests can compare against it.

/// A fully specified factorial CRF over `length × domains.len()` variables.
///
/// Variables are numbered `t * m + k` (timestep `t`, tag type `k`). All tables
/// are log-potentials.
#[derive(Debug, Clone)]
pub struct Instance {
    pub length: usize,
    pub domains: Vec<usize>,
    /// Per variable, one log-potential per label.
    pub unary: Vec<Vec<f64>>,
    /// Per unordered tag pair `(i, j)`, `i < j`, in lexicographic order:
    /// a `domains[i] × domains[j]` table shared by every timestep. Empty
    /// when pairwise factors are disabled.
    pub pairwise: Vec<Vec<Vec<f64>>>,
    /// Per tag type: a `domains[k] × domains[k]` table shared by every
    /// adjacent timestep pair. Empty when transition factors are disabled.
    pub transition: Vec<Vec<Vec<f64>>>,
}

/// Exact marginals of an [`Instance`].
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_partition: f64,
    pub variables: Vec<Vec<f64>>,
    /// Indexed `[t][pair]`, each a `domains[i] × domains[j]` table.
    pub pairwise: Vec<Vec<Vec<Vec<f64>>>>,
    /// Indexed `[t][k]` for `t < length - 1`.
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Unordered tag pairs `(i, j)` with `i < j` in lexicographic order.
pub fn tag_pairs(num_tags: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..num_tags {
        for j in i + 1..num_tags {
            pairs.push((i, j));
        }
    }
    pairs
}

impl Instance {
    /// Draws every table entry from `sample`, in a fixed order: unary, then
    /// pairwise, then transition.
    pub fn random(
        length: usize,
        domains: Vec<usize>,
        pairwise: bool,
        transition: bool,
        mut sample: impl FnMut() -> f64,
    ) -> Self {
        let m = domains.len();
        let mut table = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
            (0..rows).map(|_| (0..cols).map(|_| sample()).collect()).collect()
        };
        let unary = (0..length * m).map(|v| table(1, domains[v % m]).remove(0)).collect();
        let pairwise = if pairwise {
            tag_pairs(m)
                .iter()
                .map(|&(i, j)| table(domains[i], domains[j]))
                .collect()
        } else {
            Vec::new()
        };
        let transition = if transition {
            domains.iter().map(|&d| table(d, d)).collect()
        } else {
            Vec::new()
        };
        Instance {
            length,
            domains,
            unary,
            pairwise,
            transition,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.domains.len()
    }

    fn var(&self, t: usize, k: usize) -> usize {
        t * self.num_tags() + k
    }

    /// Unnormalized log-score of a complete assignment (one label per variable).
    pub fn score(&self, assignment: &[usize]) -> f64 {
        let m = self.num_tags();
        let pairs = tag_pairs(m);
        let mut s = 0.0;
        for t in 0..self.length {
            for k in 0..m {
                s += self.unary[self.var(t, k)][assignment[self.var(t, k)]];
            }
            if !self.pairwise.is_empty() {
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    s += self.pairwise[p][assignment[self.var(t, i)]][assignment[self.var(t, j)]];
                }
            }
            if !self.transition.is_empty() && t + 1 < self.length {
                for k in 0..m {
                    s += self.transition[k][assignment[self.var(t, k)]][assignment[self.var(t + 1, k)]];
                }
            }
        }
        s
    }

    /// Calls `f` on every complete assignment.
    pub fn for_each_assignment(&self, mut f: impl FnMut(&[usize])) {
        let n = self.length * self.num_tags();
        let sizes: Vec<usize> = (0..n).map(|v| self.domains[v % self.num_tags()]).collect();
        let mut current = vec![0usize; n];
        loop {
            f(&current);
            let mut pos = 0;
            loop {
                if pos == n {
                    return;
                }
                current[pos] += 1;
                if current[pos] < sizes[pos] {
                    break;
                }
                current[pos] = 0;
                pos += 1;
            }
        }
    }

    pub fn log_partition(&self) -> f64 {
        let mut scores = Vec::new();
        self.for_each_assignment(|a| scores.push(self.score(a)));
        log_sum_exp(&scores)
    }

    pub fn log_likelihood(&self, gold: &[usize]) -> f64 {
        self.score(gold) - self.log_partition()
    }

    pub fn marginals(&self) -> Marginals {
        let m = self.num_tags();
        let pairs = tag_pairs(m);
        let log_z = self.log_partition();

        let mut variables: Vec<Vec<f64>> = (0..self.length * m).map(|v| vec![0.0; self.domains[v % m]]).collect();
        let mut pairwise: Vec<Vec<Vec<Vec<f64>>>> = (0..self.length)
            .map(|_| {
                pairs
                    .iter()
                    .map(|&(i, j)| vec![vec![0.0; self.domains[j]]; self.domains[i]])
                    .collect()
            })
            .collect();
        let mut transition: Vec<Vec<Vec<Vec<f64>>>> = (0..self.length.saturating_sub(1))
            .map(|_| {
                (0..m)
                    .map(|k| vec![vec![0.0; self.domains[k]]; self.domains[k]])
                    .collect()
            })
            .collect();

        self.for_each_assignment(|a| {
            let p = (self.score(a) - log_z).exp();
            for (v, &label) in a.iter().enumerate() {
                variables[v][label] += p;
            }
            for t in 0..self.length {
                for (q, &(i, j)) in pairs.iter().enumerate() {
                    pairwise[t][q][a[self.var(t, i)]][a[self.var(t, j)]] += p;
                }
                if t + 1 < self.length {
                    for k in 0..m {
                        transition[t][k][a[self.var(t, k)]][a[self.var(t + 1, k)]] += p;
                    }
                }
            }
        });

        Marginals {
            log_partition: log_z,
            variables,
            pairwise,
            transition,
        }
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Central finite difference of `f` at `x[i]`.
pub fn central_difference(x: &mut [f64], i: usize, eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let saved = x[i];
    x[i] = saved + eps;
    let plus = f(x);
    x[i] = saved - eps;
    let minus = f(x);
    x[i] = saved;
    (plus - minus) / (2.0 * eps)
}
