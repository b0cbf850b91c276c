//! Pairwise and transition weight tables.
//!
//! Every table is stored in log space. The log-potential of a factor is the
//! general table entry plus, when the model is trained on several languages,
//! the entry of the sentence language's own table. Tables do not depend on
//! the timestep or the input, so one set serves every position.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{slice, slice_mut, Parameters};
use crate::schema::{tag_pairs, TagSchema};

/// `general[m]` is `|Y_m| × |Y_m|`; `language[l][m]` has the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionWeights {
    pub general: Vec<Array2<f64>>,
    pub language: Vec<Vec<Array2<f64>>>,
}

/// `general[p]` is `|Y_i| × |Y_j|` for the `p`-th pair `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseWeights {
    pub pairs: Vec<(usize, usize)>,
    pub general: Vec<Array2<f64>>,
    pub language: Vec<Vec<Array2<f64>>>,
}

/// Both weight families plus the list of languages owning a private table.
/// An empty language list means a monolingual model using general tables only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorWeights {
    pub languages: Vec<String>,
    pub transition: TransitionWeights,
    pub pairwise: PairwiseWeights,
}

impl FactorWeights {
    /// Zero-initialized tables. Pass an empty `languages` slice for a
    /// monolingual model.
    pub fn zeros(schema: &TagSchema, languages: &[String]) -> Self {
        let sizes = schema.domain_sizes();
        let pairs = tag_pairs(sizes.len());
        let trans: Vec<Array2<f64>> = sizes.iter().map(|&n| Array2::zeros((n, n))).collect();
        let pair: Vec<Array2<f64>> = pairs
            .iter()
            .map(|&(i, j)| Array2::zeros((sizes[i], sizes[j])))
            .collect();
        FactorWeights {
            languages: languages.to_vec(),
            transition: TransitionWeights {
                general: trans.clone(),
                language: vec![trans; languages.len()],
            },
            pairwise: PairwiseWeights {
                pairs,
                general: pair.clone(),
                language: vec![pair; languages.len()],
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn is_language_specific(&self) -> bool {
        !self.languages.is_empty()
    }

    /// Index of the language's private tables, `None` for monolingual models.
    pub fn language_index(&self, language: &str) -> Result<Option<usize>> {
        if !self.is_language_specific() {
            return Ok(None);
        }
        self.languages
            .iter()
            .position(|l| l == language)
            .map(Some)
            .ok_or_else(|| Error::UnknownLanguage {
                language: language.to_string(),
                known: self.languages.clone(),
            })
    }

    fn check_lang(&self, lang: Option<usize>) -> Result<()> {
        match lang {
            Some(l) if l >= self.languages.len() => Err(Error::UnknownLanguage {
                language: format!("#{l}"),
                known: self.languages.clone(),
            }),
            _ => Ok(()),
        }
    }

    /// Combined `|Y_m| × |Y_m|` log-potential table for tag `m`.
    pub fn transition_table(&self, m: usize, lang: Option<usize>) -> Array2<f64> {
        let mut table = self.transition.general[m].clone();
        if let Some(l) = lang {
            table += &self.transition.language[l][m];
        }
        table
    }

    /// Combined log-potential table for the `pair`-th tag pair.
    pub fn pairwise_table(&self, pair: usize, lang: Option<usize>) -> Array2<f64> {
        let mut table = self.pairwise.general[pair].clone();
        if let Some(l) = lang {
            table += &self.pairwise.language[l][pair];
        }
        table
    }

    pub fn pair_index(&self, i: usize, j: usize) -> Result<usize> {
        if i >= j {
            return Err(Error::PairOrder { i, j });
        }
        self.pairwise
            .pairs
            .iter()
            .position(|&p| p == (i, j))
            .ok_or_else(|| Error::Shape(format!("no pairwise table for tags ({i}, {j})")))
    }
}

/// `λ_gen[m][a, b] + λ_lang[m][a, b]` (general only when `lang` is `None`).
pub fn transition_log_potential(
    weights: &FactorWeights,
    m: usize,
    lang: Option<usize>,
    a: usize,
    b: usize,
) -> Result<f64> {
    weights.check_lang(lang)?;
    let general = &weights.transition.general[m];
    if a >= general.nrows() || b >= general.ncols() {
        return Err(Error::Shape(format!(
            "label ({a}, {b}) outside transition table of tag {m}"
        )));
    }
    let mut value = general[[a, b]];
    if let Some(l) = lang {
        value += weights.transition.language[l][m][[a, b]];
    }
    Ok(value)
}

/// Pairwise log-potential for tags `i < j`. Reversed pairs are an error, not
/// a silent transpose.
pub fn pairwise_log_potential(
    weights: &FactorWeights,
    i: usize,
    j: usize,
    lang: Option<usize>,
    a: usize,
    b: usize,
) -> Result<f64> {
    weights.check_lang(lang)?;
    let p = weights.pair_index(i, j)?;
    let general = &weights.pairwise.general[p];
    if a >= general.nrows() || b >= general.ncols() {
        return Err(Error::Shape(format!(
            "label ({a}, {b}) outside pairwise table ({i}, {j})"
        )));
    }
    let mut value = general[[a, b]];
    if let Some(l) = lang {
        value += weights.pairwise.language[l][p][[a, b]];
    }
    Ok(value)
}

impl Parameters for FactorWeights {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        out.extend(self.transition.general.iter().map(slice));
        out.extend(self.transition.language.iter().flatten().map(slice));
        out.extend(self.pairwise.general.iter().map(slice));
        out.extend(self.pairwise.language.iter().flatten().map(slice));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.extend(self.transition.general.iter_mut().map(slice_mut));
        out.extend(self.transition.language.iter_mut().flatten().map(slice_mut));
        out.extend(self.pairwise.general.iter_mut().map(slice_mut));
        out.extend(self.pairwise.language.iter_mut().flatten().map(slice_mut));
        out
    }
}
