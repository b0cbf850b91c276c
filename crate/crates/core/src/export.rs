//! Labeled CSV export of pairwise and transition weight tables.

use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fcrf::FcrfModel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightKind {
    /// `|Y_m| × |Y_m|`, rows are the label at `t`, columns the label at `t + 1`.
    Transition { tag: String },
    /// Rows are labels of `first`, columns of `second`; `first` must precede
    /// `second` in the schema.
    Pairwise { first: String, second: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    General,
    Language(String),
    /// General plus the language's own table.
    Sum(String),
}

impl FromStr for Scope {
    type Err = Error;

    /// `gen`, `lang:<id>` or `sum:<id>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "gen" => Ok(Scope::General),
            Some(("lang", l)) if !l.is_empty() => Ok(Scope::Language(l.to_string())),
            Some(("sum", l)) if !l.is_empty() => Ok(Scope::Sum(l.to_string())),
            _ => Err(Error::InvalidConfig(format!(
                "invalid scope `{s}` (expected gen, lang:<id> or sum:<id>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub corner: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Array2<f64>,
}

fn tag_index(model: &FcrfModel, name: &str) -> Result<usize> {
    model.schema.tag_index(name).ok_or_else(|| Error::NoSuchTag {
        tag: name.to_string(),
        available: model.schema.tag_types().iter().map(|t| t.name.clone()).collect(),
    })
}

pub fn export_weights(model: &FcrfModel, what: &WeightKind, scope: &Scope) -> Result<LabeledMatrix> {
    let present = match what {
        WeightKind::Transition { .. } => model.factor_set.transition,
        WeightKind::Pairwise { .. } => model.factor_set.pairwise,
    };
    if !present {
        return Err(Error::InvalidConfig(
            "the model was trained without this factor family".into(),
        ));
    }
    let w = &model.params.factors;
    let lang = match scope {
        Scope::General => None,
        Scope::Language(l) | Scope::Sum(l) => match w.language_index(l)? {
            Some(i) => Some(i),
            None => {
                return Err(Error::InvalidConfig(
                    "model has no language-specific weights; use scope gen".into(),
                ))
            }
        },
    };
    let (general, language, rows, cols) = match what {
        WeightKind::Transition { tag } => {
            let m = tag_index(model, tag)?;
            let lang_table = lang.map(|l| &w.transition.language[l][m]);
            (&w.transition.general[m], lang_table, m, m)
        }
        WeightKind::Pairwise { first, second } => {
            let (i, j) = (tag_index(model, first)?, tag_index(model, second)?);
            if i >= j {
                return Err(Error::InvalidConfig(format!(
                    "pairwise tables are stored with `{}` before `{}`; swap the tags",
                    model.schema.tag(j).name,
                    model.schema.tag(i).name
                )));
            }
            let p = w.pair_index(i, j)?;
            let lang_table = lang.map(|l| &w.pairwise.language[l][p]);
            (&w.pairwise.general[p], lang_table, i, j)
        }
    };
    let values = match (scope, language) {
        (Scope::General, _) => general.clone(),
        (Scope::Language(_), Some(t)) => t.clone(),
        (Scope::Sum(_), Some(t)) => general + t,
        _ => unreachable!("language scopes resolved above"),
    };
    Ok(LabeledMatrix {
        corner: format!("{}\\{}", model.schema.tag(rows).name, model.schema.tag(cols).name),
        row_labels: model.schema.tag(rows).labels.clone(),
        col_labels: model.schema.tag(cols).labels.clone(),
        values,
    })
}

impl LabeledMatrix {
    /// Header row and column carry label strings. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(std::iter::once(&self.corner).chain(&self.col_labels))?;
        for (label, row) in self.row_labels.iter().zip(self.values.rows()) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            w.write_record(std::iter::once(label).chain(&cells))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty CSV".into()))??;
        let corner = header.get(0).unwrap_or_default().to_string();
        let col_labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut row_labels = Vec::new();
        let mut values = Vec::new();
        for record in records {
            let record = record?;
            if record.len() != col_labels.len() + 1 {
                return Err(Error::Shape(format!(
                    "CSV row has {} cells, header has {}",
                    record.len(),
                    col_labels.len() + 1
                )));
            }
            row_labels.push(record[0].to_string());
            for cell in record.iter().skip(1) {
                values.push(
                    cell.parse::<f64>()
                        .map_err(|e| Error::InvalidConfig(format!("bad number `{cell}`: {e}")))?,
                );
            }
        }
        let values = Array2::from_shape_vec((row_labels.len(), col_labels.len()), values)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(LabeledMatrix {
            corner,
            row_labels,
            col_labels,
            values,
        })
    }
}
