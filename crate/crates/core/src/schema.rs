//! Tag vocabulary shared by every other module.
//!
//! A [`TagSchema`] lists the tag types (POS plus each morphological feature)
//! and the label domain of each. Index 0 of every domain is the `NULL` label,
//! which stands for "not annotated on this token".

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Position, Result};

pub const NULL_LABEL: &str = "NULL";
/// Index of [`NULL_LABEL`] in every label domain.
pub const NULL: usize = 0;

const SCHEMA_FORMAT: &str = "morphfg-schema";
const SCHEMA_VERSION: u32 = 1;

/// Gold annotation of one token as read from the data: tag name to label.
pub type PartialTags = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagType {
    pub name: String,
    pub labels: Vec<String>,
}

impl TagType {
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct TagSchema {
    tag_types: Vec<TagType>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    format: String,
    version: u32,
    tag_types: Vec<TagType>,
}

impl From<TagSchema> for SchemaFile {
    fn from(schema: TagSchema) -> Self {
        SchemaFile {
            format: SCHEMA_FORMAT.to_string(),
            version: SCHEMA_VERSION,
            tag_types: schema.tag_types,
        }
    }
}

impl TryFrom<SchemaFile> for TagSchema {
    type Error = Error;

    fn try_from(file: SchemaFile) -> Result<Self> {
        if file.format != SCHEMA_FORMAT || file.version != SCHEMA_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected {SCHEMA_FORMAT} v{SCHEMA_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        TagSchema::new(file.tag_types)
    }
}

/// One label index per tag type, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TagAssignment {
    pub labels: Vec<usize>,
}

impl TagAssignment {
    pub fn all_null(num_tags: usize) -> Self {
        TagAssignment {
            labels: vec![NULL; num_tags],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub language: String,
    /// Gold annotations, one map per token, when the data carries them.
    pub annotations: Option<Vec<PartialTags>>,
    /// Raw CoNLL-U lines of the block, kept so predictions can be written back
    /// over the original columns.
    #[serde(skip)]
    pub source: Option<Vec<String>>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, language: impl Into<String>) -> Self {
        Sentence {
            tokens,
            language: language.into(),
            annotations: None,
            source: None,
        }
    }

    pub fn annotated(tokens: Vec<String>, language: impl Into<String>, gold: Vec<PartialTags>) -> Self {
        debug_assert_eq!(tokens.len(), gold.len());
        Sentence {
            tokens,
            language: language.into(),
            annotations: Some(gold),
            source: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Corpus { sentences }
    }

    pub fn languages(&self) -> BTreeSet<String> {
        self.sentences.iter().map(|s| s.language.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

impl TagSchema {
    /// Validates and wraps a list of tag types. `NULL` must come first in
    /// every domain.
    pub fn new(tag_types: Vec<TagType>) -> Result<Self> {
        if tag_types.is_empty() {
            return Err(Error::InvalidConfig("schema needs at least one tag type".into()));
        }
        for tag in &tag_types {
            let nulls = tag.labels.iter().filter(|l| *l == NULL_LABEL).count();
            if tag.labels.first().map(String::as_str) != Some(NULL_LABEL) || nulls != 1 {
                return Err(Error::InvalidConfig(format!(
                    "tag type `{}` must list NULL exactly once, first",
                    tag.name
                )));
            }
            let distinct: BTreeSet<&String> = tag.labels.iter().collect();
            if distinct.len() != tag.labels.len() {
                return Err(Error::InvalidConfig(format!("duplicate labels in `{}`", tag.name)));
            }
        }
        let names: BTreeSet<&String> = tag_types.iter().map(|t| &t.name).collect();
        if names.len() != tag_types.len() {
            return Err(Error::InvalidConfig("duplicate tag type names".into()));
        }
        Ok(TagSchema { tag_types })
    }

    pub fn tag_types(&self) -> &[TagType] {
        &self.tag_types
    }

    pub fn num_tags(&self) -> usize {
        self.tag_types.len()
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        self.tag_types.iter().map(TagType::len).collect()
    }

    pub fn tag_index(&self, name: &str) -> Option<usize> {
        self.tag_types.iter().position(|t| t.name == name)
    }

    pub fn tag(&self, m: usize) -> &TagType {
        &self.tag_types[m]
    }

    /// Start offset of each tag type's segment in a flat score vector.
    pub fn label_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.num_tags());
        let mut acc = 0;
        for tag in &self.tag_types {
            offsets.push(acc);
            acc += tag.len();
        }
        offsets
    }

    pub fn total_labels(&self) -> usize {
        self.tag_types.iter().map(TagType::len).sum()
    }

    /// Unordered tag pairs `(i, j)`, `i < j`, in lexicographic order.
    pub fn tag_pairs(&self) -> Vec<(usize, usize)> {
        tag_pairs(self.num_tags())
    }

    /// Maps a partial annotation onto a full assignment, filling NULL.
    pub fn complete(&self, partial: &PartialTags) -> Result<TagAssignment> {
        complete_assignment(partial, self)
    }

    /// Gold assignments of an annotated sentence; errors carry the position.
    pub fn complete_sentence(&self, sentence: &Sentence, index: usize) -> Result<Vec<TagAssignment>> {
        let annotations = sentence
            .annotations
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("sentence {index} has no gold annotations")))?;
        annotations
            .iter()
            .enumerate()
            .map(|(token, partial)| {
                complete_assignment(partial, self).map_err(|e| {
                    let position = Some(Position { sentence: index, token });
                    match e {
                        Error::UnknownTag { tag, .. } => Error::UnknownTag { tag, position },
                        Error::UnknownLabel { tag, label, .. } => Error::UnknownLabel { tag, label, position },
                        other => other,
                    }
                })
            })
            .collect()
    }

    /// Gold assignments for every sentence of `corpus`.
    pub fn complete_corpus(&self, corpus: &Corpus) -> Result<Vec<Vec<TagAssignment>>> {
        corpus
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| self.complete_sentence(s, i))
            .collect()
    }

    /// Non-NULL tags of an assignment as name/label pairs.
    pub fn to_partial(&self, assignment: &TagAssignment) -> PartialTags {
        self.tag_types
            .iter()
            .zip(&assignment.labels)
            .filter(|(_, &l)| l != NULL)
            .map(|(tag, &l)| (tag.name.clone(), tag.labels[l].clone()))
            .collect()
    }

    /// A copy of this schema with tag types and labels from `corpus` that it
    /// lacks appended after the existing ones. Existing indices are unchanged,
    /// so assignments over `self` stay valid once padded with NULL. Used to
    /// score held-out data whose labels the model can never produce.
    pub fn extended_with(&self, corpus: &Corpus) -> TagSchema {
        let mut tag_types = self.tag_types.clone();
        for partial in corpus.sentences.iter().filter_map(|s| s.annotations.as_ref()).flatten() {
            for (name, label) in partial {
                let m = match tag_types.iter().position(|t| &t.name == name) {
                    Some(m) => m,
                    None => {
                        tag_types.push(TagType {
                            name: name.clone(),
                            labels: vec![NULL_LABEL.to_string()],
                        });
                        tag_types.len() - 1
                    }
                };
                if tag_types[m].label_index(label).is_none() {
                    tag_types[m].labels.push(label.clone());
                }
            }
        }
        TagSchema { tag_types }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub(crate) fn tag_pairs(num_tags: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(num_tags * num_tags.saturating_sub(1) / 2);
    for i in 0..num_tags {
        for j in i + 1..num_tags {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Builds the schema from every gold annotation in `corpus`.
///
/// Tag types are sorted by name. Each label domain is `NULL` followed by the
/// observed labels in sorted order, so the result does not depend on the
/// order of sentences.
pub fn build_schema(corpus: &Corpus) -> Result<TagSchema> {
    let mut observed: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for partial in corpus.sentences.iter().filter_map(|s| s.annotations.as_ref()).flatten() {
        for (name, label) in partial {
            observed.entry(name).or_default().insert(label);
        }
    }
    if observed.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let tag_types = observed
        .into_iter()
        .map(|(name, labels)| TagType {
            name: name.to_string(),
            labels: std::iter::once(NULL_LABEL)
                .chain(labels.into_iter().filter(|l| *l != NULL_LABEL))
                .map(str::to_string)
                .collect(),
        })
        .collect();
    TagSchema::new(tag_types)
}

/// Fills every tag type missing from `partial` with NULL.
pub fn complete_assignment(partial: &PartialTags, schema: &TagSchema) -> Result<TagAssignment> {
    let mut assignment = TagAssignment::all_null(schema.num_tags());
    for (name, label) in partial {
        let m = schema.tag_index(name).ok_or_else(|| Error::UnknownTag {
            tag: name.clone(),
            position: None,
        })?;
        assignment.labels[m] = schema.tag(m).label_index(label).ok_or_else(|| Error::UnknownLabel {
            tag: name.clone(),
            label: label.clone(),
            position: None,
        })?;
    }
    Ok(assignment)
}
