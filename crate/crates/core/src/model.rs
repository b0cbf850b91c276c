//! Model files: a versioned JSON envelope around a trained tagger and the
//! configuration that produced it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_predict, tagwise_predict, BaselineModel};
use crate::error::{Error, Result};
use crate::fcrf::FcrfModel;
use crate::graph::FactorSet;
use crate::schema::{Corpus, Sentence, TagAssignment, TagSchema};

const MODEL_FORMAT: &str = "morphfg-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum Model {
    /// Also covers the tag-wise model and the ablations, which differ only
    /// in their factor set.
    Fcrf(FcrfModel),
    Baseline(BaselineModel),
}

impl Model {
    /// `fcrf`, `tagwise` or `baseline`.
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Fcrf(m) if m.factor_set == FactorSet::NONE => "tagwise",
            Model::Fcrf(_) => "fcrf",
            Model::Baseline(_) => "baseline",
        }
    }

    pub fn schema(&self) -> &TagSchema {
        match self {
            Model::Fcrf(m) => &m.schema,
            Model::Baseline(m) => &m.schema,
        }
    }

    pub fn languages(&self) -> &[String] {
        match self {
            Model::Fcrf(m) => m.languages(),
            Model::Baseline(m) => m.languages(),
        }
    }

    pub fn predict(&self, sentence: &Sentence, fallback: Option<&str>) -> Result<Vec<TagAssignment>> {
        match self {
            Model::Fcrf(m) if m.factor_set == FactorSet::NONE => tagwise_predict(m, sentence, fallback),
            Model::Fcrf(m) => m.predict(sentence, fallback),
            Model::Baseline(m) => baseline_predict(m, sentence, fallback),
        }
    }

    pub fn predict_corpus(&self, corpus: &Corpus, fallback: Option<&str>) -> Result<Vec<Vec<TagAssignment>>> {
        use rayon::prelude::*;
        corpus.sentences.par_iter().map(|s| self.predict(s, fallback)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    /// Resolved run configuration, stored verbatim.
    pub config: serde_json::Value,
    #[serde(flatten)]
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model, config: serde_json::Value) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            config,
            model,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::BpConfig;
    use crate::nn::EmitterConfig;
    use crate::params::Parameters;
    use crate::synth::chain_corpus;

    fn model(set: FactorSet) -> FcrfModel {
        let c = chain_corpus(3, 1, "xx");
        let schema = crate::schema::build_schema(&c).unwrap();
        let cfg = EmitterConfig {
            char_dim: 2,
            word_hidden: 3,
            word_layers: 1,
        };
        FcrfModel::for_corpus(&c, schema, cfg, set, BpConfig::default(), 4)
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = std::env::temp_dir().join(format!("morphfg-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.json");
        let mut m = model(FactorSet::FULL);
        m.params.factors.tensors_mut()[0][0] = 0.1 + 0.2;
        let file = ModelFile::new(Model::Fcrf(m), serde_json::json!({"seed": 4}));
        file.save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.model.kind(), "fcrf");

        let mut text: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        text["version"] = 99.into();
        std::fs::write(&path, text.to_string()).unwrap();
        assert!(matches!(ModelFile::load(&path), Err(Error::ModelFormat(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn kind_names() {
        assert_eq!(Model::Fcrf(model(FactorSet::NONE)).kind(), "tagwise");
        let partial = FactorSet {
            transition: true,
            pairwise: false,
        };
        assert_eq!(Model::Fcrf(model(partial)).kind(), "fcrf");
    }
}
