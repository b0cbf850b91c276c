//! CoNLL-U reading and writing, and the HRL/LRL training mixtures.
//!
//! Only FORM, UPOS and FEATS are consumed. UPOS becomes the `POS` tag with a
//! title-cased label (`ADJ` becomes `Adj`); every `Key=Value` pair in FEATS
//! becomes its own tag. Multi-valued features such as `Case=Acc,Nom` are kept
//! as one atomic label.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Position, Result};
use crate::schema::{Corpus, PartialTags, Sentence};

pub const POS_TAG: &str = "POS";

const COLUMNS: usize = 10;
const FORM: usize = 1;
const UPOS: usize = 3;
const FEATS: usize = 5;

/// `ADJ` -> `Adj`, `PROPN` -> `Propn`.
pub fn pos_label(upos: &str) -> String {
    let mut chars = upos.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars.flat_map(char::to_lowercase)).collect(),
        None => String::new(),
    }
}

/// Inverse of [`pos_label`] for UD tags.
pub fn upos_from_label(label: &str) -> String {
    label.to_uppercase()
}

fn is_word_line(id: &str) -> bool {
    !id.contains('-') && !id.contains('.')
}

/// Parses CoNLL-U text into one [`Sentence`] per block.
pub fn parse_conllu(text: &str, language: &str) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut block: Vec<String> = Vec::new();
    let mut tokens = Vec::new();
    let mut gold = Vec::new();

    let mut flush = |block: &mut Vec<String>, tokens: &mut Vec<String>, gold: &mut Vec<PartialTags>| {
        if !tokens.is_empty() {
            sentences.push(Sentence {
                tokens: std::mem::take(tokens),
                language: language.to_string(),
                annotations: Some(std::mem::take(gold)),
                source: Some(std::mem::take(block)),
            });
        }
        block.clear();
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_number = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut block, &mut tokens, &mut gold);
            continue;
        }
        block.push(line.to_string());
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != COLUMNS {
            return Err(Error::Conllu {
                line: line_number,
                message: format!("expected {COLUMNS} tab-separated columns, found {}", cols.len()),
            });
        }
        if !is_word_line(cols[0]) {
            continue;
        }
        if cols[FORM].is_empty() {
            return Err(Error::EmptyToken {
                position: Some(Position {
                    sentence: sentences.len(),
                    token: tokens.len(),
                }),
            });
        }
        let mut tags = PartialTags::new();
        if cols[UPOS] != "_" {
            tags.insert(POS_TAG.to_string(), pos_label(cols[UPOS]));
        }
        if cols[FEATS] != "_" {
            for pair in cols[FEATS].split('|') {
                let (key, value) = pair.split_once('=').ok_or_else(|| Error::Conllu {
                    line: line_number,
                    message: format!("malformed feature `{pair}`"),
                })?;
                tags.insert(key.to_string(), value.to_string());
            }
        }
        tokens.push(cols[FORM].to_string());
        gold.push(tags);
    }
    flush(&mut block, &mut tokens, &mut gold);
    Ok(Corpus::new(sentences))
}

fn feats_column(tags: &PartialTags) -> String {
    let mut feats: Vec<(&String, &String)> = tags.iter().filter(|(k, _)| *k != POS_TAG).collect();
    if feats.is_empty() {
        return "_".to_string();
    }
    feats.sort_by_key(|(k, _)| k.to_lowercase());
    feats
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("|")
}

fn upos_column(tags: &PartialTags) -> String {
    tags.get(POS_TAG)
        .map_or_else(|| "_".to_string(), |l| upos_from_label(l))
}

fn minimal_block(sentence: &Sentence, tags: Option<&[PartialTags]>, out: &mut String) {
    for (i, token) in sentence.tokens.iter().enumerate() {
        let (upos, feats) = match tags {
            Some(tags) => (upos_column(&tags[i]), feats_column(&tags[i])),
            None => ("_".to_string(), "_".to_string()),
        };
        out.push_str(&format!("{}\t{token}\t_\t{upos}\t_\t{feats}\t_\t_\t_\t_\n", i + 1));
    }
    out.push('\n');
}

/// Serializes the gold annotations of `corpus` as minimal CoNLL-U.
pub fn write_conllu(corpus: &Corpus) -> String {
    let mut out = String::new();
    for sentence in &corpus.sentences {
        minimal_block(sentence, sentence.annotations.as_deref(), &mut out);
    }
    out
}

/// Writes `predicted` tags for one sentence. When the sentence was read from
/// CoNLL-U, its original lines are reproduced with UPOS and FEATS replaced.
pub fn write_predictions(sentence: &Sentence, predicted: &[PartialTags], out: &mut String) {
    let Some(lines) = &sentence.source else {
        minimal_block(sentence, Some(predicted), out);
        return;
    };
    let mut word = 0;
    for line in lines {
        let mut cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        if line.starts_with('#') || cols.len() != COLUMNS || !is_word_line(&cols[0]) {
            out.push_str(line);
        } else {
            cols[UPOS] = upos_column(&predicted[word]);
            cols[FEATS] = feats_column(&predicted[word]);
            out.push_str(&cols.join("\t"));
            word += 1;
        }
        out.push('\n');
    }
    out.push('\n');
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Subsample {
    /// The first `tgt_size` sentences in file order.
    #[default]
    First,
    /// `tgt_size` sentences drawn without replacement, kept in file order.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub tgt_size: usize,
    pub upsample_factor: usize,
    pub hrl_language: String,
    pub lrl_language: String,
    #[serde(default)]
    pub subsample: Subsample,
}

/// All HRL sentences followed by `tgt_size` LRL sentences repeated
/// `upsample_factor` times.
pub fn make_training_mixture(hrl: &Corpus, lrl: &Corpus, cfg: &SplitConfig) -> Result<Corpus> {
    if hrl.is_empty() {
        return Err(Error::NoTrainingData);
    }
    if cfg.upsample_factor == 0 {
        return Err(Error::InvalidConfig("upsample factor must be at least 1".into()));
    }
    if lrl.len() < cfg.tgt_size {
        return Err(Error::NotEnoughSentences {
            requested: cfg.tgt_size,
            available: lrl.len(),
        });
    }
    for (corpus, expected) in [(hrl, &cfg.hrl_language), (lrl, &cfg.lrl_language)] {
        if let Some(s) = corpus.sentences.iter().find(|s| &s.language != expected) {
            return Err(Error::InvalidConfig(format!(
                "sentence language `{}` does not match configured `{expected}`",
                s.language
            )));
        }
    }

    let selected: Vec<&Sentence> = match cfg.subsample {
        Subsample::First => lrl.sentences.iter().take(cfg.tgt_size).collect(),
        Subsample::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, lrl.len(), cfg.tgt_size).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| &lrl.sentences[i]).collect()
        }
    };

    let mut sentences = hrl.sentences.clone();
    sentences.reserve(selected.len() * cfg.upsample_factor);
    for _ in 0..cfg.upsample_factor {
        sentences.extend(selected.iter().map(|s| (*s).clone()));
    }
    Ok(Corpus::new(sentences))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "# sent_id = 1\n\
# text = O refrescante.\n\
1\tO\to\tDET\t_\tDefinite=Def|Gender=Masc|Number=Sing|PronType=Art\t2\tdet\t_\t_\n\
2\trefrescante\trefrescante\tADJ\t_\tGender=Masc|Number=Sing\t0\troot\t_\tSpaceAfter=No\n\
3\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\t_\n\
\n\
1-2\tdo\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tde\tde\tADP\t_\t_\t3\tcase\t_\t_\n\
2\to\to\tDET\t_\tGender=Masc\t3\tdet\t_\t_\n\
2.1\tx\tx\tNOUN\t_\t_\t_\t_\t_\t_\n\
3\tCase\tcase\tNOUN\t_\tCase=Acc,Nom\t0\troot\t_\t_\n\
\n";

    fn tags(pairs: &[(&str, &str)]) -> PartialTags {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parses_upos_and_feats() {
        let corpus = parse_conllu(SAMPLE, "pt").unwrap();
        assert_eq!(corpus.len(), 2);
        let s = &corpus.sentences[0];
        assert_eq!(s.tokens, vec!["O", "refrescante", "."]);
        assert_eq!(s.language, "pt");
        let gold = s.annotations.as_ref().unwrap();
        assert_eq!(gold[1], tags(&[("POS", "Adj"), ("Gender", "Masc"), ("Number", "Sing")]));
        assert_eq!(gold[2], tags(&[("POS", "Punct")]));
    }

    #[test]
    fn skips_ranges_and_empty_nodes() {
        let corpus = parse_conllu(SAMPLE, "pt").unwrap();
        let s = &corpus.sentences[1];
        assert_eq!(s.tokens, vec!["de", "o", "Case"]);
        assert_eq!(s.annotations.as_ref().unwrap()[2]["Case"], "Acc,Nom");
    }

    #[test]
    fn comments_only_is_empty() {
        let corpus = parse_conllu("# a\n# b\n\n# c\n", "xx").unwrap();
        assert!(corpus.is_empty());
        assert!(parse_conllu("", "xx").unwrap().is_empty());
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let text = "# c\n1\ta\ta\tNOUN\t_\t_\t0\troot\t_\t_\n2\tb\tb\tNOUN\n";
        let err = parse_conllu(text, "xx").unwrap_err();
        assert!(matches!(err, Error::Conllu { line: 3, .. }), "{err}");
    }

    #[test]
    fn predictions_overwrite_original_columns() {
        let corpus = parse_conllu(SAMPLE, "pt").unwrap();
        let s = &corpus.sentences[0];
        let pred = vec![
            tags(&[("POS", "Det")]),
            tags(&[("POS", "Noun"), ("Number", "Plur")]),
            tags(&[]),
        ];
        let mut out = String::new();
        write_predictions(s, &pred, &mut out);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "# sent_id = 1");
        assert_eq!(
            lines[3],
            "2\trefrescante\trefrescante\tNOUN\t_\tNumber=Plur\t0\troot\t_\tSpaceAfter=No"
        );
        assert_eq!(lines[4], "3\t.\t.\t_\t_\t_\t2\tpunct\t_\t_");
    }

    fn corpus_of(n: usize, lang: &str) -> Corpus {
        Corpus::new(
            (0..n)
                .map(|i| Sentence::annotated(vec![format!("{lang}{i}")], lang, vec![tags(&[("POS", "X")])]))
                .collect(),
        )
    }

    fn split(tgt_size: usize, upsample_factor: usize) -> SplitConfig {
        SplitConfig {
            tgt_size,
            upsample_factor,
            hrl_language: "da".into(),
            lrl_language: "sv".into(),
            subsample: Subsample::First,
        }
    }

    #[test]
    fn mixture_sizes() {
        let hrl = corpus_of(4383, "da");
        let lrl = corpus_of(1200, "sv");
        assert_eq!(make_training_mixture(&hrl, &lrl, &split(100, 10)).unwrap().len(), 5383);
        let m = make_training_mixture(&hrl, &lrl, &split(1000, 1)).unwrap();
        assert_eq!(m.len(), 5383);
        assert_eq!(m.sentences[4383].tokens[0], "sv0");
        assert_eq!(m.sentences[5382].tokens[0], "sv999");
        assert_eq!(make_training_mixture(&hrl, &lrl, &split(0, 1)).unwrap(), hrl);
    }

    #[test]
    fn upsampling_repeats_the_first_sentences() {
        let m = make_training_mixture(&corpus_of(2, "da"), &corpus_of(5, "sv"), &split(2, 3)).unwrap();
        let words: Vec<&str> = m.sentences.iter().map(|s| s.tokens[0].as_str()).collect();
        assert_eq!(words, vec!["da0", "da1", "sv0", "sv1", "sv0", "sv1", "sv0", "sv1"]);
    }

    #[test]
    fn too_few_lrl_sentences() {
        let err = make_training_mixture(&corpus_of(2, "da"), &corpus_of(5, "sv"), &split(10, 1)).unwrap_err();
        assert_eq!(
            err.to_string(),
            "low-resource corpus has 5 sentences but tgt_size is 10"
        );
    }

    #[test]
    fn random_subsample_is_seeded() {
        let mut cfg = split(3, 1);
        cfg.subsample = Subsample::Random { seed: 11 };
        let a = make_training_mixture(&corpus_of(1, "da"), &corpus_of(50, "sv"), &cfg).unwrap();
        let b = make_training_mixture(&corpus_of(1, "da"), &corpus_of(50, "sv"), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }

    fn arb_sentence() -> impl Strategy<Value = Sentence> {
        let token = "[a-zA-Zéãç]{1,6}";
        let upos = prop::option::of(prop::sample::select(vec!["NOUN", "VERB", "ADJ", "PROPN"]));
        let feats = prop::collection::btree_map(
            prop::sample::select(vec!["Case", "Gender", "Number", "Tense"]).prop_map(String::from),
            prop::sample::select(vec!["Acc", "Masc", "Sing", "Past", "Acc,Nom"]).prop_map(String::from),
            0..3,
        );
        prop::collection::vec((token, upos, feats), 1..5).prop_map(|toks| {
            let mut tokens = Vec::new();
            let mut gold = Vec::new();
            for (t, upos, mut feats) in toks {
                if let Some(u) = upos {
                    feats.insert(POS_TAG.to_string(), pos_label(u));
                }
                tokens.push(t);
                gold.push(feats);
            }
            Sentence::annotated(tokens, "xx", gold)
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_round_trips(sentences in prop::collection::vec(arb_sentence(), 0..4)) {
            let corpus = Corpus::new(sentences);
            let mut parsed = parse_conllu(&write_conllu(&corpus), "xx").unwrap();
            for s in &mut parsed.sentences {
                s.source = None;
            }
            prop_assert_eq!(parsed, corpus);
        }

        #[test]
        fn mixture_size_law(h in 1usize..20, l in 0usize..20, tgt in 0usize..20, up in 1usize..5) {
            prop_assume!(tgt <= l);
            let m = make_training_mixture(&corpus_of(h, "da"), &corpus_of(l, "sv"), &split(tgt, up)).unwrap();
            prop_assert_eq!(m.len(), h + tgt * up);
            prop_assert!(m.sentences.iter().all(|s| s.language == "da" || s.language == "sv"));
        }
    }
}
