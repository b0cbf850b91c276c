//! Seeded synthetic corpora with known tag structure, for tests and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::schema::{Corpus, PartialTags, Sentence};

const STEM_LETTERS: &[char] = &['b', 'd', 'k', 'm', 'p', 'r', 't', 'v'];
const VOWELS: &[char] = &['i', 'u', 'y'];

fn tags(pairs: &[(&str, &str)]) -> PartialTags {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn stem(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables)
        .flat_map(|_| [*STEM_LETTERS.choose(rng).unwrap(), *VOWELS.choose(rng).unwrap()])
        .collect()
}

/// Single tag type (`POS`) following a first-order Markov chain over three
/// labels. Words carry a label-specific final letter most of the time; the
/// rest end in a shared letter and need context.
pub fn chain_corpus(sentences: usize, seed: u64, language: &str) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = ["A", "B", "C"];
    let endings = ['a', 'e', 'o'];
    // next-label distribution per current label
    let next = [[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]];
    let out = (0..sentences)
        .map(|_| {
            let len = rng.gen_range(2..=7);
            let mut label = rng.gen_range(0..3);
            let mut tokens = Vec::with_capacity(len);
            let mut gold = Vec::with_capacity(len);
            for _ in 0..len {
                let mut word = stem(&mut rng, 1);
                word.push(if rng.gen_bool(0.7) { endings[label] } else { 'x' });
                tokens.push(word);
                gold.push(tags(&[("POS", labels[label])]));
                let u: f64 = rng.gen();
                let row = next[label];
                label = if u < row[0] {
                    0
                } else if u < row[0] + row[1] {
                    1
                } else {
                    2
                };
            }
            Sentence::annotated(tokens, language, gold)
        })
        .collect();
    Corpus::new(out)
}

/// Noun phrases with gender and number agreement.
///
/// Each sentence is one or two clauses of the form `Det Noun [Adj] Verb`.
/// Nouns show gender (`-a`/`-o`) and number (`-s`) in their endings.
/// Determiners and adjectives often use gender-neutral forms, and verbs often
/// use a number-neutral form, so those tags are only recoverable from the
/// agreeing neighbour.
pub fn agreement_corpus(sentences: usize, seed: u64, language: &str) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = (0..sentences)
        .map(|_| {
            let mut tokens = Vec::new();
            let mut gold = Vec::new();
            let clauses = rng.gen_range(1..=2);
            for _ in 0..clauses {
                let fem = rng.gen_bool(0.5);
                let plur = rng.gen_bool(0.5);
                let gender = if fem { "Fem" } else { "Masc" };
                let number = if plur { "Plur" } else { "Sing" };
                let s = if plur { "s" } else { "" };

                let det = if rng.gen_bool(0.5) {
                    format!("l{}", if fem { "a" } else { "o" })
                } else {
                    "le".to_string()
                };
                tokens.push(format!("{det}{s}"));
                gold.push(tags(&[("POS", "Det"), ("Gender", gender), ("Number", number)]));

                tokens.push(format!("{}{}{s}", stem(&mut rng, 2), if fem { "a" } else { "o" }));
                gold.push(tags(&[("POS", "Noun"), ("Gender", gender), ("Number", number)]));

                if rng.gen_bool(0.5) {
                    let ending = if rng.gen_bool(0.6) {
                        "e"
                    } else if fem {
                        "a"
                    } else {
                        "o"
                    };
                    tokens.push(format!("gr{ending}{s}"));
                    gold.push(tags(&[("POS", "Adj"), ("Gender", gender), ("Number", number)]));
                }

                let verb = stem(&mut rng, 1);
                let ending = if rng.gen_bool(0.5) {
                    "ez"
                } else if plur {
                    "en"
                } else {
                    "et"
                };
                tokens.push(format!("{verb}{ending}"));
                gold.push(tags(&[("POS", "Verb"), ("Number", number)]));
            }
            Sentence::annotated(tokens, language, gold)
        })
        .collect();
    Corpus::new(out)
}

/// Two tag types, `A` (marked by the first letter) and `B` (marked by the
/// last letter), either of which may be absent. The training corpus never
/// pairs `A=a2` with `B=b2`; the test corpus does, and every test sentence
/// contains such a token.
pub fn unseen_combination_corpus(train: usize, test: usize, seed: u64, language: &str) -> (Corpus, Corpus) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 0 = absent, 1 = first label, 2 = second label
    let token = |rng: &mut ChaCha8Rng, a: usize, b: usize| -> (String, PartialTags) {
        let word = format!("{}{}{}", ['z', 'p', 'q'][a], stem(rng, 1), ['x', 's', 'n'][b]);
        let mut tag_set = PartialTags::new();
        if a > 0 {
            tag_set.insert("A".into(), format!("a{a}"));
        }
        if b > 0 {
            tag_set.insert("B".into(), format!("b{b}"));
        }
        (word, tag_set)
    };
    let seen: Vec<(usize, usize)> = (0..3)
        .flat_map(|a| (0..3).map(move |b| (a, b)))
        .filter(|&p| p != (2, 2))
        .collect();
    let sentence = |rng: &mut ChaCha8Rng, with_unseen: bool| {
        let len = rng.gen_range(2..=5);
        let mut items: Vec<(String, PartialTags)> = (0..len)
            .map(|_| {
                let (a, b) = *seen.choose(rng).unwrap();
                token(rng, a, b)
            })
            .collect();
        if with_unseen {
            let at = rng.gen_range(0..len);
            items[at] = token(rng, 2, 2);
        }
        let (tokens, gold) = items.into_iter().unzip();
        Sentence::annotated(tokens, language, gold)
    };
    let train_corpus = Corpus::new((0..train).map(|_| sentence(&mut rng, false)).collect());
    let test_corpus = Corpus::new((0..test).map(|_| sentence(&mut rng, true)).collect());
    (train_corpus, test_corpus)
}
