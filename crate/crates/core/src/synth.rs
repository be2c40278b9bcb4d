//! Seeded synthetic corpora with known label rules.
//!
//! Filler words are `w0 … w{V-1}`; rule-carrying words are `k{label}_{j}`
//! (own-clause keyword) or `c{label}_{j}` (cue read by a neighbouring
//! clause). None of them occur in the connective lexicon, so only the
//! connective task produces connective marks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{mark_connectives, ConnectiveLexicon, Dataset, Paragraph, SeLabel, Token, NUM_LABELS};
use crate::embed::{EmbeddingTable, FeatureVectorizer};

/// One connective per label for the connective task; all are in the
/// bundled lexicon.
pub const LABEL_CONNECTIVES: [&str; NUM_LABELS] = [
    "however",
    "because",
    "for example",
    "as a result",
    "in addition",
    "meanwhile",
    "although",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum SynthTask {
    /// Each clause holds one keyword naming its own label.
    Keyword,
    /// Clause i's label is named by the cue in clause i−1 (clause 0 reads
    /// clause 1). A clause's own cue says nothing about its label.
    Context,
    /// Each clause opens with the connective of its label; the rest is filler.
    Connective,
    /// Labels follow a sticky chain over the first `labels` labels
    /// (stay with probability `stay`); each clause's keyword names its
    /// label with probability `cue_rate`. Otherwise the clause holds a
    /// uniformly random keyword, or only filler when `blank` is set.
    LabelRuns {
        labels: usize,
        stay: f64,
        cue_rate: f64,
        #[serde(default)]
        blank: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub paragraphs: usize,
    pub min_clauses: usize,
    pub max_clauses: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub filler_vocab: usize,
    /// Distinct rule words per label.
    pub synonyms: usize,
    pub genres: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            paragraphs: 200,
            min_clauses: 2,
            max_clauses: 6,
            min_tokens: 3,
            max_tokens: 7,
            filler_vocab: 200,
            synonyms: 2,
            genres: 2,
            seed: 0,
        }
    }
}

const POS_CYCLE: [&str; 5] = ["NN", "VBZ", "DT", "JJ", "IN"];

fn token(surface: String, i: usize) -> Token {
    Token::new(surface, POS_CYCLE[i % POS_CYCLE.len()], "O")
}

impl SynthSpec {
    fn filler(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Token> {
        (0..n)
            .map(|i| token(format!("w{}", rng.gen_range(0..self.filler_vocab)), i))
            .collect()
    }

    /// Filler tokens with `word` inserted at a random position.
    fn clause_with(&self, rng: &mut ChaCha8Rng, word: String) -> Vec<Token> {
        let n = rng.gen_range(self.min_tokens..=self.max_tokens);
        let mut toks = self.filler(rng, n - 1);
        let at = rng.gen_range(0..n);
        toks.insert(at, token(word, at));
        toks
    }

    fn rule_word(&self, rng: &mut ChaCha8Rng, prefix: char, label: usize) -> String {
        format!("{prefix}{label}_{}", rng.gen_range(0..self.synonyms))
    }
}

pub fn generate(task: &SynthTask, spec: &SynthSpec) -> Dataset {
    assert!(spec.min_clauses >= 1 && spec.min_clauses <= spec.max_clauses);
    assert!(spec.min_tokens >= 1 && spec.min_tokens <= spec.max_tokens);
    let min_clauses = match task {
        SynthTask::Context => spec.min_clauses.max(2),
        _ => spec.min_clauses,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let paragraphs = (0..spec.paragraphs)
        .map(|p| {
            let n = rng.gen_range(min_clauses..=spec.max_clauses.max(min_clauses));
            let clauses = match task {
                SynthTask::Keyword => (0..n)
                    .map(|_| {
                        let label = rng.gen_range(0..NUM_LABELS);
                        let word = spec.rule_word(&mut rng, 'k', label);
                        (label, spec.clause_with(&mut rng, word))
                    })
                    .collect::<Vec<_>>(),
                SynthTask::Context => {
                    let cues: Vec<usize> = (0..n).map(|_| rng.gen_range(0..NUM_LABELS)).collect();
                    (0..n)
                        .map(|i| {
                            let label = if i == 0 { cues[1] } else { cues[i - 1] };
                            let word = spec.rule_word(&mut rng, 'c', cues[i]);
                            (label, spec.clause_with(&mut rng, word))
                        })
                        .collect()
                }
                SynthTask::Connective => (0..n)
                    .map(|_| {
                        let label = rng.gen_range(0..NUM_LABELS);
                        let mut toks: Vec<Token> = LABEL_CONNECTIVES[label]
                            .split(' ')
                            .enumerate()
                            .map(|(i, w)| token(w.to_string(), i))
                            .collect();
                        let body = rng.gen_range(spec.min_tokens..=spec.max_tokens);
                        toks.extend(spec.filler(&mut rng, body));
                        (label, toks)
                    })
                    .collect(),
                SynthTask::LabelRuns { labels, stay, cue_rate, blank } => {
                    let k = (*labels).clamp(2, NUM_LABELS);
                    let mut label = rng.gen_range(0..k);
                    (0..n)
                        .map(|i| {
                            if i > 0 && !rng.gen_bool(*stay) {
                                let others: Vec<usize> = (0..k).filter(|&l| l != label).collect();
                                label = *others.choose(&mut rng).expect("k >= 2");
                            }
                            if rng.gen_bool(*cue_rate) {
                                let word = spec.rule_word(&mut rng, 'k', label);
                                (label, spec.clause_with(&mut rng, word))
                            } else if *blank {
                                let n = rng.gen_range(spec.min_tokens..=spec.max_tokens);
                                (label, spec.filler(&mut rng, n))
                            } else {
                                let shown = rng.gen_range(0..k);
                                let word = spec.rule_word(&mut rng, 'k', shown);
                                (label, spec.clause_with(&mut rng, word))
                            }
                        })
                        .collect()
                }
            };
            let clauses = clauses
                .into_iter()
                .map(|(l, toks)| (SeLabel::from_index(l), toks))
                .collect();
            Paragraph::new(format!("synth{p:05}"), format!("g{}", p % spec.genres.max(1)), clauses)
        })
        .collect();
    let d = Dataset::new(paragraphs);
    match task {
        SynthTask::Connective => mark_connectives(&d, &ConnectiveLexicon::builtin()).0,
        _ => d,
    }
}

/// Vectorizer over an empty table: every word gets its seeded random vector.
pub fn synth_vectorizer(dim: usize, seed: u64) -> FeatureVectorizer {
    FeatureVectorizer::new(EmbeddingTable::empty(dim, seed))
}
