//! Paragraph/clause data model, the line-delimited corpus format, and
//! corpus statistics.
//!
//! Each line of a corpus file is one JSON paragraph object:
//!
//! ```text
//! {"doc_id":"d1","genre":"news","clauses":[{"label":"STATE","tokens":[{"w":"It","pos":"PRP","ne":"O"}]}]}
//! ```
//!
//! `label` may be `null` for unlabeled prediction input.

mod connective;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use connective::{mark_connectives, ConnectiveLexicon, ConnectiveReport};
pub use split::{genre_folds, holdout_split, kfold_split, Fold, SplitSpec};

/// Situation entity type of a clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeLabel {
    State,
    Event,
    Report,
    Generic,
    Generalizing,
    Question,
    Imperative,
}

pub const NUM_LABELS: usize = 7;

impl SeLabel {
    /// Enumeration order; also the tie-breaking order for decoding.
    pub const ALL: [SeLabel; NUM_LABELS] = [
        SeLabel::State,
        SeLabel::Event,
        SeLabel::Report,
        SeLabel::Generic,
        SeLabel::Generalizing,
        SeLabel::Question,
        SeLabel::Imperative,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SeLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeLabel::State => "STATE",
            SeLabel::Event => "EVENT",
            SeLabel::Report => "REPORT",
            SeLabel::Generic => "GENERIC",
            SeLabel::Generalizing => "GENERALIZING",
            SeLabel::Question => "QUESTION",
            SeLabel::Imperative => "IMPERATIVE",
        }
    }
}

impl fmt::Display for SeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        SeLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// The 36 Penn Treebank word-level tags. Punctuation tags are not part of
/// the inventory and vectorize to an all-zero block.
pub const POS_TAGS: [&str; 36] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS",
    "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG",
    "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB",
];

/// Punctuation and bracket tags that are expected from a PTB tagger and map
/// to the fallback block without being reported as unknown.
pub const POS_PUNCTUATION: [&str; 12] = [
    ".", ",", ":", "``", "''", "-LRB-", "-RRB-", "$", "#", "HYPH", "NFP", "-NONE-",
];

pub const NE_TAGS: [&str; 7] = [
    "PERSON",
    "LOCATION",
    "ORGANIZATION",
    "DATE",
    "TIME",
    "NUMBER",
    "MISC",
];

/// Untagged / outside-entity symbol. Encoded as the all-zero NE block.
pub const NE_OUTSIDE: &str = "O";

pub fn pos_index(tag: &str) -> Option<usize> {
    POS_TAGS.iter().position(|t| *t == tag)
}

pub fn ne_index(tag: &str) -> Option<usize> {
    NE_TAGS.iter().position(|t| *t == tag)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    pub ne: String,
    /// Set by [`mark_connectives`] for tokens of a clause-initial connective.
    pub connective_member: bool,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>, ne: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            pos: pos.into(),
            ne: ne.into(),
            connective_member: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clause {
    pub tokens: Vec<Token>,
    pub gold: Option<SeLabel>,
    pub clause_index: usize,
}

impl Clause {
    pub fn has_connective(&self) -> bool {
        self.tokens.first().is_some_and(|t| t.connective_member)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Paragraph {
    pub doc_id: String,
    pub genre: String,
    pub clauses: Vec<Clause>,
}

impl Paragraph {
    /// Builds a paragraph from `(label, tokens)` pairs, numbering clauses.
    pub fn new(
        doc_id: impl Into<String>,
        genre: impl Into<String>,
        clauses: Vec<(Option<SeLabel>, Vec<Token>)>,
    ) -> Self {
        Paragraph {
            doc_id: doc_id.into(),
            genre: genre.into(),
            clauses: clauses
                .into_iter()
                .enumerate()
                .map(|(clause_index, (gold, tokens))| Clause {
                    tokens,
                    gold,
                    clause_index,
                })
                .collect(),
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.clauses.iter().map(|c| c.tokens.len()).sum()
    }

    /// Gold labels in clause order, or an error naming the first unlabeled clause.
    pub fn gold_labels(&self) -> Result<Vec<SeLabel>> {
        self.clauses
            .iter()
            .map(|c| {
                c.gold.ok_or_else(|| Error::MissingLabel {
                    doc_id: self.doc_id.clone(),
                    clause: c.clause_index,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub paragraphs: Vec<Paragraph>,
    pub genres: BTreeSet<String>,
}

impl Dataset {
    pub fn new(paragraphs: Vec<Paragraph>) -> Self {
        let genres = paragraphs.iter().map(|p| p.genre.clone()).collect();
        Dataset { paragraphs, genres }
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn num_clauses(&self) -> usize {
        self.paragraphs.iter().map(|p| p.clauses.len()).sum()
    }

    pub fn num_tokens(&self) -> usize {
        self.paragraphs.iter().map(Paragraph::num_tokens).sum()
    }

    /// Paragraphs at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset::new(indices.iter().map(|&i| self.paragraphs[i].clone()).collect())
    }

    /// All gold labels in corpus order.
    pub fn gold_labels(&self) -> Result<Vec<SeLabel>> {
        let mut out = Vec::with_capacity(self.num_clauses());
        for p in &self.paragraphs {
            out.extend(p.gold_labels()?);
        }
        Ok(out)
    }

    /// Counts of each label, ignoring unlabeled clauses.
    pub fn label_counts(&self) -> [usize; NUM_LABELS] {
        let mut counts = [0; NUM_LABELS];
        for c in self.paragraphs.iter().flat_map(|p| &p.clauses) {
            if let Some(l) = c.gold {
                counts[l.index()] += 1;
            }
        }
        counts
    }
}

/// Symbols seen while loading that are outside the tag inventories.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadReport {
    pub unknown_pos: BTreeMap<String, usize>,
    pub unknown_ne: BTreeMap<String, usize>,
}

impl LoadReport {
    fn observe(&mut self, tok: &Token) {
        if pos_index(&tok.pos).is_none() && !POS_PUNCTUATION.contains(&tok.pos.as_str()) {
            *self.unknown_pos.entry(tok.pos.clone()).or_default() += 1;
        }
        if ne_index(&tok.ne).is_none() && tok.ne != NE_OUTSIDE {
            *self.unknown_ne.entry(tok.ne.clone()).or_default() += 1;
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawToken {
    w: String,
    pos: String,
    ne: String,
}

#[derive(Serialize, Deserialize)]
struct RawClause {
    label: Option<String>,
    tokens: Vec<RawToken>,
}

#[derive(Serialize, Deserialize)]
struct RawParagraph {
    doc_id: String,
    genre: String,
    clauses: Vec<RawClause>,
}

fn parse_paragraph(line: &str, line_no: usize, report: &mut LoadReport) -> Result<Paragraph> {
    let raw: RawParagraph = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    if raw.clauses.is_empty() {
        return Err(Error::EmptyParagraph { line: line_no });
    }
    let mut clauses = Vec::with_capacity(raw.clauses.len());
    for (clause_index, rc) in raw.clauses.into_iter().enumerate() {
        if rc.tokens.is_empty() {
            return Err(Error::EmptyClause {
                line: line_no,
                clause: clause_index,
            });
        }
        let gold = match rc.label {
            None => None,
            Some(s) => Some(s.parse::<SeLabel>().map_err(|label| Error::UnknownLabel {
                line: line_no,
                label,
            })?),
        };
        let tokens = rc
            .tokens
            .into_iter()
            .map(|t| {
                let tok = Token::new(t.w, t.pos, t.ne);
                report.observe(&tok);
                tok
            })
            .collect();
        clauses.push(Clause {
            tokens,
            gold,
            clause_index,
        });
    }
    Ok(Paragraph {
        doc_id: raw.doc_id,
        genre: raw.genre,
        clauses,
    })
}

/// Parses a corpus stream. Blank lines are skipped; line numbers are 1-based.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<(Dataset, LoadReport)> {
    let mut report = LoadReport::default();
    let mut paragraphs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        paragraphs.push(parse_paragraph(&line, i + 1, &mut report)?);
    }
    Ok((Dataset::new(paragraphs), report))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}

pub fn write_corpus<W: Write>(d: &Dataset, mut writer: W) -> Result<()> {
    for p in &d.paragraphs {
        let raw = RawParagraph {
            doc_id: p.doc_id.clone(),
            genre: p.genre.clone(),
            clauses: p
                .clauses
                .iter()
                .map(|c| RawClause {
                    label: c.gold.map(|l| l.as_str().to_string()),
                    tokens: c
                        .tokens
                        .iter()
                        .map(|t| RawToken {
                            w: t.surface.clone(),
                            pos: t.pos.clone(),
                            ne: t.ne.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &raw)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_corpus(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(d, BufWriter::new(file))
}

/// Per-label counts, overall and per genre.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub paragraphs: usize,
    pub clauses: usize,
    pub tokens: usize,
    pub counts: [usize; NUM_LABELS],
    pub by_genre: BTreeMap<String, [usize; NUM_LABELS]>,
}

impl CorpusStats {
    pub fn count(&self, label: SeLabel) -> usize {
        self.counts[label.index()]
    }

    /// Label percentages within one genre, or `None` for an unknown genre.
    pub fn genre_percentages(&self, genre: &str) -> Option<[f64; NUM_LABELS]> {
        self.by_genre.get(genre).map(percentages)
    }

    pub fn percentages(&self) -> [f64; NUM_LABELS] {
        percentages(&self.counts)
    }

    /// Percentages over the union of the given genres (e.g. all MASC genres).
    pub fn group_percentages<'a>(
        &self,
        genres: impl IntoIterator<Item = &'a str>,
    ) -> [f64; NUM_LABELS] {
        let mut acc = [0; NUM_LABELS];
        for g in genres {
            if let Some(c) = self.by_genre.get(g) {
                for (a, x) in acc.iter_mut().zip(c) {
                    *a += x;
                }
            }
        }
        percentages(&acc)
    }
}

fn percentages(counts: &[usize; NUM_LABELS]) -> [f64; NUM_LABELS] {
    let total: usize = counts.iter().sum();
    let mut out = [0.0; NUM_LABELS];
    if total > 0 {
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = 100.0 * c as f64 / total as f64;
        }
    }
    out
}

pub fn corpus_stats(d: &Dataset) -> Result<CorpusStats> {
    let mut counts = [0; NUM_LABELS];
    let mut by_genre: BTreeMap<String, [usize; NUM_LABELS]> = BTreeMap::new();
    for p in &d.paragraphs {
        let g = by_genre.entry(p.genre.clone()).or_default();
        for l in p.gold_labels()? {
            counts[l.index()] += 1;
            g[l.index()] += 1;
        }
    }
    let clauses = d.num_clauses();
    if clauses == 0 {
        return Err(Error::NoLabeledClauses);
    }
    Ok(CorpusStats {
        paragraphs: d.len(),
        clauses,
        tokens: d.num_tokens(),
        counts,
        by_genre,
    })
}
