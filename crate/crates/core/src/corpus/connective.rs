use std::fs;
use std::path::Path;

use serde::Serialize;

use super::Dataset;
use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../data/connectives.txt");

/// Clause-initial discourse connective phrases, stored as lowercase token
/// sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectiveLexicon {
    phrases: Vec<Vec<String>>,
}

impl ConnectiveLexicon {
    /// Parses one phrase per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        let phrases = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
            .collect();
        ConnectiveLexicon { phrases }
    }

    pub fn from_phrases<S: AsRef<str>>(phrases: &[S]) -> Self {
        ConnectiveLexicon {
            phrases: phrases
                .iter()
                .map(|p| p.as_ref().split_whitespace().map(str::to_lowercase).collect())
                .filter(|p: &Vec<String>| !p.is_empty())
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The bundled 100-entry lexicon.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Length of the longest phrase that is a prefix of `words`, 0 if none.
    pub fn longest_prefix<S: AsRef<str>>(&self, words: &[S]) -> usize {
        self.phrases
            .iter()
            .filter(|p| {
                p.len() <= words.len()
                    && p.iter()
                        .zip(words)
                        .all(|(a, b)| a.as_str() == b.as_ref().to_lowercase())
            })
            .map(Vec::len)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConnectiveReport {
    pub clauses: usize,
    pub marked_clauses: usize,
}

impl ConnectiveReport {
    pub fn fraction(&self) -> f64 {
        if self.clauses == 0 {
            0.0
        } else {
            self.marked_clauses as f64 / self.clauses as f64
        }
    }
}

/// Marks the tokens of each clause-initial connective phrase. All other
/// tokens have `connective_member` cleared.
pub fn mark_connectives(d: &Dataset, lexicon: &ConnectiveLexicon) -> (Dataset, ConnectiveReport) {
    let mut out = d.clone();
    let mut report = ConnectiveReport {
        clauses: 0,
        marked_clauses: 0,
    };
    for clause in out.paragraphs.iter_mut().flat_map(|p| p.clauses.iter_mut()) {
        let words: Vec<&str> = clause.tokens.iter().map(|t| t.surface.as_str()).collect();
        let n = lexicon.longest_prefix(&words);
        for (i, tok) in clause.tokens.iter_mut().enumerate() {
            tok.connective_member = i < n;
        }
        report.clauses += 1;
        if n > 0 {
            report.marked_clauses += 1;
        }
    }
    (out, report)
}
