//! Feature-rich token vectors: a frozen word embedding followed by POS and
//! NE one-hot blocks.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::RwLock;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ne_index, pos_index, Paragraph, Token, NE_TAGS, POS_TAGS};
use crate::error::{Error, Result};

pub const DEFAULT_EMBEDDING_DIM: usize = 300;
pub const POS_DIM: usize = POS_TAGS.len();
pub const NE_DIM: usize = NE_TAGS.len();

/// Half-width of the uniform range used for out-of-vocabulary vectors.
pub const OOV_RANGE: f64 = 0.25;

/// Half-open token range `[start, end)` of one clause within a paragraph.
pub type Span = (usize, usize);

/// Word vectors keyed by surface form. Unknown forms receive a random
/// vector drawn once per form and memoized.
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    oov_seed: u64,
    oov: RwLock<HashMap<String, Vec<f64>>>,
}

/// Counts from [`EmbeddingTable::read`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub rows: usize,
    pub skipped: usize,
    pub header_skipped: bool,
}

// 64-bit FNV-1a, used only to give each OOV surface form its own
// deterministic random stream.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl EmbeddingTable {
    /// An empty table: every lookup is out-of-vocabulary.
    pub fn empty(dim: usize, oov_seed: u64) -> Self {
        EmbeddingTable {
            dim,
            entries: HashMap::new(),
            oov_seed,
            oov: RwLock::new(HashMap::new()),
        }
    }

    pub fn from_entries(
        dim: usize,
        entries: HashMap<String, Vec<f64>>,
        oov_seed: u64,
    ) -> Result<Self> {
        if let Some((w, v)) = entries.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Embedding(format!(
                "vector for {w:?} has {} components, expected {dim}",
                v.len()
            )));
        }
        Ok(EmbeddingTable {
            entries,
            ..Self::empty(dim, oov_seed)
        })
    }

    /// Reads `<token> <v1> ... <vd>` rows. A leading `<vocab> <dim>` header
    /// is detected and skipped; rows of the wrong arity or with unparseable
    /// numbers are skipped and counted.
    pub fn read<R: BufRead>(reader: R, dim: usize, oov_seed: u64) -> Result<(Self, LoadStats)> {
        let mut stats = LoadStats::default();
        let mut entries = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else {
                continue;
            };
            let rest: Vec<&str> = fields.collect();
            if i == 0
                && rest.len() == 1
                && word.parse::<usize>().is_ok()
                && rest[0].parse::<usize>().is_ok()
            {
                stats.header_skipped = true;
                continue;
            }
            if rest.len() != dim {
                stats.skipped += 1;
                continue;
            }
            match rest.iter().map(|x| x.parse::<f64>()).collect::<Result<Vec<_>, _>>() {
                Ok(v) if v.iter().all(|x| x.is_finite()) => {
                    entries.insert(word.to_string(), v);
                    stats.rows += 1;
                }
                _ => stats.skipped += 1,
            }
        }
        if entries.is_empty() {
            return Err(Error::Embedding(format!(
                "no usable rows of dimension {dim} ({} skipped)",
                stats.skipped
            )));
        }
        stats.rows = entries.len();
        Ok((Self::from_entries(dim, entries, oov_seed)?, stats))
    }

    pub fn load(path: impl AsRef<Path>, dim: usize, oov_seed: u64) -> Result<(Self, LoadStats)> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), dim, oov_seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Exact match, then lowercase match, then the memoized OOV vector.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        if let Some(v) = self.entries.get(word) {
            return v.clone();
        }
        let lower = word.to_lowercase();
        if let Some(v) = self.entries.get(&lower) {
            return v.clone();
        }
        self.oov_vector(word)
    }

    fn oov_vector(&self, word: &str) -> Vec<f64> {
        if let Some(v) = self.oov.read().expect("oov memo poisoned").get(word) {
            return v.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.oov_seed ^ fnv1a(word));
        let v: Vec<f64> = (0..self.dim)
            .map(|_| rng.gen_range(-OOV_RANGE..=OOV_RANGE))
            .collect();
        self.oov
            .write()
            .expect("oov memo poisoned")
            .entry(word.to_string())
            .or_insert(v)
            .clone()
    }

    pub fn oov_count(&self) -> usize {
        self.oov.read().expect("oov memo poisoned").len()
    }
}

/// A paragraph flattened into token feature rows.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorizedParagraph {
    /// `L × (dim + 43)` rows in token order across clauses.
    pub features: Array2<f64>,
    pub spans: Vec<Span>,
    /// `true` for tokens that belong to a clause-initial connective.
    pub connective_mask: Vec<bool>,
}

impl VectorizedParagraph {
    pub fn num_clauses(&self) -> usize {
        self.spans.len()
    }
}

#[derive(Debug)]
pub struct FeatureVectorizer {
    table: EmbeddingTable,
}

impl FeatureVectorizer {
    pub fn new(table: EmbeddingTable) -> Self {
        FeatureVectorizer { table }
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn output_dim(&self) -> usize {
        self.table.dim + POS_DIM + NE_DIM
    }

    pub fn vectorize(&self, t: &Token) -> Vec<f64> {
        let mut out = self.table.lookup(&t.surface);
        out.resize(self.output_dim(), 0.0);
        let dim = self.table.dim;
        if let Some(i) = pos_index(&t.pos) {
            out[dim + i] = 1.0;
        }
        if let Some(i) = ne_index(&t.ne) {
            out[dim + POS_DIM + i] = 1.0;
        }
        out
    }

    pub fn vectorize_paragraph(&self, p: &Paragraph) -> VectorizedParagraph {
        let n = p.num_tokens();
        let mut features = Array2::zeros((n, self.output_dim()));
        let mut spans = Vec::with_capacity(p.clauses.len());
        let mut mask = Vec::with_capacity(n);
        let mut row = 0;
        for clause in &p.clauses {
            let start = row;
            for tok in &clause.tokens {
                let v = self.vectorize(tok);
                features
                    .row_mut(row)
                    .as_slice_mut()
                    .expect("standard layout")
                    .copy_from_slice(&v);
                mask.push(tok.connective_member);
                row += 1;
            }
            spans.push((start, row));
        }
        VectorizedParagraph {
            features,
            spans,
            connective_mask: mask,
        }
    }
}
