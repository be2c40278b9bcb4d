//! Command-line flags and their merge with an optional TOML config file.
//! Precedence: built-in defaults < config file < flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use sitent_core::corpus::ConnectiveLexicon;
use sitent_core::embed::{EmbeddingTable, FeatureVectorizer, DEFAULT_EMBEDDING_DIM};
use sitent_core::model::{ModelVariant, TrainConfig};

/// Contents of a `--config` file. Every field is optional.
///
/// ```toml
/// variant = "paragraph-crf"
/// embeddings = "vectors.txt"
///
/// [train]
/// hidden = 300
/// max_epochs = 40
/// ```
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub variant: Option<ModelVariant>,
    pub embeddings: Option<PathBuf>,
    pub embedding_dim: Option<usize>,
    pub lexicon: Option<PathBuf>,
    pub train: Option<TrainConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Clause,
    Paragraph,
    ParagraphCrf,
}

impl From<VariantArg> for ModelVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Clause => ModelVariant::ClauseLevel,
            VariantArg::Paragraph => ModelVariant::Paragraph,
            VariantArg::ParagraphCrf => ModelVariant::ParagraphCrf,
        }
    }
}

/// Flags shared by every command that trains.
#[derive(Args, Clone, Debug, Default)]
pub struct TrainFlags {
    /// TOML file with defaults for the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model variant [default: paragraph-crf]
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Master seed [default: 0]
    #[arg(long, env = "SITENT_SEED")]
    pub seed: Option<u64>,
    /// Independent training runs to average [default: 10]
    #[arg(long)]
    pub runs: Option<usize>,
    /// Maximum training epochs [default: 40]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Minimum clauses per optimizer step [default: 128]
    #[arg(long)]
    pub batch_se: Option<usize>,
    /// Dropout rate at all four sites [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Global gradient-norm threshold [default: 5.0]
    #[arg(long)]
    pub clip: Option<f64>,
    /// L2 coefficient on weight matrices [default: 0.0001]
    #[arg(long)]
    pub l2: Option<f64>,
    /// Hidden units per LSTM direction [default: 300]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Gradient worker threads; 1 is bit-reproducible [default: 1]
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub embed: EmbedFlags,
}

#[derive(Args, Clone, Debug, Default)]
pub struct EmbedFlags {
    /// Word vectors in text format; without it every word gets a seeded random vector
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Word-vector dimension [default: 300]
    #[arg(long)]
    pub embedding_dim: Option<usize>,
}

/// Fully resolved training settings.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub variant: ModelVariant,
    pub train: TrainConfig,
    pub embeddings: Option<PathBuf>,
    pub embedding_dim: usize,
    #[serde(skip)]
    pub file: FileConfig,
}

impl TrainFlags {
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mut t = file.train.clone().unwrap_or_default();
        macro_rules! set {
            ($flag:ident => $field:ident) => {
                if let Some(v) = self.$flag {
                    t.$field = v;
                }
            };
        }
        set!(seed => seed);
        set!(runs => runs);
        set!(epochs => max_epochs);
        set!(lr => learning_rate);
        set!(batch_se => batch_se);
        set!(dropout => dropout);
        set!(clip => clip_norm);
        set!(l2 => l2);
        set!(hidden => hidden);
        set!(workers => workers);
        t.validate()?;
        let variant = self
            .variant
            .map(ModelVariant::from)
            .or(file.variant)
            .unwrap_or(ModelVariant::ParagraphCrf);
        Ok(Resolved {
            variant,
            train: t,
            embeddings: self.embed.embeddings.clone().or_else(|| file.embeddings.clone()),
            embedding_dim: self
                .embed
                .embedding_dim
                .or(file.embedding_dim)
                .unwrap_or(DEFAULT_EMBEDDING_DIM),
            file,
        })
    }
}

impl Resolved {
    /// OOV vectors are seeded from the master seed so that train, eval and
    /// predict agree on every unknown word.
    pub fn vectorizer(&self) -> Result<FeatureVectorizer> {
        build_vectorizer(self.embeddings.as_deref(), self.embedding_dim, self.train.seed)
    }

    pub fn lexicon(&self, flag: Option<&Path>) -> Result<ConnectiveLexicon> {
        match flag.or(self.file.lexicon.as_deref()) {
            Some(p) => Ok(ConnectiveLexicon::load(p)?),
            None => Ok(ConnectiveLexicon::builtin()),
        }
    }
}

pub fn build_vectorizer(path: Option<&Path>, dim: usize, seed: u64) -> Result<FeatureVectorizer> {
    if dim == 0 {
        bail!("embedding dimension must be positive");
    }
    let table = match path {
        Some(p) => {
            let (table, stats) = EmbeddingTable::load(p, dim, seed)?;
            eprintln!("loaded {} vectors from {} ({} lines skipped)", stats.rows, p.display(), stats.skipped);
            table
        }
        None => EmbeddingTable::empty(dim, seed),
    };
    Ok(FeatureVectorizer::new(table))
}

pub fn parse_fractions(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|f| f.trim().parse::<f64>().with_context(|| format!("bad fraction {f:?}")))
        .collect()
}
