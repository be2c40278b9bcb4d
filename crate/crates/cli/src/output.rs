//! Report files and the reproducibility manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use sitent_core::eval::{length_buckets, plot_tsv, summary_header, summary_row, Metrics};
use sitent_core::corpus::SeLabel;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct InputDigest {
    path: PathBuf,
    sha256: String,
}

/// Everything needed to re-run a command: its arguments, the resolved
/// configuration, every seed used and digests of every input file.
#[derive(Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    argv: Vec<String>,
    config: Value,
    seeds: Vec<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: serde_json::to_value(config)?,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn inputs<'a>(&mut self, paths: impl IntoIterator<Item = Option<&'a Path>>) -> Result<()> {
        for p in paths.into_iter().flatten() {
            self.input(p)?;
        }
        Ok(())
    }

    pub fn seeds(&mut self, seeds: impl IntoIterator<Item = u64>) {
        self.seeds.extend(seeds);
    }
}

/// Writes files into one output directory and remembers their names for
/// the manifest.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Notes a file written by someone else (e.g. a checkpoint).
    pub fn record(&mut self, name: &str) {
        self.written.push(name.to_string());
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.record(name);
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }

    pub fn writer(&mut self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.path(name);
        let f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        self.record(name);
        Ok(BufWriter::new(f))
    }

    /// Structured report, summary row and confusion grid for one evaluation.
    pub fn metrics(&mut self, stem: &str, name: &str, m: &Metrics) -> Result<()> {
        self.json(&format!("{stem}.json"), m)?;
        self.text(&format!("{stem}.summary.tsv"), &format!("{}\n{}\n", summary_header(), summary_row(name, m)))?;
        self.text(&format!("{stem}.confusion.tsv"), &m.confusion_tsv())
    }

    pub fn buckets(&mut self, name: &str, gold: &[Vec<SeLabel>], predicted: &[Vec<SeLabel>]) -> Result<()> {
        let rows: Vec<(String, f64)> = length_buckets(gold, predicted)?
            .into_iter()
            .map(|b| (b.key, b.metrics.macro_f1))
            .collect();
        self.text(name, &plot_tsv("clauses", "macro_f1", &rows))
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<()> {
        self.record("manifest.json");
        manifest.outputs = std::mem::take(&mut self.written);
        let mut w = BufWriter::new(fs::File::create(self.path("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}
