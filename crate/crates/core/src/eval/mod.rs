//! Scoring and report formatting. Experiment drivers live in
//! [`experiments`].

mod experiments;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{SeLabel, NUM_LABELS};
use crate::error::{Error, Result};

pub use experiments::{
    connective_ablation, cross_genre, cross_validate, curve_sizes, derive_seed, learning_curve, run_repeated,
    run_repeated_with_seeds, train_and_evaluate, AblationMode, AblationResult, CrossGenreResult,
    CvResult, CurvePoint, MetricSummary, Repeated, RunResult, Spread,
};

/// Clause-level classification metrics. Confusion rows are gold labels,
/// columns predictions, both in [`SeLabel::ALL`] order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub total: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_label_f1: BTreeMap<SeLabel, f64>,
    pub per_label_precision: BTreeMap<SeLabel, f64>,
    pub per_label_recall: BTreeMap<SeLabel, f64>,
    /// Labels occurring in gold or predictions; the macro average runs over these.
    pub present: Vec<SeLabel>,
    pub confusion: [[usize; NUM_LABELS]; NUM_LABELS],
}

impl Metrics {
    pub fn from_confusion(confusion: [[usize; NUM_LABELS]; NUM_LABELS]) -> Self {
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..NUM_LABELS).map(|i| confusion[i][i]).sum();
        let mut per_label_f1 = BTreeMap::new();
        let mut per_label_precision = BTreeMap::new();
        let mut per_label_recall = BTreeMap::new();
        let mut present = Vec::new();
        for label in SeLabel::ALL {
            let i = label.index();
            let tp = confusion[i][i] as f64;
            let gold: usize = confusion[i].iter().sum();
            let pred: usize = confusion.iter().map(|row| row[i]).sum();
            let p = if pred > 0 { tp / pred as f64 } else { 0.0 };
            let r = if gold > 0 { tp / gold as f64 } else { 0.0 };
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            per_label_precision.insert(label, p);
            per_label_recall.insert(label, r);
            per_label_f1.insert(label, f1);
            if gold + pred > 0 {
                present.push(label);
            }
        }
        let macro_f1 = if present.is_empty() {
            0.0
        } else {
            present.iter().map(|l| per_label_f1[l]).sum::<f64>() / present.len() as f64
        };
        Metrics {
            total,
            accuracy: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
            macro_f1,
            per_label_f1,
            per_label_precision,
            per_label_recall,
            present,
            confusion,
        }
    }

    pub fn f1(&self, label: SeLabel) -> f64 {
        self.per_label_f1[&label]
    }

    /// 7×7 grid with label names as header row and column.
    pub fn confusion_tsv(&self) -> String {
        let mut out = String::from("gold\\predicted");
        for l in SeLabel::ALL {
            write!(out, "\t{l}").unwrap();
        }
        out.push('\n');
        for l in SeLabel::ALL {
            out.push_str(l.as_str());
            for c in self.confusion[l.index()] {
                write!(out, "\t{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn score(gold: &[SeLabel], predicted: &[SeLabel]) -> Result<Metrics> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let mut confusion = [[0; NUM_LABELS]; NUM_LABELS];
    for (g, p) in gold.iter().zip(predicted) {
        confusion[g.index()][p.index()] += 1;
    }
    Ok(Metrics::from_confusion(confusion))
}

/// Scores nested per-paragraph label sequences.
pub fn score_paragraphs(gold: &[Vec<SeLabel>], predicted: &[Vec<SeLabel>]) -> Result<Metrics> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let mut confusion = [[0; NUM_LABELS]; NUM_LABELS];
    for (g, p) in gold.iter().zip(predicted) {
        if g.len() != p.len() {
            return Err(Error::LengthMismatch {
                gold: g.len(),
                predicted: p.len(),
            });
        }
        for (a, b) in g.iter().zip(p) {
            confusion[a.index()][b.index()] += 1;
        }
    }
    Ok(Metrics::from_confusion(confusion))
}

/// Longest paragraph length with its own bucket; longer ones share "10+".
pub const MAX_BUCKET: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LengthBucket {
    /// "1" … "9" or "10+".
    pub key: String,
    pub paragraphs: usize,
    pub clauses: usize,
    pub metrics: Metrics,
}

/// Groups paragraphs by clause count. Only non-empty buckets are returned,
/// in increasing length order.
pub fn length_buckets(gold: &[Vec<SeLabel>], predicted: &[Vec<SeLabel>]) -> Result<Vec<LengthBucket>> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let mut groups: BTreeMap<usize, (Vec<Vec<SeLabel>>, Vec<Vec<SeLabel>>)> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        let slot = groups.entry(g.len().clamp(1, MAX_BUCKET)).or_default();
        slot.0.push(g.clone());
        slot.1.push(p.clone());
    }
    groups
        .into_iter()
        .map(|(len, (g, p))| {
            let metrics = score_paragraphs(&g, &p)?;
            Ok(LengthBucket {
                key: if len == MAX_BUCKET { format!("{MAX_BUCKET}+") } else { len.to_string() },
                paragraphs: g.len(),
                clauses: metrics.total,
                metrics,
            })
        })
        .collect()
}

pub fn summary_header() -> String {
    let mut out = String::from("name\tclauses\taccuracy\tmacro_f1");
    for l in SeLabel::ALL {
        write!(out, "\tf1_{}", l.as_str().to_lowercase()).unwrap();
    }
    out
}

/// One flat tab-separated row matching [`summary_header`].
pub fn summary_row(name: &str, m: &Metrics) -> String {
    let mut out = format!("{name}\t{}\t{:.6}\t{:.6}", m.total, m.accuracy, m.macro_f1);
    for l in SeLabel::ALL {
        write!(out, "\t{:.6}", m.f1(l)).unwrap();
    }
    out
}

/// Two-column plot data with a header line.
pub fn plot_tsv(x_name: &str, y_name: &str, rows: &[(String, f64)]) -> String {
    let mut out = format!("{x_name}\t{y_name}\n");
    for (x, y) in rows {
        writeln!(out, "{x}\t{y:.6}").unwrap();
    }
    out
}
