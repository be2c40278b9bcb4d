use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{score, score_paragraphs, Metrics};
use crate::corpus::{genre_folds, mark_connectives, ConnectiveLexicon, Dataset, Fold, SeLabel};
use crate::embed::FeatureVectorizer;
use crate::error::{Error, Result};
use crate::model::{train, EpochRecord, Model, ModelVariant, TrainConfig};

/// Seed for run or fold `index` of an experiment with master seed `master`
/// (SplitMix64 finalizer, so neighbouring indices decorrelate).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub selected_epoch: usize,
    pub history: Vec<EpochRecord>,
    #[serde(skip)]
    pub predictions: Vec<Vec<SeLabel>>,
    #[serde(skip)]
    pub model: Model,
}

/// Trains on `train_set` (no dev selection) and scores `test`.
pub fn train_and_evaluate(
    variant: ModelVariant,
    config: &TrainConfig,
    train_set: &Dataset,
    test: &Dataset,
    vectorizer: &FeatureVectorizer,
) -> Result<RunResult> {
    let outcome = train(variant, config, train_set, None, vectorizer)?;
    let predictions = outcome.model.predict(test, vectorizer)?;
    let gold: Vec<Vec<SeLabel>> = test.paragraphs.iter().map(|p| p.gold_labels()).collect::<Result<_>>()?;
    Ok(RunResult {
        seed: config.seed,
        metrics: score_paragraphs(&gold, &predictions)?,
        selected_epoch: outcome.selected_epoch,
        history: outcome.history,
        predictions,
        model: outcome.model,
    })
}

/// Mean and sample standard deviation of one quantity across runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Spread {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Spread { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSummary {
    pub accuracy: Spread,
    pub macro_f1: Spread,
    pub per_label_f1: BTreeMap<SeLabel, Spread>,
}

impl MetricSummary {
    pub fn of(runs: &[Metrics]) -> MetricSummary {
        let pick = |f: &dyn Fn(&Metrics) -> f64| Spread::of(&runs.iter().map(f).collect::<Vec<_>>());
        MetricSummary {
            accuracy: pick(&|m| m.accuracy),
            macro_f1: pick(&|m| m.macro_f1),
            per_label_f1: SeLabel::ALL
                .into_iter()
                .map(|l| (l, pick(&|m| m.f1(l))))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Repeated {
    pub runs: Vec<RunResult>,
    pub summary: MetricSummary,
}

/// `config.runs` independent trainings with seeds derived from `config.seed`.
pub fn run_repeated(
    variant: ModelVariant,
    config: &TrainConfig,
    train_set: &Dataset,
    test: &Dataset,
    vectorizer: &FeatureVectorizer,
) -> Result<Repeated> {
    let seeds: Vec<u64> = (0..config.runs as u64).map(|r| derive_seed(config.seed, r)).collect();
    run_repeated_with_seeds(variant, config, train_set, test, vectorizer, &seeds)
}

pub fn run_repeated_with_seeds(
    variant: ModelVariant,
    config: &TrainConfig,
    train_set: &Dataset,
    test: &Dataset,
    vectorizer: &FeatureVectorizer,
    seeds: &[u64],
) -> Result<Repeated> {
    if seeds.is_empty() {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let runs = seeds
        .iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..config.clone() };
            train_and_evaluate(variant, &cfg, train_set, test, vectorizer)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = MetricSummary::of(&runs.iter().map(|r| r.metrics.clone()).collect::<Vec<_>>());
    Ok(Repeated { runs, summary })
}

#[derive(Clone, Debug, Serialize)]
pub struct CvResult {
    pub pooled: Metrics,
    pub per_fold: Vec<(String, Metrics)>,
    /// Predictions in source-dataset order; each clause predicted by the one
    /// fold that held it out.
    #[serde(skip)]
    pub predictions: Vec<Vec<SeLabel>>,
}

/// Trains one model per fold (seed derived from the master seed and fold
/// index) and pools the held-out predictions over `d`.
pub fn cross_validate(
    variant: ModelVariant,
    config: &TrainConfig,
    d: &Dataset,
    folds: &[Fold],
    vectorizer: &FeatureVectorizer,
) -> Result<CvResult> {
    let mut predictions: Vec<Option<Vec<SeLabel>>> = vec![None; d.len()];
    let mut per_fold = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let cfg = TrainConfig {
            seed: derive_seed(config.seed, f as u64),
            ..config.clone()
        };
        let run = train_and_evaluate(variant, &cfg, &fold.train, &fold.test, vectorizer)?;
        for (&i, pred) in fold.test_indices.iter().zip(run.predictions) {
            if predictions[i].replace(pred).is_some() {
                return Err(Error::Split(format!("paragraph {i} held out by more than one fold")));
            }
        }
        per_fold.push((fold.name.clone(), run.metrics));
    }
    let predictions: Vec<Vec<SeLabel>> = predictions
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| Error::Split(format!("paragraph {i} is in no test fold"))))
        .collect::<Result<_>>()?;
    let gold: Vec<Vec<SeLabel>> = d.paragraphs.iter().map(|p| p.gold_labels()).collect::<Result<_>>()?;
    Ok(CvResult {
        pooled: score_paragraphs(&gold, &predictions)?,
        per_fold,
        predictions,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossGenreResult {
    /// One row per genre, sorted by genre name.
    pub per_genre: Vec<(String, Metrics)>,
    pub pooled: Metrics,
}

pub fn cross_genre(
    variant: ModelVariant,
    config: &TrainConfig,
    d: &Dataset,
    vectorizer: &FeatureVectorizer,
) -> Result<CrossGenreResult> {
    let folds = genre_folds(d)?;
    let cv = cross_validate(variant, config, d, &folds, vectorizer)?;
    Ok(CrossGenreResult {
        per_genre: cv.per_fold,
        pooled: cv.pooled,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub paragraphs: usize,
    pub metrics: Metrics,
}

/// Nested training subsets: one seeded permutation of `train_set`, with
/// fraction f taking its first round(f·n) paragraphs (restored to corpus
/// order before training).
pub fn learning_curve(
    variant: ModelVariant,
    config: &TrainConfig,
    train_set: &Dataset,
    test: &Dataset,
    fractions: &[f64],
    vectorizer: &FeatureVectorizer,
) -> Result<Vec<CurvePoint>> {
    let sizes = curve_sizes(train_set.len(), fractions)?;
    let mut perm: Vec<usize> = (0..train_set.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    fractions
        .iter()
        .zip(sizes)
        .map(|(&fraction, n)| {
            let mut chosen = perm[..n].to_vec();
            chosen.sort_unstable();
            let run = train_and_evaluate(variant, config, &train_set.subset(&chosen), test, vectorizer)?;
            Ok(CurvePoint {
                fraction,
                paragraphs: n,
                metrics: run.metrics,
            })
        })
        .collect()
}

/// Subset sizes for a learning curve; validates the fraction list.
pub fn curve_sizes(n: usize, fractions: &[f64]) -> Result<Vec<usize>> {
    if fractions.is_empty() {
        return Err(Error::Config("no learning-curve fractions".into()));
    }
    let mut prev = 0.0;
    fractions
        .iter()
        .map(|&f| {
            if !(f > prev && f <= 1.0) {
                return Err(Error::Config(format!("fractions must ascend within (0, 1], got {f}")));
            }
            prev = f;
            let size = (f * n as f64).round() as usize;
            if size == 0 {
                return Err(Error::Config(format!("fraction {f} selects no paragraphs out of {n}")));
            }
            Ok(size)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    /// Train a second model with masked pooling.
    Retrain,
    /// Reuse the unmasked model and switch masking on at prediction time.
    EvalOnly,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationResult {
    pub mode: AblationMode,
    pub normal: Metrics,
    pub masked: Metrics,
    /// Restricted to clauses containing a connective.
    pub normal_connective: Metrics,
    pub masked_connective: Metrics,
    pub delta_accuracy: f64,
    pub delta_macro_f1: f64,
    pub delta_connective_accuracy: f64,
    pub delta_connective_macro_f1: f64,
    /// Label-wise F1 change (masked − normal) on connective clauses.
    pub delta_connective_f1: BTreeMap<SeLabel, f64>,
}

/// Marks connectives with `lexicon`, then compares normal and masked pooling.
pub fn connective_ablation(
    variant: ModelVariant,
    config: &TrainConfig,
    train_set: &Dataset,
    test: &Dataset,
    lexicon: &ConnectiveLexicon,
    vectorizer: &FeatureVectorizer,
    mode: AblationMode,
) -> Result<AblationResult> {
    if lexicon.is_empty() {
        return Err(Error::Config("connective lexicon is empty".into()));
    }
    let (train_marked, _) = mark_connectives(train_set, lexicon);
    let (test_marked, _) = mark_connectives(test, lexicon);
    let normal_cfg = TrainConfig {
        mask_connectives: false,
        ..config.clone()
    };
    let normal = train_and_evaluate(variant, &normal_cfg, &train_marked, &test_marked, vectorizer)?;
    let masked_predictions = match mode {
        AblationMode::Retrain => {
            let masked_cfg = TrainConfig {
                mask_connectives: true,
                ..config.clone()
            };
            train_and_evaluate(variant, &masked_cfg, &train_marked, &test_marked, vectorizer)?.predictions
        }
        AblationMode::EvalOnly => {
            let mut model = normal.model.clone();
            model.mask_connectives = true;
            model.predict(&test_marked, vectorizer)?
        }
    };

    let mut gold = Vec::new();
    let mut is_conn = Vec::new();
    for p in &test_marked.paragraphs {
        gold.extend(p.gold_labels()?);
        is_conn.extend(p.clauses.iter().map(|c| c.has_connective()));
    }
    let flat_normal: Vec<SeLabel> = normal.predictions.concat();
    let flat_masked: Vec<SeLabel> = masked_predictions.concat();
    let subset = |pred: &[SeLabel]| -> Result<Metrics> {
        let (g, p): (Vec<SeLabel>, Vec<SeLabel>) = gold
            .iter()
            .zip(pred)
            .zip(&is_conn)
            .filter(|(_, &c)| c)
            .map(|((&g, &p), _)| (g, p))
            .unzip();
        score(&g, &p)
    };
    let masked = score(&gold, &flat_masked)?;
    let normal_connective = subset(&flat_normal)?;
    let masked_connective = subset(&flat_masked)?;
    let delta_connective_f1 = SeLabel::ALL
        .into_iter()
        .map(|l| (l, masked_connective.f1(l) - normal_connective.f1(l)))
        .collect();
    Ok(AblationResult {
        mode,
        delta_accuracy: masked.accuracy - normal.metrics.accuracy,
        delta_macro_f1: masked.macro_f1 - normal.metrics.macro_f1,
        delta_connective_accuracy: masked_connective.accuracy - normal_connective.accuracy,
        delta_connective_macro_f1: masked_connective.macro_f1 - normal_connective.macro_f1,
        delta_connective_f1,
        normal: normal.metrics,
        masked,
        normal_connective,
        masked_connective,
    })
}
