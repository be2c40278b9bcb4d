use std::io::Write;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{gold_indices, Adam, Example, Model, ModelVariant, TrainConfig};
use crate::corpus::{Dataset, SeLabel};
use crate::embed::{FeatureVectorizer, VectorizedParagraph};
use crate::error::{Error, Result};
use crate::eval::score;
use crate::nncore::{DropoutSpec, Mode, ParamSet};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: Option<f64>,
    pub dev_macro_f1: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of the returned snapshot.
    pub selected_epoch: usize,
}

impl TrainOutcome {
    /// Tab-separated history: epoch, train loss, dev accuracy, dev macro-F1.
    pub fn write_history<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch\ttrain_loss\tdev_accuracy\tdev_macro_f1")?;
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        for r in &self.history {
            writeln!(
                w,
                "{}\t{:.6}\t{}\t{}",
                r.epoch,
                r.train_loss,
                opt(r.dev_accuracy),
                opt(r.dev_macro_f1)
            )?;
        }
        Ok(())
    }
}

/// Greedily packs paragraphs (in `order`) until each batch holds at least
/// `batch_se` clauses. Paragraphs are never split; only the last batch may
/// fall short.
pub fn pack_batches(order: &[usize], clause_counts: &[usize], batch_se: usize) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut clauses = 0;
    for &i in order {
        current.push(i);
        clauses += clause_counts[i];
        if clauses >= batch_se {
            batches.push(std::mem::take(&mut current));
            clauses = 0;
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// Rescales `grad` to `max_norm` when its global L2 norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_gradient<P: ParamSet>(grad: &mut P, max_norm: f64) -> f64 {
    let norm = grad.l2_norm();
    if norm > max_norm {
        grad.scale(max_norm / norm);
    }
    norm
}

struct Prepared {
    input: VectorizedParagraph,
    gold: Vec<usize>,
}

fn prepare(d: &Dataset, vectorizer: &FeatureVectorizer) -> Result<Vec<Prepared>> {
    d.paragraphs
        .iter()
        .map(|p| {
            Ok(Prepared {
                input: vectorizer.vectorize_paragraph(p),
                gold: gold_indices(&p.gold_labels()?),
            })
        })
        .collect()
}

fn evaluate_dev(model: &Model, dev: &[Prepared]) -> Result<(f64, f64)> {
    let inputs: Vec<&VectorizedParagraph> = dev.iter().map(|p| &p.input).collect();
    let predicted: Vec<SeLabel> = model.predict_vectorized(&inputs)?.concat();
    let gold: Vec<SeLabel> = dev.iter().flat_map(|p| p.gold.iter().map(|&i| SeLabel::ALL[i])).collect();
    let m = score(&gold, &predicted)?;
    Ok((m.accuracy, m.macro_f1))
}

/// Trains one model. Paragraphs are reshuffled each epoch from the seeded
/// stream; each batch is one Adam step after L2 and global-norm clipping.
/// With a dev set the snapshot with the best dev macro-F1 is returned
/// (earliest on ties), otherwise the final epoch.
pub fn train(
    variant: ModelVariant,
    config: &TrainConfig,
    train_set: &Dataset,
    dev_set: Option<&Dataset>,
    vectorizer: &FeatureVectorizer,
) -> Result<TrainOutcome> {
    train_with_monitor(variant, config, train_set, dev_set, vectorizer, |_, _| ControlFlow::Continue(()))
}

/// [`train`] with a hook called after every epoch; returning
/// `ControlFlow::Break` ends training after that epoch.
pub fn train_with_monitor<F>(
    variant: ModelVariant,
    config: &TrainConfig,
    train_set: &Dataset,
    dev_set: Option<&Dataset>,
    vectorizer: &FeatureVectorizer,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord, &Model) -> ControlFlow<()>,
{
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let examples = prepare(train_set, vectorizer)?;
    let dev = dev_set.map(|d| prepare(d, vectorizer)).transpose()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::with_rng(variant, vectorizer.output_dim(), config, &mut rng);
    let mut adam = Adam::new(&model.params, config.learning_rate);
    let drop = DropoutSpec::new(config.dropout, Mode::Train)?;
    let clause_counts: Vec<usize> = examples.iter().map(|e| e.gold.len()).collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();

    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let batches = pack_batches(&order, &clause_counts, config.batch_se);
        let mut epoch_loss = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let exs: Vec<Example<'_>> = batch
                .iter()
                .map(|&i| Example {
                    input: &examples[i].input,
                    gold: &examples[i].gold,
                })
                .collect();
            let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
            let (loss, mut grad) = model.loss_and_grad_with_workers(&exs, &drop, &seeds, config.l2, config.workers)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            clip_gradient(&mut grad, config.clip_norm);
            adam.step(&mut model.params, &grad);
            epoch_loss += loss;
        }
        let train_loss = epoch_loss / batches.len() as f64;
        let (dev_accuracy, dev_macro_f1) = match &dev {
            Some(d) if !d.is_empty() => {
                let (acc, f1) = evaluate_dev(&model, d)?;
                if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                    best = Some((f1, epoch, model.clone()));
                }
                (Some(acc), Some(f1))
            }
            _ => (None, None),
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_accuracy,
            dev_macro_f1,
        };
        let flow = on_epoch(&record, &model);
        history.push(record);
        if flow.is_break() {
            break;
        }
    }

    let (model, selected_epoch) = match best {
        Some((_, epoch, m)) => (m, epoch),
        None => (model, history.len()),
    };
    Ok(TrainOutcome {
        model,
        history,
        selected_epoch,
    })
}
