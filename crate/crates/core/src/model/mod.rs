//! The three model variants and their forward/backward pass over one
//! paragraph.
//!
//! ```text
//! features ─ dropout ─ word Bi-LSTM ─ dropout ─ span max-pool ─┬─────────────────────────────── affine   (ClauseLevel)
//!                                                              └─ dropout ─ clause Bi-LSTM ─ dropout ─ affine (Paragraph*)
//! ```
//!
//! ClauseLevel runs the word Bi-LSTM on each clause separately. ParagraphCrf
//! feeds the affine logits into a linear-chain CRF.

mod adam;
mod checkpoint;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, SeLabel, NUM_LABELS};
use crate::crf::CrfParams;
use crate::embed::{FeatureVectorizer, VectorizedParagraph};
use crate::error::{Error, Result};
use crate::nncore::{
    dropout_backward, softmax, softmax_cross_entropy, span_max_pool, span_max_pool_backward,
    AffineParams, BiLstmParams, BiLstmTape, DropoutSpec, DropoutTape, Mode, ParamSet, PoolTape,
    TensorMut, TensorRef,
};

pub use adam::Adam;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use train::{clip_gradient, pack_batches, train, train_with_monitor, EpochRecord, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "clause")]
    ClauseLevel,
    #[serde(rename = "paragraph")]
    Paragraph,
    #[serde(rename = "paragraph-crf")]
    ParagraphCrf,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [
        ModelVariant::ClauseLevel,
        ModelVariant::Paragraph,
        ModelVariant::ParagraphCrf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::ClauseLevel => "clause",
            ModelVariant::Paragraph => "paragraph",
            ModelVariant::ParagraphCrf => "paragraph-crf",
        }
    }

    pub fn has_clause_layer(self) -> bool {
        self != ModelVariant::ClauseLevel
    }

    pub fn has_crf(self) -> bool {
        self == ModelVariant::ParagraphCrf
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (clause|paragraph|paragraph-crf)")))
    }
}

/// Training hyperparameters. Defaults are the full-scale settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden units per LSTM direction; concatenated states are twice this.
    pub hidden: usize,
    pub dropout: f64,
    pub clip_norm: f64,
    pub l2: f64,
    pub learning_rate: f64,
    /// Minimum clause count per optimizer step.
    pub batch_se: usize,
    pub max_epochs: usize,
    pub runs: usize,
    pub seed: u64,
    pub workers: usize,
    /// Exclude connective tokens from clause max-pooling.
    pub mask_connectives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 300,
            dropout: 0.5,
            clip_norm: 5.0,
            l2: 1e-4,
            learning_rate: 0.001,
            batch_se: 128,
            max_epochs: 40,
            runs: 10,
            seed: 0,
            workers: 1,
            mask_connectives: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden as f64),
            ("clip_norm", self.clip_norm),
            ("learning_rate", self.learning_rate),
            ("batch_se", self.batch_se as f64),
            ("max_epochs", self.max_epochs as f64),
            ("runs", self.runs as f64),
            ("workers", self.workers as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.l2 < 0.0 {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        DropoutSpec::new(self.dropout, Mode::Train)?;
        Ok(())
    }
}

/// All trainable tensors of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub word: BiLstmParams,
    pub clause: Option<BiLstmParams>,
    pub out: AffineParams,
    pub crf: Option<CrfParams>,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(variant: ModelVariant, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let word = BiLstmParams::init(input_dim, hidden, rng);
        let clause = variant
            .has_clause_layer()
            .then(|| BiLstmParams::init(2 * hidden, hidden, rng));
        ModelParams {
            word,
            clause,
            out: AffineParams::init_labels(2 * hidden, rng),
            crf: variant.has_crf().then(CrfParams::for_labels),
        }
    }

    pub fn zeros(variant: ModelVariant, input_dim: usize, hidden: usize) -> Self {
        ModelParams {
            word: BiLstmParams::zeros(input_dim, hidden),
            clause: variant
                .has_clause_layer()
                .then(|| BiLstmParams::zeros(2 * hidden, hidden)),
            out: AffineParams::zeros(2 * hidden, NUM_LABELS),
            crf: variant.has_crf().then(CrfParams::for_labels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut v = self.word.tensors("word");
        if let Some(c) = &self.clause {
            v.extend(c.tensors("clause"));
        }
        v.extend(self.out.tensors("out"));
        if let Some(c) = &self.crf {
            v.extend(c.tensors_prefixed("crf"));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut v = self.word.tensors_mut("word");
        if let Some(c) = &mut self.clause {
            v.extend(c.tensors_mut("clause"));
        }
        v.extend(self.out.tensors_mut("out"));
        if let Some(c) = &mut self.crf {
            v.extend(c.tensors_mut_prefixed("crf"));
        }
        v
    }
}

enum WordTape {
    Paragraph(BiLstmTape),
    PerClause(Vec<BiLstmTape>),
}

/// Everything the backward pass needs from one paragraph forward.
pub struct ParagraphTape {
    word: WordTape,
    drop_word_out: DropoutTape,
    pool: PoolTape,
    clause: Option<(DropoutTape, BiLstmTape, DropoutTape)>,
    head_input: Array2<f64>,
}

/// One paragraph with gold labels as label indices.
pub struct Example<'a> {
    pub input: &'a VectorizedParagraph,
    pub gold: &'a [usize],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub variant: ModelVariant,
    pub params: ModelParams,
    pub mask_connectives: bool,
}

impl Model {
    pub fn new(variant: ModelVariant, input_dim: usize, config: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(variant, input_dim, config, &mut rng)
    }

    pub fn with_rng<R: Rng + ?Sized>(variant: ModelVariant, input_dim: usize, config: &TrainConfig, rng: &mut R) -> Self {
        Model {
            variant,
            params: ModelParams::init(variant, input_dim, config.hidden, rng),
            mask_connectives: config.mask_connectives,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.params.word.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.params.word.hidden_dim()
    }

    /// Clause embeddings after max-pooling (the clause-layer input).
    pub fn pooled(&self, p: &VectorizedParagraph) -> Result<Array2<f64>> {
        let (mut hw, _) = self.word_layer(&[p.features.view()], &[p])?;
        let hw = hw.pop().expect("one paragraph");
        let mask = self.mask_connectives.then_some(p.connective_mask.as_slice());
        Ok(span_max_pool(hw.view(), &p.spans, mask)?.0)
    }

    /// Word Bi-LSTM over whole paragraphs, or over each clause separately
    /// for the clause-level variant. All sequences of the batch advance
    /// together.
    fn word_layer(&self, xs: &[ArrayView2<'_, f64>], ps: &[&VectorizedParagraph]) -> Result<(Vec<Array2<f64>>, Vec<WordTape>)> {
        let word = &self.params.word;
        if self.variant.has_clause_layer() {
            Ok(word
                .forward_batch(xs)?
                .into_iter()
                .map(|(h, t)| (h, WordTape::Paragraph(t)))
                .unzip())
        } else {
            let seqs: Vec<ArrayView2<'_, f64>> = xs
                .iter()
                .zip(ps)
                .flat_map(|(x, p)| p.spans.iter().map(move |&(a, b)| x.slice(s![a..b, ..])))
                .collect();
            let mut outs = word.forward_batch(&seqs)?.into_iter();
            let mut hs = Vec::with_capacity(ps.len());
            let mut tapes = Vec::with_capacity(ps.len());
            for (x, p) in xs.iter().zip(ps) {
                let mut h = Array2::zeros((x.nrows(), word.output_dim()));
                let mut clause_tapes = Vec::with_capacity(p.spans.len());
                for &(a, b) in &p.spans {
                    let (hc, tape) = outs.next().expect("one output per clause");
                    h.slice_mut(s![a..b, ..]).assign(&hc);
                    clause_tapes.push(tape);
                }
                hs.push(h);
                tapes.push(WordTape::PerClause(clause_tapes));
            }
            Ok((hs, tapes))
        }
    }

    /// Emission logits (`n_clauses × 7`) with the tape for backward.
    pub fn forward<R: Rng>(
        &self,
        p: &VectorizedParagraph,
        drop: &DropoutSpec,
        rng: &mut R,
    ) -> Result<(Array2<f64>, ParagraphTape)> {
        let mut out = self.forward_batch(&[p], drop, std::slice::from_mut(rng))?;
        Ok(out.pop().expect("one paragraph"))
    }

    /// Independent forwards over several paragraphs; `rngs[i]` drives the
    /// dropout of paragraph `i`. Equal to calling [`Model::forward`] on each.
    pub fn forward_batch<R: Rng>(
        &self,
        ps: &[&VectorizedParagraph],
        drop: &DropoutSpec,
        rngs: &mut [R],
    ) -> Result<Vec<(Array2<f64>, ParagraphTape)>> {
        if rngs.len() != ps.len() {
            return Err(Error::Shape {
                op: "forward_batch (rngs)",
                expected: ps.len(),
                actual: rngs.len(),
            });
        }
        if ps.iter().any(|p| p.features.nrows() == 0 || p.spans.is_empty()) {
            return Err(Error::Shape {
                op: "forward_paragraph (tokens)",
                expected: 1,
                actual: 0,
            });
        }
        // Word vectors are frozen, so input dropout needs no tape.
        let xs: Vec<Array2<f64>> = ps
            .iter()
            .zip(rngs.iter_mut())
            .map(|(p, rng)| drop.apply(p.features.view(), rng).0)
            .collect();
        let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
        let (hws, words) = self.word_layer(&views, ps)?;
        let mut pooled = Vec::with_capacity(ps.len());
        let mut partial = Vec::with_capacity(ps.len());
        for ((hw, p), rng) in hws.iter().zip(ps).zip(rngs.iter_mut()) {
            let (hw, drop_word_out) = drop.apply(hw.view(), rng);
            let mask = self.mask_connectives.then_some(p.connective_mask.as_slice());
            let (pool_out, pool) = span_max_pool(hw.view(), &p.spans, mask)?;
            pooled.push(pool_out);
            partial.push((drop_word_out, pool));
        }
        let (heads, clause_tapes): (Vec<Array2<f64>>, Vec<Option<_>>) = match &self.params.clause {
            Some(layer) => {
                let (ins, d_ins): (Vec<_>, Vec<_>) = pooled
                    .iter()
                    .zip(rngs.iter_mut())
                    .map(|(x, rng)| drop.apply(x.view(), rng))
                    .unzip();
                let views: Vec<_> = ins.iter().map(|x| x.view()).collect();
                let outs = layer.forward_batch(&views)?;
                outs.into_iter()
                    .zip(d_ins)
                    .zip(rngs.iter_mut())
                    .map(|(((hc, tape), d_in), rng)| {
                        let (hc, d_out) = drop.apply(hc.view(), rng);
                        (hc, Some((d_in, tape, d_out)))
                    })
                    .unzip()
            }
            None => (pooled, (0..ps.len()).map(|_| None).collect()),
        };
        let mut out = Vec::with_capacity(ps.len());
        for (((head_input, clause), word), (drop_word_out, pool)) in heads.into_iter().zip(clause_tapes).zip(words).zip(partial) {
            let logits = self.params.out.forward(head_input.view())?;
            out.push((
                logits,
                ParagraphTape {
                    word,
                    drop_word_out,
                    pool,
                    clause,
                    head_input,
                },
            ));
        }
        Ok(out)
    }

    /// Inference-mode logits.
    pub fn emissions(&self, p: &VectorizedParagraph) -> Result<Array2<f64>> {
        Ok(self.emissions_batch(&[p])?.pop().expect("one paragraph"))
    }

    pub fn emissions_batch(&self, ps: &[&VectorizedParagraph]) -> Result<Vec<Array2<f64>>> {
        let mut rngs: Vec<ChaCha8Rng> = (0..ps.len()).map(|_| ChaCha8Rng::seed_from_u64(0)).collect();
        Ok(self
            .forward_batch(ps, &DropoutSpec::inference(), &mut rngs)?
            .into_iter()
            .map(|(logits, _)| logits)
            .collect())
    }

    /// Per-clause label distributions from the softmax head.
    pub fn probabilities(&self, p: &VectorizedParagraph) -> Result<Array2<f64>> {
        Ok(row_softmax(&self.emissions(p)?))
    }

    pub fn backward(&self, tape: &ParagraphTape, dlogits: ArrayView2<'_, f64>, grad: &mut ModelParams) -> Result<()> {
        self.backward_batch(&[tape], &[dlogits], grad)
    }

    /// Backward over several paragraph tapes. Every tensor receives its
    /// contributions in paragraph order, as repeated [`Model::backward`]
    /// calls would.
    pub fn backward_batch(&self, tapes: &[&ParagraphTape], dlogits: &[ArrayView2<'_, f64>], grad: &mut ModelParams) -> Result<()> {
        let mut d_heads = Vec::with_capacity(tapes.len());
        for (tape, dl) in tapes.iter().zip(dlogits) {
            d_heads.push(self.params.out.backward(tape.head_input.view(), *dl, &mut grad.out)?);
        }
        let d_pooled: Vec<Array2<f64>> = match (&self.params.clause, &mut grad.clause) {
            (Some(layer), Some(g)) => {
                let mut cts = Vec::with_capacity(tapes.len());
                let mut dhcs = Vec::with_capacity(tapes.len());
                for (tape, dh) in tapes.iter().zip(&d_heads) {
                    let (_, ct, d_out) = tape.clause.as_ref().ok_or(Error::NoTape)?;
                    cts.push(ct);
                    dhcs.push(dropout_backward(d_out, dh.view()));
                }
                let views: Vec<_> = dhcs.iter().map(|d| d.view()).collect();
                let dcis = layer.backward_batch(&cts, &views, g, true)?;
                tapes
                    .iter()
                    .zip(dcis)
                    .map(|(tape, dci)| {
                        let (d_in, _, _) = tape.clause.as_ref().expect("checked above");
                        dropout_backward(d_in, dci.expect("input gradient requested").view())
                    })
                    .collect()
            }
            (None, None) => d_heads,
            _ => return Err(Error::NoTape),
        };
        let mut dhws = Vec::with_capacity(tapes.len());
        for (tape, dp) in tapes.iter().zip(&d_pooled) {
            let dhw = span_max_pool_backward(&tape.pool, dp.view())?;
            dhws.push(dropout_backward(&tape.drop_word_out, dhw.view()));
        }
        let mut word_tapes = Vec::new();
        let mut word_grads = Vec::new();
        for (tape, dhw) in tapes.iter().zip(&dhws) {
            match &tape.word {
                WordTape::Paragraph(t) => {
                    word_tapes.push(t);
                    word_grads.push(dhw.view());
                }
                WordTape::PerClause(ts) => {
                    // Tapes are in span order and spans tile the rows.
                    let mut start = 0;
                    for t in ts {
                        let end = start + t.len();
                        word_tapes.push(t);
                        word_grads.push(dhw.slice(s![start..end, ..]));
                        start = end;
                    }
                }
            }
        }
        self.params
            .word
            .backward_batch(&word_tapes, &word_grads, &mut grad.word, false)?;
        Ok(())
    }

    /// Unregularized objective for one paragraph and its logit gradient.
    /// Softmax variants return the summed clause cross-entropy; the CRF
    /// variant returns the sequence NLL divided by clause count.
    fn paragraph_objective(&self, logits: ArrayView2<'_, f64>, gold: &[usize], grad: &mut ModelParams, weight: f64) -> Result<(f64, Array2<f64>)> {
        if gold.len() != logits.nrows() {
            return Err(Error::LabelLength {
                expected: logits.nrows(),
                actual: gold.len(),
            });
        }
        match &self.params.crf {
            Some(crf) => {
                let n = gold.len() as f64;
                let l = crf.nll(logits, gold)?;
                let scale = weight / n;
                if let Some(g) = &mut grad.crf {
                    g.add_scaled(&l.grad, scale);
                }
                Ok((l.loss / n, l.d_emissions * scale))
            }
            None => {
                let mut total = 0.0;
                let mut d = Array2::zeros(logits.dim());
                for (i, &y) in gold.iter().enumerate() {
                    let (loss, g) = softmax_cross_entropy(logits.row(i), y);
                    total += loss;
                    d.row_mut(i).assign(&(g * weight));
                }
                Ok((total, d))
            }
        }
    }

    /// Per-paragraph weights so that the batch objective is the mean clause
    /// cross-entropy (softmax) or the mean per-clause-normalized NLL (CRF).
    fn batch_weights(&self, batch: &[Example<'_>]) -> Vec<f64> {
        if self.variant.has_crf() {
            vec![1.0 / batch.len() as f64; batch.len()]
        } else {
            let clauses: usize = batch.iter().map(|e| e.gold.len()).sum();
            vec![1.0 / clauses as f64; batch.len()]
        }
    }

    /// Data term of one paragraph's contribution; no gradient.
    pub fn paragraph_loss(&self, ex: &Example<'_>) -> Result<f64> {
        let logits = self.emissions(ex.input)?;
        let mut scratch = self.params.zeros_like();
        Ok(self.paragraph_objective(logits.view(), ex.gold, &mut scratch, 1.0)?.0)
    }

    /// Batch loss in inference mode, including the L2 term.
    pub fn loss(&self, batch: &[Example<'_>], l2: f64) -> Result<f64> {
        let weights = self.batch_weights(batch);
        let mut total = 0.0;
        for (ex, w) in batch.iter().zip(weights) {
            total += w * self.paragraph_loss(ex)?;
        }
        Ok(total + l2 * self.params.decay_sq_norm())
    }

    /// Batch loss and its gradient. `seeds[i]` drives dropout for paragraph
    /// `i`; paragraphs are processed independently so the result does not
    /// depend on batch order beyond the reduction order.
    pub fn loss_and_grad(&self, batch: &[Example<'_>], drop: &DropoutSpec, seeds: &[u64], l2: f64) -> Result<(f64, ModelParams)> {
        self.loss_and_grad_with_workers(batch, drop, seeds, l2, 1)
    }

    /// As [`Model::loss_and_grad`], splitting the batch into `workers`
    /// contiguous chunks. Chunk results are summed in chunk order, so a given
    /// worker count is reproducible.
    pub fn loss_and_grad_with_workers(
        &self,
        batch: &[Example<'_>],
        drop: &DropoutSpec,
        seeds: &[u64],
        l2: f64,
        workers: usize,
    ) -> Result<(f64, ModelParams)> {
        if seeds.len() != batch.len() {
            return Err(Error::Shape {
                op: "loss_and_grad (seeds)",
                expected: batch.len(),
                actual: seeds.len(),
            });
        }
        let weights = self.batch_weights(batch);
        let run = |range: std::ops::Range<usize>| -> Result<(f64, ModelParams)> {
            let mut grad = self.params.zeros_like();
            let total = self.accumulate(&batch[range.clone()], drop, &seeds[range.clone()], &weights[range], &mut grad)?;
            Ok((total, grad))
        };
        let workers = workers.clamp(1, batch.len().max(1));
        let (mut total, mut grad) = if workers == 1 {
            run(0..batch.len())?
        } else {
            let chunk = batch.len().div_ceil(workers);
            let parts: Vec<Result<(f64, ModelParams)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..batch.len())
                    .step_by(chunk)
                    .map(|start| {
                        let end = (start + chunk).min(batch.len());
                        scope.spawn(move || run(start..end))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("gradient worker panicked"))
                    .collect()
            });
            let mut parts = parts.into_iter();
            let (mut total, mut grad) = parts.next().expect("at least one chunk")?;
            for part in parts {
                let (t, g) = part?;
                total += t;
                grad.add_scaled(&g, 1.0);
            }
            (total, grad)
        };
        total += l2 * self.params.decay_sq_norm();
        add_l2_gradient(&self.params, &mut grad, l2);
        Ok((total, grad))
    }

    /// Forward + backward of a run of paragraphs, accumulating
    /// `weights`-scaled gradients. Returns the weighted data term.
    fn accumulate(&self, batch: &[Example<'_>], drop: &DropoutSpec, seeds: &[u64], weights: &[f64], grad: &mut ModelParams) -> Result<f64> {
        let inputs: Vec<&VectorizedParagraph> = batch.iter().map(|e| e.input).collect();
        let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect();
        let outs = self.forward_batch(&inputs, drop, &mut rngs)?;
        let mut total = 0.0;
        let mut dlogits = Vec::with_capacity(batch.len());
        for ((ex, (logits, _)), &w) in batch.iter().zip(&outs).zip(weights) {
            let (loss, d) = self.paragraph_objective(logits.view(), ex.gold, grad, w)?;
            total += w * loss;
            dlogits.push(d);
        }
        let tapes: Vec<&ParagraphTape> = outs.iter().map(|(_, t)| t).collect();
        let views: Vec<_> = dlogits.iter().map(|d| d.view()).collect();
        self.backward_batch(&tapes, &views, grad)?;
        Ok(total)
    }

    /// Labels for one paragraph: Viterbi for the CRF variant, otherwise the
    /// per-clause softmax argmax (ties to the lower label index).
    pub fn predict_paragraph(&self, p: &VectorizedParagraph) -> Result<Vec<SeLabel>> {
        self.decode(&self.emissions(p)?)
    }

    fn decode(&self, logits: &Array2<f64>) -> Result<Vec<SeLabel>> {
        let indices = match &self.params.crf {
            Some(crf) => crf.viterbi(logits.view())?.0,
            None => row_softmax(logits)
                .rows()
                .into_iter()
                .map(|row| (0..row.len()).fold(0, |best, a| if row[a] > row[best] { a } else { best }))
                .collect(),
        };
        Ok(indices
            .into_iter()
            .map(|i| SeLabel::from_index(i).expect("label head has 7 rows"))
            .collect())
    }

    /// Labels for already vectorized paragraphs, in order.
    pub fn predict_vectorized(&self, ps: &[&VectorizedParagraph]) -> Result<Vec<Vec<SeLabel>>> {
        let mut out = Vec::with_capacity(ps.len());
        for chunk in ps.chunks(PREDICT_CHUNK) {
            for logits in self.emissions_batch(chunk)? {
                out.push(self.decode(&logits)?);
            }
        }
        Ok(out)
    }

    /// Labels for every paragraph, in dataset order.
    pub fn predict(&self, d: &Dataset, vectorizer: &FeatureVectorizer) -> Result<Vec<Vec<SeLabel>>> {
        let mut out = Vec::with_capacity(d.len());
        for chunk in d.paragraphs.chunks(PREDICT_CHUNK) {
            let vs: Vec<VectorizedParagraph> = chunk.iter().map(|p| vectorizer.vectorize_paragraph(p)).collect();
            out.extend(self.predict_vectorized(&vs.iter().collect::<Vec<_>>())?);
        }
        Ok(out)
    }
}

/// Paragraphs vectorized and run together at inference.
const PREDICT_CHUNK: usize = 32;

fn row_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = Array2::zeros(logits.dim());
    for (i, row) in logits.rows().into_iter().enumerate() {
        probs.row_mut(i).assign(&softmax(row));
    }
    probs
}

pub(crate) fn add_l2_gradient(params: &ModelParams, grad: &mut ModelParams, l2: f64) {
    if l2 == 0.0 {
        return;
    }
    for (g, p) in grad.tensors_mut().into_iter().zip(params.tensors()) {
        if p.decay {
            for (gv, pv) in g.data.iter_mut().zip(p.data) {
                *gv += 2.0 * l2 * pv;
            }
        }
    }
}

/// Gold labels of a paragraph as indices into [`SeLabel::ALL`].
pub fn gold_indices(labels: &[SeLabel]) -> Vec<usize> {
    labels.iter().map(|l| l.index()).collect()
}
