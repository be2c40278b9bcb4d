//! Acceptance suite. Runs every criterion in sequence (so the runtime
//! budgets are measured without interference), prints one PASS/FAIL line
//! each, and exits nonzero if any gating criterion fails.

use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sitent_core::corpus::{holdout_split, kfold_split, mark_connectives, ConnectiveLexicon, Dataset, SeLabel};
use sitent_core::crf::CrfParams;
use sitent_core::embed::VectorizedParagraph;
use sitent_core::eval::{connective_ablation, cross_validate, score, score_paragraphs, train_and_evaluate, AblationMode};
use sitent_core::model::{
    read_checkpoint, train, train_with_monitor, write_checkpoint, Checkpoint, Example, Model, ModelVariant, TrainConfig,
};
use sitent_core::nncore::{
    dropout_backward, softmax_cross_entropy, span_max_pool, span_max_pool_backward, AffineParams, BiLstmParams,
    DropoutSpec, LstmParams, Mode, ParamSet,
};
use sitent_core::synth::{generate, synth_vectorizer, SynthSpec, SynthTask};

const FD_EPS: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
const DRAWS: u64 = 100;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
    gating: bool,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail, gating: true }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

// ---------------------------------------------------------------- oracles

fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_EPS;
            let up = f(&probe);
            probe[i] = orig - FD_EPS;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    assert_eq!(a.len(), n.len());
    a.iter()
        .zip(n)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn reshape(v: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), v.to_vec()).unwrap()
}

fn weighted_sum(h: &Array2<f64>, r: &Array2<f64>) -> f64 {
    (h * r).sum()
}

// ------------------------------------------------------------ criterion 1

/// Max relative error over parameter and input gradients of one kernel.
fn check_lstm(rng: &mut ChaCha8Rng) -> f64 {
    let (d, h, t) = (3, 4, rng.gen_range(1..5));
    let p = LstmParams::init(d, h, rng);
    let mut p = p;
    p.b.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    let xs = uniform(rng, t, d);
    let r = uniform(rng, t, h);
    let reverse = rng.gen_bool(0.5);
    let (_, tape) = p.forward(xs.view(), reverse).unwrap();
    let mut g = p.clone();
    g.fill(0.0);
    let dx = p.backward(&tape, r.view(), &mut g).unwrap();
    let np = numeric_grad(&p.flatten(), |v| {
        let mut q = p.clone();
        q.assign_flat(v);
        weighted_sum(&q.forward(xs.view(), reverse).unwrap().0, &r)
    });
    let nx = numeric_grad(&flat(&xs), |v| weighted_sum(&p.forward(reshape(v, t, d).view(), reverse).unwrap().0, &r));
    rel_err(&g.flatten(), &np).max(rel_err(&flat(&dx), &nx))
}

fn check_bilstm(rng: &mut ChaCha8Rng) -> f64 {
    let (d, h, t) = (3, 3, rng.gen_range(1..5));
    let p = BiLstmParams::init(d, h, rng);
    let xs = uniform(rng, t, d);
    let r = uniform(rng, t, 2 * h);
    let (_, tape) = p.forward(xs.view()).unwrap();
    let mut g = p.clone();
    g.fill(0.0);
    let dx = p.backward(&tape, r.view(), &mut g).unwrap();
    let np = numeric_grad(&p.flatten(), |v| {
        let mut q = p.clone();
        q.assign_flat(v);
        weighted_sum(&q.forward(xs.view()).unwrap().0, &r)
    });
    let nx = numeric_grad(&flat(&xs), |v| weighted_sum(&p.forward(reshape(v, t, d).view()).unwrap().0, &r));
    rel_err(&g.flatten(), &np).max(rel_err(&flat(&dx), &nx))
}

fn check_pool(rng: &mut ChaCha8Rng) -> f64 {
    // Distinct values on a 0.01 grid keep every argmax stable under ±ε.
    let (t, k) = (6, 3);
    let mut grid: Vec<f64> = (0..t * k).map(|i| i as f64 * 0.01).collect();
    for i in (1..grid.len()).rev() {
        grid.swap(i, rng.gen_range(0..=i));
    }
    let h = reshape(&grid, t, k);
    let spans = [(0, 2), (2, 3), (3, 6)];
    let mask: Vec<bool> = (0..t).map(|_| rng.gen_bool(0.4)).collect();
    let r = uniform(rng, spans.len(), k);
    let (_, tape) = span_max_pool(h.view(), &spans, Some(&mask)).unwrap();
    let dh = span_max_pool_backward(&tape, r.view()).unwrap();
    let nh = numeric_grad(&flat(&h), |v| {
        weighted_sum(&span_max_pool(reshape(v, t, k).view(), &spans, Some(&mask)).unwrap().0, &r)
    });
    rel_err(&flat(&dh), &nh)
}

fn check_dropout(rng: &mut ChaCha8Rng) -> f64 {
    let spec = DropoutSpec::new(0.5, Mode::Train).unwrap();
    let seed = rng.gen::<u64>();
    let x = uniform(rng, 3, 4);
    let r = uniform(rng, 3, 4);
    let (_, tape) = spec.apply(x.view(), &mut ChaCha8Rng::seed_from_u64(seed));
    let dx = dropout_backward(&tape, r.view());
    let nx = numeric_grad(&flat(&x), |v| {
        let (y, _) = spec.apply(reshape(v, 3, 4).view(), &mut ChaCha8Rng::seed_from_u64(seed));
        weighted_sum(&y, &r)
    });
    rel_err(&flat(&dx), &nx)
}

fn affine_ce(p: &AffineParams, h: ArrayView2<'_, f64>, gold: &[usize]) -> f64 {
    let logits = p.forward(h).unwrap();
    gold.iter().enumerate().map(|(i, &y)| softmax_cross_entropy(logits.row(i), y).0).sum()
}

fn check_affine_softmax(rng: &mut ChaCha8Rng) -> f64 {
    let (n, d) = (3, 5);
    let mut p = AffineParams::init_labels(d, rng);
    p.b.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    let h = uniform(rng, n, d);
    let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..7)).collect();
    let logits = p.forward(h.view()).unwrap();
    let mut dl = Array2::zeros(logits.dim());
    for (i, &y) in gold.iter().enumerate() {
        dl.row_mut(i).assign(&softmax_cross_entropy(logits.row(i), y).1);
    }
    let mut g = p.clone();
    g.fill(0.0);
    let dh = p.backward(h.view(), dl.view(), &mut g).unwrap();
    let np = numeric_grad(&p.flatten(), |v| {
        let mut q = p.clone();
        q.assign_flat(v);
        affine_ce(&q, h.view(), &gold)
    });
    let nh = numeric_grad(&flat(&h), |v| affine_ce(&p, reshape(v, n, d).view(), &gold));
    rel_err(&g.flatten(), &np).max(rel_err(&flat(&dh), &nh))
}

fn random_crf(rng: &mut ChaCha8Rng, k: usize) -> CrfParams {
    let mut c = CrfParams::zeros(k);
    c.transitions.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    c.start.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    c.end.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    c
}

fn check_crf(rng: &mut ChaCha8Rng) -> f64 {
    let (n, k) = (rng.gen_range(1..5), rng.gen_range(2..5));
    let c = random_crf(rng, k);
    let e = uniform(rng, n, k);
    let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let out = c.nll(e.view(), &gold).unwrap();
    let np = numeric_grad(&c.flatten(), |v| {
        let mut q = c.clone();
        q.assign_flat(v);
        q.nll(e.view(), &gold).unwrap().loss
    });
    let ne = numeric_grad(&flat(&e), |v| c.nll(reshape(v, n, k).view(), &gold).unwrap().loss);
    rel_err(&out.grad.flatten(), &np).max(rel_err(&flat(&out.d_emissions), &ne))
}

fn random_paragraph(rng: &mut ChaCha8Rng, dim: usize) -> VectorizedParagraph {
    let lens: Vec<usize> = (0..rng.gen_range(2..=3)).map(|_| rng.gen_range(1..=3)).collect();
    let n: usize = lens.iter().sum();
    let mut spans = Vec::new();
    let mut start = 0;
    for l in lens {
        spans.push((start, start + l));
        start += l;
    }
    VectorizedParagraph {
        features: uniform(rng, n, dim),
        spans,
        connective_mask: (0..n).map(|_| rng.gen_bool(0.3)).collect(),
    }
}

fn check_composed(rng: &mut ChaCha8Rng, variant: ModelVariant) -> f64 {
    let dim = 4;
    let config = TrainConfig {
        hidden: 4,
        seed: rng.gen(),
        mask_connectives: rng.gen_bool(0.5),
        ..TrainConfig::default()
    };
    let mut model = Model::new(variant, dim, &config);
    if let Some(c) = &mut model.params.crf {
        *c = random_crf(rng, 7);
    }
    let inputs: Vec<VectorizedParagraph> = (0..2).map(|_| random_paragraph(rng, dim)).collect();
    let golds: Vec<Vec<usize>> = inputs
        .iter()
        .map(|p| (0..p.spans.len()).map(|_| rng.gen_range(0..7)).collect())
        .collect();
    let batch: Vec<Example<'_>> = inputs.iter().zip(&golds).map(|(input, gold)| Example { input, gold }).collect();
    let l2 = 1e-2;
    let (_, grad) = model.loss_and_grad(&batch, &DropoutSpec::inference(), &[0, 0], l2).unwrap();
    let numeric = numeric_grad(&model.params.flatten(), |v| {
        let mut m = model.clone();
        m.params.assign_flat(v);
        m.loss(&batch, l2).unwrap()
    });
    rel_err(&grad.flatten(), &numeric)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    type Check = fn(&mut ChaCha8Rng) -> f64;
    let kernels: [(&str, Check); 6] = [
        ("lstm", check_lstm),
        ("bilstm", check_bilstm),
        ("maxpool", check_pool),
        ("dropout", check_dropout),
        ("affine+softmax", check_affine_softmax),
        ("crf", check_crf),
    ];
    for _ in 0..DRAWS {
        for (name, f) in kernels {
            let e = f(&mut rng);
            let w = worst.entry(name.to_string()).or_insert(0.0);
            *w = w.max(e);
        }
        for v in ModelVariant::ALL {
            let e = check_composed(&mut rng, v);
            let w = worst.entry(format!("model:{v}")).or_insert(0.0);
            *w = w.max(e);
        }
    }
    let elapsed = start.elapsed();
    let max = worst.values().copied().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k}={v:.1e}")).collect::<Vec<_>>().join(" ");
    outcome(
        "1 gradient integrity",
        max < FD_TOL && within(elapsed, 60),
        format!("{DRAWS} draws, max rel err {max:.2e} (< {FD_TOL:e}); {detail}; {elapsed:.1?} (< 60s)"),
    )
}

// ------------------------------------------------------------ criterion 2

fn brute_score(c: &CrfParams, e: &Array2<f64>, path: &[usize]) -> f64 {
    let mut s = c.start[path[0]] + c.end[path[path.len() - 1]];
    for (i, &y) in path.iter().enumerate() {
        s += e[[i, y]];
        if i > 0 {
            s += c.transitions[[path[i - 1], y]];
        }
    }
    s
}

fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut err_z, mut err_p, mut err_m) = (0.0f64, 0.0f64, 0.0f64);
    let mut viterbi_mismatch = 0;
    let mut cases = 0;
    for n in 1..=5 {
        for k in 2..=4 {
            let paths = all_paths(n, k);
            for _ in 0..200 {
                let c = random_crf(&mut rng, k);
                let e = Array2::from_shape_simple_fn((n, k), || rng.gen_range(-2.0..2.0));
                let scores: Vec<f64> = paths.iter().map(|p| brute_score(&c, &e, p)).collect();
                let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let log_z = top + scores.iter().map(|s| (s - top).exp()).sum::<f64>().ln();

                err_z = err_z.max((c.log_partition(e.view()).unwrap() - log_z).abs());

                let gold = &paths[rng.gen_range(0..paths.len())];
                let prob = (brute_score(&c, &e, gold) - log_z).exp();
                let nll = c.nll(e.view(), gold).unwrap().loss;
                err_p = err_p.max(((-nll).exp() - prob).abs());

                let mut unary = Array2::<f64>::zeros((n, k));
                let mut pair = vec![Array2::<f64>::zeros((k, k)); n.saturating_sub(1)];
                for (p, s) in paths.iter().zip(&scores) {
                    let w = (s - log_z).exp();
                    for i in 0..n {
                        unary[[i, p[i]]] += w;
                        if i + 1 < n {
                            pair[i][[p[i], p[i + 1]]] += w;
                        }
                    }
                }
                let m = c.marginals(e.view()).unwrap();
                err_m = err_m.max((&m.unary - &unary).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b)));
                for (a, b) in m.pairwise.iter().zip(&pair) {
                    err_m = err_m.max((a - b).mapv(f64::abs).fold(0.0, |x: f64, &y| x.max(y)));
                }

                let best = scores
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, &s)| if s > scores[b] { i } else { b });
                let (path, score) = c.viterbi(e.view()).unwrap();
                if path != paths[best] || (score - scores[best]).abs() > 1e-9 {
                    viterbi_mismatch += 1;
                }
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = err_z < 1e-9 && err_p < 1e-9 && err_m < 1e-10 && viterbi_mismatch == 0 && within(elapsed, 60);
    outcome(
        "2 CRF oracle equivalence",
        pass,
        format!(
            "{cases} draws; |logZ| {err_z:.1e}, |P(gold)| {err_p:.1e} (< 1e-9), marginals {err_m:.1e} (< 1e-10), viterbi mismatches {viterbi_mismatch}; {elapsed:.1?} (< 60s)"
        ),
    )
}

// ------------------------------------------------------------ criterion 3

fn criterion_3() -> Outcome {
    use SeLabel::*;
    // (gold, predicted, accuracy, macro-F1, per-label F1 spot checks)
    let cases: Vec<(Vec<SeLabel>, Vec<SeLabel>, f64, f64, Vec<(SeLabel, f64)>)> = vec![
        (
            vec![State, State, Event, Event, Event],
            vec![State, Event, Event, Event, State],
            0.6,
            7.0 / 12.0,
            vec![(State, 0.5), (Event, 2.0 / 3.0)],
        ),
        (vec![Generic, Report, Generic], vec![Generic, Report, Generic], 1.0, 1.0, vec![(Generic, 1.0)]),
        (vec![State, Event], vec![Event, State], 0.0, 0.0, vec![(State, 0.0), (Event, 0.0)]),
        (
            vec![State, State, State, Event],
            vec![State, State, Event, Event],
            0.75,
            11.0 / 15.0,
            vec![(State, 0.8), (Event, 2.0 / 3.0)],
        ),
        (
            vec![State, Event, Generic],
            vec![State, Event, Report],
            2.0 / 3.0,
            0.5,
            vec![(Generic, 0.0), (Report, 0.0)],
        ),
        (
            vec![Question, Question, Question],
            vec![Question, Question, Imperative],
            2.0 / 3.0,
            0.4,
            vec![(Question, 0.8), (Imperative, 0.0)],
        ),
    ];
    let mut failures = Vec::new();
    for (i, (g, p, acc, macro_f1, spots)) in cases.iter().enumerate() {
        let m = score(g, p).unwrap();
        let mut ok = (m.accuracy - acc).abs() < 1e-12 && (m.macro_f1 - macro_f1).abs() < 1e-12;
        ok &= spots.iter().all(|&(l, f)| (m.f1(l) - f).abs() < 1e-12);
        if !ok {
            failures.push(i);
        }
    }
    outcome(
        "3 metric correctness",
        failures.is_empty(),
        format!("{} hand-computed cases, failing {failures:?}", cases.len()),
    )
}

// ------------------------------------------------------------ criterion 4

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let d = generate(&SynthTask::Keyword, &SynthSpec::default());
    let vectorizer = synth_vectorizer(300, 4);
    let config = TrainConfig::default();
    let mut reached = Vec::new();
    for variant in ModelVariant::ALL {
        let mut hit = None;
        let out = train_with_monitor(variant, &config, &d, Some(&d), &vectorizer, |r, _| {
            if r.dev_accuracy.unwrap_or(0.0) >= 0.99 {
                hit = Some((r.epoch, r.dev_accuracy.unwrap()));
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        let last = out.history.last().unwrap();
        reached.push((variant, hit, last.dev_accuracy.unwrap()));
    }
    let elapsed = start.elapsed();
    let all = reached.iter().all(|(_, h, _)| h.is_some());
    let detail = reached
        .iter()
        .map(|(v, h, last)| match h {
            Some((e, a)) => format!("{v} {:.2}% at epoch {e}", 100.0 * a),
            None => format!("{v} only {:.2}% after 40", 100.0 * last),
        })
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        "4 overfit capacity",
        all && within(elapsed, 600),
        format!("{} paragraphs, default config: {detail}; {elapsed:.1?} (< 600s)", d.len()),
    )
}

// ------------------------------------------------------------ criterion 5

fn majority_baseline(train_set: &Dataset, test: &Dataset) -> f64 {
    let counts = train_set.label_counts();
    let top = (0..counts.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    let gold = test.gold_labels().unwrap();
    gold.iter().filter(|l| l.index() == top).count() as f64 / gold.len() as f64
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let task = SynthTask::Context;
    let train_set = generate(&task, &SynthSpec { paragraphs: 600, seed: 51, ..SynthSpec::default() });
    let test = generate(&task, &SynthSpec { paragraphs: 200, seed: 52, ..SynthSpec::default() });
    let vectorizer = synth_vectorizer(300, 5);
    let config = TrainConfig {
        hidden: 64,
        batch_se: 16,
        ..TrainConfig::default()
    };
    let prior = majority_baseline(&train_set, &test);
    let clause = train_and_evaluate(ModelVariant::ClauseLevel, &config, &train_set, &test, &vectorizer).unwrap();
    let para = train_and_evaluate(ModelVariant::Paragraph, &config, &train_set, &test, &vectorizer).unwrap();
    let elapsed = start.elapsed();
    let (ca, pa) = (clause.metrics.accuracy, para.metrics.accuracy);
    outcome(
        "5 context sensitivity",
        (ca - prior).abs() <= 0.05 && pa >= 0.95 && within(elapsed, 600),
        format!(
            "prior {:.1}%, clause {:.1}% (within ±5), paragraph {:.1}% (≥ 95); {elapsed:.1?} (< 600s)",
            100.0 * prior,
            100.0 * ca,
            100.0 * pa
        ),
    )
}

// ------------------------------------------------------------ criterion 6

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let task = SynthTask::LabelRuns {
        labels: 7,
        stay: 0.9,
        cue_rate: 0.5,
        blank: false,
    };
    let spec = SynthSpec {
        paragraphs: 300,
        min_clauses: 3,
        max_clauses: 10,
        synonyms: 1,
        ..SynthSpec::default()
    };
    let vectorizer = synth_vectorizer(300, 6);
    let mut para = Vec::new();
    let mut crf = Vec::new();
    for seed in 0..5u64 {
        let train_set = generate(&task, &SynthSpec { seed: 600 + seed, ..spec.clone() });
        let test = generate(&task, &SynthSpec { seed: 700 + seed, ..spec.clone() });
        let config = TrainConfig {
            hidden: 32,
            batch_se: 16,
            max_epochs: 30,
            seed,
            ..TrainConfig::default()
        };
        para.push(train_and_evaluate(ModelVariant::Paragraph, &config, &train_set, &test, &vectorizer).unwrap().metrics.accuracy);
        crf.push(train_and_evaluate(ModelVariant::ParagraphCrf, &config, &train_set, &test, &vectorizer).unwrap().metrics.accuracy);
    }
    let elapsed = start.elapsed();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gap = mean(&crf) - mean(&para);
    outcome(
        "6 label-pattern benefit",
        gap >= 0.02 && within(elapsed, 900),
        format!(
            "mean over 5 seeds: paragraph {:.2}%, paragraph-crf {:.2}%, gap {:+.2} points (≥ +2); {elapsed:.1?} (< 900s)",
            100.0 * mean(&para),
            100.0 * mean(&crf),
            100.0 * gap
        ),
    )
}

// ------------------------------------------------------------ criterion 7

fn criterion_7() -> (Outcome, Outcome) {
    let start = Instant::now();
    let vectorizer = synth_vectorizer(300, 7);
    let lexicon = ConnectiveLexicon::builtin();

    let task = SynthTask::Connective;
    let train_set = generate(&task, &SynthSpec { paragraphs: 300, seed: 71, ..SynthSpec::default() });
    let test = generate(&task, &SynthSpec { paragraphs: 200, seed: 72, ..SynthSpec::default() });
    let config = TrainConfig {
        hidden: 32,
        batch_se: 16,
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let variant = ModelVariant::Paragraph;
    let retrain = connective_ablation(variant, &config, &train_set, &test, &lexicon, &vectorizer, AblationMode::Retrain).unwrap();
    let eval_only = connective_ablation(variant, &config, &train_set, &test, &lexicon, &vectorizer, AblationMode::EvalOnly).unwrap();
    let drop = retrain.normal_connective.accuracy - retrain.masked_connective.accuracy;
    let eval_drop = eval_only.normal_connective.accuracy - eval_only.masked_connective.accuracy;

    // Plumbing: with no connectives, masking must not change pooled inputs.
    let plain = generate(&SynthTask::Keyword, &SynthSpec { paragraphs: 50, seed: 73, ..SynthSpec::default() });
    let (plain, report) = mark_connectives(&plain, &lexicon);
    let masked_model = Model::new(variant, vectorizer.output_dim(), &TrainConfig { hidden: 8, mask_connectives: true, ..config.clone() });
    let mut unmasked_model = masked_model.clone();
    unmasked_model.mask_connectives = false;
    let bitwise = plain.paragraphs.iter().all(|p| {
        let v = vectorizer.vectorize_paragraph(p);
        let a = masked_model.pooled(&v).unwrap();
        let b = unmasked_model.pooled(&v).unwrap();
        a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    // And on marked text it must.
    let marked = vectorizer.vectorize_paragraph(&mark_connectives(&test, &lexicon).0.paragraphs[0]);
    let differs = masked_model.pooled(&marked).unwrap() != unmasked_model.pooled(&marked).unwrap();
    let elapsed = start.elapsed();

    let gate = outcome(
        "7a connective ablation drop",
        drop >= 0.30,
        format!(
            "retrained masked pooling: connective-clause accuracy {:.1}% -> {:.1}%, drop {:.1} points (≥ 30); eval-only masking drop {:.1} points; {elapsed:.1?}",
            100.0 * retrain.normal_connective.accuracy,
            100.0 * retrain.masked_connective.accuracy,
            100.0 * drop,
            100.0 * eval_drop
        ),
    );
    let plumbing = outcome(
        "7b masking plumbing",
        report.marked_clauses == 0 && bitwise && differs,
        format!(
            "connective-free corpus: {} marked clauses, pooled inputs bitwise identical: {bitwise}; marked corpus pooled inputs differ: {differs}",
            report.marked_clauses
        ),
    );
    (gate, plumbing)
}

// ------------------------------------------------------------ criterion 8

fn criterion_8() -> Outcome {
    let vectorizer = synth_vectorizer(16, 8);
    let spec = SynthSpec { paragraphs: 60, genres: 3, seed: 81, ..SynthSpec::default() };
    let d = generate(&SynthTask::Keyword, &spec);
    let config = TrainConfig {
        hidden: 6,
        max_epochs: 2,
        seed: 8,
        ..TrainConfig::default()
    };

    // 10-fold CV: every clause predicted exactly once.
    let folds = kfold_split(&d, 10, 3).unwrap();
    let mut held = vec![0usize; d.len()];
    for f in &folds {
        for &i in &f.test_indices {
            held[i] += 1;
        }
    }
    let cv = cross_validate(ModelVariant::ParagraphCrf, &config, &d, &folds, &vectorizer).unwrap();
    let shapes = cv.predictions.iter().zip(&d.paragraphs).all(|(p, q)| p.len() == q.clauses.len());
    let cv_ok = held.iter().all(|&c| c == 1) && shapes && cv.pooled.total == d.num_clauses();

    // Holdout: per-genre 80:20 within one paragraph.
    let uneven = generate(&SynthTask::Keyword, &SynthSpec { paragraphs: 47, genres: 3, seed: 82, ..SynthSpec::default() });
    let fold = holdout_split(&uneven, 0.8, 5).unwrap();
    let holdout_ok = uneven.genres.iter().all(|g| {
        let total = uneven.paragraphs.iter().filter(|p| &p.genre == g).count() as f64;
        let test = fold.test.paragraphs.iter().filter(|p| &p.genre == g).count() as f64;
        (test - 0.2 * total).abs() <= 1.0
    }) && fold.train.len() + fold.test.len() == uneven.len();

    // Checkpoint round trip and seed determinism.
    let a = train(ModelVariant::ParagraphCrf, &config, &d, None, &vectorizer).unwrap();
    let b = train(ModelVariant::ParagraphCrf, &config, &d, None, &vectorizer).unwrap();
    let same_seed = a.model.params.flatten().iter().zip(b.model.params.flatten()).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.history == b.history;
    let ck = Checkpoint {
        model: a.model.clone(),
        config: config.clone(),
        epoch: a.selected_epoch,
    };
    let mut bytes = Vec::new();
    write_checkpoint(&ck, &mut bytes).unwrap();
    let back = read_checkpoint(bytes.as_slice()).unwrap();
    let round_trip = back.model.predict(&d, &vectorizer).unwrap() == a.model.predict(&d, &vectorizer).unwrap()
        && back.model == a.model;

    let gold: Vec<Vec<SeLabel>> = d.paragraphs.iter().map(|p| p.gold_labels().unwrap()).collect();
    let again = cross_validate(ModelVariant::ParagraphCrf, &config, &d, &folds, &vectorizer).unwrap();
    let cv_repeat = again.predictions == cv.predictions && score_paragraphs(&gold, &again.predictions).unwrap() == cv.pooled;

    outcome(
        "8 protocol reproducibility",
        cv_ok && holdout_ok && round_trip && same_seed && cv_repeat,
        format!(
            "cv exactly-once {cv_ok}, holdout per-genre 80:20 {holdout_ok}, checkpoint round trip {round_trip}, same-seed training identical {same_seed}, cv repeat identical {cv_repeat}"
        ),
    )
}

// ------------------------------------------------------------------ main

fn main() -> ExitCode {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: &str| only.is_empty() || only.iter().any(|o| id.starts_with(o.as_str()));
    let mut results = Vec::new();
    let mut run = |id: &str, f: &mut dyn FnMut() -> Vec<Outcome>| {
        if wanted(id) {
            for o in f() {
                println!("{} criterion {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
                results.push(o);
            }
        }
    };
    run("1", &mut || vec![criterion_1()]);
    run("2", &mut || vec![criterion_2()]);
    run("3", &mut || vec![criterion_3()]);
    run("4", &mut || vec![criterion_4()]);
    run("5", &mut || vec![criterion_5()]);
    run("6", &mut || vec![criterion_6()]);
    run("7", &mut || {
        let (a, b) = criterion_7();
        vec![a, b]
    });
    run("8", &mut || vec![criterion_8()]);
    if wanted("9") {
        let o = Outcome {
            id: "9 licensed-data harness",
            pass: true,
            detail: "not gating; run scripts/reproduce_holdout.sh with the licensed corpus".into(),
            gating: false,
        };
        println!("SKIP criterion {}: {}", o.id, o.detail);
        results.push(o);
    }
    let failed: Vec<&str> = results.iter().filter(|o| o.gating && !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.iter().filter(|o| o.gating && o.pass).count(),
        failed.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
