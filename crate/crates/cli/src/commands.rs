use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use sitent_core::corpus::{
    corpus_stats, holdout_split, kfold_split, load_corpus, save_corpus, Dataset, SeLabel, NUM_LABELS,
};
use sitent_core::eval::{
    connective_ablation, cross_genre, cross_validate, derive_seed, learning_curve, run_repeated, score_paragraphs,
    summary_header, summary_row, AblationMode, Metrics, MetricSummary,
};
use sitent_core::model::{train_with_monitor, Checkpoint, TrainConfig};
use sitent_core::synth::{generate, SynthSpec, SynthTask};

use crate::options::{build_vectorizer, parse_fractions, Resolved};
use crate::output::{Manifest, OutDir};
use crate::{
    AblateArgs, AblationArg, CrossgenreArgs, CurveArgs, CvArgs, EvalArgs, HoldoutArgs, PredictArgs, SplitArgs, SplitData,
    StatsArgs, SynthArgs, TaskArg, TrainArgs,
};

fn load(path: &Path) -> Result<Dataset> {
    let (d, report) = load_corpus(path)?;
    for (kind, unknown) in [("POS", &report.unknown_pos), ("NE", &report.unknown_ne)] {
        if !unknown.is_empty() {
            let total: usize = unknown.values().sum();
            eprintln!("{}: {total} tokens with unknown {kind} tags {:?}", path.display(), unknown.keys().collect::<Vec<_>>());
        }
    }
    Ok(d)
}

fn gold_of(d: &Dataset) -> Result<Vec<Vec<SeLabel>>> {
    Ok(d.paragraphs.iter().map(|p| p.gold_labels()).collect::<sitent_core::Result<_>>()?)
}

/// Seeds of the `runs` repetitions, derived from the master seed.
fn run_seeds(t: &TrainConfig) -> Vec<u64> {
    (0..t.runs as u64).map(|r| derive_seed(t.seed, r)).collect()
}

/// File prefix for repetition `r`: flat when there is only one.
fn run_prefix(runs: usize, r: usize) -> String {
    if runs == 1 {
        String::new()
    } else {
        format!("run{r}/")
    }
}

fn train_test(data: &SplitData, seed: u64) -> Result<(Dataset, Dataset)> {
    let d = load(&data.corpus)?;
    match &data.test {
        Some(t) => Ok((d, load(t)?)),
        None => {
            let fold = holdout_split(&d, data.ratio, seed)?;
            Ok((fold.train, fold.test))
        }
    }
}

fn manifest_for(command: &str, r: &Resolved, inputs: &[Option<&Path>]) -> Result<Manifest> {
    let mut m = Manifest::new(command, r)?;
    m.inputs(inputs.iter().copied())?;
    m.inputs([r.embeddings.as_deref()])?;
    Ok(m)
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let d = load(&a.corpus)?;
    let s = corpus_stats(&d)?;
    let mut out = format!("paragraphs\t{}\nclauses\t{}\ntokens\t{}\n\nlabel\tcount\tpercent", s.paragraphs, s.clauses, s.tokens);
    let genres: Vec<&String> = if a.by_genre { s.by_genre.keys().collect() } else { Vec::new() };
    for g in &genres {
        write!(out, "\t{g}").unwrap();
    }
    out.push('\n');
    let pct = s.percentages();
    let per_genre: Vec<[f64; NUM_LABELS]> = genres.iter().map(|g| s.genre_percentages(g).unwrap()).collect();
    for l in SeLabel::ALL {
        write!(out, "{l}\t{}\t{:.1}", s.count(l), pct[l.index()]).unwrap();
        for g in &per_genre {
            write!(out, "\t{:.1}", g[l.index()]).unwrap();
        }
        out.push('\n');
    }
    std::io::stdout().write_all(out.as_bytes())?;
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let task = match a.task {
        TaskArg::Keyword => SynthTask::Keyword,
        TaskArg::Context => SynthTask::Context,
        TaskArg::Connective => SynthTask::Connective,
        TaskArg::LabelRuns => SynthTask::LabelRuns {
            labels: a.labels,
            stay: a.stay,
            cue_rate: a.cue_rate,
            blank: a.blank,
        },
    };
    if a.min_clauses == 0 || a.min_clauses > a.max_clauses {
        bail!("need 1 <= --min-clauses <= --max-clauses");
    }
    if a.task == TaskArg::LabelRuns && !((0.0..=1.0).contains(&a.stay) && (0.0..=1.0).contains(&a.cue_rate)) {
        bail!("--stay and --cue-rate must lie in [0, 1]");
    }
    let spec = SynthSpec {
        paragraphs: a.paragraphs,
        genres: a.genres,
        min_clauses: a.min_clauses,
        max_clauses: a.max_clauses,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let d = generate(&task, &spec);
    save_corpus(&d, &a.output)?;
    eprintln!("wrote {} paragraphs, {} clauses to {}", d.len(), d.num_clauses(), a.output.display());
    Ok(())
}

impl PartialEq for TaskArg {
    fn eq(&self, other: &Self) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let d = load(&a.corpus)?;
    let mut out = OutDir::create(&a.out_dir)?;
    let folds = match a.k {
        Some(k) => kfold_split(&d, k, a.seed)?,
        None => vec![holdout_split(&d, a.ratio, a.seed)?],
    };
    let nested = folds.len() > 1;
    for f in &folds {
        let dir = if nested { format!("{}/", f.name) } else { String::new() };
        for (part, data) in [("train", &f.train), ("test", &f.test)] {
            let name = format!("{dir}{part}.jsonl");
            let path = out.path(&name);
            std::fs::create_dir_all(path.parent().unwrap())?;
            save_corpus(data, &path)?;
            out.record(&name);
        }
        eprintln!("{}: {} train / {} test paragraphs", f.name, f.train.len(), f.test.len());
    }
    #[derive(Serialize)]
    struct SplitConfig<'a> {
        ratio: f64,
        k: Option<usize>,
        seed: u64,
        corpus: &'a Path,
    }
    let mut m = Manifest::new(
        "split",
        &SplitConfig {
            ratio: a.ratio,
            k: a.k,
            seed: a.seed,
            corpus: &a.corpus,
        },
    )?;
    m.input(&a.corpus)?;
    m.seeds([a.seed]);
    out.finish(m)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let r = a.flags.resolve()?;
    let d = load(&a.corpus)?;
    let dev = a.dev.as_deref().map(load).transpose()?;
    let vectorizer = r.vectorizer()?;
    let mut out = OutDir::create(&a.out_dir)?;
    let outcome = train_with_monitor(r.variant, &r.train, &d, dev.as_ref(), &vectorizer, |rec, _| {
        match (rec.dev_accuracy, rec.dev_macro_f1) {
            (Some(acc), Some(f1)) => eprintln!("epoch {:>2}  loss {:.4}  dev acc {acc:.4}  dev macro-F1 {f1:.4}", rec.epoch, rec.train_loss),
            _ => eprintln!("epoch {:>2}  loss {:.4}", rec.epoch, rec.train_loss),
        }
        std::ops::ControlFlow::Continue(())
    })?;
    let ck_path = a.checkpoint.clone().unwrap_or_else(|| out.path("model.ckpt"));
    Checkpoint {
        model: outcome.model.clone(),
        config: r.train.clone(),
        epoch: outcome.selected_epoch,
    }
    .save(&ck_path)?;
    out.record(&ck_path.display().to_string());
    outcome.write_history(out.writer("history.tsv")?)?;
    eprintln!("selected epoch {}; checkpoint {}", outcome.selected_epoch, ck_path.display());
    let mut m = manifest_for("train", &r, &[Some(&a.corpus), a.dev.as_deref()])?;
    m.seeds([r.train.seed]);
    out.finish(m)
}

/// Loads a checkpoint and the vectorizer it was trained with.
fn restore(checkpoint: &Path, embed: &crate::options::EmbedFlags) -> Result<(Checkpoint, sitent_core::embed::FeatureVectorizer)> {
    let ck = Checkpoint::load(checkpoint)?;
    let dim = embed.embedding_dim.unwrap_or(sitent_core::embed::DEFAULT_EMBEDDING_DIM);
    let vectorizer = build_vectorizer(embed.embeddings.as_deref(), dim, ck.config.seed)?;
    if vectorizer.output_dim() != ck.model.input_dim() {
        bail!(
            "checkpoint expects {}-dimensional token features, embeddings give {}; pass the --embeddings/--embedding-dim used in training",
            ck.model.input_dim(),
            vectorizer.output_dim()
        );
    }
    Ok((ck, vectorizer))
}

#[derive(Serialize)]
struct RestoreConfig<'a> {
    checkpoint: &'a Path,
    variant: String,
    train: &'a TrainConfig,
    epoch: usize,
    embeddings: Option<&'a Path>,
}

fn restore_manifest(command: &str, ck: &Checkpoint, path: &Path, corpus: &Path, embed: &crate::options::EmbedFlags) -> Result<Manifest> {
    let mut m = Manifest::new(
        command,
        &RestoreConfig {
            checkpoint: path,
            variant: ck.model.variant.to_string(),
            train: &ck.config,
            epoch: ck.epoch,
            embeddings: embed.embeddings.as_deref(),
        },
    )?;
    m.inputs([Some(corpus), Some(path), embed.embeddings.as_deref()])?;
    m.seeds([ck.config.seed]);
    Ok(m)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let (ck, vectorizer) = restore(&a.checkpoint, &a.embed)?;
    let d = load(&a.corpus)?;
    let gold = gold_of(&d)?;
    let predicted = ck.model.predict(&d, &vectorizer)?;
    let m = score_paragraphs(&gold, &predicted)?;
    let mut out = OutDir::create(&a.out_dir)?;
    out.metrics("metrics", ck.model.variant.as_str(), &m)?;
    out.buckets("buckets.tsv", &gold, &predicted)?;
    println!("{}\n{}", summary_header(), summary_row(ck.model.variant.as_str(), &m));
    out.finish(restore_manifest("eval", &ck, &a.checkpoint, &a.corpus, &a.embed)?)
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let (ck, vectorizer) = restore(&a.checkpoint, &a.embed)?;
    let d = load(&a.corpus)?;
    let predicted = ck.model.predict(&d, &vectorizer)?;
    let mut out = OutDir::create(&a.out_dir)?;
    let mut w = out.writer("predictions.tsv")?;
    for (pi, (p, labels)) in d.paragraphs.iter().zip(&predicted).enumerate() {
        for (c, l) in p.clauses.iter().zip(labels) {
            writeln!(w, "{}:{pi}:{}\t{l}", p.doc_id, c.clause_index)?;
        }
    }
    w.flush()?;
    drop(w);
    eprintln!("predicted {} clauses", d.num_clauses());
    out.finish(restore_manifest("predict", &ck, &a.checkpoint, &a.corpus, &a.embed)?)
}

fn summary_table(rows: &[(String, &Metrics)]) -> String {
    let mut s = summary_header();
    s.push('\n');
    for (name, m) in rows {
        s.push_str(&summary_row(name, m));
        s.push('\n');
    }
    s
}

pub fn holdout(a: &HoldoutArgs) -> Result<()> {
    let r = a.flags.resolve()?;
    let (train_set, test) = train_test(&a.data, r.train.seed)?;
    let vectorizer = r.vectorizer()?;
    let rep = run_repeated(r.variant, &r.train, &train_set, &test, &vectorizer)?;
    let mut out = OutDir::create(&a.out_dir)?;
    let gold = gold_of(&test)?;
    for (i, run) in rep.runs.iter().enumerate() {
        let p = run_prefix(rep.runs.len(), i);
        out.metrics(&format!("{p}metrics"), &format!("run{i}"), &run.metrics)?;
        out.buckets(&format!("{p}buckets.tsv"), &gold, &run.predictions)?;
    }
    let rows: Vec<(String, &Metrics)> = rep.runs.iter().enumerate().map(|(i, run)| (format!("run{i}"), &run.metrics)).collect();
    out.text("runs.tsv", &summary_table(&rows))?;
    out.json("summary.json", &rep.summary)?;
    print_summary(&rep.summary);
    let mut m = manifest_for("holdout", &r, &[Some(&a.data.corpus), a.data.test.as_deref()])?;
    m.seeds(rep.runs.iter().map(|x| x.seed));
    out.finish(m)
}

fn print_summary(s: &MetricSummary) {
    println!(
        "accuracy {:.4} ± {:.4}   macro-F1 {:.4} ± {:.4}",
        s.accuracy.mean, s.accuracy.std, s.macro_f1.mean, s.macro_f1.std
    );
}

pub fn cv(a: &CvArgs) -> Result<()> {
    let r = a.flags.resolve()?;
    let d = load(&a.corpus)?;
    let folds = kfold_split(&d, a.k, r.train.seed)?;
    let vectorizer = r.vectorizer()?;
    let mut out = OutDir::create(&a.out_dir)?;
    let seeds = run_seeds(&r.train);
    let mut pooled = Vec::new();
    let mut used = Vec::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let cfg = TrainConfig { seed, ..r.train.clone() };
        let res = cross_validate(r.variant, &cfg, &d, &folds, &vectorizer)?;
        let p = run_prefix(seeds.len(), i);
        for (f, (name, m)) in res.per_fold.iter().enumerate() {
            out.json(&format!("{p}{name}.json"), m)?;
            used.push(derive_seed(seed, f as u64));
        }
        out.metrics(&format!("{p}pooled"), "pooled", &res.pooled)?;
        let rows: Vec<(String, &Metrics)> = res.per_fold.iter().map(|(n, m)| (n.clone(), m)).collect();
        out.text(&format!("{p}folds.tsv"), &summary_table(&rows))?;
        println!("run {i}: pooled accuracy {:.4}  macro-F1 {:.4}", res.pooled.accuracy, res.pooled.macro_f1);
        pooled.push(res.pooled);
    }
    let summary = MetricSummary::of(&pooled);
    out.json("summary.json", &summary)?;
    print_summary(&summary);
    let mut m = manifest_for("cv", &r, &[Some(&a.corpus)])?;
    m.seeds(used);
    out.finish(m)
}

pub fn crossgenre(a: &CrossgenreArgs) -> Result<()> {
    let r = a.flags.resolve()?;
    let d = load(&a.corpus)?;
    let vectorizer = r.vectorizer()?;
    let mut out = OutDir::create(&a.out_dir)?;
    let seeds = run_seeds(&r.train);
    let mut pooled = Vec::new();
    let mut used = Vec::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let cfg = TrainConfig { seed, ..r.train.clone() };
        let res = cross_genre(r.variant, &cfg, &d, &vectorizer)?;
        used.extend((0..res.per_genre.len() as u64).map(|f| derive_seed(seed, f)));
        let p = run_prefix(seeds.len(), i);
        let rows: Vec<(String, &Metrics)> = res.per_genre.iter().map(|(g, m)| (g.clone(), m)).collect();
        out.text(&format!("{p}per_genre.tsv"), &summary_table(&rows))?;
        out.metrics(&format!("{p}pooled"), "pooled", &res.pooled)?;
        println!("run {i}: {} genres, pooled macro-F1 {:.4}", res.per_genre.len(), res.pooled.macro_f1);
        pooled.push(res.pooled);
    }
    let summary = MetricSummary::of(&pooled);
    out.json("summary.json", &summary)?;
    print_summary(&summary);
    let mut m = manifest_for("crossgenre", &r, &[Some(&a.corpus)])?;
    m.seeds(used);
    out.finish(m)
}

pub fn curve(a: &CurveArgs) -> Result<()> {
    let r = a.flags.resolve()?;
    let fractions = parse_fractions(&a.fractions)?;
    let (train_set, test) = train_test(&a.data, r.train.seed)?;
    let vectorizer = r.vectorizer()?;
    let mut out = OutDir::create(&a.out_dir)?;
    let seeds = run_seeds(&r.train);
    let mut per_fraction: Vec<Vec<Metrics>> = vec![Vec::new(); fractions.len()];
    for (i, &seed) in seeds.iter().enumerate() {
        let cfg = TrainConfig { seed, ..r.train.clone() };
        let points = learning_curve(r.variant, &cfg, &train_set, &test, &fractions, &vectorizer)?;
        out.json(&format!("{}curve.json", run_prefix(seeds.len(), i)), &points)?;
        for (slot, p) in per_fraction.iter_mut().zip(points) {
            slot.push(p.metrics);
        }
    }
    let summaries: Vec<MetricSummary> = per_fraction.iter().map(|ms| MetricSummary::of(ms)).collect();
    let rows: Vec<(String, f64)> = fractions
        .iter()
        .zip(&summaries)
        .map(|(f, s)| (format!("{f}"), s.macro_f1.mean))
        .collect();
    out.text("curve.tsv", &sitent_core::eval::plot_tsv("fraction", "macro_f1", &rows))?;
    #[derive(Serialize)]
    struct Point<'a> {
        fraction: f64,
        summary: &'a MetricSummary,
    }
    let points: Vec<Point<'_>> = fractions
        .iter()
        .zip(&summaries)
        .map(|(&fraction, summary)| Point { fraction, summary })
        .collect();
    out.json("summary.json", &points)?;
    for (f, s) in rows {
        println!("{f}\t{s:.4}");
    }
    let mut m = manifest_for("curve", &r, &[Some(&a.data.corpus), a.data.test.as_deref()])?;
    m.seeds(seeds);
    out.finish(m)
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let r = a.flags.resolve()?;
    let lexicon = r.lexicon(a.lexicon.as_deref())?;
    let (train_set, test) = train_test(&a.data, r.train.seed)?;
    let vectorizer = r.vectorizer()?;
    let mode = match a.mode {
        AblationArg::Retrain => AblationMode::Retrain,
        AblationArg::EvalOnly => AblationMode::EvalOnly,
    };
    let mut out = OutDir::create(&a.out_dir)?;
    let seeds = run_seeds(&r.train);
    let mut deltas = Vec::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let cfg = TrainConfig { seed, ..r.train.clone() };
        let res = connective_ablation(r.variant, &cfg, &train_set, &test, &lexicon, &vectorizer, mode)
            .context("connective ablation")?;
        let p = run_prefix(seeds.len(), i);
        out.json(&format!("{p}ablation.json"), &res)?;
        let rows = [
            ("normal".to_string(), &res.normal),
            ("masked".to_string(), &res.masked),
            ("normal_connective".to_string(), &res.normal_connective),
            ("masked_connective".to_string(), &res.masked_connective),
        ];
        out.text(&format!("{p}ablation.tsv"), &summary_table(&rows))?;
        println!(
            "run {i}: connective clauses {}  accuracy {:+.4}  macro-F1 {:+.4}",
            res.normal_connective.total, res.delta_connective_accuracy, res.delta_connective_macro_f1
        );
        deltas.push((res.delta_connective_accuracy, res.delta_connective_macro_f1));
    }
    let n = deltas.len() as f64;
    #[derive(Serialize)]
    struct Mean {
        runs: usize,
        delta_connective_accuracy: f64,
        delta_connective_macro_f1: f64,
    }
    out.json(
        "summary.json",
        &Mean {
            runs: deltas.len(),
            delta_connective_accuracy: deltas.iter().map(|d| d.0).sum::<f64>() / n,
            delta_connective_macro_f1: deltas.iter().map(|d| d.1).sum::<f64>() / n,
        },
    )?;
    let mut m = manifest_for("ablate", &r, &[Some(&a.data.corpus), a.data.test.as_deref(), a.lexicon.as_deref()])?;
    m.seeds(seeds);
    out.finish(m)
}
