//! Genre-balanced split protocols. Every split is a pure function of the
//! dataset, its parameters and the seed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// One train/test partition with the test paragraphs' positions in the
/// source dataset.
#[derive(Clone, Debug)]
pub struct Fold {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl Fold {
    fn from_indices(d: &Dataset, name: String, mut train: Vec<usize>, mut test: Vec<usize>) -> Fold {
        train.sort_unstable();
        test.sort_unstable();
        Fold {
            name,
            train: d.subset(&train),
            test: d.subset(&test),
            train_indices: train,
            test_indices: test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitSpec {
    Holdout { ratio: f64, seed: u64 },
    Kfold { k: usize, seed: u64 },
    LeaveOneGenreOut { genre: Option<String> },
}

impl SplitSpec {
    /// Runs the split. Holdout yields a single fold named "holdout"; a
    /// leave-one-genre-out spec with a genre yields only that genre's fold.
    pub fn apply(&self, d: &Dataset) -> Result<Vec<Fold>> {
        match self {
            SplitSpec::Holdout { ratio, seed } => holdout_split(d, *ratio, *seed).map(|f| vec![f]),
            SplitSpec::Kfold { k, seed } => kfold_split(d, *k, *seed),
            SplitSpec::LeaveOneGenreOut { genre } => {
                let folds = genre_folds(d)?;
                match genre {
                    None => Ok(folds),
                    Some(g) => {
                        let fold = folds
                            .into_iter()
                            .find(|f| &f.name == g)
                            .ok_or_else(|| Error::Split(format!("genre {g:?} not in dataset")))?;
                        Ok(vec![fold])
                    }
                }
            }
        }
    }
}

/// Paragraph indices grouped by genre, genres in sorted order, each group
/// shuffled by a single seeded stream.
fn shuffled_by_genre(d: &Dataset, seed: u64) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in d.paragraphs.iter().enumerate() {
        groups.entry(&p.genre).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups
        .into_values()
        .map(|mut g| {
            g.shuffle(&mut rng);
            g
        })
        .collect()
}

pub fn holdout_split(d: &Dataset, ratio: f64, seed: u64) -> Result<Fold> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Split(format!("holdout ratio {ratio} not in (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in shuffled_by_genre(d, seed) {
        let n_train = (ratio * group.len() as f64).round() as usize;
        train.extend_from_slice(&group[..n_train]);
        test.extend_from_slice(&group[n_train..]);
    }
    Ok(Fold::from_indices(d, "holdout".into(), train, test))
}

/// Seeded per-genre shuffle followed by round-robin fold assignment. The
/// round-robin cursor carries over between genres so fold sizes also stay
/// within one paragraph of each other.
pub fn kfold_split(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Split(format!("k = {k}, need at least 2 folds")));
    }
    if k > d.len() {
        return Err(Error::Split(format!(
            "k = {k} exceeds paragraph count {}",
            d.len()
        )));
    }
    let mut assignment = vec![0usize; d.len()];
    let mut cursor = 0;
    for group in shuffled_by_genre(d, seed) {
        for i in group {
            assignment[i] = cursor % k;
            cursor += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..d.len()).partition(|&i| assignment[i] == f);
            Fold::from_indices(d, format!("fold{f}"), train, test)
        })
        .collect())
}

/// One fold per genre (sorted by name) holding out all paragraphs of it.
pub fn genre_folds(d: &Dataset) -> Result<Vec<Fold>> {
    if d.genres.len() < 2 {
        return Err(Error::Split(format!(
            "cross-genre folds need at least 2 genres, dataset has {}",
            d.genres.len()
        )));
    }
    Ok(d
        .genres
        .iter()
        .map(|g| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..d.len()).partition(|&i| &d.paragraphs[i].genre == g);
            Fold::from_indices(d, g.clone(), train, test)
        })
        .collect())
}
