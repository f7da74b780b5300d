//! Few-shot evaluation: accuracy as a function of training examples per class.
//!
//! Each trial shuffles every class with its own child seed, holds out all
//! samples beyond the largest shot count as the test set, and trains on
//! nested prefixes of the remaining pool, so a trial's shot counts share
//! one test set and larger training sets contain the smaller ones.

use rayon::prelude::*;

use super::logreg::{predict, train_logreg, TrainConfig, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::io::LabelTable;
use crate::rng::SeededRng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FewShotConfig {
    pub lambda: f64,
    pub train: TrainConfig,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotRow {
    pub shots: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation over trials; 0 for a single trial.
    pub std_accuracy: f64,
    /// Per-trial accuracies in trial order.
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSplit {
    /// Training pool per class, in draw order; shot `s` uses the first `s`.
    pub pools: Vec<Vec<usize>>,
    pub test: LabelTable,
}

impl FewShotSplit {
    pub fn train_labels(&self, shots: usize) -> LabelTable {
        let rows = self
            .pools
            .iter()
            .enumerate()
            .flat_map(|(y, pool)| pool[..shots].iter().map(move |&i| (i, y)))
            .collect();
        LabelTable::new(rows).expect("pools are disjoint")
    }
}

fn by_class(labels: &LabelTable) -> Result<Vec<Vec<usize>>> {
    let k = labels.class_count();
    let mut groups = vec![Vec::new(); k];
    for &(i, y) in labels.rows() {
        groups[y].push(i);
    }
    if k < 2 {
        return Err(Error::validation(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    if let Some(empty) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::validation(format!("class {empty} has no samples")));
    }
    Ok(groups)
}

/// Draws a training pool of `max_shots` per class and a held-out test set.
pub fn fewshot_split(
    labels: &LabelTable,
    max_shots: usize,
    rng: &mut SeededRng,
) -> Result<FewShotSplit> {
    let groups = by_class(labels)?;
    let mut pools = Vec::with_capacity(groups.len());
    let mut test = Vec::new();
    for (y, mut members) in groups.into_iter().enumerate() {
        if members.len() <= max_shots {
            return Err(Error::validation(format!(
                "class {y} has {} samples, needs {} for {max_shots} shots plus a test sample",
                members.len(),
                max_shots + 1
            )));
        }
        rng.shuffle(&mut members);
        test.extend(members[max_shots..].iter().map(|&i| (i, y)));
        members.truncate(max_shots);
        pools.push(members);
    }
    Ok(FewShotSplit {
        pools,
        test: LabelTable::new(test)?,
    })
}

pub fn fewshot_eval(
    features: &Matrix,
    labels: &LabelTable,
    shots: &[usize],
    trials: usize,
    rng: &mut SeededRng,
    config: &FewShotConfig,
) -> Result<Vec<FewShotRow>> {
    if shots.is_empty() || shots.contains(&0) {
        return Err(Error::validation(
            "shot counts must be non-empty and positive",
        ));
    }
    if trials == 0 {
        return Err(Error::validation("need at least one trial"));
    }
    labels.validate(Some(features.rows()), None)?;
    let k = labels.class_count();
    let max_shots = *shots.iter().max().unwrap();
    // Validate feasibility once, up front.
    fewshot_split(labels, max_shots, &mut SeededRng::new(0))?;

    let base = rng.fork();
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let split = fewshot_split(labels, max_shots, &mut base.child(t as u64))?;
            shots
                .iter()
                .map(|&s| {
                    let model = train_logreg(
                        features,
                        &split.train_labels(s),
                        k,
                        config.lambda,
                        &config.train,
                    )?;
                    Ok(predict(&model, features)?.accuracy(&split.test))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    Ok(shots
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let accuracies: Vec<f64> = per_trial.iter().map(|row| row[j]).collect();
            let m = accuracies.len() as f64;
            let mean = accuracies.iter().sum::<f64>() / m;
            let std = if accuracies.len() > 1 {
                (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            FewShotRow {
                shots: s,
                mean_accuracy: mean,
                std_accuracy: std,
                accuracies,
            }
        })
        .collect())
}
