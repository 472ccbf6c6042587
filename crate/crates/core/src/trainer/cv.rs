use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::classify_batch;
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ResidualMode, TrainingSet};
use crate::numerics::Matrix;
use crate::par::{map_indices, ExecPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_index: usize,
    pub best: Hyperparams,
    /// `scores[g][f]`: held-out patch accuracy of grid point `g` on fold `f`.
    pub scores: Vec<Vec<f64>>,
    pub mean_scores: Vec<f64>,
}

/// Fold index of every column of every class, stratified per class.
fn assign_folds(data: &TrainingSet, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    data.per_class
        .iter()
        .map(|y| {
            let mut order: Vec<usize> = (0..y.ncols()).collect();
            order.shuffle(&mut rng);
            let mut fold_of = vec![0; y.ncols()];
            for (pos, &col) in order.iter().enumerate() {
                fold_of[col] = pos % folds;
            }
            fold_of
        })
        .collect()
}

fn select_columns(y: &Matrix, keep: impl Fn(usize) -> bool) -> Matrix {
    let cols: Vec<usize> = (0..y.ncols()).filter(|&j| keep(j)).collect();
    y.select_columns(&cols)
}

fn fold_accuracy(
    data: &TrainingSet,
    fold_of: &[Vec<usize>],
    fold: usize,
    hp: &Hyperparams,
) -> Result<f64> {
    let train: Vec<Matrix> = data
        .per_class
        .iter()
        .zip(fold_of)
        .map(|(y, f)| select_columns(y, |j| f[j] != fold))
        .collect();
    let train = TrainingSet::new(train, data.labels.clone())?;
    let (model, _) = super::train_with(&train, hp, ExecPolicy::Sequential)?;
    let (mut correct, mut total) = (0usize, 0usize);
    for (c, (y, f)) in data.per_class.iter().zip(fold_of).enumerate() {
        let held = select_columns(y, |j| f[j] == fold);
        let (labels, _) =
            classify_batch(&held, &model, ResidualMode::default(), ExecPolicy::Sequential)?;
        correct += labels.iter().filter(|&&l| l == c).count();
        total += labels.len();
    }
    Ok(correct as f64 / total as f64)
}

/// Stratified k-fold selection over `grid` by mean held-out patch accuracy.
/// Ties go to the earliest grid point.
pub fn cross_validate(
    data: &TrainingSet,
    grid: &[Hyperparams],
    folds: usize,
    seed: u64,
    policy: ExecPolicy,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidHyperparams("empty hyperparameter grid".into()));
    }
    if folds < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 folds, got {folds}")));
    }
    for (c, n) in data.class_counts().into_iter().enumerate() {
        if n < folds {
            return Err(Error::InsufficientData(format!(
                "class {c} has {n} samples for {folds} folds"
            )));
        }
    }
    let fold_of = assign_folds(data, folds, seed);
    let runs = map_indices(policy, grid.len() * folds, |i| {
        fold_accuracy(data, &fold_of, i % folds, &grid[i / folds])
    });
    let mut scores = vec![Vec::with_capacity(folds); grid.len()];
    for (i, r) in runs.into_iter().enumerate() {
        scores[i / folds].push(r?);
    }
    let mean_scores: Vec<f64> = scores
        .iter()
        .map(|s| s.iter().sum::<f64>() / folds as f64)
        .collect();
    let mut best_index = 0;
    for (i, &m) in mean_scores.iter().enumerate() {
        if m > mean_scores[best_index] {
            best_index = i;
        }
    }
    Ok(CvResult {
        best_index,
        best: grid[best_index].clone(),
        scores,
        mean_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::random_instance;

    #[test]
    fn folds_are_stratified_and_balanced() {
        let data = random_instance(4, 1, 0, 10, 2, 1).2;
        let folds = assign_folds(&data, 3, 7);
        for f in &folds {
            let mut counts = [0; 3];
            for &k in f {
                counts[k] += 1;
            }
            assert_eq!(counts, [4, 3, 3]);
        }
    }

    #[test]
    fn rejects_bad_fold_counts() {
        let data = random_instance(4, 1, 0, 3, 2, 2).2;
        let hp = Hyperparams::default();
        assert!(matches!(
            cross_validate(&data, std::slice::from_ref(&hp), 1, 0, ExecPolicy::Sequential),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            cross_validate(&data, &[hp], 4, 0, ExecPolicy::Sequential),
            Err(Error::InsufficientData(_))
        ));
    }
}
