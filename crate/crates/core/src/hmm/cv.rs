//! Subject-level k-fold cross-validation for choosing the number of states.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::inference::loglikelihood;
use super::train::train;
use super::{HmmConfig, HmmError};
use crate::data::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub n_states: usize,
    /// Held-out log-likelihood pooled over all folds, divided by held-out visits.
    pub heldout_loglik_per_visit: f64,
    pub fold_loglik_per_visit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub folds: usize,
    pub seed: u64,
    pub rows: Vec<CvRow>,
}

impl CvTable {
    /// Rows ordered best first; ties keep the smaller model first.
    pub fn ranked(&self) -> Vec<&CvRow> {
        let mut rows: Vec<&CvRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            b.heldout_loglik_per_visit
                .total_cmp(&a.heldout_loglik_per_visit)
                .then(a.n_states.cmp(&b.n_states))
        });
        rows
    }
}

/// Fold index for each of `n` subjects: a seeded shuffle dealt round-robin.
pub fn assign_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>, HmmError> {
    if folds < 2 {
        return Err(HmmError::InvalidConfig("at least 2 folds are required".into()));
    }
    if n < folds {
        return Err(HmmError::FoldTooSmall { fold: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &subject) in order.iter().enumerate() {
        assignment[subject] = pos % folds;
    }
    Ok(assignment)
}

pub fn cross_validate(
    ds: &Dataset,
    cfgs: &[HmmConfig],
    folds: usize,
    seed: u64,
) -> Result<CvTable, HmmError> {
    let assignment = assign_folds(ds.subjects.len(), folds, seed)?;
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|f| {
            let (test, train): (Vec<_>, Vec<_>) = ds
                .subjects
                .iter()
                .zip(&assignment)
                .partition(|(_, &a)| a == f);
            let pick = |v: Vec<(&crate::data::Subject, &usize)>| Dataset {
                schema: ds.schema.clone(),
                subjects: v.into_iter().map(|(s, _)| s.clone()).collect(),
            };
            (pick(train), pick(test))
        })
        .collect();
    for (f, (_, test)) in splits.iter().enumerate() {
        if test.subjects.is_empty() {
            return Err(HmmError::FoldTooSmall { fold: f });
        }
    }

    let mut rows = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        let mut total_ll = 0.0;
        let mut total_visits = 0usize;
        let mut per_fold = Vec::with_capacity(folds);
        for (train_ds, test_ds) in &splits {
            let model = train(train_ds, cfg)?;
            let ll: f64 = test_ds.subjects.iter().map(|s| loglikelihood(&model, s)).sum();
            let visits = test_ds.visit_count();
            per_fold.push(ll / visits as f64);
            total_ll += ll;
            total_visits += visits;
        }
        log::info!(
            "cv K={}: {:.6} per visit",
            cfg.n_states,
            total_ll / total_visits as f64
        );
        rows.push(CvRow {
            n_states: cfg.n_states,
            heldout_loglik_per_visit: total_ll / total_visits as f64,
            fold_loglik_per_visit: per_fold,
        });
    }
    Ok(CvTable { folds, seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_subject_is_held_out_once() {
        let a = assign_folds(10, 2, 3).unwrap();
        assert_eq!(a.iter().filter(|&&f| f == 0).count(), 5);
        assert_eq!(a.iter().filter(|&&f| f == 1).count(), 5);
        assert_eq!(a, assign_folds(10, 2, 3).unwrap());
        assert_ne!(a, assign_folds(10, 2, 4).unwrap());
    }

    #[test]
    fn too_many_folds() {
        assert!(matches!(assign_folds(3, 4, 0), Err(HmmError::FoldTooSmall { .. })));
        assert!(matches!(assign_folds(3, 1, 0), Err(HmmError::InvalidConfig(_))));
    }
}
