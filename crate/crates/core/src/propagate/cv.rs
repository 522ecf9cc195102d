use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{histograms, PropagateError, PropagationPolicy};
use crate::cluster::Assignment;
use crate::rng;
use crate::store::LabelValue;

const CV_STREAM: u64 = 0xC5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub held_out: usize,
    /// Held-out posts whose cluster was decided without them.
    pub applied: usize,
    pub correct: usize,
    /// `correct / applied`; `None` when nothing was applied.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub seed: u64,
    pub per_fold: Vec<FoldResult>,
    /// Mean of fold accuracies over folds that applied at least one label.
    /// `None` means the policy never fired: not applicable.
    pub mean_accuracy: Option<f64>,
    /// Total correct over total applied.
    pub pooled_accuracy: Option<f64>,
    /// Share of held-out labels that received a propagated value.
    pub coverage: f64,
}

impl CvReport {
    pub fn applicable(&self) -> bool {
        self.mean_accuracy.is_some()
    }
}

/// Fold index per labeled post id: a seeded shuffle dealt round-robin, so
/// fold sizes differ by at most one.
pub(crate) fn fold_of(ids: &[&String], folds: usize, seed: u64) -> BTreeMap<String, usize> {
    let mut order: Vec<&String> = ids.to_vec();
    order.shuffle(&mut rng::stream(seed, CV_STREAM));
    order.into_iter().enumerate().map(|(i, id)| (id.clone(), i % folds)).collect()
}

/// k-fold cross-validation of the propagation rule.
///
/// The clustering is fixed. In fold `j` the labels of `D_j` are hidden, the
/// policy is applied to the remaining labels, and each held-out post whose
/// cluster gets decided is scored against its hidden label.
pub fn cross_validate(
    assignment: &Assignment,
    manual: &BTreeMap<String, LabelValue>,
    policy: &PropagationPolicy,
    folds: usize,
    seed: u64,
) -> Result<CvReport, PropagateError> {
    policy.validate()?;
    if folds < 2 {
        return Err(PropagateError::Folds(folds));
    }
    let labeled: Vec<&String> = manual.iter().filter(|(_, v)| **v != LabelValue::Removed).map(|(id, _)| id).collect();
    if labeled.len() < folds {
        return Err(PropagateError::TooFewLabels {
            labels: labeled.len(),
            folds,
        });
    }
    // Surface labels outside the assignment before splitting.
    histograms(assignment, manual)?;
    let fold_ids = fold_of(&labeled, folds, seed);

    let mut per_fold = Vec::with_capacity(folds);
    for j in 0..folds {
        let train: BTreeMap<String, LabelValue> = fold_ids
            .iter()
            .filter(|(_, &f)| f != j)
            .map(|(id, _)| (id.clone(), manual[id]))
            .collect();
        let decisions: Vec<Option<LabelValue>> = histograms(assignment, &train)?.iter().map(|h| policy.decide(h).value()).collect();
        let mut held_out = 0;
        let mut applied = 0;
        let mut correct = 0;
        for (id, _) in fold_ids.iter().filter(|(_, &f)| f == j) {
            held_out += 1;
            let c = assignment.cluster_of(id).expect("checked above");
            if let Some(v) = decisions[c] {
                applied += 1;
                if v == manual[id] {
                    correct += 1;
                }
            }
        }
        per_fold.push(FoldResult {
            fold: j,
            held_out,
            applied,
            correct,
            accuracy: (applied > 0).then(|| correct as f64 / applied as f64),
        });
    }
    let accs: Vec<f64> = per_fold.iter().filter_map(|f| f.accuracy).collect();
    let applied: usize = per_fold.iter().map(|f| f.applied).sum();
    let correct: usize = per_fold.iter().map(|f| f.correct).sum();
    Ok(CvReport {
        folds,
        seed,
        mean_accuracy: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
        pooled_accuracy: (applied > 0).then(|| correct as f64 / applied as f64),
        coverage: applied as f64 / labeled.len() as f64,
        per_fold,
    })
}
