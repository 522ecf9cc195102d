//! Cluster-level label propagation and its cross-validated evaluation.
//!
//! A cluster is *decided* when it holds at least `min_labeled` manual labels
//! and the most common value reaches `unanimity` of them. Every unlabeled
//! member of a decided cluster receives that value; manual labels are never
//! touched.

mod cv;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::Assignment;
use crate::store::{Basis, LabelRecord, LabelValue, Source};

pub use cv::{cross_validate, CvReport, FoldResult};

#[derive(Debug, Error)]
pub enum PropagateError {
    #[error("labeled post `{0}` is not in the cluster assignment")]
    NotInAssignment(String),
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("{labels} manual labels cannot fill {folds} folds")]
    TooFewLabels { labels: usize, folds: usize },
    #[error("cross-validation needs at least 2 folds, got {0}")]
    Folds(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationPolicy {
    pub min_labeled: usize,
    /// Required share of the most common value among a cluster's manual labels.
    pub unanimity: f64,
    /// Values a cluster may propagate.
    pub eligible: BTreeSet<LabelValue>,
}

impl Default for PropagationPolicy {
    fn default() -> Self {
        Self {
            min_labeled: 5,
            unanimity: 1.0,
            eligible: [LabelValue::Yes, LabelValue::No, LabelValue::Unclear].into_iter().collect(),
        }
    }
}

impl PropagationPolicy {
    pub fn validate(&self) -> Result<(), PropagateError> {
        if self.min_labeled == 0 {
            return Err(PropagateError::Policy("min_labeled must be at least 1".into()));
        }
        if !(self.unanimity > 0.0 && self.unanimity <= 1.0) {
            return Err(PropagateError::Policy(format!("unanimity must be in (0, 1], got {}", self.unanimity)));
        }
        if self.eligible.contains(&LabelValue::Removed) {
            return Err(PropagateError::Policy("`removed` cannot be propagated".into()));
        }
        Ok(())
    }

    /// Decision for one cluster's histogram of manual labels.
    pub fn decide(&self, histogram: &BTreeMap<LabelValue, usize>) -> Decision {
        let labeled: usize = histogram.values().sum();
        if labeled < self.min_labeled {
            return Decision::BelowMinimum;
        }
        let top = histogram.values().copied().max().unwrap_or(0);
        let leaders: Vec<LabelValue> = histogram.iter().filter(|(_, &c)| c == top).map(|(v, _)| *v).collect();
        if (top as f64) < self.unanimity * labeled as f64 - 1e-9 {
            return Decision::NotUnanimous;
        }
        if leaders.len() > 1 {
            return Decision::Tie;
        }
        if !self.eligible.contains(&leaders[0]) {
            return Decision::Ineligible(leaders[0]);
        }
        Decision::Propagate(leaders[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Decision {
    Propagate(LabelValue),
    BelowMinimum,
    NotUnanimous,
    Tie,
    Ineligible(LabelValue),
}

impl Decision {
    pub fn value(self) -> Option<LabelValue> {
        match self {
            Decision::Propagate(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutcome {
    pub cluster: usize,
    pub size: usize,
    pub labeled: usize,
    pub histogram: BTreeMap<LabelValue, usize>,
    pub decision: Decision,
    pub newly_labeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub clusters: Vec<ClusterOutcome>,
    pub decided_clusters: usize,
    pub newly_labeled: usize,
    pub per_value: BTreeMap<LabelValue, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub report: PropagationReport,
    /// `(post_id, value)` for every newly labeled post, sorted by post id.
    pub labels: Vec<(String, LabelValue)>,
}

impl Propagation {
    pub fn to_records(&self, rater_id: &str, basis: Basis, round: u32, created_at: &str) -> Vec<LabelRecord> {
        self.labels
            .iter()
            .map(|(id, v)| LabelRecord::new(id.clone(), rater_id, *v, basis, Source::Propagated, round, created_at))
            .collect()
    }
}

/// Per-cluster manual-label histograms. `removed` labels are ignored.
pub(crate) fn histograms(assignment: &Assignment, manual: &BTreeMap<String, LabelValue>) -> Result<Vec<BTreeMap<LabelValue, usize>>, PropagateError> {
    let mut h = vec![BTreeMap::new(); assignment.k];
    for (id, &v) in manual {
        if v == LabelValue::Removed {
            continue;
        }
        let c = assignment.cluster_of(id).ok_or_else(|| PropagateError::NotInAssignment(id.clone()))?;
        *h[c].entry(v).or_insert(0) += 1;
    }
    Ok(h)
}

fn is_labeled(manual: &BTreeMap<String, LabelValue>, id: &str) -> bool {
    manual.get(id).is_some_and(|v| *v != LabelValue::Removed)
}

pub fn propagate(assignment: &Assignment, manual: &BTreeMap<String, LabelValue>, policy: &PropagationPolicy) -> Result<Propagation, PropagateError> {
    policy.validate()?;
    let hist = histograms(assignment, manual)?;
    let members = assignment.members();
    let mut clusters = Vec::with_capacity(assignment.k);
    let mut labels = Vec::new();
    let mut per_value = BTreeMap::new();
    for (c, histogram) in hist.into_iter().enumerate() {
        let decision = policy.decide(&histogram);
        let mut newly = 0;
        if let Some(v) = decision.value() {
            for id in &members[c] {
                if !is_labeled(manual, id) {
                    labels.push((id.to_string(), v));
                    newly += 1;
                }
            }
            *per_value.entry(v).or_insert(0) += newly;
        }
        clusters.push(ClusterOutcome {
            cluster: c,
            size: members[c].len(),
            labeled: histogram.values().sum(),
            histogram,
            decision,
            newly_labeled: newly,
        });
    }
    labels.sort();
    let report = PropagationReport {
        decided_clusters: clusters.iter().filter(|c| c.decision.value().is_some()).count(),
        newly_labeled: labels.len(),
        per_value,
        clusters,
    };
    Ok(Propagation { report, labels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguousCluster {
    pub cluster: usize,
    pub size: usize,
    pub labeled: usize,
    pub histogram: BTreeMap<LabelValue, usize>,
    pub decision: Decision,
    /// Unlabeled members, in a fixed pseudo-random order, at most `sample` of them.
    pub sample: Vec<String>,
    pub unlabeled: usize,
}

/// Clusters the policy leaves undecided, largest first (ties: fewer labels first, then id).
pub fn ambiguous_clusters(assignment: &Assignment, manual: &BTreeMap<String, LabelValue>, policy: &PropagationPolicy, sample: usize) -> Result<Vec<AmbiguousCluster>, PropagateError> {
    policy.validate()?;
    let hist = histograms(assignment, manual)?;
    let members = assignment.members();
    let mut out: Vec<AmbiguousCluster> = hist
        .into_iter()
        .enumerate()
        .filter_map(|(c, histogram)| {
            let decision = policy.decide(&histogram);
            if decision.value().is_some() {
                return None;
            }
            let mut unlabeled: Vec<&str> = members[c].iter().copied().filter(|id| !is_labeled(manual, id)).collect();
            unlabeled.sort_by_key(|id| (crate::vectorize::fnv1a(id.as_bytes()), *id));
            Some(AmbiguousCluster {
                cluster: c,
                size: members[c].len(),
                labeled: histogram.values().sum(),
                histogram,
                decision,
                unlabeled: unlabeled.len(),
                sample: unlabeled.into_iter().take(sample).map(str::to_string).collect(),
            })
        })
        .collect();
    out.sort_by(|a, b| b.size.cmp(&a.size).then(a.labeled.cmp(&b.labeled)).then(a.cluster.cmp(&b.cluster)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assignment(sizes: &[usize]) -> Assignment {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                ids.push(format!("c{c}-{i:03}"));
                labels.push(c);
            }
        }
        Assignment::new(&ids, &labels, sizes.len()).unwrap()
    }

    fn label(manual: &mut BTreeMap<String, LabelValue>, c: usize, range: std::ops::Range<usize>, v: LabelValue) {
        for i in range {
            manual.insert(format!("c{c}-{i:03}"), v);
        }
    }

    #[test]
    fn five_unanimous_labels_fill_the_cluster() {
        let a = assignment(&[100]);
        let mut m = BTreeMap::new();
        label(&mut m, 0, 0..5, LabelValue::No);
        let p = propagate(&a, &m, &PropagationPolicy::default()).unwrap();
        assert_eq!(p.report.newly_labeled, 95);
        assert_eq!(p.report.per_value[&LabelValue::No], 95);
        assert!(p.labels.iter().all(|(id, v)| *v == LabelValue::No && !m.contains_key(id)));
    }

    #[test]
    fn four_labels_are_not_enough() {
        let a = assignment(&[100]);
        let mut m = BTreeMap::new();
        label(&mut m, 0, 0..4, LabelValue::Yes);
        let p = propagate(&a, &m, &PropagationPolicy::default()).unwrap();
        assert_eq!(p.report.newly_labeled, 0);
        assert_eq!(p.report.clusters[0].decision, Decision::BelowMinimum);
    }

    #[test]
    fn dissent_blocks_unanimity() {
        let a = assignment(&[100]);
        let mut m = BTreeMap::new();
        label(&mut m, 0, 0..4, LabelValue::Yes);
        label(&mut m, 0, 4..5, LabelValue::No);
        let p = propagate(&a, &m, &PropagationPolicy::default()).unwrap();
        assert_eq!(p.report.clusters[0].decision, Decision::NotUnanimous);
        let relaxed = PropagationPolicy { unanimity: 0.8, ..Default::default() };
        assert_eq!(propagate(&a, &m, &relaxed).unwrap().report.newly_labeled, 95);
    }

    #[test]
    fn tie_at_threshold_does_not_propagate() {
        let mut h = BTreeMap::new();
        h.insert(LabelValue::Yes, 3);
        h.insert(LabelValue::No, 3);
        let p = PropagationPolicy { unanimity: 0.5, ..Default::default() };
        assert_eq!(p.decide(&h), Decision::Tie);
    }

    #[test]
    fn removed_labels_do_not_count() {
        let a = assignment(&[10]);
        let mut m = BTreeMap::new();
        label(&mut m, 0, 0..5, LabelValue::Yes);
        m.insert("c0-004".into(), LabelValue::Removed);
        let p = propagate(&a, &m, &PropagationPolicy::default()).unwrap();
        assert_eq!(p.report.clusters[0].labeled, 4);
        assert_eq!(p.report.newly_labeled, 0);
    }

    #[test]
    fn label_outside_assignment_is_an_error() {
        let a = assignment(&[3]);
        let mut m = BTreeMap::new();
        m.insert("elsewhere".to_string(), LabelValue::Yes);
        assert!(matches!(propagate(&a, &m, &PropagationPolicy::default()), Err(PropagateError::NotInAssignment(_))));
    }

    #[test]
    fn ineligible_majority_is_held_back() {
        let a = assignment(&[20]);
        let mut m = BTreeMap::new();
        label(&mut m, 0, 0..6, LabelValue::Unclear);
        let p = PropagationPolicy {
            eligible: [LabelValue::Yes, LabelValue::No].into_iter().collect(),
            ..Default::default()
        };
        assert_eq!(p.decide(&histograms(&a, &m).unwrap()[0]), Decision::Ineligible(LabelValue::Unclear));
        assert_eq!(propagate(&a, &m, &PropagationPolicy::default()).unwrap().report.newly_labeled, 14);
    }

    #[test]
    fn policy_validation() {
        assert!(PropagationPolicy { min_labeled: 0, ..Default::default() }.validate().is_err());
        assert!(PropagationPolicy { unanimity: 0.0, ..Default::default() }.validate().is_err());
        assert!(PropagationPolicy { unanimity: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn ambiguous_ranking_and_sampling() {
        let a = assignment(&[50, 500, 30]);
        let mut m = BTreeMap::new();
        label(&mut m, 2, 0..5, LabelValue::Yes);
        label(&mut m, 0, 0..2, LabelValue::Yes);
        let amb = ambiguous_clusters(&a, &m, &PropagationPolicy::default(), 10).unwrap();
        assert_eq!(amb.iter().map(|c| c.cluster).collect::<Vec<_>>(), vec![1, 0]);
        assert_eq!(amb[1].sample.len(), 10);
        assert!(amb[1].sample.iter().all(|id| !m.contains_key(id)));
        assert_eq!(amb[1].unlabeled, 48);

        let mut all = BTreeMap::new();
        for c in 0..3 {
            label(&mut all, c, 0..5, LabelValue::No);
        }
        assert!(ambiguous_clusters(&a, &all, &PropagationPolicy::default(), 10).unwrap().is_empty());
    }
}
