use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::state::{StateDir, CLEANED, MANUAL, PROPAGATED};
use super::{PipelineError, Stage};
use crate::store::{read_jsonl, LabelRecord, LabelValue};
use crate::vectorize::ModelKind;

/// One model/k pair in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub round: u32,
    pub model: ModelKind,
    pub k: usize,
    pub primary: bool,
    /// Mean CV accuracy over folds that applied a label; `None` = not applicable.
    pub cv_accuracy: Option<f64>,
    pub pooled_accuracy: Option<f64>,
    pub coverage: Option<f64>,
    pub manual_labels: usize,
    pub newly_labeled: usize,
    pub decided_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub rows: Vec<ReportRow>,
    pub latest_round: u32,
    pub stage: Stage,
    pub corpus_size: usize,
    /// Posts with an effective manual label as of the latest round.
    pub manual_labeled: usize,
    /// Posts labeled by the latest round's primary pair.
    pub propagated_labeled: usize,
    pub labeled_fraction: f64,
    pub residual_unlabeled: usize,
    pub queued: usize,
}

/// Reads every committed round. Each value comes from the round's own
/// artifacts, so the report can be rebuilt at any time.
pub fn build_report(dir: &StateDir) -> Result<CycleReport, PipelineError> {
    let rounds = dir.rounds()?;
    let Some(&latest) = rounds.last() else {
        return Err(PipelineError::NoRounds(dir.root().display().to_string()));
    };
    let mut rows = Vec::new();
    for &round in &rounds {
        let state = dir.load_state(round)?;
        let manual: Vec<LabelRecord> = dir.load_round_labels(round, MANUAL)?;
        for &pair in &state.pairs {
            let prop = dir.load_propagation(round, pair)?;
            let cv = dir.load_cv(round, pair)?;
            let assignment = dir.load_assignment(round, pair)?;
            rows.push(ReportRow {
                round,
                model: pair.model,
                k: pair.k,
                primary: pair == state.primary,
                cv_accuracy: cv.as_ref().and_then(|c| c.mean_accuracy),
                pooled_accuracy: cv.as_ref().and_then(|c| c.pooled_accuracy),
                coverage: cv.as_ref().map(|c| c.coverage),
                manual_labels: manual.iter().filter(|r| r.value != LabelValue::Removed && assignment.cluster_of(&r.post_id).is_some()).count(),
                newly_labeled: prop.newly_labeled,
                decided_clusters: prop.decided_clusters,
            });
        }
    }
    let state = dir.load_state(latest)?;
    let manual = dir.load_round_labels(latest, MANUAL)?;
    let propagated = dir.load_round_labels(latest, PROPAGATED)?;
    let corpus_size = read_jsonl::<serde_json::Value>(&dir.round_dir(latest).join(CLEANED))?.len();
    let manual_labeled = manual.iter().filter(|r| r.value != LabelValue::Removed).count();
    let labeled = manual_labeled + propagated.len();
    Ok(CycleReport {
        rows,
        latest_round: latest,
        stage: state.stage,
        corpus_size,
        manual_labeled,
        propagated_labeled: propagated.len(),
        labeled_fraction: if corpus_size == 0 { 0.0 } else { labeled as f64 / corpus_size as f64 },
        residual_unlabeled: corpus_size - labeled,
        queued: state.queue.len(),
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{:.1}%", x * 100.0))
}

/// Plain-text rendering; `N/A` marks pairs whose policy never fired in CV.
pub fn render_report(r: &CycleReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:<9} {:>4} {:>12} {:>8} {:>9} {:>7} {:>14} {:>8}",
        "round", "model", "k", "cv_accuracy", "pooled", "coverage", "manual", "newly_labeled", "decided"
    );
    for row in &r.rows {
        let model = if row.primary { format!("{}*", row.model) } else { row.model.to_string() };
        let _ = writeln!(
            out,
            "{:<6} {:<9} {:>4} {:>12} {:>8} {:>9} {:>7} {:>14} {:>8}",
            row.round,
            model,
            row.k,
            pct(row.cv_accuracy),
            pct(row.pooled_accuracy),
            pct(row.coverage),
            row.manual_labels,
            row.newly_labeled,
            row.decided_clusters
        );
    }
    let _ = writeln!(out, "\nlatest round {} ({}), * = primary pair", r.latest_round, r.stage);
    let _ = writeln!(out, "corpus {} posts: {} manual, {} propagated", r.corpus_size, r.manual_labeled, r.propagated_labeled);
    let _ = writeln!(out, "labeled fraction {:.1}%, {} unlabeled, {} queued", r.labeled_fraction * 100.0, r.residual_unlabeled, r.queued);
    out
}
