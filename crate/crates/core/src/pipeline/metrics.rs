//! Utterance-level classification metrics and per-level cluster indices.

use serde::Serialize;

use super::data::Dataset;
use super::model::predict;
use super::{PipelineError, Result};
use crate::neural::predict_head;
use crate::partition::{davies_bouldin, silhouette, PartitionError, Sentiment, Split};
use crate::tree::AdaptiveTree;

/// Confusion counts with positive sentiment as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn add(&mut self, predicted: Sentiment, truth: Sentiment) {
        match (predicted, truth) {
            (Sentiment::Positive, Sentiment::Positive) => self.tp += 1,
            (Sentiment::Positive, Sentiment::Negative) => self.fp += 1,
            (Sentiment::Negative, Sentiment::Negative) => self.tn += 1,
            (Sentiment::Negative, Sentiment::Positive) => self.fn_ += 1,
        }
    }

    /// Counts every position where both a prediction and a label exist.
    pub fn add_all(&mut self, predicted: &[Option<Sentiment>], truth: &[Option<Sentiment>]) {
        for (p, t) in predicted.iter().zip(truth) {
            if let (Some(p), Some(t)) = (p, t) {
                self.add(*p, *t);
            }
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Precision; 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall_positive(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn recall_negative(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    /// Harmonic mean of precision and positive recall; 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall_positive());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub pc: f64,
    pub rc_plus: f64,
    pub rc_minus: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Share of videos whose majority vote matches the majority label.
    pub video_accuracy: f64,
    pub partition: Vec<LevelQuality>,
}

impl MetricsReport {
    pub fn from_counts(confusion: Confusion, video_accuracy: f64) -> Self {
        Self {
            confusion,
            pc: confusion.precision(),
            rc_plus: confusion.recall_positive(),
            rc_minus: confusion.recall_negative(),
            f1: confusion.f1(),
            accuracy: confusion.accuracy(),
            video_accuracy,
            partition: Vec::new(),
        }
    }
}

/// Scores of the nodes at one depth, each node using its own head on the
/// test utterances routed through it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelScore {
    pub depth: usize,
    /// Nodes that saw at least one labelled test utterance.
    pub nodes: usize,
    /// Counts pooled over the level's nodes.
    pub confusion: Confusion,
    /// F1 of the pooled counts.
    pub f1: f64,
    /// Unweighted mean of the per-node F1 values.
    pub mean_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    /// Root first.
    pub levels: Vec<LevelScore>,
}

/// Majority label of a video; ties count as positive.
fn video_truth(labels: &[Option<Sentiment>]) -> Option<Sentiment> {
    crate::neural::majority_vote(labels).ok()
}

/// Scores the trained tree on held-out videos.
pub fn evaluate(tree: &AdaptiveTree, test: &Dataset) -> Result<Evaluation> {
    if test.videos.is_empty() {
        return Err(PipelineError::EmptyTestSet);
    }
    let mut overall = Confusion::default();
    let mut videos_right = 0;
    let mut node_counts = vec![Confusion::default(); tree.len()];
    for v in &test.videos {
        let point = test.user(&v.user_id).ok_or_else(|| PipelineError::UnknownUser(v.user_id.clone()))?;
        let p = predict(tree, &v.sequence, point)?;
        overall.add_all(&p.utterances.labels, &v.sequence.labels);
        if video_truth(&v.sequence.labels) == Some(p.sentiment) {
            videos_right += 1;
        }
        for (&id, out) in p.trace.executed.iter().zip(&p.trace.outputs) {
            let node = &tree.nodes[id];
            let head = &node.submodel.as_ref().expect("executed nodes are trained").head;
            let own = predict_head(out, head, &v.sequence.mask)?;
            node_counts[id].add_all(&own.labels, &v.sequence.labels);
        }
    }
    let mut levels = Vec::new();
    for (depth, ids) in tree.levels().into_iter().enumerate() {
        let seen: Vec<&Confusion> = ids.iter().map(|&id| &node_counts[id]).filter(|c| c.total() > 0).collect();
        if seen.is_empty() {
            continue;
        }
        let mut confusion = Confusion::default();
        seen.iter().for_each(|c| confusion.merge(c));
        levels.push(LevelScore {
            depth,
            nodes: seen.len(),
            confusion,
            f1: confusion.f1(),
            mean_f1: seen.iter().map(|c| c.f1()).sum::<f64>() / seen.len() as f64,
            accuracy: confusion.accuracy(),
        });
    }
    let mut metrics = MetricsReport::from_counts(overall, videos_right as f64 / test.videos.len() as f64);
    metrics.partition = partition_quality(tree)?;
    Ok(Evaluation { metrics, levels })
}

/// Cluster indices of one depth of the tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelQuality {
    pub depth: usize,
    pub clusters: usize,
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
    /// Why an index is missing.
    pub note: String,
}

/// Silhouette and Davies-Bouldin of every depth, treating the subspaces at
/// that depth as a clustering of all users. Leaves that end above a depth
/// are carried down unchanged so every level covers the same users.
pub fn partition_quality(tree: &AdaptiveTree) -> Result<Vec<LevelQuality>> {
    let space = &tree.config.space;
    let mut out = Vec::new();
    for depth in 0..tree.depth() {
        let splits: Vec<Split> = tree
            .nodes
            .iter()
            .filter(|n| n.depth == depth || (n.depth < depth && n.is_leaf()))
            .map(|n| Split::from_members(&n.members))
            .collect();
        if splits.len() < 2 {
            out.push(LevelQuality {
                depth,
                clusters: splits.len(),
                silhouette: None,
                davies_bouldin: None,
                note: "single cluster; skipped".into(),
            });
            continue;
        }
        let slh = silhouette(&splits, space)?;
        let (db, note) = match davies_bouldin(&splits, space) {
            Ok(v) => (Some(v), String::new()),
            Err(PartitionError::DegenerateGeometry) => (None, "coincident medoids; Davies-Bouldin undefined".into()),
            Err(e) => return Err(e.into()),
        };
        out.push(LevelQuality {
            depth,
            clusters: splits.len(),
            silhouette: Some(slh),
            davies_bouldin: db,
            note,
        });
    }
    Ok(out)
}
