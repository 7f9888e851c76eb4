//! Bottom-up training of the tree's submodels and stack-based prediction.

use std::collections::HashMap;

use ndarray::Array2;

use super::data::{Dataset, Video};
use super::{PipelineError, Result};
use crate::cogspace::SurrogatePoint;
use crate::neural::{
    majority_vote, predict_head, submodel_forward, train_submodel, zero_knowledge, FeatureSequence, HeadPrediction, NeuralConfig,
    SubmodelParams, TrainingSample,
};
use crate::partition::Sentiment;
use crate::tree::AdaptiveTree;

/// Seed for the weights of one node.
pub fn node_seed(seed: u64, node: usize) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(node as u64 + 1)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Per trained node: mean loss at every epoch.
    pub losses: Vec<(usize, Vec<f64>)>,
    /// Nodes whose training failed; they behave as if absent.
    pub failures: Vec<(usize, String)>,
    /// Per trained node: training samples that received a non-zero knowledge core.
    pub fed_by_children: Vec<(usize, usize)>,
}

/// Chain of nodes holding each user as an original member, root first.
fn membership(tree: &AdaptiveTree) -> HashMap<&str, Vec<usize>> {
    let mut chains: HashMap<&str, Vec<usize>> = HashMap::new();
    for n in &tree.nodes {
        for m in &n.members {
            chains.entry(m.point.user_id.as_str()).or_default().push(n.id);
        }
    }
    chains
}

struct Outputs<'a> {
    tree: &'a AdaptiveTree,
    hidden: usize,
    chains: HashMap<&'a str, Vec<usize>>,
    cache: HashMap<(usize, usize), Array2<f64>>,
}

impl<'a> Outputs<'a> {
    /// Knowledge core `node` receives for a training video: the output of
    /// the child holding the video's user, or zeros.
    fn knowledge(&mut self, node: usize, index: usize, video: &Video) -> Result<Array2<f64>> {
        let child = self.chains.get(video.user_id.as_str()).and_then(|chain| {
            let at = chain.iter().position(|&n| n == node)?;
            chain.get(at + 1).copied()
        });
        match child {
            Some(c) if self.tree.nodes[c].submodel.is_some() => self.output(c, index, video),
            _ => Ok(zero_knowledge(self.hidden, video.sequence.len())),
        }
    }

    fn output(&mut self, node: usize, index: usize, video: &Video) -> Result<Array2<f64>> {
        if let Some(out) = self.cache.get(&(node, index)) {
            return Ok(out.clone());
        }
        let k = self.knowledge(node, index, video)?;
        let params = self.tree.nodes[node].submodel.as_ref().expect("caller checked");
        let out = submodel_forward(params, &video.sequence, k.view())?;
        self.cache.insert((node, index), out.clone());
        Ok(out)
    }
}

/// Trains every node's submodel, children strictly before parents. A
/// node's own users feed it with the output of the child they belong to;
/// borrowed users get a zero knowledge core and their dropout rate.
pub fn train_tree(tree: &mut AdaptiveTree, data: &Dataset, cfg: &NeuralConfig, seed: u64) -> Result<TrainReport> {
    cfg.validate()?;
    let mut by_user: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, v) in data.videos.iter().enumerate() {
        by_user.entry(v.user_id.as_str()).or_default().push(i);
    }
    let mut report = TrainReport::default();
    for n in tree.nodes.iter_mut() {
        n.submodel = None;
    }

    // ids are breadth-first, so descending ids visit children first
    for id in (0..tree.nodes.len()).rev() {
        let snapshot = &*tree;
        let mut outputs = Outputs {
            tree: snapshot,
            hidden: cfg.hidden,
            chains: membership(snapshot),
            cache: HashMap::new(),
        };
        let node = &snapshot.nodes[id];
        let mut samples = Vec::new();
        let mut fed = 0;
        for m in &node.members {
            for &vi in by_user.get(m.point.user_id.as_str()).into_iter().flatten() {
                let video = &data.videos[vi];
                let knowledge = outputs.knowledge(id, vi, video)?;
                if knowledge.iter().any(|&x| x != 0.0) {
                    fed += 1;
                }
                samples.push(TrainingSample {
                    sequence: &video.sequence,
                    knowledge,
                    dropout: 0.0,
                });
            }
        }
        for a in &node.adopted {
            for &vi in by_user.get(a.user.point.user_id.as_str()).into_iter().flatten() {
                let video = &data.videos[vi];
                samples.push(TrainingSample {
                    sequence: &video.sequence,
                    knowledge: zero_knowledge(cfg.hidden, video.sequence.len()),
                    dropout: a.dropout,
                });
            }
        }
        let trained = train_submodel(&samples, cfg, node_seed(seed, id));
        drop(samples);
        match trained {
            Ok(out) => {
                report.losses.push((id, out.losses));
                report.fed_by_children.push((id, fed));
                tree.nodes[id].submodel = Some(out.params);
            }
            Err(e) => report.failures.push((id, e.to_string())),
        }
    }
    report.losses.reverse();
    report.fed_by_children.reverse();
    report.failures.reverse();
    if tree.root().submodel.is_none() {
        let why = report.failures.last().map_or_else(String::new, |(_, e)| e.clone());
        return Err(PipelineError::Untrained(format!("root training failed: {why}")));
    }
    Ok(report)
}

/// Everything one prediction pass produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Nodes from the root down to the selected leaf.
    pub route: Vec<usize>,
    /// Nodes whose submodel ran, in execution order.
    pub executed: Vec<usize>,
    /// Output of every executed node, parallel to `executed`.
    pub outputs: Vec<Array2<f64>>,
}

fn root_params(tree: &AdaptiveTree) -> Result<&SubmodelParams> {
    tree.root()
        .submodel
        .as_ref()
        .ok_or_else(|| PipelineError::Untrained("the root has no trained submodel".into()))
}

/// Routes the point down the tree pushing every node on a stack, then pops
/// the stack running each node's submodel on the video with the knowledge
/// core accumulated so far. Nodes without a trained submodel pass a zero
/// core upward.
pub fn trace(tree: &AdaptiveTree, seq: &FeatureSequence, point: &SurrogatePoint) -> Result<Trace> {
    let hidden = root_params(tree)?.hidden();
    let route = tree.route(point)?;
    let mut stack = Vec::with_capacity(route.len());
    for &id in &route {
        stack.push(id);
    }
    let mut knowledge = zero_knowledge(hidden, seq.len());
    let mut executed = Vec::with_capacity(route.len());
    let mut outputs = Vec::with_capacity(route.len());
    while let Some(id) = stack.pop() {
        match &tree.nodes[id].submodel {
            Some(params) => {
                knowledge = submodel_forward(params, seq, knowledge.view())?;
                executed.push(id);
                outputs.push(knowledge.clone());
            }
            None => knowledge = zero_knowledge(hidden, seq.len()),
        }
    }
    Ok(Trace { route, executed, outputs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sentiment: Sentiment,
    pub utterances: HeadPrediction,
    pub trace: Trace,
}

/// Online prediction for one video of a user at `point`.
pub fn predict(tree: &AdaptiveTree, seq: &FeatureSequence, point: &SurrogatePoint) -> Result<Prediction> {
    let params = root_params(tree)?;
    let trace = trace(tree, seq, point)?;
    let top = trace.outputs.last().expect("the root always runs");
    let utterances = predict_head(top, &params.head, &seq.mask)?;
    let sentiment = majority_vote(&utterances.labels)?;
    Ok(Prediction {
        sentiment,
        utterances,
        trace,
    })
}

/// A lone submodel trained on every video with a zero knowledge core.
pub fn train_flat(videos: &[&Video], cfg: &NeuralConfig, seed: u64) -> Result<SubmodelParams> {
    let samples: Vec<TrainingSample> = videos
        .iter()
        .map(|v| TrainingSample {
            sequence: &v.sequence,
            knowledge: zero_knowledge(cfg.hidden, v.sequence.len()),
            dropout: 0.0,
        })
        .collect();
    Ok(train_submodel(&samples, cfg, seed)?.params)
}

/// Utterance labels of a lone submodel.
pub fn predict_flat(params: &SubmodelParams, seq: &FeatureSequence) -> Result<HeadPrediction> {
    let out = submodel_forward(params, seq, zero_knowledge(params.hidden(), seq.len()).view())?;
    Ok(predict_head(&out, &params.head, &seq.mask)?)
}
