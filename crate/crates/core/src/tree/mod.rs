//! The adaptive tree of user subspaces.
//!
//! Construction is breadth-first: every dequeued subspace becomes a node,
//! gets fragmented with the configured strategy, and either stops (becoming
//! a leaf) or enqueues its splits. Sparse nodes then borrow users from
//! same-depth neighbors, each borrowed user carrying an input dropout rate.

pub mod codec;

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cogspace::{distance, max_intra_distance, medoid, CueSet, SpaceConfig, SpaceError, SurrogatePoint};
use crate::neural::SubmodelParams;
use crate::partition::{
    min_amplitude, recuperation, select_cluster_count, theoretical_fragment, weighted_impurity, disjunction,
    FragmentParams, FragmentResult, LabeledUser, PartitionConfig, PartitionError,
};

pub use codec::{deserialize, serialize, CodecError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("no users to build a tree from")]
    NoUsers,
    #[error("user {0} owns no utterances")]
    NoUtterances(String),
    #[error("user {0} appears more than once")]
    DuplicateUser(String),
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("invalid tree config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, TreeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Two-way cut on the most heterogeneous cue.
    Theoretical,
    /// k-medoids with a selected cluster count.
    #[default]
    Cluster,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Theoretical => "theoretical",
            Strategy::Cluster => "cluster",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "theoretical" => Ok(Strategy::Theoretical),
            "cluster" => Ok(Strategy::Cluster),
            other => Err(format!("unknown strategy {other:?} (expected theoretical or cluster)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// Recuperation ceiling.
    pub theta_p: f64,
    /// Weighted impurity floor.
    pub theta_e: f64,
    /// Utterance amplitude floor.
    pub theta_a: usize,
    /// Users a node needs before it stops borrowing.
    pub theta_b: usize,
    pub lambda_dropout: f64,
    pub max_dropout: f64,
    pub strategy: Strategy,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            theta_p: 0.74,
            theta_e: 0.6,
            theta_a: 40,
            theta_b: 8,
            lambda_dropout: 0.5,
            max_dropout: 0.9,
            strategy: Strategy::Cluster,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TreeError::InvalidConfig(m));
        if !(self.theta_p.is_finite() && self.theta_p > 0.0) {
            return bad(format!("theta_p {} must be finite and positive", self.theta_p));
        }
        if !(0.0..=1.0).contains(&self.theta_e) {
            return bad(format!("theta_e {} outside [0, 1]", self.theta_e));
        }
        if self.theta_a == 0 || self.theta_b == 0 {
            return bad("theta_a and theta_b must be positive".into());
        }
        if !(self.lambda_dropout.is_finite() && self.lambda_dropout > 0.0) {
            return bad(format!("lambda_dropout {} must be finite and positive", self.lambda_dropout));
        }
        if !(0.0..1.0).contains(&self.max_dropout) {
            return bad(format!("max_dropout {} outside [0, 1)", self.max_dropout));
        }
        Ok(())
    }
}

/// Everything `build` needs besides the users.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub space: SpaceConfig,
    pub partition: PartitionConfig,
    pub tree: TreeConfig,
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.partition.validate()?;
        self.tree.validate()
    }
}

/// Why a node stopped branching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Recuperation,
    /// Recuperation could not be computed because every split medoid coincides.
    RecuperationUndefined,
    Impurity,
    Amplitude,
    /// The fragmenter itself failed.
    Fragmentation(String),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Recuperation => f.write_str("recuperation"),
            StopReason::RecuperationUndefined => f.write_str("recuperation-undefined"),
            StopReason::Impurity => f.write_str("impurity"),
            StopReason::Amplitude => f.write_str("amplitude"),
            StopReason::Fragmentation(e) => write!(f, "fragmentation: {e}"),
        }
    }
}

/// A user borrowed from a neighboring node.
#[derive(Debug, Clone, PartialEq)]
pub struct Adoption {
    pub user: LabeledUser,
    pub source: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    /// Original members of the subspace.
    pub members: Vec<LabeledUser>,
    pub adopted: Vec<Adoption>,
    /// Present exactly on internal nodes.
    pub fragment: Option<FragmentParams>,
    /// Empty on internal nodes.
    pub stop: Vec<StopReason>,
    pub submodel: Option<SubmodelParams>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn points(&self) -> Vec<SurrogatePoint> {
        self.members.iter().map(|m| m.point.clone()).collect()
    }

    pub fn utterance_count(&self) -> usize {
        self.members.iter().map(|m| m.labels.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveTree {
    pub cues: CueSet,
    pub config: BuildConfig,
    pub seed: u64,
    /// Indexed by node id; the root is node 0.
    pub nodes: Vec<TreeNode>,
    pub leaves: Vec<usize>,
}

/// Stopping criteria violated by a fragmentation; empty means keep branching.
pub fn terminate(h: &FragmentResult, space: &SpaceConfig, pcfg: &PartitionConfig, cfg: &TreeConfig) -> Result<Vec<StopReason>> {
    let mut reasons = Vec::new();
    match recuperation(&h.splits, space, pcfg) {
        Ok(r) if r > cfg.theta_p => reasons.push(StopReason::Recuperation),
        Ok(_) => {}
        Err(PartitionError::RecuperationUndefined) => reasons.push(StopReason::RecuperationUndefined),
        Err(e) => return Err(e.into()),
    }
    if weighted_impurity(&h.splits)? < cfg.theta_e {
        reasons.push(StopReason::Impurity);
    }
    if min_amplitude(&h.splits)? < cfg.theta_a {
        reasons.push(StopReason::Amplitude);
    }
    Ok(reasons)
}

/// Seed for the fragmenter at a node, derived from the node's content so
/// the same subspace is always fragmented the same way.
fn subspace_seed(seed: u64, members: &[LabeledUser]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0100_0000_01b3;
    let mut ids: Vec<&str> = members.iter().map(|m| m.point.user_id.as_str()).collect();
    ids.sort_unstable();
    let mut h = FNV_OFFSET;
    for id in ids {
        for b in id.bytes().chain(std::iter::once(0)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    seed ^ h
}

fn fragment(members: &[LabeledUser], config: &BuildConfig, seed: u64) -> std::result::Result<FragmentResult, PartitionError> {
    match config.tree.strategy {
        Strategy::Theoretical => theoretical_fragment(members, &config.space, &config.partition),
        Strategy::Cluster => {
            select_cluster_count(members, &config.space, &config.partition, subspace_seed(seed, members)).map(|(o, _)| o.result)
        }
    }
}

fn check_users(users: &[LabeledUser], cues: &CueSet) -> Result<()> {
    if users.is_empty() {
        return Err(TreeError::NoUsers);
    }
    let mut seen = HashSet::new();
    for u in users {
        u.point.validate(cues)?;
        if u.labels.is_empty() {
            return Err(TreeError::NoUtterances(u.point.user_id.clone()));
        }
        if !seen.insert(u.point.user_id.as_str()) {
            return Err(TreeError::DuplicateUser(u.point.user_id.clone()));
        }
    }
    Ok(())
}

/// Builds the tree breadth-first, then lets sparse nodes borrow users from
/// their same-depth neighbors.
pub fn build(users: &[LabeledUser], cues: &CueSet, config: &BuildConfig, seed: u64) -> Result<AdaptiveTree> {
    config.validate()?;
    check_users(users, cues)?;

    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut leaves = Vec::new();
    let mut queue: VecDeque<(Vec<LabeledUser>, Option<usize>, usize)> = VecDeque::new();
    queue.push_back((users.to_vec(), None, 0));

    while let Some((members, parent, depth)) = queue.pop_front() {
        let id = nodes.len();
        if let Some(p) = parent {
            nodes[p].children.push(id);
        }
        let mut node = TreeNode {
            id,
            parent,
            children: Vec::new(),
            depth,
            members,
            adopted: Vec::new(),
            fragment: None,
            stop: Vec::new(),
            submodel: None,
        };
        match fragment(&node.members, config, seed) {
            Err(e) => node.stop.push(StopReason::Fragmentation(e.to_string())),
            Ok(h) => {
                let reasons = terminate(&h, &config.space, &config.partition, &config.tree)?;
                if reasons.is_empty() {
                    node.fragment = Some(h.params);
                    for split in h.splits {
                        queue.push_back((split.members(), Some(id), depth + 1));
                    }
                } else {
                    node.stop = reasons;
                }
            }
        }
        if node.fragment.is_none() {
            leaves.push(id);
        }
        nodes.push(node);
    }

    let mut tree = AdaptiveTree {
        cues: cues.clone(),
        config: config.clone(),
        seed,
        nodes,
        leaves,
    };
    for id in 0..tree.nodes.len() {
        let adopted = kind_neighbors(&tree, id)?;
        tree.nodes[id].adopted = adopted;
    }
    Ok(tree)
}

/// Dropout rate for users borrowed from a neighbor at the given disjunction.
/// Coincident medoids give 0.
pub fn dropout_ratio(max_intra: f64, disjunction: f64, cfg: &TreeConfig) -> f64 {
    if disjunction == 0.0 {
        return 0.0;
    }
    (cfg.lambda_dropout * max_intra / disjunction).min(cfg.max_dropout)
}

/// Users a node with fewer than `theta_b` members borrows. Same-depth
/// neighbors are visited nearest first (by disjunction, then id); within a
/// neighbor, users closest to this node's medoid go first.
pub fn kind_neighbors(tree: &AdaptiveTree, id: usize) -> Result<Vec<Adoption>> {
    let node = tree.node(id)?;
    let cfg = &tree.config.tree;
    let space = &tree.config.space;
    if node.members.len() >= cfg.theta_b {
        return Ok(Vec::new());
    }
    let own = node.points();
    let center = medoid(&own, space)?;
    let spread = max_intra_distance(&own, space)?;

    let mut neighbors = Vec::new();
    for other in tree.nodes.iter().filter(|n| n.depth == node.depth && n.id != id) {
        neighbors.push((disjunction(&own, &other.points(), space)?, other.id));
    }
    neighbors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut adopted = Vec::new();
    for (gap, source) in neighbors {
        if node.members.len() + adopted.len() >= cfg.theta_b {
            break;
        }
        let rate = dropout_ratio(spread, gap, cfg);
        let mut pool = Vec::with_capacity(tree.nodes[source].members.len());
        for m in &tree.nodes[source].members {
            pool.push((distance(&m.point, center, space)?, m));
        }
        pool.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.point.user_id.cmp(&b.1.point.user_id)));
        for (_, m) in pool {
            if node.members.len() + adopted.len() >= cfg.theta_b {
                break;
            }
            adopted.push(Adoption {
                user: m.clone(),
                source,
                dropout: rate,
            });
        }
    }
    Ok(adopted)
}

impl AdaptiveTree {
    pub const ROOT: usize = 0;

    pub fn node(&self, id: usize) -> Result<&TreeNode> {
        self.nodes.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[Self::ROOT]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().map_or(0, |d| d + 1)
    }

    /// Node ids grouped by depth, each group in id order.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut levels = vec![Vec::new(); self.depth()];
        for n in &self.nodes {
            levels[n.depth].push(n.id);
        }
        levels
    }

    /// Node ids from the root to the leaf whose region contains `point`.
    /// Theoretical nodes send values at or above the cut right; cluster
    /// nodes pick the child with the nearest medoid, ties to the lower id.
    pub fn route(&self, point: &SurrogatePoint) -> Result<Vec<usize>> {
        if point.dim() != self.cues.len() {
            return Err(SpaceError::DimensionMismatch {
                left: self.cues.len(),
                right: point.dim(),
            }
            .into());
        }
        let mut path = vec![Self::ROOT];
        let mut current = &self.nodes[Self::ROOT];
        while let Some(params) = &current.fragment {
            let slot = match params {
                FragmentParams::Theoretical { cue, cut } => usize::from(point.coords[*cue] >= *cut),
                FragmentParams::Cluster { medoids, .. } => {
                    let mut best = (0, f64::INFINITY);
                    for (k, m) in medoids.iter().enumerate() {
                        let d = distance(m, point, &self.config.space)?;
                        if d < best.1 {
                            best = (k, d);
                        }
                    }
                    best.0
                }
            };
            let next = current.children[slot];
            path.push(next);
            current = &self.nodes[next];
        }
        Ok(path)
    }

    /// The leaf holding this user as an original member.
    pub fn leaf_of(&self, user_id: &str) -> Option<usize> {
        self.leaves
            .iter()
            .copied()
            .find(|&l| self.nodes[l].members.iter().any(|m| m.point.user_id == user_id))
    }

    pub fn summaries(&self) -> Vec<NodeSummary> {
        self.nodes.iter().map(|n| NodeSummary::new(n, &self.cues)).collect()
    }

    /// Graphviz description with one node statement per line.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tree {\n");
        for s in self.summaries() {
            out.push_str(&format!(
                "  n{} [label=\"{} | depth {} | users {} | adopted {} | {} | {}\"];\n",
                s.id, s.id, s.depth, s.users, s.adopted, s.split, s.stop
            ));
        }
        for n in &self.nodes {
            for c in &n.children {
                out.push_str(&format!("  n{} -> n{c};\n", n.id));
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Flat per-node description for tables and plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSummary {
    pub id: usize,
    pub parent: String,
    pub depth: usize,
    pub users: usize,
    pub adopted: usize,
    pub utterances: usize,
    pub split: String,
    pub stop: String,
    pub trained: bool,
}

impl NodeSummary {
    fn new(n: &TreeNode, cues: &CueSet) -> Self {
        let split = match &n.fragment {
            None => "leaf".to_string(),
            Some(FragmentParams::Theoretical { cue, cut }) => {
                let name = cues.names().get(*cue).map_or("?", String::as_str);
                format!("{name} >= {cut:.4}")
            }
            Some(FragmentParams::Cluster { count, .. }) => format!("{count} clusters"),
        };
        Self {
            id: n.id,
            parent: n.parent.map_or_else(|| "-".to_string(), |p| p.to_string()),
            depth: n.depth,
            users: n.members.len(),
            adopted: n.adopted.len(),
            utterances: n.utterance_count(),
            split,
            stop: n.stop.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            trained: n.submodel.is_some(),
        }
    }
}
