//! Split-quality functionals and the two fragmentation strategies.
//!
//! Geometry functionals (unity, disjunction, recuperation, heterogeneity,
//! silhouette, Davies-Bouldin) work on surrogate points. Label functionals
//! (sentiment proportion, impurity, amplitude) work on the utterance labels
//! owned by a split's users.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cogspace::{distance, medoid, medoid_index, minkowski, SpaceConfig, SpaceError, SurrogatePoint};

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("split has no points")]
    EmptySplit,
    #[error("split has no utterances")]
    NoUtterances,
    #[error("fragment list is empty")]
    NoSplits,
    #[error("recuperation undefined: all split medoids coincide")]
    RecuperationUndefined,
    #[error("degenerate geometry: all points coincide")]
    DegenerateGeometry,
    #[error("cue index {cue} out of range for {dim}-dimensional points")]
    CueOutOfRange { cue: usize, dim: usize },
    #[error("no cut-point candidate yields two non-empty splits")]
    NoFeasibleCut,
    #[error("no feasible cluster count among the candidates")]
    NoFeasibleClusterCount,
    #[error("cannot form {clusters} clusters from {points} points")]
    InvalidClusterCount { clusters: usize, points: usize },
    #[error("silhouette needs at least two splits")]
    SingleSplit,
    #[error("invalid partition config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, PartitionError>;

/// Binary sentiment of one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sentiment {
    Negative,
    Positive,
}

impl Sentiment {
    pub const BOTH: [Sentiment; 2] = [Sentiment::Negative, Sentiment::Positive];

    pub fn index(self) -> usize {
        match self {
            Sentiment::Negative => 0,
            Sentiment::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Sentiment::Negative),
            1 => Some(Sentiment::Positive),
            _ => None,
        }
    }
}

/// A user's surrogate point together with the labels of all their utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledUser {
    pub point: SurrogatePoint,
    pub labels: Vec<Sentiment>,
}

impl LabeledUser {
    pub fn new(point: SurrogatePoint, labels: Vec<Sentiment>) -> Self {
        Self { point, labels }
    }
}

/// One fragment of a subspace: its users and the utterances they own.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub points: Vec<SurrogatePoint>,
    /// Per-point utterance labels, parallel to `points`.
    pub labels: Vec<Vec<Sentiment>>,
}

impl Split {
    pub fn from_members(members: &[LabeledUser]) -> Self {
        Self {
            points: members.iter().map(|m| m.point.clone()).collect(),
            labels: members.iter().map(|m| m.labels.clone()).collect(),
        }
    }

    pub fn from_points(points: Vec<SurrogatePoint>) -> Self {
        let labels = vec![Vec::new(); points.len()];
        Self { points, labels }
    }

    pub fn members(&self) -> Vec<LabeledUser> {
        self.points
            .iter()
            .zip(&self.labels)
            .map(|(p, l)| LabeledUser::new(p.clone(), l.clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn utterances(&self) -> impl Iterator<Item = Sentiment> + '_ {
        self.labels.iter().flatten().copied()
    }

    pub fn utterance_count(&self) -> usize {
        self.labels.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MvMode {
    /// Mean plus population variance.
    #[default]
    MeanPlusVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub lambda_cut: f64,
    pub cutpoint_candidates: usize,
    pub cluster_count_min: usize,
    pub cluster_count_max: usize,
    pub mv_mode: MvMode,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            lambda_cut: 0.5,
            cutpoint_candidates: 10,
            cluster_count_min: 2,
            cluster_count_max: 5,
            mv_mode: MvMode::MeanPlusVariance,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_cut) {
            return Err(PartitionError::InvalidConfig(format!(
                "lambda_cut {} outside [0, 1]",
                self.lambda_cut
            )));
        }
        if self.cutpoint_candidates == 0 {
            return Err(PartitionError::InvalidConfig("cutpoint_candidates must be positive".into()));
        }
        if self.cluster_count_min < 2 || self.cluster_count_max < self.cluster_count_min {
            return Err(PartitionError::InvalidConfig(format!(
                "cluster count range {}..={} must start at 2 or above and be non-empty",
                self.cluster_count_min, self.cluster_count_max
            )));
        }
        Ok(())
    }
}

/// Parameters that produced a fragmentation; routing replays them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FragmentParams {
    Theoretical { cue: usize, cut: f64 },
    Cluster { count: usize, medoids: Vec<SurrogatePoint> },
}

/// Objective value of one candidate parameter (a cut value or a cluster count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub parameter: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentResult {
    pub splits: Vec<Split>,
    pub params: FragmentParams,
    pub candidates: Vec<CandidateScore>,
}

// ---------------------------------------------------------------------------
// Geometry functionals
// ---------------------------------------------------------------------------

/// Mean pairwise distance inside a split.
pub fn unity(points: &[SurrogatePoint], cfg: &SpaceConfig) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(PartitionError::TooFewPoints { needed: 2, found: n });
    }
    let mut total = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            total += distance(a, b, cfg)?;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(total / pairs)
}

/// Unity with singletons treated as perfectly cohesive.
fn unity_or_zero(points: &[SurrogatePoint], cfg: &SpaceConfig) -> Result<f64> {
    match points.len() {
        0 => Err(PartitionError::EmptySplit),
        1 => Ok(0.0),
        _ => unity(points, cfg),
    }
}

/// Distance between the medoids of two splits.
pub fn disjunction(a: &[SurrogatePoint], b: &[SurrogatePoint], cfg: &SpaceConfig) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(PartitionError::EmptySplit);
    }
    Ok(distance(medoid(a, cfg)?, medoid(b, cfg)?, cfg)?)
}

fn mean_variance(values: &[f64], mode: MvMode) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    match mode {
        MvMode::MeanPlusVariance => mean + var,
    }
}

/// Per-split cohesion/separation ratios whose mean-variance aggregate is the
/// recuperation.
pub fn recuperation_ratios(splits: &[Split], cfg: &SpaceConfig) -> Result<Vec<f64>> {
    if splits.len() < 2 {
        return Err(PartitionError::TooFewPoints {
            needed: 2,
            found: splits.len(),
        });
    }
    let medoids = splits
        .iter()
        .map(|s| {
            if s.is_empty() {
                Err(PartitionError::EmptySplit)
            } else {
                Ok(medoid(&s.points, cfg)?)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let others = (splits.len() - 1) as f64;
    let mut ratios = Vec::with_capacity(splits.len());
    for (i, split) in splits.iter().enumerate() {
        let mut total = 0.0;
        for (j, m) in medoids.iter().enumerate() {
            if i != j {
                total += distance(medoids[i], m, cfg)?;
            }
        }
        if total == 0.0 {
            return Err(PartitionError::RecuperationUndefined);
        }
        ratios.push(others * unity_or_zero(&split.points, cfg)? / total);
    }
    Ok(ratios)
}

pub fn recuperation(splits: &[Split], cfg: &SpaceConfig, pcfg: &PartitionConfig) -> Result<f64> {
    let ratios = recuperation_ratios(splits, cfg)?;
    Ok(mean_variance(&ratios, pcfg.mv_mode))
}

fn check_cue(points: &[SurrogatePoint], cue: usize) -> Result<()> {
    let dim = points[0].dim();
    for p in points {
        if p.dim() != dim {
            return Err(SpaceError::DimensionMismatch { left: dim, right: p.dim() }.into());
        }
    }
    if cue >= dim {
        return Err(PartitionError::CueOutOfRange { cue, dim });
    }
    Ok(())
}

/// Heterogeneity of a point set along cue `cue`: the negated sum over point
/// pairs of the disagreement between the full normalized distance and the
/// normalized distance along `cue` alone. Zero means the cue reproduces the
/// full geometry exactly; larger magnitudes mean worse agreement.
pub fn heterogeneity(points: &[SurrogatePoint], cue: usize, cfg: &SpaceConfig) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(PartitionError::TooFewPoints { needed: 2, found: n });
    }
    check_cue(points, cue)?;
    let mut full = Vec::with_capacity(n * (n - 1) / 2);
    let mut along = Vec::with_capacity(n * (n - 1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            full.push(distance(a, b, cfg)?);
            along.push((a.coords[cue] - b.coords[cue]).abs());
        }
    }
    let d_max = full.iter().copied().fold(0.0, f64::max);
    if d_max == 0.0 {
        return Err(PartitionError::DegenerateGeometry);
    }
    let c_max = along.iter().copied().fold(0.0, f64::max);
    let mut total = 0.0;
    for (d, dc) in full.iter().zip(&along) {
        let d = d / d_max;
        let dc = if c_max > 0.0 { dc / c_max } else { 0.0 };
        total += d * (1.0 - dc) + dc * (1.0 - d);
    }
    Ok(-total)
}

/// Heterogeneity of one side of a candidate cut; sides without any pair of
/// distinct points carry no disagreement.
fn side_heterogeneity(points: &[SurrogatePoint], cue: usize, cfg: &SpaceConfig) -> Result<f64> {
    match heterogeneity(points, cue, cfg) {
        Ok(v) => Ok(v),
        Err(PartitionError::TooFewPoints { .. }) | Err(PartitionError::DegenerateGeometry) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Mean silhouette over all points. Points in singleton splits score 0, as
/// does any point with `a == b == 0`.
pub fn silhouette(splits: &[Split], cfg: &SpaceConfig) -> Result<f64> {
    let scores = silhouette_scores(splits, cfg)?;
    let n: usize = scores.iter().map(Vec::len).sum();
    Ok(scores.iter().flatten().sum::<f64>() / n as f64)
}

/// Per-point silhouette values grouped by split.
pub fn silhouette_scores(splits: &[Split], cfg: &SpaceConfig) -> Result<Vec<Vec<f64>>> {
    if splits.len() < 2 {
        return Err(PartitionError::SingleSplit);
    }
    if splits.iter().any(Split::is_empty) {
        return Err(PartitionError::EmptySplit);
    }
    let mut out = Vec::with_capacity(splits.len());
    for (k, split) in splits.iter().enumerate() {
        let mut scores = Vec::with_capacity(split.len());
        for (i, x) in split.points.iter().enumerate() {
            if split.len() == 1 {
                scores.push(0.0);
                continue;
            }
            let mut own = 0.0;
            for (j, y) in split.points.iter().enumerate() {
                if i != j {
                    own += distance(x, y, cfg)?;
                }
            }
            let a = own / (split.len() - 1) as f64;
            let mut b = f64::INFINITY;
            for (l, other) in splits.iter().enumerate() {
                if l == k {
                    continue;
                }
                let mut sum = 0.0;
                for y in &other.points {
                    sum += distance(x, y, cfg)?;
                }
                b = b.min(sum / other.len() as f64);
            }
            let denom = a.max(b);
            scores.push(if denom > 0.0 { (b - a) / denom } else { 0.0 });
        }
        out.push(scores);
    }
    Ok(out)
}

/// Davies-Bouldin index with medoids as cluster centers.
pub fn davies_bouldin(splits: &[Split], cfg: &SpaceConfig) -> Result<f64> {
    if splits.len() < 2 {
        return Err(PartitionError::SingleSplit);
    }
    let mut centers = Vec::with_capacity(splits.len());
    let mut scatter = Vec::with_capacity(splits.len());
    for s in splits {
        if s.is_empty() {
            return Err(PartitionError::EmptySplit);
        }
        let m = medoid(&s.points, cfg)?;
        let mut total = 0.0;
        for p in &s.points {
            total += distance(p, m, cfg)?;
        }
        scatter.push(total / s.len() as f64);
        centers.push(m);
    }
    let k = splits.len();
    let mut sum = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let sep = distance(centers[i], centers[j], cfg)?;
            let spread = scatter[i] + scatter[j];
            let r = if sep > 0.0 {
                spread / sep
            } else if spread == 0.0 {
                0.0
            } else {
                return Err(PartitionError::DegenerateGeometry);
            };
            worst = worst.max(r);
        }
        sum += worst;
    }
    Ok(sum / k as f64)
}

// ---------------------------------------------------------------------------
// Label functionals
// ---------------------------------------------------------------------------

pub fn sentiment_proportion(split: &Split, s: Sentiment) -> Result<f64> {
    let total = split.utterance_count();
    if total == 0 {
        return Err(PartitionError::NoUtterances);
    }
    let hits = split.utterances().filter(|&u| u == s).count();
    Ok(hits as f64 / total as f64)
}

/// Binary Shannon entropy (base 2) of a split's utterance labels.
pub fn impurity(split: &Split) -> Result<f64> {
    let mut h = 0.0;
    for s in Sentiment::BOTH {
        let p = sentiment_proportion(split, s)?;
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// Impurity averaged over splits, weighted by utterance counts.
pub fn weighted_impurity(splits: &[Split]) -> Result<f64> {
    if splits.is_empty() {
        return Err(PartitionError::NoSplits);
    }
    let total: usize = splits.iter().map(Split::utterance_count).sum();
    let mut acc = 0.0;
    for s in splits {
        acc += s.utterance_count() as f64 / total as f64 * impurity(s)?;
    }
    Ok(acc)
}

pub fn min_amplitude(splits: &[Split]) -> Result<usize> {
    splits
        .iter()
        .map(Split::utterance_count)
        .min()
        .ok_or(PartitionError::NoSplits)
}

// ---------------------------------------------------------------------------
// Theoretical fragmentation
// ---------------------------------------------------------------------------

fn all_identical(points: &[SurrogatePoint]) -> bool {
    points.iter().all(|p| p.coords == points[0].coords)
}

/// Cue with maximal heterogeneity; ties go to the lowest index.
pub fn select_dimension(points: &[SurrogatePoint], cfg: &SpaceConfig) -> Result<usize> {
    if points.len() < 2 {
        return Err(PartitionError::TooFewPoints {
            needed: 2,
            found: points.len(),
        });
    }
    if all_identical(points) {
        return Err(PartitionError::DegenerateGeometry);
    }
    let mut best: Option<(usize, f64)> = None;
    for c in 0..points[0].dim() {
        let h = heterogeneity(points, c, cfg)?;
        if best.is_none_or(|(_, b)| h > b) {
            best = Some((c, h));
        }
    }
    best.map(|(c, _)| c).ok_or(PartitionError::DegenerateGeometry)
}

/// Candidate cut values at evenly spaced rank quantiles of the cue. Each
/// candidate is the midpoint between the quantile value and the next
/// smaller distinct value, so the value itself falls right of the cut.
pub fn cut_candidates(values: &[f64], count: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    let n = sorted.len();
    let mut cuts = Vec::new();
    let mut seen = Vec::new();
    for i in 1..=count {
        let rank = (i * n) / (count + 1);
        let v = sorted[rank.min(n - 1)];
        let j = distinct.partition_point(|&d| d < v);
        if j == 0 || seen.contains(&j) {
            continue;
        }
        seen.push(j);
        cuts.push(0.5 * (distinct[j - 1] + distinct[j]));
    }
    cuts.sort_by(f64::total_cmp);
    cuts
}

fn split_by_cut(members: &[LabeledUser], cue: usize, cut: f64) -> (Vec<LabeledUser>, Vec<LabeledUser>) {
    members.iter().cloned().partition(|m| m.point.coords[cue] < cut)
}

/// Trade-off objective for one two-way cut: point-weighted heterogeneity
/// against utterance-weighted impurity.
pub fn cut_objective(left: &Split, right: &Split, cue: usize, cfg: &SpaceConfig, lambda: f64) -> Result<f64> {
    let n = (left.len() + right.len()) as f64;
    let het = left.len() as f64 / n * side_heterogeneity(&left.points, cue, cfg)?
        + right.len() as f64 / n * side_heterogeneity(&right.points, cue, cfg)?;
    let imp = if lambda < 1.0 {
        weighted_impurity(&[left.clone(), right.clone()])?
    } else {
        0.0
    };
    Ok(lambda * het + (1.0 - lambda) * imp)
}

/// Best cut value on `cue` and the objective of every feasible candidate.
pub fn select_cutpoint(
    members: &[LabeledUser],
    cue: usize,
    cfg: &SpaceConfig,
    pcfg: &PartitionConfig,
) -> Result<(f64, Vec<CandidateScore>)> {
    if members.len() < 2 {
        return Err(PartitionError::TooFewPoints {
            needed: 2,
            found: members.len(),
        });
    }
    let points: Vec<SurrogatePoint> = members.iter().map(|m| m.point.clone()).collect();
    check_cue(&points, cue)?;
    let values: Vec<f64> = points.iter().map(|p| p.coords[cue]).collect();
    let mut scores = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for cut in cut_candidates(&values, pcfg.cutpoint_candidates) {
        let (l, r) = split_by_cut(members, cue, cut);
        if l.is_empty() || r.is_empty() {
            continue;
        }
        let objective = cut_objective(&Split::from_members(&l), &Split::from_members(&r), cue, cfg, pcfg.lambda_cut)?;
        scores.push(CandidateScore { parameter: cut, objective });
        // candidates ascend, so strict improvement keeps the smaller cut on ties
        if best.is_none_or(|(_, b)| objective > b) {
            best = Some((cut, objective));
        }
    }
    best.map(|(cut, _)| (cut, scores)).ok_or(PartitionError::NoFeasibleCut)
}

/// Two-way split on the most heterogeneous cue. Values below the cut go left,
/// values at or above it go right.
pub fn theoretical_fragment(
    members: &[LabeledUser],
    cfg: &SpaceConfig,
    pcfg: &PartitionConfig,
) -> Result<FragmentResult> {
    let points: Vec<SurrogatePoint> = members.iter().map(|m| m.point.clone()).collect();
    let cue = select_dimension(&points, cfg)?;
    let (cut, candidates) = select_cutpoint(members, cue, cfg, pcfg)?;
    let (l, r) = split_by_cut(members, cue, cut);
    Ok(FragmentResult {
        splits: vec![Split::from_members(&l), Split::from_members(&r)],
        params: FragmentParams::Theoretical { cue, cut },
        candidates,
    })
}

// ---------------------------------------------------------------------------
// Cluster-based fragmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome {
    pub result: FragmentResult,
    /// Cluster index per input member.
    pub assignment: Vec<usize>,
    pub objective: f64,
    /// Objective after every assignment step and every center update.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Sum of distances from each point to the medoid of its cluster.
pub fn clustering_objective(points: &[SurrogatePoint], assignment: &[usize], k: usize, cfg: &SpaceConfig) -> Result<f64> {
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<SurrogatePoint> = points
            .iter()
            .zip(assignment)
            .filter(|(_, &a)| a == c)
            .map(|(p, _)| p.clone())
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = medoid(&members, cfg)?;
        for p in &members {
            total += distance(p, m, cfg)?;
        }
    }
    Ok(total)
}

fn nearest(dist_row: &[f64], centers: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in centers.iter().enumerate() {
        if dist_row[c] < dist_row[centers[best]] {
            best = k;
        }
    }
    best
}

struct Lloyd {
    assignment: Vec<usize>,
    cost: f64,
    history: Vec<f64>,
    iterations: usize,
}

fn farthest_first(dist: &[Vec<f64>], start: usize, d: usize) -> Vec<usize> {
    let mut centers = vec![start];
    while centers.len() < d {
        let mut pick: Option<(usize, f64)> = None;
        for (i, row) in dist.iter().enumerate() {
            if centers.contains(&i) {
                continue;
            }
            let gap = centers.iter().map(|&c| row[c]).fold(f64::INFINITY, f64::min);
            if pick.is_none_or(|(_, g)| gap > g) {
                pick = Some((i, gap));
            }
        }
        centers.push(pick.expect("d <= n leaves a free point").0);
    }
    centers
}

/// Alternates nearest-center assignment and medoid updates until the
/// assignment repeats or the iteration cap is hit.
fn lloyd(dist: &[Vec<f64>], points: &[SurrogatePoint], mut centers: Vec<usize>, cfg: &SpaceConfig) -> Result<Lloyd> {
    let n = points.len();
    let cost = |assign: &[usize], centers: &[usize]| -> f64 { (0..n).map(|i| dist[i][centers[assign[i]]]).sum() };
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut assignment = vec![0; n];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        for (i, slot) in assignment.iter_mut().enumerate() {
            *slot = nearest(&dist[i], &centers);
        }
        repair_empty_clusters(&mut assignment, &mut centers, dist);
        history.push(cost(&assignment, &centers));
        if previous.as_deref() == Some(assignment.as_slice()) {
            break;
        }
        for (k, center) in centers.iter_mut().enumerate() {
            let idx: Vec<usize> = (0..n).filter(|&i| assignment[i] == k).collect();
            let pts: Vec<SurrogatePoint> = idx.iter().map(|&i| points[i].clone()).collect();
            *center = idx[medoid_index(&pts, cfg)?];
        }
        history.push(cost(&assignment, &centers));
        previous = Some(assignment.clone());
    }
    Ok(Lloyd {
        cost: *history.last().expect("one pass ran"),
        assignment,
        history,
        iterations,
    })
}

/// k-medoids with Lloyd-style alternation, started farthest-first from up to
/// ten seeded starting points; the cheapest run wins, earlier runs on ties.
pub fn kmeans_fragment(members: &[LabeledUser], d: usize, cfg: &SpaceConfig, seed: u64) -> Result<KMeansOutcome> {
    let n = members.len();
    if d == 0 || d > n {
        return Err(PartitionError::InvalidClusterCount { clusters: d, points: n });
    }
    let points: Vec<SurrogatePoint> = members.iter().map(|m| m.point.clone()).collect();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = minkowski(&points[i].coords, &points[j].coords, cfg.r)?;
            dist[i][j] = v;
            dist[j][i] = v;
        }
    }

    // every restart begins farthest-first from a different seeded point
    let mut starts: Vec<usize> = (0..n).collect();
    starts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    starts.truncate(KMEANS_RESTARTS);
    let mut best: Option<Lloyd> = None;
    for start in starts {
        let run = lloyd(&dist, &points, farthest_first(&dist, start, d), cfg)?;
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    let Lloyd {
        assignment,
        history,
        iterations,
        ..
    } = best.expect("at least one restart");

    let mut splits = Vec::with_capacity(d);
    let mut medoids = Vec::with_capacity(d);
    for k in 0..d {
        let chosen: Vec<LabeledUser> = (0..n).filter(|&i| assignment[i] == k).map(|i| members[i].clone()).collect();
        let split = Split::from_members(&chosen);
        medoids.push(medoid(&split.points, cfg)?.clone());
        splits.push(split);
    }
    let objective = clustering_objective(&points, &assignment, d, cfg)?;
    Ok(KMeansOutcome {
        result: FragmentResult {
            splits,
            params: FragmentParams::Cluster { count: d, medoids },
            candidates: Vec::new(),
        },
        assignment,
        objective,
        history,
        iterations,
    })
}

/// Gives every empty cluster the point lying farthest from its own center,
/// taken from a cluster that can spare one.
fn repair_empty_clusters(assignment: &mut [usize], centers: &mut [usize], dist: &[Vec<f64>]) {
    let k = centers.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut donor: Option<(usize, f64)> = None;
        for (i, &a) in assignment.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            let gap = dist[i][centers[a]];
            if donor.is_none_or(|(_, g)| gap > g) {
                donor = Some((i, gap));
            }
        }
        let (i, _) = donor.expect("n >= k guarantees a donor");
        assignment[i] = empty;
        centers[empty] = i;
    }
}

/// Objective for one candidate cluster count.
pub fn cluster_count_objective(splits: &[Split], cfg: &SpaceConfig, pcfg: &PartitionConfig) -> Result<f64> {
    let slh = silhouette(splits, cfg)?;
    let imp = weighted_impurity(splits)?;
    let rcp = recuperation(splits, cfg, pcfg)?;
    Ok(slh + imp - rcp)
}

/// Cluster count maximizing silhouette plus impurity minus recuperation.
/// Candidates whose objective is undefined are skipped; ties go to the
/// smaller count.
pub fn select_cluster_count(
    members: &[LabeledUser],
    cfg: &SpaceConfig,
    pcfg: &PartitionConfig,
    seed: u64,
) -> Result<(KMeansOutcome, Vec<CandidateScore>)> {
    let mut scores = Vec::new();
    let mut best: Option<(KMeansOutcome, f64)> = None;
    for d in pcfg.cluster_count_min..=pcfg.cluster_count_max {
        if d > members.len() {
            break;
        }
        let outcome = kmeans_fragment(members, d, cfg, seed)?;
        let objective = match cluster_count_objective(&outcome.result.splits, cfg, pcfg) {
            Ok(v) => v,
            Err(
                PartitionError::RecuperationUndefined
                | PartitionError::NoUtterances
                | PartitionError::EmptySplit
                | PartitionError::SingleSplit,
            ) => continue,
            Err(e) => return Err(e),
        };
        scores.push(CandidateScore {
            parameter: d as f64,
            objective,
        });
        if best.as_ref().is_none_or(|(_, b)| objective > *b) {
            best = Some((outcome, objective));
        }
    }
    let (mut outcome, _) = best.ok_or(PartitionError::NoFeasibleClusterCount)?;
    outcome.result.candidates = scores.clone();
    Ok((outcome, scores))
}
