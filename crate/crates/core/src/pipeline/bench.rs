//! User-level k-fold benchmark of the tree against two baselines: a single
//! submodel on all users (root only), and per-cue median splits whose
//! submodels vote (SEP).

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::data::{Dataset, Video};
use super::metrics::{evaluate, Confusion, LevelScore, MetricsReport};
use super::model::{node_seed, predict_flat, train_flat, train_tree};
use super::{Config, PipelineError, Result};
use crate::neural::{majority_vote, SubmodelParams};
use crate::partition::Sentiment;
use crate::tree::build;

pub const TREE: &str = "tree";
pub const ROOT_ONLY: &str = "root-only";
pub const SEP: &str = "sep";

/// Shuffles the user ids with the seed and deals them into `k` folds.
pub fn user_folds(users: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(PipelineError::InvalidFolds { k, users: users.len() });
    }
    if k > users.len() {
        return Err(PipelineError::InvalidFolds { k, users: users.len() });
    }
    let mut ids = users.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldRow {
    pub fold: usize,
    pub model: String,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub pc: f64,
    pub rc_plus: f64,
    pub rc_minus: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub video_accuracy: f64,
}

impl FoldRow {
    fn new(fold: usize, model: &str, m: &MetricsReport) -> Self {
        Self {
            fold,
            model: model.to_string(),
            tp: m.confusion.tp,
            fp: m.confusion.fp,
            tn: m.confusion.tn,
            fn_: m.confusion.fn_,
            pc: m.pc,
            rc_plus: m.rc_plus,
            rc_minus: m.rc_minus,
            f1: m.f1,
            accuracy: m.accuracy,
            video_accuracy: m.video_accuracy,
        }
    }
}

/// Mean of the per-fold metrics of one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRow {
    pub model: String,
    pub pc: f64,
    pub rc_plus: f64,
    pub rc_minus: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub video_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub test_users: Vec<String>,
    pub tree_nodes: usize,
    /// Per-level scores of the tree, root first.
    pub levels: Vec<LevelScore>,
    pub rows: Vec<FoldRow>,
}

impl FoldResult {
    /// Whether the per-level mean of node F1 never drops when moving from
    /// the deepest level up to the root.
    pub fn f1_rises_to_root(&self) -> bool {
        self.levels.windows(2).all(|w| w[0].mean_f1 >= w[1].mean_f1)
    }

    /// The same check on F1 of counts pooled per level.
    pub fn pooled_f1_rises_to_root(&self) -> bool {
        self.levels.windows(2).all(|w| w[0].f1 >= w[1].f1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub folds: Vec<FoldResult>,
    pub means: Vec<MeanRow>,
}

impl BenchmarkReport {
    pub fn mean(&self, model: &str) -> Option<&MeanRow> {
        self.means.iter().find(|m| m.model == model)
    }

    pub fn write_folds<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.folds.iter().flat_map(|f| &f.rows) {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_means<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.means {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_levels<W: Write>(&self, out: W) -> csv::Result<()> {
        #[derive(Serialize)]
        struct Row {
            fold: usize,
            depth: usize,
            nodes: usize,
            f1: f64,
            mean_f1: f64,
            accuracy: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for f in &self.folds {
            for l in &f.levels {
                w.serialize(Row {
                    fold: f.fold,
                    depth: l.depth,
                    nodes: l.nodes,
                    f1: l.f1,
                    mean_f1: l.mean_f1,
                    accuracy: l.accuracy,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn score_flat(test: &Dataset, mut labels: impl FnMut(&Video) -> Result<Vec<Option<Sentiment>>>) -> Result<MetricsReport> {
    let mut c = Confusion::default();
    let mut right = 0;
    for v in &test.videos {
        let predicted = labels(v)?;
        c.add_all(&predicted, &v.sequence.labels);
        let truth = majority_vote(&v.sequence.labels).ok();
        if truth.is_some() && majority_vote(&predicted).ok() == truth {
            right += 1;
        }
    }
    Ok(MetricsReport::from_counts(c, right as f64 / test.videos.len() as f64))
}

/// Per cue, submodels for users below and at-or-above the training median.
struct SepModel {
    medians: Vec<f64>,
    /// `[below, at_or_above]` per cue.
    halves: Vec<[SubmodelParams; 2]>,
}

fn train_sep(train: &Dataset, cfg: &Config, seed: u64) -> Result<SepModel> {
    let mut medians = Vec::new();
    let mut halves = Vec::new();
    for cue in 0..train.cues.len() {
        let mut values: Vec<f64> = train.users.iter().map(|u| u.coords[cue]).collect();
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        let side = |high: bool| -> Vec<&Video> {
            let chosen: Vec<&Video> = train
                .videos
                .iter()
                .filter(|v| train.user(&v.user_id).is_some_and(|u| (u.coords[cue] >= median) == high))
                .collect();
            // a one-sided cue falls back to every user
            if chosen.is_empty() {
                train.videos.iter().collect()
            } else {
                chosen
            }
        };
        let low = train_flat(&side(false), &cfg.neural, node_seed(seed, 2 * cue))?;
        let high = train_flat(&side(true), &cfg.neural, node_seed(seed, 2 * cue + 1))?;
        medians.push(median);
        halves.push([low, high]);
    }
    Ok(SepModel { medians, halves })
}

fn predict_sep(model: &SepModel, test: &Dataset, v: &Video) -> Result<Vec<Option<Sentiment>>> {
    let user = test.user(&v.user_id).ok_or_else(|| PipelineError::UnknownUser(v.user_id.clone()))?;
    let mut votes: Vec<Vec<Option<Sentiment>>> = vec![Vec::new(); v.sequence.len()];
    for (cue, (median, pair)) in model.medians.iter().zip(&model.halves).enumerate() {
        let params = &pair[usize::from(user.coords[cue] >= *median)];
        let labels = predict_flat(params, &v.sequence)?.labels;
        for (t, l) in labels.into_iter().enumerate() {
            votes[t].push(l);
        }
    }
    Ok(votes
        .into_iter()
        .map(|ballot| majority_vote(&ballot).ok())
        .collect())
}

/// Which models a benchmark runs besides the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Baselines {
    pub root_only: bool,
    pub sep: bool,
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            root_only: true,
            sep: true,
        }
    }
}

fn run_fold(data: &Dataset, folds: &[Vec<String>], fold: usize, cfg: &Config, baselines: Baselines) -> Result<FoldResult> {
    let test_ids: Vec<&str> = folds[fold].iter().map(String::as_str).collect();
    let train_ids: Vec<&str> = folds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fold)
        .flat_map(|(_, f)| f.iter().map(String::as_str))
        .collect();
    let train = data.subset(&train_ids);
    let test = data.subset(&test_ids);
    let seed = cfg.seed.wrapping_add(fold as u64);

    let mut tree = build(&train.labeled_users(), &train.cues, &cfg.build(), seed)?;
    train_tree(&mut tree, &train, &cfg.neural, seed)?;
    let eval = evaluate(&tree, &test)?;
    let mut rows = vec![FoldRow::new(fold, TREE, &eval.metrics)];

    if baselines.root_only {
        let all: Vec<&Video> = train.videos.iter().collect();
        let params = train_flat(&all, &cfg.neural, node_seed(seed, 0))?;
        let m = score_flat(&test, |v| Ok(predict_flat(&params, &v.sequence)?.labels))?;
        rows.push(FoldRow::new(fold, ROOT_ONLY, &m));
    }
    if baselines.sep {
        let model = train_sep(&train, cfg, seed)?;
        let m = score_flat(&test, |v| predict_sep(&model, &test, v))?;
        rows.push(FoldRow::new(fold, SEP, &m));
    }
    Ok(FoldResult {
        fold,
        test_users: folds[fold].clone(),
        tree_nodes: tree.len(),
        levels: eval.levels,
        rows,
    })
}

/// Runs every fold (concurrently, merged in fold order) and averages.
pub fn kfold_benchmark(data: &Dataset, k: usize, cfg: &Config, baselines: Baselines) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let users: Vec<String> = data.labeled_users().into_iter().map(|u| u.point.user_id).collect();
    let folds = user_folds(&users, k, cfg.seed)?;
    let results: Vec<FoldResult> = (0..k)
        .into_par_iter()
        .map(|f| run_fold(data, &folds, f, cfg, baselines))
        .collect::<Result<_>>()?;

    let mut means = Vec::new();
    for model in [TREE, ROOT_ONLY, SEP] {
        let rows: Vec<&FoldRow> = results.iter().flat_map(|f| &f.rows).filter(|r| r.model == model).collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&FoldRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        means.push(MeanRow {
            model: model.to_string(),
            pc: avg(|r| r.pc),
            rc_plus: avg(|r| r.rc_plus),
            rc_minus: avg(|r| r.rc_minus),
            f1: avg(|r| r.f1),
            accuracy: avg(|r| r.accuracy),
            video_accuracy: avg(|r| r.video_accuracy),
        });
    }
    Ok(BenchmarkReport { folds: results, means })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn folds_partition_the_users() {
        let users: Vec<String> = (0..23).map(|i| format!("u{i}")).collect();
        let folds = user_folds(&users, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = HashSet::new();
        for f in &folds {
            assert!(f.len() == 4 || f.len() == 5);
            for u in f {
                assert!(seen.insert(u.clone()));
            }
        }
        assert_eq!(seen.len(), 23);
        assert_eq!(user_folds(&users, 5, 3).unwrap(), folds);
    }

    #[test]
    fn degenerate_fold_counts_are_rejected() {
        let users: Vec<String> = (0..3).map(|i| format!("u{i}")).collect();
        assert!(matches!(user_folds(&users, 1, 0), Err(PipelineError::InvalidFolds { k: 1, .. })));
        assert!(matches!(user_folds(&users, 4, 0), Err(PipelineError::InvalidFolds { k: 4, .. })));
    }
}
