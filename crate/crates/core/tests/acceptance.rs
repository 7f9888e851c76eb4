//! Acceptance run. Every criterion prints one PASS/FAIL line; the test
//! fails if any criterion does. Criteria run one after another so the
//! runtime limits are measured without contention. Set
//! `ACCEPTANCE_CRITERIA` to a comma-separated list to run a subset.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cogtree::cogspace::{distance, CueSet, SpaceConfig, SurrogatePoint};
use cogtree::neural::{
    gradient_check, predict_head, submodel_forward, zero_knowledge, FeatureSequence, NeuralConfig, Optimizer,
    SubmodelParams,
};
use cogtree::partition::{
    davies_bouldin, disjunction, heterogeneity, impurity, kmeans_fragment, recuperation, select_cluster_count,
    silhouette, theoretical_fragment, unity, LabeledUser, PartitionConfig,
};
use cogtree::pipeline::{
    kfold_benchmark, partition_quality, predict, synth, trace, train_tree, Baselines, Config, SynthSpec,
};
use cogtree::pipeline::bench::{ROOT_ONLY, TREE};
use cogtree::tree::{self, build, dropout_ratio, AdaptiveTree, BuildConfig, Strategy, TreeConfig};

// pinned tolerances and limits
const TRIANGLE_SLACK: f64 = 1e-12;
const EUCLID_TOL: f64 = 1e-12;
const FUNCTIONAL_TOL: f64 = 1e-10;
const KMEANS_OPT_TOL: f64 = 1e-9;
const KMEANS_OPT_SHARE: f64 = 0.90;
const GRAD_TOL: f64 = 1e-4;
const ACCURACY_MARGIN: f64 = 0.05;
const RISING_FOLDS: usize = 4;
const E2E_SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed < Duration::from_secs(secs)
}

// ---------------------------------------------------------------------------

fn pseudo_metric() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_triangle = f64::NEG_INFINITY;
    let mut worst_euclid = 0.0f64;
    let mut problems = Vec::new();
    for i in 0..10_000 {
        let dim = if i % 2 == 0 { 1 } else { 5 };
        let r = [1, 2, 3][i % 3];
        let cfg = SpaceConfig::new(r).unwrap();
        let pts = common::random_points(&mut rng, 3, dim);
        let d = |a: &SurrogatePoint, b: &SurrogatePoint| distance(a, b, &cfg).unwrap();
        let (ab, ba, bc, ac) = (d(&pts[0], &pts[1]), d(&pts[1], &pts[0]), d(&pts[1], &pts[2]), d(&pts[0], &pts[2]));
        if ab < 0.0 || bc < 0.0 || ac < 0.0 {
            problems.push(format!("negative distance in triple {i}"));
        }
        if ab.to_bits() != ba.to_bits() {
            problems.push(format!("asymmetric distance in triple {i}"));
        }
        worst_triangle = worst_triangle.max(ac - (ab + bc));
        let twin = SurrogatePoint::new("twin", pts[0].coords.clone());
        if d(&pts[0], &twin) != 0.0 {
            problems.push(format!("distinct users with equal cues at nonzero distance in triple {i}"));
        }
        if r == 2 {
            worst_euclid = worst_euclid.max((ab - common::euclid(&pts[0].coords, &pts[1].coords)).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = problems.is_empty() && worst_triangle <= TRIANGLE_SLACK && worst_euclid <= EUCLID_TOL && within(elapsed, 5);
    outcome(
        pass,
        format!(
            "10000 triples, worst triangle excess {worst_triangle:.2e} (<= {TRIANGLE_SLACK:e}), euclid gap {worst_euclid:.2e} (<= {EUCLID_TOL:e}), {} violations, {:.2}s (< 5s)",
            problems.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn functional_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let pcfg = PartitionConfig::default();
    let mut worst: Vec<(&str, f64)> = ["unity", "disjunction", "recuperation", "impurity", "heterogeneity", "silhouette", "davies-bouldin"]
        .into_iter()
        .map(|n| (n, 0.0))
        .collect();
    let mut bump = |name: &str, got: f64, want: f64| {
        let err = (got - want).abs() / want.abs().max(1.0);
        let slot = worst.iter_mut().find(|(n, _)| *n == name).unwrap();
        slot.1 = slot.1.max(if err.is_nan() { f64::INFINITY } else { err });
    };
    for _ in 0..200 {
        let n = rng.random_range(2..=30);
        let dim = rng.random_range(1..=5);
        let r = rng.random_range(1..=3);
        let cfg = SpaceConfig::new(r).unwrap();
        let pts = common::random_points(&mut rng, n, dim);
        let k = rng.random_range(2..=n.min(4));
        let splits = common::random_splits(&mut rng, pts.clone(), k);

        bump("unity", unity(&pts, &cfg).unwrap(), common::unity(&pts, r));
        bump(
            "disjunction",
            disjunction(&splits[0].points, &splits[1].points, &cfg).unwrap(),
            common::disjunction(&splits[0].points, &splits[1].points, r),
        );
        bump("recuperation", recuperation(&splits, &cfg, &pcfg).unwrap(), common::recuperation(&splits, r));
        for s in &splits {
            let flat: Vec<_> = s.labels.iter().flatten().copied().collect();
            bump("impurity", impurity(s).unwrap(), common::impurity(&flat));
        }
        for cue in 0..dim {
            bump("heterogeneity", heterogeneity(&pts, cue, &cfg).unwrap(), common::heterogeneity(&pts, cue, r));
        }
        bump("silhouette", silhouette(&splits, &cfg).unwrap(), common::silhouette(&splits, r));
        bump("davies-bouldin", davies_bouldin(&splits, &cfg).unwrap(), common::davies_bouldin(&splits, r));
    }
    let elapsed = start.elapsed();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let pass = max <= FUNCTIONAL_TOL && within(elapsed, 30);
    let parts: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(
        pass,
        format!("200 instances, worst error {} (<= {FUNCTIONAL_TOL:e}), {:.2}s (< 30s)", parts.join(", "), elapsed.as_secs_f64()),
    )
}

fn ids(users: &[LabeledUser]) -> Vec<String> {
    users.iter().map(|u| u.point.user_id.clone()).collect()
}

/// Non-empty parts whose union is exactly `whole`, pairwise disjoint.
fn is_partition(whole: &[String], parts: &[Vec<String>]) -> bool {
    let mut seen = BTreeSet::new();
    for p in parts {
        if p.is_empty() {
            return false;
        }
        for id in p {
            if !seen.insert(id.clone()) {
                return false;
            }
        }
    }
    seen == whole.iter().cloned().collect()
}

fn random_build_config<R: Rng>(rng: &mut R, strategy: Strategy) -> BuildConfig {
    BuildConfig {
        space: SpaceConfig::new(rng.random_range(1..=3)).unwrap(),
        partition: PartitionConfig::default(),
        tree: TreeConfig {
            theta_p: rng.random_range(0.1..2.0),
            theta_e: rng.random_range(0.0..1.0),
            theta_a: rng.random_range(1..=60),
            theta_b: rng.random_range(1..=10),
            strategy,
            ..Default::default()
        },
    }
}

fn tree_is_partitioned(tree: &AdaptiveTree) -> bool {
    let nodes_ok = tree.nodes.iter().filter(|n| !n.is_leaf()).all(|n| {
        let parts: Vec<Vec<String>> = n.children.iter().map(|&c| ids(&tree.nodes[c].members)).collect();
        is_partition(&ids(&n.members), &parts)
    });
    let leaves: Vec<Vec<String>> = tree.leaves.iter().map(|&l| ids(&tree.nodes[l].members)).collect();
    nodes_ok && is_partition(&ids(&tree.root().members), &leaves)
}

fn fragmentation_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cues = CueSet::big_five();
    let mut bad_trees = 0;
    let mut bad_fragments = 0;
    let mut fragments = 0;
    let mut total_nodes = 0;
    for b in 0..500 {
        let strategy = if b % 2 == 0 { Strategy::Cluster } else { Strategy::Theoretical };
        let n = rng.random_range(2..=40);
        let blobs = rng.random_range(1..=4);
        let spread = rng.random_range(0.05..0.6);
        let users = common::random_users(&mut rng, n, 5, blobs, spread);
        let cfg = random_build_config(&mut rng, strategy);
        let tree = build(&users, &cues, &cfg, b).unwrap();
        total_nodes += tree.len();
        if !tree_is_partitioned(&tree) {
            bad_trees += 1;
        }
        let whole = ids(&users);
        let direct = match strategy {
            Strategy::Theoretical => theoretical_fragment(&users, &cfg.space, &cfg.partition).ok(),
            Strategy::Cluster => select_cluster_count(&users, &cfg.space, &cfg.partition, b).ok().map(|(o, _)| o.result),
        };
        if let Some(h) = direct {
            fragments += 1;
            let parts: Vec<Vec<String>> = h.splits.iter().map(|s| s.points.iter().map(|p| p.user_id.clone()).collect()).collect();
            if parts.len() < 2 || !is_partition(&whole, &parts) {
                bad_fragments += 1;
            }
        }
    }

    // threshold sweeps on fixed data
    let mut sweeps = 0;
    let mut broken_sweeps = Vec::new();
    for s in 0..10u64 {
        let users = common::random_users(&mut rng, 36, 5, 3, 0.3);
        for strategy in [Strategy::Cluster, Strategy::Theoretical] {
            for which in ["theta_a", "theta_e"] {
                let mut last = usize::MAX;
                for step in 0..20 {
                    let mut tcfg = TreeConfig {
                        theta_p: 10.0,
                        theta_e: 0.0,
                        theta_a: 1,
                        strategy,
                        ..Default::default()
                    };
                    match which {
                        "theta_a" => tcfg.theta_a = 1 + 6 * step,
                        _ => tcfg.theta_e = step as f64 / 19.0,
                    }
                    let cfg = BuildConfig {
                        tree: tcfg,
                        ..Default::default()
                    };
                    let count = build(&users, &cues, &cfg, s).unwrap().len();
                    if count > last {
                        broken_sweeps.push(format!("{which}/{strategy}/data {s} step {step}"));
                        break;
                    }
                    last = count;
                }
                sweeps += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = bad_trees == 0 && bad_fragments == 0 && broken_sweeps.is_empty();
    outcome(
        pass,
        format!(
            "500 builds ({total_nodes} nodes), {bad_trees} trees break the leaf partition, {bad_fragments}/{fragments} direct fragmentations break a clause, {}/{sweeps} 20-step sweeps non-monotone {:?}, {:.1}s",
            broken_sweeps.len(),
            broken_sweeps,
            elapsed.as_secs_f64()
        ),
    )
}

fn kmeans_quality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut rising = 0;
    let mut optimal = 0;
    let mut gaps = Vec::new();
    for trial in 0..100u64 {
        let n = rng.random_range(3..=8);
        let k = rng.random_range(2..=n.min(4));
        let r = rng.random_range(1..=3);
        let cfg = SpaceConfig::new(r).unwrap();
        let dim = rng.random_range(1..=5);
        let users = common::random_users(&mut rng, n, dim, 3, 0.5);
        let out = kmeans_fragment(&users, k, &cfg, trial).unwrap();
        if out.history.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            rising += 1;
        }
        let pts: Vec<SurrogatePoint> = users.iter().map(|u| u.point.clone()).collect();
        let best = common::exhaustive_kmedoids(&pts, k, r);
        let gap = out.objective - best;
        if gap.abs() <= KMEANS_OPT_TOL {
            optimal += 1;
        } else {
            gaps.push(format!("trial {trial}: n={n} k={k} local optimum +{gap:.3}"));
        }
    }
    let share = optimal as f64 / 100.0;
    let pass = rising == 0 && share >= KMEANS_OPT_SHARE;
    outcome(
        pass,
        format!(
            "100 trials, {rising} with a rising objective, {optimal}/100 within {KMEANS_OPT_TOL:e} of the exhaustive optimum (>= {:.0}%){}{}",
            KMEANS_OPT_SHARE * 100.0,
            if gaps.is_empty() { "" } else { "; " },
            gaps.join("; ")
        ),
    )
}

fn random_sequence<R: Rng>(rng: &mut R, dims: [usize; 3], g: usize) -> FeatureSequence {
    let mut mask: Vec<bool> = (0..g).map(|_| rng.random_bool(0.75)).collect();
    mask[rng.random_range(0..g)] = true;
    let labels = mask
        .iter()
        .map(|&m| m.then(|| common::random_labels(rng, 1)[0]))
        .collect();
    FeatureSequence {
        features: std::array::from_fn(|i| Array2::from_shape_fn((dims[i], g), |_| rng.random_range(-1.0..1.0))),
        mask,
        labels,
    }
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    let mut params_total = 0;
    for _ in 0..20 {
        let hidden = rng.random_range(1..=8);
        let g = rng.random_range(1..=4);
        let dims = [rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=6)];
        let params = SubmodelParams::random(dims, hidden, 0.5, &mut rng);
        let seq = random_sequence(&mut rng, dims, g);
        let knowledge = Array2::from_shape_fn((hidden, g), |_| rng.random_range(-0.9..0.9));
        let report = gradient_check(&params, &seq, knowledge.view()).unwrap();
        worst = worst.max(report.max_relative);
        params_total += report.parameters;
    }
    let elapsed = start.elapsed();
    outcome(
        worst < GRAD_TOL && within(elapsed, 60),
        format!(
            "20 configurations ({params_total} parameters), worst relative error {worst:.2e} (< {GRAD_TOL:e}), {:.2}s (< 60s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn dropout_and_borrowing() -> Outcome {
    let unit = TreeConfig {
        lambda_dropout: 1.0,
        max_dropout: 0.9,
        ..Default::default()
    };
    let hand = dropout_ratio(0.2, 0.5, &unit);
    let clamped = dropout_ratio(2.0, 0.5, &unit);
    let arithmetic = (hand - 0.4).abs() < 1e-15 && clamped == 0.9;

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let cues = CueSet::big_five();
    let mut violations = 0;
    let mut active = 0;
    for t in 0..200u64 {
        let strategy = if t % 2 == 0 { Strategy::Cluster } else { Strategy::Theoretical };
        let n = rng.random_range(4..=40);
        let blobs = rng.random_range(1..=4);
        let users = common::random_users(&mut rng, n, 5, blobs, 0.3);
        let mut cfg = random_build_config(&mut rng, strategy);
        cfg.tree.theta_a = rng.random_range(1..=15);
        cfg.tree.lambda_dropout = rng.random_range(0.05..3.0);
        let tree = build(&users, &cues, &cfg, t).unwrap();
        for node in &tree.nodes {
            if node.members.len() >= cfg.tree.theta_b && !node.adopted.is_empty() {
                violations += 1;
            }
            if node.adopted.iter().any(|a| !(0.0..=cfg.tree.max_dropout).contains(&a.dropout)) {
                violations += 1;
            }
            if !node.adopted.is_empty() {
                active += 1;
            }
        }
    }
    outcome(
        arithmetic && violations == 0 && active > 0,
        format!(
            "ratio 0.2/0.5*1 = {hand}, clamp gives {clamped}; 200 trees, {active} borrowing nodes, {violations} violations"
        ),
    )
}

fn small_neural() -> NeuralConfig {
    NeuralConfig {
        hidden: 3,
        epochs: 4,
        ..Default::default()
    }
}

fn stack_discipline() -> Outcome {
    let spec = SynthSpec {
        users: 40,
        utterances: 6,
        length_jitter: 2,
        dims: [2, 2, 2],
        seed: 70,
        ..Default::default()
    };
    let data = synth(&spec).unwrap().dataset;
    let cfg = BuildConfig {
        tree: TreeConfig {
            theta_a: 4,
            theta_e: 0.0,
            theta_p: 10.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut tree = build(&data.labeled_users(), &data.cues, &cfg, 7).unwrap();
    train_tree(&mut tree, &data, &small_neural(), 7).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut mismatches = 0;
    let mut longest = 0;
    for i in 0..1000 {
        let user = SurrogatePoint::new(format!("probe{i}"), (0..5).map(|_| rng.random::<f64>()).collect());
        let video = &data.videos[rng.random_range(0..data.videos.len())];
        let t = trace(&tree, &video.sequence, &user).unwrap();
        let mut reversed = t.route.clone();
        reversed.reverse();
        if t.executed != reversed || t.outputs.len() != t.route.len() {
            mismatches += 1;
        }
        longest = longest.max(t.route.len());
    }

    let single_cfg = BuildConfig {
        tree: TreeConfig {
            theta_a: usize::MAX,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut single = build(&data.labeled_users(), &data.cues, &single_cfg, 7).unwrap();
    train_tree(&mut single, &data, &small_neural(), 7).unwrap();
    let params = single.root().submodel.clone().unwrap();
    let mut bit_equal = single.len() == 1;
    for v in &data.videos {
        let point = data.user(&v.user_id).unwrap();
        let via_tree = predict(&single, &v.sequence, point).unwrap();
        let out = submodel_forward(&params, &v.sequence, zero_knowledge(params.hidden(), v.sequence.len()).view()).unwrap();
        let direct = predict_head(&out, &params.head, &v.sequence.mask).unwrap();
        let same = via_tree.utterances.labels == direct.labels
            && via_tree.utterances.probabilities.iter().zip(&direct.probabilities).all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits(),
                (None, None) => true,
                _ => false,
            });
        bit_equal &= same;
    }
    outcome(
        mismatches == 0 && bit_equal && longest > 1,
        format!(
            "1000 probes over a {}-node tree (routes up to {longest} nodes), {mismatches} executions differ from the reversed route; single-node tree bit-identical to direct inference: {bit_equal}",
            tree.len()
        ),
    )
}

fn end_to_end_config() -> Config {
    Config {
        seed: E2E_SEED,
        neural: NeuralConfig {
            hidden: 16,
            epochs: 200,
            learning_rate: 0.01,
            init_scale: 0.5,
            optimizer: Optimizer::Adam,
        },
        ..Default::default()
    }
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let data = synth(&SynthSpec::default()).unwrap().dataset;
    let cfg = end_to_end_config();
    let report = kfold_benchmark(
        &data,
        5,
        &cfg,
        Baselines {
            root_only: true,
            sep: false,
        },
    )
    .unwrap();
    let tree = report.mean(TREE).unwrap().accuracy;
    let root = report.mean(ROOT_ONLY).unwrap().accuracy;
    let rising = report.folds.iter().filter(|f| f.f1_rises_to_root()).count();
    let pooled_rising = report.folds.iter().filter(|f| f.pooled_f1_rises_to_root()).count();
    let levels: Vec<String> = report
        .folds
        .iter()
        .map(|f| {
            let per: Vec<String> = f.levels.iter().map(|l| format!("{:.3}/{:.3}", l.mean_f1, l.f1)).collect();
            format!("[{}]", per.join(" "))
        })
        .collect();
    let elapsed = start.elapsed();
    let pass = tree - root >= ACCURACY_MARGIN && rising >= RISING_FOLDS && within(elapsed, 600);
    outcome(
        pass,
        format!(
            "tree accuracy {tree:.3} vs root-only {root:.3} (margin >= {ACCURACY_MARGIN}), level mean/pooled F1 root-first {}, mean F1 rising in {rising}/5 folds (>= {RISING_FOLDS}; pooled F1 rises in {pooled_rising}/5), {:.0}s (< 600s)",
            levels.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn intrinsic_comparison() -> Outcome {
    let data = synth(&SynthSpec::default()).unwrap().dataset;
    let users = data.labeled_users();
    let quality = |strategy: Strategy| {
        let cfg = BuildConfig {
            tree: TreeConfig {
                strategy,
                ..Default::default()
            },
            ..Default::default()
        };
        partition_quality(&build(&users, &data.cues, &cfg, E2E_SEED).unwrap()).unwrap()
    };
    let cluster = quality(Strategy::Cluster);
    let theory = quality(Strategy::Theoretical);
    let mut compared = Vec::new();
    let mut pass = true;
    for (c, t) in cluster.iter().zip(&theory) {
        if let (Some(a), Some(b)) = (c.silhouette, t.silhouette) {
            compared.push(format!("depth {} {a:.3} vs {b:.3}", c.depth));
            pass &= a >= b;
        }
    }
    outcome(
        pass && !compared.is_empty(),
        format!("cluster vs theoretical silhouette: {}", compared.join(", ")),
    )
}

fn bits(t: &AdaptiveTree) -> Vec<u64> {
    t.nodes
        .iter()
        .filter_map(|n| n.submodel.as_ref())
        .flat_map(|p| p.tensors().into_iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

fn determinism_and_persistence() -> Outcome {
    let spec = SynthSpec {
        users: 24,
        utterances: 6,
        length_jitter: 2,
        dims: [2, 2, 2],
        seed: 5,
        ..Default::default()
    };
    let mut cfg = Config {
        seed: 3,
        neural: small_neural(),
        ..Default::default()
    };
    cfg.tree.theta_a = 10;
    let run = || {
        let data = synth(&spec).unwrap().dataset;
        kfold_benchmark(&data, 3, &cfg, Baselines::default()).unwrap()
    };
    let same_report = run() == run();

    let data = synth(&spec).unwrap().dataset;
    let mut tree = build(&data.labeled_users(), &data.cues, &cfg.build(), cfg.seed).unwrap();
    train_tree(&mut tree, &data, &cfg.neural, cfg.seed).unwrap();
    let bytes = tree::serialize(&tree);
    let back = tree::deserialize(&bytes).unwrap();
    let exact = back == tree && bits(&back) == bits(&tree) && tree::serialize(&back) == bytes;
    outcome(
        same_report && exact,
        format!(
            "repeat benchmark identical: {same_report}; {}-node trained tree ({} weights) round-trips bit-exactly: {exact}",
            tree.len(),
            bits(&tree).len()
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("pseudo-metric axioms", pseudo_metric),
        ("functionals match brute-force oracles", functional_oracles),
        ("fragmentation invariants and threshold monotonicity", fragmentation_invariants),
        ("k-medoids descent and optimality", kmeans_quality),
        ("submodel gradient check", gradient_checks),
        ("dropout ratio and borrowing floor", dropout_and_borrowing),
        ("bottom-up execution order", stack_discipline),
        ("synthetic five-fold benchmark", end_to_end),
        ("cluster vs theoretical silhouette", intrinsic_comparison),
        ("determinism and persistence", determinism_and_persistence),
    ];
    // ACCEPTANCE_CRITERIA=4,9 runs a subset
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let o = run();
        println!("{} criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
