use std::collections::BTreeSet;

use cogtree::neural::NeuralConfig;
use cogtree::partition::Sentiment;
use cogtree::pipeline::bench::{ROOT_ONLY, SEP, TREE};
use cogtree::pipeline::{kfold_benchmark, synth, Baselines, Config, Dataset, SynthSpec};

/// Utterance feature vectors (all modalities stacked) and +1/-1 labels.
fn utterances(data: &Dataset, users: &[usize]) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::new();
    for &u in users {
        let s = &data.videos[u].sequence;
        for t in 0..s.len() {
            let Some(label) = s.labels[t] else { continue };
            let x: Vec<f64> = s.features.iter().flat_map(|f| f.column(t).to_vec()).collect();
            out.push((x, if label == Sentiment::Positive { 1.0 } else { -1.0 }));
        }
    }
    out
}

/// Training accuracy of a homogeneous perceptron after at most `epochs` passes.
fn perceptron(samples: &[(Vec<f64>, f64)], epochs: usize) -> f64 {
    let dim = samples[0].0.len();
    let mut w = vec![0.0; dim];
    let score = |w: &[f64], x: &[f64]| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    for _ in 0..epochs {
        let mut mistakes = 0;
        for (x, y) in samples {
            if y * score(&w, x) <= 0.0 {
                w.iter_mut().zip(x).for_each(|(a, b)| *a += y * b);
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            break;
        }
    }
    let right = samples.iter().filter(|(x, y)| y * score(&w, x) > 0.0).count();
    right as f64 / samples.len() as f64
}

#[test]
fn noiseless_labels_are_linear_within_each_component_only() {
    let out = synth(&SynthSpec {
        users: 20,
        components: 2,
        label_noise: 0.0,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    for c in 0..2 {
        let members: Vec<usize> = (0..20).filter(|&u| out.component[u] == c).collect();
        assert_eq!(perceptron(&utterances(&out.dataset, &members), 5000), 1.0, "component {c}");
    }
    let everyone: Vec<usize> = (0..20).collect();
    assert!(perceptron(&utterances(&out.dataset, &everyone), 200) < 0.95);
}

#[test]
fn benchmark_folds_are_disjoint_and_rows_are_consistent() {
    let data = synth(&SynthSpec {
        users: 18,
        utterances: 6,
        length_jitter: 2,
        dims: [2, 2, 2],
        seed: 8,
        ..Default::default()
    })
    .unwrap()
    .dataset;
    let mut cfg = Config {
        seed: 2,
        neural: NeuralConfig {
            hidden: 3,
            epochs: 3,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.tree.theta_a = 8;
    let report = kfold_benchmark(&data, 3, &cfg, Baselines::default()).unwrap();

    let mut seen = BTreeSet::new();
    for f in &report.folds {
        for u in &f.test_users {
            assert!(seen.insert(u.clone()), "{u} tested twice");
        }
        let models: Vec<&str> = f.rows.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(models, [TREE, ROOT_ONLY, SEP]);
        for r in &f.rows {
            let total = (r.tp + r.fp + r.tn + r.fn_) as f64;
            assert!((r.accuracy - (r.tp + r.tn) as f64 / total).abs() <= 1e-12);
            assert!((0.0..=1.0).contains(&r.video_accuracy));
        }
    }
    assert_eq!(seen.len(), 18);
    assert_eq!(report.means.len(), 3);

    let tree_only = kfold_benchmark(
        &data,
        3,
        &cfg,
        Baselines {
            root_only: false,
            sep: false,
        },
    )
    .unwrap();
    assert_eq!(tree_only.means.len(), 1);
    assert_eq!(tree_only.means[0], report.means[0]);
}
