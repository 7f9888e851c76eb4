use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{labelled_count, loss_and_grad, FeatureSequence, NeuralConfig, NeuralError, Optimizer, Result, SubmodelParams};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const DROPOUT_STREAM: u64 = 0x5eed_d70f;

/// One video seen by a node during training.
#[derive(Debug, Clone)]
pub struct TrainingSample<'a> {
    pub sequence: &'a FeatureSequence,
    /// Knowledge core fed alongside the features (`hidden x g`).
    pub knowledge: Array2<f64>,
    /// Input dropout rate; 0 for the node's own users.
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: SubmodelParams,
    /// Mean masked cross-entropy at the start of every epoch.
    pub losses: Vec<f64>,
}

fn dropped_features<R: Rng>(seq: &FeatureSequence, rate: f64, rng: &mut R) -> [Array2<f64>; 3] {
    let keep = 1.0 - rate;
    std::array::from_fn(|i| {
        seq.features[i].mapv(|v| if rng.random_bool(keep) { v / keep } else { 0.0 })
    })
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(params: &SubmodelParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut SubmodelParams, grad: &SubmodelParams, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grad.tensors()).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Trains a fresh submodel on the given samples by full-batch gradient
/// steps on the mean cross-entropy of its head over labelled utterances.
///
/// Samples with a positive dropout rate get every modality feature zeroed
/// independently with that probability each epoch (kept entries are scaled
/// by `1 / (1 - rate)`). With all rates at zero no random draws are made.
pub fn train_submodel(samples: &[TrainingSample<'_>], cfg: &NeuralConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = samples.first().ok_or(NeuralError::NoLabels)?;
    let dims = first.sequence.dims();
    let total: usize = samples.iter().map(|s| labelled_count(s.sequence)).sum();
    if total == 0 {
        return Err(NeuralError::NoLabels);
    }
    for s in samples {
        if !(0.0..1.0).contains(&s.dropout) {
            return Err(NeuralError::InvalidConfig(format!("dropout rate {} outside [0, 1)", s.dropout)));
        }
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = SubmodelParams::random(dims, cfg.hidden, cfg.init_scale, &mut init_rng);
    for s in samples {
        params.check_input(s.sequence, s.knowledge.view())?;
    }
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM);
    let mut adam = matches!(cfg.optimizer, Optimizer::Adam).then(|| Adam::new(&params));
    let normalizer = total as f64;
    let mut losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let inputs: Vec<Option<[Array2<f64>; 3]>> = samples
            .iter()
            .map(|s| (s.dropout > 0.0).then(|| dropped_features(s.sequence, s.dropout, &mut dropout_rng)))
            .collect();
        let parts: Vec<(f64, SubmodelParams)> = samples
            .par_iter()
            .zip(inputs.par_iter())
            .map(|(s, dropped)| {
                let features = dropped.as_ref().unwrap_or(&s.sequence.features);
                loss_and_grad(&params, features, s.sequence, s.knowledge.view(), normalizer)
            })
            .collect::<Result<_>>()?;

        let mut loss = 0.0;
        let mut grad = SubmodelParams::zeros(dims, cfg.hidden);
        for (l, g) in &parts {
            loss += l;
            grad.add_assign(g);
        }
        losses.push(loss / normalizer);

        match adam.as_mut() {
            Some(adam) => adam.update(&mut params, &grad, cfg.learning_rate),
            None => {
                for (p, g) in params.tensors_mut().into_iter().zip(grad.tensors()) {
                    p.iter_mut().zip(g).for_each(|(x, d)| *x -= cfg.learning_rate * d);
                }
            }
        }
    }
    Ok(TrainOutcome { params, losses })
}

/// Agreement between backpropagated and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    /// Largest `|a - n| / max(|a|, |n|, floor)` over all parameters.
    pub max_relative: f64,
    pub max_absolute: f64,
    pub parameters: usize,
}

const RELATIVE_FLOOR: f64 = 1e-6;

fn mean_loss(params: &SubmodelParams, seq: &FeatureSequence, knowledge: ArrayView2<f64>, n: f64) -> Result<f64> {
    loss_and_grad(params, &seq.features, seq, knowledge, n).map(|(l, _)| l / n)
}

pub fn gradient_check(params: &SubmodelParams, seq: &FeatureSequence, knowledge: ArrayView2<f64>) -> Result<GradientReport> {
    gradient_check_with_step(params, seq, knowledge, 1e-5)
}

/// Compares the analytic gradient of the mean labelled cross-entropy of one
/// sample against central finite differences with the given step.
pub fn gradient_check_with_step(
    params: &SubmodelParams,
    seq: &FeatureSequence,
    knowledge: ArrayView2<f64>,
    step: f64,
) -> Result<GradientReport> {
    params.check_input(seq, knowledge)?;
    let n = labelled_count(seq) as f64;
    if n == 0.0 {
        return Err(NeuralError::NoLabels);
    }
    let (_, analytic) = loss_and_grad(params, &seq.features, seq, knowledge, n)?;
    let analytic: Vec<f64> = analytic.tensors().into_iter().flatten().copied().collect();

    let mut probe = params.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    let sizes: Vec<usize> = probe.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let original = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = original + step;
            let up = mean_loss(&probe, seq, knowledge, n)?;
            probe.tensors_mut()[ti][i] = original - step;
            let down = mean_loss(&probe, seq, knowledge, n)?;
            probe.tensors_mut()[ti][i] = original;
            numeric.push((up - down) / (2.0 * step));
        }
    }

    let mut report = GradientReport {
        max_relative: 0.0,
        max_absolute: 0.0,
        parameters: analytic.len(),
    };
    for (a, n) in analytic.iter().zip(&numeric) {
        let diff = (a - n).abs();
        let scale = a.abs().max(n.abs()).max(RELATIVE_FLOOR);
        report.max_absolute = report.max_absolute.max(diff);
        report.max_relative = report.max_relative.max(diff / scale);
    }
    Ok(report)
}
