//! Attention fusion over timesteps.
//!
//! The three modality embeddings and the knowledge core are stacked into one
//! `4·hidden x g` matrix. Each unmasked timestep receives a score, the
//! softmax of the scores weights a single context vector, and every output
//! column combines that context with its own stacked column.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Score projection `W_b`, `hidden x 4·hidden`.
    pub score: Array2<f64>,
    /// Score vector `ω_b`.
    pub omega: Array1<f64>,
    /// Context projection `W_h`, `hidden x 4·hidden`.
    pub context: Array2<f64>,
    /// Per-step projection `U_h`, `hidden x 4·hidden`.
    pub step: Array2<f64>,
}

impl AttentionParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            score: Array2::zeros((hidden, 4 * hidden)),
            omega: Array1::zeros(hidden),
            context: Array2::zeros((hidden, 4 * hidden)),
            step: Array2::zeros((hidden, 4 * hidden)),
        }
    }

    pub fn random<R: Rng>(hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-scale..=scale));
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.omega.len()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.score.as_slice().expect("standard layout"),
            self.omega.as_slice().expect("standard layout"),
            self.context.as_slice().expect("standard layout"),
            self.step.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.score.as_slice_mut().expect("standard layout"),
            self.omega.as_slice_mut().expect("standard layout"),
            self.context.as_slice_mut().expect("standard layout"),
            self.step.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Softmax over the positions where `mask` is true; masked positions get 0.
/// Returns `None` when every position is masked.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Option<Vec<f64>> {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let exp: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exp.iter().sum();
    Some(exp.into_iter().map(|e| e / total).collect())
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    stacked: Array2<f64>,
    activations: Array2<f64>,
    pub weights: Vec<f64>,
    context: Array1<f64>,
    output: Array2<f64>,
    mask: Vec<bool>,
}

/// Stacks the four `hidden x g` inputs along the feature axis.
pub fn stack(parts: [ArrayView2<f64>; 4]) -> Array2<f64> {
    concatenate(Axis(0), &parts).expect("matching shapes")
}

/// Returns `None` when all timesteps are masked.
pub fn forward(params: &AttentionParams, stacked: Array2<f64>, mask: &[bool]) -> Option<(Array2<f64>, AttentionCache)> {
    let activations = params.score.dot(&stacked).mapv(f64::tanh);
    let scores = params.omega.dot(&activations);
    let weights = masked_softmax(scores.as_slice().expect("contiguous"), mask)?;
    let alpha = Array1::from(weights.clone());
    let context = stacked.dot(&alpha);
    let shared = params.context.dot(&context);
    let mut output = params.step.dot(&stacked);
    output += &shared.view().insert_axis(Axis(1));
    output.mapv_inplace(f64::tanh);
    for (t, &m) in mask.iter().enumerate() {
        if !m {
            output.column_mut(t).fill(0.0);
        }
    }
    let cache = AttentionCache {
        stacked,
        activations,
        weights,
        context,
        output: output.clone(),
        mask: mask.to_vec(),
    };
    Some((output, cache))
}

/// Accumulates parameter gradients and returns the gradient with respect to
/// the stacked input.
pub fn backward(params: &AttentionParams, cache: &AttentionCache, d_out: &Array2<f64>, grad: &mut AttentionParams) -> Array2<f64> {
    let mut dz = d_out * &cache.output.mapv(|v| 1.0 - v * v);
    for (t, &m) in cache.mask.iter().enumerate() {
        if !m {
            dz.column_mut(t).fill(0.0);
        }
    }
    let d_shared = dz.sum_axis(Axis(1));
    grad.step += &dz.dot(&cache.stacked.t());
    let mut d_stacked = params.step.t().dot(&dz);

    grad.context += &outer(&d_shared, &cache.context);
    let d_context = params.context.t().dot(&d_shared);

    let alpha = Array1::from(cache.weights.clone());
    let d_alpha = cache.stacked.t().dot(&d_context);
    d_stacked += &outer(&d_context, &alpha);

    let mean = alpha.dot(&d_alpha);
    let d_scores = &alpha * &(&d_alpha - mean);
    grad.omega += &cache.activations.dot(&d_scores);
    let d_act = outer(&params.omega, &d_scores) * &cache.activations.mapv(|v| 1.0 - v * v);
    grad.score += &d_act.dot(&cache.stacked.t());
    d_stacked += &params.score.t().dot(&d_act);
    d_stacked
}

pub fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
}

/// Splits a stacked gradient back into its four `hidden`-row blocks.
pub fn unstack(stacked: &Array2<f64>, hidden: usize) -> [Array2<f64>; 4] {
    std::array::from_fn(|k| stacked.slice(s![k * hidden..(k + 1) * hidden, ..]).to_owned())
}
