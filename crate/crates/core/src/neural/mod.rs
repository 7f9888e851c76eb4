//! Transfer-based submodels.
//!
//! A submodel runs one recurrent cell per modality, fuses the three
//! embeddings with the knowledge core through timestep attention, and runs a
//! multimodal cell over the fused sequence. Its output is both the node's
//! representation for the parent's knowledge core and the input of the
//! node's softmax head.

pub mod attention;
pub mod lstm;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::Sentiment;
pub use attention::AttentionParams;
pub use lstm::LstmParams;
pub use train::{gradient_check, gradient_check_with_step, train_submodel, GradientReport, TrainOutcome, TrainingSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch in {what}: expected {expected:?}, found {found:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("every timestep is masked")]
    AllMasked,
    #[error("no labelled utterances to train on")]
    NoLabels,
    #[error("no predictions to vote on")]
    EmptyVote,
    #[error("invalid neural config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Acoustic,
    Visual,
    Textual,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Acoustic, Modality::Visual, Modality::Textual];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Acoustic => "acoustic",
            Modality::Visual => "visual",
            Modality::Textual => "textual",
        }
    }
}

/// Padded per-video input: one `d_m x g` matrix per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub features: [Array2<f64>; 3],
    /// True where the column holds a real utterance.
    pub mask: Vec<bool>,
    /// Utterance labels; `None` on padding.
    pub labels: Vec<Option<Sentiment>>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn modality(&self, m: Modality) -> &Array2<f64> {
        &self.features[m.index()]
    }

    pub fn dims(&self) -> [usize; 3] {
        std::array::from_fn(|i| self.features[i].nrows())
    }

    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.mask.len();
        if self.labels.len() != g {
            return Err(NeuralError::Shape {
                what: "labels",
                expected: (1, g),
                found: (1, self.labels.len()),
            });
        }
        for f in &self.features {
            if f.ncols() != g {
                return Err(NeuralError::Shape {
                    what: "features",
                    expected: (f.nrows(), g),
                    found: f.dim(),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFinite("features"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `2 x hidden`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl HeadParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            weight: Array2::zeros((2, hidden)),
            bias: Array1::zeros(2),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// All weights of one node's submodel, including its softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmodelParams {
    pub unimodal: [LstmParams; 3],
    pub attention: AttentionParams,
    pub multimodal: LstmParams,
    pub head: HeadParams,
}

impl SubmodelParams {
    pub fn zeros(dims: [usize; 3], hidden: usize) -> Self {
        Self {
            unimodal: std::array::from_fn(|i| LstmParams::zeros(dims[i], hidden)),
            attention: AttentionParams::zeros(hidden),
            multimodal: LstmParams::zeros(hidden, hidden),
            head: HeadParams::zeros(hidden),
        }
    }

    /// Every weight drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng>(dims: [usize; 3], hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims, hidden);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-scale..=scale));
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.attention.hidden()
    }

    pub fn dims(&self) -> [usize; 3] {
        std::array::from_fn(|i| self.unimodal[i].input_dim())
    }

    /// Flat views of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for u in &self.unimodal {
            out.extend(u.tensors());
        }
        out.extend(self.attention.tensors());
        out.extend(self.multimodal.tensors());
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for u in &mut self.unimodal {
            out.extend(u.tensors_mut());
        }
        out.extend(self.attention.tensors_mut());
        out.extend(self.multimodal.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn add_assign(&mut self, other: &SubmodelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn check_input(&self, seq: &FeatureSequence, knowledge: ArrayView2<f64>) -> Result<()> {
        seq.validate()?;
        let g = seq.len();
        for (i, f) in seq.features.iter().enumerate() {
            let expected = (self.unimodal[i].input_dim(), g);
            if f.dim() != expected {
                return Err(NeuralError::Shape {
                    what: "features",
                    expected,
                    found: f.dim(),
                });
            }
        }
        let expected = (self.hidden(), g);
        if knowledge.dim() != expected {
            return Err(NeuralError::Shape {
                what: "knowledge core",
                expected,
                found: knowledge.dim(),
            });
        }
        if knowledge.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite("knowledge core"));
        }
        Ok(())
    }
}

/// Knowledge core for nodes without a contributing child.
pub fn zero_knowledge(hidden: usize, g: usize) -> Array2<f64> {
    Array2::zeros((hidden, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    GradientDescent,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralConfig {
    /// Embedding width shared by every cell.
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_scale: f64,
    pub optimizer: Optimizer,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 200,
            learning_rate: 0.5,
            init_scale: 0.5,
            optimizer: Optimizer::GradientDescent,
        }
    }
}

impl NeuralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(NeuralError::InvalidConfig("hidden width must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NeuralError::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(NeuralError::InvalidConfig("init scale must be non-negative".into()));
        }
        Ok(())
    }
}

struct ForwardCache {
    unimodal: [(Array2<f64>, lstm::LstmCache); 3],
    attention: attention::AttentionCache,
    fused: Array2<f64>,
    multimodal: lstm::LstmCache,
}

fn forward_cached(
    params: &SubmodelParams,
    features: &[Array2<f64>; 3],
    mask: &[bool],
    knowledge: ArrayView2<f64>,
) -> Result<(Array2<f64>, ForwardCache)> {
    let unimodal: [(Array2<f64>, lstm::LstmCache); 3] =
        std::array::from_fn(|i| lstm::forward(&params.unimodal[i], features[i].view(), mask));
    let stacked = attention::stack([unimodal[0].0.view(), unimodal[1].0.view(), unimodal[2].0.view(), knowledge]);
    let (fused, att_cache) = attention::forward(&params.attention, stacked, mask).ok_or(NeuralError::AllMasked)?;
    let (out, mm_cache) = lstm::forward(&params.multimodal, fused.view(), mask);
    Ok((
        out,
        ForwardCache {
            unimodal,
            attention: att_cache,
            fused,
            multimodal: mm_cache,
        },
    ))
}

/// Full submodel pass: the node's output sequence (`hidden x g`).
pub fn submodel_forward(params: &SubmodelParams, seq: &FeatureSequence, knowledge: ArrayView2<f64>) -> Result<Array2<f64>> {
    params.check_input(seq, knowledge)?;
    forward_cached(params, &seq.features, &seq.mask, knowledge).map(|(h, _)| h)
}

/// Attention weights the fusion layer assigns for this input.
pub fn attention_weights(params: &SubmodelParams, seq: &FeatureSequence, knowledge: ArrayView2<f64>) -> Result<Vec<f64>> {
    params.check_input(seq, knowledge)?;
    forward_cached(params, &seq.features, &seq.mask, knowledge).map(|(_, c)| c.attention.weights)
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let a = (logits[0] - m).exp();
    let b = (logits[1] - m).exp();
    [a / (a + b), b / (a + b)]
}

fn head_probabilities(head: &HeadParams, output: &Array2<f64>) -> Array2<f64> {
    let mut logits = head.weight.dot(output);
    logits += &head.bias.view().insert_axis(Axis(1));
    let mut probs = Array2::zeros(logits.raw_dim());
    for t in 0..logits.ncols() {
        let p = softmax2([logits[[0, t]], logits[[1, t]]]);
        probs[[0, t]] = p[0];
        probs[[1, t]] = p[1];
    }
    probs
}

/// Per-utterance prediction of a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPrediction {
    /// `None` on masked timesteps.
    pub labels: Vec<Option<Sentiment>>,
    /// `[P(negative), P(positive)]` per unmasked timestep.
    pub probabilities: Vec<Option<[f64; 2]>>,
}

/// Applies the softmax head to a submodel output. Exact probability ties
/// resolve to positive.
pub fn predict_head(output: &Array2<f64>, head: &HeadParams, mask: &[bool]) -> Result<HeadPrediction> {
    let expected = (head.weight.ncols(), mask.len());
    if output.dim() != expected {
        return Err(NeuralError::Shape {
            what: "head input",
            expected,
            found: output.dim(),
        });
    }
    let probs = head_probabilities(head, output);
    let mut labels = Vec::with_capacity(mask.len());
    let mut probabilities = Vec::with_capacity(mask.len());
    for (t, &m) in mask.iter().enumerate() {
        if m {
            let p = [probs[[0, t]], probs[[1, t]]];
            labels.push(Some(if p[1] >= p[0] { Sentiment::Positive } else { Sentiment::Negative }));
            probabilities.push(Some(p));
        } else {
            labels.push(None);
            probabilities.push(None);
        }
    }
    Ok(HeadPrediction { labels, probabilities })
}

/// Modal label over the unmasked predictions; an exact tie is positive.
pub fn majority_vote(labels: &[Option<Sentiment>]) -> Result<Sentiment> {
    let (mut pos, mut neg) = (0usize, 0usize);
    for l in labels.iter().flatten() {
        match l {
            Sentiment::Positive => pos += 1,
            Sentiment::Negative => neg += 1,
        }
    }
    if pos + neg == 0 {
        return Err(NeuralError::EmptyVote);
    }
    Ok(if pos >= neg { Sentiment::Positive } else { Sentiment::Negative })
}

/// Summed cross-entropy of the head over labelled timesteps, and the
/// gradient of `sum / normalizer` with respect to every parameter.
pub(crate) fn loss_and_grad(
    params: &SubmodelParams,
    features: &[Array2<f64>; 3],
    seq: &FeatureSequence,
    knowledge: ArrayView2<f64>,
    normalizer: f64,
) -> Result<(f64, SubmodelParams)> {
    let mask = &seq.mask;
    let (out, cache) = forward_cached(params, features, mask, knowledge)?;
    let probs = head_probabilities(&params.head, &out);

    let mut loss = 0.0;
    let mut d_logits = Array2::<f64>::zeros(probs.raw_dim());
    for (t, label) in seq.labels.iter().enumerate() {
        let Some(label) = label.filter(|_| mask[t]) else {
            continue;
        };
        let y = label.index();
        loss -= probs[[y, t]].max(f64::MIN_POSITIVE).ln();
        for k in 0..2 {
            let target = if k == y { 1.0 } else { 0.0 };
            d_logits[[k, t]] = (probs[[k, t]] - target) / normalizer;
        }
    }

    let mut grad = SubmodelParams::zeros(params.dims(), params.hidden());
    grad.head.weight += &d_logits.dot(&out.t());
    grad.head.bias += &d_logits.sum_axis(Axis(1));
    let d_out = params.head.weight.t().dot(&d_logits);

    let d_fused = lstm::backward(&params.multimodal, &cache.multimodal, cache.fused.view(), &d_out, &mut grad.multimodal);
    let d_stacked = attention::backward(&params.attention, &cache.attention, &d_fused, &mut grad.attention);
    let blocks = attention::unstack(&d_stacked, params.hidden());
    for i in 0..3 {
        let (_, c) = &cache.unimodal[i];
        lstm::backward(&params.unimodal[i], c, features[i].view(), &blocks[i], &mut grad.unimodal[i]);
    }
    Ok((loss, grad))
}

pub(crate) fn labelled_count(seq: &FeatureSequence) -> usize {
    seq.labels
        .iter()
        .zip(&seq.mask)
        .filter(|(l, &m)| m && l.is_some())
        .count()
}
