//! Seeded synthetic datasets whose sentiment depends on the user's cluster.
//!
//! Users are drawn from a Gaussian mixture over the cues. Each mixture
//! component owns a linear rule over the concatenated utterance features, and
//! the component rules are mutually orthogonal, so no single rule fits every
//! user while each cluster on its own is linearly separable.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Video};
use crate::cogspace::{CueSet, SurrogatePoint};
use crate::neural::FeatureSequence;
use crate::partition::Sentiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub users: usize,
    /// Mean utterances per video.
    pub utterances: usize,
    /// Video lengths vary uniformly by up to this much around the mean.
    pub length_jitter: usize,
    pub components: usize,
    /// Standard deviation of each component around its center.
    pub cue_spread: f64,
    /// Minimum distance between component centers.
    pub center_gap: f64,
    /// Probability that an utterance label is flipped.
    pub label_noise: f64,
    pub dims: [usize; 3],
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            users: 93,
            utterances: 24,
            length_jitter: 4,
            components: 3,
            cue_spread: 0.05,
            center_gap: 0.5,
            label_noise: 0.05,
            dims: [4, 4, 4],
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.users == 0 || self.utterances == 0 || self.components == 0 {
            return Err("users, utterances and components must be positive".into());
        }
        if self.length_jitter >= self.utterances {
            return Err("length jitter must be smaller than the mean length".into());
        }
        if self.dims.contains(&0) {
            return Err("every modality needs at least one feature".into());
        }
        if self.components > self.dims.iter().sum() {
            return Err("more components than feature dimensions leaves no orthogonal rules".into());
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(format!("label noise {} outside [0, 0.5)", self.label_noise));
        }
        if !(self.cue_spread.is_finite() && self.cue_spread >= 0.0) {
            return Err("cue spread must be non-negative".into());
        }
        if !(self.center_gap.is_finite() && self.center_gap >= 0.0) {
            return Err("center gap must be non-negative".into());
        }
        Ok(())
    }
}

/// Generated data plus the hidden structure behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// Mixture component of every user, in user order.
    pub component: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Unit label direction per component over the concatenated features.
    pub rules: Vec<Vec<f64>>,
}

fn draw_centers(rng: &mut ChaCha8Rng, count: usize, dim: usize, gap: f64) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut attempts = 0;
    while centers.len() < count {
        let c: Vec<f64> = (0..dim).map(|_| rng.random_range(0.15..0.85)).collect();
        attempts += 1;
        let far = centers
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= gap);
        // give up on the gap rather than loop forever on impossible requests
        if far || attempts > 10_000 {
            centers.push(c);
        }
    }
    centers
}

fn orthonormal_rules(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rules: Vec<Vec<f64>> = Vec::with_capacity(count);
    while rules.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for r in &rules {
            let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rules.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    rules
}

pub fn synth(spec: &SynthSpec) -> Result<SynthOutput, String> {
    spec.validate()?;
    let cues = CueSet::big_five();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width: usize = spec.dims.iter().sum();
    let centers = draw_centers(&mut rng, spec.components, cues.len(), spec.center_gap);
    let rules = orthonormal_rules(&mut rng, spec.components, width);
    let spread = Normal::new(0.0, spec.cue_spread).map_err(|e| e.to_string())?;

    let lo = spec.utterances - spec.length_jitter;
    let hi = spec.utterances + spec.length_jitter;
    let g = hi;
    let mut users = Vec::with_capacity(spec.users);
    let mut videos = Vec::with_capacity(spec.users);
    let mut component = Vec::with_capacity(spec.users);
    for i in 0..spec.users {
        let c = i % spec.components;
        let user_id = format!("u{i:03}");
        let coords = centers[c].iter().map(|&m| (m + spread.sample(&mut rng)).clamp(0.0, 1.0)).collect();
        users.push(SurrogatePoint::new(user_id.clone(), coords));
        component.push(c);

        let len = rng.random_range(lo..=hi);
        let mut features: [Array2<f64>; 3] = std::array::from_fn(|m| Array2::zeros((spec.dims[m], g)));
        let mut labels = vec![None; g];
        for (t, label) in labels.iter_mut().enumerate().take(len) {
            let mut score = 0.0;
            let mut k = 0;
            for f in features.iter_mut() {
                for j in 0..f.nrows() {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    f[[j, t]] = x;
                    score += rules[c][k] * x;
                    k += 1;
                }
            }
            let mut positive = score > 0.0;
            if rng.random_bool(spec.label_noise) {
                positive = !positive;
            }
            *label = Some(if positive { Sentiment::Positive } else { Sentiment::Negative });
        }
        videos.push(Video {
            id: format!("v{i:03}"),
            user_id,
            sequence: FeatureSequence {
                features,
                mask: (0..g).map(|t| t < len).collect(),
                labels,
            },
        });
    }
    // g is the longest generated video, not the upper bound
    let longest = videos.iter().map(|v| v.sequence.real_len()).max().unwrap_or(0);
    for v in &mut videos {
        let s = &mut v.sequence;
        for f in s.features.iter_mut() {
            *f = f.slice(ndarray::s![.., ..longest]).to_owned();
        }
        s.mask.truncate(longest);
        s.labels.truncate(longest);
    }
    Ok(SynthOutput {
        dataset: Dataset {
            cues,
            dims: spec.dims,
            g: longest,
            users,
            videos,
        },
        component,
        centers,
        rules,
    })
}
