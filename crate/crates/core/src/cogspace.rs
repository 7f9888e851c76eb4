//! Cognitive space: users as surrogate points under a Minkowski pseudo-metric.
//!
//! Distinct users may share coordinates, so the space is only pseudo-metric:
//! `distance(a, b) == 0` does not imply `a.user_id == b.user_id`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("dimension mismatch: left point has {left} cues, right point has {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("operation requires a non-empty point set")]
    EmptySet,
    #[error("cue set must name at least one cue")]
    NoCues,
    #[error("duplicate cue name `{0}`")]
    DuplicateCue(String),
    #[error("coordinate {index} of user `{user}` is {value}, expected a finite value in [0, 1]")]
    CoordinateOutOfRange { user: String, index: usize, value: f64 },
    #[error("Minkowski order must be at least 1")]
    InvalidOrder,
}

/// Ordered, uniquely named cognitive cues spanning the space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueSet {
    names: Vec<String>,
}

impl CueSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, SpaceError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(SpaceError::NoCues);
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(SpaceError::DuplicateCue(name.clone()));
            }
        }
        Ok(Self { names })
    }

    /// The Big-Five traits in their conventional order.
    pub fn big_five() -> Self {
        Self::new(["OPN", "CON", "EXT", "AGR", "NEU"]).expect("static cue names are unique")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A user's coordinates in cognitive space, one normalized score per cue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePoint {
    pub user_id: String,
    pub coords: Vec<f64>,
}

impl SurrogatePoint {
    pub fn new(user_id: impl Into<String>, coords: Vec<f64>) -> Self {
        Self {
            user_id: user_id.into(),
            coords,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Checks the point against a cue set: matching length, finite values in `[0, 1]`.
    pub fn validate(&self, cues: &CueSet) -> Result<(), SpaceError> {
        if self.coords.len() != cues.len() {
            return Err(SpaceError::DimensionMismatch {
                left: self.coords.len(),
                right: cues.len(),
            });
        }
        for (index, &value) in self.coords.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(SpaceError::CoordinateOutOfRange {
                    user: self.user_id.clone(),
                    index,
                    value,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaceConfig {
    /// Minkowski order.
    pub r: u32,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self { r: 2 }
    }
}

impl SpaceConfig {
    pub fn new(r: u32) -> Result<Self, SpaceError> {
        if r == 0 {
            return Err(SpaceError::InvalidOrder);
        }
        Ok(Self { r })
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        Self::new(self.r).map(|_| ())
    }
}

/// Minkowski distance of order `r` between two coordinate slices.
pub fn minkowski(a: &[f64], b: &[f64], r: u32) -> Result<f64, SpaceError> {
    if a.len() != b.len() {
        return Err(SpaceError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    let d = match r {
        1 => diffs.sum(),
        2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        _ => {
            let p = f64::from(r);
            diffs.map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p)
        }
    };
    Ok(d)
}

pub fn distance(a: &SurrogatePoint, b: &SurrogatePoint, cfg: &SpaceConfig) -> Result<f64, SpaceError> {
    minkowski(&a.coords, &b.coords, cfg.r)
}

fn check_dims(points: &[SurrogatePoint]) -> Result<usize, SpaceError> {
    let first = points.first().ok_or(SpaceError::EmptySet)?;
    let dim = first.dim();
    for p in points {
        if p.dim() != dim {
            return Err(SpaceError::DimensionMismatch {
                left: dim,
                right: p.dim(),
            });
        }
    }
    Ok(dim)
}

/// Index of the medoid: the member minimizing the summed distance to all
/// members. Sums are accumulated in user-id order so the result does not
/// depend on input order; ties go to the smallest user id.
pub fn medoid_index(points: &[SurrogatePoint], cfg: &SpaceConfig) -> Result<usize, SpaceError> {
    check_dims(points)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].user_id.cmp(&points[j].user_id).then(i.cmp(&j)));

    let mut best: Option<(usize, f64)> = None;
    for &i in &order {
        let mut total = 0.0;
        for &j in &order {
            total += minkowski(&points[i].coords, &points[j].coords, cfg.r)?;
        }
        match best {
            Some((_, b)) if total >= b => {}
            _ => best = Some((i, total)),
        }
    }
    Ok(best.map(|(i, _)| i).expect("non-empty set"))
}

pub fn medoid<'a>(points: &'a [SurrogatePoint], cfg: &SpaceConfig) -> Result<&'a SurrogatePoint, SpaceError> {
    medoid_index(points, cfg).map(|i| &points[i])
}

pub fn max_intra_distance(points: &[SurrogatePoint], cfg: &SpaceConfig) -> Result<f64, SpaceError> {
    check_dims(points)?;
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(distance(a, b, cfg)?);
        }
    }
    Ok(best)
}

/// Rescales every cue column to `[0, 1]` by min-max when any coordinate lies
/// outside that range. Columns with zero spread map to 0. Returns whether a
/// rescale was applied.
pub fn normalize_min_max(points: &mut [SurrogatePoint]) -> Result<bool, SpaceError> {
    if points.is_empty() {
        return Ok(false);
    }
    let dim = check_dims(points)?;
    let needs = points
        .iter()
        .flat_map(|p| p.coords.iter())
        .any(|v| !(0.0..=1.0).contains(v));
    if !needs {
        return Ok(false);
    }
    for c in 0..dim {
        let lo = points.iter().map(|p| p.coords[c]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.coords[c]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for p in points.iter_mut() {
            p.coords[c] = if span > 0.0 { (p.coords[c] - lo) / span } else { 0.0 };
        }
    }
    Ok(true)
}
