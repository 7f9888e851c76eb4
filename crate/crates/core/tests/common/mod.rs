//! Random instance generators and brute-force reference implementations
//! shared by the integration suites. The references are written from the
//! definitions directly and share no code with the library.

#![allow(dead_code)]

use cogtree::cogspace::SurrogatePoint;
use cogtree::partition::{LabeledUser, Sentiment, Split};
use rand::Rng;

pub fn point(id: usize, coords: Vec<f64>) -> SurrogatePoint {
    SurrogatePoint::new(format!("p{id:03}"), coords)
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<SurrogatePoint> {
    (0..n).map(|i| point(i, (0..dim).map(|_| rng.random::<f64>()).collect())).collect()
}

pub fn random_labels<R: Rng>(rng: &mut R, n: usize) -> Vec<Sentiment> {
    (0..n)
        .map(|_| if rng.random_bool(0.5) { Sentiment::Positive } else { Sentiment::Negative })
        .collect()
}

/// Users scattered around a few random centers, with random label lists.
pub fn random_users<R: Rng>(rng: &mut R, n: usize, dim: usize, blobs: usize, spread: f64) -> Vec<LabeledUser> {
    let centers: Vec<Vec<f64>> = (0..blobs.max(1)).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    (0..n)
        .map(|i| {
            let c = &centers[rng.random_range(0..centers.len())];
            let coords = c.iter().map(|&m| (m + spread * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)).collect();
            let k = rng.random_range(1..=8);
            let labels = random_labels(rng, k);
            LabeledUser::new(point(i, coords), labels)
        })
        .collect()
}

/// Cuts `points` into `k` non-empty consecutive groups of random size.
pub fn random_splits<R: Rng>(rng: &mut R, points: Vec<SurrogatePoint>, k: usize) -> Vec<Split> {
    let n = points.len();
    assert!(k >= 1 && k <= n);
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < k - 1 {
        let c = rng.random_range(1..n);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    cuts.push(n);
    let mut out = Vec::new();
    let mut start = 0;
    for end in cuts {
        let pts = points[start..end].to_vec();
        let labels = pts
            .iter()
            .map(|_| {
                let k = rng.random_range(1..5);
                random_labels(rng, k)
            })
            .collect();
        out.push(Split { points: pts, labels });
        start = end;
    }
    out
}

// --- references ---------------------------------------------------------

pub fn dist(a: &[f64], b: &[f64], r: u32) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(r as f64)).sum();
    s.powf(1.0 / r as f64)
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn medoid(points: &[SurrogatePoint], r: u32) -> &SurrogatePoint {
    let mut best: Option<(&SurrogatePoint, f64)> = None;
    for p in points {
        let total: f64 = points.iter().map(|q| dist(&p.coords, &q.coords, r)).sum();
        best = match best {
            None => Some((p, total)),
            Some((b, bt)) if total < bt || (total == bt && p.user_id < b.user_id) => Some((p, total)),
            keep => keep,
        };
    }
    best.unwrap().0
}

pub fn unity(points: &[SurrogatePoint], r: u32) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i < j {
                total += dist(&points[i].coords, &points[j].coords, r);
                pairs += 1.0;
            }
        }
    }
    total / pairs
}

pub fn disjunction(a: &[SurrogatePoint], b: &[SurrogatePoint], r: u32) -> f64 {
    dist(&medoid(a, r).coords, &medoid(b, r).coords, r)
}

pub fn recuperation(splits: &[Split], r: u32) -> f64 {
    let k = splits.len();
    let ratios: Vec<f64> = (0..k)
        .map(|i| {
            let sep: f64 = (0..k).filter(|&j| j != i).map(|j| disjunction(&splits[i].points, &splits[j].points, r)).sum();
            unity(&splits[i].points, r) / (sep / (k - 1) as f64)
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / k as f64;
    mean + ratios.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k as f64
}

pub fn impurity(labels: &[Sentiment]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == Sentiment::Positive).count() as f64 / labels.len() as f64;
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    term(pos) + term(1.0 - pos)
}

pub fn heterogeneity(points: &[SurrogatePoint], cue: usize, r: u32) -> f64 {
    let n = points.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((
                dist(&points[i].coords, &points[j].coords, r),
                (points[i].coords[cue] - points[j].coords[cue]).abs(),
            ));
        }
    }
    let dmax = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let cmax = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    -pairs
        .iter()
        .map(|&(d, c)| {
            let d = d / dmax;
            let c = if cmax > 0.0 { c / cmax } else { 0.0 };
            d + c - 2.0 * d * c
        })
        .sum::<f64>()
}

pub fn silhouette(splits: &[Split], r: u32) -> f64 {
    let mut scores = Vec::new();
    for (k, s) in splits.iter().enumerate() {
        for (i, x) in s.points.iter().enumerate() {
            if s.points.len() == 1 {
                scores.push(0.0);
                continue;
            }
            let a = s
                .points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, y)| dist(&x.coords, &y.coords, r))
                .sum::<f64>()
                / (s.points.len() - 1) as f64;
            let b = splits
                .iter()
                .enumerate()
                .filter(|(l, _)| *l != k)
                .map(|(_, o)| o.points.iter().map(|y| dist(&x.coords, &y.coords, r)).sum::<f64>() / o.points.len() as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            scores.push(if m == 0.0 { 0.0 } else { (b - a) / m });
        }
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

pub fn davies_bouldin(splits: &[Split], r: u32) -> f64 {
    let centers: Vec<&SurrogatePoint> = splits.iter().map(|s| medoid(&s.points, r)).collect();
    let scatter: Vec<f64> = splits
        .iter()
        .zip(&centers)
        .map(|(s, c)| s.points.iter().map(|p| dist(&p.coords, &c.coords, r)).sum::<f64>() / s.points.len() as f64)
        .collect();
    let k = splits.len();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (scatter[i] + scatter[j]) / dist(&centers[i].coords, &centers[j].coords, r))
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

/// Best k-medoids cost over every choice of `k` centers.
pub fn exhaustive_kmedoids(points: &[SurrogatePoint], k: usize, r: u32) -> f64 {
    fn walk(points: &[SurrogatePoint], k: usize, r: u32, from: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if chosen.len() == k {
            let cost: f64 = points
                .iter()
                .map(|p| chosen.iter().map(|&c| dist(&p.coords, &points[c].coords, r)).fold(f64::INFINITY, f64::min))
                .sum();
            *best = best.min(cost);
            return;
        }
        for c in from..points.len() {
            chosen.push(c);
            walk(points, k, r, c + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    walk(points, k, r, 0, &mut Vec::new(), &mut best);
    best
}
