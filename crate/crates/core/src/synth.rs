//! Seeded synthetic data: 2-D benchmark shapes with planted outliers,
//! smoothly varying grayscale frames, and image noise models.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::dataset::{LabeledDataset, Labels, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    TwoMoons,
    HomoClusters,
    HeteroClusters,
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_moons" => Ok(Shape::TwoMoons),
            "homo_clusters" => Ok(Shape::HomoClusters),
            "hetero_clusters" => Ok(Shape::HeteroClusters),
            _ => Err(Error::InvalidArgument(format!("unknown shape {s:?}"))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::TwoMoons => "two_moons",
            Shape::HomoClusters => "homo_clusters",
            Shape::HeteroClusters => "hetero_clusters",
        })
    }
}

/// How many of `n` generated points are planted outliers.
pub fn planted_outliers(n: usize) -> usize {
    (n / 40).max(1)
}

/// Generate `n` labeled 2-D points of the given shape. The last
/// [`planted_outliers`]`(n)` points are outliers placed on a ring well
/// outside the bounding box of the inliers, and carry the anomaly label.
///
/// Two moons follow the usual construction (outer half circle plus a
/// shifted inner one) with Gaussian jitter of std `noise`. The cluster
/// shapes draw unit-variance Gaussian clusters centered 6 apart, plus the
/// same jitter; the heterogeneous one has a quarter of the points in a
/// cluster of half the spread.
pub fn run_synthetic(shape: Shape, n: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 20 {
        return Err(Error::TooFewPoints { needed: 20, found: n });
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = planted_outliers(n);
    let inliers = n - m;
    let mut rows: Vec<[f64; 2]> = match shape {
        Shape::TwoMoons => {
            let outer = inliers / 2;
            let inner = inliers - outer;
            let arc = |i: usize, count: usize| std::f64::consts::PI * i as f64 / (count - 1).max(1) as f64;
            (0..outer)
                .map(|i| [arc(i, outer).cos(), arc(i, outer).sin()])
                .chain((0..inner).map(|i| [1.0 - arc(i, inner).cos(), 0.5 - arc(i, inner).sin()]))
                .collect()
        }
        Shape::HomoClusters => {
            let a = inliers / 2;
            gaussian_cluster(&mut rng, a, [-3.0, 0.0], 1.0)
                .into_iter()
                .chain(gaussian_cluster(&mut rng, inliers - a, [3.0, 0.0], 1.0))
                .collect()
        }
        Shape::HeteroClusters => {
            let small = n / 4;
            gaussian_cluster(&mut rng, small, [-3.0, 0.0], 0.5)
                .into_iter()
                .chain(gaussian_cluster(&mut rng, inliers - small, [3.0, 0.0], 1.0))
                .collect()
        }
    };
    if noise > 0.0 {
        let jitter = Normal::new(0.0, noise).expect("finite std");
        for r in &mut rows {
            r[0] += jitter.sample(&mut rng);
            r[1] += jitter.sample(&mut rng);
        }
    }

    let (lo, hi) = rows.iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), r| {
        ([lo[0].min(r[0]), lo[1].min(r[1])], [hi[0].max(r[0]), hi[1].max(r[1])])
    });
    let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let half_diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt() / 2.0;
    let offset: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    for j in 0..m {
        let angle = offset + std::f64::consts::TAU * j as f64 / m as f64;
        let radius = half_diag * rng.random_range(1.5..2.0);
        rows.push([center[0] + radius * angle.cos(), center[1] + radius * angle.sin()]);
    }

    let points = rows
        .into_iter()
        .map(|r| Point::new(r.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..n).map(|i| i >= inliers).collect();
    LabeledDataset::new(points)?
        .with_labels(Labels::Anomaly(labels))?
        .with_feature_names(vec!["x1".into(), "x2".into()])
}

fn gaussian_cluster(rng: &mut ChaCha8Rng, count: usize, center: [f64; 2], std: f64) -> Vec<[f64; 2]> {
    (0..count)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            let y: f64 = StandardNormal.sample(rng);
            [center[0] + std * x, center[1] + std * y]
        })
        .collect()
}

/// `n` grayscale `width x height` frames in `[0, 1]` of a soft bright
/// ellipse with two dark spots, drifting and turning smoothly from frame to
/// frame, like consecutive shots of a face.
pub fn synthetic_frames(n: usize, width: u32, height: u32, seed: u64) -> Result<LabeledDataset> {
    if n == 0 || width == 0 || height == 0 {
        return Err(Error::InvalidArgument("frames need n, width and height > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (w, h) = (width as f64, height as f64);
    let points = (0..n)
        .map(|t| {
            let s = t as f64 / n as f64 * std::f64::consts::TAU;
            let cx = w * (0.5 + 0.12 * (s + phase).sin());
            let cy = h * (0.5 + 0.08 * (2.0 * s).sin());
            let turn = 0.25 * (s + 0.5 * phase).cos();
            let (rx, ry) = (0.32 * w, 0.34 * h);
            let pixels = (0..height)
                .flat_map(|y| (0..width).map(move |x| (x as f64, y as f64)))
                .map(|(x, y)| {
                    let (dx, dy) = (x - cx, y - cy);
                    let face = (-(dx / rx).powi(2) - (dy / ry).powi(2)).exp();
                    let eye = |ex: f64| {
                        let (ex, ey) = (cx + ex * rx * turn.cos(), cy - 0.3 * ry + ex * rx * turn.sin());
                        (-((x - ex).powi(2) + (y - ey).powi(2)) / 2.0).exp()
                    };
                    (0.15 + 0.7 * face - 0.4 * (eye(-0.4) + eye(0.4))).clamp(0.0, 1.0)
                })
                .collect();
            Point::new(pixels)
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(points)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Add Gaussian noise and clip to `[0, 1]`, scaling the noise so that the
/// clipped image has mean squared error `target` against `clean`.
pub fn gaussian_noise_at_mse(clean: &Point, target: f64, rng: &mut impl Rng) -> Result<Point> {
    let draw: Vec<f64> = (0..clean.dim()).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let noisy = |scale: f64| -> Vec<f64> {
        clean
            .iter()
            .zip(&draw)
            .map(|(c, e)| (c + scale * e).clamp(0.0, 1.0))
            .collect()
    };
    let (mut lo, mut hi) = (0.0, target.sqrt());
    while mse(&noisy(hi), clean) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidArgument(format!("MSE {target} is out of reach")));
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if mse(&noisy(mid), clean) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Point::new(noisy(hi))
}

/// Set randomly chosen pixels to 0 or 1 until the mean squared error
/// against `clean` reaches `target`.
pub fn salt_pepper_at_mse(clean: &Point, target: f64, rng: &mut impl Rng) -> Result<Point> {
    let mut order: Vec<usize> = (0..clean.dim()).collect();
    order.shuffle(rng);
    let mut out = clean.to_vec();
    let budget = target * clean.dim() as f64;
    let mut spent = 0.0;
    for i in order {
        if spent >= budget {
            break;
        }
        let v = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        spent += (v - clean[i]).powi(2);
        out[i] = v;
    }
    if spent < budget {
        return Err(Error::InvalidArgument(format!("MSE {target} is out of reach")));
    }
    Point::new(out)
}
