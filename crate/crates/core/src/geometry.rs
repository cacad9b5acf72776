//! Score gradient, anomaly landscapes, anomaly paths and path-based
//! denoising.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::cad::{cad_score, fit, usable_edges, CadModel, Label, NeighborSource};
use crate::dataset::{LabeledDataset, Point};
use crate::error::{Error, Result};
use crate::kernels::{dot, sq_dist, KernelSpec};
use crate::neighbors::NeighborSet;

/// Gradients with a smaller Euclidean norm stop the descent.
pub const TINY_GRADIENT: f64 = 1e-9;

pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_MAX_ITERS: usize = 500;

/// Gradient of the cosine-sum score with respect to the query point.
///
/// Each pair of edges `a`, `b` contributes
/// `(-(a + b) + (a.b)(a/|a|^2 + b/|b|^2)) / (|a||b|)`. Degenerate edges are
/// skipped exactly as in [`cad_score`].
pub fn cad_gradient(nbrs: &NeighborSet) -> Result<Vec<f64>> {
    let edges = usable_edges(nbrs)?;
    let dim = edges[0].len();
    let sq: Vec<f64> = edges.iter().map(|e| dot(e, e)).collect();
    let norms: Vec<f64> = sq.iter().map(|s| s.sqrt()).collect();
    let mut grad = vec![0.0; dim];
    for a in 0..edges.len() {
        for b in a + 1..edges.len() {
            let (ea, eb) = (edges[a], edges[b]);
            let inner = dot(ea, eb);
            let w = 1.0 / (norms[a] * norms[b]);
            let ca = inner / sq[a] - 1.0;
            let cb = inner / sq[b] - 1.0;
            for j in 0..dim {
                grad[j] += w * (ca * ea[j] + cb * eb[j]);
            }
        }
    }
    Ok(grad)
}

/// Scores rasterized over a regular 2-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyField {
    /// `[(xmin, xmax), (ymin, ymax)]`.
    pub bounds: [(f64, f64); 2],
    /// Grid points along x and y.
    pub resolution: (usize, usize),
    /// Row-major over y, then x: `values[iy * nx + ix]`.
    pub values: Vec<f64>,
    pub source: NeighborSource,
}

impl AnomalyField {
    pub fn coordinate(&self, ix: usize, iy: usize) -> (f64, f64) {
        let lerp = |(lo, hi): (f64, f64), i: usize, n: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        (
            lerp(self.bounds[0], ix, self.resolution.0),
            lerp(self.bounds[1], iy, self.resolution.1),
        )
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.resolution.0 + ix]
    }

    /// `x,y,score` rows, one per grid cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["x", "y", "score"])?;
        let (nx, ny) = self.resolution;
        for iy in 0..ny {
            for ix in 0..nx {
                let (x, y) = self.coordinate(ix, iy);
                wtr.write_record(&[x.to_string(), y.to_string(), self.get(ix, iy).to_string()])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Score every node of a `resolution.0 x resolution.1` grid spanning
/// `bounds`, with neighbors taken from `source`.
pub fn landscape(
    model: &CadModel,
    bounds: [(f64, f64); 2],
    resolution: (usize, usize),
    source: NeighborSource,
) -> Result<AnomalyField> {
    let dim = model.train().dim();
    if dim != 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let (nx, ny) = resolution;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!(
            "resolution must be at least 2x2, got {nx}x{ny}"
        )));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
        return Err(Error::InvalidArgument(format!("bad bounds {bounds:?}")));
    }
    let index = model.source_index(source)?;
    let mut field = AnomalyField {
        bounds,
        resolution,
        values: Vec::new(),
        source,
    };
    field.values = (0..nx * ny)
        .into_par_iter()
        .map(|cell| {
            let (x, y) = field.coordinate(cell % nx, cell / nx);
            let p = model.to_model_space(&[x, y])?;
            model.score_in(&index, &p, None)
        })
        .collect::<Result<_>>()?;
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedNormal,
    MaxIters,
    TinyGradient,
}

/// A descent trajectory through the normal-only landscape.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyPath {
    /// In the caller's (unstandardized) coordinates; `waypoints[0]` is the start.
    pub waypoints: Vec<Point>,
    pub scores: Vec<f64>,
    pub step_size: f64,
    pub terminated_by: Termination,
}

impl AnomalyPath {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn last(&self) -> &Point {
        self.waypoints.last().expect("a path always holds its start")
    }

    /// `iter,score,x1..xd` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let dim = self.waypoints.first().map_or(0, |p| p.dim());
        let mut header = vec!["iter".to_string(), "score".to_string()];
        header.extend((1..=dim).map(|j| format!("x{j}")));
        wtr.write_record(&header)?;
        for (i, (p, s)) in self.waypoints.iter().zip(&self.scores).enumerate() {
            let mut row = vec![i.to_string(), s.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub step: f64,
    pub max_iters: usize,
    /// Clamp every coordinate to this range after each step.
    pub clamp: Option<(f64, f64)>,
    /// Shorten any step longer than this, measured in model coordinates.
    /// The gradient grows like the
    /// inverse distance to the nearest neighbor, so an uncapped fixed step
    /// can throw a waypoint far past the data.
    pub max_move: Option<f64>,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            step: DEFAULT_STEP,
            max_iters: DEFAULT_MAX_ITERS,
            clamp: None,
            max_move: None,
        }
    }
}

pub fn anomaly_path(model: &CadModel, start: &[f64], step: f64, max_iters: usize) -> Result<AnomalyPath> {
    anomaly_path_with(
        model,
        start,
        &PathOptions {
            step,
            max_iters,
            ..PathOptions::default()
        },
    )
}

/// Gradient descent on the score, recomputing the `k` nearest normal
/// training points at every waypoint. Stops once the waypoint's score falls
/// on the normal side of the model's split, when the gradient vanishes, or
/// after `max_iters` steps.
pub fn anomaly_path_with(model: &CadModel, start: &[f64], opts: &PathOptions) -> Result<AnomalyPath> {
    if !model.kernel().is_linear() {
        return Err(Error::KernelNotLinear(model.kernel().to_string()));
    }
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {}", opts.step)));
    }
    if let Some(m) = opts.max_move.filter(|m| m.is_nan() || *m <= 0.0) {
        return Err(Error::InvalidArgument(format!("max_move must be > 0, got {m}")));
    }
    let index = model.source_index(NeighborSource::NormalOnly)?;
    let mut x = model.to_model_space(start)?;
    let mut waypoints = Vec::new();
    let mut scores = Vec::new();
    let mut previous: Option<(f64, Vec<usize>)> = None;
    let mut iter = 0;
    let terminated_by = loop {
        let nbrs = index.query(&x, None, model.k())?;
        let score = cad_score(&nbrs)?.value;
        if let Some((prev_score, prev_nbrs)) = &previous {
            if score > *prev_score && *prev_nbrs != nbrs.indices {
                log::debug!("score rose {prev_score} -> {score} at a neighbor switch (iter {iter})");
            }
        }
        waypoints.push(if iter == 0 {
            Point::new(start.to_vec())?
        } else {
            model.from_model_space(&x)?
        });
        scores.push(score);
        if model.label_for(score) == Label::Normal {
            break Termination::ReachedNormal;
        }
        if iter == opts.max_iters {
            break Termination::MaxIters;
        }
        let grad = cad_gradient(&nbrs)?;
        let norm = dot(&grad, &grad).sqrt();
        if norm < TINY_GRADIENT {
            break Termination::TinyGradient;
        }
        let rate = match opts.max_move {
            Some(m) if opts.step * norm > m => m / norm,
            _ => opts.step,
        };
        for (c, g) in x.coords_mut().iter_mut().zip(&grad) {
            *c -= rate * g;
            if let Some((lo, hi)) = opts.clamp {
                *c = c.clamp(lo, hi);
            }
        }
        previous = Some((score, nbrs.indices));
        iter += 1;
    };
    Ok(AnomalyPath {
        waypoints,
        scores,
        step_size: opts.step,
        terminated_by,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub path: AnomalyPath,
    /// Mean squared pixel error of each waypoint.
    pub mse_trace: Vec<f64>,
}

/// Walk a noisy frame toward the normal region of a set of reference
/// frames, pixels kept in `[0, 1]`.
///
/// The error trace compares each waypoint with `clean` when given, else with
/// its nearest reference frame.
pub fn denoise(
    frames: &LabeledDataset,
    noisy: &Point,
    k: usize,
    step: f64,
    max_iters: usize,
    clean: Option<&Point>,
) -> Result<Denoised> {
    if noisy.dim() != frames.dim() {
        return Err(Error::DimensionMismatch {
            expected: frames.dim(),
            found: noisy.dim(),
        });
    }
    if let Some(c) = clean {
        if c.dim() != frames.dim() {
            return Err(Error::DimensionMismatch {
                expected: frames.dim(),
                found: c.dim(),
            });
        }
    }
    let model = fit(frames, k, &KernelSpec::linear())?;
    let path = anomaly_path_with(
        &model,
        noisy,
        &PathOptions {
            step,
            max_iters,
            clamp: Some((0.0, 1.0)),
            max_move: None,
        },
    )?;
    let d = frames.dim() as f64;
    let mse_trace = path
        .waypoints
        .iter()
        .map(|w| match clean {
            Some(c) => sq_dist(w, c) / d,
            None => {
                frames
                    .points()
                    .iter()
                    .map(|f| sq_dist(w, f))
                    .fold(f64::INFINITY, f64::min)
                    / d
            }
        })
        .collect();
    Ok(Denoised { path, mse_trace })
}
