//! Curvature anomaly scores, the two-means score split and the fitted
//! detector.
//!
//! Every point is treated as the apex of a cone spanned by the edges to its
//! `k` nearest neighbors. The score sums the cosines of all pairwise edge
//! angles, so a point whose neighbors all lie on one side (a sharp apex)
//! scores close to the maximum `k(k-1)/2`. The kernel variant replaces the
//! cosines by the entries of the cosine-normalized gram matrix of the edge
//! vectors, and multiplies by the kernel's orientation sign so that a
//! larger score always means more anomalous.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Point, StandardizationParams};
use crate::error::{Error, Result};
use crate::kernels::{dot, gram, normalize_gram, KernelSpec};
use crate::neighbors::{NeighborIndex, NeighborSet};

/// Edges shorter than this are treated as coincident with the query.
pub const DEGENERATE_EDGE: f64 = 1e-12;

/// Upper bound on Lloyd refinement iterations for the score split.
pub const MAX_SPLIT_ITERS: usize = 1000;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyScore {
    pub value: f64,
    /// Set once the kernel orientation sign has been applied.
    pub oriented: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }
}

/// Sum of pairwise edge cosines. Degenerate edges are skipped.
pub fn cad_score(nbrs: &NeighborSet) -> Result<AnomalyScore> {
    let edges = usable_edges(nbrs)?;
    let norms: Vec<f64> = edges.iter().map(|e| dot(e, e).sqrt()).collect();
    let mut sum = 0.0;
    for a in 0..edges.len() {
        for b in a + 1..edges.len() {
            sum += dot(edges[a], edges[b]) / (norms[a] * norms[b]);
        }
    }
    Ok(AnomalyScore {
        value: sum,
        oriented: true,
    })
}

/// Kernel score: upper-triangle sum of the normalized gram matrix of the
/// edge vectors, times the kernel orientation.
pub fn kcad_score(spec: &KernelSpec, nbrs: &NeighborSet) -> Result<AnomalyScore> {
    let edges = usable_edges(nbrs)?;
    let g = normalize_gram(&gram(spec, &edges)?)?;
    Ok(AnomalyScore {
        value: spec.orientation() * g.upper_sum(),
        oriented: true,
    })
}

pub(crate) fn usable_edges(nbrs: &NeighborSet) -> Result<Vec<&[f64]>> {
    let edges: Vec<&[f64]> = nbrs
        .edges
        .iter()
        .map(Vec::as_slice)
        .filter(|e| dot(e, e).sqrt() >= DEGENERATE_EDGE)
        .collect();
    if edges.is_empty() {
        return Err(Error::AllEdgesDegenerate);
    }
    Ok(edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cluster {
    Low,
    High,
}

/// Two-cluster partition of a list of scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSplit {
    pub mean_low: f64,
    pub mean_high: f64,
    pub assignment: Vec<Cluster>,
}

impl ScoreSplit {
    /// All scores in one cluster, used when no split exists.
    pub fn single(scores: &[f64]) -> Self {
        let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        ScoreSplit {
            mean_low: mean,
            mean_high: mean,
            assignment: vec![Cluster::Low; scores.len()],
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.mean_low == self.mean_high
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.mean_low + self.mean_high)
    }

    /// Nearest mean wins; an exact tie goes to the low cluster.
    pub fn classify(&self, score: f64) -> Cluster {
        nearer(score, self.mean_low, self.mean_high)
    }

    pub fn members(&self, cluster: Cluster) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

fn nearer(score: f64, low: f64, high: f64) -> Cluster {
    if score > 0.5 * (low + high) {
        Cluster::High
    } else {
        Cluster::Low
    }
}

/// Optimal two-cluster partition of one-dimensional scores.
///
/// In 1-D the optimal 2-means partition is a threshold cut of the sorted
/// values, so every cut is scanned and the one with the largest
/// between-cluster separation `n_l n_h (m_h - m_l)^2` (equivalently the
/// smallest within-cluster SSE) wins; the earliest cut wins ties. Lloyd
/// iterations then run from those means until the nearest-mean assignment
/// is a fixed point.
pub fn two_means_split(scores: &[f64]) -> Result<ScoreSplit> {
    if scores.len() < 2 {
        return Err(Error::DegenerateScores);
    }
    let (min, max) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
    let scale = min.abs().max(max.abs()).max(1.0);
    if max - min <= 1e-10 * scale {
        return Err(Error::DegenerateScores);
    }

    let n = scores.len();
    let center = scores.iter().sum::<f64>() / n as f64;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().map(|s| s - center).sum();
    let mut best = (f64::NEG_INFINITY, 1);
    let mut prefix = 0.0;
    for cut in 1..n {
        prefix += sorted[cut - 1] - center;
        if sorted[cut] == sorted[cut - 1] {
            continue;
        }
        let (nl, nh) = (cut as f64, (n - cut) as f64);
        let gap = (total - prefix) / nh - prefix / nl;
        let separation = nl * nh * gap * gap;
        if separation > best.0 {
            best = (separation, cut);
        }
    }
    let threshold = sorted[best.1 - 1];
    let mut assignment: Vec<Cluster> = scores
        .iter()
        .map(|&s| if s > threshold { Cluster::High } else { Cluster::Low })
        .collect();

    let mut means = cluster_means(scores, &assignment);
    for _ in 0..MAX_SPLIT_ITERS {
        let next: Vec<Cluster> = scores.iter().map(|&s| nearer(s, means.0, means.1)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
        means = cluster_means(scores, &assignment);
    }
    Ok(ScoreSplit {
        mean_low: means.0,
        mean_high: means.1,
        assignment,
    })
}

fn cluster_means(scores: &[f64], assignment: &[Cluster]) -> (f64, f64) {
    let (mut sl, mut nl, mut sh, mut nh) = (0.0, 0usize, 0.0, 0usize);
    for (&s, &c) in scores.iter().zip(assignment) {
        match c {
            Cluster::Low => {
                sl += s;
                nl += 1;
            }
            Cluster::High => {
                sh += s;
                nh += 1;
            }
        }
    }
    // the minimum stays low and the maximum high, so neither side is empty
    (sl / nl as f64, sh / nh as f64)
}

/// Which training points supply neighbors when scoring arbitrary locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSource {
    AllPoints,
    NormalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

/// A fitted detector.
#[derive(Debug, Clone)]
pub struct CadModel {
    train: LabeledDataset,
    k: usize,
    kernel: KernelSpec,
    scores: Vec<f64>,
    split: ScoreSplit,
    self_kernel: Vec<f64>,
    standardization: Option<StandardizationParams>,
}

/// Score every training point and split the scores.
pub fn fit(data: &LabeledDataset, k: usize, kernel: &KernelSpec) -> Result<CadModel> {
    let mut model = scored(data, k, kernel)?;
    model.split = match two_means_split(&model.scores) {
        Ok(split) => split,
        Err(Error::DegenerateScores) => {
            log::warn!("all training scores are equal, every point is labeled normal");
            ScoreSplit::single(&model.scores)
        }
        Err(e) => return Err(e),
    };
    Ok(model)
}

/// Oriented score of every training point, each scored against the others.
pub fn training_scores(data: &LabeledDataset, k: usize, kernel: &KernelSpec) -> Result<Vec<f64>> {
    Ok(scored(data, k, kernel)?.scores)
}

fn scored(data: &LabeledDataset, k: usize, kernel: &KernelSpec) -> Result<CadModel> {
    if k < 2 {
        return Err(Error::KTooSmall(k));
    }
    if data.len() < k + 1 {
        return Err(Error::KTooLarge {
            k,
            available: data.len().saturating_sub(1),
        });
    }
    let kernel = kernel.resolved(data.dim());
    let self_kernel = self_kernels(data.points(), &kernel)?;
    let mut model = CadModel {
        train: data.clone(),
        k,
        kernel,
        scores: Vec::new(),
        split: ScoreSplit::single(&[]),
        self_kernel,
        standardization: None,
    };
    let index = model.index(None);
    let scores = (0..data.len())
        .into_par_iter()
        .map(|i| model.score_in(&index, &data.points()[i], Some(i)))
        .collect::<Result<Vec<f64>>>()?;
    model.scores = scores;
    Ok(model)
}

fn self_kernels(points: &[Point], kernel: &KernelSpec) -> Result<Vec<f64>> {
    if kernel.is_linear() {
        return Ok(Vec::new());
    }
    points.iter().map(|p| kernel.eval_raw(p, p)).collect()
}

impl CadModel {
    pub fn k(&self) -> usize {
        self.k
    }

    /// The kernel with defaulted hyperparameters filled in.
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn train(&self) -> &LabeledDataset {
        &self.train
    }

    /// Oriented training scores.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn split(&self) -> &ScoreSplit {
        &self.split
    }

    /// The anomalous cluster is always the high one because scores are
    /// oriented.
    pub fn anomaly_cluster(&self) -> Cluster {
        Cluster::High
    }

    pub fn training_labels(&self) -> Vec<Label> {
        self.split
            .assignment
            .iter()
            .map(|&c| self.label_of(c))
            .collect()
    }

    pub fn normal_indices(&self) -> Vec<usize> {
        self.split.members(Cluster::Low)
    }

    pub fn standardization(&self) -> Option<&StandardizationParams> {
        self.standardization.as_ref()
    }

    /// Attach the transform that maps raw inputs into the space the model
    /// was trained in. `predict` and friends apply it to every query.
    pub fn with_standardization(mut self, params: StandardizationParams) -> Self {
        self.standardization = Some(params);
        self
    }

    pub fn label_for(&self, score: f64) -> Label {
        self.label_of(self.split.classify(score))
    }

    fn label_of(&self, c: Cluster) -> Label {
        if c == self.anomaly_cluster() {
            Label::Anomaly
        } else {
            Label::Normal
        }
    }

    /// Map a raw query into model space.
    pub fn to_model_space(&self, point: &[f64]) -> Result<Point> {
        let p = Point::new(point.to_vec())?;
        if p.dim() != self.train.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.train.dim(),
                found: p.dim(),
            });
        }
        match &self.standardization {
            Some(s) => s.apply(&p),
            None => Ok(p),
        }
    }

    pub fn from_model_space(&self, point: &Point) -> Result<Point> {
        match &self.standardization {
            Some(s) => s.invert(point),
            None => Ok(point.clone()),
        }
    }

    /// Out-of-sample label and score, neighbors drawn from all training points.
    pub fn predict(&self, point: &[f64]) -> Result<Prediction> {
        let p = self.to_model_space(point)?;
        let score = self.score_in(&self.index(None), &p, None)?;
        Ok(Prediction {
            label: self.label_for(score),
            score,
        })
    }

    pub fn predict_many(&self, points: &[Point]) -> Result<Vec<Prediction>> {
        points.par_iter().map(|p| self.predict(p)).collect()
    }

    /// Re-score training point `i` with itself excluded, as during fitting.
    pub fn predict_training(&self, i: usize) -> Result<Prediction> {
        let p = self.train.points().get(i).ok_or_else(|| {
            Error::InvalidArgument(format!("training index {i} out of range"))
        })?;
        let score = self.score_in(&self.index(None), p, Some(i))?;
        Ok(Prediction {
            label: self.label_for(score),
            score,
        })
    }

    /// Score a point already in model space against a neighbor source.
    pub fn score_from(&self, point: &[f64], source: NeighborSource) -> Result<f64> {
        let index = self.source_index(source)?;
        self.score_in(&index, point, None)
    }

    /// Neighbors of a model-space point drawn from `source`.
    pub fn neighbors_from(&self, point: &[f64], source: NeighborSource) -> Result<NeighborSet> {
        self.source_index(source)?.query(point, None, self.k)
    }

    pub(crate) fn source_index(&self, source: NeighborSource) -> Result<NeighborIndex<'_>> {
        match source {
            NeighborSource::AllPoints => Ok(self.index(None)),
            NeighborSource::NormalOnly => {
                let normal = self.normal_indices();
                if normal.len() < self.k {
                    return Err(Error::EmptyNeighborSource {
                        k: self.k,
                        available: normal.len(),
                    });
                }
                Ok(self.index(Some(normal)))
            }
        }
    }

    fn index(&self, candidates: Option<Vec<usize>>) -> NeighborIndex<'_> {
        let kernel = (!self.kernel.is_linear()).then_some(self.kernel);
        NeighborIndex::with_self_kernel(self.train.points(), kernel, &self.self_kernel, candidates)
    }

    pub(crate) fn score_in(
        &self,
        index: &NeighborIndex<'_>,
        point: &[f64],
        exclude: Option<usize>,
    ) -> Result<f64> {
        let nbrs = index.query(point, exclude, self.k)?;
        let s = if self.kernel.is_linear() {
            cad_score(&nbrs)?
        } else {
            kcad_score(&self.kernel, &nbrs)?
        };
        Ok(s.value)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            k: self.k,
            kernel: self.kernel.to_string(),
            feature_names: self.train.feature_names().map(<[String]>::to_vec),
            train: self
                .train
                .points()
                .iter()
                .map(|p| p.coords().to_vec())
                .collect(),
            scores: self.scores.clone(),
            split: SplitFile {
                mean_low: self.split.mean_low,
                mean_high: self.split.mean_high,
                assignment: self.split.assignment.clone(),
            },
            standardization: self.standardization.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(file.format_version));
        }
        let kernel: KernelSpec = file.kernel.parse()?;
        let points = file
            .train
            .into_iter()
            .map(Point::new)
            .collect::<Result<Vec<_>>>()?;
        let mut train = LabeledDataset::new(points)?;
        if let Some(names) = file.feature_names {
            train = train.with_feature_names(names)?;
        }
        let n = train.len();
        if file.scores.len() != n || file.split.assignment.len() != n {
            return Err(Error::InvalidArgument(
                "model scores do not match the training set".into(),
            ));
        }
        if file.k < 2 || file.k >= n {
            return Err(Error::KTooLarge {
                k: file.k,
                available: n.saturating_sub(1),
            });
        }
        let kernel = kernel.resolved(train.dim());
        Ok(CadModel {
            self_kernel: self_kernels(train.points(), &kernel)?,
            train,
            k: file.k,
            kernel,
            scores: file.scores,
            split: ScoreSplit {
                mean_low: file.split.mean_low,
                mean_high: file.split.mean_high,
                assignment: file.split.assignment,
            },
            standardization: file.standardization,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    k: usize,
    kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_names: Option<Vec<String>>,
    train: Vec<Vec<f64>>,
    scores: Vec<f64>,
    split: SplitFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    standardization: Option<StandardizationParams>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    mean_low: f64,
    mean_high: f64,
    assignment: Vec<Cluster>,
}
