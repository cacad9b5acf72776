//! Instance ranking by inverted anomaly score, and prototype selection.
//!
//! Points with low anomaly scores sit inside flat or concave regions of the
//! data and make good prototypes. The ranking score is the negated oriented
//! anomaly score, so the same rule holds for every kernel.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::cad::{training_scores, two_means_split, Cluster};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::kernels::{sq_dist, KernelSpec};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankingMode {
    Icad,
    Kicad(KernelSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Per point, larger is a better prototype.
    pub ranking_scores: Vec<f64>,
    /// Indices by descending ranking score, ties by ascending index.
    pub order: Vec<usize>,
    pub mode: RankingMode,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

pub fn rank(data: &LabeledDataset, k: usize, kernel: &KernelSpec) -> Result<Ranking> {
    let ranking_scores: Vec<f64> = training_scores(data, k, kernel)?.into_iter().map(|s| -s).collect();
    let mut order: Vec<usize> = (0..ranking_scores.len()).collect();
    order.sort_by(|&a, &b| ranking_scores[b].total_cmp(&ranking_scores[a]).then(a.cmp(&b)));
    let mode = if kernel.is_linear() {
        RankingMode::Icad
    } else {
        RankingMode::Kicad(kernel.resolved(data.dim()))
    };
    Ok(Ranking {
        ranking_scores,
        order,
        mode,
    })
}

/// Number of points kept for a fraction of `n`, rounded up. Products within
/// 1e-9 of an integer count as that integer, so 0.7 of 10 keeps 7.
pub fn retained_count(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::BadFraction(fraction));
    }
    let x = fraction * n as f64;
    let count = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
    Ok((count as usize).clamp(1.min(n), n))
}

/// The best-ranked `ceil(fraction * n)` indices, in rank order.
pub fn select_top(r: &Ranking, fraction: f64) -> Result<Vec<usize>> {
    let count = retained_count(fraction, r.len())?;
    Ok(r.order[..count].to_vec())
}

/// Indices in the higher-mean cluster of the ranking scores, ascending.
pub fn retain_by_split(r: &Ranking) -> Result<Vec<usize>> {
    Ok(two_means_split(&r.ranking_scores)?.members(Cluster::High))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
    Clustering,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            "clustering" => Ok(Task::Clustering),
            _ => Err(Error::InvalidArgument(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Top(f64),
    Split,
}

impl FromStr for Policy {
    type Err = Error;

    /// `top:0.5` or `split`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "split" {
            return Ok(Policy::Split);
        }
        let f = s
            .strip_prefix("top:")
            .and_then(|f| f.parse::<f64>().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy {s:?}")))?;
        retained_count(f, 1)?;
        Ok(Policy::Top(f))
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Top(x) => write!(f, "top:{x}"),
            Policy::Split => f.write_str("split"),
        }
    }
}

fn apply_policy(r: &Ranking, policy: Policy) -> Result<Vec<usize>> {
    match policy {
        Policy::Top(f) => select_top(r, f),
        Policy::Split => retain_by_split(r),
    }
}

/// Select prototypes for a downstream task. Classification ranks and selects
/// within every class separately; the other tasks use the whole dataset and
/// ignore labels. Returns ascending indices.
pub fn select_for_task(
    data: &LabeledDataset,
    task: Task,
    policy: Policy,
    k: usize,
    kernel: &KernelSpec,
) -> Result<Vec<usize>> {
    let mut selected = match task {
        Task::Classification => {
            let classes = data
                .class_labels()
                .ok_or(Error::MissingLabels("classification needs class labels"))?;
            let mut out = Vec::new();
            for members in class_members(classes).into_values() {
                let r = rank(&data.subset(&members), k, kernel)?;
                out.extend(apply_policy(&r, policy)?.into_iter().map(|i| members[i]));
            }
            out
        }
        Task::Regression | Task::Clustering => apply_policy(&rank(data, k, kernel)?, policy)?,
    };
    selected.sort_unstable();
    Ok(selected)
}

fn class_members(classes: &[String]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in classes.iter().enumerate() {
        groups.entry(c.as_str()).or_default().push(i);
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCount {
    pub total: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub format_version: u32,
    pub task: Task,
    pub policy: String,
    pub total: usize,
    pub retained: usize,
    pub retained_fraction: f64,
    /// Empty unless class labels are present.
    pub per_class: BTreeMap<String, ClassCount>,
}

impl SelectionReport {
    pub fn new(data: &LabeledDataset, task: Task, policy: Policy, selected: &[usize]) -> Self {
        let mut per_class = BTreeMap::new();
        if let Some(classes) = data.class_labels() {
            for (class, members) in class_members(classes) {
                let retained = members.iter().filter(|i| selected.contains(i)).count();
                per_class.insert(
                    class.to_string(),
                    ClassCount {
                        total: members.len(),
                        retained,
                    },
                );
            }
        }
        SelectionReport {
            format_version: REPORT_FORMAT_VERSION,
            task,
            policy: policy.to_string(),
            total: data.len(),
            retained: selected.len(),
            retained_fraction: selected.len() as f64 / data.len() as f64,
            per_class,
        }
    }
}

/// Fraction of `test` points whose nearest `train` point carries the same
/// class. Ties go to the lower training index.
pub fn one_nn_accuracy(train: &LabeledDataset, test: &LabeledDataset) -> Result<f64> {
    let train_classes = train
        .class_labels()
        .ok_or(Error::MissingLabels("training set needs class labels"))?;
    let test_classes = test
        .class_labels()
        .ok_or(Error::MissingLabels("test set needs class labels"))?;
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    let correct = test
        .points()
        .iter()
        .zip(test_classes)
        .filter(|(p, class)| {
            let nearest = train
                .points()
                .iter()
                .enumerate()
                .map(|(i, t)| (sq_dist(p, t), i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, i)| i)
                .expect("datasets are nonempty");
            train_classes[nearest] == **class
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}
