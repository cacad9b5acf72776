//! ROC-AUC and seeded k-fold cross-validation of the detector.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cad::fit;
use crate::dataset::{standardize, LabeledDataset};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Probability that a random anomaly outscores a random normal point, ties
/// counted half. `labels[i]` is true for anomalies.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("score {bad} is not a number")));
    }
    // sum of midranks of the anomalies
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        rank_sum += midrank * order[start..end].iter().filter(|&&i| labels[i]).count() as f64;
        start = end;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub k: usize,
    pub kernel: KernelSpec,
    /// Standardize with statistics of each training fold.
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub k: usize,
    pub kernel: String,
    pub folds: usize,
    pub seed: u64,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub n_train: usize,
    pub n_test: usize,
    pub train_auc: f64,
    /// None when the held-out part holds a single class.
    pub test_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub fit_seconds: Vec<f64>,
    pub predict_seconds: Vec<f64>,
    pub fit: Summary,
    pub predict: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub format_version: u32,
    pub config: ConfigEcho,
    pub folds: Vec<FoldResult>,
    pub train_auc: Summary,
    /// Over folds, or a single AUC of all held-out scores pooled together
    /// (std 0) when some fold's held-out part is single-class.
    pub test_auc: Summary,
    pub test_auc_pooled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

/// Disjoint contiguous folds of a seeded shuffle of `0..n`.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..folds)
        .map(|f| perm[f * n / folds..(f + 1) * n / folds].to_vec())
        .collect()
}

pub fn kfold_cv(data: &LabeledDataset, folds: usize, config: &DetectorConfig, seed: u64) -> Result<CvReport> {
    let labels = data
        .anomaly_labels()
        .ok_or(Error::MissingLabels("cross-validation needs anomaly labels"))?;
    if folds < 2 || folds > data.len() {
        return Err(Error::InvalidArgument(format!(
            "folds must be in 2..={}, got {folds}",
            data.len()
        )));
    }
    let smallest_train = data.len() - data.len().div_ceil(folds);
    if smallest_train < config.k + 1 {
        return Err(Error::TooFewPoints {
            needed: config.k + 1,
            found: smallest_train,
        });
    }

    let parts = fold_partition(data.len(), folds, seed);
    let mut results = Vec::with_capacity(folds);
    let mut held_out_scores = Vec::with_capacity(data.len());
    let mut held_out_labels = Vec::with_capacity(data.len());
    let (mut fit_seconds, mut predict_seconds) = (Vec::new(), Vec::new());
    for test_idx in &parts {
        let mut in_test = vec![false; data.len()];
        test_idx.iter().for_each(|&i| in_test[i] = true);
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| !in_test[i]).collect();
        let train = data.subset(&train_idx);

        let started = Instant::now();
        let model = if config.standardize {
            let (scaled, params) = standardize(&train)?;
            fit(&scaled, config.k, &config.kernel)?.with_standardization(params)
        } else {
            fit(&train, config.k, &config.kernel)?
        };
        fit_seconds.push(started.elapsed().as_secs_f64());

        let started = Instant::now();
        let test_scores: Vec<f64> = test_idx
            .iter()
            .map(|&i| model.predict(&data.points()[i]).map(|p| p.score))
            .collect::<Result<_>>()?;
        predict_seconds.push(started.elapsed().as_secs_f64());

        let train_labels: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
        let test_labels: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
        let test_auc = match roc_auc(&test_scores, &test_labels) {
            Ok(a) => Some(a),
            Err(Error::SingleClass) => None,
            Err(e) => return Err(e),
        };
        results.push(FoldResult {
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            train_auc: roc_auc(model.scores(), &train_labels)?,
            test_auc,
        });
        held_out_scores.extend(test_scores);
        held_out_labels.extend(test_labels);
    }

    let per_fold_test: Option<Vec<f64>> = results.iter().map(|r| r.test_auc).collect();
    let (test_auc, test_auc_pooled) = match per_fold_test {
        Some(values) => (Summary::of(&values), false),
        None => (
            Summary {
                mean: roc_auc(&held_out_scores, &held_out_labels)?,
                std: 0.0,
            },
            true,
        ),
    };
    let train_values: Vec<f64> = results.iter().map(|r| r.train_auc).collect();
    Ok(CvReport {
        format_version: REPORT_FORMAT_VERSION,
        config: ConfigEcho {
            k: config.k,
            kernel: config.kernel.to_string(),
            folds,
            seed,
            standardize: config.standardize,
        },
        train_auc: Summary::of(&train_values),
        test_auc,
        test_auc_pooled,
        folds: results,
        timings: Some(Timings {
            fit: Summary::of(&fit_seconds),
            predict: Summary::of(&predict_seconds),
            fit_seconds,
            predict_seconds,
        }),
    })
}
