//! Curvature anomaly detection.
//!
//! Each point is scored by how sharply its nearest neighbors bend around it:
//! the sum of cosines between all pairs of edges from the point to its `k`
//! nearest neighbors. Kernel variants compute the same quantity in a
//! kernel-induced feature space. Negated scores rank points for prototype
//! selection, and the analytic score gradient drives points from anomalous
//! regions toward normal ones.

pub mod cad;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod kernels;
pub mod neighbors;
pub mod prototype;
pub mod synth;

pub use cad::{fit, AnomalyScore, CadModel, Cluster, Label, NeighborSource, Prediction, ScoreSplit};
pub use dataset::{LabelKind, LabeledDataset, Labels, Point, StandardizationParams};
pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec};
pub use eval::{kfold_cv, roc_auc, CvReport, DetectorConfig};
pub use geometry::{anomaly_path, cad_gradient, denoise, landscape, AnomalyField, AnomalyPath, Termination};
pub use neighbors::NeighborSet;
pub use prototype::{rank, retain_by_split, select_for_task, select_top, Policy, Ranking, Task};
pub use synth::{run_synthetic, Shape};
