//! Data model and file ingestion: points, labeled datasets, CSV, grayscale
//! frames and feature standardization.

use std::fs::File;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, nonempty real feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint);
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Replace the coordinates in place. Callers must keep them finite.
    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Point::new(coords)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

/// How a label column is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// `1` marks an anomaly, `0` a normal point.
    Anomaly,
    /// Free-form class identifiers.
    Class,
    /// The column is dropped and no labels are kept.
    None,
}

/// Per-point labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// `true` = anomaly.
    Anomaly(Vec<bool>),
    Class(Vec<String>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Anomaly(v) => v.len(),
            Labels::Class(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, indices: &[usize]) -> Labels {
        match self {
            Labels::Anomaly(v) => Labels::Anomaly(indices.iter().map(|&i| v[i]).collect()),
            Labels::Class(v) => Labels::Class(indices.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    fn cell(&self, i: usize) -> String {
        match self {
            Labels::Anomaly(v) => if v[i] { "1" } else { "0" }.to_string(),
            Labels::Class(v) => v[i].clone(),
        }
    }
}

/// Points sharing one dimensionality, with optional labels and feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Vec<Point>,
    dim: usize,
    labels: Option<Labels>,
    feature_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let dim = points.first().map(Point::dim).ok_or(Error::TooFewPoints {
            needed: 1,
            found: 0,
        })?;
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        Ok(LabeledDataset {
            points,
            dim,
            labels: None,
            feature_names: None,
        })
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} points",
                labels.len(),
                self.points.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn anomaly_labels(&self) -> Option<&[bool]> {
        match &self.labels {
            Some(Labels::Anomaly(v)) => Some(v),
            _ => None,
        }
    }

    pub fn class_labels(&self) -> Option<&[String]> {
        match &self.labels {
            Some(Labels::Class(v)) => Some(v),
            _ => None,
        }
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Dataset restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            dim: self.dim,
            labels: self.labels.as_ref().map(|l| l.subset(indices)),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn without_labels(&self) -> LabeledDataset {
        LabeledDataset {
            labels: None,
            ..self.clone()
        }
    }
}

/// Read a CSV file with a header row.
///
/// Parse errors report `row` counting the header as row 0 and `col` as the
/// zero-based column index.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<&str>,
    label_kind: LabelKind,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column, label_kind)
}

pub fn read_csv<R: std::io::Read>(
    reader: R,
    label_column: Option<&str>,
    label_kind: LabelKind,
) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidPoint);
    }

    let mut points = Vec::new();
    let mut anomaly = Vec::new();
    let mut classes = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::InconsistentWidth {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut coords = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| Error::ParseError {
                row,
                col: c,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseError {
                    row,
                    col: c,
                    value: cell.to_string(),
                });
            }
            coords.push(v);
        }
        points.push(Point(coords));
        if let Some(c) = label_idx {
            let cell = &record[c];
            match label_kind {
                LabelKind::Anomaly => {
                    let bad = || Error::ParseError {
                        row,
                        col: c,
                        value: cell.to_string(),
                    };
                    let v: f64 = cell.parse().map_err(|_| bad())?;
                    anomaly.push(if v == 1.0 {
                        true
                    } else if v == 0.0 {
                        false
                    } else {
                        return Err(bad());
                    });
                }
                LabelKind::Class => classes.push(cell.to_string()),
                LabelKind::None => {}
            }
        }
    }
    if points.is_empty() {
        return Err(Error::TooFewPoints {
            needed: 1,
            found: 0,
        });
    }

    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();
    let data = LabeledDataset::new(points)?.with_feature_names(names)?;
    match (label_idx, label_kind) {
        (Some(_), LabelKind::Anomaly) => data.with_labels(Labels::Anomaly(anomaly)),
        (Some(_), LabelKind::Class) => data.with_labels(Labels::Class(classes)),
        _ => Ok(data),
    }
}

/// Write a dataset as CSV. Labels, when present, go to a trailing column
/// named `label_column` (anomalies as `1`/`0`).
pub fn write_csv(data: &LabeledDataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(data, file, label_column)
}

pub fn write_csv_to<W: std::io::Write>(
    data: &LabeledDataset,
    writer: W,
    label_column: &str,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = match data.feature_names() {
        Some(names) => names.to_vec(),
        None => (1..=data.dim()).map(|j| format!("x{j}")).collect(),
    };
    if data.labels().is_some() {
        if header.iter().any(|h| h == label_column) {
            return Err(Error::InvalidArgument(format!(
                "label column {label_column:?} is also a feature name"
            )));
        }
        header.push(label_column.to_string());
    }
    wtr.write_record(&header)?;
    for (i, p) in data.points().iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        if let Some(labels) = data.labels() {
            row.push(labels.cell(i));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features with zero spread. These are centered but not scaled.
    pub constant: Vec<bool>,
}

impl StandardizationParams {
    pub fn apply(&self, p: &Point) -> Result<Point> {
        self.check_dim(p)?;
        let coords = p
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.constant[j] {
                    0.0
                } else {
                    (v - self.mean[j]) / self.std[j]
                }
            })
            .collect();
        Ok(Point(coords))
    }

    pub fn invert(&self, p: &Point) -> Result<Point> {
        self.check_dim(p)?;
        let coords = p
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.constant[j] {
                    self.mean[j]
                } else {
                    v * self.std[j] + self.mean[j]
                }
            })
            .collect();
        Ok(Point(coords))
    }

    pub fn apply_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let points = data
            .points()
            .iter()
            .map(|p| self.apply(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledDataset {
            points,
            ..data.clone()
        })
    }

    fn check_dim(&self, p: &Point) -> Result<()> {
        if p.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: p.dim(),
            });
        }
        Ok(())
    }
}

/// Center and scale every feature to zero mean and unit population std.
pub fn standardize(data: &LabeledDataset) -> Result<(LabeledDataset, StandardizationParams)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            found: n,
        });
    }
    let d = data.dim();
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for p in data.points() {
        for (m, v) in mean.iter_mut().zip(p.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; d];
    for p in data.points() {
        for j in 0..d {
            let c = p[j] - mean[j];
            var[j] += c * c;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / nf).sqrt()).collect();
    let constant = std
        .iter()
        .zip(&mean)
        .map(|(s, m)| *s <= 1e-12 * m.abs().max(1.0))
        .collect();
    let params = StandardizationParams {
        mean,
        std,
        constant,
    };
    let out = params.apply_dataset(data)?;
    Ok((out, params))
}

/// A decoded 8-bit grayscale frame, pixels scaled to `[0, 1]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: u32,
    pub height: u32,
    pub pixels: Point,
}

pub fn read_gray_frame(path: impl AsRef<Path>) -> Result<GrayFrame> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::UnsupportedFormat(format!("{}: {other}", path.display())),
    })?;
    let luma = match img {
        image::DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: expected 8-bit grayscale, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (width, height) = luma.dimensions();
    let pixels = luma.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(GrayFrame {
        width,
        height,
        pixels: Point::new(pixels)?,
    })
}

/// Write a `[0, 1]` pixel vector as a binary (P5) PGM.
pub fn write_pgm(path: impl AsRef<Path>, pixels: &[f64], width: u32, height: u32) -> Result<()> {
    let path = path.as_ref();
    if pixels.len() != (width * height) as usize {
        return Err(Error::DimensionMismatch {
            expected: (width * height) as usize,
            found: pixels.len(),
        });
    }
    let bytes: Vec<u8> = pixels
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(width, height, bytes)
        .ok_or_else(|| Error::InvalidArgument("pixel buffer size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::UnsupportedFormat(other.to_string()),
        })
}

/// Flatten same-size grayscale frames into points of dimension `width * height`.
pub fn frames_to_points<P: AsRef<Path>>(paths: &[P]) -> Result<LabeledDataset> {
    let mut points = Vec::with_capacity(paths.len());
    let mut shape = None;
    for path in paths {
        let frame = read_gray_frame(path)?;
        match shape {
            None => shape = Some((frame.width, frame.height)),
            Some((w, h)) if (w, h) != (frame.width, frame.height) => {
                return Err(Error::DimensionMismatch {
                    expected: (w * h) as usize,
                    found: (frame.width * frame.height) as usize,
                })
            }
            Some(_) => {}
        }
        points.push(frame.pixels);
    }
    LabeledDataset::new(points)
}
