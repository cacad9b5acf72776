//! Kernel functions, gram matrices, cosine normalization and distances in
//! the induced feature space.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Kernel family and its hyperparameters. A `gamma` of `None` means `1/d`
/// for the dimension `d` of the vectors being compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    Linear,
    Rbf { gamma: Option<f64> },
    Laplacian { gamma: Option<f64> },
    Polynomial { degree: u32, gamma: Option<f64>, coef0: f64 },
    Sigmoid { gamma: Option<f64>, coef0: f64 },
    Cosine,
}

impl KernelFamily {
    /// RBF, Laplacian and polynomial kernels rank anomalies with inverted
    /// score sign.
    pub fn default_orientation(&self) -> f64 {
        match self {
            KernelFamily::Rbf { .. }
            | KernelFamily::Laplacian { .. }
            | KernelFamily::Polynomial { .. } => -1.0,
            _ => 1.0,
        }
    }

    fn gamma(&self) -> Option<Option<f64>> {
        match *self {
            KernelFamily::Rbf { gamma }
            | KernelFamily::Laplacian { gamma }
            | KernelFamily::Polynomial { gamma, .. }
            | KernelFamily::Sigmoid { gamma, .. } => Some(gamma),
            _ => None,
        }
    }
}

/// A kernel together with the sign that makes larger scores mean "more
/// anomalous".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    orientation: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Result<Self> {
        Self::validate(&family)?;
        Ok(KernelSpec {
            orientation: family.default_orientation(),
            family,
        })
    }

    pub fn linear() -> Self {
        KernelSpec {
            family: KernelFamily::Linear,
            orientation: 1.0,
        }
    }

    pub fn rbf(gamma: Option<f64>) -> Result<Self> {
        Self::new(KernelFamily::Rbf { gamma })
    }

    /// Polynomial kernel with `coef0 = 1`.
    pub fn polynomial(degree: u32, gamma: Option<f64>) -> Result<Self> {
        Self::new(KernelFamily::Polynomial {
            degree,
            gamma,
            coef0: 1.0,
        })
    }

    pub fn cosine() -> Self {
        KernelSpec {
            family: KernelFamily::Cosine,
            orientation: 1.0,
        }
    }

    pub fn with_orientation(mut self, sign: f64) -> Result<Self> {
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::BadKernelSpec(format!("orientation {sign}")));
        }
        self.orientation = sign;
        Ok(self)
    }

    /// `+1` or `-1`.
    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn is_linear(&self) -> bool {
        self.family == KernelFamily::Linear
    }

    /// Fill in `gamma = 1/dim` wherever it was left to the default.
    pub fn resolved(mut self, dim: usize) -> Self {
        let g = 1.0 / dim as f64;
        match &mut self.family {
            KernelFamily::Rbf { gamma }
            | KernelFamily::Laplacian { gamma }
            | KernelFamily::Polynomial { gamma, .. }
            | KernelFamily::Sigmoid { gamma, .. } => {
                gamma.get_or_insert(g);
            }
            _ => {}
        }
        self
    }

    fn validate(family: &KernelFamily) -> Result<()> {
        if let Some(Some(g)) = family.gamma() {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::BadKernelSpec(format!("gamma must be > 0, got {g}")));
            }
        }
        match *family {
            KernelFamily::Polynomial { degree: 0, .. } => {
                Err(Error::BadKernelSpec("degree must be >= 1".into()))
            }
            KernelFamily::Polynomial { coef0, .. } | KernelFamily::Sigmoid { coef0, .. }
                if !coef0.is_finite() =>
            {
                Err(Error::BadKernelSpec("coef0 must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value without a dimension check.
    pub(crate) fn eval_raw(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let gamma = |g: Option<f64>| g.unwrap_or(1.0 / x.len() as f64);
        Ok(match self.family {
            KernelFamily::Linear => dot(x, y),
            KernelFamily::Rbf { gamma: g } => (-gamma(g) * sq_dist(x, y)).exp(),
            KernelFamily::Laplacian { gamma: g } => {
                let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                (-gamma(g) * l1).exp()
            }
            KernelFamily::Polynomial {
                degree,
                gamma: g,
                coef0,
            } => (gamma(g) * dot(x, y) + coef0).powi(degree as i32),
            KernelFamily::Sigmoid { gamma: g, coef0 } => (gamma(g) * dot(x, y) + coef0).tanh(),
            KernelFamily::Cosine => {
                let nx = dot(x, x).sqrt();
                let ny = dot(y, y).sqrt();
                if nx == 0.0 || ny == 0.0 {
                    return Err(Error::ZeroVector);
                }
                dot(x, y) / (nx * ny)
            }
        })
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut params: Vec<String> = Vec::new();
        let name = match self.family {
            KernelFamily::Linear => "linear",
            KernelFamily::Cosine => "cosine",
            KernelFamily::Rbf { gamma } | KernelFamily::Laplacian { gamma } => {
                if let Some(g) = gamma {
                    params.push(format!("gamma={g}"));
                }
                if matches!(self.family, KernelFamily::Rbf { .. }) {
                    "rbf"
                } else {
                    "laplacian"
                }
            }
            KernelFamily::Polynomial {
                degree,
                gamma,
                coef0,
            } => {
                params.push(format!("degree={degree}"));
                if let Some(g) = gamma {
                    params.push(format!("gamma={g}"));
                }
                params.push(format!("coef0={coef0}"));
                "poly"
            }
            KernelFamily::Sigmoid { gamma, coef0 } => {
                if let Some(g) = gamma {
                    params.push(format!("gamma={g}"));
                }
                params.push(format!("coef0={coef0}"));
                "sigmoid"
            }
        };
        if self.orientation != self.family.default_orientation() {
            params.push(format!("orientation={}", self.orientation as i32));
        }
        if params.is_empty() {
            f.write_str(name)
        } else {
            write!(f, "{name}:{}", params.join(","))
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses strings such as `linear`, `rbf:gamma=0.1` or
    /// `poly:degree=3,gamma=1,coef0=1`. Any kernel accepts an
    /// `orientation=+1|-1` override.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadKernelSpec(s.to_string());
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (s.trim(), ""),
        };
        let mut gamma = None;
        let mut coef0 = None;
        let mut degree = None;
        let mut orientation = None;
        for kv in rest.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(bad)?;
            let v = v.trim();
            match k.trim() {
                "gamma" => gamma = Some(v.parse::<f64>().map_err(|_| bad())?),
                "coef0" => coef0 = Some(v.parse::<f64>().map_err(|_| bad())?),
                "degree" => degree = Some(v.parse::<u32>().map_err(|_| bad())?),
                "orientation" => orientation = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let family = match name {
            "linear" => KernelFamily::Linear,
            "cosine" => KernelFamily::Cosine,
            "rbf" => KernelFamily::Rbf { gamma },
            "laplacian" => KernelFamily::Laplacian { gamma },
            "poly" | "polynomial" => KernelFamily::Polynomial {
                degree: degree.unwrap_or(3),
                gamma,
                coef0: coef0.unwrap_or(1.0),
            },
            "sigmoid" => KernelFamily::Sigmoid {
                gamma,
                coef0: coef0.unwrap_or(0.0),
            },
            _ => return Err(bad()),
        };
        let takes_gamma = family.gamma().is_some();
        let takes_coef0 = matches!(
            family,
            KernelFamily::Polynomial { .. } | KernelFamily::Sigmoid { .. }
        );
        let takes_degree = matches!(family, KernelFamily::Polynomial { .. });
        if (gamma.is_some() && !takes_gamma)
            || (coef0.is_some() && !takes_coef0)
            || (degree.is_some() && !takes_degree)
        {
            return Err(bad());
        }
        let spec = KernelSpec::new(family)?;
        match orientation {
            Some(o) => spec.with_orientation(o),
            None => Ok(spec),
        }
    }
}

/// Square kernel matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    size: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl GramMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::InvalidArgument("gram matrix must be square".into()));
        }
        Ok(GramMatrix {
            size,
            values: rows.into_iter().flatten().collect(),
            normalized: false,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.size + b]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.size.max(1))
    }

    /// Sum of the strictly upper triangle.
    pub fn upper_sum(&self) -> f64 {
        (0..self.size)
            .flat_map(|a| (a + 1..self.size).map(move |b| (a, b)))
            .map(|(a, b)| self.get(a, b))
            .sum()
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    spec.eval_raw(x, y)
}

pub fn gram<P: AsRef<[f64]>>(spec: &KernelSpec, points: &[P]) -> Result<GramMatrix> {
    let size = points.len();
    if size == 0 {
        return Err(Error::InvalidArgument("gram of an empty point set".into()));
    }
    let d = points[0].as_ref().len();
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: p.as_ref().len(),
        });
    }
    let mut values = vec![0.0; size * size];
    for a in 0..size {
        for b in a..size {
            let v = spec.eval_raw(points[a].as_ref(), points[b].as_ref())?;
            values[a * size + b] = v;
            values[b * size + a] = v;
        }
    }
    Ok(GramMatrix {
        size,
        values,
        normalized: false,
    })
}

/// Cosine normalization `g[a][b] / sqrt(g[a][a] g[b][b])`.
pub fn normalize_gram(g: &GramMatrix) -> Result<GramMatrix> {
    let n = g.size;
    let diag: Vec<f64> = (0..n).map(|a| g.get(a, a)).collect();
    if let Some(i) = diag.iter().position(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::NonpositiveDiagonal(i));
    }
    let inv: Vec<f64> = diag.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut values = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            values[a * n + b] = if a == b {
                1.0
            } else {
                g.get(a, b) * inv[a] * inv[b]
            };
        }
    }
    Ok(GramMatrix {
        size: n,
        values,
        normalized: true,
    })
}

/// Euclidean distance between the feature-space images of `x` and `y`.
pub fn feature_distance(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    let kxx = spec.eval_raw(x, x)?;
    let kyy = spec.eval_raw(y, y)?;
    let kxy = spec.eval_raw(x, y)?;
    Ok(distance_from_kernel(kxx, kxy, kyy))
}

pub(crate) fn distance_from_kernel(kxx: f64, kxy: f64, kyy: f64) -> f64 {
    let r = kxx - 2.0 * kxy + kyy;
    if r < 0.0 {
        if r < -1e-12 {
            log::warn!("negative feature-space radicand {r:e} clamped to 0");
        }
        return 0.0;
    }
    r.sqrt()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_specs() -> Vec<KernelSpec> {
        [
            "linear",
            "rbf:gamma=0.3",
            "laplacian",
            "poly:degree=3",
            "sigmoid:gamma=0.2,coef0=0.5",
            "cosine",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
    }

    #[test]
    fn evaluates_families() {
        let lin = KernelSpec::linear();
        assert_eq!(kernel_eval(&lin, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let rbf = KernelSpec::rbf(Some(2.5)).unwrap();
        assert_eq!(kernel_eval(&rbf, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        let poly: KernelSpec = "poly:degree=3,gamma=1,coef0=0".parse().unwrap();
        assert_eq!(kernel_eval(&poly, &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 8.0);
        assert!(matches!(
            kernel_eval(&lin, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            kernel_eval(&KernelSpec::cosine(), &[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn default_gamma_is_inverse_dimension() {
        let rbf = KernelSpec::rbf(None).unwrap();
        let v = kernel_eval(&rbf, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(rbf.resolved(4).to_string(), "rbf:gamma=0.25");
    }

    #[test]
    fn orientation_table() {
        for (s, o) in [
            ("linear", 1.0),
            ("cosine", 1.0),
            ("sigmoid", 1.0),
            ("rbf", -1.0),
            ("laplacian", -1.0),
            ("poly", -1.0),
        ] {
            assert_eq!(s.parse::<KernelSpec>().unwrap().orientation(), o, "{s}");
        }
        let flipped: KernelSpec = "rbf:gamma=1,orientation=1".parse().unwrap();
        assert_eq!(flipped.orientation(), 1.0);
        assert_eq!(flipped.to_string(), "rbf:gamma=1,orientation=1");
    }

    #[test]
    fn parse_rejects_garbage() {
        for s in ["", "rbf:gamma=-1", "poly:degree=0", "linear:gamma=1", "rbf:gamma", "foo"] {
            assert!(s.parse::<KernelSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn display_round_trips() {
        for spec in all_specs() {
            let again: KernelSpec = spec.to_string().parse().unwrap();
            assert_eq!(again, spec);
        }
    }

    #[test]
    fn gram_examples() {
        let g = gram(&KernelSpec::linear(), &[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(g.rows().collect::<Vec<_>>(), vec![&[1.0, 0.0][..], &[0.0, 1.0][..]]);
        let g = gram(&KernelSpec::rbf(Some(0.7)).unwrap(), &[[1.0, 2.0], [3.0, -1.0], [0.0, 0.5]]).unwrap();
        assert!((0..3).all(|a| g.get(a, a) == 1.0));
    }

    #[test]
    fn normalize_examples() {
        let g = GramMatrix::from_rows(vec![vec![4.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let n = normalize_gram(&g).unwrap();
        assert!(n.is_normalized());
        assert!(n.rows().flatten().all(|&v| (v - 1.0).abs() < 1e-15));
        let again = normalize_gram(&n).unwrap();
        assert!(again.rows().flatten().zip(n.rows().flatten()).all(|(a, b)| (a - b).abs() < 1e-12));
        let unit = [[0.6, 0.8], [1.0, 0.0], [0.0, -1.0]];
        let g = gram(&KernelSpec::linear(), &unit).unwrap();
        let n = normalize_gram(&g).unwrap();
        assert!(n.rows().flatten().zip(g.rows().flatten()).all(|(a, b)| (a - b).abs() < 1e-12));
        let bad = GramMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(normalize_gram(&bad), Err(Error::NonpositiveDiagonal(1))));
    }

    #[test]
    fn rbf_distance_closed_form() {
        let spec = KernelSpec::rbf(Some(0.4)).unwrap();
        let mut prev = -1.0;
        for i in 0..20 {
            let r = i as f64 * 0.25;
            let d = feature_distance(&spec, &[0.0, 0.0], &[r, 0.0]).unwrap();
            let closed = (2.0 - 2.0 * (-0.4 * r * r).exp()).sqrt();
            assert!((d - closed).abs() < 1e-12);
            assert!(d >= prev);
            prev = d;
        }
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..6).prop_flat_map(|d| {
            (
                prop::collection::vec(-5.0..5.0f64, d),
                prop::collection::vec(-5.0..5.0f64, d),
            )
        })
    }

    proptest! {
        #[test]
        fn linear_distance_is_euclidean((x, y) in vec_pair()) {
            let d = feature_distance(&KernelSpec::linear(), &x, &y).unwrap();
            let e = sq_dist(&x, &y).sqrt();
            prop_assert!((d - e).abs() <= 1e-10 * e.max(1.0));
        }

        #[test]
        fn distance_symmetric_nonnegative((x, y) in vec_pair()) {
            prop_assume!(x.iter().any(|v| *v != 0.0) && y.iter().any(|v| *v != 0.0));
            for spec in all_specs() {
                let a = feature_distance(&spec, &x, &y).unwrap();
                let b = feature_distance(&spec, &y, &x).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
                prop_assert_eq!(feature_distance(&spec, &x, &x).unwrap(), 0.0);
            }
        }

        #[test]
        fn gram_symmetric_and_normalized_bounded(
            pts in (1usize..5).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), 2..8))
        ) {
            prop_assume!(pts.iter().all(|p| p.iter().any(|v| v.abs() > 1e-6)));
            for spec in all_specs() {
                let g = gram(&spec, &pts).unwrap();
                for a in 0..g.size() {
                    for b in 0..g.size() {
                        prop_assert!((g.get(a, b) - g.get(b, a)).abs() <= 1e-12 * g.get(a, b).abs().max(1.0));
                    }
                }
                if let Ok(n) = normalize_gram(&g) {
                    for a in 0..n.size() {
                        prop_assert!((n.get(a, a) - 1.0).abs() <= 1e-12);
                        for b in 0..n.size() {
                            // sigmoid is indefinite, so only PSD kernels are bounded
                            if !matches!(spec.family, KernelFamily::Sigmoid { .. }) {
                                prop_assert!(n.get(a, b).abs() <= 1.0 + 1e-12);
                            }
                        }
                    }
                }
            }
        }
    }
}
