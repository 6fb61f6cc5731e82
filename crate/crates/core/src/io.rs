//! Space files and serialization helpers.
//!
//! A space file is JSON:
//!
//! ```json
//! { "points": ["a", "b"],
//!   "metric": {"kind": "matrix", "data": [[0, 1], [1, 0]]},
//!   "weights": [0.5, 0.5],
//!   "base": 0 }
//! ```
//!
//! with `metric` one of `{"kind": "matrix", "data"}`, `{"kind":
//! "euclidean", "coords"}` or `{"kind": "graph", "edges": [[i, j, len]]}`
//! (shortest-path closure computed at load). `weights` defaults to uniform
//! and `base` to 0; an optional `resolution` declares the sample spacing.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Geometry, Metric};
use crate::models::shortest_path_closure;
use crate::space::{validate, FiniteSpace, Point, PointedSpace, TRIANGLE_TOLERANCE};
use crate::transport::Interpolator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricFile {
    Matrix { data: Vec<Vec<f64>> },
    Euclidean { coords: Vec<Vec<f64>> },
    Graph { edges: Vec<(usize, usize, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub points: Vec<String>,
    pub metric: MetricFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub base: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
}

impl SpaceFile {
    /// Builds and validates the space.
    pub fn build(&self) -> Result<PointedSpace> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::Format("no points".into()));
        }
        let weights = match &self.weights {
            Some(w) if w.len() != n => {
                return Err(Error::Format(format!("{} weights for {n} points", w.len())));
            }
            Some(w) => w.clone(),
            None => vec![1.0 / n as f64; n],
        };
        let ids = || self.points.iter().map(|id| Point::new(id.clone())).collect::<Vec<_>>();
        let (space, check) = match &self.metric {
            MetricFile::Matrix { data } => {
                if data.len() != n || data.iter().any(|r| r.len() != n) {
                    return Err(Error::Format(format!("metric matrix must be {n}×{n}")));
                }
                let m = Array2::from_shape_fn((n, n), |(i, j)| data[i][j]);
                (FiniteSpace::new(ids(), Metric::from_matrix(m), weights)?, true)
            }
            MetricFile::Graph { edges } => {
                let m = shortest_path_closure(n, edges)?;
                let longest = edges.iter().map(|e| e.2).fold(0.0, f64::max);
                let s = FiniteSpace::new(ids(), Metric::from_matrix(m), weights)?
                    .with_interpolator(Interpolator::metric_search(2.0 * longest));
                (s, true)
            }
            MetricFile::Euclidean { coords } => {
                let dim = coords.first().map_or(0, Vec::len);
                if coords.len() != n || dim == 0 || coords.iter().any(|c| c.len() != dim) {
                    return Err(Error::Format(format!("need {n} coordinate rows of equal positive length")));
                }
                if coords.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Format("non-finite coordinate".into()));
                }
                let c = Array2::from_shape_fn((n, dim), |(i, d)| coords[i][d]);
                let points = self.points.iter().zip(coords).map(|(id, c)| Point::with_coords(id.clone(), c.clone())).collect();
                let mut s = FiniteSpace::new(points, Metric::from_coords(c, Geometry::Lp { p: 2.0 }), weights)?;
                if let Some(h) = self.resolution {
                    s = s.with_interpolator(Interpolator::chart(h * (dim as f64).sqrt()));
                }
                // a norm metric needs no triangle scan
                (s, false)
            }
        };
        let space = match self.resolution {
            Some(h) if h > 0.0 => space.with_resolution(h),
            Some(h) => return Err(Error::Format(format!("resolution must be positive, got {h}"))),
            None => space,
        };
        if check {
            let rep = validate(&space, TRIANGLE_TOLERANCE);
            if let Some(v) = rep.violations.first() {
                return Err(Error::InvalidSpace(format!("{} violation(s), first: {v:?}", rep.total)));
            }
        }
        if self.base >= n {
            return Err(Error::Format(format!("base {} out of range", self.base)));
        }
        PointedSpace::new(space, self.base)
    }

    /// Dense-matrix file for any space.
    pub fn from_space(space: &PointedSpace) -> Self {
        let s = space.space();
        let m = s.metric().to_matrix();
        SpaceFile {
            points: s.points().iter().map(|p| p.id.clone()).collect(),
            metric: MetricFile::Matrix { data: m.outer_iter().map(|r| r.to_vec()).collect() },
            weights: Some(s.weights().to_vec()),
            base: space.base(),
            resolution: s.resolution(),
        }
    }
}

pub fn parse_space(json: &str) -> Result<PointedSpace> {
    let f: SpaceFile = serde_json::from_str(json)?;
    f.build()
}

pub fn load_space(path: impl AsRef<Path>) -> Result<PointedSpace> {
    parse_space(&std::fs::read_to_string(path)?)
}

pub fn space_to_json(space: &PointedSpace) -> Result<String> {
    Ok(serde_json::to_string(&SpaceFile::from_space(space))?)
}

/// Serializes extended reals, writing `±∞` and NaN as the strings `"inf"`,
/// `"-inf"` and `"nan"` (JSON has no literal for them).
pub mod ext_real {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct ExtVisitor;

    impl Visitor<'_> for ExtVisitor {
        type Value = f64;
        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }
        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }
        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }
        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }
        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::custom(format!("unexpected `{v}`"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(ExtVisitor)
    }
}
