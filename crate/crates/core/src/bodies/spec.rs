//! JSON body specifications.
//!
//! ```json
//! {"family": "weighted_lp", "p": 1, "weights": [1, 2, 3]}
//! {"family": "weighted_lp", "p": "inf", "dim": 8}
//! {"family": "ellipsoid", "matrix": [[0.25, 0], [0, 1]]}
//! {"family": "ellipsoid", "diagonal": [0.25, 1]}
//! {"family": "polytope_h", "rows": [[1, 0], [0, 1]]}
//! {"family": "polytope_v", "vertices": [[1, 0], [0, 1]]}
//! {"family": "polar", "base": {...}}
//! {"family": "linear_image", "map": [[2, 0], [0, 0.5]], "base": {...}}
//! {"family": "complexify", "base": {...}}
//! ```

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{ConvexBody, Family};
use crate::error::{GeomError, Result};
use crate::map::{matrix_from_rows, PositionMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodySpec {
    WeightedLp {
        #[serde(serialize_with = "ser_exponent", deserialize_with = "de_exponent")]
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Ellipsoid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagonal: Option<Vec<f64>>,
    },
    PolytopeH {
        rows: Vec<Vec<f64>>,
    },
    PolytopeV {
        vertices: Vec<Vec<f64>>,
    },
    Polar {
        base: Box<BodySpec>,
    },
    LinearImage {
        map: Vec<Vec<f64>>,
        base: Box<BodySpec>,
    },
    Complexify {
        base: Box<BodySpec>,
    },
}

fn ser_exponent<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if p.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*p)
    }
}

fn de_exponent<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Str(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
        Raw::Str(s) => Err(serde::de::Error::custom(format!("invalid exponent {s:?}"))),
    }
}

impl BodySpec {
    pub fn weighted_lp(p: f64, weights: Vec<f64>) -> Self {
        BodySpec::WeightedLp {
            p,
            weights: Some(weights),
            dim: None,
        }
    }

    pub fn lp_ball(n: usize, p: f64) -> Self {
        BodySpec::WeightedLp {
            p,
            weights: None,
            dim: Some(n),
        }
    }

    pub fn diagonal_ellipsoid(v: Vec<f64>) -> Self {
        BodySpec::Ellipsoid {
            matrix: None,
            diagonal: Some(v),
        }
    }

    pub fn build(&self) -> Result<ConvexBody> {
        match self {
            BodySpec::WeightedLp { p, weights, dim } => {
                let w = match (weights, dim) {
                    (Some(w), None) => w.clone(),
                    (Some(w), Some(n)) if w.len() == *n => w.clone(),
                    (None, Some(n)) => vec![1.0; *n],
                    _ => {
                        return Err(GeomError::InvalidParameter(
                            "weighted_lp needs weights or dim (consistent if both)".into(),
                        ))
                    }
                };
                ConvexBody::weighted_lp(*p, &w)
            }
            BodySpec::Ellipsoid { matrix, diagonal } => match (matrix, diagonal) {
                (Some(m), None) => ConvexBody::ellipsoid(matrix_from_rows(m)?),
                (None, Some(v)) => ConvexBody::diagonal_ellipsoid(v),
                _ => Err(GeomError::InvalidParameter(
                    "ellipsoid needs exactly one of matrix or diagonal".into(),
                )),
            },
            BodySpec::PolytopeH { rows } => ConvexBody::polytope_h(matrix_from_rows(rows)?),
            BodySpec::PolytopeV { vertices } => ConvexBody::polytope_v(matrix_from_rows(vertices)?),
            BodySpec::Polar { base } => base.build()?.polar(),
            BodySpec::LinearImage { map, base } => {
                ConvexBody::linear_image(&PositionMap::from_rows(map)?, &base.build()?)
            }
            BodySpec::Complexify { base } => base.build()?.complexify(),
        }
    }
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ConvexBody {
    /// Specification that rebuilds this body.
    pub fn spec(&self) -> BodySpec {
        match self.family() {
            Family::Ellipsoid { matrix } => {
                if crate::linalg::is_diagonal(matrix) {
                    BodySpec::diagonal_ellipsoid(matrix.diagonal().iter().copied().collect())
                } else {
                    BodySpec::Ellipsoid {
                        matrix: Some(rows_of(matrix)),
                        diagonal: None,
                    }
                }
            }
            Family::WeightedLp { p, weights } => {
                if weights.iter().all(|&w| w == 1.0) {
                    BodySpec::lp_ball(weights.len(), *p)
                } else {
                    BodySpec::weighted_lp(*p, weights.clone())
                }
            }
            Family::PolytopeH { rows } => BodySpec::PolytopeH { rows: rows_of(rows) },
            Family::PolytopeV { vertices } => BodySpec::PolytopeV {
                vertices: rows_of(vertices),
            },
            Family::LinearImage { map, base } => BodySpec::LinearImage {
                map: map.to_rows(),
                base: Box::new(base.spec()),
            },
            Family::Polar { base } => BodySpec::Polar {
                base: Box::new(base.spec()),
            },
            Family::Complexified { base } => BodySpec::Complexify {
                base: Box::new(base.spec()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_families() {
        let src = r#"[
            {"family": "weighted_lp", "p": 1, "weights": [1, 2]},
            {"family": "weighted_lp", "p": "inf", "dim": 2},
            {"family": "ellipsoid", "matrix": [[0.25, 0], [0, 1]]},
            {"family": "ellipsoid", "diagonal": [0.25, 1]},
            {"family": "polytope_h", "rows": [[1, 0], [0, 1]]},
            {"family": "polytope_v", "vertices": [[1, 0], [0, 1]]},
            {"family": "polar", "base": {"family": "weighted_lp", "p": 3, "dim": 2}},
            {"family": "linear_image", "map": [[2, 0], [0, 0.5]],
             "base": {"family": "weighted_lp", "p": 2, "dim": 2}},
            {"family": "complexify", "base": {"family": "weighted_lp", "p": 1, "dim": 2}}
        ]"#;
        let specs: Vec<BodySpec> = serde_json::from_str(src).unwrap();
        for s in &specs {
            let body = s.build().unwrap();
            let back: BodySpec = serde_json::from_str(&serde_json::to_string(&body.spec()).unwrap()).unwrap();
            let rebuilt = back.build().unwrap();
            let x: Vec<f64> = (0..body.dim()).map(|i| 0.3 + i as f64 * 0.7).collect();
            assert!((body.gauge(&x).unwrap() - rebuilt.gauge(&x).unwrap()).abs() < 1e-12);
        }
        assert_eq!(specs[7].build().unwrap().gauge(&[2.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_specs() {
        for src in [
            r#"{"family": "weighted_lp", "p": 1}"#,
            r#"{"family": "ellipsoid", "diagonal": [1, -1]}"#,
            r#"{"family": "polytope_h", "rows": [[1, 0]]}"#,
        ] {
            let s: BodySpec = serde_json::from_str(src).unwrap();
            assert!(s.build().is_err(), "{src}");
        }
        assert!(serde_json::from_str::<BodySpec>(r#"{"family": "simplex"}"#).is_err());
        assert!(serde_json::from_str::<BodySpec>(r#"{"family": "weighted_lp", "p": "big", "dim": 2}"#).is_err());
    }
}
