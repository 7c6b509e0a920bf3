//! Model file format.
//!
//! A model file is a JSON object with a `kind` tag, kind-specific `params`,
//! and optional declared geometry constants:
//!
//! ```json
//! {
//!   "kind": "lattice",
//!   "params": { "dim": 2, "spacing": "1" },
//!   "declared_separation": "1",
//!   "declared_ball_bounds": [ { "radius": "2", "bound": 25 } ]
//! }
//! ```
//!
//! Numeric fields accept exact decimal strings (`"0.3"`, `"7/4"`) or JSON
//! numbers; numbers are converted through their exact binary value, so write
//! strings when a denominator is not a power of two.

use super::{GapRule, PointModel};
use crate::dist::parse_rational;
use crate::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::FromPrimitive;
use serde_json::Value;

pub(crate) fn value_to_rational(v: &Value) -> Option<BigRational> {
    match v {
        Value::String(s) => parse_rational(s),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Some(BigRational::from_integer(BigInt::from(i)))
            } else {
                BigRational::from_f64(n.as_f64()?)
            }
        }
        _ => None,
    }
}

fn get_rational(obj: &Value, field: &str) -> Result<Option<BigRational>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => value_to_rational(v)
            .map(Some)
            .ok_or_else(|| Error::ModelFile(format!("bad rational in `{field}`: {v}"))),
    }
}

fn require_rational(obj: &Value, field: &str) -> Result<BigRational> {
    get_rational(obj, field)?
        .ok_or_else(|| Error::ModelFile(format!("missing field `{field}`")))
}

fn rational_vec(v: &Value, field: &str) -> Result<Vec<BigRational>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::ModelFile(format!("`{field}` must be an array")))?;
    arr.iter()
        .map(|x| {
            value_to_rational(x)
                .ok_or_else(|| Error::ModelFile(format!("bad rational in `{field}`: {x}")))
        })
        .collect()
}

/// Parse a model description from JSON text.
pub fn model_from_json_str(text: &str) -> Result<PointModel> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| Error::ModelFile(format!("invalid JSON: {e}")))?;
    let kind = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::ModelFile("missing `kind`".into()))?;
    let params = v.get("params").cloned().unwrap_or(Value::Null);
    let mut model = match kind {
        "finite_cloud" => {
            let pts = params
                .get("points")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::ModelFile("`params.points` must be an array".into()))?;
            let mut points = Vec::with_capacity(pts.len());
            for p in pts {
                let label = p
                    .get("label")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::ModelFile("point without `label`".into()))?;
                let coords = rational_vec(
                    p.get("coords")
                        .ok_or_else(|| Error::ModelFile("point without `coords`".into()))?,
                    "coords",
                )?;
                points.push((label.to_string(), coords));
            }
            PointModel::finite_cloud(points)?
        }
        "lattice" => {
            let dim = params
                .get("dim")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::ModelFile("missing `params.dim`".into()))?
                as usize;
            let spacing = require_rational(&params, "spacing")?;
            match params.get("offset") {
                None | Some(Value::Null) => PointModel::lattice(dim, spacing)?,
                Some(off) => PointModel::lattice_with_offset(
                    dim,
                    spacing,
                    rational_vec(off, "offset")?,
                )?,
            }
        }
        "lattice_with_defects" => {
            let dim = params
                .get("dim")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::ModelFile("missing `params.dim`".into()))?
                as usize;
            let spacing = require_rational(&params, "spacing")?;
            let offset = match params.get("offset") {
                None | Some(Value::Null) => vec![num_traits::Zero::zero(); dim],
                Some(off) => rational_vec(off, "offset")?,
            };
            let removed = match params.get("removed") {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(rows)) => {
                    let mut out = Vec::with_capacity(rows.len());
                    for row in rows {
                        let ks = row
                            .as_array()
                            .ok_or_else(|| {
                                Error::ModelFile("`removed` entries must be integer arrays".into())
                            })?
                            .iter()
                            .map(|x| {
                                x.as_i64().ok_or_else(|| {
                                    Error::ModelFile("`removed` entries must be integers".into())
                                })
                            })
                            .collect::<Result<Vec<i64>>>()?;
                        out.push(ks);
                    }
                    out
                }
                Some(other) => {
                    return Err(Error::ModelFile(format!("bad `removed`: {other}")));
                }
            };
            let added = match params.get("added") {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(rows)) => rows
                    .iter()
                    .map(|row| rational_vec(row, "added"))
                    .collect::<Result<Vec<_>>>()?,
                Some(other) => {
                    return Err(Error::ModelFile(format!("bad `added`: {other}")));
                }
            };
            PointModel::lattice_with_defects(dim, spacing, offset, removed, added)?
        }
        "cluster_sequence" => {
            let templates = match params.get("templates") {
                Some(Value::Array(rows)) => rows
                    .iter()
                    .map(|row| rational_vec(row, "templates"))
                    .collect::<Result<Vec<_>>>()?,
                _ => {
                    return Err(Error::ModelFile(
                        "`params.templates` must be an array of offset arrays".into(),
                    ))
                }
            };
            let gap: GapRule = match params.get("gap") {
                None | Some(Value::Null) => {
                    GapRule::Linear { a: "1".into(), b: "1".into() }
                }
                Some(g) => serde_json::from_value(g.clone())
                    .map_err(|e| Error::ModelFile(format!("bad `gap`: {e}")))?,
            };
            let offset = get_rational(&params, "offset")?.unwrap_or_else(num_traits::Zero::zero);
            PointModel::cluster_sequence(templates, gap, offset)?
        }
        "wedge_of_rays" => {
            let rays = params
                .get("rays")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::ModelFile("missing `params.rays`".into()))?;
            let rays = u32::try_from(rays)
                .map_err(|_| Error::ModelFile("`params.rays` is too large".into()))?;
            PointModel::wedge_of_rays(rays)?
        }
        other => {
            return Err(Error::ModelFile(format!("unknown model kind `{other}`")));
        }
    };
    if let Some(sep) = get_rational(&v, "declared_separation")? {
        model = model.with_declared_separation(sep);
    }
    if let Some(bounds) = v.get("declared_ball_bounds") {
        let rows = bounds
            .as_array()
            .ok_or_else(|| Error::ModelFile("`declared_ball_bounds` must be an array".into()))?;
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let radius = require_rational(row, "radius")?;
            let bound = row
                .get("bound")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::ModelFile("ball bound entry without `bound`".into()))?;
            out.push((radius, bound as usize));
        }
        model = model.with_declared_ball_bounds(out);
    }
    Ok(model)
}
