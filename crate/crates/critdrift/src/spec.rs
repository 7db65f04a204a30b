//! Parsers for the compact domain and field strings used in configs and flags,
//! e.g. `ball:R=1`, `annulus:r0=0.1,R=1`, `bump:eps=0.05,r=0.125,p=3`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use critdrift_core::field::{bump_lattice_drift, radial_drift, Drift, VectorField};
use critdrift_core::lorentz::ScalarField;
use critdrift_core::{Domain, Grid};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

fn split(what: &'static str, input: &str) -> Result<(String, BTreeMap<String, f64>)> {
    let (name, rest) = match input.split_once(':') {
        Some((n, r)) => (n.trim(), r.trim()),
        None => (input.trim(), ""),
    };
    let mut params = BTreeMap::new();
    for kv in rest.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Parse {
            what,
            input: input.into(),
            reason: format!("`{kv}` is not key=value"),
        })?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::Parse {
            what,
            input: input.into(),
            reason: format!("`{v}` is not a number"),
        })?;
        params.insert(k.trim().to_string(), v);
    }
    if name.is_empty() {
        return Err(CliError::Parse { what, input: input.into(), reason: "empty name".into() });
    }
    Ok((name.to_string(), params))
}

fn take(what: &'static str, input: &str, params: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    params.get(key).copied().or(default).ok_or_else(|| CliError::Parse {
        what,
        input: input.into(),
        reason: format!("missing `{key}`"),
    })
}

fn reject_unknown(what: &'static str, input: &str, params: &BTreeMap<String, f64>, known: &[&str]) -> Result<()> {
    match params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(CliError::Parse { what, input: input.into(), reason: format!("unknown key `{k}`") }),
        None => Ok(()),
    }
}

/// Parses `ball:R=..`, `cube`, `box:lx=..,ly=..,lz=..` or `annulus:r0=..,R=..`.
pub fn parse_domain(input: &str) -> Result<Domain> {
    const W: &str = "domain";
    let (name, p) = split(W, input)?;
    let d = match name.as_str() {
        "ball" => {
            reject_unknown(W, input, &p, &["R"])?;
            Domain::ball(take(W, input, &p, "R", Some(1.0))?)
        }
        "cube" => {
            reject_unknown(W, input, &p, &[])?;
            Domain::unit_cube()
        }
        "box" => {
            reject_unknown(W, input, &p, &["lx", "ly", "lz"])?;
            let l = ["lx", "ly", "lz"].map(|k| p.get(k).copied().unwrap_or(1.0));
            Domain::cuboid([0.0; 3], l)
        }
        "annulus" => {
            reject_unknown(W, input, &p, &["r0", "R"])?;
            Domain::annulus(take(W, input, &p, "r0", None)?, take(W, input, &p, "R", Some(1.0))?)
        }
        other => {
            return Err(CliError::Parse { what: W, input: input.into(), reason: format!("unknown domain `{other}`") })
        }
    };
    d.validate()?;
    Ok(d)
}

/// A named scalar or vector field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FieldSpec {
    Zero,
    Constant { value: f64 },
    /// `|x|^a`.
    Power { a: f64 },
    /// Indicator of `B_R(0)`.
    Indicator { radius: f64 },
    Linear,
    Paraboloid,
    /// `-M x/|x|^2`.
    Radial { m: f64 },
    Bump { eps: f64, r: f64, p: f64 },
    ConstantVector { v: [f64; 3] },
    /// `|x - c|^a (1 - |x - c|^2/R^2)_+^2 e_1`.
    Spike { center: [f64; 3], a: f64, radius: f64 },
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Zero => write!(f, "zero"),
            FieldSpec::Constant { value } => write!(f, "const:v={value}"),
            FieldSpec::Power { a } => write!(f, "power:a={a}"),
            FieldSpec::Indicator { radius } => write!(f, "indicator:R={radius}"),
            FieldSpec::Linear => write!(f, "linear"),
            FieldSpec::Paraboloid => write!(f, "paraboloid"),
            FieldSpec::Radial { m } => write!(f, "radial:M={m}"),
            FieldSpec::Bump { eps, r, p } => write!(f, "bump:eps={eps},r={r},p={p}"),
            FieldSpec::ConstantVector { v } => write!(f, "vector:x={},y={},z={}", v[0], v[1], v[2]),
            FieldSpec::Spike { center: c, a, radius } => {
                write!(f, "spike:x={},y={},z={},a={a},R={radius}", c[0], c[1], c[2])
            }
        }
    }
}

pub fn parse_field(input: &str) -> Result<FieldSpec> {
    const W: &str = "field";
    let (name, p) = split(W, input)?;
    let get = |k: &str, d: Option<f64>| take(W, input, &p, k, d);
    let spec = match name.as_str() {
        "zero" => {
            reject_unknown(W, input, &p, &[])?;
            FieldSpec::Zero
        }
        "const" => {
            reject_unknown(W, input, &p, &["v"])?;
            FieldSpec::Constant { value: get("v", Some(1.0))? }
        }
        "power" => {
            reject_unknown(W, input, &p, &["a"])?;
            FieldSpec::Power { a: get("a", None)? }
        }
        "indicator" => {
            reject_unknown(W, input, &p, &["R"])?;
            FieldSpec::Indicator { radius: get("R", None)? }
        }
        "linear" => FieldSpec::Linear,
        "paraboloid" => FieldSpec::Paraboloid,
        "radial" => {
            reject_unknown(W, input, &p, &["M"])?;
            FieldSpec::Radial { m: get("M", None)? }
        }
        "bump" => {
            reject_unknown(W, input, &p, &["eps", "r", "p"])?;
            FieldSpec::Bump { eps: get("eps", Some(1.0))?, r: get("r", None)?, p: get("p", Some(3.0))? }
        }
        "vector" => {
            reject_unknown(W, input, &p, &["x", "y", "z"])?;
            FieldSpec::ConstantVector { v: ["x", "y", "z"].map(|k| p.get(k).copied().unwrap_or(0.0)) }
        }
        "spike" => {
            reject_unknown(W, input, &p, &["x", "y", "z", "a", "R"])?;
            FieldSpec::Spike {
                center: ["x", "y", "z"].map(|k| p.get(k).copied().unwrap_or(0.0)),
                a: get("a", Some(-0.25))?,
                radius: get("R", Some(0.5))?,
            }
        }
        other => {
            return Err(CliError::Parse { what: W, input: input.into(), reason: format!("unknown field `{other}`") })
        }
    };
    if spec.to_string().contains("NaN") {
        return Err(CliError::Parse { what: W, input: input.into(), reason: "NaN parameter".into() });
    }
    Ok(spec)
}

fn norm(x: &[f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

impl FieldSpec {
    pub fn is_vector(&self) -> bool {
        matches!(
            self,
            FieldSpec::Radial { .. } | FieldSpec::Bump { .. } | FieldSpec::ConstantVector { .. } | FieldSpec::Spike { .. }
        )
    }

    /// Sampled field; vector fields are reduced to `|b|`.
    pub fn scalar(&self, grid: &Arc<Grid>) -> Result<ScalarField> {
        let f = match *self {
            FieldSpec::Zero => ScalarField::zeros(grid),
            FieldSpec::Constant { value } => ScalarField::constant(grid, value),
            FieldSpec::Power { a } => ScalarField::from_fn(grid, |x| norm(x).powf(a))?,
            FieldSpec::Indicator { radius } => ScalarField::from_fn(grid, |x| if norm(x) < radius { 1.0 } else { 0.0 })?,
            FieldSpec::Linear => ScalarField::from_fn(grid, |x| x[0])?,
            FieldSpec::Paraboloid => ScalarField::from_fn(grid, |x| (1.0 - norm(x).powi(2)) / 6.0)?,
            _ => self.drift(grid)?.field.magnitude(),
        };
        Ok(f)
    }

    /// Vector field with its closed-form divergence where one exists.
    pub fn drift(&self, grid: &Arc<Grid>) -> Result<Drift> {
        Ok(match *self {
            FieldSpec::Zero => Drift::new(VectorField::zeros(grid)),
            FieldSpec::Radial { m } => radial_drift(grid, m)?,
            FieldSpec::Bump { eps, r, p } => bump_lattice_drift(grid, eps, r, p)?,
            FieldSpec::ConstantVector { v } => Drift::new(VectorField::constant(grid, v)),
            FieldSpec::Spike { center, a, radius } => Drift::new(VectorField::from_fn(grid, |x| {
                let d = norm(&[x[0] - center[0], x[1] - center[1], x[2] - center[2]]);
                if d < radius && d > 0.0 {
                    [d.powf(a) * (1.0 - (d / radius).powi(2)).powi(2), 0.0, 0.0]
                } else {
                    [0.0; 3]
                }
            })?),
            _ => {
                return Err(CliError::Parse {
                    what: "field",
                    input: self.to_string(),
                    reason: "not a vector field".into(),
                })
            }
        })
    }
}
