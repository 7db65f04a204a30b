//! Vector fields on grids, the singular drifts, discrete divergence, drift
//! decompositions and mollification.

use alloc::sync::Arc;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::lorentz::{lorentz_quasinorm, LorentzSpec, ScalarField};
use crate::util::norm3;
use crate::{Error, Result};

/// `R^3`-valued function sampled at grid nodes.
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: Arc<Grid>,
    comps: Vec<[f64; 3]>,
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, comps: Vec<[f64; 3]>) -> Result<Self> {
        if comps.len() != grid.len() {
            return Err(Error::Dimension { expected: grid.len(), got: comps.len() });
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector field samples"));
        }
        Ok(VectorField { grid, comps })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Result<Self> {
        let comps = grid.coords().iter().map(f).collect();
        Self::new(grid.clone(), comps)
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VectorField { grid: grid.clone(), comps: alloc::vec![[0.0; 3]; grid.len()] }
    }

    pub fn constant(grid: &Arc<Grid>, v: [f64; 3]) -> Self {
        VectorField { grid: grid.clone(), comps: alloc::vec![v; grid.len()] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> &[[f64; 3]] {
        &self.comps
    }

    pub fn component(&self, axis: usize) -> ScalarField {
        let v = self.comps.iter().map(|c| c[axis]).collect();
        ScalarField::new(self.grid.clone(), v).expect("component of a valid field")
    }

    /// `|b|` per node.
    pub fn magnitude(&self) -> ScalarField {
        let v = self.comps.iter().map(norm3).collect();
        ScalarField::new(self.grid.clone(), v).expect("magnitude of a valid field")
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        let comps = self.comps.iter().map(|c| [s * c[0], s * c[1], s * c[2]]).collect();
        VectorField { grid: self.grid.clone(), comps }
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: f64, other: &VectorField) -> Result<VectorField> {
        if self.grid.id() != other.grid.id() {
            return Err(Error::GridMismatch);
        }
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]])
            .collect();
        Ok(VectorField { grid: self.grid.clone(), comps })
    }

    /// `φ b` for a scalar `φ` on the same grid.
    pub fn times(&self, phi: &ScalarField) -> Result<VectorField> {
        if self.grid.id() != phi.grid().id() {
            return Err(Error::GridMismatch);
        }
        let comps = self
            .comps
            .iter()
            .zip(phi.values())
            .map(|(c, s)| [s * c[0], s * c[1], s * c[2]])
            .collect();
        Ok(VectorField { grid: self.grid.clone(), comps })
    }

    /// Discrete divergence: centered differences, one-sided where a neighbour is
    /// missing, zero along an axis with no neighbour at all.
    pub fn divergence(&self) -> ScalarField {
        let g = &self.grid;
        let h = g.spacing();
        let mut out = alloc::vec![0.0; g.len()];
        for (n, o) in out.iter_mut().enumerate() {
            let mut d = 0.0;
            for a in 0..3 {
                let p = g.neighbor(n, a, 1);
                let m = g.neighbor(n, a, -1);
                d += match (p, m) {
                    (Some(p), Some(m)) => (self.comps[p][a] - self.comps[m][a]) / (2.0 * h),
                    (Some(p), None) => (self.comps[p][a] - self.comps[n][a]) / h,
                    (None, Some(m)) => (self.comps[n][a] - self.comps[m][a]) / h,
                    (None, None) => 0.0,
                };
            }
            *o = d;
        }
        ScalarField::new(g.clone(), out).expect("finite differences of finite data")
    }

    /// Largest per-node, per-component deviation from `other`.
    pub fn max_deviation(&self, other: &VectorField) -> Result<f64> {
        if self.grid.id() != other.grid.id() {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
            .fold(0.0, f64::max))
    }
}

/// A drift field, optionally with its pointwise divergence in closed form.
#[derive(Clone, Debug)]
pub struct Drift {
    pub field: VectorField,
    /// Absolutely continuous part of `div b`, evaluated at the nodes.
    pub analytic_divergence: Option<ScalarField>,
}

impl Drift {
    pub fn new(field: VectorField) -> Self {
        Drift { field, analytic_divergence: None }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.field.grid()
    }

    /// Analytic divergence when attached, discrete otherwise.
    pub fn best_divergence(&self) -> ScalarField {
        match &self.analytic_divergence {
            Some(d) => d.clone(),
            None => self.field.divergence(),
        }
    }
}

/// `-M x/|x|^2`.
pub fn radial_drift_at(m: f64, x: &[f64; 3]) -> [f64; 3] {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    [-m * x[0] / r2, -m * x[1] / r2, -m * x[2] / r2]
}

/// `b(x) = -M x/|x|^2` with `div b = -M(n-2)/|x|^2`.
pub fn radial_drift(grid: &Arc<Grid>, m: f64) -> Result<Drift> {
    let n = grid.domain().dim as f64;
    let field = VectorField::from_fn(grid, |x| radial_drift_at(m, x))?;
    let div = ScalarField::from_fn(grid, |x| {
        -m * (n - 2.0) / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    })?;
    Ok(Drift { field, analytic_divergence: Some(div) })
}

/// `b(x) = Σ_k ε |x - 2rk|^{-n/p} 1_{B_r(2rk)}(x)`, pointing away from each bump
/// center. The attached divergence `ε(n - 1 - n/p)|x - c|^{-1-n/p}` is the part
/// inside the bumps; the jump across each bump sphere is not included.
pub fn bump_lattice_drift(grid: &Arc<Grid>, eps: f64, r: f64, p: f64) -> Result<Drift> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("bump amplitude must be positive"));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter("bump radius must lie in (0, 1)"));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidParameter("bump exponent p must exceed 1"));
    }
    let n = grid.domain().dim as f64;
    let s = n / p;
    let mut comps = Vec::with_capacity(grid.len());
    let mut div = Vec::with_capacity(grid.len());
    for x in grid.coords() {
        let c = bump_center(x, r);
        let dist = norm3(&[x[0] - c[0], x[1] - c[1], x[2] - c[2]]);
        if dist == 0.0 {
            return Err(Error::NonFinite("grid node at a bump center"));
        }
        comps.push(bump_lattice_at(eps, r, p, x));
        div.push(if dist < r { eps * (n - 1.0 - s) * dist.powf(-s - 1.0) } else { 0.0 });
    }
    let field = VectorField::new(grid.clone(), comps)?;
    let div = ScalarField::new(grid.clone(), div)?;
    Ok(Drift { field, analytic_divergence: Some(div) })
}

/// Value of the bump lattice drift at `x` (`n = 3`); zero at a bump center.
pub fn bump_lattice_at(eps: f64, r: f64, p: f64, x: &[f64; 3]) -> [f64; 3] {
    let c = bump_center(x, r);
    let d = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
    let dist = norm3(&d);
    if dist >= r || dist == 0.0 {
        return [0.0; 3];
    }
    let mag = eps * dist.powf(-3.0 / p) / dist;
    [mag * d[0], mag * d[1], mag * d[2]]
}

/// Nearest point of the bump lattice `2rZ^3`.
pub fn bump_center(x: &[f64; 3], r: f64) -> [f64; 3] {
    let s = 2.0 * r;
    [(x[0] / s).round() * s, (x[1] / s).round() * s, (x[2] / s).round() * s]
}

/// How to split `b = b1 + b2 + b3`.
#[derive(Clone, Debug)]
pub enum Strategy {
    /// `b1 = b + Kx/n`, `b2 = -Kx/n`, `b3 = 0`; needs `div b ≥ -K`.
    RadialShift { k: f64 },
    /// A user supplied split; `sign_claim` asks for `div b1 ≥ 0` to be checked.
    Explicit { b1: VectorField, b2: VectorField, b3: VectorField, sign_claim: bool },
}

/// `b = b1 + b2 + b3` with the discrete divergences and the checked flags.
#[derive(Clone, Debug)]
pub struct DriftDecomposition {
    pub b1: VectorField,
    pub b2: VectorField,
    pub b3: VectorField,
    pub div_b1: ScalarField,
    pub div_b2: ScalarField,
    pub div_b3: ScalarField,
    pub k: f64,
    /// `max |b1 + b2 + b3 - b|` over nodes and components.
    pub reconstruction_defect: f64,
    /// `min div b1`, using the closed-form divergence when one is attached.
    pub min_div_b1: f64,
    pub sign_condition: bool,
}

impl DriftDecomposition {
    /// Allowed negative part of `div b1`.
    pub fn sign_tolerance(grid: &Grid) -> f64 {
        10.0 * grid.spacing()
    }
}

pub fn decompose_drift(b: &Drift, strategy: Strategy) -> Result<DriftDecomposition> {
    let grid = b.grid().clone();
    let tol = DriftDecomposition::sign_tolerance(&grid);
    match strategy {
        Strategy::RadialShift { k } => {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter("shift constant K must be finite and ≥ 0"));
            }
            let n = grid.domain().dim as f64;
            let shift = VectorField::from_fn(&grid, |x| [k * x[0] / n, k * x[1] / n, k * x[2] / n])?;
            let b1 = b.field.axpy(1.0, &shift)?;
            let b2 = shift.scaled(-1.0);
            let b3 = VectorField::zeros(&grid);
            let div_b1 = b1.divergence();
            let div_b2 = b2.divergence();
            let div_b3 = ScalarField::zeros(&grid);
            let reconstruction_defect = sum3(&b1, &b2, &b3)?.max_deviation(&b.field)?;
            let min_div_b1 = match &b.analytic_divergence {
                Some(d) => d.values().iter().fold(f64::INFINITY, |m, v| m.min(v + k)),
                None => min_of(&div_b1),
            };
            if min_div_b1 < -tol {
                return Err(Error::SignCondition(min_div_b1));
            }
            Ok(DriftDecomposition {
                b1,
                b2,
                b3,
                div_b1,
                div_b2,
                div_b3,
                k,
                reconstruction_defect,
                min_div_b1,
                sign_condition: true,
            })
        }
        Strategy::Explicit { b1, b2, b3, sign_claim } => {
            for f in [&b1, &b2, &b3] {
                if f.grid().id() != grid.id() {
                    return Err(Error::GridMismatch);
                }
            }
            let reconstruction_defect = sum3(&b1, &b2, &b3)?.max_deviation(&b.field)?;
            let scale = b.field.components().iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            if reconstruction_defect > 1e-12 * scale {
                return Err(Error::Reconstruction(reconstruction_defect));
            }
            let div_b1 = b1.divergence();
            let div_b2 = b2.divergence();
            let div_b3 = b3.divergence();
            let min_div_b1 = min_of(&div_b1);
            let sign_condition = min_div_b1 >= -tol;
            if sign_claim && !sign_condition {
                return Err(Error::SignCondition(min_div_b1));
            }
            Ok(DriftDecomposition {
                b1,
                b2,
                b3,
                div_b1,
                div_b2,
                div_b3,
                k: 0.0,
                reconstruction_defect,
                min_div_b1,
                sign_condition,
            })
        }
    }
}

fn sum3(a: &VectorField, b: &VectorField, c: &VectorField) -> Result<VectorField> {
    a.axpy(1.0, b)?.axpy(1.0, c)
}

fn min_of(f: &ScalarField) -> f64 {
    f.values().iter().fold(f64::INFINITY, |m, v| m.min(*v))
}

/// Mollifier `Φ_ρ(x) = ρ^{-n} Φ(x/ρ)` with `Φ ∝ exp(-1/(1-|x|^2))` on `B_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub rho: f64,
}

impl MollifierSpec {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter("mollifier radius must be positive"));
        }
        Ok(MollifierSpec { rho })
    }

    /// Lattice offsets and normalized weights of the discrete kernel at spacing `h`.
    pub fn stencil(&self, h: f64) -> Result<Vec<([isize; 3], f64)>> {
        if self.rho < 2.0 * h {
            return Err(Error::UnresolvedKernel { rho: self.rho, h });
        }
        let m = (self.rho / h).ceil() as isize;
        let mut out = Vec::new();
        let mut mass = 0.0;
        for k in -m..=m {
            for j in -m..=m {
                for i in -m..=m {
                    let s2 = ((i * i + j * j + k * k) as f64) * h * h / (self.rho * self.rho);
                    if s2 < 1.0 {
                        let w = (-1.0 / (1.0 - s2)).exp();
                        mass += w;
                        out.push(([i, j, k], w));
                    }
                }
            }
        }
        for (_, w) in out.iter_mut() {
            *w /= mass;
        }
        Ok(out)
    }
}

/// `f * Φ_ρ` at the nodes, with `f` extended by zero outside the domain.
///
/// Each sample enters with its relative cell weight `w_j/h^3`, so interior nodes
/// of a constant field are reproduced exactly.
pub fn mollify(f: &ScalarField, spec: &MollifierSpec) -> Result<ScalarField> {
    let grid = f.grid();
    let stencil = spec.stencil(grid.spacing())?;
    let vol = grid.spacing().powi(3);
    let rel: Vec<f64> = f
        .values()
        .iter()
        .zip(grid.weights())
        .map(|(v, w)| v * w / vol)
        .collect();
    let out = convolve(grid, &stencil, |n| rel[n]);
    ScalarField::new(grid.clone(), out)
}

/// Component-wise [`mollify`].
pub fn mollify_vector(b: &VectorField, spec: &MollifierSpec) -> Result<VectorField> {
    let grid = b.grid();
    let stencil = spec.stencil(grid.spacing())?;
    let vol = grid.spacing().powi(3);
    let rel: Vec<[f64; 3]> = b
        .components()
        .iter()
        .zip(grid.weights())
        .map(|(v, w)| [v[0] * w / vol, v[1] * w / vol, v[2] * w / vol])
        .collect();
    let comps = (0..grid.len())
        .map(|n| {
            let c = grid.cell(n);
            let c = [c[0] as isize, c[1] as isize, c[2] as isize];
            let mut acc = [0.0; 3];
            for (o, w) in &stencil {
                if let Some(m) = grid.node_at([c[0] + o[0], c[1] + o[1], c[2] + o[2]]) {
                    for a in 0..3 {
                        acc[a] += w * rel[m][a];
                    }
                }
            }
            acc
        })
        .collect();
    VectorField::new(grid.clone(), comps)
}

fn convolve(grid: &Grid, stencil: &[([isize; 3], f64)], data: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..grid.len())
        .map(|n| {
            let c = grid.cell(n);
            let c = [c[0] as isize, c[1] as isize, c[2] as isize];
            stencil
                .iter()
                .filter_map(|(o, w)| {
                    grid.node_at([c[0] + o[0], c[1] + o[1], c[2] + o[2]]).map(|m| w * data(m))
                })
                .sum()
        })
        .collect()
}

/// `‖f * Φ_ρ‖_{p,q} / ‖f‖_{p,q}`.
pub fn mollification_ratio(f: &ScalarField, spec: &MollifierSpec, norm: &LorentzSpec) -> Result<f64> {
    let g = mollify(f, spec)?;
    let base = lorentz_quasinorm(f, norm)?;
    if base == 0.0 {
        return Ok(0.0);
    }
    Ok(lorentz_quasinorm(&g, norm)? / base)
}
