//! Finite-volume discretization of the primal problem
//! `-Δu + λ div(ub) + λ cu = f` and the dual `-Δv - λ b·∇v + λ cv = g` with
//! homogeneous Dirichlet data, plus residuals, norms and singular-value probes.
//!
//! Rows are integrated over cells: the Laplacian row of node `i` is the sum of face
//! fluxes `h (u_i - u_j)` (a missing neighbour at boundary distance `θh` contributes
//! `(h/θ) u_i`), right-hand sides are `h^3 f_i`, and the drift and potential terms
//! are scaled by the same `h^3`. The dual advection is centered with a zero ghost
//! outside the domain; the primal matrix is its exact transpose, which is the
//! conservative flux form with face fluxes `((ub)_i + (ub)_j)/2`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::field::VectorField;
use crate::grid::{Grid, RadialGrid};
use crate::lorentz::{lp_norm, Borrowed, ScalarField};
use crate::sparse::{dot, CsrMatrix, Factor};
use crate::util::norm3;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Primal,
    Dual,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssemblyOptions {
    /// Add artificial diffusion to dual rows whose cell Péclet number
    /// `|b_a| h / 2` exceeds 1, bringing it back to 1.
    pub upwind_blend: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { upwind_blend: true }
    }
}

impl AssemblyOptions {
    pub fn centered() -> Self {
        AssemblyOptions { upwind_blend: false }
    }
}

/// Sparse system of the primal or dual form at continuation parameter `λ`.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub kind: OperatorKind,
    pub lambda: f64,
    pub matrix: CsrMatrix,
    /// The `λ = 0` operator (negative Laplacian with Dirichlet closure).
    pub laplacian: CsrMatrix,
    /// `Some(true)` when `c` was supplied and is non-negative.
    pub c_nonnegative: Option<bool>,
    /// Number of dual rows touched by the upwind blend.
    pub blended_rows: usize,
    grid: Arc<Grid>,
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
}

/// Negative Laplacian with the cut-cell Dirichlet closure, integrated over cells.
pub fn laplacian(grid: &Grid) -> CsrMatrix {
    let h = grid.spacing();
    let mut t = Vec::with_capacity(7 * grid.len());
    for i in 0..grid.len() {
        let mut d = 0.0;
        for a in 0..3 {
            for dir in [-1isize, 1] {
                match grid.neighbor(i, a, dir) {
                    Some(j) => {
                        d += h;
                        t.push((i, j, -h));
                    }
                    None => d += h / grid.boundary_fraction(i, a, dir),
                }
            }
        }
        t.push((i, i, d));
    }
    CsrMatrix::from_triplets(grid.len(), t).expect("finite stencil")
}

/// Integrated centered dual advection `-h^3 b·∇v` (zero ghost outside).
fn dual_advection(grid: &Grid, b: &VectorField) -> Vec<(usize, usize, f64)> {
    let h = grid.spacing();
    let comps = b.components();
    let mut t = Vec::with_capacity(6 * grid.len());
    for i in 0..grid.len() {
        for a in 0..3 {
            for dir in [-1isize, 1] {
                if let Some(j) = grid.neighbor(i, a, dir) {
                    t.push((i, j, -h * h * dir as f64 * comps[i][a] / 2.0));
                }
            }
        }
    }
    t
}

pub fn assemble(
    kind: OperatorKind,
    grid: &Arc<Grid>,
    b: Option<&VectorField>,
    c: Option<&ScalarField>,
    lambda: f64,
    opts: AssemblyOptions,
) -> Result<DiscreteOperator> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter("continuation parameter must lie in [0, 1]"));
    }
    if let Some(b) = b {
        if b.grid().id() != grid.id() {
            return Err(Error::GridMismatch);
        }
    }
    if let Some(c) = c {
        if c.grid().id() != grid.id() {
            return Err(Error::GridMismatch);
        }
    }
    let lap = laplacian(grid);
    let h = grid.spacing();
    let vol = h * h * h;
    let mut lower: Vec<(usize, usize, f64)> = Vec::new();
    let mut blended_rows = 0;
    if let Some(b) = b {
        lower.extend(dual_advection(grid, b));
        if kind == OperatorKind::Dual && opts.upwind_blend {
            for i in 0..grid.len() {
                let mut touched = false;
                for a in 0..3 {
                    let pe = b.components()[i][a].abs() * h / 2.0;
                    if pe > 1.0 {
                        touched = true;
                        let nu = h * (pe - 1.0);
                        for dir in [-1isize, 1] {
                            lower.push((i, i, nu));
                            if let Some(j) = grid.neighbor(i, a, dir) {
                                lower.push((i, j, -nu));
                            }
                        }
                    }
                }
                blended_rows += touched as usize;
            }
        }
    }
    if let Some(c) = c {
        lower.extend(c.values().iter().enumerate().map(|(i, v)| (i, i, vol * v)));
    }
    let lower = CsrMatrix::from_triplets(grid.len(), lower)?;
    let lower = match kind {
        OperatorKind::Dual => lower,
        OperatorKind::Primal => lower.transpose(),
    };
    let matrix = if lambda == 0.0 {
        lap.clone()
    } else {
        lap.add_scaled(lambda, &lower)?
    };
    Ok(DiscreteOperator {
        kind,
        lambda,
        matrix,
        laplacian: lap,
        c_nonnegative: c.map(|c| c.values().iter().all(|v| *v >= 0.0)),
        blended_rows,
        grid: grid.clone(),
    })
}

/// Right-hand side representation: volume data `f` or divergence data `div G`.
#[derive(Clone, Debug)]
pub enum WeakData {
    Volume(ScalarField),
    Divergence(VectorField),
}

impl WeakData {
    pub fn grid(&self) -> &Arc<Grid> {
        match self {
            WeakData::Volume(f) => f.grid(),
            WeakData::Divergence(g) => g.grid(),
        }
    }

    pub fn zero(grid: &Arc<Grid>) -> Self {
        WeakData::Volume(ScalarField::zeros(grid))
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            WeakData::Volume(f) => WeakData::Volume(f.scaled(s)),
            WeakData::Divergence(g) => WeakData::Divergence(g.scaled(s)),
        }
    }

    /// Integrated right-hand side. Divergence data uses the centered divergence with
    /// `G = 0` outside, the adjoint of the centered zero-ghost gradient.
    pub fn rhs(&self) -> Vec<f64> {
        let grid = self.grid();
        let h = grid.spacing();
        let vol = h * h * h;
        match self {
            WeakData::Volume(f) => f.values().iter().map(|v| vol * v).collect(),
            WeakData::Divergence(g) => {
                let c = g.components();
                (0..grid.len())
                    .map(|i| {
                        let mut d = 0.0;
                        for a in 0..3 {
                            if let Some(j) = grid.neighbor(i, a, 1) {
                                d += c[j][a];
                            }
                            if let Some(j) = grid.neighbor(i, a, -1) {
                                d -= c[j][a];
                            }
                        }
                        vol * d / (2.0 * h)
                    })
                    .collect()
            }
        }
    }

    /// `⟨data, φ⟩`; divergence data pairs as `-∫ G·∇φ`.
    pub fn pair(&self, phi: &ScalarField) -> Result<f64> {
        match self {
            WeakData::Volume(f) => Ok(f.product(phi)?.integral()),
            WeakData::Divergence(g) => {
                let gphi = gradient(phi, GradientMode::Dirichlet);
                if g.grid().id() != phi.grid().id() {
                    return Err(Error::GridMismatch);
                }
                let w = phi.grid().weights();
                Ok(-(0..w.len())
                    .map(|i| {
                        let (x, y) = (g.components()[i], gphi.components()[i]);
                        w[i] * (x[0] * y[0] + x[1] * y[1] + x[2] * y[2])
                    })
                    .sum::<f64>())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Relative residual target of iterative solves.
    pub tol: f64,
    /// Estimate the energy-normalized extreme singular values and raise
    /// [`Error::NearSingular`] when `σ_min < near_singular · σ_max`.
    pub estimate_sigma: bool,
    pub near_singular: f64,
    pub sigma_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, estimate_sigma: false, near_singular: 1e-8, sigma_iterations: 200 }
    }
}

impl SolveOptions {
    pub fn with_sigma(self) -> Self {
        SolveOptions { estimate_sigma: true, ..self }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: ScalarField,
    /// `‖rhs - A u‖ / ‖rhs‖`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub smallest_singular_estimate: Option<f64>,
    pub operator_norm_estimate: Option<f64>,
    pub direct: bool,
}

pub fn solve(op: &DiscreteOperator, data: &WeakData, opts: &SolveOptions) -> Result<SolveReport> {
    let x0 = vec![0.0; op.grid.len()];
    solve_from(op, data, &x0, opts)
}

/// [`solve`] with an explicit starting vector for the iterative path.
pub fn solve_from(
    op: &DiscreteOperator,
    data: &WeakData,
    x0: &[f64],
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if data.grid().id() != op.grid.id() {
        return Err(Error::GridMismatch);
    }
    let b = data.rhs();
    let (sigma, norm) = if opts.estimate_sigma {
        let est = energy_singular_values(&op.matrix, &op.laplacian, opts.sigma_iterations, 1e-10)?;
        if est.sigma_min < opts.near_singular * est.sigma_max {
            return Err(Error::NearSingular { lambda: op.lambda, sigma: est.sigma_min, norm: est.sigma_max });
        }
        (Some(est.sigma_min), Some(est.sigma_max))
    } else {
        (None, None)
    };
    let factor = Factor::new(&op.matrix)?;
    let it = factor.solve(&b, x0, opts.tol)?;
    let residual =
        relative_residual(&op.matrix, &it.x, &b);
    if !(residual <= opts.tol.max(1e-10)) && !factor.is_direct() {
        return Err(Error::NotConverged { iterations: it.iterations, residual });
    }
    if !residual.is_finite() {
        return Err(Error::NonFinite("solution"));
    }
    Ok(SolveReport {
        solution: ScalarField::new(op.grid.clone(), it.x)?,
        residual_norm: residual,
        iterations: it.iterations,
        smallest_singular_estimate: sigma,
        operator_norm_estimate: norm,
        direct: factor.is_direct(),
    })
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    let r: f64 = b.iter().zip(&ax).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let nb = dot(b, b).sqrt();
    if nb == 0.0 {
        r
    } else {
        r / nb
    }
}

/// Extreme singular values of `K^{-1/2} A K^{-1/2}`, `K` symmetric positive definite.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaEstimate {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Right singular vector of `σ_min` in the original variables, `K`-normalized.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Inverse iteration `v ← A^{-1} K A^{-T} K v` (self-adjoint in the `K` inner
/// product, Rayleigh quotient `→ 1/σ_min^2`) and power iteration
/// `v ← K^{-1} A^T K^{-1} A v` for `σ_max`. The power iteration converges slowly
/// when the top of the spectrum is clustered, so `sigma_max` is a lower estimate.
pub fn energy_singular_values(a: &CsrMatrix, k: &CsrMatrix, max_iter: usize, tol: f64) -> Result<SigmaEstimate> {
    let n = a.n();
    let fk = Factor::new(k)?;
    let solve_tol = 1e-12;
    let knorm = |v: &[f64]| dot(v, &k.apply(v)).sqrt();
    let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * ((i as f64) * 0.7).sin()).collect();
    let zeros = vec![0.0; n];

    // σ_max
    let mut v = start.clone();
    let s = knorm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut smax2 = 0.0;
    for _ in 0..max_iter {
        let av = a.apply(&v);
        let y = fk.solve(&av, &zeros, solve_tol)?.x;
        let rq = dot(&av, &y);
        let aty = a.transpose().apply(&y);
        let mut w = fk.solve(&aty, &zeros, solve_tol)?.x;
        let s = knorm(&w);
        if s == 0.0 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= s);
        let done = (rq - smax2).abs() <= tol * rq;
        smax2 = rq;
        v = w;
        if done {
            break;
        }
    }

    // σ_min
    let fa = match Factor::new(a) {
        Ok(f) => f,
        Err(_) => return Ok(SigmaEstimate { sigma_min: 0.0, sigma_max: smax2.sqrt(), vector: start, iterations: 0 }),
    };
    let fat = Factor::new(&a.transpose())?;
    let mut v = start;
    let s = knorm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut inv = 0.0f64;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let kv = k.apply(&v);
        let y = match fat.solve(&kv, &zeros, solve_tol) {
            Ok(r) => r.x,
            Err(_) => break,
        };
        let ky = k.apply(&y);
        let mut w = match fa.solve(&ky, &zeros, solve_tol) {
            Ok(r) => r.x,
            Err(_) => break,
        };
        if w.iter().any(|x| !x.is_finite()) {
            inv = f64::INFINITY;
            break;
        }
        let rq = dot(&kv, &w);
        let s = knorm(&w);
        w.iter_mut().for_each(|x| *x /= s);
        let done = (rq - inv).abs() <= tol * rq.abs();
        inv = rq;
        v = w;
        if done {
            break;
        }
    }
    // align the sign so the vector is mostly non-negative
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let sigma_min = if inv > 0.0 { 1.0 / inv.sqrt() } else { 0.0 };
    Ok(SigmaEstimate { sigma_min, sigma_max: smax2.sqrt(), vector: v, iterations })
}

/// One continuation step: `λ`, `max |u|`, residual and the σ estimate if taken.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub lambda: f64,
    pub sup_norm: f64,
    pub residual: f64,
    pub sigma_min: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ContinuationReport {
    pub report: SolveReport,
    pub path: Vec<ContinuationStep>,
}

/// Method of continuity: solves at `λ = k/steps`, `k = 1..=steps`, each solve
/// warm-started from the previous one.
#[allow(clippy::too_many_arguments)]
pub fn continuation_solve(
    kind: OperatorKind,
    grid: &Arc<Grid>,
    b: Option<&VectorField>,
    c: Option<&ScalarField>,
    data: &WeakData,
    steps: usize,
    assembly: AssemblyOptions,
    opts: &SolveOptions,
) -> Result<ContinuationReport> {
    if steps == 0 {
        return Err(Error::InvalidParameter("continuation needs at least one step"));
    }
    let mut x = vec![0.0; grid.len()];
    let mut path = Vec::with_capacity(steps);
    let mut last = None;
    for k in 1..=steps {
        let lambda = k as f64 / steps as f64;
        let op = assemble(kind, grid, b, c, lambda, assembly)?;
        let rep = solve_from(&op, data, &x, opts)?;
        x.copy_from_slice(rep.solution.values());
        path.push(ContinuationStep {
            lambda,
            sup_norm: rep.solution.max_abs(),
            residual: rep.residual_norm,
            sigma_min: rep.smallest_singular_estimate,
        });
        last = Some(rep);
    }
    Ok(ContinuationReport { report: last.expect("steps >= 1"), path })
}

/// How gradients treat a missing neighbour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// The function vanishes on the boundary, at distance `θh` along the axis.
    Dirichlet,
    /// No boundary information: one-sided differences into the grid.
    Free,
}

/// Three-point derivative at 0 from samples at `-hm`, `0`, `hp`.
#[inline]
fn d3(um: f64, u0: f64, up: f64, hm: f64, hp: f64) -> f64 {
    (hm * hm * (up - u0) + hp * hp * (u0 - um)) / (hm * hp * (hm + hp))
}

pub fn gradient(u: &ScalarField, mode: GradientMode) -> VectorField {
    let g = u.grid();
    let h = g.spacing();
    let v = u.values();
    let mut out = vec![[0.0; 3]; g.len()];
    for i in 0..g.len() {
        for a in 0..3 {
            let p = g.neighbor(i, a, 1);
            let m = g.neighbor(i, a, -1);
            out[i][a] = match mode {
                GradientMode::Dirichlet => {
                    let (up, hp) = match p {
                        Some(j) => (v[j], h),
                        None => (0.0, h * g.boundary_fraction(i, a, 1)),
                    };
                    let (um, hm) = match m {
                        Some(j) => (v[j], h),
                        None => (0.0, h * g.boundary_fraction(i, a, -1)),
                    };
                    d3(um, v[i], up, hm, hp)
                }
                GradientMode::Free => match (p, m) {
                    (Some(p), Some(m)) => (v[p] - v[m]) / (2.0 * h),
                    (Some(p), None) => match g.neighbor(p, a, 1) {
                        Some(pp) => (-3.0 * v[i] + 4.0 * v[p] - v[pp]) / (2.0 * h),
                        None => (v[p] - v[i]) / h,
                    },
                    (None, Some(m)) => match g.neighbor(m, a, -1) {
                        Some(mm) => (3.0 * v[i] - 4.0 * v[m] + v[mm]) / (2.0 * h),
                        None => (v[i] - v[m]) / h,
                    },
                    (None, None) => 0.0,
                },
            };
        }
    }
    VectorField::new(g.clone(), out).expect("finite differences of finite data")
}

/// `(Σ_{|α| ≤ order} ‖D^α u‖_p^p)^{1/p}`; second derivatives differentiate the
/// gradient again in [`GradientMode::Free`], mixed ones are symmetrized.
pub fn sobolev_norm(u: &ScalarField, p: f64, order: usize, mode: GradientMode) -> Result<f64> {
    if order > 2 {
        return Err(Error::InvalidParameter("Sobolev order must be 0, 1 or 2"));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter("Sobolev exponent must be ≥ 1"));
    }
    let w = u.grid().weights();
    let lp = |vals: &[f64]| -> f64 {
        if p == f64::INFINITY {
            vals.iter().fold(0.0, |m, v| m.max(v.abs()))
        } else {
            vals.iter().zip(w).map(|(v, w)| v.abs().powf(p) * w).sum::<f64>()
        }
    };
    let mut parts = vec![lp(u.values())];
    if order >= 1 {
        let g = gradient(u, mode);
        for a in 0..3 {
            parts.push(lp(g.component(a).values()));
        }
        if order == 2 {
            let hess: Vec<VectorField> = (0..3).map(|a| gradient(&g.component(a), GradientMode::Free)).collect();
            for a in 0..3 {
                for bb in a..3 {
                    let vals: Vec<f64> = (0..w.len())
                        .map(|i| 0.5 * (hess[a].components()[i][bb] + hess[bb].components()[i][a]))
                        .collect();
                    parts.push(lp(&vals));
                }
            }
        }
    }
    Ok(if p == f64::INFINITY {
        parts.into_iter().fold(0.0, f64::max)
    } else {
        parts.iter().sum::<f64>().powf(1.0 / p)
    })
}

/// `W^{-1,p}` surrogate: `‖G‖_p` for `div G`, `‖∇w‖_p` with `-Δw = f` for volume data.
pub fn w_minus_one_p_norm(data: &WeakData, p: f64) -> Result<f64> {
    if !(p > 1.0 && p < f64::INFINITY) {
        return Err(Error::InvalidParameter("W^{-1,p} exponent must lie in (1, ∞)"));
    }
    match data {
        WeakData::Divergence(g) => Ok(lp_norm(&g.magnitude(), p)),
        WeakData::Volume(f) => {
            let w = poisson(f)?;
            Ok(lp_norm(&gradient(&w, GradientMode::Dirichlet).magnitude(), p))
        }
    }
}

/// Dirichlet solution of `-Δw = f`.
pub fn poisson(f: &ScalarField) -> Result<ScalarField> {
    let grid = f.grid();
    let op = assemble(OperatorKind::Primal, grid, None, None, 0.0, AssemblyOptions::centered())?;
    Ok(solve(&op, &WeakData::Volume(f.clone()), &SolveOptions::default())?.solution)
}

fn check_test_function(phi: &ScalarField) -> Result<()> {
    let band = phi.grid().boundary_band();
    let scale = phi.max_abs();
    if phi.values().iter().zip(band).any(|(v, b)| *b && v.abs() > 1e-14 * scale.max(1e-300)) {
        return Err(Error::TestFunctionSupport);
    }
    Ok(())
}

/// Residual of the weak formulation tested with `φ`:
/// primal `∫ (∇u - ub)·∇φ + cuφ - ⟨f, φ⟩`, dual `∫ ∇v·∇φ - (b·∇v)φ + cvφ - ⟨g, φ⟩`.
pub fn weak_residual(
    kind: OperatorKind,
    u: &ScalarField,
    b: Option<&VectorField>,
    c: Option<&ScalarField>,
    data: &WeakData,
    phi: &ScalarField,
) -> Result<f64> {
    check_test_function(phi)?;
    let grid = u.grid();
    if phi.grid().id() != grid.id() {
        return Err(Error::GridMismatch);
    }
    let gu = gradient(u, GradientMode::Dirichlet);
    let gp = gradient(phi, GradientMode::Dirichlet);
    let w = grid.weights();
    let mut acc = 0.0;
    for i in 0..grid.len() {
        let du = gu.components()[i];
        let dp = gp.components()[i];
        let mut term = du[0] * dp[0] + du[1] * dp[1] + du[2] * dp[2];
        if let Some(b) = b {
            let bi = b.components()[i];
            term -= match kind {
                OperatorKind::Primal => u.values()[i] * (bi[0] * dp[0] + bi[1] * dp[1] + bi[2] * dp[2]),
                OperatorKind::Dual => (bi[0] * du[0] + bi[1] * du[1] + bi[2] * du[2]) * phi.values()[i],
            };
        }
        if let Some(c) = c {
            term += c.values()[i] * u.values()[i] * phi.values()[i];
        }
        acc += w[i] * term;
    }
    Ok(acc - data.pair(phi)?)
}

/// Very weak residual: primal `∫ u(-Δφ - b·∇φ + cφ) - ⟨f, φ⟩`,
/// dual `∫ v(-Δφ + div(bφ) + cφ) - ⟨g, φ⟩`.
pub fn very_weak_residual(
    kind: OperatorKind,
    u: &ScalarField,
    b: Option<&VectorField>,
    c: Option<&ScalarField>,
    data: &WeakData,
    phi: &ScalarField,
) -> Result<f64> {
    check_test_function(phi)?;
    let grid = u.grid();
    let h = grid.spacing();
    let pv = phi.values();
    let mut op_phi: Vec<f64> = (0..grid.len())
        .map(|i| {
            let mut s = 0.0;
            for a in 0..3 {
                for dir in [-1isize, 1] {
                    let nb = grid.neighbor(i, a, dir).map(|j| pv[j]).unwrap_or(0.0);
                    s += pv[i] - nb;
                }
            }
            s / (h * h)
        })
        .collect();
    if let Some(b) = b {
        match kind {
            OperatorKind::Primal => {
                let gp = gradient(phi, GradientMode::Dirichlet);
                for i in 0..grid.len() {
                    let (x, y) = (b.components()[i], gp.components()[i]);
                    op_phi[i] -= x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
                }
            }
            OperatorKind::Dual => {
                let d = b.times(phi)?.divergence();
                for (o, v) in op_phi.iter_mut().zip(d.values()) {
                    *o += v;
                }
            }
        }
    }
    if let Some(c) = c {
        for (o, (cv, p)) in op_phi.iter_mut().zip(c.values().iter().zip(pv)) {
            *o += cv * p;
        }
    }
    let w = grid.weights();
    let lhs: f64 = (0..grid.len()).map(|i| w[i] * u.values()[i] * op_phi[i]).sum();
    Ok(lhs - data.pair(phi)?)
}

/// `‖φ‖_{W^{1,1}}`, the normalization used for residual decay.
pub fn test_function_scale(phi: &ScalarField) -> f64 {
    let g = gradient(phi, GradientMode::Dirichlet);
    lp_norm(phi, 1.0) + lp_norm(&g.magnitude(), 1.0)
}

/// Smooth bump `exp(1 - 1/(1 - |x - x0|^2/ρ^2))` supported in `B_ρ(x0)`.
pub fn bump_test_function(grid: &Arc<Grid>, x0: [f64; 3], rho: f64) -> Result<ScalarField> {
    ScalarField::from_fn(grid, |x| {
        let d = [x[0] - x0[0], x[1] - x0[1], x[2] - x0[2]];
        let s = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (rho * rho);
        if s < 1.0 {
            (1.0 - 1.0 / (1.0 - s)).exp()
        } else {
            0.0
        }
    })
}

/// Radial version of both operators on a [`RadialGrid`], for `b = -M x/|x|^2`.
///
/// Cell rows are integrated against the shell measure. The inner face carries the
/// natural zero-flux closure, the outer face the Dirichlet ghost `-v`. The dual
/// advection `-b_r v' = (M/r) v'` is centered, one-sided in the innermost cell; the
/// primal matrix is its transpose.
#[derive(Clone, Debug)]
pub struct RadialOperator {
    pub kind: OperatorKind,
    pub m: f64,
    pub lambda: f64,
    pub matrix: CsrMatrix,
    pub laplacian: CsrMatrix,
    grid: Arc<RadialGrid>,
}

impl RadialOperator {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    /// Energy-normalized extreme singular values (see [`energy_singular_values`]).
    pub fn singular_values(&self, max_iter: usize) -> Result<SigmaEstimate> {
        energy_singular_values(&self.matrix, &self.laplacian, max_iter, 1e-12)
    }

    /// Solves `A v = w g` for nodal data `g`.
    pub fn solve(&self, g: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = g.iter().zip(self.grid.weights()).map(|(a, w)| a * w).collect();
        let f = Factor::new(&self.matrix)?;
        Ok(f.solve(&rhs, &vec![0.0; rhs.len()], 1e-12)?.x)
    }
}

pub fn assemble_radial(
    kind: OperatorKind,
    grid: &Arc<RadialGrid>,
    m: f64,
    c: f64,
    lambda: f64,
) -> Result<RadialOperator> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter("continuation parameter must lie in [0, 1]"));
    }
    if !m.is_finite() || !c.is_finite() {
        return Err(Error::NonFinite("radial coefficients"));
    }
    let n = grid.len();
    if n < 3 {
        return Err(Error::InvalidParameter("radial grid needs at least three cells"));
    }
    let h = grid.spacing();
    let r = grid.nodes();
    let w = grid.weights();
    let mut lap = Vec::with_capacity(3 * n);
    let mut low = Vec::with_capacity(3 * n);
    for i in 0..n {
        let mut d = 0.0;
        if i > 0 {
            let a = grid.face_area(i) / h;
            d += a;
            lap.push((i, i - 1, -a));
        }
        let a = grid.face_area(i + 1) / h;
        if i + 1 < n {
            d += a;
            lap.push((i, i + 1, -a));
        } else {
            d += 2.0 * a;
        }
        lap.push((i, i, d));

        let coef = w[i] * m / r[i];
        if i == 0 {
            low.push((0, 1, coef / h));
            low.push((0, 0, -coef / h));
        } else if i + 1 < n {
            low.push((i, i + 1, coef / (2.0 * h)));
            low.push((i, i - 1, -coef / (2.0 * h)));
        } else {
            low.push((i, i, -coef / (2.0 * h)));
            low.push((i, i - 1, -coef / (2.0 * h)));
        }
        low.push((i, i, w[i] * c));
    }
    let laplacian = CsrMatrix::from_triplets(n, lap)?;
    let mut lower = CsrMatrix::from_triplets(n, low)?;
    if kind == OperatorKind::Primal {
        lower = lower.transpose();
    }
    let matrix = laplacian.add_scaled(lambda, &lower)?;
    Ok(RadialOperator { kind, m, lambda, matrix, laplacian, grid: grid.clone() })
}

/// `min_α ‖v - α e‖ / ‖α e‖` in the weighted `L^2` of `weights`.
pub fn profile_mismatch(v: &[f64], e: &[f64], weights: &[f64]) -> f64 {
    let ve: f64 = v.iter().zip(e).zip(weights).map(|((a, b), w)| a * b * w).sum();
    let ee: f64 = e.iter().zip(weights).map(|(b, w)| b * b * w).sum();
    let alpha = ve / ee;
    let err: f64 = v
        .iter()
        .zip(e)
        .zip(weights)
        .map(|((a, b), w)| (a - alpha * b).powi(2) * w)
        .sum::<f64>()
        .sqrt();
    err / (alpha.abs() * ee.sqrt())
}

/// `(∫ |v|^l)^{1/l}` of a radial profile.
pub fn radial_lp(grid: &RadialGrid, v: &[f64], l: f64) -> f64 {
    lp_norm(&Borrowed { values: v, weights: grid.weights(), id: grid.id() }, l)
}

/// `|∇u|` evaluated at the nodes in the given mode.
pub fn gradient_magnitude(u: &ScalarField, mode: GradientMode) -> ScalarField {
    let g = gradient(u, mode);
    let v = g.components().iter().map(norm3).collect();
    ScalarField::new(u.grid().clone(), v).expect("finite gradient")
}
