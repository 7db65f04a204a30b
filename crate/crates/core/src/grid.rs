//! Domains, cell-centered grids and quadrature.
//!
//! Grids are cell centered: node `(i, j, k)` sits at `lo + (i + 1/2, j + 1/2, k + 1/2) h`,
//! so fields that are singular at the origin, at lattice points `2rk`, or on the
//! boundary are never evaluated at their singular points. A cell becomes a node when
//! its center lies inside the domain; its weight is `h^3` times the volume fraction of
//! the cell inside the domain (estimated by `4^3` subsampling for cells that straddle
//! the boundary). The inside volume of straddling cells whose center lies outside is
//! handed to their neighbouring nodes, so the weights sum to the subsampled volume.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::util::{norm3, unit_ball_volume, unit_sphere_area};
use crate::{Error, Result};

/// Largest full three-dimensional grid (cells of the bounding box).
pub const MAX_CELLS: usize = 128 * 128 * 128;

/// Subsamples per axis used for cut-cell volume fractions.
const SUBSAMPLES: usize = 4;

pub(crate) static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn next_id() -> u64 {
    NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    /// Ball of the given radius centered at the origin.
    Ball { radius: f64 },
    /// Axis-aligned box `[lo_0, hi_0] x [lo_1, hi_1] x [lo_2, hi_2]`.
    Box { lo: [f64; 3], hi: [f64; 3] },
    /// Spherical shell `inner < |x| < outer`.
    Annulus { inner: f64, outer: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    /// Ambient dimension `n >= 3`. Full grids exist only for `n = 3`.
    pub dim: usize,
}

impl Domain {
    pub fn ball(radius: f64) -> Self {
        Domain { kind: DomainKind::Ball { radius }, dim: 3 }
    }

    pub fn cuboid(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Domain { kind: DomainKind::Box { lo, hi }, dim: 3 }
    }

    pub fn unit_cube() -> Self {
        Self::cuboid([0.0; 3], [1.0; 3])
    }

    pub fn annulus(inner: f64, outer: f64) -> Self {
        Domain { kind: DomainKind::Annulus { inner, outer }, dim: 3 }
    }

    /// Same shape in another ambient dimension (balls and annuli only).
    pub fn with_dim(self, dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidParameter("ambient dimension must be at least 3"));
        }
        if dim != 3 && matches!(self.kind, DomainKind::Box { .. }) {
            return Err(Error::InvalidParameter("boxes are three-dimensional"));
        }
        Ok(Domain { dim, ..self })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::InvalidParameter("ambient dimension must be at least 3"));
        }
        match self.kind {
            DomainKind::Ball { radius } if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::DegenerateDomain("ball radius must be positive"))
            }
            DomainKind::Box { lo, hi } if (0..3).any(|a| !(hi[a] > lo[a])) => {
                Err(Error::DegenerateDomain("box sides must have positive length"))
            }
            DomainKind::Annulus { inner, outer } if !(inner >= 0.0 && outer > inner) => {
                Err(Error::DegenerateDomain("annulus needs 0 <= inner < outer"))
            }
            _ => Ok(()),
        }
    }

    /// Lebesgue measure `|Ω|`.
    pub fn measure(&self) -> f64 {
        let n = self.dim;
        match self.kind {
            DomainKind::Ball { radius } => unit_ball_volume(n) * radius.powi(n as i32),
            DomainKind::Box { lo, hi } => (0..3).map(|a| hi[a] - lo[a]).product(),
            DomainKind::Annulus { inner, outer } => {
                unit_ball_volume(n) * (outer.powi(n as i32) - inner.powi(n as i32))
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            DomainKind::Ball { radius } => 2.0 * radius,
            DomainKind::Box { lo, hi } => {
                norm3(&[hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]])
            }
            DomainKind::Annulus { outer, .. } => 2.0 * outer,
        }
    }

    /// Bounding box of the three-dimensional domain.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self.kind {
            DomainKind::Ball { radius } | DomainKind::Annulus { outer: radius, .. } => {
                ([-radius; 3], [radius; 3])
            }
            DomainKind::Box { lo, hi } => (lo, hi),
        }
    }

    /// Signed level function, negative inside, with `|∇| ≤ 1`.
    pub fn level(&self, x: &[f64; 3]) -> f64 {
        match self.kind {
            DomainKind::Ball { radius } => norm3(x) - radius,
            DomainKind::Box { lo, hi } => (0..3)
                .map(|a| (lo[a] - x[a]).max(x[a] - hi[a]))
                .fold(f64::NEG_INFINITY, f64::max),
            DomainKind::Annulus { inner, outer } => {
                let r = norm3(x);
                (r - outer).max(inner - r)
            }
        }
    }

    pub fn contains(&self, x: &[f64; 3]) -> bool {
        self.level(x) < 0.0
    }

    /// The same shape dilated by `s` about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        let kind = match self.kind {
            DomainKind::Ball { radius } => DomainKind::Ball { radius: radius * s },
            DomainKind::Box { lo, hi } => DomainKind::Box {
                lo: [lo[0] * s, lo[1] * s, lo[2] * s],
                hi: [hi[0] * s, hi[1] * s, hi[2] * s],
            },
            DomainKind::Annulus { inner, outer } => {
                DomainKind::Annulus { inner: inner * s, outer: outer * s }
            }
        };
        Domain { kind, dim: self.dim }
    }

    fn is_radial(&self) -> bool {
        !matches!(self.kind, DomainKind::Box { .. })
    }
}

/// Cell-centered Cartesian grid of a three-dimensional domain.
#[derive(Clone, Debug)]
pub struct Grid {
    id: u64,
    domain: Domain,
    h: f64,
    origin: [f64; 3],
    dims: [usize; 3],
    lookup: Vec<u32>,
    cells: Vec<[usize; 3]>,
    coords: Vec<[f64; 3]>,
    weights: Vec<f64>,
    band: Vec<bool>,
}

const ABSENT: u32 = u32::MAX;

impl Grid {
    /// Builds the cell-centered grid of `domain` with spacing `h`.
    pub fn build(domain: Domain, h: f64) -> Result<Grid> {
        domain.validate()?;
        if domain.dim != 3 {
            return Err(Error::InvalidParameter(
                "full grids are three-dimensional; use the radial reduction",
            ));
        }
        if !(h > 0.0 && h < domain.diameter() / 4.0) {
            return Err(Error::InvalidParameter("grid spacing must satisfy 0 < h < diam/4"));
        }
        let (lo, hi) = domain.bounds();
        let mut dims = [0usize; 3];
        for a in 0..3 {
            dims[a] = ((hi[a] - lo[a]) / h - 1e-9).ceil().max(1.0) as usize;
        }
        let ncells = dims[0] * dims[1] * dims[2];
        if ncells > MAX_CELLS {
            return Err(Error::GridTooLarge { nodes: ncells, limit: MAX_CELLS });
        }

        let half_diag = 0.5 * h * 3.0f64.sqrt() * (1.0 + 1e-12);
        let vol = h * h * h;
        let mut lookup = vec![ABSENT; ncells];
        let mut fractions = vec![0.0f64; ncells];
        let mut cells = Vec::new();
        let mut coords = Vec::new();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let c = [
                        lo[0] + (i as f64 + 0.5) * h,
                        lo[1] + (j as f64 + 0.5) * h,
                        lo[2] + (k as f64 + 0.5) * h,
                    ];
                    let phi = domain.level(&c);
                    let frac = if phi < -half_diag {
                        1.0
                    } else if phi > half_diag {
                        0.0
                    } else {
                        subsampled_fraction(&domain, &c, h)
                    };
                    let idx = i + dims[0] * (j + dims[1] * k);
                    fractions[idx] = frac;
                    if phi < 0.0 {
                        lookup[idx] = cells.len() as u32;
                        cells.push([i, j, k]);
                        coords.push(c);
                    }
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::DegenerateDomain("no cell center lies inside the domain"));
        }
        let mut weights: Vec<f64> = cells
            .iter()
            .map(|c| fractions[c[0] + dims[0] * (c[1] + dims[1] * c[2])] * vol)
            .collect();

        // Hand the inside volume of dropped straddling cells to neighbouring nodes.
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = i + dims[0] * (j + dims[1] * k);
                    if lookup[idx] != ABSENT || fractions[idx] == 0.0 {
                        continue;
                    }
                    let cell = [i as isize, j as isize, k as isize];
                    let mut recipients: Vec<usize> = Vec::with_capacity(26);
                    for pass in 0..2 {
                        for dz in -1isize..=1 {
                            for dy in -1isize..=1 {
                                for dx in -1isize..=1 {
                                    let taxi = dx.abs() + dy.abs() + dz.abs();
                                    let wanted = if pass == 0 { taxi == 1 } else { taxi > 1 };
                                    if !wanted {
                                        continue;
                                    }
                                    let q = [cell[0] + dx, cell[1] + dy, cell[2] + dz];
                                    if let Some(n) = lookup_at(&lookup, &dims, q) {
                                        recipients.push(n);
                                    }
                                }
                            }
                        }
                        if !recipients.is_empty() {
                            break;
                        }
                    }
                    if !recipients.is_empty() {
                        let share = fractions[idx] * vol / recipients.len() as f64;
                        for n in recipients {
                            weights[n] += share;
                        }
                    }
                }
            }
        }

        let mut grid = Grid {
            id: next_id(),
            domain,
            h,
            origin: lo,
            dims,
            lookup,
            cells,
            coords,
            weights,
            band: Vec::new(),
        };
        grid.band = (0..grid.len())
            .map(|n| {
                domain.level(&grid.coords[n]).abs() < h
                    || (0..3).any(|a| {
                        grid.neighbor(n, a, 1).is_none() || grid.neighbor(n, a, -1).is_none()
                    })
            })
            .collect();
        Ok(grid)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn cell(&self, node: usize) -> [usize; 3] {
        self.cells[node]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes within `h` of the boundary or missing a face neighbour.
    pub fn boundary_band(&self) -> &[bool] {
        &self.band
    }

    /// Discrete measure `Σ weights`.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Smallest superlevel-set measure the grid resolves: the volume of a ball of
    /// radius `sqrt(h · diam/2)`. It vanishes as `h → 0` but spans a growing
    /// number of cells, so lattice-counting artefacts at the innermost shells of
    /// a point singularity drop out.
    pub fn resolution_floor(&self) -> f64 {
        let rho = (self.h * self.domain.diameter() / 2.0).sqrt();
        crate::util::unit_ball_volume(3) * rho * rho * rho
    }

    /// Node index of cell `(i, j, k)`, if that cell is a node.
    pub fn node_at(&self, cell: [isize; 3]) -> Option<usize> {
        lookup_at(&self.lookup, &self.dims, cell)
    }

    /// Face neighbour of `node` along `axis` in direction `dir = ±1`.
    #[inline]
    pub fn neighbor(&self, node: usize, axis: usize, dir: isize) -> Option<usize> {
        let c = self.cells[node];
        let mut q = [c[0] as isize, c[1] as isize, c[2] as isize];
        q[axis] += dir;
        lookup_at(&self.lookup, &self.dims, q)
    }

    /// Fraction `θ ∈ (0, 1]` of a grid step from `node` to the boundary along
    /// `axis`/`dir`; meaningful when the neighbour in that direction is absent.
    pub fn boundary_fraction(&self, node: usize, axis: usize, dir: isize) -> f64 {
        let x = self.coords[node];
        let at = |t: f64| {
            let mut y = x;
            y[axis] += dir as f64 * t * self.h;
            self.domain.level(&y)
        };
        if at(1.0) < 0.0 {
            // Neighbour cell center is inside but not a node (cannot happen for
            // cells inside the bounding box); treat as a full step.
            return 1.0;
        }
        let (mut a, mut b) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if at(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        (0.5 * (a + b)).max(1e-6)
    }

    /// Lattice cell containing the point `x`, clamped to the bounding box.
    pub fn cell_of(&self, x: &[f64; 3]) -> [isize; 3] {
        let mut out = [0isize; 3];
        for a in 0..3 {
            out[a] = ((x[a] - self.origin[a]) / self.h).floor() as isize;
        }
        out
    }

    /// Nodes whose coordinates lie in the closed axis-aligned box `[lo, hi]`.
    pub fn for_each_in_box(&self, lo: &[f64; 3], hi: &[f64; 3], mut visit: impl FnMut(usize)) {
        let mut a0 = [0isize; 3];
        let mut a1 = [0isize; 3];
        for a in 0..3 {
            a0[a] = (((lo[a] - self.origin[a]) / self.h - 0.5).ceil() as isize).max(0);
            a1[a] = (((hi[a] - self.origin[a]) / self.h - 0.5).floor() as isize)
                .min(self.dims[a] as isize - 1);
        }
        for k in a0[2]..=a1[2] {
            for j in a0[1]..=a1[1] {
                for i in a0[0]..=a1[0] {
                    if let Some(n) = self.node_at([i, j, k]) {
                        visit(n);
                    }
                }
            }
        }
    }

    /// Samples a scalar function at the nodes.
    pub fn sample(&self, f: impl Fn(&[f64; 3]) -> f64) -> Vec<f64> {
        self.coords.iter().map(f).collect()
    }

    /// `Σ values · weights`.
    pub fn integrate_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch);
        }
        Ok(values.iter().zip(&self.weights).map(|(v, w)| v * w).sum())
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

#[inline]
fn lookup_at(lookup: &[u32], dims: &[usize; 3], q: [isize; 3]) -> Option<usize> {
    if (0..3).any(|a| q[a] < 0 || q[a] >= dims[a] as isize) {
        return None;
    }
    let idx = q[0] as usize + dims[0] * (q[1] as usize + dims[1] * q[2] as usize);
    match lookup[idx] {
        ABSENT => None,
        n => Some(n as usize),
    }
}

fn subsampled_fraction(domain: &Domain, center: &[f64; 3], h: f64) -> f64 {
    let s = SUBSAMPLES;
    let mut inside = 0usize;
    for a in 0..s {
        for b in 0..s {
            for c in 0..s {
                let off = |t: usize| ((t as f64 + 0.5) / s as f64 - 0.5) * h;
                let y = [center[0] + off(a), center[1] + off(b), center[2] + off(c)];
                if domain.contains(&y) {
                    inside += 1;
                }
            }
        }
    }
    inside as f64 / (s * s * s) as f64
}

/// One-dimensional grid for radially symmetric problems on balls and annuli.
///
/// Nodes are cell centers `r_i = inner + (i + 1/2) h` on `(inner, outer)`; node `i`
/// carries the measure `|S^{n-1}| r_i^{n-1} h`.
#[derive(Clone, Debug)]
pub struct RadialGrid {
    id: u64,
    inner: f64,
    outer: f64,
    h: f64,
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RadialGrid {
    /// Radial reduction of a ball or annulus with spacing close to `h_r`
    /// (adjusted so that the cells tile `(inner, outer)` exactly).
    pub fn reduce(domain: &Domain, h_r: f64) -> Result<RadialGrid> {
        domain.validate()?;
        if !domain.is_radial() {
            return Err(Error::InvalidParameter("radial reduction needs a ball or annulus"));
        }
        let (inner, outer) = match domain.kind {
            DomainKind::Ball { radius } => (0.0, radius),
            DomainKind::Annulus { inner, outer } => (inner, outer),
            DomainKind::Box { .. } => unreachable!(),
        };
        Self::on_interval(inner, outer, h_r, domain.dim)
    }

    pub fn on_interval(inner: f64, outer: f64, h_r: f64, dim: usize) -> Result<RadialGrid> {
        if !(h_r > 0.0 && h_r < (outer - inner)) || inner < 0.0 || dim < 3 {
            return Err(Error::InvalidParameter("radial grid needs 0 < h_r < outer - inner"));
        }
        let count = ((outer - inner) / h_r - 1e-9).ceil().max(1.0) as usize;
        let h = (outer - inner) / count as f64;
        let area = unit_sphere_area(dim);
        let nodes: Vec<f64> = (0..count).map(|i| inner + (i as f64 + 0.5) * h).collect();
        let weights = nodes.iter().map(|r| area * r.powi(dim as i32 - 1) * h).collect();
        Ok(RadialGrid { id: next_id(), inner, outer, h, dim, nodes, weights })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Radius of face `i` (face 0 is the inner boundary, face `len` the outer one).
    pub fn face(&self, i: usize) -> f64 {
        self.inner + i as f64 * self.h
    }

    /// `|S^{n-1}| r^{n-1}` at face `i`.
    pub fn face_area(&self, i: usize) -> f64 {
        unit_sphere_area(self.dim) * self.face(i).powi(self.dim as i32 - 1)
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    pub fn integrate_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch);
        }
        Ok(values.iter().zip(&self.weights).map(|(v, w)| v * w).sum())
    }
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::PI;

    #[test]
    fn unit_cube_quarter_spacing() {
        let g = Grid::build(Domain::unit_cube(), 0.25).unwrap();
        assert_eq!(g.len(), 64);
        assert!(g.weights().iter().all(|&w| w == 1.0 / 64.0));
        assert_eq!(g.measure(), 1.0);
    }

    #[test]
    fn ball_volume_within_one_percent() {
        let g = Grid::build(Domain::ball(1.0), 1.0 / 16.0).unwrap();
        let exact = 4.0 * PI / 3.0;
        assert!((g.measure() - exact).abs() < 0.01 * exact, "{}", g.measure());
        assert!(g.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn annulus_volume_within_one_percent() {
        let g = Grid::build(Domain::annulus(0.25, 1.0), 1.0 / 16.0).unwrap();
        let exact = 4.0 * PI / 3.0 * (1.0 - 1.0 / 64.0);
        assert!((g.measure() - exact).abs() < 0.01 * exact);
    }

    #[test]
    fn no_node_at_origin() {
        let g = Grid::build(Domain::ball(1.0), 1.0 / 8.0).unwrap();
        let rmin = g.coords().iter().map(norm3).fold(f64::INFINITY, f64::min);
        assert!((rmin - 3.0f64.sqrt() / 16.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_coarse_and_degenerate() {
        assert!(Grid::build(Domain::ball(1.0), 0.6).is_err());
        assert!(Grid::build(Domain::ball(-1.0), 0.1).is_err());
        assert!(Grid::build(Domain::annulus(0.5, 0.4), 0.01).is_err());
        assert!(matches!(
            Grid::build(Domain::ball(1.0), 1.0 / 100.0),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn boundary_fraction_on_cube_is_half() {
        let g = Grid::build(Domain::unit_cube(), 0.125).unwrap();
        let n = g.node_at([0, 3, 3]).unwrap();
        assert!(g.neighbor(n, 0, -1).is_none());
        assert!((g.boundary_fraction(n, 0, -1) - 0.5).abs() < 1e-12);
        assert!(g.boundary_band()[n]);
    }

    #[test]
    fn radial_annulus_measure() {
        let rg = RadialGrid::reduce(&Domain::annulus(0.25, 1.0), 1e-3).unwrap();
        let exact = 4.0 * PI / 3.0 * (1.0 - 0.25f64.powi(3));
        assert!((rg.integrate_values(&vec![1.0; rg.len()]).unwrap() - exact).abs() < 1e-4);
        assert!(RadialGrid::reduce(&Domain::unit_cube(), 1e-2).is_err());
    }

    #[test]
    fn radial_and_full_integrals_agree() {
        let d = Domain::annulus(0.25, 1.0);
        let rg = RadialGrid::reduce(&d, 1e-3).unwrap();
        let g = Grid::build(d, 1.0 / 32.0).unwrap();
        let f = |r: f64| 1.0 + r * r;
        let radial = rg.integrate_values(&rg.sample(f)).unwrap();
        let full = g.integrate_values(&g.sample(|x| f(norm3(x)))).unwrap();
        assert!((radial - full).abs() < 0.01 * radial, "{radial} vs {full}");
        assert_eq!(rg.integrate_values(&vec![0.0; rg.len()]).unwrap(), 0.0);
    }

    #[test]
    fn higher_dimensional_radial_measure() {
        let d = Domain::ball(1.0).with_dim(5).unwrap();
        let rg = RadialGrid::reduce(&d, 1e-3).unwrap();
        let total = rg.integrate_values(&vec![1.0; rg.len()]).unwrap();
        assert!((total - d.measure()).abs() < 1e-5);
        assert!(Domain::unit_cube().with_dim(4).is_err());
    }
}
