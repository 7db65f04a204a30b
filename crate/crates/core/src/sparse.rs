//! Compressed sparse rows, ILU(0), Krylov solvers and a banded direct solver.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Square sparse matrix in CSR form with sorted column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries; explicit zeros are kept so the pattern can be
    /// compared across assemblies.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        if t.iter().any(|&(i, j, _)| i >= n || j >= n) {
            return Err(Error::InvalidParameter("triplet index out of range"));
        }
        if t.iter().any(|e| !e.2.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        t.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix { n, row_ptr, cols, vals })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix { n, row_ptr: (0..=n).collect(), cols: (0..n).collect(), vals: vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let (c, v) = self.row(i);
            y[i] = c.iter().zip(v).map(|(j, a)| a * x[*j]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (j, a) in c.iter().zip(v) {
                t.push((*j, i, *a));
            }
        }
        CsrMatrix::from_triplets(self.n, t).expect("transpose of a valid matrix")
    }

    /// `self + s · other`.
    pub fn add_scaled(&self, s: f64, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n != other.n {
            return Err(Error::Dimension { expected: self.n, got: other.n });
        }
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, s * v)));
        CsrMatrix::from_triplets(self.n, t)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (c, v) = self.row(i);
            t.extend(c.iter().zip(v).map(|(j, a)| (i, *j, *a)));
        }
        t
    }

    /// `max |self_ij - other_ij|` over the union of the patterns.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        match self.add_scaled(-1.0, other) {
            Ok(d) => d.vals.iter().fold(0.0, |m, v| m.max(v.abs())),
            Err(_) => f64::INFINITY,
        }
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).0.iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// True when every entry `(i, j)` has a stored partner `(j, i)`.
    pub fn has_symmetric_pattern(&self) -> bool {
        (0..self.n).all(|i| self.row(i).0.iter().all(|&j| self.row(j).0.binary_search(&i).is_ok()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.transpose())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let n = a.n;
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            let (c, _) = lu.row(i);
            match c.binary_search(&i) {
                Ok(k) => diag[i] = lu.row_ptr[i] + k,
                Err(_) => return Err(Error::InvalidParameter("ILU(0) needs a full diagonal")),
            }
        }
        for i in 1..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for kk in start..end {
                let k = lu.cols[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::NonFinite("zero pivot in ILU(0)"));
                }
                let factor = lu.vals[kk] / pivot;
                lu.vals[kk] = factor;
                // row_i[j] -= factor * row_k[j] for j > k in the common pattern
                let (ks, ke) = (diag[k] + 1, lu.row_ptr[k + 1]);
                let mut p = kk + 1;
                for q in ks..ke {
                    let j = lu.cols[q];
                    while p < end && lu.cols[p] < j {
                        p += 1;
                    }
                    if p < end && lu.cols[p] == j {
                        lu.vals[p] -= factor * lu.vals[q];
                    }
                }
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    /// `z = (LU)^{-1} r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.n;
        for i in 0..n {
            let mut s = r[i];
            for k in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.vals[k] * z[self.lu.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.vals[k] * z[self.lu.cols[k]];
            }
            z[i] = s / self.lu.vals[self.diag[i]];
        }
    }
}

/// Result of an iterative solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b - Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, y)| b - y).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// Preconditioned conjugate gradients for symmetric positive definite `a`.
pub fn cg(a: &CsrMatrix, b: &[f64], x0: &[f64], pre: &Ilu0, tol: f64, max_iter: usize) -> Result<Iterate> {
    let n = a.n;
    let mut x = x0.to_vec();
    let nb = norm2(b);
    if nb == 0.0 {
        return Ok(Iterate { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let ax = a.apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, y)| b - y).collect();
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 0..max_iter {
        if norm2(&r) <= tol * nb {
            return Ok(Iterate { relative_residual: relative_residual(a, &x, b), x, iterations: it });
        }
        a.mul_vec(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = relative_residual(a, &x, b);
    if res <= tol {
        Ok(Iterate { x, iterations: max_iter, relative_residual: res })
    } else {
        Err(Error::NotConverged { iterations: max_iter, residual: res })
    }
}

/// Right-preconditioned BiCGSTAB for general `a`.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    pre: &Ilu0,
    tol: f64,
    max_iter: usize,
) -> Result<Iterate> {
    let n = a.n;
    let nb = norm2(b);
    if nb == 0.0 {
        return Ok(Iterate { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let mut x = x0.to_vec();
    let mut restarts = 0;
    let mut total = 0;
    'outer: loop {
        let ax = a.apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, y)| b - y).collect();
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut t = vec![0.0; n];
        while total < max_iter {
            if norm2(&r) <= tol * nb {
                let res = relative_residual(a, &x, b);
                if res <= tol * 10.0 {
                    return Ok(Iterate { x, iterations: total, relative_residual: res });
                }
            }
            total += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                restarts += 1;
                if restarts > 20 {
                    break 'outer;
                }
                continue 'outer;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            pre.apply(&p, &mut y);
            a.mul_vec(&y, &mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 {
                restarts += 1;
                if restarts > 20 {
                    break 'outer;
                }
                continue 'outer;
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) <= tol * nb {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                r.copy_from_slice(&s);
                continue;
            }
            pre.apply(&s, &mut z);
            a.mul_vec(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
        }
        break;
    }
    let res = relative_residual(a, &x, b);
    if res <= tol * 10.0 {
        Ok(Iterate { x, iterations: total, relative_residual: res })
    } else {
        Err(Error::NotConverged { iterations: total, residual: res })
    }
}

/// LU factorization with partial pivoting of a band matrix.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    /// Upper bandwidth after pivoting, `kl + ku`.
    ku2: usize,
    /// Row `i` stores columns `i - kl ..= i + ku2` at offset `j + kl - i`.
    band: Vec<f64>,
    piv: Vec<usize>,
    width: usize,
    min_pivot: f64,
}

impl BandedLu {
    /// Storage the factorization of `a` would take, in `f64` slots.
    pub fn storage(a: &CsrMatrix) -> usize {
        let bw = a.bandwidth();
        a.n * (3 * bw + 1)
    }

    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n;
        let kl = a.bandwidth();
        let ku2 = 2 * kl;
        let width = kl + ku2 + 1;
        let mut band = vec![0.0; n * width];
        for i in 0..n {
            let (c, v) = a.row(i);
            for (j, x) in c.iter().zip(v) {
                band[i * width + (j + kl - i)] = *x;
            }
        }
        let mut piv = vec![0usize; n];
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = band[k * width + kl].abs();
            for i in k + 1..=last {
                let v = band[i * width + (k + kl - i)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            min_pivot = min_pivot.min(best);
            if best == 0.0 {
                return Err(Error::NonFinite("singular band matrix"));
            }
            let jmax = (k + ku2).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a_ = k * width + (j + kl - k);
                    let b_ = p * width + (j + kl - p);
                    band.swap(a_, b_);
                }
            }
            let pivot = band[k * width + kl];
            for i in k + 1..=last {
                let ik = i * width + (k + kl - i);
                let f = band[ik] / pivot;
                band[ik] = f;
                if f != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = band[k * width + (j + kl - k)];
                        band[i * width + (j + kl - i)] -= f * kj;
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku2, band, piv, width, min_pivot })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, w) = (self.n, self.kl, self.width);
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            let xk = x[k];
            for i in k + 1..=last {
                x[i] -= self.band[i * w + (k + kl - i)] * xk;
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + self.ku2).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=jmax {
                s -= self.band[k * w + (j + kl - k)] * x[j];
            }
            x[k] = s / self.band[k * w + kl];
        }
        x
    }

    /// Smallest pivot magnitude met during elimination.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }
}

/// Direct or iterative linear solver picked by problem size.
#[derive(Clone, Debug)]
pub enum Factor {
    Banded(BandedLu),
    Iterative { matrix: CsrMatrix, ilu: Ilu0, symmetric: bool },
}

/// Direct solves are used while the band factor stays below this many slots.
pub const DIRECT_STORAGE_LIMIT: usize = 4_000_000;

impl Factor {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if BandedLu::storage(a) <= DIRECT_STORAGE_LIMIT {
            Ok(Factor::Banded(BandedLu::new(a)?))
        } else {
            let symmetric = a.max_asymmetry() == 0.0;
            Ok(Factor::Iterative { matrix: a.clone(), ilu: Ilu0::new(a)?, symmetric })
        }
    }

    pub fn iterative(a: &CsrMatrix) -> Result<Self> {
        let symmetric = a.max_asymmetry() == 0.0;
        Ok(Factor::Iterative { matrix: a.clone(), ilu: Ilu0::new(a)?, symmetric })
    }

    pub fn is_direct(&self) -> bool {
        matches!(self, Factor::Banded(_))
    }

    pub fn solve(&self, b: &[f64], x0: &[f64], tol: f64) -> Result<Iterate> {
        match self {
            Factor::Banded(lu) => Ok(Iterate { x: lu.solve(b), iterations: 1, relative_residual: f64::NAN }),
            Factor::Iterative { matrix, ilu, symmetric } => {
                let max_iter = 20 * matrix.n().max(100);
                if *symmetric {
                    cg(matrix, b, x0, ilu, tol, max_iter)
                } else {
                    bicgstab(matrix, b, x0, ilu, tol, max_iter)
                }
            }
        }
    }
}
