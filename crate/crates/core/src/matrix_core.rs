//! Dense real matrices, symmetric eigenvalue solvers and the matrix
//! parameters built on them.
//!
//! Matrices are stored row-major in a flat `Vec<f64>`. Small symmetric
//! problems (dimension at most [`JACOBI_MAX_DIM`]) use cyclic Jacobi, larger
//! ones a Householder reduction followed by implicit QL.

use crate::error::{Error, Result};

/// Largest dimension handled by the Jacobi solver in [`symmetric_eigenvalues`].
pub const JACOBI_MAX_DIM: usize = 64;

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const PSD_REL_TOL: f64 = 1e-9;

/// Exactly symmetric real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

/// Rectangular real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RectMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Covariance of the `d*d` entries of a `d x d` random matrix, stored as a
/// symmetric `d^2 x d^2` matrix indexed by `(i*d + j, k*d + l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovTensor {
    d: usize,
    mat: SymMatrix,
}

impl SymMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Shape(format!(
                "expected {} entries for dimension {}, got {}",
                dim * dim,
                dim,
                data.len()
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if data[i * dim + j] != data[j * dim + i] {
                    return Err(Error::Shape(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(SymMatrix { dim, data })
    }

    /// Builds a symmetric matrix from the upper triangle of `f`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        SymMatrix { dim, data }
    }

    /// Symmetrizes an arbitrary square matrix as `(A + A^T) / 2`.
    pub fn symmetrize(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Shape("data length is not dim^2".into()));
        }
        Ok(Self::from_fn(dim, |i, j| {
            if i == j {
                data[i * dim + i]
            } else {
                0.5 * (data[i * dim + j] + data[j * dim + i])
            }
        }))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets entries `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix { dim: self.dim, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Shape("dimension mismatch in add".into()));
        }
        Ok(SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Product `self * other` as a general matrix.
    pub fn matmul(&self, other: &SymMatrix) -> RectMatrix {
        RectMatrix::from_vec(self.dim, self.dim, self.data.clone())
            .expect("square")
            .matmul(&RectMatrix::from_vec(other.dim, other.dim, other.data.clone()).expect("square"))
            .expect("matching dims")
    }

    /// `Q^T A Q` for a square `Q`, symmetrized against rounding.
    pub fn conjugate(&self, q: &RectMatrix) -> Result<Self> {
        if q.rows != self.dim || q.cols != self.dim {
            return Err(Error::Shape("conjugating matrix has the wrong shape".into()));
        }
        let a = RectMatrix::from_vec(self.dim, self.dim, self.data.clone())?;
        let prod = q.transpose().matmul(&a)?.matmul(q)?;
        SymMatrix::symmetrize(self.dim, &prod.data)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| self.data[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl RectMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} entries for a {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                data.len()
            )));
        }
        Ok(RectMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RectMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RectMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> RectMatrix {
        RectMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &RectMatrix) -> Result<RectMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            let row = &mut out[i * p..(i + 1) * p];
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * p..(k + 1) * p];
                for (o, b) in row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        Ok(RectMatrix { rows: n, cols: p, data: out })
    }

    /// Gram matrix `M M^T`, exactly symmetric.
    pub fn gram_rows(&self) -> SymMatrix {
        let (r, c) = (self.rows, self.cols);
        let mut g = SymMatrix::zeros(r);
        for i in 0..r {
            let ri = &self.data[i * c..(i + 1) * c];
            for j in i..r {
                let rj = &self.data[j * c..(j + 1) * c];
                let s: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                g.set(i, j, s);
            }
        }
        g
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl CovTensor {
    /// Wraps a `d^2 x d^2` symmetric matrix. Positive semidefiniteness is
    /// checked lazily by the parameter functions.
    pub fn new(d: usize, mat: SymMatrix) -> Result<Self> {
        if mat.dim() != d * d {
            return Err(Error::Shape(format!(
                "covariance of a {d}x{d} matrix must have dimension {}, got {}",
                d * d,
                mat.dim()
            )));
        }
        Ok(CovTensor { d, mat })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.mat
    }

    /// `Cov(X_ij, X_kl)`.
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.mat.get(i * self.d + j, k * self.d + l)
    }

    /// Covariance tensor of `Q^T X Q` for an orthogonal `Q`.
    pub fn conjugate(&self, q: &RectMatrix) -> Result<Self> {
        let d = self.d;
        if q.rows() != d || q.cols() != d {
            return Err(Error::Shape("conjugating matrix has the wrong shape".into()));
        }
        // (Q^T X Q)_{ab} = sum_{ij} Q_ia Q_jb X_ij, so the transform is Q (x) Q
        let kron = RectMatrix::from_fn(d * d, d * d, |ij, ab| {
            let (i, j) = (ij / d, ij % d);
            let (a, b) = (ab / d, ab % d);
            q.get(i, a) * q.get(j, b)
        });
        CovTensor::new(d, self.mat.conjugate(&kron)?)
    }
}

/// Self-adjoint dilation `[[0, M], [M^T, 0]]` of a square matrix.
pub fn selfadjoint_dilation(m: &RectMatrix) -> Result<SymMatrix> {
    if m.rows() != m.cols() {
        return Err(Error::Shape(format!(
            "dilation needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let d = m.rows();
    let mut s = SymMatrix::zeros(2 * d);
    for i in 0..d {
        for j in 0..d {
            s.set(i, d + j, m.get(i, j));
        }
    }
    Ok(s)
}

/// Eigenvalues and eigenvectors by cyclic Jacobi rotations.
///
/// Sweeps visit `(p, q)` with `p < q` in row-major order and stop once the
/// off-diagonal Frobenius norm falls below `1e-12 * |A|_F`. Eigenvalues are
/// returned in ascending order; column `k` of the returned matrix is the
/// eigenvector of eigenvalue `k`.
pub fn jacobi_eigen(a: &SymMatrix) -> Result<(Vec<f64>, RectMatrix)> {
    if !a.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let n = a.dim();
    let mut m = a.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let tol = JACOBI_REL_TOL * a.frobenius_norm();
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    let nkp = c * akp - s * akq;
                    let nkq = s * akp + c * akq;
                    m[k * n + p] = nkp;
                    m[p * n + k] = nkp;
                    m[k * n + q] = nkq;
                    m[q * n + k] = nkq;
                }
                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[x * n + x].total_cmp(&m[y * n + y]));
    let values: Vec<f64> = order.iter().map(|&k| m[k * n + k]).collect();
    let vectors = RectMatrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    Ok((values, vectors))
}

/// Eigenvalues in ascending order by Householder tridiagonalization and
/// implicit QL with Wilkinson-type shifts.
pub fn tridiagonal_ql_eigenvalues(a: &SymMatrix) -> Result<Vec<f64>> {
    if !a.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let n = a.dim();
    if n == 0 {
        return Ok(vec![]);
    }
    let (mut d, mut e) = householder_tridiagonal(a);
    implicit_ql(&mut d, &mut e)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Reduces `a` to tridiagonal form. Returns the diagonal and the
/// off-diagonal, with `e[i]` coupling `i` and `i + 1` and `e[n-1] = 0`.
fn householder_tridiagonal(a: &SymMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.dim();
    let mut m = a.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let lo = k + 1;
        let len = n - lo;
        let x = &m[k * n + lo..k * n + n];
        let xnorm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        d[k] = m[k * n + k];
        if xnorm == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let alpha = if x[0] > 0.0 { -xnorm } else { xnorm };
        v[..len].copy_from_slice(x);
        v[0] -= alpha;
        let vtv: f64 = v[..len].iter().map(|t| t * t).sum();
        e[k] = alpha;
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        // w = beta * A22 v
        for i in 0..len {
            let row = &m[(lo + i) * n + lo..(lo + i) * n + n];
            w[i] = beta * row.iter().zip(&v[..len]).map(|(a, b)| a * b).sum::<f64>();
        }
        let kk = 0.5 * beta * v[..len].iter().zip(&w[..len]).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..len {
            w[i] -= kk * v[i];
        }
        for i in 0..len {
            let vi = v[i];
            let wi = w[i];
            let row = &mut m[(lo + i) * n + lo..(lo + i) * n + n];
            for (j, r) in row.iter_mut().enumerate() {
                *r -= vi * w[j] + wi * v[j];
            }
        }
    }
    if n >= 2 {
        d[n - 2] = m[(n - 2) * n + n - 2];
        d[n - 1] = m[(n - 1) * n + n - 1];
        e[n - 2] = m[(n - 2) * n + n - 1];
    } else {
        d[0] = m[0];
    }
    (d, e)
}

fn implicit_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                return Err(Error::Convergence("implicit QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigenvalues in ascending order. Jacobi up to [`JACOBI_MAX_DIM`],
/// tridiagonal QL above.
pub fn symmetric_eigenvalues(a: &SymMatrix) -> Result<Vec<f64>> {
    if a.dim() <= JACOBI_MAX_DIM {
        Ok(jacobi_eigen(a)?.0)
    } else {
        tridiagonal_ql_eigenvalues(a)
    }
}

/// Operator norm `max |lambda|` of a symmetric matrix.
pub fn operator_norm(a: &SymMatrix) -> Result<f64> {
    let ev = symmetric_eigenvalues(a)?;
    Ok(ev.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// `(1/d) Tr(A^p)` from the eigenvalues.
pub fn normalized_trace_power(a: &SymMatrix, p: u32) -> Result<f64> {
    let ev = symmetric_eigenvalues(a)?;
    Ok(normalized_power_sum(&ev, p))
}

/// `(1/n) sum lambda^p`.
pub fn normalized_power_sum(values: &[f64], p: u32) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|x| x.powi(p as i32)).sum::<f64>() / values.len() as f64
}

/// Singular values in descending order, from the eigenvalues of the
/// smaller Gram matrix.
pub fn singular_values(m: &RectMatrix) -> Result<Vec<f64>> {
    if !m.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let gram = if m.rows() <= m.cols() { m.gram_rows() } else { m.transpose().gram_rows() };
    let mut ev = symmetric_eigenvalues(&gram)?;
    ev.reverse();
    Ok(ev.into_iter().map(|x| x.max(0.0).sqrt()).collect())
}

fn check_psd(values: &[f64], scale: f64, what: &str) -> Result<()> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_REL_TOL * scale {
        return Err(Error::Domain(format!(
            "{what} is not positive semidefinite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// `sigma = |E S^2|^{1/2}` from the second-moment matrix.
pub fn sigma_param(s2: &SymMatrix) -> Result<f64> {
    let ev = symmetric_eigenvalues(s2)?;
    let norm = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    check_psd(&ev, norm, "second-moment matrix")?;
    Ok(norm.sqrt())
}

/// `v = |Cov(X)|^{1/2}`.
pub fn v_param(c: &CovTensor) -> Result<f64> {
    let ev = symmetric_eigenvalues(c.matrix())?;
    let norm = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    check_psd(&ev, norm, "covariance")?;
    Ok(norm.sqrt())
}

/// Solves `A x = b` by LU with partial pivoting. Returns the solution and
/// the 1-norm condition number of `A`.
pub fn lu_solve(a: &RectMatrix, b: &RectMatrix) -> Result<(RectMatrix, f64)> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(Error::Shape("lu_solve needs a square system".into()));
    }
    let norm1 = |m: &RectMatrix| -> f64 {
        (0..m.cols()).map(|j| (0..m.rows()).map(|i| m.get(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
    };
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let piv = (k..n).max_by(|&x, &y| lu.get(x, k).abs().total_cmp(&lu.get(y, k).abs())).unwrap();
        if lu.get(piv, k) == 0.0 {
            return Err(Error::Numeric("singular matrix".into()));
        }
        if piv != k {
            perm.swap(piv, k);
            for j in 0..n {
                let t = lu.get(k, j);
                lu.set(k, j, lu.get(piv, j));
                lu.set(piv, j, t);
            }
        }
        let pivot = lu.get(k, k);
        for i in (k + 1)..n {
            let f = lu.get(i, k) / pivot;
            lu.set(i, k, f);
            for j in (k + 1)..n {
                lu.set(i, j, lu.get(i, j) - f * lu.get(k, j));
            }
        }
    }
    let solve = |rhs: &RectMatrix| -> RectMatrix {
        let mut x = RectMatrix::zeros(n, rhs.cols());
        for c in 0..rhs.cols() {
            let mut y: Vec<f64> = (0..n).map(|i| rhs.get(perm[i], c)).collect();
            for i in 0..n {
                for k in 0..i {
                    y[i] -= lu.get(i, k) * y[k];
                }
            }
            for i in (0..n).rev() {
                for k in (i + 1)..n {
                    y[i] -= lu.get(i, k) * y[k];
                }
                y[i] /= lu.get(i, i);
            }
            for i in 0..n {
                x.set(i, c, y[i]);
            }
        }
        x
    };
    let ident = RectMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let inv = solve(&ident);
    let cond = norm1(a) * norm1(&inv);
    Ok((solve(b), cond))
}
