//! Dense symmetric linear algebra: Cholesky factorization, the symmetric
//! eigendecomposition, and the Cholesky-reduced generalized eigenproblem
//! `A v = λ B v` with `B` positive definite.
//!
//! Matrices here are small (the hot path is `k × k` with `k ≈ 20`), so
//! everything is stored densely in row-major `Vec<f64>` buffers. The
//! eigen-solver is Householder tridiagonalization followed by implicit QL
//! with Wilkinson-style shifts. A values-only variant shares the exact same
//! arithmetic on the eigenvalues, so scores computed without eigenvectors are
//! bit-identical to those computed with them.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Iteration budget of the implicit QL sweep, per eigenvalue.
pub const MAX_QL_ITERATIONS: usize = 64;

/// A dense real symmetric matrix in full row-major storage.
///
/// Construction enforces exact symmetry and finiteness, so both triangles
/// always agree.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    /// Builds a matrix from a full row-major buffer, rejecting asymmetric or
    /// non-finite input.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        for i in 0..dim {
            for j in 0..i {
                if data[i * dim + j] != data[j * dim + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(SymMatrix { dim, data })
    }

    /// Builds a matrix from its lower triangle; the upper triangle of `data`
    /// is ignored and overwritten by the mirror image.
    pub fn from_lower(dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        mirror_lower(&mut data, dim);
        Self::from_row_major(dim, data)
    }

    /// Builds a matrix by evaluating `f(i, j)` on the lower triangle.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                data[i * dim + j] = f(i, j);
            }
        }
        Self::from_lower(dim, data)
    }

    pub fn from_array(a: &Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!("{r}x{c} is not square")));
        }
        Self::from_row_major(r, a.iter().copied().collect())
    }

    /// Like [`SymMatrix::from_array`] but takes the lower triangle as
    /// authoritative, absorbing round-off asymmetry from matrix products.
    pub fn from_array_lower(a: &Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!("{r}x{c} is not square")));
        }
        Self::from_lower(r, a.iter().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.dim, self.dim), self.data.clone())
            .expect("shape matches storage")
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Returns `c · self`.
    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// `x` is taken as a column vector; returns `self · x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Quadratic form `uᵀ · self · v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(self.mul_vec(v))
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }

    /// The `|S| × |S|` principal submatrix on the strictly increasing index
    /// set `S`.
    pub fn principal_submatrix(&self, indices: &[usize]) -> Result<SymMatrix> {
        check_index_set(indices, self.dim)?;
        let k = indices.len();
        let mut data = vec![0.0; k * k];
        gather_block(&self.data, self.dim, indices, &mut data);
        Ok(SymMatrix { dim: k, data })
    }
}

/// Convenience wrapper over [`SymMatrix::principal_submatrix`].
pub fn principal_submatrix(a: &SymMatrix, indices: &[usize]) -> Result<SymMatrix> {
    a.principal_submatrix(indices)
}

pub(crate) fn check_index_set(indices: &[usize], dim: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::InvalidIndexSet("index set is empty".into()));
    }
    for w in indices.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidIndexSet(format!(
                "indices must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    let last = *indices.last().expect("nonempty");
    if last >= dim {
        return Err(Error::IndexOutOfRange { index: last, dim });
    }
    Ok(())
}

/// Copies the `(S, S)` block of a row-major `dim × dim` buffer into `out`.
#[inline]
pub(crate) fn gather_block(src: &[f64], dim: usize, indices: &[usize], out: &mut [f64]) {
    let k = indices.len();
    for (a, &i) in indices.iter().enumerate() {
        let row = &src[i * dim..(i + 1) * dim];
        let dst = &mut out[a * k..(a + 1) * k];
        for (d, &j) in dst.iter_mut().zip(indices) {
            *d = row[j];
        }
    }
}

fn mirror_lower(data: &mut [f64], dim: usize) {
    for i in 0..dim {
        for j in 0..i {
            data[j * dim + i] = data[i * dim + j];
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `A + jitter·I = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lower
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.dim, self.dim), self.lower.clone())
            .expect("shape matches storage")
    }

    /// `L · Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += self.get(i, k) * self.get(j, k);
                }
                out[i * n + j] = s;
            }
        }
        SymMatrix::from_lower(n, out).expect("product of finite factors")
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        forward_substitute(&self.lower, self.dim, b, 1);
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper(&self, b: &mut [f64]) {
        backward_substitute_transposed(&self.lower, self.dim, b);
    }
}

/// Factors `A + jitter·I = L·Lᵀ`.
pub fn cholesky(a: &SymMatrix, jitter: f64) -> Result<CholeskyFactor> {
    if !(jitter.is_finite() && jitter >= 0.0) {
        return Err(Error::InvalidParams(format!("jitter must be >= 0, got {jitter}")));
    }
    let n = a.dim();
    let mut lower = a.data.clone();
    if jitter > 0.0 {
        for i in 0..n {
            lower[i * n + i] += jitter;
        }
    }
    cholesky_in_place(&mut lower, n)?;
    Ok(CholeskyFactor { dim: n, lower })
}

/// In-place lower Cholesky of a row-major symmetric buffer. Only the lower
/// triangle is read; the strict upper triangle is zeroed on success.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let (above, below) = a.split_at_mut((j + 1) * n);
        let row_j = &mut above[j * n..];
        let mut diag = row_j[j];
        for v in &row_j[..j] {
            diag -= v * v;
        }
        if !(diag.is_finite() && diag > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        row_j[j] = ljj;
        for v in &mut row_j[j + 1..] {
            *v = 0.0;
        }
        let row_j = &above[j * n..j * n + j];
        for row_i in below.chunks_exact_mut(n) {
            let mut s = row_i[j];
            for (x, y) in row_i[..j].iter().zip(row_j) {
                s -= x * y;
            }
            row_i[j] = s / ljj;
        }
    }
    Ok(())
}

/// Solves `L X = B` in place for a row-major `n × cols` right-hand side.
#[inline]
pub(crate) fn forward_substitute(l: &[f64], n: usize, b: &mut [f64], cols: usize) {
    for i in 0..n {
        let (done, rest) = b.split_at_mut(i * cols);
        let row_i = &mut rest[..cols];
        let li = &l[i * n..i * n + i];
        for (k, &lik) in li.iter().enumerate() {
            if lik != 0.0 {
                let row_k = &done[k * cols..(k + 1) * cols];
                for (x, y) in row_i.iter_mut().zip(row_k) {
                    *x -= lik * y;
                }
            }
        }
        let inv = 1.0 / l[i * n + i];
        for x in row_i.iter_mut() {
            *x *= inv;
        }
    }
}

/// Solves `Lᵀ x = b` in place for a single right-hand side.
#[inline]
pub(crate) fn backward_substitute_transposed(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Eigenvalues in nonincreasing order with matching orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// `dim × top`, one eigenvector per column.
    pub vectors: Array2<f64>,
}

/// Leading `top` eigenpairs of a symmetric matrix.
///
/// Each eigenvector is oriented so its largest-magnitude entry is positive
/// (the lowest such index decides ties).
pub fn sym_eig(a: &SymMatrix, top: usize) -> Result<SymEigen> {
    let n = a.dim();
    if top == 0 || top > n {
        return Err(Error::InvalidParams(format!(
            "requested {top} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let mut ws = EigWorkspace::new(n);
    ws.v.copy_from_slice(&a.data);
    ws.decompose(n, true)?;
    let order = descending_order(&ws.d[..n]);
    let mut vectors = Array2::zeros((n, top));
    let mut values = Vec::with_capacity(top);
    for (c, &src) in order.iter().take(top).enumerate() {
        values.push(ws.d[src]);
        let mut col: Vec<f64> = (0..n).map(|r| ws.v[r * n + src]).collect();
        orient(&mut col);
        for (r, v) in col.into_iter().enumerate() {
            vectors[[r, c]] = v;
        }
    }
    Ok(SymEigen { values, vectors })
}

/// All eigenvalues of a symmetric matrix, nonincreasing.
pub fn sym_eigenvalues(a: &SymMatrix) -> Result<Vec<f64>> {
    let n = a.dim();
    let mut ws = EigWorkspace::new(n);
    ws.v.copy_from_slice(&a.data);
    ws.decompose(n, false)?;
    let mut vals = ws.d[..n].to_vec();
    sort_descending(&mut vals);
    Ok(vals)
}

/// Flips `v` so its largest-magnitude entry is positive.
pub(crate) fn orient(v: &mut [f64]) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if best_abs > 0.0 && v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn descending_order(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    idx
}

pub(crate) fn sort_descending(vals: &mut [f64]) {
    vals.sort_by(|a, b| b.total_cmp(a));
}

/// Generalized eigenpairs of `(A, B)`, eigenvalues nonincreasing and
/// eigenvectors `B`-orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct GenEigResult {
    pub values: Vec<f64>,
    /// `dim × top` in the original coordinates.
    pub vectors: Array2<f64>,
    /// Jitter actually added to `B` before factoring.
    pub jitter: f64,
}

impl GenEigResult {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i).to_vec()
    }
}

/// Leading `top` generalized eigenpairs of `A v = λ B v`.
///
/// Factors `B + jitter·I = L·Lᵀ`, forms `M = L⁻¹ A L⁻ᵀ`, decomposes `M`, and
/// maps each eigenvector back through `v = L⁻ᵀ γ`.
pub fn gen_eig(a: &SymMatrix, b: &SymMatrix, top: usize, jitter: f64) -> Result<GenEigResult> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "pencil dimensions differ: {n} vs {}",
            b.dim()
        )));
    }
    if top == 0 || top > n {
        return Err(Error::InvalidParams(format!(
            "requested {top} eigenpairs of a {n}x{n} pencil"
        )));
    }
    let l = cholesky(b, jitter)?;
    let mut ws = EigWorkspace::new(n);
    reduce_pencil(&l.lower, &a.data, n, &mut ws.scratch, &mut ws.v);
    ws.decompose(n, true)?;
    let order = descending_order(&ws.d[..n]);
    let mut vectors = Array2::zeros((n, top));
    let mut values = Vec::with_capacity(top);
    let mut col = vec![0.0; n];
    for (c, &src) in order.iter().take(top).enumerate() {
        values.push(ws.d[src]);
        for (r, x) in col.iter_mut().enumerate() {
            *x = ws.v[r * n + src];
        }
        l.solve_upper(&mut col);
        orient(&mut col);
        for (r, &v) in col.iter().enumerate() {
            vectors[[r, c]] = v;
        }
    }
    Ok(GenEigResult {
        values,
        vectors,
        jitter,
    })
}

/// Writes `M = L⁻¹ A L⁻ᵀ` into `out` (row-major `n × n`), symmetrized.
pub(crate) fn reduce_pencil(l: &[f64], a: &[f64], n: usize, scratch: &mut [f64], out: &mut [f64]) {
    // X = L⁻¹ A
    scratch[..n * n].copy_from_slice(&a[..n * n]);
    forward_substitute(l, n, &mut scratch[..n * n], n);
    // M = L⁻¹ Xᵀ
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = scratch[j * n + i];
        }
    }
    forward_substitute(l, n, &mut out[..n * n], n);
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (out[i * n + j] + out[j * n + i]);
            out[i * n + j] = avg;
            out[j * n + i] = avg;
        }
    }
}

/// Reusable buffers for repeated eigendecompositions of at most `cap × cap`
/// matrices.
#[derive(Debug, Clone)]
pub(crate) struct EigWorkspace {
    pub v: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub scratch: Vec<f64>,
}

impl EigWorkspace {
    pub fn new(cap: usize) -> Self {
        EigWorkspace {
            v: vec![0.0; cap * cap],
            d: vec![0.0; cap],
            e: vec![0.0; cap],
            scratch: vec![0.0; cap * cap],
        }
    }

    /// Decomposes the symmetric matrix held in `v[..n*n]`. Eigenvalues land
    /// in `d[..n]` (unsorted); with `vectors`, `v` holds them as columns.
    pub fn decompose(&mut self, n: usize, vectors: bool) -> Result<()> {
        if n == 1 {
            self.d[0] = self.v[0];
            self.v[0] = 1.0;
            return Ok(());
        }
        let v = &mut self.v[..n * n];
        let d = &mut self.d[..n];
        let e = &mut self.e[..n];
        if !vectors {
            tridiagonalize_values(v, d, e, n, &mut self.scratch);
            return ql_values(d, e, n);
        }
        householder_tridiagonal(v, d, e, n);
        implicit_ql(v, d, e, n, true)
    }
}

/// `√(a² + b²)` without destructive overflow.
#[inline]
fn pythag(a: f64, b: f64) -> f64 {
    let (a, b) = (a.abs(), b.abs());
    if a > b {
        let t = b / a;
        a * (1.0 + t * t).sqrt()
    } else if b > 0.0 {
        let t = a / b;
        b * (1.0 + t * t).sqrt()
    } else {
        0.0
    }
}

/// Householder tridiagonalization of the full symmetric matrix in `a`
/// without keeping the transformation. On return `d` holds the diagonal and
/// `e[i]` the entry coupling `i` and `i + 1` (`e[n−1] = 0`). `work` needs
/// room for `2n` values.
fn tridiagonalize_values(a: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize, work: &mut [f64]) {
    let (v, rest) = work.split_at_mut(n);
    let w = &mut rest[..n];
    for i in 0..n.saturating_sub(2) {
        let m = n - i - 1;
        let v = &mut v[..m];
        let w = &mut w[..m];
        for (r, vr) in v.iter_mut().enumerate() {
            *vr = a[(i + 1 + r) * n + i];
        }
        let alpha = v[0];
        let sigma: f64 = v[1..].iter().map(|x| x * x).sum();
        d[i] = a[i * n + i];
        if sigma == 0.0 {
            e[i] = alpha;
            continue;
        }
        let norm = (alpha * alpha + sigma).sqrt();
        let beta = if alpha > 0.0 { -norm } else { norm };
        let tau = (beta - alpha) / beta;
        let inv = 1.0 / (alpha - beta);
        v[0] = 1.0;
        for x in &mut v[1..] {
            *x *= inv;
        }
        e[i] = beta;
        // p = τ·A₂₂·v, then w = p − (τ/2)(pᵀv)·v
        let base = i + 1;
        for (r, wr) in w.iter_mut().enumerate() {
            let row = &a[(base + r) * n + base..(base + r) * n + n];
            *wr = tau * row.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>();
        }
        let k = 0.5 * tau * w.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>();
        for (wr, vr) in w.iter_mut().zip(v.iter()) {
            *wr -= k * vr;
        }
        // A₂₂ ← A₂₂ − v·wᵀ − w·vᵀ
        for r in 0..m {
            let (vr, wr) = (v[r], w[r]);
            let row = &mut a[(base + r) * n + base..(base + r) * n + n];
            for ((x, vc), wc) in row.iter_mut().zip(v.iter()).zip(w.iter()) {
                *x -= vr * wc + wr * vc;
            }
        }
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2) * n + n - 2];
        e[n - 2] = a[(n - 1) * n + n - 2];
    }
    d[n - 1] = a[(n - 1) * n + n - 1];
    e[n - 1] = 0.0;
}

/// Eigenvalues of the symmetric tridiagonal `(d, e)` by implicit QL with
/// Wilkinson-type shifts; `d` is overwritten with them (unsorted).
fn ql_values(d: &mut [f64], e: &mut [f64], n: usize) -> Result<()> {
    // Off-diagonals below eps·‖T‖ are negligible at the accuracy the
    // reduction already delivers.
    let norm = d
        .iter()
        .zip(e.iter())
        .fold(0.0f64, |acc, (a, b)| acc.max(a.abs() + b.abs()));
    let tol = f64::EPSILON * norm;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                if e[m].abs() <= tol {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERATIONS {
                return Err(Error::ConvergenceFailure {
                    index: l,
                    budget: MAX_QL_ITERATIONS,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let r = pythag(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r } else { -r });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                let r = pythag(f, g);
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
                let r = (d[i] - g) * s + 2.0 * c * b;
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
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    Ok(())
}

/// Householder reduction of the symmetric matrix in `v` to tridiagonal form
/// (diagonal in `d`, subdiagonal in `e[1..]`); `v` ends up holding the
/// orthogonal transformation.
fn householder_tridiagonal(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in j + 1..i {
                    let vkj = v[k * n + j];
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for k in 0..=i {
                    v[k * n + j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iteration on the tridiagonal `(d, e)`; rotations are applied
/// to the columns of `v` only when `vectors` is set.
fn implicit_ql(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize, vectors: bool) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::ConvergenceFailure {
                        index: l,
                        budget: MAX_QL_ITERATIONS,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if vectors {
                        for k in 0..n {
                            let row = &mut v[k * n..(k + 1) * n];
                            let hk = row[i + 1];
                            row[i + 1] = s * row[i] + c * hk;
                            row[i] = c * row[i] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    Ok(())
}
