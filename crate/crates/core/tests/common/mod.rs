//! Independent reference implementations for tests. Deliberately naive:
//! dense `ndarray` storage, textbook Cholesky, cyclic Jacobi rotations.

#![allow(dead_code)]

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use ssirvrp::linalg::SymMatrix;

pub fn to_sym(a: &Array2<f64>) -> SymMatrix {
    let n = a.nrows();
    SymMatrix::from_fn(n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]])).unwrap()
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// `GGᵀ/p + ridge·I` for a Gaussian `G`; condition number stays moderate.
pub fn random_spd<R: Rng>(rng: &mut R, p: usize, ridge: f64) -> Array2<f64> {
    let g = gaussian_matrix(rng, p, p + 3);
    let mut a = g.dot(&g.t()) / p as f64;
    for i in 0..p {
        a[[i, i]] += ridge;
    }
    a
}

/// Random PSD matrix of rank `r`.
pub fn random_low_rank<R: Rng>(rng: &mut R, p: usize, r: usize) -> Array2<f64> {
    let g = gaussian_matrix(rng, p, r);
    g.dot(&g.t())
}

/// Lower Cholesky factor by the Cholesky–Banachiewicz recurrence.
pub fn chol(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                assert!(sum > 0.0, "oracle cholesky: not positive definite");
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    l
}

pub fn lower_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        for i in c..n {
            let mut sum = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                sum -= l[[i, k]] * inv[[k, c]];
            }
            inv[[i, c]] = sum / l[[i, i]];
        }
    }
    inv
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, descending.
pub fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

pub fn submatrix(a: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((idx.len(), idx.len()), |(i, j)| a[[idx[i], idx[j]]])
}

/// `L⁻¹ A L⁻ᵀ` with `B = LLᵀ`.
pub fn whitened(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let li = lower_inverse(&chol(b));
    li.dot(a).dot(&li.t())
}

/// Generalized eigenvalues of `(A, B)`, descending.
pub fn gen_eigenvalues(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    jacobi_eigenvalues(&whitened(a, b))
}

/// Sum of the top `d` generalized eigenvalues of `(A_SS, B_SS)`.
pub fn subset_score(a: &Array2<f64>, b: &Array2<f64>, idx: &[usize], d: usize) -> f64 {
    gen_eigenvalues(&submatrix(a, idx), &submatrix(b, idx))[..d].iter().sum()
}

/// Every `k`-subset of `0..p` in lexicographic order.
pub fn all_subsets(p: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..p {
            cur.push(j);
            rec(j + 1, p, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, p, k, &mut Vec::new(), &mut out);
    out
}

/// Reorders rows and columns so that `leading` comes first, the rest after
/// in their original order. Returns the permuted matrix.
pub fn lead_with(a: &Array2<f64>, leading: &[usize]) -> Array2<f64> {
    let n = a.nrows();
    let mut order: Vec<usize> = leading.to_vec();
    order.extend((0..n).filter(|j| !leading.contains(j)));
    submatrix(a, &order)
}

pub fn leading_block(a: &Array2<f64>, k: usize) -> Array2<f64> {
    a.slice(s![..k, ..k]).to_owned()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Orthonormal `p × d` frame from Gram–Schmidt on Gaussian columns.
pub fn random_frame<R: Rng>(rng: &mut R, p: usize, d: usize) -> Array2<f64> {
    let mut g = gaussian_matrix(rng, p, d);
    for c in 0..d {
        for prev in 0..c {
            let dot = g.column(c).dot(&g.column(prev));
            let prev_col = g.column(prev).to_owned();
            g.column_mut(c).scaled_add(-dot, &prev_col);
        }
        let norm = g.column(c).dot(&g.column(c)).sqrt();
        g.column_mut(c).mapv_inplace(|x| x / norm);
    }
    g
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut m = a.clone();
    let mut det = 1.0;
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))
            .unwrap();
        if m[[pivot, c]] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            for k in 0..n {
                m.swap([c, k], [pivot, k]);
            }
            det = -det;
        }
        det *= m[[c, c]];
        for r in c + 1..n {
            let f = m[[r, c]] / m[[c, c]];
            for k in c..n {
                m[[r, k]] -= f * m[[c, k]];
            }
        }
    }
    det
}

/// Roots of `λ ↦ det(A − λB)` on `[-bound, bound]`: sign changes on a
/// uniform grid, refined by bisection. Descending.
pub fn pencil_roots(a: &Array2<f64>, b: &Array2<f64>, bound: f64, steps: usize) -> Vec<f64> {
    let f = |lam: f64| det(&(a - &(b * lam)));
    let h = 2.0 * bound / steps as f64;
    let mut roots = Vec::new();
    let mut lo = -bound;
    let mut flo = f(lo);
    for i in 1..=steps {
        let hi = -bound + h * i as f64;
        let fhi = f(hi);
        if fhi == 0.0 {
            roots.push(hi);
        } else if flo != 0.0 && flo.signum() != fhi.signum() {
            let (mut a_, mut b_, mut fa) = (lo, hi, flo);
            for _ in 0..200 {
                let mid = 0.5 * (a_ + b_);
                let fm = f(mid);
                if fm == 0.0 || b_ - a_ < 1e-15 * mid.abs().max(1.0) {
                    a_ = mid;
                    b_ = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a_ = mid;
                    fa = fm;
                } else {
                    b_ = mid;
                }
            }
            roots.push(0.5 * (a_ + b_));
        }
        lo = hi;
        flo = fhi;
    }
    roots.sort_by(|x, y| y.total_cmp(x));
    roots
}
