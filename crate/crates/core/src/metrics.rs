//! Subspace losses and support-recovery checks.

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, sym_eigenvalues, SymMatrix};

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Tolerance for the orthonormality precondition of [`sin_theta_loss`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Losses of one fit against the truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub correlation_loss: f64,
    pub projection_loss: f64,
    pub sin_theta_loss: Option<f64>,
    /// True support contained in the selection.
    pub signal_hit: bool,
    /// True support equal to the selection.
    pub exact_hit: bool,
}

fn check_shapes(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "bases are {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if a.ncols() == 0 {
        return Err(Error::InvalidParams("bases have no columns".into()));
    }
    Ok(())
}

/// `Uᵀ Σ V` for `p × d` inputs.
fn sigma_cross(u: ArrayView2<f64>, sigma: &SymMatrix, v: ArrayView2<f64>) -> Array2<f64> {
    let mut sv = Array2::zeros(v.dim());
    for (c, col) in v.columns().into_iter().enumerate() {
        let prod = sigma.mul_vec(&col.to_vec());
        for (r, x) in prod.into_iter().enumerate() {
            sv[[r, c]] = x;
        }
    }
    u.t().dot(&sv)
}

fn gram_factor(g: &Array2<f64>) -> Result<crate::linalg::CholeskyFactor> {
    let g = SymMatrix::from_array_lower(g)?;
    let ev = sym_eigenvalues(&g)?;
    let (max, min) = (ev[0], *ev.last().expect("nonempty"));
    let well_posed = min > 0.0 && max / min <= MAX_GRAM_CONDITION;
    if !well_posed {
        return Err(Error::SingularGram {
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    cholesky(&g, 0.0).map_err(|_| Error::SingularGram { condition: f64::INFINITY })
}

/// Solves `G X = B` column by column through the Cholesky factor of `G`.
fn solve_columns(l: &crate::linalg::CholeskyFactor, b: &Array2<f64>) -> Array2<f64> {
    let mut out = b.clone();
    for mut col in out.columns_mut() {
        let mut v = col.to_vec();
        l.solve_lower(&mut v);
        l.solve_upper(&mut v);
        for (dst, x) in col.iter_mut().zip(v) {
            *dst = x;
        }
    }
    out
}

/// `1 − (1/d) tr{(B̂ᵀΣB̂)⁻¹ (B̂ᵀΣB) (BᵀΣB)⁻¹ (BᵀΣB̂)}`, clamped to `[0, 1]`.
pub fn correlation_loss(
    bhat: ArrayView2<f64>,
    btrue: ArrayView2<f64>,
    sigma: &SymMatrix,
) -> Result<f64> {
    check_shapes(bhat, btrue)?;
    if sigma.dim() != bhat.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "sigma is {0}x{0}, bases have {1} rows",
            sigma.dim(),
            bhat.nrows()
        )));
    }
    let d = bhat.ncols() as f64;
    let g_hat = gram_factor(&sigma_cross(bhat, sigma, bhat))?;
    let g_true = gram_factor(&sigma_cross(btrue, sigma, btrue))?;
    let cross = sigma_cross(bhat, sigma, btrue);
    // (BᵀΣB)⁻¹ (BᵀΣB̂)
    let right = solve_columns(&g_true, &cross.t().to_owned());
    let inner = solve_columns(&g_hat, &cross.dot(&right));
    let trace: f64 = inner.diag().sum();
    Ok((1.0 - trace / d).clamp(0.0, 1.0))
}

/// `‖U Uᵀ − V Vᵀ‖_F`.
pub fn projection_loss(u: ArrayView2<f64>, v: ArrayView2<f64>) -> Result<f64> {
    check_shapes(u, v)?;
    let p = u.nrows();
    let mut acc = 0.0;
    for i in 0..p {
        let (ui, vi) = (u.row(i), v.row(i));
        for j in 0..p {
            let diff = ui.dot(&u.row(j)) - vi.dot(&v.row(j));
            acc += diff * diff;
        }
    }
    Ok(acc.sqrt())
}

fn orthonormality_gap(u: ArrayView2<f64>) -> f64 {
    let g = u.t().dot(&u);
    let mut worst: f64 = 0.0;
    for ((i, j), &x) in g.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((x - target).abs());
    }
    worst
}

/// `‖sin Θ(U, V)‖_F = √Σ(1 − σⱼ²)` over the singular values of `UᵀV`.
pub fn sin_theta_loss(u: ArrayView2<f64>, v: ArrayView2<f64>) -> Result<f64> {
    check_shapes(u, v)?;
    for frame in [u, v] {
        let gap = orthonormality_gap(frame);
        if gap > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { deviation: gap });
        }
    }
    let m = u.t().dot(&v);
    let sq = SymMatrix::from_array_lower(&m.t().dot(&m))?;
    let total: f64 = sym_eigenvalues(&sq)?
        .into_iter()
        .map(|s2| 1.0 - s2.clamp(0.0, 1.0))
        .sum();
    Ok(total.sqrt())
}

/// True when every index of `support` is in `selected`.
pub fn signal_hit(selected: &[usize], support: &[usize]) -> bool {
    support.iter().all(|j| selected.contains(j))
}

/// True when the two sets coincide.
pub fn exact_hit(selected: &[usize], support: &[usize]) -> bool {
    let mut a = selected.to_vec();
    let mut b = support.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    a == b
}

/// Correlation and projection losses plus support checks. The sin-theta
/// loss is filled in when both bases are orthonormal.
pub fn evaluate(
    bhat: ArrayView2<f64>,
    selected: &[usize],
    btrue: ArrayView2<f64>,
    support: &[usize],
    sigma: &SymMatrix,
) -> Result<LossReport> {
    Ok(LossReport {
        correlation_loss: correlation_loss(bhat, btrue, sigma)?,
        projection_loss: projection_loss(bhat, btrue)?,
        sin_theta_loss: sin_theta_loss(bhat, btrue).ok(),
        signal_hit: signal_hit(selected, support),
        exact_hit: exact_hit(selected, support),
    })
}
