//! Sliced moment estimation: the covariance `Σ̂` of the covariates and the
//! covariance `Σ̂_{E(X|Y)}` of the slice-wise conditional means.
//!
//! Two storage strategies implement [`MomentSource`]:
//!
//! * [`SlicedMoments`] holds both `p × p` matrices and serves principal
//!   blocks by extraction.
//! * [`ProjectedMoments`] keeps the centered data and computes each `k × k`
//!   block directly from the projected covariates, which is what makes very
//!   large `p` tractable.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_index_set, gather_block, SymMatrix};

/// Partition of the observations into slices of the sorted response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlicePlan {
    /// Slice label of each observation, in `0..n_slices`.
    pub labels: Vec<usize>,
    /// Number of observations per slice.
    pub counts: Vec<usize>,
}

impl SlicePlan {
    pub fn n_slices(&self) -> usize {
        self.counts.len()
    }

    pub fn n_obs(&self) -> usize {
        self.labels.len()
    }

    /// Observation indices per slice, in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_slices()];
        for (i, &h) in self.labels.iter().enumerate() {
            out[h].push(i);
        }
        out
    }
}

/// Equal-frequency slicing on the stable rank order of `y`.
///
/// The `i`-th smallest response (1-based) goes to slice `⌈i·H/n⌉`. When `y`
/// has at most `H` distinct values each value becomes its own slice and the
/// slice count shrinks to match.
pub fn make_slices(y: &[f64], n_slices: usize) -> Result<SlicePlan> {
    let n = y.len();
    if n_slices < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 slices, got {n_slices}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 observations, got {n}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));

    let mut distinct = 1;
    for w in order.windows(2) {
        if y[w[0]] != y[w[1]] {
            distinct += 1;
        }
    }
    if distinct == 1 {
        return Err(Error::DegenerateResponse);
    }

    let mut labels = vec![0; n];
    if distinct <= n_slices {
        let mut h = 0;
        labels[order[0]] = 0;
        for w in order.windows(2) {
            if y[w[0]] != y[w[1]] {
                h += 1;
            }
            labels[w[1]] = h;
        }
        let mut counts = vec![0; distinct];
        for &l in &labels {
            counts[l] += 1;
        }
        return Ok(SlicePlan { labels, counts });
    }

    let mut counts = vec![0; n_slices];
    for (rank0, &obs) in order.iter().enumerate() {
        let rank = rank0 + 1;
        // ⌈rank·H/n⌉, shifted to a 0-based label
        let h = (rank * n_slices).div_ceil(n) - 1;
        labels[obs] = h;
        counts[h] += 1;
    }
    Ok(SlicePlan { labels, counts })
}

/// Which estimator of `Σ̂_{E(X|Y)}` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelEstimator {
    /// Weighted covariance of the slice means.
    #[default]
    Means,
    /// `Σ̂ − T̂` with `T̂` the equally weighted within-slice covariance.
    Residual,
}

impl fmt::Display for KernelEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelEstimator::Means => "means",
            KernelEstimator::Residual => "residual",
        })
    }
}

impl FromStr for KernelEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "means" => Ok(KernelEstimator::Means),
            "residual" => Ok(KernelEstimator::Residual),
            other => Err(Error::InvalidParams(format!("unknown kernel estimator '{other}'"))),
        }
    }
}

fn check_data(x: ArrayView2<f64>) -> Result<()> {
    if x.nrows() < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 observations, got {}",
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidParams("data has no covariates".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariates"));
    }
    Ok(())
}

fn check_plan(x: ArrayView2<f64>, plan: &SlicePlan) -> Result<()> {
    if plan.n_obs() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "slice plan covers {} rows, data has {}",
            plan.n_obs(),
            x.nrows()
        )));
    }
    Ok(())
}

fn column_means(x: ArrayView2<f64>) -> Array1<f64> {
    let n = x.nrows() as f64;
    let mut mean = Array1::<f64>::zeros(x.ncols());
    for row in x.rows() {
        mean += &row;
    }
    mean / n
}

/// `1/n`-normalized centered second moment and the grand mean.
pub fn cov_hat(x: ArrayView2<f64>) -> Result<(SymMatrix, Vec<f64>)> {
    check_data(x)?;
    let n = x.nrows() as f64;
    let mean = column_means(x);
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let gram = centered.t().dot(&centered) / n;
    Ok((SymMatrix::from_array_lower(&gram)?, mean.to_vec()))
}

/// Slice means (`H × p`), slice proportions, and the grand mean.
fn slice_means(x: ArrayView2<f64>, plan: &SlicePlan) -> (Array2<f64>, Vec<f64>, Array1<f64>) {
    let n = x.nrows();
    let h = plan.n_slices();
    let mut sums = Array2::<f64>::zeros((h, x.ncols()));
    for (row, &label) in x.rows().into_iter().zip(&plan.labels) {
        let mut acc = sums.row_mut(label);
        acc += &row;
    }
    for (mut acc, &count) in sums.rows_mut().into_iter().zip(&plan.counts) {
        acc /= count as f64;
    }
    let props = plan.counts.iter().map(|&c| c as f64 / n as f64).collect();
    (sums, props, column_means(x))
}

/// `p × H` factor `F` with `F Fᵀ = Σ_h p̂_h (m_h − m̄)(m_h − m̄)ᵀ`.
fn means_factor(x: ArrayView2<f64>, plan: &SlicePlan) -> (Array2<f64>, Vec<f64>, Array1<f64>) {
    let (means, props, grand) = slice_means(x, plan);
    let mut factor = Array2::<f64>::zeros((x.ncols(), plan.n_slices()));
    for (h, m) in means.rows().into_iter().enumerate() {
        let w = props[h].sqrt();
        for (j, (&mj, &gj)) in m.iter().zip(grand.iter()).enumerate() {
            factor[[j, h]] = w * (mj - gj);
        }
    }
    (factor, props, grand)
}

/// `Σ_h p̂_h (m_h − m̄)(m_h − m̄)ᵀ` over the slices of `plan`.
pub fn kernel_means(x: ArrayView2<f64>, plan: &SlicePlan) -> Result<SymMatrix> {
    check_data(x)?;
    check_plan(x, plan)?;
    let (factor, _, _) = means_factor(x, plan);
    SymMatrix::from_array_lower(&factor.dot(&factor.t()))
}

/// Rows `(X_i − X̄_{S_h}) / √(H·n_h)`, so that their Gram matrix is `T̂`.
fn within_slice_rows(x: ArrayView2<f64>, plan: &SlicePlan) -> Result<Array2<f64>> {
    for (h, &c) in plan.counts.iter().enumerate() {
        if c < 2 {
            return Err(Error::SliceTooSmall { slice: h, size: c });
        }
    }
    let (means, _, _) = slice_means(x, plan);
    let h_count = plan.n_slices() as f64;
    let mut rows = x.to_owned();
    for (mut row, &label) in rows.rows_mut().into_iter().zip(&plan.labels) {
        row -= &means.row(label);
        row /= (h_count * plan.counts[label] as f64).sqrt();
    }
    Ok(rows)
}

/// `Σ̂ − T̂` with `T̂ = (1/H) Σ_h (1/n_h) Σ_{i∈S_h} (X_i − X̄_h)(X_i − X̄_h)ᵀ`.
pub fn kernel_residual(x: ArrayView2<f64>, plan: &SlicePlan) -> Result<SymMatrix> {
    check_data(x)?;
    check_plan(x, plan)?;
    let within = within_slice_rows(x, plan)?;
    let (sigma, _) = cov_hat(x)?;
    let t_hat = within.t().dot(&within);
    let diff = sigma.to_array() - t_hat;
    SymMatrix::from_array_lower(&diff)
}

/// Anything that can serve principal blocks of the moment pair.
pub trait MomentSource: Sync {
    /// Ambient dimension `p`.
    fn dim(&self) -> usize;

    /// Sample size the moments were computed from.
    fn n_obs(&self) -> usize;

    /// Writes `Σ̂^{(S,S)}` row-major into `out`. `S` must be a valid index set.
    fn fill_sigma(&self, s: &[usize], out: &mut [f64]);

    /// Writes `Σ̂_{E(X|Y)}^{(S,S)}` row-major into `out`.
    fn fill_kernel(&self, s: &[usize], out: &mut [f64]);

    /// Column count `r` of a factor `F` with `Σ̂_{E(X|Y)} = F Fᵀ`, if the
    /// kernel is stored that way.
    fn kernel_rank(&self) -> Option<usize>;

    /// Writes the rows `F^{(S,·)}` (`|S| × r`, row-major) into `out`.
    fn fill_kernel_factor(&self, s: &[usize], out: &mut [f64]);

    /// Standalone moments for the coordinates in `S`, reindexed to `0..|S|`.
    fn restrict(&self, s: &[usize]) -> Result<SlicedMoments>;

    /// The principal submatrix pair `(Σ̂_{E(X|Y)}^{(S,S)}, Σ̂^{(S,S)})`.
    fn block_pair(&self, s: &[usize]) -> Result<(SymMatrix, SymMatrix)> {
        check_index_set(s, self.dim())?;
        let k = s.len();
        let mut kern = vec![0.0; k * k];
        let mut sig = vec![0.0; k * k];
        self.fill_kernel(s, &mut kern);
        self.fill_sigma(s, &mut sig);
        Ok((SymMatrix::from_lower(k, kern)?, SymMatrix::from_lower(k, sig)?))
    }
}

/// The moment pair `(Σ̂_{E(X|Y)}, Σ̂)` held as dense `p × p` matrices.
#[derive(Debug, Clone)]
pub struct SlicedMoments {
    pub n: usize,
    pub p: usize,
    pub sigma_hat: SymMatrix,
    pub kernel_hat: SymMatrix,
    /// Slice proportions `p̂_h`; empty when built from raw matrices.
    pub slice_props: Vec<f64>,
    pub grand_mean: Vec<f64>,
    /// Optional `p × r` factor of `kernel_hat`.
    pub kernel_factor: Option<Array2<f64>>,
    pub estimator: Option<KernelEstimator>,
}

impl SlicedMoments {
    /// Wraps an explicit matrix pair, e.g. population moments.
    pub fn from_matrices(n: usize, sigma: SymMatrix, kernel: SymMatrix) -> Result<Self> {
        if sigma.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch(format!(
                "sigma is {0}x{0} but kernel is {1}x{1}",
                sigma.dim(),
                kernel.dim()
            )));
        }
        Ok(SlicedMoments {
            n,
            p: sigma.dim(),
            grand_mean: vec![0.0; sigma.dim()],
            sigma_hat: sigma,
            kernel_hat: kernel,
            slice_props: Vec::new(),
            kernel_factor: None,
            estimator: None,
        })
    }

    /// Same as [`SlicedMoments::from_matrices`] with the kernel given by its
    /// `p × r` factor.
    pub fn from_factor(n: usize, sigma: SymMatrix, factor: Array2<f64>) -> Result<Self> {
        let kernel = SymMatrix::from_array_lower(&factor.dot(&factor.t()))?;
        let mut m = Self::from_matrices(n, sigma, kernel)?;
        m.kernel_factor = Some(factor);
        Ok(m)
    }
}

impl MomentSource for SlicedMoments {
    fn dim(&self) -> usize {
        self.p
    }

    fn n_obs(&self) -> usize {
        self.n
    }

    fn fill_sigma(&self, s: &[usize], out: &mut [f64]) {
        gather_block(self.sigma_hat.as_slice(), self.p, s, out);
    }

    fn fill_kernel(&self, s: &[usize], out: &mut [f64]) {
        gather_block(self.kernel_hat.as_slice(), self.p, s, out);
    }

    fn kernel_rank(&self) -> Option<usize> {
        self.kernel_factor.as_ref().map(|f| f.ncols())
    }

    fn fill_kernel_factor(&self, s: &[usize], out: &mut [f64]) {
        let f = self.kernel_factor.as_ref().expect("kernel factor present");
        fill_factor_rows(f, s, out);
    }

    fn restrict(&self, s: &[usize]) -> Result<SlicedMoments> {
        check_index_set(s, self.p)?;
        Ok(SlicedMoments {
            n: self.n,
            p: s.len(),
            sigma_hat: self.sigma_hat.principal_submatrix(s)?,
            kernel_hat: self.kernel_hat.principal_submatrix(s)?,
            slice_props: self.slice_props.clone(),
            grand_mean: s.iter().map(|&j| self.grand_mean[j]).collect(),
            kernel_factor: self.kernel_factor.as_ref().map(|f| f.select(Axis(0), s)),
            estimator: self.estimator,
        })
    }
}

fn fill_factor_rows(f: &Array2<f64>, s: &[usize], out: &mut [f64]) {
    let r = f.ncols();
    for (a, &i) in s.iter().enumerate() {
        for (dst, src) in out[a * r..(a + 1) * r].iter_mut().zip(f.row(i)) {
            *dst = *src;
        }
    }
}

/// Builds the moment pair from raw data with `n_slices` response slices.
pub fn build_moments(
    x: ArrayView2<f64>,
    y: &[f64],
    n_slices: usize,
    estimator: KernelEstimator,
) -> Result<SlicedMoments> {
    check_data(x)?;
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for {} observations",
            y.len(),
            x.nrows()
        )));
    }
    let plan = make_slices(y, n_slices)?;
    let (sigma_hat, grand_mean) = cov_hat(x)?;
    let (factor, props, _) = means_factor(x, &plan);
    let (kernel_hat, kernel_factor) = match estimator {
        KernelEstimator::Means => (
            SymMatrix::from_array_lower(&factor.dot(&factor.t()))?,
            Some(factor),
        ),
        KernelEstimator::Residual => (kernel_residual(x, &plan)?, None),
    };
    Ok(SlicedMoments {
        n: x.nrows(),
        p: x.ncols(),
        sigma_hat,
        kernel_hat,
        slice_props: props,
        grand_mean,
        kernel_factor,
        estimator: Some(estimator),
    })
}

/// Moments computed on demand from the projected covariates `X^{(S)}`.
///
/// Memory is `O(n·p)` instead of `O(p²)`.
#[derive(Debug, Clone)]
pub struct ProjectedMoments {
    n: usize,
    p: usize,
    /// `p × n`; row `j` is the centered column `j` of `X`.
    centered_t: Array2<f64>,
    /// `p × H` factor of the slice-means kernel.
    factor: Array2<f64>,
    /// `p × n` scaled within-slice deviations, for the residual estimator.
    within_t: Option<Array2<f64>>,
    pub slice_props: Vec<f64>,
    pub grand_mean: Vec<f64>,
    pub estimator: KernelEstimator,
}

impl ProjectedMoments {
    pub fn new(
        x: ArrayView2<f64>,
        y: &[f64],
        n_slices: usize,
        estimator: KernelEstimator,
    ) -> Result<Self> {
        check_data(x)?;
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} responses for {} observations",
                y.len(),
                x.nrows()
            )));
        }
        let plan = make_slices(y, n_slices)?;
        let (factor, props, grand) = means_factor(x, &plan);
        let centered = &x - &grand.view().insert_axis(Axis(0));
        let within_t = match estimator {
            KernelEstimator::Means => None,
            KernelEstimator::Residual => {
                Some(within_slice_rows(x, &plan)?.t().as_standard_layout().into_owned())
            }
        };
        Ok(ProjectedMoments {
            n: x.nrows(),
            p: x.ncols(),
            centered_t: centered.t().as_standard_layout().into_owned(),
            factor,
            within_t,
            slice_props: props,
            grand_mean: grand.to_vec(),
            estimator,
        })
    }

    fn gram_block(rows: &Array2<f64>, s: &[usize], scale: f64, out: &mut [f64]) {
        let k = s.len();
        for a in 0..k {
            let ra = rows.row(s[a]);
            let ra = ra.as_slice().expect("standard layout");
            for b in 0..=a {
                let rb = rows.row(s[b]);
                let rb = rb.as_slice().expect("standard layout");
                let dot: f64 = ra.iter().zip(rb).map(|(u, v)| u * v).sum();
                out[a * k + b] = dot * scale;
                out[b * k + a] = dot * scale;
            }
        }
    }
}

impl MomentSource for ProjectedMoments {
    fn dim(&self) -> usize {
        self.p
    }

    fn n_obs(&self) -> usize {
        self.n
    }

    fn fill_sigma(&self, s: &[usize], out: &mut [f64]) {
        Self::gram_block(&self.centered_t, s, 1.0 / self.n as f64, out);
    }

    fn fill_kernel(&self, s: &[usize], out: &mut [f64]) {
        match &self.within_t {
            None => Self::gram_block(&self.factor, s, 1.0, out),
            Some(w) => {
                let k = s.len();
                self.fill_sigma(s, out);
                let mut t = vec![0.0; k * k];
                Self::gram_block(w, s, 1.0, &mut t);
                for (o, t) in out.iter_mut().zip(&t) {
                    *o -= t;
                }
            }
        }
    }

    fn kernel_rank(&self) -> Option<usize> {
        match self.estimator {
            KernelEstimator::Means => Some(self.factor.ncols()),
            KernelEstimator::Residual => None,
        }
    }

    fn fill_kernel_factor(&self, s: &[usize], out: &mut [f64]) {
        fill_factor_rows(&self.factor, s, out);
    }

    fn restrict(&self, s: &[usize]) -> Result<SlicedMoments> {
        let (kernel_hat, sigma_hat) = self.block_pair(s)?;
        Ok(SlicedMoments {
            n: self.n,
            p: s.len(),
            sigma_hat,
            kernel_hat,
            slice_props: self.slice_props.clone(),
            grand_mean: s.iter().map(|&j| self.grand_mean[j]).collect(),
            kernel_factor: match self.estimator {
                KernelEstimator::Means => Some(self.factor.select(Axis(0), s)),
                KernelEstimator::Residual => None,
            },
            estimator: Some(self.estimator),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(seed: u64, n: usize, p: usize) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0));
        let y = (0..n).map(|i| x[[i, 0]] + 0.5 * rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn slices_each_point_by_rank() {
        let plan = make_slices(&[5.0, 1.0, 3.0, 2.0, 4.0], 5).unwrap();
        assert_eq!(plan.labels, vec![4, 0, 2, 1, 3]);
        assert_eq!(plan.counts, vec![1; 5]);
    }

    #[test]
    fn slices_halves() {
        let plan = make_slices(&[1., 2., 3., 4., 5., 6.], 2).unwrap();
        assert_eq!(plan.labels, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn slices_categorical_passthrough() {
        let plan = make_slices(&[1., 1., 2., 2.], 2).unwrap();
        assert_eq!(plan.counts, vec![2, 2]);
        let plan = make_slices(&[0., 1., 0., 1., 1., 0.], 10).unwrap();
        assert_eq!(plan.n_slices(), 2);
        assert_eq!(plan.labels, vec![0, 1, 0, 1, 1, 0]);
    }

    #[test]
    fn slices_reject_constant_response() {
        assert_eq!(make_slices(&[3.0; 5], 2), Err(Error::DegenerateResponse));
        assert!(make_slices(&[1.0], 3).is_err());
    }

    #[test]
    fn slice_counts_cover_all_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.random_range(10..200);
            let h = rng.random_range(2..=10);
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let plan = make_slices(&y, h).unwrap();
            assert_eq!(plan.counts.iter().sum::<usize>(), n);
            assert!(plan.counts.iter().all(|&c| c >= 1));
            let max = *plan.counts.iter().max().unwrap();
            let min = *plan.counts.iter().min().unwrap();
            assert!(max - min <= 1);
        }
    }

    #[test]
    fn cov_hat_hand_cases() {
        let x = array![[1.0, 2.0], [1.0, 2.0]];
        let (s, mean) = cov_hat(x.view()).unwrap();
        assert_eq!(s.as_slice(), &[0.0; 4]);
        assert_eq!(mean, vec![1.0, 2.0]);
        let (s, _) = cov_hat(array![[1.0], [3.0]].view()).unwrap();
        assert_eq!(s.as_slice(), &[1.0]);
    }

    #[test]
    fn cov_hat_matches_double_loop() {
        let (x, _) = random_data(4, 10, 3);
        let (s, _) = cov_hat(x.view()).unwrap();
        let n = 10.0;
        for a in 0..3 {
            for b in 0..3 {
                let ma: f64 = x.column(a).sum() / n;
                let mb: f64 = x.column(b).sum() / n;
                let mut acc = 0.0;
                for i in 0..10 {
                    acc += (x[[i, a]] - ma) * (x[[i, b]] - mb);
                }
                assert!((s.get(a, b) - acc / n).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_means_hand_case() {
        let x = array![[0.0], [0.0], [2.0], [2.0]];
        let plan = make_slices(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let k = kernel_means(x.view(), &plan).unwrap();
        assert!((k.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_means_zero_when_slice_means_agree() {
        // mirrored slices: both have mean (0, 0)
        let x = array![[1.0, 2.0], [-1.0, -2.0], [3.0, -1.0], [-3.0, 1.0]];
        let plan = make_slices(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let k = kernel_means(x.view(), &plan).unwrap();
        assert!(k.as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn kernel_residual_hand_case() {
        let x = array![[0.0], [2.0], [10.0], [12.0]];
        let plan = make_slices(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let k = kernel_residual(x.view(), &plan).unwrap();
        assert!((k.get(0, 0) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_residual_equals_sigma_for_constant_slices() {
        let x = array![[1.0, 0.0], [1.0, 0.0], [4.0, 2.0], [4.0, 2.0]];
        let plan = make_slices(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let k = kernel_residual(x.view(), &plan).unwrap();
        let (s, _) = cov_hat(x.view()).unwrap();
        for (a, b) in k.as_slice().iter().zip(s.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_residual_needs_two_per_slice() {
        let x = array![[0.0], [1.0], [2.0]];
        let plan = make_slices(&[1.0, 2.0, 3.0], 3).unwrap();
        assert_eq!(
            kernel_residual(x.view(), &plan),
            Err(Error::SliceTooSmall { slice: 0, size: 1 })
        );
    }

    #[test]
    fn kernel_means_psd_and_bounded() {
        for seed in 0..20 {
            let (x, y) = random_data(seed, 40, 6);
            let plan = make_slices(&y, 5).unwrap();
            let k = kernel_means(x.view(), &plan).unwrap();
            let (s, _) = cov_hat(x.view()).unwrap();
            let ev = sym_eigenvalues(&k).unwrap();
            assert!(*ev.last().unwrap() >= -1e-8 * k.trace().max(1.0));
            assert!(k.trace() <= s.trace() + 1e-8);
            // rank ≤ H − 1
            for v in &ev[4..] {
                assert!(v.abs() <= 1e-8 * k.trace());
            }
        }
    }

    #[test]
    fn build_moments_invariants() {
        let (x, y) = random_data(9, 20, 5);
        let m = build_moments(x.view(), &y, 4, KernelEstimator::Means).unwrap();
        assert!((m.slice_props.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(*sym_eigenvalues(&m.kernel_hat).unwrap().last().unwrap() >= -1e-8);
        assert!(*sym_eigenvalues(&m.sigma_hat).unwrap().last().unwrap() >= -1e-8);
        let again = build_moments(x.view(), &y, 4, KernelEstimator::Means).unwrap();
        assert_eq!(m.kernel_hat, again.kernel_hat);
        assert_eq!(m.sigma_hat, again.sigma_hat);
    }

    #[test]
    fn build_moments_takes_categorical_path() {
        let (x, _) = random_data(2, 12, 3);
        let y: Vec<f64> = (0..12).map(|i| (i % 3) as f64).collect();
        let m = build_moments(x.view(), &y, 10, KernelEstimator::Means).unwrap();
        assert_eq!(m.slice_props.len(), 3);
    }

    #[test]
    fn permutation_and_location_invariance() {
        let (x, y) = random_data(12, 30, 4);
        let base = build_moments(x.view(), &y, 5, KernelEstimator::Means).unwrap();
        let perm: Vec<usize> = (0..30).rev().collect();
        let xp = x.select(Axis(0), &perm);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let permuted = build_moments(xp.view(), &yp, 5, KernelEstimator::Means).unwrap();
        let shifted_x = &x + &array![[3.0, -7.0, 100.0, 0.5]];
        let shifted = build_moments(shifted_x.view(), &y, 5, KernelEstimator::Means).unwrap();
        for other in [(&permuted, 1e-12), (&shifted, 1e-10)] {
            for (a, b) in other.0.kernel_hat.as_slice().iter().zip(base.kernel_hat.as_slice()) {
                assert!((a - b).abs() < other.1);
            }
            for (a, b) in other.0.sigma_hat.as_slice().iter().zip(base.sigma_hat.as_slice()) {
                assert!((a - b).abs() < other.1);
            }
        }
    }

    #[test]
    fn projected_blocks_match_extracted_blocks() {
        let (x, y) = random_data(31, 50, 12);
        let s = [1, 4, 5, 9, 11];
        for est in [KernelEstimator::Means, KernelEstimator::Residual] {
            let full = build_moments(x.view(), &y, 5, est).unwrap();
            let proj = ProjectedMoments::new(x.view(), &y, 5, est).unwrap();
            let (k1, s1) = full.block_pair(&s).unwrap();
            let (k2, s2) = proj.block_pair(&s).unwrap();
            for (a, b) in k1.as_slice().iter().zip(k2.as_slice()) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in s1.as_slice().iter().zip(s2.as_slice()) {
                assert!((a - b).abs() < 1e-10);
            }
            let r1 = full.restrict(&s).unwrap();
            let r2 = proj.restrict(&s).unwrap();
            assert_eq!(r1.kernel_rank(), r2.kernel_rank());
        }
    }

    #[test]
    fn estimator_parses() {
        assert_eq!("Residual".parse::<KernelEstimator>().unwrap(), KernelEstimator::Residual);
        assert!("bogus".parse::<KernelEstimator>().is_err());
    }
}
