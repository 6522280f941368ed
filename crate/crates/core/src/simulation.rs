//! Synthetic sparse single- and multi-index scenarios: covariance
//! structures, coefficient draws, Gaussian covariates, and five link models.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, SymMatrix};

/// Covariance structure of the covariates.
///
/// As text: `identity`, `dense`, `toeplitz`, `sparse-inverse`, optionally
/// with a parameter as in `dense:0.3` or `toeplitz:0.7`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CovSpec {
    Identity,
    /// Unit diagonal, constant off-diagonal `rho` (0.6 by default).
    Dense { rho: f64 },
    /// `r^{|i−j|}` (r = 0.5 by default).
    Toeplitz { r: f64 },
    /// Correlation matrix of the inverse of a banded precision matrix with
    /// bands `1, 0.5, 0.4`.
    SparseInverse,
}

impl CovSpec {
    pub const DENSE: CovSpec = CovSpec::Dense { rho: 0.6 };
    pub const TOEPLITZ: CovSpec = CovSpec::Toeplitz { r: 0.5 };

    pub fn name(&self) -> &'static str {
        match self {
            CovSpec::Identity => "identity",
            CovSpec::Dense { .. } => "dense",
            CovSpec::Toeplitz { .. } => "toeplitz",
            CovSpec::SparseInverse => "sparse-inverse",
        }
    }
}

impl fmt::Display for CovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CovSpec::Dense { rho } if rho != 0.6 => f.pad(&format!("dense:{rho}")),
            CovSpec::Toeplitz { r } if r != 0.5 => f.pad(&format!("toeplitz:{r}")),
            _ => f.pad(self.name()),
        }
    }
}

impl FromStr for CovSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace('_', "-");
        let (name, param) = match lower.split_once(':') {
            Some((name, value)) => {
                let v: f64 = value.trim().parse().map_err(|_| {
                    Error::InvalidParams(format!("bad covariance parameter in '{s}'"))
                })?;
                (name.trim().to_string(), Some(v))
            }
            None => (lower.trim().to_string(), None),
        };
        let spec = match (name.as_str(), param) {
            ("identity", None) => CovSpec::Identity,
            ("dense", rho) => CovSpec::Dense { rho: rho.unwrap_or(0.6) },
            ("toeplitz", r) => CovSpec::Toeplitz { r: r.unwrap_or(0.5) },
            ("sparse-inverse" | "sparseinverse", None) => CovSpec::SparseInverse,
            _ => {
                return Err(Error::InvalidParams(format!("unknown covariance structure '{s}'")))
            }
        };
        Ok(spec)
    }
}

impl TryFrom<String> for CovSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CovSpec> for String {
    fn from(c: CovSpec) -> String {
        c.to_string()
    }
}

/// Builds the `p × p` covariance for `spec`.
pub fn make_cov(spec: CovSpec, p: usize) -> Result<SymMatrix> {
    if p == 0 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    let sigma = match spec {
        CovSpec::Identity => SymMatrix::identity(p),
        CovSpec::Dense { rho } => SymMatrix::from_fn(p, |i, j| if i == j { 1.0 } else { rho })?,
        CovSpec::Toeplitz { r } => SymMatrix::from_fn(p, |i, j| r.powi(i.abs_diff(j) as i32))?,
        CovSpec::SparseInverse => {
            if p < 3 {
                return Err(Error::InvalidParams(format!(
                    "sparse-inverse structure needs p >= 3, got {p}"
                )));
            }
            let w = banded_precision(p)?;
            let inv = invert_spd(&w)?;
            let scale: Vec<f64> = (0..p).map(|i| 1.0 / inv.get(i, i).sqrt()).collect();
            SymMatrix::from_fn(p, |i, j| {
                if i == j {
                    1.0
                } else {
                    inv.get(i, j) * scale[i] * scale[j]
                }
            })?
        }
    };
    cholesky(&sigma, 0.0)?;
    Ok(sigma)
}

/// `w_ij = 1{i=j} + 0.5·1{|i−j|=1} + 0.4·1{|i−j|=2}`.
pub fn banded_precision(p: usize) -> Result<SymMatrix> {
    SymMatrix::from_fn(p, |i, j| match i.abs_diff(j) {
        0 => 1.0,
        1 => 0.5,
        2 => 0.4,
        _ => 0.0,
    })
}

fn invert_spd(a: &SymMatrix) -> Result<SymMatrix> {
    let p = a.dim();
    let l = cholesky(a, 0.0)?;
    let mut data = vec![0.0; p * p];
    let mut col = vec![0.0; p];
    for j in 0..p {
        col.fill(0.0);
        col[j] = 1.0;
        l.solve_lower(&mut col);
        l.solve_upper(&mut col);
        for i in 0..p {
            data[i * p + j] = col[i];
        }
    }
    SymMatrix::from_lower(p, data)
}

/// Link model between the index `u = βᵀX` and the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Model {
    /// `u + sin u + ε`
    I,
    /// `2 arctan u + ε`
    II,
    /// `u³ + ε`
    III,
    /// `sinh u + ε`
    IV,
    /// `exp(u₁)·sign(u₂) + 0.2ε`
    V,
}

impl Model {
    pub const ALL: [Model; 5] = [Model::I, Model::II, Model::III, Model::IV, Model::V];

    /// Dimension of the central subspace.
    pub fn d(&self) -> usize {
        match self {
            Model::V => 2,
            _ => 1,
        }
    }

    pub fn noise_scale(&self) -> f64 {
        match self {
            Model::V => 0.2,
            _ => 1.0,
        }
    }

    /// Response for index values `u` (length `d`) and standard noise `eps`.
    pub fn respond(&self, u: &[f64], eps: f64) -> f64 {
        let noise = self.noise_scale() * eps;
        match self {
            Model::I => u[0] + u[0].sin() + noise,
            Model::II => 2.0 * u[0].atan() + noise,
            Model::III => u[0].powi(3) + noise,
            Model::IV => u[0].sinh() + noise,
            Model::V => {
                let sign = if u[1] >= 0.0 { 1.0 } else { -1.0 };
                u[0].exp() * sign + noise
            }
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&format!("{self:?}"))
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Model::I),
            "II" | "2" => Ok(Model::II),
            "III" | "3" => Ok(Model::III),
            "IV" | "4" => Ok(Model::IV),
            "V" | "5" => Ok(Model::V),
            other => Err(Error::InvalidParams(format!("unknown model '{other}'"))),
        }
    }
}

impl TryFrom<String> for Model {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Model> for String {
    fn from(m: Model) -> String {
        m.to_string()
    }
}

/// A drawn dataset together with its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    /// `n × p` covariates.
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    /// `p × d` true coefficients.
    pub beta: Array2<f64>,
    /// Row support of `beta`, ascending.
    pub support: Vec<usize>,
}

const COEFFICIENT_VALUES: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

fn draw_row<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let row: Vec<f64> = (0..d).map(|_| COEFFICIENT_VALUES[rng.random_range(0..5)]).collect();
        if row.iter().any(|&v| v != 0.0) {
            return row;
        }
    }
}

fn independent_pair(beta: &Array2<f64>) -> bool {
    let a = beta.column(0);
    let b = beta.column(1);
    // integer-valued entries, so the Gram determinant is exact
    let aa = a.dot(&a);
    let bb = b.dot(&b);
    let ab = a.dot(&b);
    aa * bb - ab * ab > 0.5
}

/// Draws `s` support rows uniformly without replacement and fills them with
/// entries uniform on `{−2, −1, 0, 1, 2}`. All-zero rows are redrawn; with
/// `d = 2` the columns are redrawn until linearly independent.
pub fn draw_coefficients<R: Rng + ?Sized>(
    rng: &mut R,
    p: usize,
    d: usize,
    s: usize,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if s == 0 || s > p {
        return Err(Error::InvalidParams(format!("support size {s} must lie in [1, {p}]")));
    }
    if d == 0 || (d > 1 && s < d) {
        return Err(Error::InvalidParams(format!(
            "cannot draw {d} independent columns on {s} rows"
        )));
    }
    let mut support = index::sample(rng, p, s).into_vec();
    support.sort_unstable();
    loop {
        let mut beta = Array2::zeros((p, d));
        for &j in &support {
            for (c, v) in draw_row(rng, d).into_iter().enumerate() {
                beta[[j, c]] = v;
            }
        }
        if d != 2 || independent_pair(&beta) {
            return Ok((beta, support));
        }
    }
}

/// Responses for covariates `x` under `model`, given coefficients and noise.
pub fn responses(model: Model, x: ArrayView2<f64>, beta: &Array2<f64>, eps: &[f64]) -> Result<Vec<f64>> {
    if beta.nrows() != x.ncols() || beta.ncols() != model.d() || eps.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "x is {}x{}, beta is {}x{}, {} noise draws for model {model}",
            x.nrows(),
            x.ncols(),
            beta.nrows(),
            beta.ncols(),
            eps.len()
        )));
    }
    let u = x.dot(beta);
    Ok(u.rows()
        .into_iter()
        .zip(eps)
        .map(|(row, &e)| model.respond(row.as_slice().expect("standard layout"), e))
        .collect())
}

/// Draws coefficients, then `n` covariate rows `X = Z Lᵀ` with `Σ = L Lᵀ`,
/// then the noise, all from `rng` in that order.
pub fn draw_dataset<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    p: usize,
    s: usize,
    model: Model,
    cov: CovSpec,
) -> Result<SimulatedDataset> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("need n >= 2, got {n}")));
    }
    let sigma = make_cov(cov, p)?;
    let (beta, support) = draw_coefficients(rng, p, model.d(), s)?;
    let z = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let x = match cov {
        CovSpec::Identity => z,
        _ => z.dot(&cholesky(&sigma, 0.0)?.to_array().t()),
    };
    let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y = responses(model, x.view(), &beta, &eps)?;
    Ok(SimulatedDataset { x, y, beta, support })
}
