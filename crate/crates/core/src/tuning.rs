//! Choosing the support size `l` with an information-type criterion
//! `−ln tr(β̂ₗᵀ Σ̂_{E(X|Y)} β̂ₗ) + δ·(l − d)·d`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentSource;
use crate::projection::Basis;
use crate::reweight::{reweighting_stages, Rp2Params, Screening};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// `δ = 2/n`
    Aic,
    /// `δ = ln(n)/n`
    Bic,
}

impl Criterion {
    pub fn delta(&self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Criterion::Aic => 2.0 / n,
            Criterion::Bic => n.ln() / n,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::InvalidParams(format!("unknown criterion '{other}'"))),
        }
    }
}

/// Result of a sparsity search.
#[derive(Debug, Clone)]
pub struct TuneResult {
    pub chosen_l: usize,
    /// `(l, value)` for every grid point; `+∞` marks unusable `l`.
    pub criterion_values: Vec<(usize, f64)>,
    pub criterion: Criterion,
    pub basis: Basis,
    pub support: Vec<usize>,
}

/// `{d + 1, …, min(l′, ⌊n/2⌋)}`.
pub fn default_grid(d: usize, l_prime: usize, n: usize) -> Vec<usize> {
    (d + 1..=l_prime.min(n / 2)).collect()
}

/// `tr(βᵀ K β)`, computed on the basis's row support.
pub fn kernel_trace<M: MomentSource + ?Sized>(basis: &Basis, moments: &M) -> Result<f64> {
    let (kern, _) = moments.block_pair(&basis.support)?;
    let mut total = 0.0;
    for c in 0..basis.d {
        let v: Vec<f64> = basis.support.iter().map(|&j| basis.matrix[[j, c]]).collect();
        total += kern.bilinear(&v, &v);
    }
    Ok(total)
}

/// The criterion for given trace; `+∞` when the trace is not positive.
pub fn criterion_value(trace: f64, l: usize, d: usize, delta: f64) -> f64 {
    if !(trace.is_finite() && trace > 0.0) {
        return f64::INFINITY;
    }
    -trace.ln() + delta * l.saturating_sub(d) as f64 * d as f64
}

/// Criterion value and, when usable, the support and basis for one `l`.
type Evaluated = (f64, Option<(Vec<usize>, Basis)>);

/// Runs both weighting stages once and scans `grid` (the default grid when
/// `None`).
pub fn tune_l<M: MomentSource + ?Sized>(
    moments: &M,
    params: &Rp2Params,
    criterion: Criterion,
    grid: Option<&[usize]>,
) -> Result<TuneResult> {
    let screening = reweighting_stages(moments, params)?;
    tune_screened(moments, &screening, params, criterion, grid)
}

/// Scans the grid over precomputed stages; only the final support and basis
/// are recomputed per `l`.
pub fn tune_screened<M: MomentSource + ?Sized>(
    moments: &M,
    screening: &Screening,
    params: &Rp2Params,
    criterion: Criterion,
    grid: Option<&[usize]>,
) -> Result<TuneResult> {
    let d = params.d;
    let mut grid: Vec<usize> = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(d, params.l_prime, moments.n_obs()),
    };
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|&&l| l < d || l > params.l_prime) {
        return Err(Error::InvalidParams(format!(
            "grid value {bad} outside [d, l'] = [{d}, {}]",
            params.l_prime
        )));
    }
    let delta = criterion.delta(moments.n_obs());
    let evaluated: Vec<Result<Evaluated>> = grid
        .par_iter()
        .map(|&l| match screening.select(moments, l, d, params.jitter_retry) {
            Ok((support, basis)) => {
                let value = criterion_value(kernel_trace(&basis, moments)?, l, d, delta);
                Ok((value, Some((support, basis))))
            }
            Err(Error::Degenerate(_)) => Ok((f64::INFINITY, None)),
            Err(e) => Err(e),
        })
        .collect();

    let mut values = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64, Vec<usize>, Basis)> = None;
    for (&l, res) in grid.iter().zip(evaluated) {
        let (value, fit) = res?;
        values.push((l, value));
        if let Some((support, basis)) = fit {
            let better = match &best {
                None => value.is_finite(),
                Some((_, v, _, _)) => value < *v,
            };
            if better {
                best = Some((l, value, support, basis));
            }
        }
    }
    let (chosen_l, _, support, basis) = best.ok_or_else(|| {
        Error::Degenerate("no grid value produced a usable basis".into())
    })?;
    Ok(TuneResult {
        chosen_l,
        criterion_values: values,
        criterion,
        basis,
        support,
    })
}
