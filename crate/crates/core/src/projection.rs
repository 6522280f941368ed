//! The random-projection estimator: score many random coordinate subsets,
//! keep the best per group, turn the winners into per-variable importance
//! weights, and fit the final basis on the top-`l` variables.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{derive_seed, stream_rng};
use crate::linalg::{
    cholesky_in_place, forward_substitute, gen_eig, reduce_pencil, sort_descending, EigWorkspace,
    GenEigResult, SymMatrix,
};
use crate::moments::MomentSource;

/// Domain tag for the (first) weighting stage.
pub const STAGE_ONE: u64 = 1;
/// Domain tag for the reweighting stage.
pub const STAGE_TWO: u64 = 2;

/// Settings of the single-stage estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RpParams {
    /// Number of groups `A`.
    pub groups: usize,
    /// Candidates per group `B`.
    pub candidates: usize,
    /// Projection size.
    pub k: usize,
    /// Output support size.
    pub l: usize,
    /// Subspace dimension.
    pub d: usize,
    pub seed: u64,
    /// Retry a non-PD covariance block once with a small ridge.
    pub jitter_retry: bool,
}

impl RpParams {
    pub fn new(groups: usize, candidates: usize, k: usize, l: usize, d: usize, seed: u64) -> Self {
        RpParams {
            groups,
            candidates,
            k,
            l,
            d,
            seed,
            jitter_retry: true,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        check_budget(self.groups, self.candidates)?;
        check_projection(self.k, self.d, p)?;
        if self.l < self.d || self.l > p {
            return Err(Error::InvalidParams(format!(
                "l = {} must lie in [d, p] = [{}, {p}]",
                self.l, self.d
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_budget(groups: usize, candidates: usize) -> Result<()> {
    if groups == 0 || candidates == 0 {
        return Err(Error::InvalidParams(format!(
            "projection budget must be positive, got A = {groups}, B = {candidates}"
        )));
    }
    Ok(())
}

pub(crate) fn check_projection(k: usize, d: usize, p: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParams("d must be at least 1".into()));
    }
    if k < d + 1 {
        return Err(Error::InvalidParams(format!("k = {k} must be at least d + 1 = {}", d + 1)));
    }
    if k > p {
        return Err(Error::InvalidParams(format!("k = {k} exceeds the dimension {p}")));
    }
    Ok(())
}

/// Outcome of one group of candidate projections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupResult {
    pub group_index: usize,
    /// Index of the best candidate; `None` when every candidate failed.
    pub winner_index: Option<usize>,
    /// The winning subset, ascending; empty for degenerate groups.
    pub support: Vec<usize>,
    /// Top `d + 1` generalized eigenvalues of the winner.
    pub eigvals: Vec<f64>,
    /// `k × d` eigenvectors in subset coordinates.
    #[serde(skip)]
    pub eigvecs: Array2<f64>,
    /// Candidates whose covariance block could not be factored.
    pub failed_candidates: usize,
}

impl GroupResult {
    pub fn is_degenerate(&self) -> bool {
        self.winner_index.is_none()
    }
}

/// Per-variable importance weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    /// Coordinates that appeared in at least one winning subset, ascending.
    pub touched: Vec<usize>,
}

/// A `p × d` basis supported on a subset of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub p: usize,
    pub d: usize,
    pub matrix: Array2<f64>,
    pub support: Vec<usize>,
}

impl Basis {
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.matrix.column(i).to_vec()
    }

    /// Largest entry of `|βᵀ Σ̂ β − I|`, evaluated on the row support.
    pub fn sigma_deviation<M: MomentSource + ?Sized>(&self, moments: &M) -> Result<f64> {
        let (_, sig) = moments.block_pair(&self.support)?;
        let cols: Vec<Vec<f64>> = (0..self.d)
            .map(|c| self.support.iter().map(|&j| self.matrix[[j, c]]).collect())
            .collect();
        let mut worst = 0.0f64;
        for a in 0..self.d {
            for b in 0..=a {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((sig.bilinear(&cols[a], &cols[b]) - target).abs());
            }
        }
        Ok(worst)
    }
}

/// Run statistics of one weighting stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageDiagnostics {
    pub groups: usize,
    pub candidates: usize,
    pub effective_groups: usize,
    pub degenerate_groups: usize,
    pub failed_candidates: usize,
    pub seconds: f64,
}

/// Everything the single-stage estimator produces.
#[derive(Debug, Clone)]
pub struct RpFit {
    pub basis: Basis,
    pub weights: WeightVector,
    /// Selected variables, ascending.
    pub support: Vec<usize>,
    pub groups: Vec<GroupResult>,
    pub diagnostics: StageDiagnostics,
}

/// Draws a uniform `k`-subset of `0..p`, returned ascending.
pub fn sample_projection<R: Rng + ?Sized>(rng: &mut R, p: usize, k: usize) -> Vec<usize> {
    let mut s = index::sample(rng, p, k).into_vec();
    s.sort_unstable();
    s
}

/// Full scoring of one subset: the top `d + 1` generalized eigenpairs of the
/// block pair and the sum of the top `d` eigenvalues.
pub fn score_projection<M: MomentSource + ?Sized>(
    moments: &M,
    s: &[usize],
    d: usize,
    jitter_retry: bool,
) -> Result<(f64, GenEigResult)> {
    if s.len() < d + 1 {
        return Err(Error::InvalidParams(format!(
            "subset of size {} cannot give {} eigenvalues",
            s.len(),
            d + 1
        )));
    }
    let (kern, sig) = moments.block_pair(s)?;
    let eig = gen_eig_with_retry(&kern, &sig, d + 1, jitter_retry)?;
    let score = eig.values[..d].iter().sum();
    Ok((score, eig))
}

/// Ridge used on the single retry after a failed factorization.
pub fn retry_jitter(trace: f64, dim: usize) -> f64 {
    1e-10 * trace.abs() / dim as f64
}

fn gen_eig_with_retry(
    a: &SymMatrix,
    b: &SymMatrix,
    top: usize,
    jitter_retry: bool,
) -> Result<GenEigResult> {
    match gen_eig(a, b, top, 0.0) {
        Err(Error::NotPositiveDefinite { .. }) if jitter_retry => {
            let jitter = retry_jitter(b.trace(), b.dim());
            gen_eig(a, b, top, jitter).map_err(degenerate)
        }
        other => other.map_err(degenerate),
    }
}

fn degenerate(e: Error) -> Error {
    match e {
        Error::NotPositiveDefinite { pivot, value } => Error::Degenerate(format!(
            "covariance block is not positive definite (pivot {pivot} = {value:e})"
        )),
        other => other,
    }
}

/// Buffers for the score-only path, reused across candidates.
pub(crate) struct ScoreWorkspace {
    sig: Vec<f64>,
    kern: Vec<f64>,
    fac: Vec<f64>,
    vals: Vec<f64>,
    eig: EigWorkspace,
}

impl ScoreWorkspace {
    pub(crate) fn new(k: usize, rank: usize) -> Self {
        let cap = k.max(rank);
        ScoreWorkspace {
            sig: vec![0.0; k * k],
            kern: vec![0.0; k * k],
            fac: vec![0.0; k * rank],
            vals: Vec::with_capacity(cap),
            eig: EigWorkspace::new(cap),
        }
    }
}

/// Score only: sum of the top `d` generalized eigenvalues, or `−∞` when the
/// covariance block cannot be factored.
///
/// When the kernel is stored as `F Fᵀ` the nonzero generalized eigenvalues
/// are those of `Wᵀ W` with `W = L⁻¹ F_S`, which is a much smaller problem
/// than reducing the full pencil.
pub(crate) fn fast_score<M: MomentSource + ?Sized>(
    moments: &M,
    s: &[usize],
    d: usize,
    jitter_retry: bool,
    ws: &mut ScoreWorkspace,
) -> Result<f64> {
    let k = s.len();
    moments.fill_sigma(s, &mut ws.sig);
    if cholesky_in_place(&mut ws.sig, k).is_err() {
        if !jitter_retry {
            return Ok(f64::NEG_INFINITY);
        }
        moments.fill_sigma(s, &mut ws.sig);
        let trace: f64 = (0..k).map(|i| ws.sig[i * k + i]).sum();
        let jitter = retry_jitter(trace, k);
        for i in 0..k {
            ws.sig[i * k + i] += jitter;
        }
        if cholesky_in_place(&mut ws.sig, k).is_err() {
            return Ok(f64::NEG_INFINITY);
        }
    }
    let l = &ws.sig;
    ws.vals.clear();
    match moments.kernel_rank() {
        Some(r) if r < k => {
            moments.fill_kernel_factor(s, &mut ws.fac);
            forward_substitute(l, k, &mut ws.fac, r);
            let g = &mut ws.eig.v[..r * r];
            g.fill(0.0);
            for row in ws.fac.chunks_exact(r) {
                for (a, g_row) in g.chunks_exact_mut(r).enumerate() {
                    let wa = row[a];
                    for (x, wb) in g_row[..=a].iter_mut().zip(row) {
                        *x += wa * wb;
                    }
                }
            }
            for a in 0..r {
                for b in 0..a {
                    g[b * r + a] = g[a * r + b];
                }
            }
            ws.eig.decompose(r, false)?;
            ws.vals.extend_from_slice(&ws.eig.d[..r]);
            ws.vals.resize(k, 0.0);
        }
        _ => {
            moments.fill_kernel(s, &mut ws.kern);
            reduce_pencil(l, &ws.kern, k, &mut ws.eig.scratch, &mut ws.eig.v);
            ws.eig.decompose(k, false)?;
            ws.vals.extend_from_slice(&ws.eig.d[..k]);
        }
    }
    sort_descending(&mut ws.vals);
    Ok(ws.vals[..d].iter().sum())
}

/// Index of the largest score, ties to the smallest index; `None` when all
/// scores are `−∞` (or NaN).
pub fn select_within_group(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in scores.iter().enumerate() {
        if v == f64::NEG_INFINITY || v.is_nan() {
            continue;
        }
        match best {
            Some(b) if scores[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// `ŵ_j = (1/A_eff) Σ_a Σ_{i≤d} (λ_i − λ_{d+1}) v_i(j)²`, summed over the
/// non-degenerate groups in order.
pub fn aggregate_weights(groups: &[GroupResult], p: usize, d: usize) -> Result<WeightVector> {
    let live: Vec<&GroupResult> = groups.iter().filter(|g| !g.is_degenerate()).collect();
    if live.is_empty() {
        return Err(Error::AllGroupsDegenerate);
    }
    let mut w = vec![0.0; p];
    let mut touched = vec![false; p];
    for g in &live {
        for (row, &j) in g.support.iter().enumerate() {
            if j >= p {
                return Err(Error::IndexOutOfRange { index: j, dim: p });
            }
            let mut acc = 0.0;
            for i in 0..d {
                let v = g.eigvecs[[row, i]];
                acc += (g.eigvals[i] - g.eigvals[d]) * v * v;
            }
            w[j] += acc;
            touched[j] = true;
        }
    }
    let a_eff = live.len() as f64;
    for x in &mut w {
        *x /= a_eff;
    }
    Ok(WeightVector {
        w,
        touched: (0..p).filter(|&j| touched[j]).collect(),
    })
}

/// Indices of the `l` largest weights (ties to the smaller index), ascending.
pub fn top_l(w: &[f64], l: usize) -> Result<Vec<usize>> {
    if l > w.len() {
        return Err(Error::InvalidParams(format!(
            "cannot take {l} of {} weights",
            w.len()
        )));
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
    let mut out = order[..l].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Top-`d` generalized eigenvectors on `support`, embedded in `p` dimensions.
pub fn final_basis<M: MomentSource + ?Sized>(
    moments: &M,
    support: &[usize],
    d: usize,
    jitter_retry: bool,
) -> Result<Basis> {
    if support.len() < d || d == 0 {
        return Err(Error::InvalidParams(format!(
            "support of size {} cannot carry {d} directions",
            support.len()
        )));
    }
    let (kern, sig) = moments.block_pair(support)?;
    let eig = gen_eig_with_retry(&kern, &sig, d, jitter_retry)?;
    let p = moments.dim();
    let mut matrix = Array2::zeros((p, d));
    for (row, &j) in support.iter().enumerate() {
        for c in 0..d {
            matrix[[j, c]] = eig.vectors[[row, c]];
        }
    }
    Ok(Basis {
        p,
        d,
        matrix,
        support: support.to_vec(),
    })
}

/// Steps shared by both estimators: score `groups × candidates` random
/// `k`-subsets drawn from streams under `stream_seed`, keep each group's
/// winner, and aggregate weights.
pub fn weighting_stage<M: MomentSource + ?Sized>(
    moments: &M,
    groups: usize,
    candidates: usize,
    k: usize,
    d: usize,
    stream_seed: u64,
    jitter_retry: bool,
) -> Result<(WeightVector, Vec<GroupResult>, StageDiagnostics)> {
    check_budget(groups, candidates)?;
    let p = moments.dim();
    check_projection(k, d, p)?;
    let start = Instant::now();
    let rank = moments.kernel_rank().unwrap_or(0);
    let results: Vec<Result<GroupResult>> = (0..groups)
        .into_par_iter()
        .map_init(
            || ScoreWorkspace::new(k, rank),
            |ws, a| run_group(moments, a, candidates, k, d, stream_seed, jitter_retry, ws),
        )
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let weights = aggregate_weights(&results, p, d)?;
    let degenerate_groups = results.iter().filter(|g| g.is_degenerate()).count();
    if degenerate_groups > 0 {
        log::warn!("{degenerate_groups} of {groups} projection groups were degenerate");
    }
    let diagnostics = StageDiagnostics {
        groups,
        candidates,
        effective_groups: groups - degenerate_groups,
        degenerate_groups,
        failed_candidates: results.iter().map(|g| g.failed_candidates).sum(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((weights, results, diagnostics))
}

#[allow(clippy::too_many_arguments)]
fn run_group<M: MomentSource + ?Sized>(
    moments: &M,
    a: usize,
    candidates: usize,
    k: usize,
    d: usize,
    stream_seed: u64,
    jitter_retry: bool,
    ws: &mut ScoreWorkspace,
) -> Result<GroupResult> {
    let p = moments.dim();
    let mut scores = Vec::with_capacity(candidates);
    let mut best_subset = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut failed = 0;
    for b in 0..candidates {
        let mut rng = stream_rng(stream_seed, (a * candidates + b) as u64);
        let s = sample_projection(&mut rng, p, k);
        let score = fast_score(moments, &s, d, jitter_retry, ws)?;
        if score == f64::NEG_INFINITY {
            failed += 1;
        } else if best_subset.is_empty() || score > best {
            best = score;
            best_subset = s;
        }
        scores.push(score);
    }
    let winner_index = select_within_group(&scores);
    if winner_index.is_none() {
        return Ok(degenerate_group(a, failed));
    }
    match score_projection(moments, &best_subset, d, jitter_retry) {
        Ok((_, eig)) => Ok(GroupResult {
            group_index: a,
            winner_index,
            support: best_subset,
            eigvals: eig.values,
            eigvecs: eig.vectors.slice(ndarray::s![.., ..d]).to_owned(),
            failed_candidates: failed,
        }),
        Err(Error::Degenerate(_)) => Ok(degenerate_group(a, candidates)),
        Err(e) => Err(e),
    }
}

fn degenerate_group(a: usize, failed: usize) -> GroupResult {
    GroupResult {
        group_index: a,
        winner_index: None,
        support: Vec::new(),
        eigvals: Vec::new(),
        eigvecs: Array2::zeros((0, 0)),
        failed_candidates: failed,
    }
}

/// The single-stage estimator.
pub fn ssir_rp<M: MomentSource + ?Sized>(moments: &M, params: &RpParams) -> Result<RpFit> {
    params.validate(moments.dim())?;
    let (weights, groups, diagnostics) = weighting_stage(
        moments,
        params.groups,
        params.candidates,
        params.k,
        params.d,
        derive_seed(params.seed, STAGE_ONE),
        params.jitter_retry,
    )?;
    let support = top_l(&weights.w, params.l)?;
    let basis = final_basis(moments, &support, params.d, params.jitter_retry)?;
    Ok(RpFit {
        basis,
        weights,
        support,
        groups,
        diagnostics,
    })
}
