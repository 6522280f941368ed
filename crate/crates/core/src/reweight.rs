//! Two-stage estimator: screen to the top `l′` variables with a first
//! weighting pass, recompute the weights on the screened block pair, and fit
//! the final basis on the top `l` of the recomputed weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::moments::MomentSource;
use crate::projection::{
    check_budget, check_projection, final_basis, top_l, weighting_stage, Basis, StageDiagnostics,
    WeightVector, STAGE_ONE, STAGE_TWO,
};

/// Number of groups and candidates per group for one weighting stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionBudget {
    pub groups: usize,
    pub candidates: usize,
}

impl ProjectionBudget {
    pub fn new(groups: usize, candidates: usize) -> Self {
        ProjectionBudget { groups, candidates }
    }

    /// Total number of scored subsets.
    pub fn total(&self) -> usize {
        self.groups * self.candidates
    }
}

/// Settings of the two-stage estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rp2Params {
    pub stage1: ProjectionBudget,
    pub stage2: ProjectionBudget,
    pub k: usize,
    pub l: usize,
    pub l_prime: usize,
    pub d: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub jitter_retry: bool,
}

fn default_true() -> bool {
    true
}

impl Rp2Params {
    /// Standard budget: (900, 300) then (600, 200), `k = 20`, `l′ = 50`.
    pub fn standard(d: usize, l: usize, seed: u64) -> Self {
        Rp2Params {
            stage1: ProjectionBudget::new(900, 300),
            stage2: ProjectionBudget::new(600, 200),
            k: 20,
            l,
            l_prime: 50,
            d,
            seed,
            jitter_retry: true,
        }
    }

    /// Checks everything except `l`, which tuning supplies per grid value.
    pub fn validate_stages(&self, p: usize) -> Result<()> {
        check_budget(self.stage1.groups, self.stage1.candidates)?;
        check_budget(self.stage2.groups, self.stage2.candidates)?;
        check_projection(self.k, self.d, p)?;
        if self.l_prime > p {
            return Err(Error::InvalidParams(format!(
                "l' = {} exceeds the dimension {p}",
                self.l_prime
            )));
        }
        if self.l_prime < self.k {
            return Err(Error::InvalidParams(format!(
                "l' = {} is smaller than the projection size k = {}",
                self.l_prime, self.k
            )));
        }
        Ok(())
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.validate_stages(p)?;
        if self.l < self.d || self.l > self.l_prime {
            return Err(Error::InvalidParams(format!(
                "l = {} must lie in [d, l'] = [{}, {}]",
                self.l, self.d, self.l_prime
            )));
        }
        Ok(())
    }
}

/// Output of both weighting stages, before any final support is chosen.
#[derive(Debug, Clone)]
pub struct Screening {
    pub stage1: WeightVector,
    /// Second-stage weights in ambient coordinates (zero off `screened`).
    pub stage2: WeightVector,
    /// The `l′` variables kept after the first stage, ascending.
    pub screened: Vec<usize>,
    pub diagnostics: [StageDiagnostics; 2],
}

impl Screening {
    /// Top-`l` support of the second-stage weights and its basis.
    pub fn select<M: MomentSource + ?Sized>(
        &self,
        moments: &M,
        l: usize,
        d: usize,
        jitter_retry: bool,
    ) -> Result<(Vec<usize>, Basis)> {
        if l > self.screened.len() {
            return Err(Error::InvalidParams(format!(
                "l = {l} exceeds the {} screened variables",
                self.screened.len()
            )));
        }
        let support = top_l(&self.stage2.w, l)?;
        let basis = final_basis(moments, &support, d, jitter_retry)?;
        Ok((support, basis))
    }
}

/// Everything the two-stage estimator produces.
#[derive(Debug, Clone)]
pub struct Rp2Fit {
    pub basis: Basis,
    pub support: Vec<usize>,
    pub screening: Screening,
}

/// Runs both weighting stages.
pub fn reweighting_stages<M: MomentSource + ?Sized>(
    moments: &M,
    params: &Rp2Params,
) -> Result<Screening> {
    let p = moments.dim();
    params.validate_stages(p)?;
    let (stage1, _, diag1) = weighting_stage(
        moments,
        params.stage1.groups,
        params.stage1.candidates,
        params.k,
        params.d,
        derive_seed(params.seed, STAGE_ONE),
        params.jitter_retry,
    )?;
    let screened = top_l(&stage1.w, params.l_prime)?;
    let restricted = moments.restrict(&screened)?;
    let (local, _, diag2) = weighting_stage(
        &restricted,
        params.stage2.groups,
        params.stage2.candidates,
        params.k,
        params.d,
        derive_seed(params.seed, STAGE_TWO),
        params.jitter_retry,
    )?;
    let mut w = vec![0.0; p];
    for (i, &j) in screened.iter().enumerate() {
        w[j] = local.w[i];
    }
    let stage2 = WeightVector {
        w,
        touched: local.touched.iter().map(|&i| screened[i]).collect(),
    };
    Ok(Screening {
        stage1,
        stage2,
        screened,
        diagnostics: [diag1, diag2],
    })
}

/// The two-stage estimator with a fixed support size.
pub fn ssir_rp_reweighted<M: MomentSource + ?Sized>(
    moments: &M,
    params: &Rp2Params,
) -> Result<Rp2Fit> {
    params.validate(moments.dim())?;
    let screening = reweighting_stages(moments, params)?;
    let (support, basis) = screening.select(moments, params.l, params.d, params.jitter_retry)?;
    Ok(Rp2Fit {
        basis,
        support,
        screening,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{build_moments, KernelEstimator};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(seed: u64, p: usize) -> crate::moments::SlicedMoments {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100;
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n)
            .map(|i| x[[i, 1]] - x[[i, 4]] + 0.2 * rng.random_range(-1.0..1.0))
            .collect();
        build_moments(x.view(), &y, 5, KernelEstimator::Means).unwrap()
    }

    fn small(l: usize, l_prime: usize) -> Rp2Params {
        Rp2Params {
            stage1: ProjectionBudget::new(30, 10),
            stage2: ProjectionBudget::new(20, 10),
            k: 4,
            l,
            l_prime,
            d: 1,
            seed: 5,
            jitter_retry: true,
        }
    }

    #[test]
    fn params_validation() {
        assert!(small(2, 8).validate(20).is_ok());
        assert!(small(2, 3).validate(20).is_err()); // l' < k
        assert!(small(9, 8).validate(20).is_err()); // l > l'
        assert!(small(2, 21).validate(20).is_err());
        let std = Rp2Params::standard(1, 5, 0);
        assert_eq!((std.stage1.groups, std.stage1.candidates), (900, 300));
        assert_eq!((std.stage2.groups, std.stage2.candidates), (600, 200));
        assert_eq!((std.k, std.l_prime), (20, 50));
    }

    #[test]
    fn stage_two_weights_live_on_screened_set() {
        let m = toy(1, 25);
        let fit = ssir_rp_reweighted(&m, &small(3, 8)).unwrap();
        let s = &fit.screening;
        assert_eq!(s.screened.len(), 8);
        for j in 0..25 {
            if s.stage2.w[j] != 0.0 {
                assert!(s.screened.contains(&j));
            }
        }
        assert!(fit.support.iter().all(|j| s.screened.contains(j)));
        assert!(fit.support.contains(&1) && fit.support.contains(&4));
    }

    #[test]
    fn full_screen_with_shared_streams_replays_stage_one() {
        let m = toy(2, 10);
        let seed = derive_seed(9, STAGE_ONE);
        let (w1, _, _) = weighting_stage(&m, 15, 6, 4, 1, seed, true).unwrap();
        let all: Vec<usize> = (0..10).collect();
        let restricted = m.restrict(&all).unwrap();
        let (w2, _, _) = weighting_stage(&restricted, 15, 6, 4, 1, seed, true).unwrap();
        assert_eq!(w1, w2);
    }
}
