//! Single-stage estimator: score random k-subsets, aggregate importance
//! weights, keep the top l variables and solve SIR on them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssirvrp::metrics::correlation_loss;
use ssirvrp::moments::{build_moments, KernelEstimator};
use ssirvrp::projection::{ssir_rp, RpParams};
use ssirvrp::simulation::{draw_dataset, make_cov, CovSpec, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, p) = (100, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = draw_dataset(&mut rng, n, p, 5, Model::I, CovSpec::Identity)?;
    let moments = build_moments(data.x.view(), &data.y, 10, KernelEstimator::Means)?;

    // 900 groups of 300 subsets of size 20; keep 5 variables, one direction.
    let params = RpParams::new(900, 300, 20, 5, 1, 42);
    let fit = ssir_rp(&moments, &params)?;

    let mut ranked: Vec<usize> = (0..p).collect();
    ranked.sort_by(|&a, &b| fit.weights.w[b].total_cmp(&fit.weights.w[a]));
    println!("true support     {:?}", data.support);
    println!("selected         {:?}", fit.support);
    println!("top weights      {:?}", &ranked[..8]);
    println!(
        "groups used {} of {}, {:.2} s",
        fit.diagnostics.effective_groups, fit.diagnostics.groups, fit.diagnostics.seconds
    );

    let sigma = make_cov(CovSpec::Identity, p)?;
    let loss = correlation_loss(fit.basis.matrix.view(), data.beta.view(), &sigma)?;
    println!("correlation loss {loss:.4}");
    Ok(())
}
