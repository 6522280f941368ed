//! More covariates than fit comfortably as p × p matrices: moment blocks are
//! computed from the centered data for each scored subset instead.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssirvrp::moments::{KernelEstimator, ProjectedMoments};
use ssirvrp::reweight::{ssir_rp_reweighted, Rp2Params};
use ssirvrp::simulation::{draw_dataset, CovSpec, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, p) = (90, 5000);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let data = draw_dataset(&mut rng, n, p, 5, Model::I, CovSpec::Identity)?;

    let moments = ProjectedMoments::new(data.x.view(), &data.y, 10, KernelEstimator::Means)?;
    let fit = ssir_rp_reweighted(&moments, &Rp2Params::standard(1, 13, 4))?;

    println!("true support {:?}", data.support);
    println!("selected     {:?}", fit.support);
    let d = &fit.screening.diagnostics;
    println!("stage times  {:.2} s, {:.2} s", d[0].seconds, d[1].seconds);
    Ok(())
}
