//! Picking the number of selected variables with BIC or AIC. The two
//! weighting stages run once; each l only costs a small eigenproblem.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssirvrp::moments::{build_moments, KernelEstimator};
use ssirvrp::reweight::{reweighting_stages, Rp2Params};
use ssirvrp::simulation::{draw_dataset, CovSpec, Model};
use ssirvrp::tuning::{tune_screened, Criterion};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = draw_dataset(&mut rng, 100, 200, 5, Model::III, CovSpec::Identity)?;
    let moments = build_moments(data.x.view(), &data.y, 10, KernelEstimator::Means)?;

    let params = Rp2Params::standard(1, 5, 1);
    let screening = reweighting_stages(&moments, &params)?;
    let grid: Vec<usize> = (2..=15).collect();

    for criterion in [Criterion::Bic, Criterion::Aic] {
        let t = tune_screened(&moments, &screening, &params, criterion, Some(&grid))?;
        println!("{criterion}: chose l = {}, support {:?}", t.chosen_l, t.support);
        for (l, v) in &t.criterion_values {
            let mark = if *l == t.chosen_l { " <" } else { "" };
            println!("  l = {l:>2}  {v:+.4}{mark}");
        }
    }
    println!("true support {:?}", data.support);
    Ok(())
}
