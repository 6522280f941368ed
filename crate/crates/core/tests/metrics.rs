mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssirvrp::linalg::SymMatrix;
use ssirvrp::metrics::{correlation_loss, projection_loss, sin_theta_loss};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlation_loss_ignores_the_choice_of_basis(seed in any::<u64>(), p in 4usize..25, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = to_sym(&random_spd(&mut rng, p, 0.2));
        let bhat = gaussian_matrix(&mut rng, p, d);
        let btrue = gaussian_matrix(&mut rng, p, d);
        let mut g = gaussian_matrix(&mut rng, d, d);
        for i in 0..d {
            g[[i, i]] += 3.0;
        }
        let base = correlation_loss(bhat.view(), btrue.view(), &sigma).unwrap();
        let moved = correlation_loss(bhat.dot(&g).view(), btrue.dot(&g.t()).view(), &sigma).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!((base - moved).abs() < 1e-8);
    }

    #[test]
    fn projection_loss_is_root_two_sin_theta(seed in any::<u64>(), p in 3usize..30, d in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_frame(&mut rng, p, d);
        let v = random_frame(&mut rng, p, d);
        let pl = projection_loss(u.view(), v.view()).unwrap();
        let st = sin_theta_loss(u.view(), v.view()).unwrap();
        prop_assert!((pl - 2f64.sqrt() * st).abs() < 1e-10);
    }
}

#[test]
fn identical_subspaces_have_zero_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = gaussian_matrix(&mut rng, 10, 2);
    let loss = correlation_loss(b.view(), b.view(), &SymMatrix::identity(10)).unwrap();
    assert!(loss.abs() < 1e-12);
}
