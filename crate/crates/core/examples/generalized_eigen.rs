//! Solving a small symmetric-definite pencil `A v = λ B v` and checking the
//! two properties everything else relies on: small residuals and
//! `B`-orthonormal eigenvectors.

use ssirvrp::linalg::{cholesky, gen_eig, SymMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A rank-2 "kernel" and an AR(1)-type covariance.
    let p = 6;
    let u = [1.0, 0.5, 0.0, 0.0, -0.3, 0.0];
    let w = [0.0, 0.2, 1.0, 0.0, 0.0, 0.4];
    let a = SymMatrix::from_fn(p, |i, j| 2.0 * u[i] * u[j] + 0.5 * w[i] * w[j])?;
    let b = SymMatrix::from_fn(p, |i, j| 0.6f64.powi((i as i32 - j as i32).abs()))?;

    let eig = gen_eig(&a, &b, 3, 0.0)?;
    println!("leading generalized eigenvalues: {:?}", eig.values);

    for i in 0..3 {
        let v = eig.vector(i);
        let av = a.mul_vec(&v);
        let bv = b.mul_vec(&v);
        let residual: f64 = av
            .iter()
            .zip(&bv)
            .map(|(x, y)| (x - eig.values[i] * y).powi(2))
            .sum::<f64>()
            .sqrt();
        println!("pair {i}: |Av - λBv| = {residual:.2e}, vᵀBv = {:.12}", b.bilinear(&v, &v));
    }
    println!("v0ᵀBv1 = {:.2e}", b.bilinear(&eig.vector(0), &eig.vector(1)));

    // The Cholesky factor of a leading principal block is the leading block
    // of the full factor, which is what makes per-subset reductions cheap.
    let full = cholesky(&b, 0.0)?.to_array();
    let lead = cholesky(&b.principal_submatrix(&[0, 1, 2])?, 0.0)?.to_array();
    let gap = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (full[[i, j]] - lead[[i, j]]).abs())
        .fold(0.0, f64::max);
    println!("leading-block Cholesky mismatch: {gap:.1e}");
    Ok(())
}
