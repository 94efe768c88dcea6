//! Fixture models shared by the benchmarks.

use csq_core::{Model, ServiceDistribution};
use nalgebra::DMatrix;

/// A dense K-class model with load `rho`, mixing light and heavy-tailed services.
pub fn dense_model(k: usize, rho: f64) -> Model {
    let lambda: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| 1.0 + ((i * 7 + j * 3) % 5) as f64).collect()).collect();
    let services: Vec<ServiceDistribution> = (0..k)
        .map(|i| match i % 3 {
            0 => ServiceDistribution::Exponential { rate: 1.0 },
            1 => ServiceDistribution::Erlang { shape: 2, rate: 2.0 },
            _ => ServiceDistribution::pareto(2.5, 0.6),
        })
        .collect();
    let base = Model::from_parts(lambda.clone(), vec![1.0; k], services.clone()).expect("valid fixture");
    let scale = rho / base.rho();
    let scaled = lambda.iter().map(|row| row.iter().map(|x| x * scale).collect()).collect();
    Model::from_parts(scaled, vec![1.0; k], services).expect("valid fixture")
}

/// Nonnegative K×K matrix with a sparse, reducible pattern.
pub fn block_matrix(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| if (i / 4 == j / 4) || j == i + 1 { 0.1 + ((i + 2 * j) % 7) as f64 * 0.05 } else { 0.0 })
}
