//! Random model generators shared by the integration tests.
#![allow(dead_code)]

use csq_core::{Model, ModelSpec, ServiceDistribution};
use rand::Rng;
use statrs::function::gamma::gamma;

pub fn exp(rate: f64) -> ServiceDistribution {
    ServiceDistribution::exponential(rate)
}

/// A light-tailed distribution with the given mean, kind picked at random.
pub fn light_service<R: Rng>(rng: &mut R, mean: f64) -> ServiceDistribution {
    match rng.random_range(0..5) {
        0 => ServiceDistribution::Exponential { rate: 1.0 / mean },
        1 => ServiceDistribution::Deterministic { mean },
        2 => ServiceDistribution::Erlang { shape: 3, rate: 3.0 / mean },
        3 => {
            let sigma: f64 = 0.5;
            ServiceDistribution::Lognormal { location: mean.ln() - 0.5 * sigma * sigma, scale: sigma }
        }
        _ => {
            let shape = 1.5;
            ServiceDistribution::Weibull { shape, scale: mean / gamma(1.0 + 1.0 / shape) }
        }
    }
}

/// Nonnegative rate matrix; entries are zeroed with probability `sparsity`.
pub fn random_lambda<R: Rng>(rng: &mut R, k: usize, sparsity: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| {
            (0..k)
                .map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random_range(0.05..1.0) })
                .collect()
        })
        .collect()
}

/// Rescales the in-service rates so that ρ(M) equals `rho`. Returns `None`
/// when M is nilpotent.
pub fn with_rho(model: &Model, rho: f64) -> Option<Model> {
    let current = model.rho();
    (current > 1e-6).then(|| model.scaled(rho / current).expect("scaling keeps validity"))
}

/// Random K-class model with mixed light-tailed services and ρ(M) = `rho`.
pub fn random_model<R: Rng>(rng: &mut R, k: usize, rho: f64, exponential_only: bool) -> Model {
    loop {
        let service: Vec<ServiceDistribution> = (0..k)
            .map(|_| {
                let mean = rng.random_range(0.5..2.0);
                if exponential_only {
                    exp(1.0 / mean)
                } else {
                    light_service(rng, mean)
                }
            })
            .collect();
        let spec = ModelSpec {
            k,
            lambda: random_lambda(rng, k, 0.25),
            lambda0: (0..k).map(|_| rng.random_range(0.2..1.0)).collect(),
            service,
        };
        let model = Model::new(spec).expect("generated spec is valid");
        if let Some(m) = with_rho(&model, rho) {
            return m;
        }
    }
}

/// Exponential K=2 model with no self-arrivals.
pub fn example_k2(mu1: f64, mu2: f64, lam12: f64, lam21: f64) -> Model {
    Model::from_parts(vec![vec![0.0, lam12], vec![lam21, 0.0]], vec![1.0, 1.0], vec![exp(mu1), exp(mu2)])
        .expect("valid")
}

/// Random stable parameters of the K=2 exponential example.
pub fn random_example_k2<R: Rng>(rng: &mut R, max_rho: f64) -> (f64, f64, f64, f64) {
    loop {
        let mu1: f64 = rng.random_range(0.5..4.0);
        let mu2 = rng.random_range(0.5..4.0);
        let lam12 = rng.random_range(0.05..3.0);
        let lam21 = rng.random_range(0.05..3.0);
        let rho = (lam12 * lam21 / (mu1 * mu2)).sqrt();
        if rho < max_rho {
            return (mu1, mu2, lam12, lam21);
        }
    }
}
