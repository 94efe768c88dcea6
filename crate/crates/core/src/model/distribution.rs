use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Pareto, Weibull};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::{erf::erfc, gamma::gamma};

use crate::quadrature;

/// Absolute accuracy of transforms evaluated by quadrature.
pub const LST_QUADRATURE_TOL: f64 = 1e-10;

/// Per-class service time law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ServiceDistribution {
    Exponential { rate: f64 },
    Deterministic { mean: f64 },
    Erlang { shape: u32, rate: f64 },
    Pareto { shape: f64, scale: f64 },
    Lognormal { location: f64, scale: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl ServiceDistribution {
    pub fn exponential(rate: f64) -> Self {
        Self::Exponential { rate }
    }

    pub fn pareto(shape: f64, scale: f64) -> Self {
        Self::Pareto { shape, scale }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Deterministic { .. } => "deterministic",
            Self::Erlang { .. } => "erlang",
            Self::Pareto { .. } => "pareto",
            Self::Lognormal { .. } => "lognormal",
            Self::Weibull { .. } => "weibull",
        }
    }

    /// Parameter problems, described in words. An infinite-mean Pareto is
    /// reported separately by model validation.
    pub fn parameter_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{} {name} must be finite and > 0, got {v}", self.name()));
            }
        };
        match *self {
            Self::Exponential { rate } => positive("rate", rate),
            Self::Deterministic { mean } => positive("mean", mean),
            Self::Erlang { shape, rate } => {
                positive("rate", rate);
                if shape == 0 {
                    out.push("erlang shape must be >= 1".to_string());
                }
            }
            Self::Pareto { shape, scale } => {
                positive("shape", shape);
                positive("scale", scale);
            }
            Self::Lognormal { location, scale } => {
                positive("scale", scale);
                if !location.is_finite() {
                    out.push(format!("lognormal location must be finite, got {location}"));
                }
            }
            Self::Weibull { shape, scale } => {
                positive("shape", shape);
                positive("scale", scale);
            }
        }
        out
    }

    /// E[S]; infinite for a Pareto with shape <= 1.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Deterministic { mean } => mean,
            Self::Erlang { shape, rate } => shape as f64 / rate,
            Self::Pareto { shape, scale } => {
                if shape <= 1.0 {
                    f64::INFINITY
                } else {
                    shape * scale / (shape - 1.0)
                }
            }
            Self::Lognormal { location, scale } => (location + 0.5 * scale * scale).exp(),
            Self::Weibull { shape, scale } => scale * gamma(1.0 + 1.0 / shape),
        }
    }

    /// Laplace–Stieltjes transform ψ(s) = E[e^{-sS}] for s >= 0.
    ///
    /// Pareto, lognormal and Weibull have no closed form; they are integrated
    /// in the quantile domain, ψ(s) = ∫_0^1 exp(-s F⁻¹(u)) du, whose integrand
    /// is bounded by one.
    pub fn lst(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 1.0;
        }
        match *self {
            Self::Exponential { rate } => rate / (rate + s),
            Self::Deterministic { mean } => (-s * mean).exp(),
            Self::Erlang { shape, rate } => (rate / (rate + s)).powi(shape as i32),
            Self::Pareto { .. } | Self::Lognormal { .. } | Self::Weibull { .. } => {
                let integrand = |u: f64| (-s * self.quantile(u)).exp();
                quadrature::integrate(integrand, 0.0, 1.0, LST_QUADRATURE_TOL)
                    .value
                    .clamp(0.0, 1.0)
            }
        }
    }

    /// Inverse distribution function on (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => -(-u).ln_1p() / rate,
            Self::Deterministic { mean } => mean,
            Self::Erlang { .. } => {
                // only needed for completeness; bisection on the survival function
                let (mut lo, mut hi) = (0.0, self.mean().max(1e-300));
                while self.survival(hi) > 1.0 - u {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.survival(mid) > 1.0 - u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
            Self::Pareto { shape, scale } => scale * (1.0 - u).powf(-1.0 / shape),
            Self::Lognormal { location, scale } => {
                let z = Normal::standard().inverse_cdf(u);
                (location + scale * z).exp()
            }
            Self::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
        }
    }

    /// Tail P(S > x).
    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match *self {
            Self::Exponential { rate } => (-rate * x).exp(),
            Self::Deterministic { mean } => {
                if x < mean {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Erlang { shape, rate } => {
                let y = rate * x;
                let mut term = 1.0;
                let mut sum = 1.0;
                for n in 1..shape {
                    term *= y / n as f64;
                    sum += term;
                }
                (-y).exp() * sum
            }
            Self::Pareto { shape, scale } => {
                if x <= scale {
                    1.0
                } else {
                    (scale / x).powf(shape)
                }
            }
            Self::Lognormal { location, scale } => {
                if x == 0.0 {
                    return 1.0;
                }
                0.5 * erfc((x.ln() - location) / (scale * std::f64::consts::SQRT_2))
            }
            Self::Weibull { shape, scale } => (-(x / scale).powf(shape)).exp(),
        }
    }

    /// Prepared sampler. Panics on parameters rejected by validation.
    pub fn sampler(&self) -> ServiceSampler {
        let inner = match *self {
            Self::Exponential { rate } => Inner::Exp(Exp::new(rate).expect("validated rate")),
            Self::Deterministic { mean } => Inner::Constant(mean),
            Self::Erlang { shape, rate } => {
                Inner::Gamma(Gamma::new(shape as f64, 1.0 / rate).expect("validated erlang"))
            }
            Self::Pareto { shape, scale } => {
                Inner::Pareto(Pareto::new(scale, shape).expect("validated pareto"))
            }
            Self::Lognormal { location, scale } => {
                Inner::LogNormal(LogNormal::new(location, scale).expect("validated lognormal"))
            }
            Self::Weibull { shape, scale } => {
                Inner::Weibull(Weibull::new(scale, shape).expect("validated weibull"))
            }
        };
        ServiceSampler(inner)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Exp(Exp<f64>),
    Constant(f64),
    Gamma(Gamma<f64>),
    Pareto(Pareto<f64>),
    LogNormal(LogNormal<f64>),
    Weibull(Weibull<f64>),
}

/// A service distribution with its `rand_distr` state built once.
#[derive(Debug, Clone)]
pub struct ServiceSampler(Inner);

impl Distribution<f64> for ServiceSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match &self.0 {
            Inner::Exp(d) => d.sample(rng),
            Inner::Constant(m) => *m,
            Inner::Gamma(d) => d.sample(rng),
            Inner::Pareto(d) => d.sample(rng),
            Inner::LogNormal(d) => d.sample(rng),
            Inner::Weibull(d) => d.sample(rng),
        };
        x.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn all_kinds() -> Vec<ServiceDistribution> {
        vec![
            ServiceDistribution::Exponential { rate: 2.0 },
            ServiceDistribution::Deterministic { mean: 0.7 },
            ServiceDistribution::Erlang { shape: 3, rate: 4.0 },
            ServiceDistribution::Pareto { shape: 2.5, scale: 0.6 },
            ServiceDistribution::Lognormal { location: -0.3, scale: 0.5 },
            ServiceDistribution::Weibull { shape: 1.5, scale: 0.8 },
        ]
    }

    #[test]
    fn serde_tagging() {
        let d: ServiceDistribution =
            serde_json::from_str(r#"{"kind":"exponential","rate":2.0}"#).unwrap();
        assert_eq!(d, ServiceDistribution::Exponential { rate: 2.0 });
        let s = serde_json::to_string(&ServiceDistribution::Erlang { shape: 2, rate: 1.5 }).unwrap();
        assert_eq!(s, r#"{"kind":"erlang","shape":2,"rate":1.5}"#);
    }

    #[test]
    fn pareto_mean_formula() {
        let d = ServiceDistribution::pareto(3.0, 2.0);
        assert!((d.mean() - 3.0).abs() < 1e-15);
        assert!(ServiceDistribution::pareto(0.9, 1.0).mean().is_infinite());
    }

    #[test]
    fn lst_bounds_and_monotone() {
        for d in all_kinds() {
            assert_eq!(d.lst(0.0), 1.0);
            let mut prev = 1.0;
            for k in 0..30 {
                let s = 1e-3 * 1.6f64.powi(k);
                let v = d.lst(s);
                assert!(v > 0.0 && v <= 1.0, "{d:?} {s} {v}");
                assert!(v <= prev + 1e-12, "{d:?} not monotone at {s}");
                prev = v;
            }
        }
    }

    #[test]
    fn quadrature_lst_matches_closed_forms() {
        // The quantile-domain route applied to laws with known transforms.
        let cases = [
            (ServiceDistribution::Exponential { rate: 1.3 }, 0.7),
            (ServiceDistribution::Exponential { rate: 0.2 }, 5.0),
        ];
        for (d, s) in cases {
            let q = quadrature::integrate(|u| (-s * d.quantile(u)).exp(), 0.0, 1.0, 1e-12).value;
            assert!((q - d.lst(s)).abs() < 1e-10);
        }
        // Weibull with shape 1 is exponential with rate 1/scale.
        let w = ServiceDistribution::Weibull { shape: 1.0, scale: 0.5 };
        for s in [0.01, 0.3, 2.0, 40.0] {
            assert!((w.lst(s) - 2.0 / (2.0 + s)).abs() < 1e-10, "s={s}");
        }
        // Pareto shape 2, scale 1: ψ(s) = 2 s² Γ(-2, s) = 2 ∫_1^∞ e^{-sx} x^{-3} dx
        let p = ServiceDistribution::pareto(2.0, 1.0);
        let s: f64 = 0.4;
        // substitution x = 1/t: 2 ∫_0^1 e^{-s/t} t dt
        let reference = quadrature::integrate(|t: f64| 2.0 * t * (-s / t).exp(), 0.0, 1.0, 1e-13).value;
        assert!((p.lst(s) - reference).abs() < 1e-10);
    }

    #[test]
    fn lognormal_lst_small_s_derivative_is_mean() {
        let d = ServiceDistribution::Lognormal { location: 0.1, scale: 0.4 };
        let h = 1e-4;
        let slope = (1.0 - d.lst(h)) / h;
        assert!((slope - d.mean()).abs() / d.mean() < 1e-3);
    }

    #[test]
    fn survival_and_quantile_agree() {
        for d in all_kinds() {
            if matches!(d, ServiceDistribution::Deterministic { .. }) {
                continue;
            }
            for u in [0.1, 0.5, 0.9, 0.999] {
                let x = d.quantile(u);
                assert!((d.survival(x) - (1.0 - u)).abs() < 1e-9, "{d:?} u={u}");
            }
        }
    }

    #[test]
    fn sample_means_within_one_percent() {
        use rand_distr::Distribution;
        for (idx, d) in all_kinds().into_iter().enumerate() {
            let sampler = d.sampler();
            let mut rng = rng::stream(42, idx as u64);
            let n = 1_000_000;
            let mut sum = 0.0;
            for _ in 0..n {
                let x = sampler.sample(&mut rng);
                assert!(x >= 0.0);
                sum += x;
            }
            let mean = sum / n as f64;
            assert!((mean / d.mean() - 1.0).abs() < 0.01, "{d:?}: {mean} vs {}", d.mean());
        }
    }
}
