//! The busy period as a multitype Galton–Watson tree.
//!
//! An individual of class `i` lives for a service time `S ~ F_i` and has
//! `Poisson(λ_ij S)` class-`j` children, conditionally independent given `S`.
//! The total lifetime of the tree rooted at class `i` is the busy period `B_i`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, ServiceDistribution, ServiceSampler, Verdict, DEFAULT_EPSILON};
use crate::rng::{self, SimRng};
use crate::stats::{Estimate, Running};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeCaps {
    pub generations: usize,
    pub individuals: u64,
}

impl Default for TreeCaps {
    fn default() -> Self {
        Self { generations: 10_000, individuals: 10_000_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GwTreeSample {
    #[serde(rename = "ancestorClass")]
    pub ancestor_class: usize,
    /// Z_0, Z_1, ... as per-class counts.
    pub generations: Vec<Vec<u64>>,
    #[serde(rename = "totalLifetime")]
    pub total_lifetime: f64,
    pub individuals: u64,
    pub extinct: bool,
    /// `max{n : Z_n ≠ 0}` when extinct.
    pub depth: Option<usize>,
}

impl GwTreeSample {
    pub fn censored(&self) -> bool {
        !self.extinct
    }
}

/// Samples offspring for one model; built once per model.
pub struct TreeSampler<'a> {
    model: &'a Model,
    services: Vec<ServiceSampler>,
}

impl<'a> TreeSampler<'a> {
    pub fn new(model: &'a Model) -> Self {
        let services = model.spec().service.iter().map(ServiceDistribution::sampler).collect();
        Self { model, services }
    }

    pub fn service(&self, class: usize, rng: &mut SimRng) -> f64 {
        self.services[class].sample(rng)
    }

    /// Adds the children of one class-`class` individual with lifetime `s`.
    fn offspring(&self, class: usize, s: f64, next: &mut [u64], rng: &mut SimRng) -> u64 {
        let mut born = 0;
        for (j, slot) in next.iter_mut().enumerate() {
            let n = poisson(self.model.lambda()[(class, j)] * s, rng);
            *slot += n;
            born += n;
        }
        born
    }

    /// Breadth-first generation of the forest whose zeroth generation is
    /// `roots` (per-class counts).
    pub fn forest(&self, roots: &[u64], caps: TreeCaps, rng: &mut SimRng) -> (Vec<Vec<u64>>, f64, u64, bool) {
        let k = self.model.k();
        let mut generations = vec![roots.to_vec()];
        let mut total = 0.0;
        let mut individuals: u64 = roots.iter().sum();
        loop {
            let current = generations.last().expect("nonempty");
            if current.iter().all(|&n| n == 0) {
                generations.pop();
                return (generations, total, individuals, true);
            }
            if generations.len() > caps.generations || individuals > caps.individuals {
                return (generations, total, individuals, false);
            }
            let mut next = vec![0u64; k];
            let current = current.clone();
            for (class, &count) in current.iter().enumerate() {
                for _ in 0..count {
                    let s = self.service(class, rng);
                    total += s;
                    individuals += self.offspring(class, s, &mut next, rng);
                    if individuals > caps.individuals {
                        break;
                    }
                }
            }
            generations.push(next);
        }
    }

    pub fn tree(&self, ancestor: usize, caps: TreeCaps, rng: &mut SimRng) -> GwTreeSample {
        let mut roots = vec![0u64; self.model.k()];
        roots[ancestor] = 1;
        let (generations, total_lifetime, individuals, extinct) = self.forest(&roots, caps, rng);
        let depth = extinct.then(|| generations.len() - 1);
        GwTreeSample {
            ancestor_class: ancestor,
            generations,
            total_lifetime,
            individuals,
            extinct,
            depth,
        }
    }
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// One tree rooted at `ancestor`, drawn from stream 0 of `seed`.
pub fn sample_tree(model: &Model, ancestor: usize, caps: TreeCaps, seed: u64) -> GwTreeSample {
    TreeSampler::new(model).tree(ancestor, caps, &mut rng::stream(seed, 0))
}

/// `reps` independent trees; tree `r` uses stream `r` of `seed`.
pub fn sample_trees(model: &Model, ancestor: usize, caps: TreeCaps, reps: usize, seed: u64) -> Vec<GwTreeSample> {
    let sampler = TreeSampler::new(model);
    (0..reps)
        .into_par_iter()
        .map(|r| sampler.tree(ancestor, caps, &mut rng::stream(seed, r as u64)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassExtinction {
    pub class: usize,
    pub replications: usize,
    #[serde(rename = "extinctFraction")]
    pub extinct_fraction: f64,
    pub censored: usize,
    /// Over extinct trees only.
    #[serde(rename = "meanDepth")]
    pub mean_depth: Estimate,
    /// Over extinct trees only.
    #[serde(rename = "meanTotalLifetime")]
    pub mean_total_lifetime: Estimate,
    /// Fraction of trees with no children at all.
    #[serde(rename = "depthZeroFraction")]
    pub depth_zero_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtinctionStats {
    pub rho: f64,
    /// The ρ-based prediction: extinction with probability one iff ρ <= 1.
    #[serde(rename = "predictedCertainExtinction")]
    pub predicted_certain_extinction: bool,
    pub classes: Vec<ClassExtinction>,
    /// Whether every class agrees with the prediction (all trees extinct when
    /// predicted, some tree surviving the caps otherwise).
    pub consistent: bool,
}

pub fn extinction_stats(model: &Model, reps: usize, caps: TreeCaps, seed: u64) -> ExtinctionStats {
    let classes: Vec<ClassExtinction> =
        (0..model.k()).map(|class| class_extinction(model, class, reps, caps, seed)).collect();
    let predicted = model.verdict(DEFAULT_EPSILON) != Verdict::Unstable;
    let consistent = classes.iter().all(|c| {
        if predicted {
            c.extinct_fraction == 1.0
        } else {
            c.extinct_fraction < 1.0
        }
    });
    ExtinctionStats {
        rho: model.rho(),
        predicted_certain_extinction: predicted,
        classes,
        consistent,
    }
}

/// Statistics for trees rooted at one class; the stream matches the one
/// [`extinction_stats`] uses for that class.
pub fn class_extinction(model: &Model, class: usize, reps: usize, caps: TreeCaps, seed: u64) -> ClassExtinction {
    let trees = sample_trees(model, class, caps, reps, rng::derive_seed(seed, class as u64));
    summarize_class(class, &trees)
}

fn summarize_class(class: usize, trees: &[GwTreeSample]) -> ClassExtinction {
    let mut depth = Running::new();
    let mut life = Running::new();
    let mut censored = 0;
    let mut depth_zero = 0;
    for t in trees {
        match t.depth {
            Some(d) => {
                depth.push(d as f64);
                life.push(t.total_lifetime);
                if d == 0 {
                    depth_zero += 1;
                }
            }
            None => censored += 1,
        }
    }
    let n = trees.len().max(1) as f64;
    ClassExtinction {
        class,
        replications: trees.len(),
        extinct_fraction: (trees.len() - censored) as f64 / n,
        censored,
        mean_depth: depth.estimate(),
        mean_total_lifetime: life.estimate(),
        depth_zero_fraction: depth_zero as f64 / n,
    }
}

/// Closed-form busy-period expectations for ρ < 1.
#[derive(Debug, Clone, Serialize)]
pub struct ExpectationTable {
    /// `tau[i][j]` = expected time serving class `j` within `B_i`: `(I − M)⁻¹G⁻¹`.
    pub tau: Vec<Vec<f64>>,
    /// E B_i = Σ_j tau_ij.
    #[serde(rename = "meanBusy")]
    pub mean_busy: Vec<f64>,
    /// β_i = e_iᵀ Λ (I − M)⁻¹ G⁻¹ e.
    pub beta: Vec<f64>,
}

pub fn expectations(model: &Model) -> Result<ExpectationTable> {
    model.require_stable(DEFAULT_EPSILON)?;
    let k = model.k();
    let ginv = DMatrix::from_diagonal(&DVector::from_column_slice(model.means()));
    // (I − M)⁻¹ is entrywise nonnegative; negatives are rounding
    let tau = model.solve_i_minus_m(&ginv)?.map(|x| x.max(0.0));
    let mean_busy: Vec<f64> = (0..k).map(|i| tau.row(i).sum()).collect();
    // matrix route: Λ (I − M)⁻¹ G⁻¹ e
    let beta_matrix = model.lambda() * &tau * DVector::from_element(k, 1.0);
    Ok(ExpectationTable {
        tau: (0..k).map(|i| tau.row(i).iter().copied().collect()).collect(),
        mean_busy,
        beta: beta_matrix.iter().copied().collect(),
    })
}

impl ExpectationTable {
    /// β by the work-rate route Σ_j λ_ij E B_j.
    pub fn beta_from_rates(&self, model: &Model) -> Vec<f64> {
        (0..model.k())
            .map(|i| (0..model.k()).map(|j| model.lambda()[(i, j)] * self.mean_busy[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaledBusyPeriod {
    pub class: usize,
    pub z: f64,
    /// Estimate of E[B_{i;z}] / z.
    #[serde(rename = "meanRatio")]
    pub mean_ratio: Estimate,
    pub beta: f64,
    /// Replications in which a subtree hit the caps.
    pub censored: usize,
}

/// Busy periods started by one class-`class` customer with service `z`.
pub fn scaled_busy_period(model: &Model, class: usize, z: f64, reps: usize, seed: u64) -> Result<ScaledBusyPeriod> {
    model.require_stable(DEFAULT_EPSILON)?;
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidArgument("z must be positive".into()));
    }
    let table = expectations(model)?;
    let sampler = TreeSampler::new(model);
    let caps = TreeCaps::default();
    let draws: Vec<(f64, bool)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let mut roots = vec![0u64; model.k()];
            sampler.offspring(class, z, &mut roots, &mut rng);
            let (_, total, _, extinct) = sampler.forest(&roots, caps, &mut rng);
            ((z + total) / z, extinct)
        })
        .collect();
    let censored = draws.iter().filter(|d| !d.1).count();
    let ratio: Running = draws.iter().map(|d| d.0).collect();
    Ok(ScaledBusyPeriod {
        class,
        z,
        mean_ratio: ratio.estimate(),
        beta: table.beta[class],
        censored,
    })
}

/// Heavy-tail constants of P(B_i > x) ~ d_i F̄(x).
#[derive(Debug, Clone, Serialize)]
pub struct TailConstants {
    pub alpha: f64,
    #[serde(rename = "cTilde")]
    pub c_tilde: Vec<f64>,
    /// c_i = c̃_i (1 + β_i)^α.
    pub c: Vec<f64>,
    /// d = (I − M)⁻¹ c.
    pub d: Vec<f64>,
}

pub fn tail_constants(model: &Model, alpha: f64, c_tilde: &[f64]) -> Result<TailConstants> {
    model.require_stable(DEFAULT_EPSILON)?;
    let k = model.k();
    if c_tilde.len() != k || c_tilde.iter().any(|&c| !(c.is_finite() && c >= 0.0)) {
        return Err(Error::InvalidArgument(format!("cTilde must be {k} finite non-negative values")));
    }
    if !(alpha > 1.0) {
        return Err(Error::HypothesisNotSatisfied(format!("finite-mean reference needs alpha > 1, got {alpha}")));
    }
    if c_tilde.iter().all(|&c| c == 0.0) {
        return Err(Error::HypothesisNotSatisfied("c_k > 0 for some k fails".into()));
    }
    let beta = expectations(model)?.beta;
    let c: Vec<f64> = (0..k).map(|i| c_tilde[i] * (1.0 + beta[i]).powf(alpha)).collect();
    let d = model.solve_i_minus_m(&DMatrix::from_column_slice(k, 1, &c))?;
    Ok(TailConstants {
        alpha,
        c_tilde: c_tilde.to_vec(),
        c,
        d: d.iter().map(|&x| x.max(0.0)).collect(),
    })
}

/// Regularly varying reference tail F̄(x) = (scale/x)^α taken from the
/// heaviest Pareto class.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceTail {
    pub alpha: f64,
    pub scale: f64,
    /// c̃_i with F̄_i(x) ~ c̃_i F̄(x); zero for every lighter class.
    #[serde(rename = "cTilde")]
    pub c_tilde: Vec<f64>,
}

impl ReferenceTail {
    pub fn from_model(model: &Model) -> Option<Self> {
        let pareto: Vec<(usize, f64, f64)> = model
            .spec()
            .service
            .iter()
            .enumerate()
            .filter_map(|(i, d)| match *d {
                ServiceDistribution::Pareto { shape, scale } => Some((i, shape, scale)),
                _ => None,
            })
            .collect();
        let &(_, alpha, scale) = pareto.iter().min_by(|a, b| a.1.total_cmp(&b.1))?;
        let mut c_tilde = vec![0.0; model.k()];
        for &(i, shape, s) in &pareto {
            if shape == alpha {
                c_tilde[i] = (s / scale).powf(alpha);
            }
        }
        Some(Self { alpha, scale, c_tilde })
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= self.scale {
            1.0
        } else {
            (self.scale / x).powf(self.alpha)
        }
    }
}
