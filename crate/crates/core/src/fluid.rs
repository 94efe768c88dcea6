//! Fluid model: exact piecewise-linear trajectories, Lyapunov drain time and
//! weak-instability witnesses.
//!
//! While class `i` holds the server, `Q̇_j = λ_ij − μ_i·1{j = i}`. Policies
//! serve one class at a time and switch only when the served class empties,
//! so every segment ends at a time computed in closed form.
//!
//! Switching can accumulate: two classes that feed each other empty in turn
//! infinitely often before a finite time. Once a group of classes that must
//! drain before anything else is served holds a negligible amount, the rest
//! of its drain is applied in closed form, `D_S = (I − M_SSᵀ)⁻¹q_S`, which is
//! the exact limit of the remaining switches.
//!
//! At the empty state no single-class allocation is feasible, and the
//! trajectory follows the allocation forced by the dynamics
//! `Q̇ = (Mᵀ − I)Ḋ + Ẏλ₀`:
//!
//! - ρ < 1: `Ḋ = Ẏ (I − Mᵀ)⁻¹λ₀`, which keeps `Q = 0` with positive idling.
//! - ρ ≈ 1: `Ḋ ∝ wᵀ` for the left Perron vector `w`, no idling, `Q` stays 0.
//! - ρ > 1: the same Perron allocation, now with `Q̇ = (ρ − 1)Ḋ`, so the fluid
//!   leaves zero along the Perron direction until the horizon.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{left_perron_vector, Model, Verdict, DEFAULT_EPSILON};

pub const MAX_BREAKPOINTS: usize = 1_000_000;

/// Fraction of the largest mass seen below which a draining group is settled
/// in closed form.
const SETTLE_FRACTION: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Policy {
    /// Serve the first nonempty class in this order; switch when it empties.
    StaticPriority(Vec<usize>),
    /// Exhaustive round-robin over nonempty classes.
    ServeInTurn,
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::StaticPriority(p) => {
                let order: Vec<String> = p.iter().map(|c| (c + 1).to_string()).collect();
                format!("static-priority({})", order.join(","))
            }
            Policy::ServeInTurn => "serve-in-turn".to_string(),
        }
    }

    fn next_class(&self, q: &[f64], last: Option<usize>) -> Option<usize> {
        let k = q.len();
        match self {
            Policy::StaticPriority(order) => order.iter().copied().find(|&c| q[c] > 0.0),
            Policy::ServeInTurn => {
                let start = last.map_or(0, |c| c + 1);
                (0..k).map(|o| (start + o) % k).find(|&c| q[c] > 0.0)
            }
        }
    }

    /// Classes that empty completely before any other class is served once
    /// `class` holds the server.
    fn drain_group(&self, class: usize, k: usize) -> Vec<usize> {
        match self {
            Policy::StaticPriority(order) => {
                let pos = order.iter().position(|&c| c == class).expect("class is in the order");
                order[..=pos].to_vec()
            }
            Policy::ServeInTurn => (0..k).collect(),
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        if let Policy::StaticPriority(order) = self {
            let mut seen = vec![false; k];
            for &c in order {
                if c >= k || seen[c] {
                    return Err(Error::InvalidArgument(format!(
                        "priority order must be a permutation of the {k} classes"
                    )));
                }
                seen[c] = true;
            }
            if order.len() != k {
                return Err(Error::InvalidArgument(format!(
                    "priority order must be a permutation of the {k} classes"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidState {
    pub t: f64,
    pub q: Vec<f64>,
    /// Cumulative service allocation T_i(t).
    #[serde(rename = "tAlloc")]
    pub t_alloc: Vec<f64>,
    /// Cumulative idle time Y(t).
    pub y: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluidTrajectory {
    pub breakpoints: Vec<FluidState>,
    #[serde(rename = "drainTime")]
    pub drain_time: Option<f64>,
    #[serde(rename = "policyName")]
    pub policy_name: String,
}

impl FluidTrajectory {
    pub fn last(&self) -> &FluidState {
        self.breakpoints.last().expect("trajectory has a start point")
    }

    /// State at time `t` by interpolation between breakpoints.
    pub fn at(&self, t: f64) -> FluidState {
        let bp = &self.breakpoints;
        let idx = bp.partition_point(|s| s.t <= t);
        if idx == 0 {
            return bp[0].clone();
        }
        if idx == bp.len() {
            return bp[bp.len() - 1].clone();
        }
        let (a, b) = (&bp[idx - 1], &bp[idx]);
        let w = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
        let lerp = |x: f64, y: f64| x + w * (y - x);
        FluidState {
            t,
            q: a.q.iter().zip(&b.q).map(|(&x, &y)| lerp(x, y)).collect(),
            t_alloc: a.t_alloc.iter().zip(&b.t_alloc).map(|(&x, &y)| lerp(x, y)).collect(),
            y: lerp(a.y, b.y),
        }
    }

    /// Largest `‖Q(t) − Q(0) − (Mᵀ − I)D(t) − Y(t)λ₀‖∞` over breakpoints,
    /// with `D_i = μ_i T_i`.
    pub fn dynamics_residual(&self, model: &Model) -> f64 {
        let k = model.k();
        let mt = model.offspring().m.transpose() - DMatrix::identity(k, k);
        let q0 = DVector::from_column_slice(&self.breakpoints[0].q);
        self.breakpoints
            .iter()
            .map(|s| {
                let d = DVector::from_iterator(k, (0..k).map(|i| s.t_alloc[i] * model.mu(i)));
                let q = DVector::from_column_slice(&s.q);
                (q - &q0 - &mt * d - model.lambda0() * s.y).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Allocation used while the fluid sits at (or leaves) zero.
struct ZeroAllocation {
    t_dot: Vec<f64>,
    y_dot: f64,
    q_dot: Vec<f64>,
}

fn zero_allocation(model: &Model, epsilon: f64) -> Result<ZeroAllocation> {
    let k = model.k();
    let m = &model.offspring().m;
    match model.verdict(epsilon) {
        Verdict::Stable => {
            let a = DMatrix::identity(k, k) - m.transpose();
            let x = a.lu().solve(model.lambda0()).ok_or(Error::Singular("I - Mᵀ"))?;
            let per_idle: Vec<f64> = (0..k).map(|i| x[i] * model.mean_service(i)).collect();
            let y_dot = 1.0 / (1.0 + per_idle.iter().sum::<f64>());
            Ok(ZeroAllocation {
                t_dot: per_idle.iter().map(|v| v * y_dot).collect(),
                y_dot,
                q_dot: vec![0.0; k],
            })
        }
        verdict => {
            let w = left_perron_vector(m);
            let weights: Vec<f64> = (0..k).map(|i| w.vector[i] * model.mean_service(i)).collect();
            let total: f64 = weights.iter().sum();
            let t_dot: Vec<f64> = weights.iter().map(|x| x / total).collect();
            let q_dot = if verdict == Verdict::Boundary {
                vec![0.0; k]
            } else {
                // (Mᵀ − I) G Ṫ, which is (ρ − 1) Ḋ along the Perron direction
                let d_dot = DVector::from_iterator(k, (0..k).map(|i| t_dot[i] * model.mu(i)));
                let qd = (m.transpose() - DMatrix::identity(k, k)) * d_dot;
                qd.iter().map(|&x| x.max(0.0)).collect()
            };
            Ok(ZeroAllocation { t_dot, y_dot: 0.0, q_dot })
        }
    }
}

/// Integrates the fluid model from `q0` under `policy` up to `horizon`.
pub fn integrate(model: &Model, q0: &[f64], policy: &Policy, horizon: f64) -> Result<FluidTrajectory> {
    integrate_with(model, q0, policy, horizon, DEFAULT_EPSILON)
}

pub fn integrate_with(
    model: &Model,
    q0: &[f64],
    policy: &Policy,
    horizon: f64,
    epsilon: f64,
) -> Result<FluidTrajectory> {
    let k = model.k();
    if q0.len() != k || q0.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "initial fluid must be {k} finite non-negative levels"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument("horizon must be positive and finite".into()));
    }
    policy.check(k)?;

    let mass0: f64 = q0.iter().sum();
    let mut scale = mass0;
    let mut state = FluidState {
        t: 0.0,
        q: q0.to_vec(),
        t_alloc: vec![0.0; k],
        y: 0.0,
    };
    let mut breakpoints = vec![state.clone()];
    let mut drain_time = None;
    let mut served: Option<usize> = None;

    while state.t < horizon {
        if breakpoints.len() > MAX_BREAKPOINTS {
            return Err(Error::PolicyLivelock { breakpoints: MAX_BREAKPOINTS });
        }
        if state.q.iter().all(|&x| x == 0.0) {
            if drain_time.is_none() && model.verdict(epsilon) != Verdict::Unstable {
                drain_time = Some(state.t);
            }
            let alloc = zero_allocation(model, epsilon)?;
            let dt = horizon - state.t;
            for i in 0..k {
                state.q[i] += alloc.q_dot[i] * dt;
                state.t_alloc[i] += alloc.t_dot[i] * dt;
            }
            state.y += alloc.y_dot * dt;
            state.t = horizon;
            breakpoints.push(state.clone());
            break;
        }

        let class = match served.filter(|&c| state.q[c] > 0.0) {
            Some(c) => c,
            None => policy.next_class(&state.q, served).expect("some class is nonempty"),
        };
        served = Some(class);
        let total: f64 = state.q.iter().sum();
        scale = scale.max(total);
        let group = policy.drain_group(class, k);
        let group_mass: f64 = group.iter().map(|&i| state.q[i]).sum();
        if group_mass <= SETTLE_FRACTION * scale && settle(model, &mut state, &group, horizon) {
            served = None;
            breakpoints.push(state.clone());
            continue;
        }
        let net = model.mu(class) - model.lambda()[(class, class)];
        let (dt, empties) = if net > 0.0 {
            let full = state.q[class] / net;
            if state.t + full <= horizon {
                (full, true)
            } else {
                (horizon - state.t, false)
            }
        } else {
            (horizon - state.t, false)
        };
        for j in 0..k {
            if j != class {
                state.q[j] += model.lambda()[(class, j)] * dt;
            }
        }
        state.q[class] = if empties { 0.0 } else { (state.q[class] - net * dt).max(0.0) };
        state.t_alloc[class] += dt;
        state.t = if empties { state.t + dt } else { horizon };
        breakpoints.push(state.clone());
    }

    if drain_time.is_none() && state.q.iter().all(|&x| x == 0.0) && model.verdict(epsilon) != Verdict::Unstable {
        drain_time = Some(state.t);
    }
    if model.verdict(epsilon) == Verdict::Unstable {
        drain_time = first_empty_time(&breakpoints).filter(|_| mass0 > 0.0);
    }
    Ok(FluidTrajectory {
        breakpoints,
        drain_time,
        policy_name: policy.name(),
    })
}

/// Drains every class in `group` in closed form, leaving the others to
/// collect what it sends them. Returns false when the group cannot drain or
/// the drain would pass the horizon.
fn settle(model: &Model, state: &mut FluidState, group: &[usize], horizon: f64) -> bool {
    let n = group.len();
    let m = &model.offspring().m;
    let a = DMatrix::from_fn(n, n, |r, c| f64::from(u8::from(r == c)) - m[(group[c], group[r])]);
    let q = DVector::from_iterator(n, group.iter().map(|&i| state.q[i]));
    let Some(d) = a.lu().solve(&q) else { return false };
    if d.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return false;
    }
    let duration: f64 = group.iter().zip(d.iter()).map(|(&i, &di)| di * model.mean_service(i)).sum();
    if state.t + duration > horizon {
        return false;
    }
    for (&i, &di) in group.iter().zip(d.iter()) {
        state.t_alloc[i] += di * model.mean_service(i);
    }
    for j in (0..model.k()).filter(|j| !group.contains(j)) {
        state.q[j] += group.iter().zip(d.iter()).map(|(&i, &di)| m[(i, j)] * di).sum::<f64>();
    }
    for &i in group {
        state.q[i] = 0.0;
    }
    state.t += duration;
    true
}

fn first_empty_time(bp: &[FluidState]) -> Option<f64> {
    bp.iter().find(|s| s.q.iter().all(|&x| x == 0.0)).map(|s| s.t)
}

/// f(0) = eᵀ(I − Hᵀ)⁻¹G⁻¹q0, the policy-independent drain time.
pub fn lyapunov_drain_time(model: &Model, q0: &[f64]) -> Result<f64> {
    if q0.len() != model.k() {
        return Err(Error::InvalidArgument(format!("initial fluid must have {} levels", model.k())));
    }
    model.require_stable(DEFAULT_EPSILON)?;
    let c = model.drain_coefficients()?;
    Ok(c.iter().zip(q0).map(|(a, b)| a * b).sum())
}

/// Certificate that fluid work leaves zero when ρ > 1.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub rho: f64,
    /// Class whose work grows fastest under the probe allocation T = e·t.
    pub class: usize,
    /// ((Hᵀ − I)e)_class, the growth rate of W_class(t) per unit t.
    pub rate: f64,
    /// The full vector (Hᵀ − I)e.
    pub components: Vec<f64>,
    /// Left Perron vector w with wM = ρw.
    #[serde(rename = "leftPerron")]
    pub left_perron: Vec<f64>,
}

pub fn instability_witness(model: &Model) -> Result<WitnessReport> {
    let rho = model.rho();
    if model.verdict(DEFAULT_EPSILON) != Verdict::Unstable {
        return Err(Error::HypothesisNotSatisfied(format!("rho(M) > 1 fails (rho = {rho})")));
    }
    if !model.offspring().rows_positive() {
        return Err(Error::HypothesisNotSatisfied(
            "each row of M has at least one strictly positive element fails".into(),
        ));
    }
    let k = model.k();
    let ht = model.h().transpose() - DMatrix::identity(k, k);
    let components: Vec<f64> = (&ht * DVector::from_element(k, 1.0)).iter().copied().collect();
    let (class, rate) = components
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    if rate <= 0.0 {
        return Err(Error::Domain("no positive component of (Hᵀ − I)e".into()));
    }
    Ok(WitnessReport {
        rho,
        class,
        rate,
        components,
        left_perron: left_perron_vector(&model.offspring().m).vector,
    })
}
