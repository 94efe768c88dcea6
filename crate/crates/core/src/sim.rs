//! Event-driven simulation of the queue.
//!
//! While a class-`c` job is in service, class-`j` arrivals are Poisson with
//! rate `λ_cj`; while the server idles they arrive at rate `λ_0j`. Because
//! every clock is exponential, the engine redraws the time to the next arrival
//! after each event instead of keeping per-class clocks. Service requirements
//! are drawn when a job arrives so the workload is known at all times.
//!
//! Event log lines are `t<TAB>event<TAB>class<TAB>q_1,...,q_K` with `event`
//! one of `A` (arrival), `S` (service start or resumption), `D` (departure),
//! `I` (server becomes idle, class `0`). Classes are written 1-based and queue
//! lengths are the values after the event.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::branching::ReferenceTail;
use crate::error::{Error, Result};
use crate::model::{Model, ServiceDistribution, ServiceSampler, DEFAULT_EPSILON, Verdict};
use crate::rng::{self, SimRng};
use crate::stats::{wilson_interval, Estimate, Running};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub enum SimPolicy {
    /// Global first-come first-served, non-preemptive.
    #[default]
    FifoHeadOfLine,
    /// Highest-priority class first; an arrival of a higher class preempts
    /// and the interrupted job later resumes its remaining work.
    PriorityPreemptiveResume(Vec<usize>),
    /// Highest-priority class first at each service completion.
    PriorityNonPreemptive(Vec<usize>),
}

impl SimPolicy {
    fn order(&self) -> Option<&[usize]> {
        match self {
            SimPolicy::FifoHeadOfLine => None,
            SimPolicy::PriorityPreemptiveResume(o) | SimPolicy::PriorityNonPreemptive(o) => Some(o),
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        if let Some(order) = self.order() {
            let mut seen = vec![false; k];
            let ok = order.len() == k
                && order.iter().all(|&c| c < k && !std::mem::replace(&mut seen[c], true));
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "priority order must be a permutation of the {k} classes"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub policy: SimPolicy,
    /// Stop at this time.
    pub horizon: Option<f64>,
    /// Stop after this many completed busy periods.
    #[serde(rename = "busyPeriodTarget")]
    pub busy_period_target: Option<usize>,
    pub seed: u64,
    /// Time averages and busy-period records start after this time.
    pub warmup: f64,
    #[serde(rename = "maxEvents")]
    pub max_events: u64,
    /// Record the state every `sample_interval` time units.
    #[serde(rename = "sampleInterval")]
    pub sample_interval: Option<f64>,
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            policy: SimPolicy::FifoHeadOfLine,
            horizon: None,
            busy_period_target: None,
            seed,
            warmup: 0.0,
            max_events: 1_000_000_000,
            sample_interval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusyPeriodSample {
    pub length: f64,
    #[serde(rename = "initiatorClass")]
    pub initiator_class: usize,
    #[serde(rename = "customersServed")]
    pub customers_served: Vec<u64>,
    #[serde(rename = "maxWorkload")]
    pub max_workload: f64,
}

impl BusyPeriodSample {
    /// Number of customers served in the busy period.
    pub fn sigma(&self) -> u64 {
        self.customers_served.iter().sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSample {
    pub t: f64,
    pub q: Vec<u64>,
    pub w: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    #[serde(rename = "endTime")]
    pub end_time: f64,
    pub events: u64,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    #[serde(rename = "finalQueue")]
    pub final_queue: Vec<u64>,
    #[serde(rename = "finalWorkload")]
    pub final_workload: f64,
    /// T_i(t) at the end of the run.
    #[serde(rename = "serviceTime")]
    pub service_time: Vec<f64>,
    /// Y(t) at the end of the run.
    #[serde(rename = "idleTime")]
    pub idle_time: f64,
    #[serde(rename = "meanWorkload")]
    pub mean_workload: f64,
    #[serde(rename = "meanQueue")]
    pub mean_queue: Vec<f64>,
    #[serde(rename = "idleFraction")]
    pub idle_fraction: f64,
    /// The event cap stopped the run.
    pub truncated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimRun {
    pub summary: TraceSummary,
    #[serde(rename = "busyPeriods")]
    pub busy_periods: Vec<BusyPeriodSample>,
    pub samples: Vec<TraceSample>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    class: usize,
    remaining: f64,
    seq: u64,
}

/// Per-model simulator with samplers built once.
pub struct Simulator<'a> {
    model: &'a Model,
    policy: SimPolicy,
    services: Vec<ServiceSampler>,
    /// rank[class]; lower is served first.
    rank: Vec<usize>,
    lambda_bar: Vec<f64>,
    lambda0_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Arrival,
    Start,
    Departure,
    Idle,
}

impl Kind {
    fn code(self) -> char {
        match self {
            Kind::Arrival => 'A',
            Kind::Start => 'S',
            Kind::Departure => 'D',
            Kind::Idle => 'I',
        }
    }
}

struct State {
    t: f64,
    waiting: Vec<VecDeque<Job>>,
    in_service: Option<Job>,
    q: Vec<u64>,
    arrivals: Vec<u64>,
    departures: Vec<u64>,
    t_alloc: Vec<f64>,
    y: f64,
    workload: f64,
    seq: u64,
    events: u64,
    // current busy period
    bp_start: f64,
    bp_initiator: usize,
    bp_served: Vec<u64>,
    bp_max_w: f64,
}

impl State {
    fn new(k: usize) -> Self {
        Self {
            t: 0.0,
            waiting: vec![VecDeque::new(); k],
            in_service: None,
            q: vec![0; k],
            arrivals: vec![0; k],
            departures: vec![0; k],
            t_alloc: vec![0.0; k],
            y: 0.0,
            workload: 0.0,
            seq: 0,
            events: 0,
            bp_start: 0.0,
            bp_initiator: 0,
            bp_served: vec![0; k],
            bp_max_w: 0.0,
        }
    }

    fn empty(&self) -> bool {
        self.in_service.is_none()
    }
}

/// Time integrals accumulated after warmup.
#[derive(Default)]
struct Integrals {
    workload: f64,
    queue: Vec<f64>,
    idle: f64,
    elapsed: f64,
}

/// Optional observers of a full run.
struct Observers<'w> {
    trace: Option<&'w mut dyn Write>,
    warmup: f64,
    integrals: Integrals,
    sample_interval: Option<f64>,
    next_sample: f64,
    samples: Vec<TraceSample>,
}

impl<'w> Observers<'w> {
    fn none() -> Self {
        Self {
            trace: None,
            warmup: 0.0,
            integrals: Integrals::default(),
            sample_interval: None,
            next_sample: f64::INFINITY,
            samples: Vec::new(),
        }
    }
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a Model, policy: SimPolicy) -> Result<Self> {
        let k = model.k();
        policy.check(k)?;
        let mut rank: Vec<usize> = (0..k).collect();
        if let Some(order) = policy.order() {
            for (pos, &c) in order.iter().enumerate() {
                rank[c] = pos;
            }
        }
        Ok(Self {
            model,
            policy,
            services: model.spec().service.iter().map(ServiceDistribution::sampler).collect(),
            rank,
            lambda_bar: (0..k).map(|i| model.lambda_bar(i)).collect(),
            lambda0_total: model.lambda0().sum(),
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    fn arrival_rate(&self, st: &State, idle_arrivals: bool) -> f64 {
        match st.in_service {
            Some(job) => self.lambda_bar[job.class],
            None if idle_arrivals => self.lambda0_total,
            None => 0.0,
        }
    }

    fn arriving_class(&self, st: &State, total: f64, rng: &mut SimRng) -> usize {
        let k = self.model.k();
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for j in 0..k {
            let r = match st.in_service {
                Some(job) => self.model.lambda()[(job.class, j)],
                None => self.model.lambda0()[j],
            };
            if r > 0.0 {
                acc += r;
                last_positive = j;
                if u < acc {
                    return j;
                }
            }
        }
        last_positive
    }

    /// Picks the next waiting job according to the policy.
    fn select(&self, st: &mut State) -> Option<Job> {
        let k = self.model.k();
        let class = match self.policy {
            SimPolicy::FifoHeadOfLine => (0..k)
                .filter_map(|c| st.waiting[c].front().map(|j| (j.seq, c)))
                .min()
                .map(|(_, c)| c),
            _ => (0..k).filter(|&c| !st.waiting[c].is_empty()).min_by_key(|&c| self.rank[c]),
        }?;
        st.waiting[class].pop_front()
    }

    fn log(&self, obs: &mut Observers<'_>, st: &State, kind: Kind, class: Option<usize>) {
        if let Some(w) = obs.trace.as_deref_mut() {
            let q: Vec<String> = st.q.iter().map(u64::to_string).collect();
            let c = class.map_or(0, |c| c + 1);
            // a failing sink must not change simulation results
            let _ = writeln!(w, "{}\t{}\t{}\t{}", st.t, kind.code(), c, q.join(","));
        }
    }

    /// Moves time forward by `dt`, updating allocations and integrals.
    fn advance(&self, st: &mut State, obs: &mut Observers<'_>, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let busy = st.in_service.is_some();
        if let Some(interval) = obs.sample_interval {
            while obs.next_sample <= st.t + dt {
                let s = obs.next_sample - st.t;
                obs.samples.push(TraceSample {
                    t: obs.next_sample,
                    q: st.q.clone(),
                    w: if busy { (st.workload - s).max(0.0) } else { 0.0 },
                    y: if busy { st.y } else { st.y + s },
                });
                obs.next_sample += interval;
            }
        }
        let start = st.t;
        let end = st.t + dt;
        if end > obs.warmup {
            let from = start.max(obs.warmup);
            let span = end - from;
            let integ = &mut obs.integrals;
            integ.elapsed += span;
            if integ.queue.is_empty() {
                integ.queue = vec![0.0; st.q.len()];
            }
            for (acc, &n) in integ.queue.iter_mut().zip(&st.q) {
                *acc += n as f64 * span;
            }
            if busy {
                let w_from = st.workload - (from - start);
                integ.workload += w_from * span - 0.5 * span * span;
            } else {
                integ.idle += span;
            }
        }
        match st.in_service.as_mut() {
            Some(job) => {
                job.remaining -= dt;
                st.t_alloc[job.class] += dt;
                st.workload = (st.workload - dt).max(0.0);
            }
            None => st.y += dt,
        }
        st.t = end;
    }

    fn arrive(&self, st: &mut State, obs: &mut Observers<'_>, class: usize, rng: &mut SimRng) -> bool {
        let work = self.services[class].sample(rng);
        st.seq += 1;
        let job = Job { class, remaining: work, seq: st.seq };
        st.q[class] += 1;
        st.arrivals[class] += 1;
        st.workload += work;
        st.events += 1;
        self.log(obs, st, Kind::Arrival, Some(class));
        let started_busy_period = st.empty();
        match st.in_service {
            None => {
                st.bp_start = st.t;
                st.bp_initiator = class;
                st.bp_served.iter_mut().for_each(|n| *n = 0);
                st.bp_max_w = st.workload;
                st.in_service = Some(job);
                self.log(obs, st, Kind::Start, Some(class));
            }
            Some(current) => {
                st.bp_max_w = st.bp_max_w.max(st.workload);
                let preempts = matches!(self.policy, SimPolicy::PriorityPreemptiveResume(_))
                    && self.rank[class] < self.rank[current.class];
                if preempts {
                    st.waiting[current.class].push_front(current);
                    st.in_service = Some(job);
                    self.log(obs, st, Kind::Start, Some(class));
                } else {
                    st.waiting[class].push_back(job);
                }
            }
        }
        started_busy_period
    }

    /// Completes the job in service; returns the finished busy period if the
    /// system emptied.
    fn depart(&self, st: &mut State, obs: &mut Observers<'_>) -> Option<BusyPeriodSample> {
        let job = st.in_service.take().expect("departure needs a job in service");
        st.q[job.class] -= 1;
        st.departures[job.class] += 1;
        st.bp_served[job.class] += 1;
        st.events += 1;
        self.log(obs, st, Kind::Departure, Some(job.class));
        match self.select(st) {
            Some(next) => {
                st.in_service = Some(next);
                self.log(obs, st, Kind::Start, Some(next.class));
                None
            }
            None => {
                st.workload = 0.0;
                self.log(obs, st, Kind::Idle, None);
                Some(BusyPeriodSample {
                    length: st.t - st.bp_start,
                    initiator_class: st.bp_initiator,
                    customers_served: st.bp_served.clone(),
                    max_workload: st.bp_max_w,
                })
            }
        }
    }

    /// One event, or time advanced to `limit` if the next event lies beyond
    /// it. Returns `None` when nothing can happen any more.
    fn step(
        &self,
        st: &mut State,
        obs: &mut Observers<'_>,
        rng: &mut SimRng,
        idle_arrivals: bool,
        limit: f64,
    ) -> Option<Step> {
        let rate = self.arrival_rate(st, idle_arrivals);
        let to_arrival = if rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            e / rate
        } else {
            f64::INFINITY
        };
        let to_departure = st.in_service.map_or(f64::INFINITY, |j| j.remaining.max(0.0));
        let dt = to_arrival.min(to_departure);
        if !dt.is_finite() {
            return None;
        }
        if st.t + dt > limit {
            self.advance(st, obs, limit - st.t);
            return Some(Step::Limit);
        }
        self.advance(st, obs, dt);
        if to_arrival < to_departure {
            let class = self.arriving_class(st, rate, rng);
            self.arrive(st, obs, class, rng);
            Some(Step::Arrival)
        } else {
            Some(match self.depart(st, obs) {
                Some(bp) => Step::Emptied(bp),
                None => Step::Departure,
            })
        }
    }

    /// A busy period started by one class-`initiator` customer arriving to an
    /// empty system.
    pub fn busy_period(&self, initiator: usize, rng: &mut SimRng) -> BusyPeriodSample {
        let mut st = State::new(self.model.k());
        let mut obs = Observers::none();
        self.arrive(&mut st, &mut obs, initiator, rng);
        loop {
            match self.step(&mut st, &mut obs, rng, false, f64::INFINITY) {
                Some(Step::Emptied(bp)) => return bp,
                Some(_) => {}
                None => unreachable!("a busy system always has a departure pending"),
            }
        }
    }

    /// Full run driven by λ₀ from the empty state.
    pub fn run(&self, config: &SimConfig, trace: Option<&mut dyn Write>) -> Result<SimRun> {
        if config.horizon.is_none() && config.busy_period_target.is_none() {
            return Err(Error::InvalidArgument("a run needs a horizon or a busy-period target".into()));
        }
        if !self.model.can_restart() {
            return Err(Error::InvalidArgument(
                "lambda0 is all zero: system cannot restart from empty".into(),
            ));
        }
        let k = self.model.k();
        let mut rng = rng::stream(config.seed, 0);
        let mut st = State::new(k);
        let mut obs = Observers {
            trace,
            warmup: config.warmup,
            integrals: Integrals { queue: vec![0.0; k], ..Integrals::default() },
            sample_interval: config.sample_interval,
            next_sample: if config.sample_interval.is_some() { 0.0 } else { f64::INFINITY },
            samples: Vec::new(),
        };
        let horizon = config.horizon.unwrap_or(f64::INFINITY);
        let target = config.busy_period_target.unwrap_or(usize::MAX);
        let mut busy_periods = Vec::new();
        let mut truncated = false;
        while st.t < horizon && busy_periods.len() < target {
            if st.events >= config.max_events {
                truncated = true;
                break;
            }
            match self.step(&mut st, &mut obs, &mut rng, true, horizon) {
                Some(Step::Emptied(bp)) => {
                    if st.t - bp.length >= config.warmup {
                        busy_periods.push(bp);
                    }
                }
                Some(Step::Limit) | None => break,
                Some(_) => {}
            }
        }
        if let Some(w) = obs.trace.as_deref_mut() {
            let _ = w.flush();
        }
        let integ = &obs.integrals;
        let span = integ.elapsed.max(f64::MIN_POSITIVE);
        let summary = TraceSummary {
            end_time: st.t,
            events: st.events,
            arrivals: st.arrivals.clone(),
            departures: st.departures.clone(),
            final_queue: st.q.clone(),
            final_workload: st.workload,
            service_time: st.t_alloc.clone(),
            idle_time: st.y,
            mean_workload: integ.workload / span,
            mean_queue: integ.queue.iter().map(|x| x / span).collect(),
            idle_fraction: integ.idle / span,
            truncated,
        };
        Ok(SimRun { summary, busy_periods, samples: obs.samples })
    }
}

enum Step {
    Arrival,
    Departure,
    Emptied(BusyPeriodSample),
    Limit,
}

/// Full run from an empty system; see [`Simulator::run`].
pub fn run(model: &Model, config: &SimConfig, trace: Option<&mut dyn Write>) -> Result<SimRun> {
    Simulator::new(model, config.policy.clone())?.run(config, trace)
}

/// `n` independent busy periods with a forced class-`initiator` start;
/// replication `r` uses stream `r` of `seed`.
pub fn sample_busy_periods(
    model: &Model,
    policy: &SimPolicy,
    initiator: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<BusyPeriodSample>> {
    let sim = Simulator::new(model, policy.clone())?;
    Ok((0..n)
        .into_par_iter()
        .map(|r| sim.busy_period(initiator, &mut rng::stream(seed, r as u64)))
        .collect())
}

/// Busy-period lengths only, for large tail experiments.
pub fn sample_busy_lengths(model: &Model, policy: &SimPolicy, initiator: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    let sim = Simulator::new(model, policy.clone())?;
    Ok((0..n)
        .into_par_iter()
        .map(|r| sim.busy_period(initiator, &mut rng::stream(seed, r as u64)).length)
        .collect())
}

/// Summary of forced-initiator busy periods.
#[derive(Debug, Clone, Serialize)]
pub struct BusyPeriodStats {
    pub class: usize,
    pub length: Estimate,
    pub sigma: Estimate,
}

pub fn summarize_busy_periods(class: usize, samples: &[BusyPeriodSample]) -> BusyPeriodStats {
    let length: Running = samples.iter().map(|b| b.length).collect();
    let sigma: Running = samples.iter().map(|b| b.sigma() as f64).collect();
    BusyPeriodStats {
        class,
        length: length.estimate(),
        sigma: sigma.estimate(),
    }
}

/// Monte Carlo estimate of E[e^{−θ B}] from busy-period lengths.
pub fn transform_estimate(lengths: &[f64], theta: f64) -> Estimate {
    lengths.iter().map(|&b| (-theta * b).exp()).collect::<Running>().estimate()
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub x: f64,
    pub exceedances: u64,
    #[serde(rename = "pHat")]
    pub p_hat: f64,
    /// Reference tail F̄(x).
    pub reference: f64,
    /// pHat / F̄(x).
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    /// Too few exceedances for a lower bound; `lower` is zero.
    #[serde(rename = "oneSided")]
    pub one_sided: bool,
    #[serde(rename = "dInside")]
    pub d_inside: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailProbe {
    pub class: usize,
    pub replications: usize,
    pub d: f64,
    pub rows: Vec<TailRow>,
}

/// Exceedances needed before the band gets a lower side.
pub const MIN_EXCEEDANCES: u64 = 10;
const WILSON_Z: f64 = 1.959_963_984_540_054;

impl TailProbe {
    /// Ratio curve from already-sampled busy-period lengths.
    pub fn from_lengths(class: usize, lengths: &[f64], x_grid: &[f64], reference: &ReferenceTail, d: f64) -> Self {
        let n = lengths.len() as u64;
        let rows = x_grid
            .iter()
            .map(|&x| {
                let exceedances = lengths.iter().filter(|&&b| b > x).count() as u64;
                let p_hat = exceedances as f64 / n.max(1) as f64;
                let reference_tail = reference.survival(x);
                let (lo, hi) = wilson_interval(exceedances, n, WILSON_Z);
                let one_sided = exceedances < MIN_EXCEEDANCES;
                let lower = if one_sided { 0.0 } else { lo / reference_tail };
                let upper = hi / reference_tail;
                TailRow {
                    x,
                    exceedances,
                    p_hat,
                    reference: reference_tail,
                    ratio: p_hat / reference_tail,
                    lower,
                    upper,
                    one_sided,
                    d_inside: lower <= d && d <= upper,
                }
            })
            .collect();
        Self { class, replications: lengths.len(), d, rows }
    }
}

/// Empirical P(B_i > x) / F̄(x) against the constant d_i.
pub fn empirical_tail_ratio(
    model: &Model,
    policy: &SimPolicy,
    class: usize,
    x_grid: &[f64],
    reps: usize,
    seed: u64,
    reference: &ReferenceTail,
    d: f64,
) -> Result<TailProbe> {
    model.require_stable(DEFAULT_EPSILON)?;
    let lengths = sample_busy_lengths(model, policy, class, reps, seed)?;
    Ok(TailProbe::from_lengths(class, &lengths, x_grid, reference, d))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow {
    pub kappa: f64,
    pub rho: f64,
    #[serde(rename = "meanWorkload")]
    pub mean_workload: f64,
    #[serde(rename = "idleFraction")]
    pub idle_fraction: f64,
    #[serde(rename = "finalWorkload")]
    pub final_workload: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityProbe {
    /// κ* with ρ(κ* M) = 1.
    #[serde(rename = "kappaStar")]
    pub kappa_star: f64,
    pub rows: Vec<ProbeRow>,
    /// Consecutive sweep values around the first κ whose idle fraction drops
    /// below the threshold.
    pub bracket: Option<(f64, f64)>,
    #[serde(rename = "idleThreshold")]
    pub idle_threshold: f64,
}

/// Runs the queue with Λ scaled by each κ in `kappas` (sorted ascending).
pub fn stability_probe(model: &Model, config: &SimConfig, kappas: &[f64], idle_threshold: f64) -> Result<StabilityProbe> {
    let rows: Vec<ProbeRow> = kappas
        .par_iter()
        .enumerate()
        .map(|(idx, &kappa)| {
            let scaled = model.scaled(kappa)?;
            let cfg = SimConfig { seed: rng::derive_seed(config.seed, idx as u64), ..config.clone() };
            let out = run(&scaled, &cfg, None)?;
            Ok(ProbeRow {
                kappa,
                rho: scaled.rho(),
                mean_workload: out.summary.mean_workload,
                idle_fraction: out.summary.idle_fraction,
                final_workload: out.summary.final_workload,
            })
        })
        .collect::<Result<_>>()?;
    let bracket = rows
        .windows(2)
        .find(|w| w[0].idle_fraction >= idle_threshold && w[1].idle_fraction < idle_threshold)
        .map(|w| (w[0].kappa, w[1].kappa));
    let rho = model.rho();
    Ok(StabilityProbe {
        kappa_star: if rho > 0.0 { 1.0 / rho } else { f64::INFINITY },
        rows,
        bracket,
        idle_threshold,
    })
}

/// Per-class forced-initiator statistics with closed-form comparisons.
#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub class: usize,
    pub simulated: Estimate,
    pub expected: f64,
    #[serde(rename = "zScore")]
    pub z_score: f64,
}

/// Compares mean busy periods per initiator class with E B_i when ρ < 1.
pub fn compare_mean_busy(model: &Model, samples: &[BusyPeriodSample]) -> Vec<OracleComparison> {
    if model.verdict(DEFAULT_EPSILON) != Verdict::Stable {
        return Vec::new();
    }
    let Ok(table) = crate::branching::expectations(model) else {
        return Vec::new();
    };
    (0..model.k())
        .filter_map(|class| {
            let r: Running = samples.iter().filter(|b| b.initiator_class == class).map(|b| b.length).collect();
            (r.count() > 1).then(|| {
                let est = r.estimate();
                OracleComparison {
                    class,
                    simulated: est,
                    expected: table.mean_busy[class],
                    z_score: est.z_score(table.mean_busy[class]),
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(r: f64) -> ServiceDistribution {
        ServiceDistribution::exponential(r)
    }

    fn mm1(l: f64, mu: f64) -> Model {
        Model::from_parts(vec![vec![l]], vec![l], vec![exp(mu)]).unwrap()
    }

    #[test]
    fn no_in_service_arrivals_single_customer() {
        let m = Model::from_parts(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, 1.0], vec![exp(1.0), exp(2.0)])
            .unwrap();
        let mut cfg = SimConfig::new(9);
        cfg.busy_period_target = Some(500);
        let out = run(&m, &cfg, None).unwrap();
        assert_eq!(out.busy_periods.len(), 500);
        assert!(out.busy_periods.iter().all(|b| b.sigma() == 1));
    }

    #[test]
    fn busy_period_basic_invariants() {
        let m = mm1(0.5, 1.0);
        let bps = sample_busy_periods(&m, &SimPolicy::FifoHeadOfLine, 0, 1000, 3).unwrap();
        for b in &bps {
            assert!(b.length > 0.0);
            assert!(b.customers_served[0] >= 1);
            assert!(b.max_workload > 0.0);
        }
    }

    #[test]
    fn conservation_at_end_of_run() {
        let m = Model::from_parts(
            vec![vec![0.2, 0.3], vec![0.4, 0.1]],
            vec![0.5, 0.2],
            vec![exp(1.5), ServiceDistribution::Erlang { shape: 2, rate: 3.0 }],
        )
        .unwrap();
        let mut cfg = SimConfig::new(1);
        cfg.horizon = Some(500.0);
        cfg.policy = SimPolicy::PriorityPreemptiveResume(vec![1, 0]);
        let out = run(&m, &cfg, None).unwrap();
        let s = &out.summary;
        for j in 0..2 {
            assert_eq!(s.final_queue[j], s.arrivals[j] - s.departures[j]);
        }
        let total: f64 = s.service_time.iter().sum::<f64>() + s.idle_time;
        assert!((total - s.end_time).abs() < 1e-9);
        assert_eq!(s.end_time, 500.0);
    }

    #[test]
    fn runs_are_deterministic() {
        let m = mm1(0.6, 1.0);
        let mut cfg = SimConfig::new(77);
        cfg.horizon = Some(200.0);
        let mut a = Vec::new();
        let mut b = Vec::new();
        run(&m, &cfg, Some(&mut a)).unwrap();
        run(&m, &cfg, Some(&mut b)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_configs() {
        let m = mm1(0.5, 1.0);
        assert!(run(&m, &SimConfig::new(1), None).is_err());
        let no_restart = Model::from_parts(vec![vec![0.5]], vec![0.0], vec![exp(1.0)]).unwrap();
        let mut cfg = SimConfig::new(1);
        cfg.horizon = Some(1.0);
        assert!(run(&no_restart, &cfg, None).is_err());
        assert!(Simulator::new(&m, SimPolicy::PriorityNonPreemptive(vec![1])).is_err());
    }

    #[test]
    fn samples_on_interval() {
        let m = mm1(0.5, 1.0);
        let mut cfg = SimConfig::new(4);
        cfg.horizon = Some(10.0);
        cfg.sample_interval = Some(1.0);
        let out = run(&m, &cfg, None).unwrap();
        assert_eq!(out.samples.len(), 11);
        assert!(out.samples.windows(2).all(|w| w[1].y >= w[0].y));
    }

    #[test]
    fn tail_probe_bands() {
        let reference = ReferenceTail { alpha: 2.0, scale: 1.0, c_tilde: vec![1.0] };
        let lengths: Vec<f64> = (1..=1000).map(|i| i as f64 / 100.0).collect();
        let p = TailProbe::from_lengths(0, &lengths, &[2.0, 9.95], &reference, 4.0);
        assert_eq!(p.rows[0].exceedances, 800);
        assert!((p.rows[0].ratio - 0.8 * 4.0).abs() < 1e-12);
        assert!(p.rows[1].one_sided);
        assert_eq!(p.rows[1].lower, 0.0);
    }
}
