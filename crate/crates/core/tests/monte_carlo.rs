//! Monte Carlo checks of the samplers against closed forms. Seeds are fixed;
//! all comparisons use 3 standard errors unless stated.

mod common;

use csq_core::branching::{self, ReferenceTail, TreeCaps};
use csq_core::lst;
use csq_core::sim::{self, SimConfig, SimPolicy};
use csq_core::stats::{ks_critical, ks_statistic, Running};
use csq_core::{Model, ServiceDistribution};

use common::{example_k2, exp};

fn mm1() -> Model {
    Model::from_parts(vec![vec![0.5]], vec![0.5], vec![exp(1.0)]).unwrap()
}

fn mixed_k2() -> Model {
    Model::from_parts(
        vec![vec![0.2, 0.6], vec![0.3, 0.1]],
        vec![0.5, 0.5],
        vec![ServiceDistribution::Erlang { shape: 2, rate: 2.5 }, exp(1.5)],
    )
    .unwrap()
}

#[test]
fn first_generation_means_match_offspring_matrix() {
    let m = mixed_k2();
    for i in 0..2 {
        let trees = branching::sample_trees(&m, i, TreeCaps { generations: 1, individuals: u64::MAX }, 100_000, 11 + i as u64);
        for j in 0..2 {
            let z1: Running = trees.iter().map(|t| t.generations.get(1).map_or(0, |g| g[j]) as f64).collect();
            let z = z1.estimate().z_score(m.offspring().m[(i, j)]);
            assert!(z <= 3.0, "Z1 mean for ({i},{j}): z = {z}");
        }
    }
}

#[test]
fn depth_zero_probability_is_no_arrival_probability() {
    let m = mixed_k2();
    let stats = branching::extinction_stats(&m, 100_000, TreeCaps::default(), 5);
    for c in &stats.classes {
        let p = m.service(c.class).lst(m.lambda_bar(c.class));
        let se = (p * (1.0 - p) / c.replications as f64).sqrt();
        assert!((c.depth_zero_fraction - p).abs() <= 3.0 * se, "class {}: {} vs {p}", c.class, c.depth_zero_fraction);
    }
    assert!(stats.consistent);
}

#[test]
fn tree_lifetime_mean_is_mg1_busy_period() {
    let trees = branching::sample_trees(&mm1(), 0, TreeCaps::default(), 100_000, 21);
    let life: Running = trees.iter().map(|t| t.total_lifetime).collect();
    assert!(life.estimate().z_score(2.0) <= 3.0, "{:?}", life.estimate());
    assert!(trees.iter().all(|t| t.extinct && t.total_lifetime > 0.0));
}

#[test]
fn tree_transform_matches_lst() {
    let m = example_k2(2.0, 3.0, 1.5, 2.0);
    let thetas = [0.05, 0.3, 1.0, 3.0, 8.0];
    let grid = lst::solve_fixed_point(&m, &thetas, lst::DEFAULT_TOL, lst::DEFAULT_MAX_ITER).unwrap();
    for i in 0..2 {
        let lengths: Vec<f64> = branching::sample_trees(&m, i, TreeCaps::default(), 50_000, 31 + i as u64)
            .iter()
            .map(|t| t.total_lifetime)
            .collect();
        for (p, &theta) in thetas.iter().enumerate() {
            let z = sim::transform_estimate(&lengths, theta).z_score(grid.g[i][p]);
            assert!(z <= 3.0, "class {i} theta {theta}: z = {z}");
        }
    }
}

#[test]
fn no_offspring_trees_are_single_services() {
    let m = Model::from_parts(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, 1.0], vec![exp(2.0), exp(0.5)]).unwrap();
    let stats = branching::extinction_stats(&m, 2_000, TreeCaps::default(), 3);
    for c in &stats.classes {
        assert_eq!(c.extinct_fraction, 1.0);
        assert_eq!(c.mean_depth.mean, 0.0);
        assert_eq!(c.depth_zero_fraction, 1.0);
    }
    let scaled = branching::scaled_busy_period(&m, 1, 1e3, 100, 4).unwrap();
    assert_eq!(scaled.mean_ratio.mean, 1.0);
}

#[test]
fn simulated_mm1_busy_period_and_sigma() {
    let mut cfg = SimConfig::new(41);
    cfg.busy_period_target = Some(100_000);
    let run = sim::run(&mm1(), &cfg, None).unwrap();
    let length: Running = run.busy_periods.iter().map(|b| b.length).collect();
    let sigma: Running = run.busy_periods.iter().map(|b| b.sigma() as f64).collect();
    assert!(length.estimate().z_score(2.0) <= 3.0);
    assert!(sigma.estimate().z_score(2.0) <= 3.0);
}

#[test]
fn per_initiator_means_match_expectations() {
    let m = example_k2(2.0, 2.0, 1.0, 1.0);
    let bps = sim::sample_busy_periods(&m, &SimPolicy::FifoHeadOfLine, 1, 50_000, 51).unwrap();
    let cmp = sim::compare_mean_busy(&m, &bps);
    assert_eq!(cmp.len(), 1);
    assert!((cmp[0].expected - 1.0).abs() < 1e-12);
    assert!(cmp[0].z_score <= 3.0);
}

#[test]
fn busy_period_law_is_policy_invariant() {
    let m = mixed_k2();
    let n = 10_000;
    let lengths = |policy: SimPolicy, seed| -> Vec<f64> { sim::sample_busy_lengths(&m, &policy, 0, n, seed).unwrap() };
    let fifo = lengths(SimPolicy::FifoHeadOfLine, 61);
    let critical = ks_critical(n, n, 0.01);
    for (policy, seed) in [
        (SimPolicy::PriorityPreemptiveResume(vec![1, 0]), 62),
        (SimPolicy::PriorityNonPreemptive(vec![1, 0]), 63),
        (SimPolicy::PriorityPreemptiveResume(vec![0, 1]), 64),
    ] {
        let other = lengths(policy.clone(), seed);
        let d = ks_statistic(&fifo, &other);
        assert!(d <= critical, "{policy:?}: D = {d}, critical {critical}");
    }
}

#[test]
fn busy_periods_behave_as_iid_batches() {
    let mut cfg = SimConfig::new(71);
    cfg.busy_period_target = Some(50_000);
    let run = sim::run(&mixed_k2(), &cfg, None).unwrap();
    let lengths: Vec<f64> = run.busy_periods.iter().map(|b| b.length).collect();
    let all: Running = lengths.iter().copied().collect();
    let batches = 50;
    let size = lengths.len() / batches;
    let means: Running = lengths.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let ratio = means.variance() / (all.variance() / size as f64);
    // chi-square with 49 degrees of freedom, outside roughly 3 sigma
    assert!((0.4..1.7).contains(&ratio), "batch variance ratio {ratio}");
}

#[test]
fn event_log_satisfies_conservation() {
    let m = mixed_k2();
    let mut cfg = SimConfig::new(81);
    cfg.horizon = Some(300.0);
    cfg.policy = SimPolicy::PriorityPreemptiveResume(vec![1, 0]);
    let mut log = Vec::new();
    let run = sim::run(&m, &cfg, Some(&mut log)).unwrap();
    let text = String::from_utf8(log).unwrap();
    let mut q = [0i64; 2];
    let mut idle_since: Option<f64> = Some(0.0);
    let mut idle_total = 0.0;
    let mut last_t = 0.0;
    for line in text.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f.len(), 4, "{line}");
        let t: f64 = f[0].parse().unwrap();
        assert!(t >= last_t);
        last_t = t;
        let class: usize = f[2].parse().unwrap();
        match f[1] {
            "A" => {
                q[class - 1] += 1;
                if let Some(s) = idle_since.take() {
                    idle_total += t - s;
                }
            }
            "D" => q[class - 1] -= 1,
            "I" => {
                assert_eq!(class, 0);
                assert_eq!(q, [0, 0]);
                idle_since = Some(t);
            }
            "S" => assert!(q[class - 1] > 0),
            other => panic!("unknown event {other}"),
        }
        let logged: Vec<i64> = f[3].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(logged, q.to_vec(), "{line}");
    }
    if let Some(s) = idle_since {
        idle_total += 300.0 - s;
    }
    let s = &run.summary;
    assert!((idle_total - s.idle_time).abs() < 1e-9);
    assert!((s.service_time.iter().sum::<f64>() + s.idle_time - s.end_time).abs() < 1e-9);
    for j in 0..2 {
        assert_eq!(s.final_queue[j] as i64, q[j]);
    }
}

#[test]
fn probe_brackets_critical_scaling() {
    let m = example_k2(2.0, 2.0, 1.0, 1.0);
    let mut cfg = SimConfig::new(91);
    cfg.horizon = Some(20_000.0);
    let kappas = [0.5, 1.0, 1.6, 1.9, 2.1, 2.4, 3.0];
    let probe = sim::stability_probe(&m, &cfg, &kappas, 0.02).unwrap();
    assert!((probe.kappa_star - 2.0).abs() < 1e-12);
    let (lo, hi) = probe.bracket.expect("idle fraction crosses the threshold");
    assert!(lo <= 2.0 && 2.0 <= hi, "bracket ({lo}, {hi})");
    assert!(probe.rows[0].idle_fraction > 0.3);
    let last = probe.rows.last().unwrap();
    assert!(last.final_workload > probe.rows[0].final_workload);
}

#[test]
fn tail_ratio_without_offspring_is_c_tilde() {
    let m = Model::from_parts(vec![vec![0.0]], vec![1.0], vec![ServiceDistribution::pareto(2.0, 1.0)]).unwrap();
    let reference = ReferenceTail::from_model(&m).unwrap();
    let tc = branching::tail_constants(&m, 2.0, &reference.c_tilde).unwrap();
    assert_eq!(tc.d, vec![1.0]);
    let probe = sim::empirical_tail_ratio(&m, &SimPolicy::FifoHeadOfLine, 0, &[2.0, 5.0, 20.0], 200_000, 101, &reference, 1.0)
        .unwrap();
    for row in &probe.rows {
        let p = row.reference;
        let se = (p * (1.0 - p) / probe.replications as f64).sqrt();
        assert!((row.p_hat - p).abs() <= 3.0 * se, "{row:?}");
        assert!(!row.one_sided);
    }
}
