use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use csq_core::branching::{self, ReferenceTail, TreeCaps};
use csq_core::fluid::{self, Policy};
use csq_core::lst;
use csq_core::model::DEFAULT_EPSILON;
use csq_core::sim::{self, BusyPeriodSample, SimConfig, SimPolicy, TailProbe};
use csq_core::stats::{quantile_sorted, Running};
use csq_core::{Model, ModelSpec, Verdict};
use serde_json::{json, Value};

use crate::args::{
    BranchingArgs, FluidArgs, FluidPolicy, LstArgs, PolicyArgs, SimPolicyArg, SimulateArgs, StabilityArgs, TailArgs,
};
use crate::output::{cells, num, numbered, CliError, CliResult, Report, Table};

pub fn parse_spec(bytes: &[u8]) -> CliResult<ModelSpec> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Validation(format!("cannot parse model file: {e}")))
}

pub fn load_model(bytes: &[u8]) -> CliResult<Model> {
    Ok(Model::new(parse_spec(bytes)?)?)
}

fn class_index(class: usize, k: usize) -> CliResult<usize> {
    if (1..=k).contains(&class) {
        Ok(class - 1)
    } else {
        Err(CliError::Usage(format!("class must be between 1 and {k}, got {class}")))
    }
}

fn order(order: &Option<Vec<usize>>, k: usize) -> CliResult<Vec<usize>> {
    match order {
        None => Ok((0..k).collect()),
        Some(o) => o.iter().map(|&c| class_index(c, k)).collect(),
    }
}

fn sim_policy(args: &PolicyArgs, k: usize) -> CliResult<SimPolicy> {
    Ok(match args.policy {
        SimPolicyArg::Fifo => SimPolicy::FifoHeadOfLine,
        SimPolicyArg::Preemptive => SimPolicy::PriorityPreemptiveResume(order(&args.order, k)?),
        SimPolicyArg::NonPreemptive => SimPolicy::PriorityNonPreemptive(order(&args.order, k)?),
    })
}

fn policy_name(p: &SimPolicy) -> String {
    let names = |o: &[usize]| o.iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(",");
    match p {
        SimPolicy::FifoHeadOfLine => "fifo".into(),
        SimPolicy::PriorityPreemptiveResume(o) => format!("preemptive({})", names(o)),
        SimPolicy::PriorityNonPreemptive(o) => format!("non-preemptive({})", names(o)),
    }
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn require_positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name} must be positive and finite, got {v}")))
    }
}

pub fn validate(bytes: &[u8]) -> CliResult<Report> {
    let spec = parse_spec(bytes)?;
    let violations = spec.validate();
    let mut table = Table::new(["violation", "fatal", "message"]);
    let list: Vec<Value> = violations
        .iter()
        .map(|v| {
            let kind = serde_json::to_value(v).ok().and_then(|x| x["violation"].as_str().map(String::from)).unwrap_or_default();
            table.push(vec![kind.clone(), v.is_fatal().to_string(), v.to_string()]);
            json!({ "violation": kind, "fatal": v.is_fatal(), "message": v.to_string() })
        })
        .collect();
    let mut report = Report::new(json!({ "valid": violations.is_empty(), "k": spec.k, "violations": list }), table);
    if !violations.is_empty() {
        report.failure = Some(CliError::Validation(format!("{} violation(s)", violations.len())));
    }
    Ok(report)
}

pub fn stability(model: &Model, args: &StabilityArgs) -> CliResult<Report> {
    if !(args.epsilon >= 0.0 && args.epsilon < 1.0) {
        return Err(CliError::Usage(format!("--epsilon must be in [0, 1), got {}", args.epsilon)));
    }
    let k = model.k();
    let report = model.classify(args.epsilon)?;
    let mut summary = serde_json::to_value(&report).map_err(|e| CliError::Numeric(e.to_string()))?;
    summary["k"] = json!(k);
    summary["offspringMatrix"] = json!(matrix_rows(&model.offspring().m));
    let mut header = vec!["rho".to_string(), "verdict".into(), "epsilon".into(), "irreducible".into(), "rows_positive".into()];
    header.extend(numbered("drain_coefficient", k));
    let mut table = Table::new(header);
    let mut row = vec![
        num(report.rho),
        format!("{:?}", report.verdict),
        num(report.epsilon),
        report.irreducible.to_string(),
        report.rows_positive.to_string(),
    ];
    match &report.drain_coefficients {
        Some(c) => row.extend(cells(c)),
        None => row.extend(std::iter::repeat_n(String::new(), k)),
    }
    table.push(row);
    Ok(Report::new(summary, table))
}

pub fn fluid(model: &Model, args: &FluidArgs) -> CliResult<Report> {
    let k = model.k();
    if args.q0.len() != k {
        return Err(CliError::Usage(format!("--q0 needs {k} values, got {}", args.q0.len())));
    }
    let policy = match args.policy {
        FluidPolicy::StaticPriority => Policy::StaticPriority(order(&args.order, k)?),
        FluidPolicy::ServeInTurn => Policy::ServeInTurn,
    };
    let verdict = model.verdict(DEFAULT_EPSILON);
    let lyapunov = if verdict == Verdict::Stable { Some(fluid::lyapunov_drain_time(model, &args.q0)?) } else { None };
    let horizon = match (args.horizon, lyapunov) {
        (Some(h), _) => h,
        (None, Some(f)) => 2.0 * f + 1.0,
        (None, None) => return Err(CliError::Usage("--horizon is required unless the model is stable".into())),
    };
    require_positive("horizon", horizon)?;
    let traj = fluid::integrate(model, &args.q0, &policy, horizon)?;
    let last = traj.last();
    let witness = if verdict == Verdict::Unstable && model.offspring().rows_positive() {
        let w = fluid::instability_witness(model)?;
        json!({ "class": w.class + 1, "rate": w.rate, "components": w.components, "leftPerron": w.left_perron })
    } else {
        Value::Null
    };
    let summary = json!({
        "rho": model.rho(),
        "verdict": verdict,
        "policy": traj.policy_name,
        "horizon": horizon,
        "drainTime": traj.drain_time,
        "lyapunovDrainTime": lyapunov,
        "breakpoints": traj.breakpoints.len(),
        "final": last,
        "dynamicsResidual": traj.dynamics_residual(model),
        "witness": witness,
    });
    let mut header = vec!["t".to_string()];
    header.extend(numbered("Q", k));
    header.push("Y".into());
    let mut table = Table::new(header);
    for s in &traj.breakpoints {
        let mut row = vec![num(s.t)];
        row.extend(cells(&s.q));
        row.push(num(s.y));
        table.push(row);
    }
    Ok(Report::new(summary, table))
}

pub fn lst(model: &Model, args: &LstArgs) -> CliResult<Report> {
    require_positive("theta-min", args.theta_min)?;
    require_positive("tol", args.tol)?;
    if !(args.theta_max > args.theta_min && args.theta_max.is_finite()) || args.points < 2 {
        return Err(CliError::Usage("need --theta-max > --theta-min and --points >= 2".into()));
    }
    let k = model.k();
    let thetas = lst::geometric_grid(args.theta_min, args.theta_max, args.points);
    let grid = lst::solve_fixed_point(model, &thetas, args.tol, args.max_iter)?;
    let moments = if model.verdict(DEFAULT_EPSILON) == Verdict::Stable {
        let est = lst::moments_from_lst(model)?;
        let table = branching::expectations(model)?;
        json!({ "meanBusy": est.mean, "error": est.error, "closedForm": table.mean_busy })
    } else {
        Value::Null
    };
    let summary = json!({
        "rho": model.rho(),
        "tol": grid.tol,
        "points": thetas.len(),
        "maxResidual": grid.residual.iter().copied().fold(0.0, f64::max),
        "maxIterations": grid.iterations.iter().copied().max(),
        "monotone": grid.monotone,
        "nonIncreasing": grid.non_increasing(),
        "moments": moments,
        "thetas": grid.thetas,
        "g": grid.g,
    });
    let mut header = vec!["theta".to_string()];
    header.extend(numbered("g", k));
    header.push("residual".into());
    let mut table = Table::new(header);
    for (p, theta) in grid.thetas.iter().enumerate() {
        let mut row = vec![num(*theta)];
        row.extend(cells(&grid.column(p)));
        row.push(num(grid.residual[p]));
        table.push(row);
    }
    Ok(Report::new(summary, table))
}

pub fn branching(model: &Model, args: &BranchingArgs) -> CliResult<Report> {
    let k = model.k();
    let classes: Vec<usize> = match args.class {
        Some(c) => vec![class_index(c, k)?],
        None => (0..k).collect(),
    };
    if args.reps == 0 || args.cap_gen == 0 || args.cap_ind == 0 {
        return Err(CliError::Usage("--reps, --cap-gen and --cap-ind must be positive".into()));
    }
    let caps = TreeCaps { generations: args.cap_gen, individuals: args.cap_ind };
    let stable = model.verdict(DEFAULT_EPSILON) == Verdict::Stable;
    let predicted = model.verdict(DEFAULT_EPSILON) != Verdict::Unstable;
    let table_cf = if stable { Some(branching::expectations(model)?) } else { None };
    let tail = match (&args.alpha, &args.c_tilde) {
        (Some(alpha), Some(ct)) if stable => {
            if ct.len() != k {
                return Err(CliError::Usage(format!("--c-tilde needs {k} values")));
            }
            Some(branching::tail_constants(model, *alpha, ct)?)
        }
        (Some(_), _) => return Err(CliError::Numeric("tail constants need rho < 1".into())),
        _ => match ReferenceTail::from_model(model) {
            Some(r) if stable && r.alpha > 1.0 => Some(branching::tail_constants(model, r.alpha, &r.c_tilde)?),
            _ => None,
        },
    };
    let mut per_class = Vec::new();
    let mut table = Table::new([
        "class",
        "replications",
        "extinct_fraction",
        "censored",
        "mean_depth",
        "mean_busy_mc",
        "mean_busy_mc_stderr",
        "mean_busy_closed_form",
        "beta",
        "d",
    ]);
    let mut consistent = true;
    for &class in &classes {
        let c = branching::class_extinction(model, class, args.reps, caps, args.seed);
        consistent &= if predicted { c.extinct_fraction == 1.0 } else { c.extinct_fraction < 1.0 };
        let closed = table_cf.as_ref().map(|t| t.mean_busy[class]);
        let beta = table_cf.as_ref().map(|t| t.beta[class]);
        let d = tail.as_ref().map(|t| t.d[class]);
        let scaled = match args.z {
            Some(z) if stable => {
                let s = branching::scaled_busy_period(model, class, z, args.reps, args.seed)?;
                json!({ "z": z, "meanRatio": s.mean_ratio, "beta": s.beta, "onePlusBeta": 1.0 + s.beta, "censored": s.censored })
            }
            _ => Value::Null,
        };
        let opt = |v: Option<f64>| v.map_or(String::new(), num);
        table.push(vec![
            (class + 1).to_string(),
            c.replications.to_string(),
            num(c.extinct_fraction),
            c.censored.to_string(),
            num(c.mean_depth.mean),
            num(c.mean_total_lifetime.mean),
            num(c.mean_total_lifetime.stderr),
            opt(closed),
            opt(beta),
            opt(d),
        ]);
        per_class.push(json!({
            "class": class + 1,
            "replications": c.replications,
            "extinctFraction": c.extinct_fraction,
            "censored": c.censored,
            "meanDepth": c.mean_depth,
            "depthZeroFraction": c.depth_zero_fraction,
            "meanBusy": { "monteCarlo": c.mean_total_lifetime, "closedForm": closed },
            "scaledBusyPeriod": scaled,
        }));
    }
    let summary = json!({
        "rho": model.rho(),
        "predictedCertainExtinction": predicted,
        "consistent": consistent,
        "caps": caps,
        "classes": per_class,
        "tau": table_cf.as_ref().map(|t| &t.tau),
        "meanBusy": table_cf.as_ref().map(|t| &t.mean_busy),
        "beta": table_cf.as_ref().map(|t| &t.beta),
        "tail": tail,
    });
    Ok(Report::new(summary, table))
}

fn busy_table(k: usize, bps: &[BusyPeriodSample]) -> Table {
    let mut header = vec!["index".to_string(), "initiator".into(), "length".into()];
    header.extend(numbered("served", k));
    header.push("max_workload".into());
    let mut table = Table::new(header);
    for (n, b) in bps.iter().enumerate() {
        let mut row = vec![n.to_string(), (b.initiator_class + 1).to_string(), num(b.length)];
        row.extend(b.customers_served.iter().map(u64::to_string));
        row.push(num(b.max_workload));
        table.push(row);
    }
    table
}

fn per_initiator(model: &Model, bps: &[BusyPeriodSample]) -> Vec<Value> {
    let oracle = sim::compare_mean_busy(model, bps);
    (0..model.k())
        .filter_map(|class| {
            let length: Running = bps.iter().filter(|b| b.initiator_class == class).map(|b| b.length).collect();
            if length.count() == 0 {
                return None;
            }
            let served: Running =
                bps.iter().filter(|b| b.initiator_class == class).map(|b| b.sigma() as f64).collect();
            let cmp = oracle.iter().find(|o| o.class == class);
            Some(json!({
                "class": class + 1,
                "count": length.count(),
                "length": length.estimate(),
                "customersServed": served.estimate(),
                "closedFormMean": cmp.map(|o| o.expected),
                "zScore": cmp.map(|o| o.z_score),
            }))
        })
        .collect()
}

pub fn simulate(model: &Model, args: &SimulateArgs) -> CliResult<Report> {
    let k = model.k();
    let policy = sim_policy(&args.policy, k)?;
    if let Some(interval) = args.sample_interval {
        require_positive("sample-interval", interval)?;
    }
    if let Some(h) = args.horizon {
        require_positive("horizon", h)?;
    }
    let mut cfg = SimConfig::new(args.seed);
    cfg.policy = policy.clone();
    cfg.horizon = args.horizon;
    cfg.busy_period_target = args.busy_periods;
    cfg.warmup = args.warmup;
    cfg.max_events = args.max_events;
    cfg.sample_interval = args.sample_interval;

    if let Some(kappas) = &args.probe {
        if kappas.is_empty() || kappas.windows(2).any(|w| w[0] >= w[1]) || kappas.iter().any(|&x| !(x > 0.0)) {
            return Err(CliError::Usage("--probe needs positive, strictly increasing multipliers".into()));
        }
        if !model.can_restart() {
            return Err(CliError::Validation("lambda0 is all zero: system cannot restart from empty".into()));
        }
        let probe = sim::stability_probe(model, &cfg, kappas, args.idle_threshold)?;
        let mut table = Table::new(["kappa", "rho", "mean_workload", "idle_fraction", "final_workload"]);
        for r in &probe.rows {
            table.push(cells(&[r.kappa, r.rho, r.mean_workload, r.idle_fraction, r.final_workload]));
        }
        let summary = json!({
            "mode": "probe",
            "policy": policy_name(&policy),
            "horizon": args.horizon,
            "probe": probe,
            "kappaStarInBracket": probe.bracket.map(|(lo, hi)| lo <= probe.kappa_star && probe.kappa_star <= hi),
        });
        return Ok(Report::new(summary, table));
    }

    if let Some(initiator) = args.initiator {
        let class = class_index(initiator, k)?;
        let n = args.busy_periods.expect("clap enforces --busy-periods");
        if model.verdict(DEFAULT_EPSILON) != Verdict::Stable {
            return Err(CliError::Numeric("forced busy periods need rho < 1 to terminate".into()));
        }
        let bps = sim::sample_busy_periods(model, &policy, class, n, args.seed)?;
        let summary = json!({
            "mode": "forced",
            "policy": policy_name(&policy),
            "initiator": initiator,
            "busyPeriods": bps.len(),
            "perInitiator": per_initiator(model, &bps),
        });
        return Ok(Report::new(summary, busy_table(k, &bps)));
    }

    if !model.can_restart() {
        return Err(CliError::Validation("lambda0 is all zero: system cannot restart from empty".into()));
    }
    if args.horizon.is_none() && model.verdict(DEFAULT_EPSILON) != Verdict::Stable {
        return Err(CliError::Usage("--horizon is required unless the model is stable".into()));
    }
    let mut extra = Vec::new();
    let run = match &args.trace {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            let run = sim::run(model, &cfg, Some(&mut w))?;
            w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            extra.push(path.clone());
            run
        }
        None => sim::run(model, &cfg, None)?,
    };
    let summary = json!({
        "mode": "run",
        "policy": policy_name(&policy),
        "summary": run.summary,
        "busyPeriods": run.busy_periods.len(),
        "perInitiator": per_initiator(model, &run.busy_periods),
        "samples": run.samples,
    });
    let mut report = Report::new(summary, busy_table(k, &run.busy_periods));
    report.extra_outputs = extra;
    Ok(report)
}

pub fn tail(model: &Model, args: &TailArgs) -> CliResult<Report> {
    let k = model.k();
    let class = class_index(args.class, k)?;
    let policy = sim_policy(&args.policy, k)?;
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be positive".into()));
    }
    model.require_stable(DEFAULT_EPSILON)?;
    let reference = ReferenceTail::from_model(model)
        .ok_or_else(|| CliError::Numeric("tail probe needs at least one Pareto service class".into()))?;
    let constants = branching::tail_constants(model, reference.alpha, &reference.c_tilde)?;
    let mut lengths = sim::sample_busy_lengths(model, &policy, class, args.reps, args.seed)?;
    lengths.sort_by(f64::total_cmp);
    let xs = match &args.x {
        Some(x) => x.clone(),
        None => [0.5, 0.9, 0.99, 0.999, 0.9999].iter().map(|&q| quantile_sorted(&lengths, q)).collect(),
    };
    let d = constants.d[class];
    let probe = TailProbe::from_lengths(class, &lengths, &xs, &reference, d);
    let mut table =
        Table::new(["x", "exceedances", "p_hat", "reference", "ratio", "lower", "upper", "one_sided", "d_inside"]);
    for r in &probe.rows {
        table.push(vec![
            num(r.x),
            r.exceedances.to_string(),
            num(r.p_hat),
            num(r.reference),
            num(r.ratio),
            num(r.lower),
            num(r.upper),
            r.one_sided.to_string(),
            r.d_inside.to_string(),
        ]);
    }
    let summary = json!({
        "class": args.class,
        "policy": policy_name(&policy),
        "replications": probe.replications,
        "reference": { "alpha": reference.alpha, "scale": reference.scale },
        "constants": constants,
        "d": d,
        "rows": probe.rows,
    });
    Ok(Report::new(summary, table))
}

pub fn model_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}
