//! End-to-end acceptance checks on the shipped presets. Each test prints one
//! `PASS`/`FAIL` line before asserting.

use std::sync::OnceLock;

use nlch::config::{parse_config, ReactionConfig, RunConfig};
use nlch::diagnostics::{fit_exponential_rate, trailing_half};
use nlch::equilibrium::multistart_equilibria;
use nlch::runner::growth_fit;
use nlch::tangent::{dimension_bound, remainder_order, trace_estimate, RemainderOrder};
use nlch::timestepper::{pair_run, run, run_with_reference};
use nlch::{KernelSpec, ScalarField, SolverConfig};

const PHASE_TOL: f64 = 1e-8;
const MASS_TOL: f64 = 1e-12;
const ENERGY_TOL: f64 = 1e-10;
const LOG_LINEARITY_TOL: f64 = 0.1;

fn preset(name: &str) -> RunConfig {
    let path = format!("{}/configs/{name}.conf", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    parse_config(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn verdict(name: &str, passed: bool, detail: String) {
    println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "{name}: {detail}");
}

struct SuiteRun {
    label: String,
    min_u: f64,
    max_u: f64,
    mass_residual: f64,
    /// Largest relative gap to `(1 − σ dt)ⁿ ū₀`, decay presets only.
    geometric_gap: Option<f64>,
    growth_rate: f64,
    growth_residual: f64,
}

/// Logistic, target-relaxation and decay presets on two kernels and three
/// seeds, each with a companion run from a second random datum.
fn suite() -> &'static [SuiteRun] {
    static SUITE: OnceLock<Vec<SuiteRun>> = OnceLock::new();
    SUITE.get_or_init(|| {
        let mut cases = Vec::new();
        for name in ["logistic", "bertozzi", "oono"] {
            for (kname, kernel) in [
                ("gaussian", KernelSpec::gaussian(1.0, 0.1)),
                ("mollifier", KernelSpec::mollifier(1.0, 0.2)),
            ] {
                for seed in 1..=3u64 {
                    let mut cfg = preset(name);
                    cfg.kernel = kernel;
                    cfg.seed = seed;
                    cfg.solver.dt = 1e-3;
                    cfg.solver.t_end = 2.0;
                    cfg.solver.record_every = 1;
                    cases.push((format!("{name}/{kname}/seed {seed}"), cfg));
                }
            }
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = cases
                .iter()
                .map(|(label, cfg)| s.spawn(move || suite_run(label, cfg)))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        })
    })
}

fn suite_run(label: &str, cfg: &RunConfig) -> SuiteRun {
    let op = cfg.kernel_op().unwrap();
    let reaction = cfg.reaction_spec(&op).unwrap();
    let u0 = cfg.initial_field().unwrap();
    let (_, rec) = run(&u0, &reaction, &op, &cfg.solver).unwrap_or_else(|e| panic!("{label}: {e}"));
    let geometric_gap = match cfg.reaction {
        ReactionConfig::Oono { .. } => {
            let sigma = match &cfg.reaction {
                ReactionConfig::Oono { sigma } => sigma.field(cfg.grid).values()[0],
                _ => unreachable!(),
            };
            let factor = 1.0 - sigma * cfg.solver.dt;
            let m0 = rec.step_mass[0];
            Some(
                rec.step_mass
                    .iter()
                    .enumerate()
                    .map(|(n, m)| {
                        let expected = m0 * factor.powi(n as i32);
                        (m - expected).abs() / expected
                    })
                    .fold(0.0, f64::max),
            )
        }
        _ => None,
    };
    let pair = pair_run(&u0, &cfg.pair_field(&u0), &reaction, &op, &cfg.solver)
        .unwrap_or_else(|e| panic!("{label} pair: {e}"));
    let t_from = (cfg.solver.t_end / 2.0).min(1.0);
    let growth = growth_fit(&pair.times, &pair.distance, t_from).unwrap();
    SuiteRun {
        label: label.to_string(),
        min_u: rec.min_u.iter().copied().fold(f64::INFINITY, f64::min),
        max_u: rec.max_u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mass_residual: rec.mass_balance_residual(),
        geometric_gap,
        growth_rate: growth.rate,
        growth_residual: growth.relative_residual,
    }
}

#[test]
fn phase_bounds_across_suite() {
    let runs = suite();
    let min = runs.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min);
    let max = runs
        .iter()
        .map(|r| r.max_u)
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        "phase bounds",
        runs.len() == 18 && min >= -PHASE_TOL && max <= 1.0 + PHASE_TOL,
        format!(
            "{} runs without abort, min u = {min:e}, max u = {max}",
            runs.len()
        ),
    );
}

#[test]
fn mass_identity_across_suite() {
    let runs = suite();
    let worst = runs
        .iter()
        .max_by(|a, b| a.mass_residual.total_cmp(&b.mass_residual))
        .unwrap();
    let geometric = runs
        .iter()
        .filter_map(|r| r.geometric_gap)
        .fold(0.0, f64::max);
    let decay_runs = runs.iter().filter(|r| r.geometric_gap.is_some()).count();
    verdict(
        "mass identity",
        worst.mass_residual <= MASS_TOL && decay_runs == 6 && geometric <= MASS_TOL,
        format!(
            "max per-step residual {:e} ({}), decay runs match (1 - sigma dt)^n to {geometric:e}",
            worst.mass_residual, worst.label
        ),
    );
}

#[test]
fn decay_converges_to_zero() {
    let cfg = preset("oono");
    assert_eq!(cfg.solver.t_end, 20.0);
    let op = cfg.kernel_op().unwrap();
    let reaction = cfg.reaction_spec(&op).unwrap();
    let (_, rec) = run(&cfg.initial_field().unwrap(), &reaction, &op, &cfg.solver).unwrap();
    let fit = fit_exponential_rate(&rec.times, &rec.l2_norm, trailing_half(&rec.times)).unwrap();
    verdict(
        "decay to zero",
        fit.rate >= 0.5 && fit.r_squared >= 0.99,
        format!(
            "L2 decay rate {} with r^2 {} over the trailing half",
            fit.rate, fit.r_squared
        ),
    );
}

#[test]
fn logistic_converges_to_one() {
    let cfg = preset("logistic");
    let op = cfg.kernel_op().unwrap();
    let reaction = cfg.reaction_spec(&op).unwrap();
    let ones = ScalarField::constant(cfg.grid, 1.0);
    let (_, rec) = run_with_reference(
        &cfg.initial_field().unwrap(),
        &reaction,
        &op,
        &cfg.solver,
        Some(&ones),
    )
    .unwrap();
    let dist = rec.dist_to_ref.as_ref().unwrap();
    let fit = fit_exponential_rate(&rec.times, dist, trailing_half(&rec.times)).unwrap();
    let increasing = rec.step_mass.windows(2).all(|m| m[1] > m[0]);

    let zero = ScalarField::zeros(cfg.grid);
    let (end, _) = run(&zero, &reaction, &op, &cfg.solver).unwrap();
    let stays_zero = end.u.values().iter().all(|&v| v == 0.0);
    verdict(
        "logistic convergence to one",
        fit.rate > 0.0 && fit.r_squared >= 0.95 && increasing && stays_zero,
        format!(
            "rate {} with r^2 {}, mean strictly increasing over {} steps: {increasing}, zero datum stays zero: {stays_zero}",
            fit.rate,
            fit.r_squared,
            rec.step_mass.len() - 1
        ),
    );
}

#[test]
fn target_relaxation_contracts() {
    let cfg = preset("bertozzi");
    let op = cfg.kernel_op().unwrap();
    let k = op.constants();
    let beta = cfg.resolved_beta(&op).unwrap();
    let threshold = 0.5 * (k.r2 / 4.0 + k.rinf).powi(2);
    let reaction = cfg.reaction_spec(&op).unwrap();
    let u1 = cfg.random_field(1, 0.1, 0.9);
    let u2 = cfg.random_field(2, 0.1, 0.9);
    let pair = pair_run(&u1, &u2, &reaction, &op, &cfg.solver).unwrap();
    let last = *pair.distance.last().unwrap();
    let fit =
        fit_exponential_rate(&pair.times, &pair.distance, trailing_half(&pair.times)).unwrap();
    verdict(
        "contraction to the unique stationary point",
        beta > threshold + 1.0 && last <= 1e-6 && fit.rate >= 1.0 && fit.r_squared >= 0.99,
        format!(
            "beta {beta} vs threshold {threshold}, final distance {last:e}, rate {} with r^2 {}",
            fit.rate, fit.r_squared
        ),
    );
}

#[test]
fn continuous_dependence_across_suite() {
    let runs = suite();
    let worst = runs
        .iter()
        .max_by(|a, b| a.growth_residual.total_cmp(&b.growth_residual))
        .unwrap();
    let fastest = runs
        .iter()
        .map(|r| r.growth_rate)
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        "continuous dependence",
        runs.iter().all(|r| r.growth_rate.is_finite())
            && worst.growth_residual <= LOG_LINEARITY_TOL,
        format!(
            "largest fitted C {fastest}, worst relative residual {} ({})",
            worst.growth_residual, worst.label
        ),
    );
}

#[test]
fn equilibria_are_certified() {
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["bertozzi", "oono", "logistic", "tristable"] {
        let mut cfg = preset(name);
        if cfg.equilibrium_seeds.constants.is_empty() {
            cfg.equilibrium_seeds.random = 3;
        }
        let op = cfg.kernel_op().unwrap();
        let reaction = cfg.reaction_spec(&op).unwrap();
        let seeds = cfg.equilibrium_seed_fields().unwrap();
        let ms = multistart_equilibria(&seeds, &reaction, &op, &cfg.equilibrium).unwrap();
        let drift_cfg = SolverConfig {
            t_end: 1.0,
            ..cfg.solver.clone()
        };
        for eq in &ms.equilibria {
            let (end, _) = run(&eq.u, &reaction, &op, &drift_cfg).unwrap();
            let drift = end.u.dist_l2(&eq.u);
            ok &= eq.certified() && drift <= 10.0 * drift_cfg.dt;
            details.push(format!(
                "{name}: mean {:.6} residual {:e} drift {drift:e}",
                eq.u.mean(),
                eq.residual
            ));
        }
        ok &= !ms.equilibria.is_empty();
        if name == "tristable" {
            ok &= ms.equilibria.len() == 3 && ms.failures.is_empty();
            details.push(format!(
                "tristable: {} distinct equilibria",
                ms.equilibria.len()
            ));
        }
    }
    verdict("equilibrium certification", ok, details.join("; "));
}

#[test]
fn solution_map_is_differentiable() {
    let mut orders = Vec::new();
    for name in ["remainder", "remainder_linear"] {
        let cfg = preset(name);
        let op = cfg.kernel_op().unwrap();
        let reaction = cfg.reaction_spec(&op).unwrap();
        let study = remainder_order(
            &cfg.initial_field().unwrap(),
            &cfg.remainder_direction(),
            &cfg.remainder.eps,
            &reaction,
            &op,
            &cfg.solver,
            cfg.remainder.t,
        )
        .unwrap();
        assert_eq!(study.eps, vec![1e-2, 3e-3, 1e-3, 3e-4]);
        orders.push((study.remainders.clone(), study.order));
    }
    let nonlinear = match orders[0].1 {
        RemainderOrder::Fitted { order, r_squared } => order >= 1.5 && r_squared >= 0.98,
        RemainderOrder::Exact { .. } => false,
    };
    let linear = orders[1].0.iter().all(|&r| r <= 1e-10);
    verdict(
        "uniform differentiability",
        nonlinear && linear,
        format!(
            "nonlinear remainders {:?} give {:?}; affine remainders {:?}",
            orders[0].0, orders[0].1, orders[1].0
        ),
    );
}

#[test]
fn trace_becomes_negative() {
    let cfg = preset("trace");
    assert_eq!(cfg.trace_n_max, 30);
    let op = cfg.kernel_op().unwrap();
    let reaction = cfg.reaction_spec(&op).unwrap();
    let sigma = match &cfg.reaction {
        ReactionConfig::Oono { sigma } => sigma.field(cfg.grid).values()[0],
        _ => panic!("trace preset must use linear decay"),
    };
    let initial = cfg.trace_initial_fields().unwrap();
    let db = dimension_bound(
        &initial,
        cfg.trace_n_max,
        &reaction,
        &op,
        &cfg.solver,
        &cfg.trace,
    )
    .unwrap();
    let negative_beyond =
        db.n.is_some_and(|n| db.curve[n - 1..].iter().all(|&v| v < 0.0));
    let t1 = trace_estimate(&initial[0], 1, &reaction, &op, &cfg.solver, &cfg.trace).unwrap();
    let rel = (t1 + sigma).abs() / sigma;
    verdict(
        "trace negativity",
        db.curve.len() == 30 && negative_beyond && rel <= 0.05,
        format!(
            "N = {:?}, trace(1) = {t1} against -{sigma} (relative gap {rel:e}), trace(30) = {}",
            db.n, db.curve[29]
        ),
    );
}

#[test]
fn reaction_free_flow_is_dissipative() {
    let cfg = preset("conserved");
    assert_eq!(cfg.reaction, ReactionConfig::None);
    assert_eq!(cfg.solver.record_every, 1);
    let op = cfg.kernel_op().unwrap();
    let reaction = cfg.reaction_spec(&op).unwrap();
    let (_, rec) = run(&cfg.initial_field().unwrap(), &reaction, &op, &cfg.solver).unwrap();
    let m0 = rec.step_mass[0];
    let drift = rec
        .step_mass
        .iter()
        .map(|m| (m - m0).abs())
        .fold(0.0, f64::max);
    let rise = rec
        .energy
        .windows(2)
        .map(|e| e[1] - e[0])
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        "reaction-free dissipation",
        drift <= MASS_TOL && rise <= ENERGY_TOL,
        format!(
            "mass drift {drift:e}, largest energy step {rise:e}, energy {} -> {}",
            rec.energy[0],
            rec.energy.last().unwrap()
        ),
    );
}
