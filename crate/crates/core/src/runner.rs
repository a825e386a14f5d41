//! Executes a configured scenario, writing `series.csv`, field dumps and
//! `report.txt` into the output directory.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use crate::config::{Command, ReactionConfig, RunConfig};
use crate::diagnostics::{
    fit_exponential_rate, fit_line, fmt_num, trailing_half, TrajectoryRecord,
};
use crate::dump;
use crate::equilibrium::multistart_equilibria;
use crate::error::Result;
use crate::grid::ScalarField;
use crate::kernels::KernelOp;
use crate::model::ReactionSpec;
use crate::tangent::{dimension_bound, remainder_order, RemainderOrder};
use crate::timestepper::{run_observed, SolverConfig, State, Stepper};

/// Bound violations beyond this fail the phase-bound check.
pub const PHASE_TOL: f64 = 1e-8;
/// Per-step relative mass-balance tolerance.
pub const MASS_TOL: f64 = 1e-12;
/// Allowed energy increase between records for reaction-free runs.
pub const ENERGY_TOL: f64 = 1e-10;
/// Relative residual allowed in the log-linear distance fit.
pub const LOG_LINEARITY_TOL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub report: String,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.report, "{key} = {value}");
    }
}

/// Continuous-dependence fit on `log(d(t)/d(0))` for samples with
/// `t ≥ t_from`: slope, r² and the rms residual relative to the spread of
/// the log-distance (at least 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthFit {
    pub rate: f64,
    pub r_squared: f64,
    pub relative_residual: f64,
}

pub fn growth_fit(times: &[f64], distance: &[f64], t_from: f64) -> Result<GrowthFit> {
    let d0 = distance.first().copied().unwrap_or(0.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(distance)
        .filter(|(&t, &d)| t >= t_from && d > 0.0 && d0 > 0.0)
        .map(|(&t, &d)| (t, (d / d0).ln()))
        .unzip();
    let fit = fit_line(&xs, &ys)?;
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(GrowthFit {
        rate: fit.slope,
        r_squared: fit.r_squared,
        relative_residual: fit.rms_residual / (hi - lo).max(1.0),
    })
}

pub fn execute(cfg: &RunConfig, command: Command) -> Result<Outcome> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let op = cfg.kernel_op()?;
    let reaction = cfg.reaction_spec(&op)?;
    let mut out = Outcome::default();
    let _ = writeln!(out.report, "# nlch report");
    out.line("command", command);
    out.line("seed", cfg.seed);
    out.report.push_str("\n[kernel]\n");
    let k = op.constants();
    out.line("spec", op.spec());
    out.line("r2", fmt_num(k.r2));
    out.line("rinf", fmt_num(k.rinf));
    out.line("k2_sup", fmt_num(k.k2_sup));
    out.line("contraction_threshold", fmt_num(k.contraction_threshold()));
    if let Some(beta) = cfg.resolved_beta(&op) {
        out.line("bertozzi_beta", fmt_num(beta));
    }
    out.line("reaction_lipschitz", fmt_num(reaction.lipschitz()));
    out.report.push_str("\n[results]\n");

    match command {
        Command::Run => run_command(cfg, &reaction, &op, &mut out)?,
        Command::Pair => pair_command(cfg, &reaction, &op, &mut out)?,
        Command::Equilibrium => equilibrium_command(cfg, &reaction, &op, &mut out)?,
        Command::Remainder => remainder_command(cfg, &reaction, &op, &mut out)?,
        Command::Trace => trace_command(cfg, &reaction, &op, &mut out)?,
    }

    out.report.push_str("\n[checks]\n");
    for c in &out.checks {
        let _ = writeln!(
            out.report,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    out.report.push_str("\n[config]\n");
    out.report.push_str(&cfg.resolved());
    fs::write(dir.join("report.txt"), &out.report)?;
    fs::write(dir.join("config.txt"), cfg.resolved())?;
    Ok(out)
}

fn write_dump(path: &Path, u: &ScalarField, t: f64) -> Result<()> {
    dump::write_field(BufWriter::new(File::create(path)?), u, t)
}

fn write_series(dir: &Path, rec: &TrajectoryRecord) -> Result<()> {
    rec.write_csv(BufWriter::new(File::create(dir.join("series.csv"))?))?;
    Ok(())
}

fn bounds_check(out: &mut Outcome, min: f64, max: f64) {
    out.check(
        "phase bounds",
        min >= -PHASE_TOL && max <= 1.0 + PHASE_TOL,
        format!("min u = {}, max u = {}", fmt_num(min), fmt_num(max)),
    );
}

fn run_command(
    cfg: &RunConfig,
    reaction: &ReactionSpec,
    op: &KernelOp,
    out: &mut Outcome,
) -> Result<()> {
    let dir = &cfg.output_dir;
    let u0 = cfg.initial_field()?;
    let ones = ScalarField::constant(cfg.grid, 1.0);
    let reference = matches!(cfg.reaction, ReactionConfig::Logistic { .. }).then_some(&ones);
    write_dump(&dir.join("u_00000000.nlch"), &u0, 0.0)?;
    let every = cfg.snapshot_every;
    let (end, rec) = run_observed(&u0, reaction, op, &cfg.solver, reference, |s: &State| {
        if every > 0 && s.steps > 0 && s.steps.is_multiple_of(every as u64) {
            write_dump(&dir.join(format!("u_{:08}.nlch", s.steps)), &s.u, s.t)?;
        }
        Ok(())
    })?;
    write_dump(&dir.join(format!("u_{:08}.nlch", end.steps)), &end.u, end.t)?;
    write_series(dir, &rec)?;

    out.line("steps", end.steps);
    out.line("t_final", fmt_num(end.t));
    out.line("mass_initial", fmt_num(rec.mass[0]));
    out.line("mass_final", fmt_num(end.u.mean()));
    out.line(
        "separation_final",
        format!("({}, {})", fmt_num(end.u.min()), fmt_num(1.0 - end.u.max())),
    );
    out.line("clamp_events", end.clamp_events);
    let min = rec.min_u.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rec.max_u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    bounds_check(out, min, max);
    let mb = rec.mass_balance_residual();
    out.line("mass_balance_residual", fmt_num(mb));
    out.check(
        "mass balance",
        mb <= MASS_TOL,
        format!("max relative residual {}", fmt_num(mb)),
    );

    let window = trailing_half(&rec.times);
    let increments: Vec<f64> = rec.step_mass.windows(2).map(|m| m[1] - m[0]).collect();
    match &cfg.reaction {
        ReactionConfig::None => {
            let m0 = rec.step_mass[0];
            let drift = rec
                .step_mass
                .iter()
                .map(|m| (m - m0).abs())
                .fold(0.0, f64::max);
            out.check(
                "mass conservation",
                drift <= MASS_TOL,
                format!("max drift {}", fmt_num(drift)),
            );
            let rise = rec
                .energy
                .windows(2)
                .map(|e| e[1] - e[0])
                .fold(f64::NEG_INFINITY, f64::max);
            out.check(
                "energy nonincreasing",
                rec.energy.len() < 2 || rise <= ENERGY_TOL,
                format!("largest increase {}", fmt_num(rise.max(0.0))),
            );
        }
        ReactionConfig::Oono { .. } => {
            let worst = increments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.check(
                "mass nonincreasing",
                worst <= 0.0,
                format!("largest increment {}", fmt_num(worst)),
            );
            let vol = cfg.grid.volume();
            let ok = rec
                .l2_norm
                .iter()
                .zip(&rec.mass)
                .all(|(n, m)| n * n <= 3.0 * vol * m + 1e-15);
            out.check(
                "L2 norm bounded by mean",
                ok,
                "||u||^2 <= 3 |Omega| mean(u)".into(),
            );
            report_rate(out, "l2_decay_rate", &rec.times, &rec.l2_norm, window);
        }
        ReactionConfig::Logistic { .. } => {
            let worst = increments.iter().copied().fold(f64::INFINITY, f64::min);
            out.check(
                "mass nondecreasing",
                worst >= 0.0,
                format!("smallest increment {}", fmt_num(worst)),
            );
            if let Some(d) = &rec.dist_to_ref {
                report_rate(out, "distance_to_one_rate", &rec.times, d, window);
            }
        }
        _ => {}
    }
    Ok(())
}

fn report_rate(out: &mut Outcome, key: &str, times: &[f64], values: &[f64], window: (f64, f64)) {
    match fit_exponential_rate(times, values, window) {
        Ok(fit) => {
            out.line(key, fmt_num(fit.rate));
            out.line(&format!("{key}_r_squared"), fmt_num(fit.r_squared));
        }
        Err(e) => out.line(key, format!("unavailable ({e})")),
    }
}

fn pair_command(
    cfg: &RunConfig,
    reaction: &ReactionSpec,
    op: &KernelOp,
    out: &mut Outcome,
) -> Result<()> {
    let u01 = cfg.initial_field()?;
    let u02 = cfg.pair_field(&u01);
    let solver: &SolverConfig = &cfg.solver;
    let mut stepper = Stepper::new(reaction, op, solver)?;
    let mut a = State::new(u01, op)?;
    let mut b = State::new(u02, op)?;
    let mut rec = TrajectoryRecord::new(solver.dt, true);
    rec.push(a.t, &a.u, &a.w, op, Some(&b.u), 0);
    let (mut min, mut max) = (a.u.min().min(b.u.min()), a.u.max().max(b.u.max()));
    let steps = solver.steps();
    for k in 1..=steps {
        stepper.step(&mut a)?;
        stepper.step(&mut b)?;
        min = min.min(a.u.min()).min(b.u.min());
        max = max.max(a.u.max()).max(b.u.max());
        if k % solver.record_every == 0 || k == steps {
            rec.push(
                a.t,
                &a.u,
                &a.w,
                op,
                Some(&b.u),
                a.clamp_events + b.clamp_events,
            );
        }
    }
    write_series(&cfg.output_dir, &rec)?;
    write_dump(&cfg.output_dir.join("first_final.nlch"), &a.u, a.t)?;
    write_dump(&cfg.output_dir.join("second_final.nlch"), &b.u, b.t)?;

    let dist = rec.dist_to_ref.as_deref().unwrap_or_default();
    out.line("distance_initial", fmt_num(dist[0]));
    out.line("distance_final", fmt_num(*dist.last().unwrap()));
    bounds_check(out, min, max);
    let t_from = (solver.t_end / 2.0).min(1.0);
    match growth_fit(&rec.times, dist, t_from) {
        Ok(fit) => {
            out.line("growth_constant", fmt_num(fit.rate));
            out.line("growth_r_squared", fmt_num(fit.r_squared));
            out.line("growth_relative_residual", fmt_num(fit.relative_residual));
            out.check(
                "log-distance grows at most linearly",
                fit.rate.is_finite() && fit.relative_residual <= LOG_LINEARITY_TOL,
                format!("relative residual {}", fmt_num(fit.relative_residual)),
            );
        }
        Err(e) => out.line("growth_constant", format!("unavailable ({e})")),
    }
    Ok(())
}

fn equilibrium_command(
    cfg: &RunConfig,
    reaction: &ReactionSpec,
    op: &KernelOp,
    out: &mut Outcome,
) -> Result<()> {
    let seeds = cfg.equilibrium_seed_fields()?;
    let ms = multistart_equilibria(&seeds, reaction, op, &cfg.equilibrium)?;
    out.line("seeds", seeds.len());
    out.line("equilibria", ms.equilibria.len());
    out.line("unconverged", ms.failures.len());
    let drift_cfg = SolverConfig {
        t_end: 1.0,
        ..cfg.solver.clone()
    };
    for (k, eq) in ms.equilibria.iter().enumerate() {
        write_dump(
            &cfg.output_dir.join(format!("equilibrium_{k}.nlch")),
            &eq.u,
            0.0,
        )?;
        let (end, _) = crate::timestepper::run(&eq.u, reaction, op, &drift_cfg)?;
        let drift = end.u.dist_l2(&eq.u);
        let _ = writeln!(
            out.report,
            "equilibrium {k}: mean = {}, min = {}, max = {}, residual = {}, drift = {}, iterations = {:?}",
            fmt_num(eq.u.mean()),
            fmt_num(eq.u.min()),
            fmt_num(eq.u.max()),
            fmt_num(eq.residual),
            fmt_num(drift),
            eq.stage_iterations
        );
        out.check(
            &format!("equilibrium {k} certified"),
            eq.certified(),
            format!("residual {}", fmt_num(eq.residual)),
        );
        out.check(
            &format!("equilibrium {k} stationary"),
            drift <= 10.0 * drift_cfg.dt,
            format!("drift {} over unit time", fmt_num(drift)),
        );
    }
    for (seed, eq) in &ms.failures {
        let _ = writeln!(
            out.report,
            "seed {seed}: {:?}, residual = {}",
            eq.status,
            fmt_num(eq.residual)
        );
    }
    let _ = writeln!(out.report, "assignment = {:?}", ms.assignment);
    Ok(())
}

fn remainder_command(
    cfg: &RunConfig,
    reaction: &ReactionSpec,
    op: &KernelOp,
    out: &mut Outcome,
) -> Result<()> {
    let u0 = cfg.initial_field()?;
    let d = cfg.remainder_direction();
    let study = remainder_order(
        &u0,
        &d,
        &cfg.remainder.eps,
        reaction,
        op,
        &cfg.solver,
        cfg.remainder.t,
    )?;
    for (e, r) in study.eps.iter().zip(&study.remainders) {
        let _ = writeln!(
            out.report,
            "eps = {}: remainder = {}",
            fmt_num(*e),
            fmt_num(*r)
        );
    }
    match study.order {
        RemainderOrder::Exact { max_remainder } => out.line(
            "order",
            format!("exact (max remainder {})", fmt_num(max_remainder)),
        ),
        RemainderOrder::Fitted { order, r_squared } => {
            out.line("order", fmt_num(order));
            out.line("order_r_squared", fmt_num(r_squared));
        }
    }
    out.check(
        "remainders finite",
        study.remainders.iter().all(|r| r.is_finite()),
        format!("{} values", study.remainders.len()),
    );
    Ok(())
}

fn trace_command(
    cfg: &RunConfig,
    reaction: &ReactionSpec,
    op: &KernelOp,
    out: &mut Outcome,
) -> Result<()> {
    let initial = cfg.trace_initial_fields()?;
    let db = dimension_bound(
        &initial,
        cfg.trace_n_max,
        reaction,
        op,
        &cfg.solver,
        &cfg.trace,
    )?;
    out.line("samples", initial.len());
    for (k, v) in db.curve.iter().enumerate() {
        let _ = writeln!(out.report, "trace n = {}: {}", k + 1, fmt_num(*v));
    }
    match db.n {
        Some(n) => out.line("dimension_bound", n),
        None => out.line("dimension_bound", format!("none <= {}", cfg.trace_n_max)),
    }
    out.check(
        "trace curve finite",
        db.curve.iter().all(|v| v.is_finite()),
        format!("{} values", db.curve.len()),
    );
    Ok(())
}
