//! Semi-implicit time stepping: diffusion implicit, nonlocal drift and
//! reaction explicit, followed by an exact mass correction.

use log::warn;

use crate::diagnostics::{fit_line, LineFit, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::grid::{add_div_mu_grad, ScalarField};
use crate::kernels::KernelOp;
use crate::linalg::{solve_shifted_laplacian, CgOutcome};
use crate::model::ReactionSpec;

/// Excursions beyond this abort regardless of policy.
pub const ABORT_EXCURSION: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClampPolicy {
    /// Any excursion above `bound_tol` is an error.
    Strict,
    /// Clamp to `[0, 1]`, count the nodes, warn above `bound_tol`.
    ClampAndCount,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub bound_tol: f64,
    pub clamp_policy: ClampPolicy,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            record_every: 10,
            bound_tol: 1e-8,
            clamp_policy: ClampPolicy::ClampAndCount,
            cg_tol: 1e-10,
            cg_max_iter: 10_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, reaction: &ReactionSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if !(self.bound_tol > 0.0 && self.bound_tol < ABORT_EXCURSION) {
            return bad(format!(
                "bound_tol must lie in (0, {ABORT_EXCURSION:e}), got {}",
                self.bound_tol
            ));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return bad(format!("cg_tol must lie in (0, 1), got {}", self.cg_tol));
        }
        let lg = reaction.lipschitz();
        if self.dt * lg >= 0.5 {
            return bad(format!("dt * L_g = {} must be below 1/2", self.dt * lg));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: ScalarField,
    /// `K ∗ (1 − 2u)` for the current `u`.
    pub w: ScalarField,
    pub steps: u64,
    pub clamp_events: u64,
}

impl State {
    pub fn new(u: ScalarField, op: &KernelOp) -> Result<Self> {
        let w = op.convolve(&u.map(|s| 1.0 - 2.0 * s))?;
        Ok(Self {
            t: 0.0,
            u,
            w,
            steps: 0,
            clamp_events: 0,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub g_mean: f64,
    pub cg: CgOutcome,
    pub clamped: usize,
    pub excursion: f64,
}

/// Reusable stepping context; holds scratch buffers.
pub struct Stepper<'a> {
    reaction: &'a ReactionSpec,
    op: &'a KernelOp,
    cfg: SolverConfig,
    rhs: Vec<f64>,
    g: Vec<f64>,
    rho: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(reaction: &'a ReactionSpec, op: &'a KernelOp, cfg: &SolverConfig) -> Result<Self> {
        if reaction.grid() != op.grid() {
            return Err(Error::GridMismatch);
        }
        cfg.validate(reaction)?;
        let n = op.grid().node_count();
        Ok(Self {
            reaction,
            op,
            cfg: cfg.clone(),
            rhs: vec![0.0; n],
            g: vec![0.0; n],
            rho: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn reaction(&self) -> &ReactionSpec {
        self.reaction
    }

    pub fn kernel(&self) -> &KernelOp {
        self.op
    }

    /// Advances `state` by one step of size `dt`.
    pub fn step(&mut self, state: &mut State) -> Result<StepReport> {
        if state.u.grid() != self.op.grid() {
            return Err(Error::GridMismatch);
        }
        let grid = *self.op.grid();
        let dt = self.cfg.dt;
        let u = state.u.values();

        self.reaction.eval_into(u, &mut self.g);
        self.rhs.iter_mut().for_each(|v| *v = 0.0);
        add_div_mu_grad(&grid, u, state.w.values(), &mut self.rhs);
        for ((r, &ui), &gi) in self.rhs.iter_mut().zip(u).zip(&self.g) {
            *r = ui + dt * (*r + gi);
        }
        let g_mean = mean(&self.g);
        let target_mean = mean(&self.rhs);

        let mut next = state.u.clone().into_values();
        let cg = solve_shifted_laplacian(
            &grid,
            1.0,
            dt,
            &self.rhs,
            &mut next,
            self.cfg.cg_tol,
            self.cfg.cg_max_iter,
        )?;
        let shift = target_mean - mean(&next);
        next.iter_mut().for_each(|v| *v += shift);

        let t_next = state.t + dt;
        let excursion = next.iter().map(|&v| (-v).max(v - 1.0)).fold(0.0, f64::max);
        if excursion > ABORT_EXCURSION {
            return Err(Error::BoundExcursion {
                t: t_next,
                excursion,
                limit: ABORT_EXCURSION,
            });
        }
        let mut clamped = 0;
        match self.cfg.clamp_policy {
            ClampPolicy::Strict if excursion > self.cfg.bound_tol => {
                return Err(Error::BoundExcursion {
                    t: t_next,
                    excursion,
                    limit: self.cfg.bound_tol,
                });
            }
            ClampPolicy::Strict => {}
            ClampPolicy::ClampAndCount => {
                for v in next.iter_mut() {
                    if *v < 0.0 || *v > 1.0 {
                        *v = v.clamp(0.0, 1.0);
                        clamped += 1;
                    }
                }
                if excursion > self.cfg.bound_tol {
                    warn!("t = {t_next}: clamped {clamped} nodes, excursion {excursion:e}");
                }
            }
        }

        for (r, &v) in self.rho.iter_mut().zip(&next) {
            *r = 1.0 - 2.0 * v;
        }
        let mut w = state.w.clone().into_values();
        self.op.convolve_into(&self.rho, &mut w);

        state.u = ScalarField::from_vec_unchecked(grid, next);
        state.w = ScalarField::from_vec_unchecked(grid, w);
        state.t = t_next;
        state.steps += 1;
        state.clamp_events += clamped as u64;
        Ok(StepReport {
            g_mean,
            cg,
            clamped,
            excursion,
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One step from `state`, returning the new state.
pub fn step(
    state: &State,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
) -> Result<State> {
    let mut stepper = Stepper::new(reaction, op, cfg)?;
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

/// Integrates to `t_end`, recording every `record_every` steps and at the end.
pub fn run(
    u0: &ScalarField,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
) -> Result<(State, TrajectoryRecord)> {
    run_with_reference(u0, reaction, op, cfg, None)
}

/// Like [`run`], additionally recording the L² distance to `reference`.
pub fn run_with_reference(
    u0: &ScalarField,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
    reference: Option<&ScalarField>,
) -> Result<(State, TrajectoryRecord)> {
    run_observed(u0, reaction, op, cfg, reference, |_| Ok(()))
}

/// Like [`run_with_reference`], calling `observe` on every recorded state.
pub fn run_observed(
    u0: &ScalarField,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
    reference: Option<&ScalarField>,
    mut observe: impl FnMut(&State) -> Result<()>,
) -> Result<(State, TrajectoryRecord)> {
    if let Some(r) = reference {
        u0.ensure_same_grid(r)?;
    }
    let mut stepper = Stepper::new(reaction, op, cfg)?;
    let mut state = State::new(u0.clone(), op)?;
    let mut rec = TrajectoryRecord::new(cfg.dt, reference.is_some());
    let steps = cfg.steps();
    rec.step_mass.reserve(steps + 1);
    rec.step_g_mean.reserve(steps);
    rec.step_mass.push(state.u.mean());
    rec.push(state.t, &state.u, &state.w, op, reference, 0);
    observe(&state)?;
    for k in 1..=steps {
        let report = stepper.step(&mut state)?;
        rec.step_mass.push(state.u.mean());
        rec.step_g_mean.push(report.g_mean);
        if k % cfg.record_every == 0 || k == steps {
            rec.push(
                state.t,
                &state.u,
                &state.w,
                op,
                reference,
                state.clamp_events,
            );
            observe(&state)?;
        }
    }
    Ok((state, rec))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub first: State,
    pub second: State,
}

impl PairRecord {
    /// Fit of `log ‖u₁ − u₂‖` against time; the slope is the observed growth
    /// constant.
    pub fn growth_fit(&self) -> Result<LineFit> {
        let (ts, ls): (Vec<f64>, Vec<f64>) = self
            .times
            .iter()
            .zip(&self.distance)
            .filter(|(_, &d)| d > 0.0)
            .map(|(&t, &d)| (t, d.ln()))
            .unzip();
        fit_line(&ts, &ls)
    }

    /// `max_t ‖u₁(t) − u₂(t)‖ / ‖u₁(0) − u₂(0)‖`.
    pub fn max_amplification(&self) -> f64 {
        let d0 = self.distance.first().copied().unwrap_or(0.0);
        if d0 == 0.0 {
            return if self.distance.iter().all(|&d| d == 0.0) {
                1.0
            } else {
                f64::INFINITY
            };
        }
        self.distance.iter().fold(0.0, |m: f64, &d| m.max(d / d0))
    }
}

/// Runs two trajectories in lockstep and records their L² distance.
pub fn pair_run(
    u01: &ScalarField,
    u02: &ScalarField,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
) -> Result<PairRecord> {
    u01.ensure_same_grid(u02)?;
    let mut stepper = Stepper::new(reaction, op, cfg)?;
    let mut a = State::new(u01.clone(), op)?;
    let mut b = State::new(u02.clone(), op)?;
    let mut times = vec![0.0];
    let mut distance = vec![a.u.dist_l2(&b.u)];
    let steps = cfg.steps();
    for k in 1..=steps {
        stepper.step(&mut a)?;
        stepper.step(&mut b)?;
        if k % cfg.record_every == 0 || k == steps {
            times.push(a.t);
            distance.push(a.u.dist_l2(&b.u));
        }
    }
    Ok(PairRecord {
        times,
        distance,
        first: a,
        second: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::kernels::KernelSpec;
    use std::f64::consts::PI;

    fn setup(dim: usize, n: usize) -> (Grid, KernelOp) {
        let g = Grid::new(dim, n, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::gaussian(1.0, 0.1), &g).unwrap();
        (g, op)
    }

    #[test]
    fn pure_phases_without_reaction_are_fixed() {
        let (g, op) = setup(1, 32);
        let zero = ReactionSpec::zero(g);
        let cfg = SolverConfig {
            t_end: 0.1,
            ..Default::default()
        };
        for c in [0.0, 1.0] {
            let (end, _) = run(&ScalarField::constant(g, c), &zero, &op, &cfg).unwrap();
            assert!(end.u.values().iter().all(|&v| (v - c).abs() < 1e-13));
        }
    }

    #[test]
    fn logistic_constant_follows_discrete_ode() {
        let g = Grid::new(1, 16, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::zero(), &g).unwrap();
        let alpha = ScalarField::constant(g, 1.0);
        let r = ReactionSpec::logistic(&alpha).unwrap();
        let cfg = SolverConfig {
            dt: 0.01,
            t_end: 1.0,
            ..Default::default()
        };
        let (end, _) = run(&ScalarField::constant(g, 0.2), &r, &op, &cfg).unwrap();
        let mut m: f64 = 0.2;
        for _ in 0..100 {
            m += 0.01 * m * (1.0 - m);
        }
        assert!((end.u.mean() - m).abs() < 1e-12);
        let exact = 0.2 * 1f64.exp() / (1.0 - 0.2 + 0.2 * 1f64.exp());
        assert!((end.u.mean() - exact).abs() < 5e-3);
    }

    #[test]
    fn pure_diffusion_decays_at_the_discrete_rate() {
        let g = Grid::new(1, 64, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::zero(), &g).unwrap();
        let zero = ReactionSpec::zero(g);
        let cfg = SolverConfig {
            dt: 1e-3,
            t_end: 0.05,
            record_every: 1,
            cg_tol: 1e-13,
            ..Default::default()
        };
        let u0 = ScalarField::from_fn(g, |x| 0.5 + 0.1 * (PI * x[0]).cos());
        let (end, _) = run(&u0, &zero, &op, &cfg).unwrap();
        let h = g.spacing();
        let lambda = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        let factor = (1.0 + cfg.dt * lambda).powi(-(cfg.steps() as i32));
        let expected = ScalarField::from_fn(g, |x| 0.5 + 0.1 * factor * (PI * x[0]).cos());
        assert!(end.u.dist_l2(&expected) < 1e-11);
    }

    #[test]
    fn mass_identity_holds_per_step() {
        let (g, op) = setup(2, 12);
        let sigma = ScalarField::constant(g, 1.5);
        let r = ReactionSpec::oono(&sigma).unwrap();
        let cfg = SolverConfig {
            dt: 0.01,
            t_end: 0.5,
            ..Default::default()
        };
        let u0 = ScalarField::from_fn(g, |x| 0.4 + 0.2 * (PI * x[0]).cos() * (PI * x[1]).cos());
        let (_, rec) = run(&u0, &r, &op, &cfg).unwrap();
        assert_eq!(rec.step_mass.len(), 51);
        assert!(rec.mass_balance_residual() < 1e-12);
    }

    #[test]
    fn recording_schedule() {
        let (g, op) = setup(1, 16);
        let zero = ReactionSpec::zero(g);
        let cfg = SolverConfig {
            dt: 0.01,
            t_end: 0.25,
            record_every: 10,
            ..Default::default()
        };
        let (_, rec) = run(&ScalarField::constant(g, 0.5), &zero, &op, &cfg).unwrap();
        assert_eq!(rec.len(), 4);
        assert!((rec.times[3] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let g = Grid::new(1, 16, 1.0).unwrap();
        let alpha = ScalarField::constant(g, 100.0);
        let r = ReactionSpec::logistic(&alpha).unwrap();
        let cfg = SolverConfig {
            dt: 0.01,
            ..Default::default()
        };
        assert!(cfg.validate(&r).is_err());
        let cfg = SolverConfig {
            bound_tol: 1e-3,
            ..Default::default()
        };
        assert!(cfg.validate(&ReactionSpec::zero(g)).is_err());
        let cfg = SolverConfig {
            record_every: 0,
            ..Default::default()
        };
        assert!(cfg.validate(&ReactionSpec::zero(g)).is_err());
    }

    #[test]
    fn strict_policy_rejects_out_of_range_input() {
        let (g, op) = setup(1, 16);
        let zero = ReactionSpec::zero(g);
        let mut u = ScalarField::constant(g, 0.5);
        u.values_mut()[3] = 1.0 + 1e-3;
        let state = State::new(u, &op).unwrap();
        let cfg = SolverConfig {
            dt: 1e-9,
            clamp_policy: ClampPolicy::Strict,
            ..Default::default()
        };
        assert!(matches!(
            step(&state, &zero, &op, &cfg),
            Err(Error::BoundExcursion { .. })
        ));
    }

    #[test]
    fn pair_run_from_identical_data_stays_together() {
        let (g, op) = setup(1, 32);
        let r = ReactionSpec::logistic(&ScalarField::constant(g, 1.0)).unwrap();
        let u0 = ScalarField::from_fn(g, |x| 0.5 + 0.2 * (PI * x[0]).cos());
        let cfg = SolverConfig {
            dt: 0.01,
            t_end: 0.2,
            ..Default::default()
        };
        let pair = pair_run(&u0, &u0, &r, &op, &cfg).unwrap();
        assert!(pair.distance.iter().all(|&d| d == 0.0));
        assert_eq!(pair.max_amplification(), 1.0);
    }
}
