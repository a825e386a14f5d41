//! Steady states by damped Picard iteration on an ε-regularized fixed-point
//! map, continued in ε down to 0 and certified by the strong residual.

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::grid::{add_div_mu_grad, laplacian_into, ScalarField};
use crate::kernels::KernelOp;
use crate::linalg::{remove_mean, solve_shifted_laplacian};
use crate::model::ReactionSpec;
use crate::par;

/// Residual threshold for a certified equilibrium.
pub const CERTIFY_TOL: f64 = 1e-8;

/// Tolerance on `0 ≤ u ≤ 1` for inputs and certified outputs.
pub const BOUND_TOL: f64 = 1e-8;

/// How the regularized map treats the spatial mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularization {
    /// `(ε − Δ)φ = P₀[R(z)] + ε P₀z` for the mean-free part and the scalar
    /// equation `ε(m − z̄) = mean g(φ + m)` for the mean. Fixed points are
    /// equilibria at every ε.
    Proximal,
    /// `(ε − Δ)Γ = R(z)` as written; fixed points solve the ε-shifted
    /// problem and only become equilibria as ε → 0.
    Literal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumConfig {
    pub eps_schedule: Vec<f64>,
    pub damping: f64,
    pub picard_tol: f64,
    /// Strong residual required, besides `picard_tol`, to end the last stage.
    pub residual_tol: f64,
    /// Picard iterations allowed per ε stage.
    pub max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub dedup_tol: f64,
    pub regularization: Regularization,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        Self {
            eps_schedule: vec![1.0, 0.1, 0.01, 0.001, 0.0],
            damping: 0.5,
            picard_tol: 1e-10,
            residual_tol: 1e-9,
            max_iter: 10_000,
            cg_tol: 1e-12,
            cg_max_iter: 20_000,
            dedup_tol: 1e-6,
            regularization: Regularization::Proximal,
        }
    }
}

impl EquilibriumConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let s = &self.eps_schedule;
        if s.is_empty() {
            return bad("eps_schedule is empty".into());
        }
        if s.iter().any(|e| !e.is_finite()) || s.windows(2).any(|p| p[1] >= p[0]) {
            return bad(format!(
                "eps_schedule must be strictly decreasing, got {s:?}"
            ));
        }
        if s[s.len() - 1] < 0.0 {
            return bad("eps_schedule must end at a value >= 0".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.picard_tol > 0.0)
            || !(self.residual_tol > 0.0)
            || !(self.cg_tol > 0.0)
            || !(self.dedup_tol > 0.0)
        {
            return bad("tolerances must be positive".into());
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EquilibriumStatus {
    Converged,
    /// Picard iteration did not settle within `max_iter` at this ε.
    MaxIterations {
        eps: f64,
    },
    /// No mean value balances the reaction at ε = 0.
    Incompatible {
        defect: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub u: ScalarField,
    pub residual: f64,
    pub status: EquilibriumStatus,
    /// Picard iterations used at each completed ε stage.
    pub stage_iterations: Vec<usize>,
    /// L² distance between the limits of consecutive ε stages.
    pub stage_shifts: Vec<f64>,
    /// Largest distance outside `[0, 1]` before the final clamp.
    pub excursion: f64,
}

impl Equilibrium {
    pub fn converged(&self) -> bool {
        self.status == EquilibriumStatus::Converged
    }

    pub fn certified(&self) -> bool {
        self.converged()
            && self.residual < CERTIFY_TOL
            && self.u.min() >= -BOUND_TOL
            && self.u.max() <= 1.0 + BOUND_TOL
    }
}

/// Strong-form residual `‖−Δ_h u − ∇·(μ(u)∇w) − g(u)‖_{L²}` with
/// `w = K∗(1 − 2u)`.
pub fn equilibrium_residual(
    u: &ScalarField,
    reaction: &ReactionSpec,
    op: &KernelOp,
) -> Result<f64> {
    if u.grid() != op.grid() || u.grid() != reaction.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *u.grid();
    let n = u.len();
    let w = op.convolve(&u.map(|s| 1.0 - 2.0 * s))?;
    let mut lap = vec![0.0; n];
    laplacian_into(&grid, u.values(), &mut lap);
    let mut rhs = vec![0.0; n];
    add_div_mu_grad(&grid, u.values(), w.values(), &mut rhs);
    let mut g = vec![0.0; n];
    reaction.eval_into(u.values(), &mut g);
    let r: Vec<f64> = (0..n).map(|i| -lap[i] - rhs[i] - g[i]).collect();
    Ok(ScalarField::from_vec_unchecked(grid, r).norm_l2())
}

struct Picard<'a> {
    reaction: &'a ReactionSpec,
    op: &'a KernelOp,
    cfg: &'a EquilibriumConfig,
    phi: Vec<f64>,
}

enum MapOutcome {
    Image(Vec<f64>),
    Incompatible(f64),
}

impl Picard<'_> {
    /// `R(z) = ∇·(μ(z)∇K∗(1 − 2z)) + g(z)`.
    fn drive(&self, z: &[f64]) -> Vec<f64> {
        let grid = *self.op.grid();
        let rho: Vec<f64> = z.iter().map(|s| 1.0 - 2.0 * s).collect();
        let mut w = vec![0.0; z.len()];
        self.op.convolve_into(&rho, &mut w);
        let mut r = vec![0.0; z.len()];
        add_div_mu_grad(&grid, z, &w, &mut r);
        for (i, (ri, &s)) in r.iter_mut().zip(z).enumerate() {
            *ri += self.reaction.value_at(i, s);
        }
        r
    }

    fn mean_reaction(&self, phi: &[f64], m: f64) -> f64 {
        phi.iter()
            .enumerate()
            .map(|(i, &p)| self.reaction.value_at(i, p + m))
            .sum::<f64>()
            / phi.len() as f64
    }

    /// Root of `ε(m − z̄) − mean g(φ + m)` nearest to `z̄`.
    fn mean_root(&self, phi: &[f64], zbar: f64, eps: f64) -> Option<f64> {
        let f = |m: f64| eps * (m - zbar) - self.mean_reaction(phi, m);
        if f(zbar) == 0.0 {
            return Some(zbar);
        }
        const LO: f64 = -1.0;
        const STEPS: usize = 300;
        const DM: f64 = 0.01;
        let mut best: Option<f64> = None;
        let mut consider = |m: f64| {
            if best.is_none_or(|b: f64| (m - zbar).abs() < (b - zbar).abs()) {
                best = Some(m);
            }
        };
        let mut a = LO;
        let mut fa = f(a);
        if fa == 0.0 {
            consider(a);
        }
        for k in 1..=STEPS {
            let b = LO + k as f64 * DM;
            let fb = f(b);
            if fb == 0.0 {
                consider(b);
            }
            if fa.signum() != fb.signum() || (fa == 0.0) != (fb == 0.0) {
                consider(bisect(&f, a, fa, b, fb));
            }
            a = b;
            fa = fb;
        }
        best
    }

    fn map(&mut self, z: &ScalarField, eps: f64) -> Result<MapOutcome> {
        let grid = *z.grid();
        let zv = z.values();
        let zbar = z.mean();
        let mut b = self.drive(zv);
        let g_mean = self.mean_reaction(zv, 0.0);
        remove_mean(&mut b);
        if self.cfg.regularization == Regularization::Proximal && eps > 0.0 {
            for (bi, &s) in b.iter_mut().zip(zv) {
                *bi += eps * (s - zbar);
            }
        }
        solve_shifted_laplacian(
            &grid,
            eps,
            1.0,
            &b,
            &mut self.phi,
            self.cfg.cg_tol,
            self.cfg.cg_max_iter,
        )?;
        remove_mean(&mut self.phi);
        let m = match self.cfg.regularization {
            Regularization::Proximal => match self.mean_root(&self.phi, zbar, eps) {
                Some(m) => m,
                None => return Ok(MapOutcome::Incompatible(g_mean.abs())),
            },
            Regularization::Literal if eps > 0.0 => g_mean / eps,
            Regularization::Literal => {
                if g_mean.abs() > self.cfg.picard_tol {
                    return Ok(MapOutcome::Incompatible(g_mean.abs()));
                }
                zbar
            }
        };
        Ok(MapOutcome::Image(self.phi.iter().map(|p| p + m).collect()))
    }
}

/// Bisection on a bracket where `f` changes sign or leaves zero.
fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            if fa == 0.0 {
                a = mid;
                fa = fm;
            } else if fb == 0.0 {
                b = mid;
                fb = fm;
            } else {
                return mid;
            }
        } else if fm.signum() == fa.signum() && fa != 0.0 {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    if fa.abs() <= fb.abs() {
        a
    } else {
        b
    }
}

/// Damped Picard iteration along the ε schedule starting from `u_init`.
pub fn solve_equilibrium(
    u_init: &ScalarField,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &EquilibriumConfig,
) -> Result<Equilibrium> {
    cfg.validate()?;
    if u_init.grid() != op.grid() || reaction.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    if u_init.min() < -BOUND_TOL || u_init.max() > 1.0 + BOUND_TOL {
        return Err(Error::InvalidParameter(format!(
            "initial guess leaves [0, 1]: range [{}, {}]",
            u_init.min(),
            u_init.max()
        )));
    }
    let grid = *u_init.grid();
    let theta = cfg.damping;
    let mut picard = Picard {
        reaction,
        op,
        cfg,
        phi: u_init.values().iter().map(|s| s - u_init.mean()).collect(),
    };
    let mut u = u_init.clone();
    let mut stage_iterations = Vec::new();
    let mut stage_shifts = Vec::new();
    let mut status = EquilibriumStatus::Converged;
    let mut previous: Option<ScalarField> = None;

    let last = cfg.eps_schedule.len() - 1;
    'stages: for (stage, &eps) in cfg.eps_schedule.iter().enumerate() {
        let mut settled = false;
        for it in 1..=cfg.max_iter {
            let image = match picard.map(&u, eps)? {
                MapOutcome::Image(v) => v,
                MapOutcome::Incompatible(defect) => {
                    warn!("no mean value balances the reaction at eps = {eps}; defect {defect:e}");
                    status = EquilibriumStatus::Incompatible { defect };
                    break 'stages;
                }
            };
            let next: Vec<f64> = u
                .values()
                .iter()
                .zip(&image)
                .map(|(&a, &b)| (1.0 - theta) * a + theta * b)
                .collect();
            let next = ScalarField::new(grid, next)?;
            let change = next.dist_l2(&u);
            u = next;
            if change < cfg.picard_tol
                && (stage < last || equilibrium_residual(&u, reaction, op)? < cfg.residual_tol)
            {
                debug!("eps = {eps}: settled after {it} iterations");
                stage_iterations.push(it);
                settled = true;
                break;
            }
        }
        if !settled {
            warn!("Picard iteration did not settle at eps = {eps}");
            status = EquilibriumStatus::MaxIterations { eps };
            break;
        }
        if let Some(p) = &previous {
            stage_shifts.push(p.dist_l2(&u));
        }
        previous = Some(u.clone());
    }

    let excursion = u
        .values()
        .iter()
        .map(|&v| (-v).max(v - 1.0))
        .fold(0.0, f64::max);
    if excursion > BOUND_TOL {
        warn!("equilibrium iterate left [0, 1] by {excursion:e}; clamping");
    }
    let u = u.map(|v| v.clamp(0.0, 1.0));
    let residual = equilibrium_residual(&u, reaction, op)?;
    Ok(Equilibrium {
        u,
        residual,
        status,
        stage_iterations,
        stage_shifts,
        excursion,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Multistart {
    /// Distinct converged equilibria, in order of first appearance.
    pub equilibria: Vec<Equilibrium>,
    /// For each seed, the index of its equilibrium, or `None` if the solve
    /// did not converge.
    pub assignment: Vec<Option<usize>>,
    /// Solves that did not converge, by seed index.
    pub failures: Vec<(usize, Equilibrium)>,
}

/// Solves from every seed (concurrently when enabled) and merges limits
/// closer than `dedup_tol` in L².
pub fn multistart_equilibria(
    seeds: &[ScalarField],
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &EquilibriumConfig,
) -> Result<Multistart> {
    let solved = par::map(seeds, |s| solve_equilibrium(s, reaction, op, cfg));
    let mut out = Multistart {
        equilibria: Vec::new(),
        assignment: Vec::with_capacity(seeds.len()),
        failures: Vec::new(),
    };
    for (k, eq) in solved.into_iter().enumerate() {
        let eq = eq?;
        if !eq.converged() {
            out.assignment.push(None);
            out.failures.push((k, eq));
            continue;
        }
        let existing = out
            .equilibria
            .iter()
            .position(|e| e.u.dist_l2(&eq.u) <= cfg.dedup_tol);
        match existing {
            Some(idx) => out.assignment.push(Some(idx)),
            None => {
                out.assignment.push(Some(out.equilibria.len()));
                out.equilibria.push(eq);
            }
        }
    }
    Ok(out)
}
