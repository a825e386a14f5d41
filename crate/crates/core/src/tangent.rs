//! Linearized flow along a trajectory: the exact derivative of the discrete
//! step, propagated jointly with the base state. Used for remainder checks
//! and time-averaged traces over orthonormal frames.

use std::f64::consts::PI;

use log::warn;

use crate::diagnostics::fit_line;
use crate::error::{Error, Result};
use crate::grid::{laplacian_into, Grid, ScalarField};
use crate::kernels::KernelOp;
use crate::linalg::{orthonormalize, solve_shifted_laplacian};
use crate::model::{mobility, mobility_deriv, ReactionSpec};
use crate::par;
use crate::timestepper::{SolverConfig, State, Stepper};

/// Remainders at or below this are treated as zero.
pub const EXACT_REMAINDER: f64 = 1e-10;

/// Coefficients of the linearization at one base state.
struct Linearization {
    mu: Vec<f64>,
    dmu: Vec<f64>,
    dg: Vec<f64>,
}

impl Linearization {
    fn at(u: &[f64], reaction: &ReactionSpec) -> Self {
        let mut dg = vec![0.0; u.len()];
        reaction.deriv_into(u, &mut dg);
        Self {
            mu: u.iter().map(|&s| mobility(s)).collect(),
            dmu: u.iter().map(|&s| mobility_deriv(s)).collect(),
            dg,
        }
    }

    /// `out += ∇·(μ'(u) U ∇w + μ(u) ∇w̃) + g'(u) U`, flux form matching the
    /// nonlinear drift.
    fn add_drift(&self, grid: &Grid, w: &[f64], col: &[f64], wt: &[f64], out: &mut [f64]) {
        let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
        let (mu, dmu) = (&self.mu, &self.dmu);
        grid.for_each_face(|i, j| {
            let flux = 0.5 * (dmu[i] * col[i] + dmu[j] * col[j]) * (w[j] - w[i])
                + 0.5 * (mu[i] + mu[j]) * (wt[j] - wt[i]);
            out[i] += flux * inv_h2;
            out[j] -= flux * inv_h2;
        });
        for ((o, &d), &c) in out.iter_mut().zip(&self.dg).zip(col) {
            *o += d * c;
        }
    }
}

/// `w̃ = K∗(−2U)` for every column, column-major.
fn perturbed_potentials(op: &KernelOp, cols: &[ScalarField]) -> Vec<f64> {
    let n = op.grid().node_count();
    let mut out = vec![0.0; n * cols.len()];
    if cols.is_empty() || op.is_zero() {
        return out;
    }
    let mut x = Vec::with_capacity(n * cols.len());
    for c in cols {
        x.extend_from_slice(c.values());
    }
    op.convolve_columns(-2.0, &x, cols.len(), &mut out);
    out
}

fn advance_columns(
    state: &State,
    cols: &mut [ScalarField],
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
) -> Result<()> {
    let grid = *op.grid();
    let n = grid.node_count();
    let lin = Linearization::at(state.u.values(), reaction);
    let wt = perturbed_potentials(op, cols);
    let w = state.w.values();
    let dt = cfg.dt;
    let inputs: Vec<(usize, &ScalarField)> = cols.iter().enumerate().collect();
    let results = par::map(&inputs, |&(j, col)| -> Result<Vec<f64>> {
        let u = col.values();
        let mut b = vec![0.0; n];
        lin.add_drift(&grid, w, u, &wt[j * n..(j + 1) * n], &mut b);
        for (bi, &ui) in b.iter_mut().zip(u) {
            *bi = ui + dt * *bi;
        }
        let target = b.iter().sum::<f64>() / n as f64;
        let mut x = u.to_vec();
        solve_shifted_laplacian(&grid, 1.0, dt, &b, &mut x, cfg.cg_tol, cfg.cg_max_iter)?;
        let shift = target - x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v += shift);
        Ok(x)
    });
    for (col, res) in cols.iter_mut().zip(results) {
        *col = ScalarField::from_vec_unchecked(grid, res?);
    }
    Ok(())
}

/// One linearized step of `U` along the base state `(u, w)`.
pub fn tangent_step(
    perturbation: &ScalarField,
    u: &ScalarField,
    w: &ScalarField,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    perturbation.ensure_same_grid(u)?;
    u.ensure_same_grid(w)?;
    if u.grid() != op.grid() || u.grid() != reaction.grid() {
        return Err(Error::GridMismatch);
    }
    let state = State {
        t: 0.0,
        u: u.clone(),
        w: w.clone(),
        steps: 0,
        clamp_events: 0,
    };
    let mut cols = [perturbation.clone()];
    advance_columns(&state, &mut cols, reaction, op, cfg)?;
    let [out] = cols;
    Ok(out)
}

/// Advances a base state together with tangent columns.
pub struct TangentFlow<'a> {
    stepper: Stepper<'a>,
}

impl<'a> TangentFlow<'a> {
    pub fn new(reaction: &'a ReactionSpec, op: &'a KernelOp, cfg: &SolverConfig) -> Result<Self> {
        Ok(Self {
            stepper: Stepper::new(reaction, op, cfg)?,
        })
    }

    pub fn step(&mut self, state: &mut State, cols: &mut [ScalarField]) -> Result<()> {
        advance_columns(
            state,
            cols,
            self.stepper.reaction(),
            self.stepper.kernel(),
            self.stepper.config(),
        )?;
        self.stepper.step(state)?;
        Ok(())
    }
}

/// `S(t)u₀` and `Λ(t, u₀)U₀` for each column, with `t = cfg.t_end`.
pub fn propagate(
    u0: &ScalarField,
    columns: &[ScalarField],
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
) -> Result<(State, Vec<ScalarField>)> {
    for c in columns {
        c.ensure_same_grid(u0)?;
    }
    let mut flow = TangentFlow::new(reaction, op, cfg)?;
    let mut state = State::new(u0.clone(), op)?;
    let mut cols = columns.to_vec();
    for _ in 0..cfg.steps() {
        flow.step(&mut state, &mut cols)?;
    }
    Ok((state, cols))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RemainderOrder {
    /// Every remainder was at or below [`EXACT_REMAINDER`].
    Exact {
        max_remainder: f64,
    },
    Fitted {
        order: f64,
        r_squared: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RemainderStudy {
    pub eps: Vec<f64>,
    pub remainders: Vec<f64>,
    pub order: RemainderOrder,
}

/// `R(ε) = ‖S(t)(u₀ + εd) − S(t)u₀ − εΛ(t)d‖` for each ε and the slope of
/// `log R` against `log ε`.
pub fn remainder_order(
    u0: &ScalarField,
    direction: &ScalarField,
    eps_list: &[f64],
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
    t: f64,
) -> Result<RemainderStudy> {
    direction.ensure_same_grid(u0)?;
    if eps_list.iter().any(|e| !(*e > 0.0)) || eps_list.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::InvalidParameter(
            "eps list must be positive and strictly decreasing".into(),
        ));
    }
    let norm = direction.norm_l2();
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("direction must be non-zero".into()));
    }
    let d = direction.scaled(1.0 / norm);
    let kept: Vec<f64> = eps_list
        .iter()
        .copied()
        .filter(|&e| {
            let inside = u0
                .values()
                .iter()
                .zip(d.values())
                .all(|(a, b)| (0.0..=1.0).contains(&(a + e * b)));
            if !inside {
                warn!("eps = {e} moves the initial datum out of [0, 1]; skipped");
            }
            inside
        })
        .collect();
    if kept.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: kept.len(),
        });
    }
    let cfg = SolverConfig {
        t_end: t,
        ..cfg.clone()
    };
    let (base, lam) = propagate(u0, std::slice::from_ref(&d), reaction, op, &cfg)?;
    let lam = &lam[0];
    let remainders = par::map(&kept, |&e| -> Result<f64> {
        let mut start = u0.clone();
        start.axpy(e, &d);
        let mut stepper = Stepper::new(reaction, op, &cfg)?;
        let mut s = State::new(start, op)?;
        for _ in 0..cfg.steps() {
            stepper.step(&mut s)?;
        }
        let mut r = s.u;
        r.axpy(-1.0, &base.u);
        r.axpy(-e, lam);
        Ok(r.norm_l2())
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;

    let max_remainder = remainders.iter().copied().fold(0.0, f64::max);
    let order = if max_remainder <= EXACT_REMAINDER {
        RemainderOrder::Exact { max_remainder }
    } else {
        let xs: Vec<f64> = kept.iter().map(|e| e.ln()).collect();
        let ys: Vec<f64> = remainders
            .iter()
            .map(|r| r.max(f64::MIN_POSITIVE).ln())
            .collect();
        let fit = fit_line(&xs, &ys)?;
        RemainderOrder::Fitted {
            order: fit.slope,
            r_squared: fit.r_squared,
        }
    };
    Ok(RemainderStudy {
        eps: kept,
        remainders,
        order,
    })
}

/// Orthonormal tangent columns with accumulated stretching logs.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFrame {
    pub vectors: Vec<ScalarField>,
    pub ortho_every: usize,
    /// `Σ log R_jj` over all re-orthonormalizations, per column.
    pub log_r: Vec<f64>,
}

impl TangentFrame {
    /// The first `n` Neumann cosine modes, ordered by eigenvalue.
    pub fn cosine(grid: Grid, n: usize, ortho_every: usize) -> Result<Self> {
        if n > grid.node_count() {
            return Err(Error::InvalidParameter(format!(
                "frame of {n} columns exceeds {} nodes",
                grid.node_count()
            )));
        }
        if ortho_every == 0 {
            return Err(Error::InvalidParameter(
                "ortho_every must be at least 1".into(),
            ));
        }
        let m = grid.n();
        let mut modes: Vec<[usize; 2]> = if grid.dim() == 1 {
            (0..m).map(|k| [k, 0]).collect()
        } else {
            (0..m).flat_map(|a| (0..m).map(move |b| [a, b])).collect()
        };
        modes.sort_by_key(|k| (k[0] * k[0] + k[1] * k[1], k[0], k[1]));
        let l = grid.length();
        let mut vectors: Vec<ScalarField> = modes[..n]
            .iter()
            .map(|k| {
                ScalarField::from_fn(grid, |x| {
                    (k[0] as f64 * PI * x[0] / l).cos() * (k[1] as f64 * PI * x[1] / l).cos()
                })
            })
            .collect();
        orthonormalize(&mut vectors)?;
        Ok(Self {
            vectors,
            ortho_every,
            log_r: vec![0.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn reorthonormalize(&mut self) -> Result<()> {
        let diag = orthonormalize(&mut self.vectors)?;
        for (acc, r) in self.log_r.iter_mut().zip(diag) {
            *acc += r.ln();
        }
        Ok(())
    }
}

/// `(Lφ_j, φ_j)` for each column, where
/// `Lφ = Δφ + ∇·(μ'(u)φ∇w + μ(u)∇K∗(−2φ)) + g'(u)φ` at the state `(u, w)`.
pub fn quadratic_forms(
    state: &State,
    cols: &[ScalarField],
    reaction: &ReactionSpec,
    op: &KernelOp,
) -> Result<Vec<f64>> {
    let grid = *op.grid();
    for c in cols {
        c.ensure_same_grid(&state.u)?;
    }
    let n = grid.node_count();
    let lin = Linearization::at(state.u.values(), reaction);
    let wt = perturbed_potentials(op, cols);
    let inputs: Vec<(usize, &ScalarField)> = cols.iter().enumerate().collect();
    Ok(par::map(&inputs, |&(j, col)| {
        let phi = col.values();
        let mut l = vec![0.0; n];
        laplacian_into(&grid, phi, &mut l);
        lin.add_drift(
            &grid,
            state.w.values(),
            phi,
            &wt[j * n..(j + 1) * n],
            &mut l,
        );
        l.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume()
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceConfig {
    pub t_end: f64,
    pub ortho_every: usize,
    /// Samples before this time are discarded.
    pub transient: f64,
    /// Number of initial data for the supremum in [`dimension_bound`].
    pub samples: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            t_end: 5.0,
            ortho_every: 10,
            transient: 1.0,
            samples: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceCurve {
    /// `values[n − 1]` is the time-averaged trace over the first `n` columns.
    pub values: Vec<f64>,
    pub samples: usize,
    pub log_r: Vec<f64>,
}

/// Time-averaged traces for nested frames of size `1..=n_max` along the
/// trajectory from `u0`, sampled after each re-orthonormalization with
/// `t ≥ transient`.
pub fn trace_curve(
    u0: &ScalarField,
    n_max: usize,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
    tcfg: &TraceConfig,
) -> Result<TraceCurve> {
    if n_max == 0 {
        return Ok(TraceCurve {
            values: Vec::new(),
            samples: 0,
            log_r: Vec::new(),
        });
    }
    let cfg = SolverConfig {
        t_end: tcfg.t_end,
        ..cfg.clone()
    };
    let mut frame = TangentFrame::cosine(*u0.grid(), n_max, tcfg.ortho_every)?;
    let mut flow = TangentFlow::new(reaction, op, &cfg)?;
    let mut state = State::new(u0.clone(), op)?;
    let mut acc = vec![0.0; n_max];
    let mut samples = 0;
    for k in 1..=cfg.steps() {
        flow.step(&mut state, &mut frame.vectors)?;
        if k % frame.ortho_every != 0 {
            continue;
        }
        frame.reorthonormalize()?;
        if state.t + 1e-9 * cfg.dt < tcfg.transient {
            continue;
        }
        let q = quadratic_forms(&state, &frame.vectors, reaction, op)?;
        for (a, v) in acc.iter_mut().zip(q) {
            *a += v;
        }
        samples += 1;
    }
    if samples == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let mut values = Vec::with_capacity(n_max);
    let mut sum = 0.0;
    for a in acc {
        sum += a / samples as f64;
        values.push(sum);
    }
    Ok(TraceCurve {
        values,
        samples,
        log_r: frame.log_r,
    })
}

/// Time-averaged trace over an `n`-column frame.
pub fn trace_estimate(
    u0: &ScalarField,
    n: usize,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
    tcfg: &TraceConfig,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "frame size must be at least 1".into(),
        ));
    }
    Ok(trace_curve(u0, n, reaction, op, cfg, tcfg)?.values[n - 1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimensionBound {
    /// Smallest `n` whose trace is negative, or `None` if none up to `n_max`.
    pub n: Option<usize>,
    /// Supremum over the initial data of the trace curves.
    pub curve: Vec<f64>,
    pub per_sample: Vec<TraceCurve>,
}

/// Scans the supremum trace curve over `initial` for the first negative value.
pub fn dimension_bound(
    initial: &[ScalarField],
    n_max: usize,
    reaction: &ReactionSpec,
    op: &KernelOp,
    cfg: &SolverConfig,
    tcfg: &TraceConfig,
) -> Result<DimensionBound> {
    if initial.is_empty() {
        return Err(Error::InvalidParameter(
            "no initial data for the trace supremum".into(),
        ));
    }
    let per_sample = par::map(initial, |u0| {
        trace_curve(u0, n_max, reaction, op, cfg, tcfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let curve: Vec<f64> = (0..n_max)
        .map(|k| {
            per_sample
                .iter()
                .map(|c| c.values[k])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let n = curve.iter().position(|&v| v < 0.0).map(|k| k + 1);
    Ok(DimensionBound {
        n,
        curve,
        per_sample,
    })
}
