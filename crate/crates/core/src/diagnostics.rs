//! Observables recorded along trajectories and the fits run on them.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::kernels::KernelOp;
use crate::model::potential;

/// Values at or below this are treated as converged rather than fitted.
pub const FIT_FLOOR: f64 = 1e-14;

pub const CSV_HEADER: &str =
    "t,mass,min_u,max_u,l2_norm,h1_seminorm,energy,dist_to_ref,clamp_events";

/// Spatial mean `ū`.
pub fn mass(u: &ScalarField) -> f64 {
    u.mean()
}

/// `(k₁, k₂) = (min u, 1 − max u)`.
pub fn separation(u: &ScalarField) -> (f64, f64) {
    (u.min(), 1.0 - u.max())
}

/// Free energy `∫ f(u) + ∫∫ K(x − y) u(x) (1 − u(y))`, the Lyapunov
/// functional of the reaction-free flow. Equivalently
/// `½ ∫∫ K (u(x) − u(y))² + ∫ [f(u) + k̄ u (1 − u)]`.
pub fn energy(u: &ScalarField, op: &KernelOp) -> Result<f64> {
    let w = op.convolve(&u.map(|s| 1.0 - 2.0 * s))?;
    Ok(energy_with_w(u, &w, op))
}

/// Same as [`energy`] with `w = K∗(1 − 2u)` already known, using
/// `K∗(1 − u) = (k̄ + w)/2`.
pub(crate) fn energy_with_w(u: &ScalarField, w: &ScalarField, op: &KernelOp) -> f64 {
    let s: f64 = u
        .values()
        .iter()
        .zip(w.values())
        .zip(op.kbar().values())
        .map(|((&ui, &wi), &ki)| potential(ui) + ui * 0.5 * (ki + wi))
        .sum();
    s * u.grid().cell_volume()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub min_u: Vec<f64>,
    pub max_u: Vec<f64>,
    pub l2_norm: Vec<f64>,
    pub h1_seminorm: Vec<f64>,
    pub energy: Vec<f64>,
    pub dist_to_ref: Option<Vec<f64>>,
    /// Cumulative clamped-node count.
    pub clamp_events: Vec<u64>,
    pub dt: f64,
    /// `ū` before the first step and after each step.
    pub step_mass: Vec<f64>,
    /// `mean g(u^n)` used by each step.
    pub step_g_mean: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn new(dt: f64, with_reference: bool) -> Self {
        Self {
            dt,
            dist_to_ref: with_reference.then(Vec::new),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub(crate) fn push(
        &mut self,
        t: f64,
        u: &ScalarField,
        w: &ScalarField,
        op: &KernelOp,
        reference: Option<&ScalarField>,
        clamp_events: u64,
    ) {
        self.times.push(t);
        self.mass.push(u.mean());
        self.min_u.push(u.min());
        self.max_u.push(u.max());
        self.l2_norm.push(u.norm_l2());
        self.h1_seminorm.push(u.h1_seminorm());
        self.energy.push(energy_with_w(u, w, op));
        if let (Some(d), Some(r)) = (self.dist_to_ref.as_mut(), reference) {
            d.push(u.dist_l2(r));
        }
        self.clamp_events.push(clamp_events);
    }

    pub fn mass_balance_residual(&self) -> f64 {
        mass_balance_residual(&self.step_mass, &self.step_g_mean, self.dt)
    }

    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for k in 0..self.len() {
            let dist = self
                .dist_to_ref
                .as_ref()
                .map(|d| fmt_num(d[k]))
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_num(self.times[k]),
                fmt_num(self.mass[k]),
                fmt_num(self.min_u[k]),
                fmt_num(self.max_u[k]),
                fmt_num(self.l2_norm[k]),
                fmt_num(self.h1_seminorm[k]),
                fmt_num(self.energy[k]),
                dist,
                self.clamp_events[k]
            )?;
        }
        Ok(())
    }
}

/// Shortest round-trip representation; scientific notation for very small
/// or very large magnitudes.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && x.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// `max_n |ū_{n+1} − ū_n − dt·mean g(u^n)| / |ū_n|`.
pub fn mass_balance_residual(masses: &[f64], g_means: &[f64], dt: f64) -> f64 {
    masses
        .windows(2)
        .zip(g_means)
        .map(|(m, g)| {
            let defect = (m[1] - m[0] - dt * g).abs();
            let scale = m[0].abs().max(m[1].abs());
            if defect == 0.0 {
                0.0
            } else {
                defect / scale.max(f64::MIN_POSITIVE)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: xs.len().min(ys.len()),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        1.0 - ss_res / syy
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        rms_residual: (ss_res / n).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    /// Decay rate: the negated slope of `log value` against time.
    pub rate: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares exponential decay rate on the samples with `t ∈ [t_a, t_b]`.
pub fn fit_exponential_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let (ta, tb) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < ta || t > tb {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::NonPositive { t, value: v });
        }
        if v <= FIT_FLOOR {
            return Err(Error::BelowFloor {
                t,
                value: v,
                floor: FIT_FLOOR,
            });
        }
        xs.push(t);
        ys.push(v.ln());
    }
    if xs.len() < 10 {
        return Err(Error::TooFewPoints {
            needed: 10,
            got: xs.len(),
        });
    }
    let fit = fit_line(&xs, &ys)?;
    Ok(RateFit {
        rate: -fit.slope,
        r_squared: fit.r_squared,
        samples: xs.len(),
    })
}

/// The trailing half `[t_end/2, t_end]` of a series, the default fit window.
pub fn trailing_half(times: &[f64]) -> (f64, f64) {
    let end = times.last().copied().unwrap_or(0.0);
    let start = times.first().copied().unwrap_or(0.0);
    (start + 0.5 * (end - start), end)
}
