//! Pointwise physics: degenerate mobility, the logarithmic potential and the
//! reaction terms.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::kernels::KernelOp;

pub const DEFAULT_GUARD: f64 = 1e-12;

/// `μ(s) = s(1 − s)` on `[0, 1]`, zero elsewhere.
pub fn mobility(s: f64) -> f64 {
    if (0.0..=1.0).contains(&s) {
        s * (1.0 - s)
    } else {
        0.0
    }
}

/// `μ'(s) = 1 − 2s` on `[0, 1]`, zero elsewhere.
pub fn mobility_deriv(s: f64) -> f64 {
    if (0.0..=1.0).contains(&s) {
        1.0 - 2.0 * s
    } else {
        0.0
    }
}

/// `f(s) = s log s + (1 − s) log(1 − s)`, continuously extended by
/// `f(0) = f(1) = 0` and clamped outside `[0, 1]`.
pub fn potential(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    xlogx(s) + xlogx(1.0 - s)
}

/// `f'(s) = log(s / (1 − s))` evaluated at `s` clamped to `[guard, 1 − guard]`.
pub fn f_prime(s: f64, guard: f64) -> f64 {
    let s = s.clamp(guard, 1.0 - guard);
    (s / (1.0 - s)).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChemicalPotential {
    pub v: ScalarField,
    /// Nodes where `u` sat outside `[guard, 1 − guard]` and `f'` was clamped.
    pub guarded_nodes: usize,
}

/// Diagnostic chemical potential `v = f'(u) + K∗(1 − 2u)`.
pub fn chemical_potential(u: &ScalarField, op: &KernelOp, guard: f64) -> Result<ChemicalPotential> {
    let w = op.convolve(&u.map(|s| 1.0 - 2.0 * s))?;
    let mut guarded_nodes = 0;
    let values = u
        .values()
        .iter()
        .zip(w.values())
        .map(|(&s, &wi)| {
            if s < guard || s > 1.0 - guard {
                guarded_nodes += 1;
            }
            f_prime(s, guard) + wi
        })
        .collect();
    Ok(ChemicalPotential {
        v: ScalarField::new(*u.grid(), values)?,
        guarded_nodes,
    })
}

/// Pointwise map `(node, s) -> value` for caller-supplied reactions.
pub type ReactionFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Reaction {
    /// `α(x) s (1 − s)`
    Logistic {
        alpha: Vec<f64>,
    },
    /// `β(x) (h(x) − s)`
    Bertozzi {
        beta: Vec<f64>,
        target: Vec<f64>,
    },
    /// `−σ(x) s`
    Oono {
        sigma: Vec<f64>,
    },
    Custom {
        g: ReactionFn,
        dg: ReactionFn,
    },
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reaction::Logistic { .. } => f.write_str("Logistic"),
            Reaction::Bertozzi { .. } => f.write_str("Bertozzi"),
            Reaction::Oono { .. } => f.write_str("Oono"),
            Reaction::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// Sign of `g` on `[0, 1]`, which decides mass monotonicity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReactionSign {
    Zero,
    NonNegative,
    NonPositive,
    Indefinite,
}

/// Parts of a caller-supplied reaction. Both maps are required.
#[derive(Clone, Default)]
pub struct CustomReaction {
    pub g: Option<ReactionFn>,
    pub dg: Option<ReactionFn>,
    /// Uniform Lipschitz constant of `g` in `s`.
    pub lipschitz: f64,
}

/// A validated reaction term on a fixed grid.
#[derive(Clone, Debug)]
pub struct ReactionSpec {
    grid: Grid,
    kind: Reaction,
    lipschitz: f64,
    sign: ReactionSign,
}

fn check_field(name: &str, grid: &Grid, f: &ScalarField, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if let Some((i, v)) = f
        .values()
        .iter()
        .enumerate()
        .find(|(_, &v)| !(lo..=hi).contains(&v))
    {
        return Err(Error::InvalidParameter(format!(
            "{name} must lie in [{lo}, {hi}], got {v} at node {i}"
        )));
    }
    Ok(f.values().to_vec())
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl ReactionSpec {
    /// `g ≡ 0`, represented as Oono with `σ ≡ 0`.
    pub fn zero(grid: Grid) -> Self {
        Self::oono(&ScalarField::zeros(grid)).expect("zero sigma is valid")
    }

    pub fn logistic(alpha: &ScalarField) -> Result<Self> {
        let grid = *alpha.grid();
        let alpha = check_field("alpha", &grid, alpha, 0.0, f64::MAX)?;
        let lipschitz = max_of(&alpha);
        let sign = if lipschitz == 0.0 {
            ReactionSign::Zero
        } else {
            ReactionSign::NonNegative
        };
        Self::validated(grid, Reaction::Logistic { alpha }, lipschitz, sign)
    }

    pub fn bertozzi(beta: &ScalarField, target: &ScalarField) -> Result<Self> {
        let grid = *beta.grid();
        let beta = check_field("beta", &grid, beta, 0.0, f64::MAX)?;
        let target = check_field("h", &grid, target, 0.0, 1.0)?;
        let lipschitz = max_of(&beta);
        let sign = if lipschitz == 0.0 {
            ReactionSign::Zero
        } else {
            ReactionSign::Indefinite
        };
        Self::validated(grid, Reaction::Bertozzi { beta, target }, lipschitz, sign)
    }

    pub fn oono(sigma: &ScalarField) -> Result<Self> {
        let grid = *sigma.grid();
        let sigma = check_field("sigma", &grid, sigma, 0.0, f64::MAX)?;
        let lipschitz = max_of(&sigma);
        let sign = if lipschitz == 0.0 {
            ReactionSign::Zero
        } else {
            ReactionSign::NonPositive
        };
        Self::validated(grid, Reaction::Oono { sigma }, lipschitz, sign)
    }

    /// Caller-supplied reaction. The derivative is checked against centred
    /// differences of `g` on a sample of `s`; full C^{1,1} regularity cannot
    /// be decided from samples and stays the caller's obligation.
    pub fn custom(grid: Grid, parts: CustomReaction) -> Result<Self> {
        let g = parts.g.ok_or(Error::MissingReactionPart("value map g"))?;
        let dg = parts
            .dg
            .ok_or(Error::MissingReactionPart("derivative map dg/ds"))?;
        if !(parts.lipschitz >= 0.0 && parts.lipschitz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "custom reaction Lipschitz constant must be finite and >= 0, got {}",
                parts.lipschitz
            )));
        }
        let samples = 41;
        let step = 1e-6;
        let mut any_pos = false;
        let mut any_neg = false;
        for node in 0..grid.node_count() {
            for k in 0..=samples {
                let s = k as f64 / samples as f64;
                let v = g(node, s);
                let d = dg(node, s);
                if !v.is_finite() || !d.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "custom reaction is not finite at node {node}, s = {s}"
                    )));
                }
                any_pos |= v > 0.0;
                any_neg |= v < 0.0;
                if k > 0 && k < samples {
                    let fd = (g(node, s + step) - g(node, s - step)) / (2.0 * step);
                    if (fd - d).abs() > 1e-4 * (1.0 + d.abs()) {
                        return Err(Error::InvalidParameter(format!(
                            "custom derivative {d} disagrees with finite difference {fd} at node {node}, s = {s}"
                        )));
                    }
                }
            }
        }
        let sign = match (any_pos, any_neg) {
            (false, false) => ReactionSign::Zero,
            (true, false) => ReactionSign::NonNegative,
            (false, true) => ReactionSign::NonPositive,
            (true, true) => ReactionSign::Indefinite,
        };
        Self::validated(grid, Reaction::Custom { g, dg }, parts.lipschitz, sign)
    }

    fn validated(grid: Grid, kind: Reaction, lipschitz: f64, sign: ReactionSign) -> Result<Self> {
        let spec = Self {
            grid,
            kind,
            lipschitz,
            sign,
        };
        for node in 0..grid.node_count() {
            let g0 = spec.value_at(node, 0.0);
            let g1 = spec.value_at(node, 1.0);
            if g0 < 0.0 || g1 > 0.0 {
                return Err(Error::ReactionSign { node, g0, g1 });
            }
        }
        Ok(spec)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> &Reaction {
        &self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn sign(&self) -> ReactionSign {
        self.sign
    }

    /// `g(x_node, s)`, constant outside `[0, 1]`.
    pub fn value_at(&self, node: usize, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match &self.kind {
            Reaction::Logistic { alpha } => alpha[node] * s * (1.0 - s),
            Reaction::Bertozzi { beta, target } => beta[node] * (target[node] - s),
            Reaction::Oono { sigma } => -sigma[node] * s,
            Reaction::Custom { g, .. } => g(node, s),
        }
    }

    /// `∂g/∂s (x_node, s)`, zero outside `[0, 1]`.
    pub fn deriv_at(&self, node: usize, s: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        match &self.kind {
            Reaction::Logistic { alpha } => alpha[node] * (1.0 - 2.0 * s),
            Reaction::Bertozzi { beta, .. } => -beta[node],
            Reaction::Oono { sigma } => -sigma[node],
            Reaction::Custom { dg, .. } => dg(node, s),
        }
    }

    pub(crate) fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, (o, &s)) in out.iter_mut().zip(u).enumerate() {
            *o = self.value_at(i, s);
        }
    }

    pub(crate) fn deriv_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, (o, &s)) in out.iter_mut().zip(u).enumerate() {
            *o = self.deriv_at(i, s);
        }
    }

    pub fn evaluate(&self, u: &ScalarField) -> Result<ScalarField> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut out = vec![0.0; u.len()];
        self.eval_into(u.values(), &mut out);
        Ok(ScalarField::from_vec_unchecked(self.grid, out))
    }

    pub fn derivative(&self, u: &ScalarField) -> Result<ScalarField> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut out = vec![0.0; u.len()];
        self.deriv_into(u.values(), &mut out);
        Ok(ScalarField::from_vec_unchecked(self.grid, out))
    }

    /// `max_{x, s ∈ [0,1]} |∂g/∂s|`.
    pub fn max_abs_deriv(&self) -> f64 {
        match &self.kind {
            Reaction::Logistic { alpha } => max_of(alpha),
            Reaction::Bertozzi { beta, .. } => max_of(beta),
            Reaction::Oono { sigma } => max_of(sigma),
            Reaction::Custom { dg, .. } => {
                let mut m: f64 = 0.0;
                for node in 0..self.grid.node_count() {
                    for k in 0..=200 {
                        m = m.max(dg(node, k as f64 / 200.0).abs());
                    }
                }
                m
            }
        }
    }
}

/// Reaction with zeros at 0, 1/2 and 1: `g(s) = c s (1 − s)(1 − 2s)`.
/// Each constant 0, 1/2, 1 is then a stationary state.
pub fn tristable(grid: Grid, amplitude: f64) -> Result<ReactionSpec> {
    let c = amplitude;
    let g: ReactionFn = Arc::new(move |_, s| c * s * (1.0 - s) * (1.0 - 2.0 * s));
    let dg: ReactionFn = Arc::new(move |_, s| c * (1.0 - 6.0 * s + 6.0 * s * s));
    ReactionSpec::custom(
        grid,
        CustomReaction {
            g: Some(g),
            dg: Some(dg),
            lipschitz: c.abs(),
        },
    )
}
