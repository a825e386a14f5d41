//! wasm-bindgen bindings for the browser demo in `www/`.

use std::f64::consts::PI;

use nlch::config::random_field;
use nlch::diagnostics::energy;
use nlch::tangent::{trace_curve as trace_values, TraceConfig};
use nlch::timestepper::Stepper;
use nlch::{Grid, KernelOp, KernelSpec, ReactionSpec, ScalarField, SolverConfig, State};
use wasm_bindgen::prelude::*;

const MAX_NODES: usize = 1024;

fn js(e: nlch::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn reaction(grid: Grid, preset: &str, rate: f64) -> nlch::Result<ReactionSpec> {
    let c = ScalarField::constant(grid, rate);
    match preset {
        "none" => Ok(ReactionSpec::zero(grid)),
        "logistic" => ReactionSpec::logistic(&c),
        "oono" => ReactionSpec::oono(&c),
        "bertozzi" => {
            let l = grid.length();
            let target = ScalarField::from_fn(grid, |x| 0.5 + 0.3 * (PI * x[0] / l).cos());
            ReactionSpec::bertozzi(&c, &target)
        }
        other => Err(nlch::Error::InvalidParameter(format!(
            "unknown preset `{other}`"
        ))),
    }
}

/// A one-dimensional run on `[0, 1]` stepped on demand.
#[wasm_bindgen]
pub struct Simulation {
    op: KernelOp,
    reaction: ReactionSpec,
    cfg: SolverConfig,
    state: State,
}

#[wasm_bindgen]
impl Simulation {
    /// Gaussian kernel `c·exp(−r²/λ)`, reaction `preset` with rate `rate`,
    /// random initial data seeded by `seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(
        n: usize,
        kernel_c: f64,
        lambda: f64,
        preset: &str,
        rate: f64,
        dt: f64,
        seed: u32,
    ) -> Result<Simulation, JsError> {
        if n > MAX_NODES {
            return Err(JsError::new(&format!("at most {MAX_NODES} nodes")));
        }
        Self::build(n, kernel_c, lambda, preset, rate, dt, seed).map_err(js)
    }

    fn build(
        n: usize,
        kernel_c: f64,
        lambda: f64,
        preset: &str,
        rate: f64,
        dt: f64,
        seed: u32,
    ) -> nlch::Result<Simulation> {
        let grid = Grid::new(1, n, 1.0)?;
        let op = KernelOp::assemble(&KernelSpec::gaussian(kernel_c, lambda), &grid)?;
        let reaction = reaction(grid, preset, rate)?;
        let cfg = SolverConfig {
            dt,
            ..Default::default()
        };
        cfg.validate(&reaction)?;
        let state = State::new(random_field(grid, seed as u64, 0.1, 0.9), &op)?;
        Ok(Simulation {
            op,
            reaction,
            cfg,
            state,
        })
    }

    /// Advances by `steps` time steps.
    pub fn advance(&mut self, steps: usize) -> Result<(), JsError> {
        let mut stepper = Stepper::new(&self.reaction, &self.op, &self.cfg).map_err(js)?;
        for _ in 0..steps {
            stepper.step(&mut self.state).map_err(js)?;
        }
        Ok(())
    }

    pub fn field(&self) -> Vec<f64> {
        self.state.u.values().to_vec()
    }

    pub fn coords(&self) -> Vec<f64> {
        let g = self.state.u.grid();
        (0..g.node_count()).map(|i| g.coords(i)[0]).collect()
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn mass(&self) -> f64 {
        self.state.u.mean()
    }

    pub fn energy(&self) -> f64 {
        energy(&self.state.u, &self.op).unwrap_or(f64::NAN)
    }
}

/// `K(r)` at `samples` evenly spaced radii in `[0, extent]`. `width` is the
/// Gaussian λ or the mollifier radius; Newton ignores it.
#[wasm_bindgen]
pub fn kernel_profile(
    family: &str,
    c: f64,
    width: f64,
    samples: usize,
    extent: f64,
) -> Result<Vec<f64>, JsError> {
    let spec = match family {
        "gaussian" => KernelSpec::gaussian(c, width),
        "mollifier" => KernelSpec::mollifier(c, width),
        "newton" => KernelSpec::newton(c),
        other => return Err(JsError::new(&format!("unknown kernel `{other}`"))),
    };
    let last = samples.saturating_sub(1).max(1) as f64;
    Ok((0..samples)
        .map(|k| {
            let r = extent * k as f64 / last;
            let v = spec.eval(r);
            if v.is_finite() {
                v
            } else {
                f64::NAN
            }
        })
        .collect())
}

/// Time-averaged traces for frames of size `1..=n_max` on a 64-node decay
/// scenario with rate `sigma` and a Gaussian kernel of amplitude `kernel_c`.
#[wasm_bindgen]
pub fn trace_curve(
    sigma: f64,
    kernel_c: f64,
    n_max: usize,
    t_end: f64,
) -> Result<Vec<f64>, JsError> {
    trace_inner(sigma, kernel_c, n_max, t_end).map_err(js)
}

fn trace_inner(sigma: f64, kernel_c: f64, n_max: usize, t_end: f64) -> nlch::Result<Vec<f64>> {
    let grid = Grid::new(1, 64, 1.0)?;
    let op = KernelOp::assemble(&KernelSpec::gaussian(kernel_c, 0.1), &grid)?;
    let reaction = ReactionSpec::oono(&ScalarField::constant(grid, sigma))?;
    let u0 = ScalarField::from_fn(grid, |x| 0.5 + 0.3 * (PI * x[0]).cos());
    let tcfg = TraceConfig {
        t_end,
        transient: (0.5 * t_end).min(1.0),
        ..Default::default()
    };
    let cfg = SolverConfig {
        dt: 1e-3,
        ..Default::default()
    };
    Ok(trace_values(&u0, n_max, &reaction, &op, &cfg, &tcfg)?.values)
}
