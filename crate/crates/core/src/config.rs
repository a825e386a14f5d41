//! Scenario configuration: flat `section.key = value` lines with `#`
//! comments. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::fs::File;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dump;
use crate::equilibrium::{EquilibriumConfig, Regularization};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::kernels::{KernelFamily, KernelOp, KernelSpec};
use crate::model::{tristable, ReactionSpec};
use crate::tangent::TraceConfig;
use crate::timestepper::{ClampPolicy, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Run,
    Pair,
    Equilibrium,
    Remainder,
    Trace,
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "run" => Self::Run,
            "pair" => Self::Pair,
            "equilibrium" => Self::Equilibrium,
            "remainder" => Self::Remainder,
            "trace" => Self::Trace,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown command `{s}` (expected run, pair, equilibrium, remainder or trace)"
                )))
            }
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Run => "run",
            Self::Pair => "pair",
            Self::Equilibrium => "equilibrium",
            Self::Remainder => "remainder",
            Self::Trace => "trace",
        })
    }
}

/// A spatially varying coefficient: a constant or `base + amp·cos(mode·π·x/L)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coefficient {
    Const(f64),
    Cosine { base: f64, amp: f64, mode: u32 },
}

impl Coefficient {
    pub fn field(&self, grid: Grid) -> ScalarField {
        match *self {
            Self::Const(c) => ScalarField::constant(grid, c),
            Self::Cosine { base, amp, mode } => {
                let l = grid.length();
                ScalarField::from_fn(grid, |x| base + amp * (mode as f64 * PI * x[0] / l).cos())
            }
        }
    }
}

impl FromStr for Coefficient {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(inner) = s.strip_prefix("cos(").and_then(|r| r.strip_suffix(')')) {
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err("cos(...) takes base, amplitude and mode".into());
            }
            let num = |p: &str| {
                p.parse::<f64>()
                    .map_err(|_| format!("`{p}` is not a number"))
            };
            return Ok(Self::Cosine {
                base: num(parts[0])?,
                amp: num(parts[1])?,
                mode: parts[2]
                    .parse()
                    .map_err(|_| format!("`{}` is not a mode number", parts[2]))?,
            });
        }
        s.parse::<f64>()
            .map(Self::Const)
            .map_err(|_| format!("`{s}` is neither a number nor cos(base, amp, mode)"))
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const(c) => write!(f, "{c}"),
            Self::Cosine { base, amp, mode } => write!(f, "cos({base}, {amp}, {mode})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReactionConfig {
    None,
    Logistic {
        alpha: Coefficient,
    },
    /// `beta = None` picks the contraction threshold of the kernel plus a margin.
    Bertozzi {
        beta: Option<f64>,
        target: Coefficient,
    },
    Oono {
        sigma: Coefficient,
    },
    Tristable {
        c: f64,
    },
}

/// Margin added to the kernel threshold when `reaction.beta = auto`.
pub const AUTO_BETA_MARGIN: f64 = 1.5;

#[derive(Clone, Debug, PartialEq)]
pub enum InitConfig {
    Constant {
        value: f64,
    },
    Cosine {
        value: f64,
        amplitude: f64,
        mode: u32,
    },
    Random {
        lo: f64,
        hi: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PairConfig {
    /// Second datum drawn as a fresh random field with this seed.
    Reseed { seed: Option<u64> },
    /// Second datum is the first one plus a constant, clamped to `[0, 1]`.
    Shift { shift: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RemainderConfig {
    pub eps: Vec<f64>,
    pub t: f64,
    pub direction_mode: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumSeeds {
    pub constants: Vec<f64>,
    pub random: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: Grid,
    pub kernel: KernelSpec,
    pub reaction: ReactionConfig,
    pub solver: SolverConfig,
    pub init: InitConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Steps between field snapshots; 0 keeps only the first and last.
    pub snapshot_every: usize,
    pub pair: PairConfig,
    pub equilibrium: EquilibriumConfig,
    pub equilibrium_seeds: EquilibriumSeeds,
    pub remainder: RemainderConfig,
    pub trace: TraceConfig,
    pub trace_n_max: usize,
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `section.key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.split('.').count() != 2 || key.split('.').any(str::is_empty) {
                return Err(Error::Config {
                    line,
                    msg: format!("key `{key}` is not of the form section.key"),
                });
            }
            if value.is_empty() {
                return Err(Error::Config {
                    line,
                    msg: format!("`{key}` has no value"),
                });
            }
            if let Some((_, first)) = map.insert(key.to_string(), (value.to_string(), line)) {
                return Err(Error::Config {
                    line,
                    msg: format!("`{key}` already set on line {first}"),
                });
            }
        }
        Ok(Self { map })
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<(T, usize)>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(|x| Some((x, line)))
                .map_err(|e| Error::Config {
                    line,
                    msg: format!("`{key}`: {e}"),
                }),
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.map_or(default, |(v, _)| v))
    }

    fn list(&mut self, key: &str) -> Result<Option<(Vec<f64>, usize)>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(|x| Some((x, line)))
                .map_err(|_| Error::Config {
                    line,
                    msg: format!("`{key}` must be a comma-separated list of numbers"),
                }),
        }
    }

    /// A numeric key that must satisfy `ok`; the error names the key.
    fn checked(
        &mut self,
        key: &str,
        default: f64,
        ok: impl Fn(f64) -> bool,
        rule: &str,
    ) -> Result<f64> {
        match self.get::<f64>(key)? {
            None => Ok(default),
            Some((v, _)) if ok(v) && v.is_finite() => Ok(v),
            Some((v, line)) => Err(Error::Config {
                line,
                msg: format!(
                    "{} must be {rule}, got {v}",
                    key.split('.').nth(1).unwrap_or(key)
                ),
            }),
        }
    }

    /// A keyword value and its line (0 when defaulted).
    fn choice(&mut self, key: &str, default: &str) -> (String, usize) {
        self.raw(key).unwrap_or_else(|| (default.to_string(), 0))
    }

    fn reject_unused(&mut self, prefix: &str, why: &str) -> Result<()> {
        if let Some((key, (_, line))) = self.map.iter().find(|(k, _)| k.starts_with(prefix)) {
            return Err(Error::Config {
                line: *line,
                msg: format!("`{key}` {why}"),
            });
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().min_by_key(|(_, (_, line))| *line) {
            None => Ok(()),
            Some((key, (_, line))) => Err(Error::Config {
                line,
                msg: format!("unknown key `{key}`"),
            }),
        }
    }
}

fn positive(v: f64) -> bool {
    v > 0.0
}

/// Independent uniform values in `[lo, hi)` at every node, reproducible from
/// `seed`.
pub fn random_field(grid: Grid, seed: u64, lo: f64, hi: f64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.node_count())
        .map(|_| if lo < hi { rng.gen_range(lo..hi) } else { lo })
        .collect();
    ScalarField::from_vec_unchecked(grid, values)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut e = Entries::parse(text)?;

    let dim = e.or("grid.dim", 1usize)?;
    let n = match e.get::<usize>("grid.n")? {
        Some((n, _)) => n,
        None => {
            return Err(Error::Config {
                line: 0,
                msg: "grid.n is required".into(),
            })
        }
    };
    let length = e.checked("grid.length", 1.0, positive, "positive")?;
    let grid = Grid::new(dim, n, length)?;

    let (family, family_line) = e.choice("kernel.family", "gaussian");
    let kernel = match family.as_str() {
        "gaussian" => KernelSpec::gaussian(
            e.checked("kernel.c", 1.0, |v| v >= 0.0, "non-negative")?,
            e.checked("kernel.lambda", 0.1, positive, "positive")?,
        ),
        "mollifier" => KernelSpec::mollifier(
            e.checked("kernel.c", 1.0, |v| v >= 0.0, "non-negative")?,
            e.checked("kernel.radius", 0.2, positive, "positive")?,
        ),
        "newton" => KernelSpec::newton(e.checked("kernel.k", 1.0, |v| v >= 0.0, "non-negative")?),
        "zero" => KernelSpec::zero(),
        other => {
            return Err(Error::Config {
                line: family_line,
                msg: format!("unknown kernel family `{other}`"),
            })
        }
    };
    e.reject_unused(
        "kernel.",
        &format!("is not a parameter of the {family} kernel"),
    )?;
    kernel.validate(&grid)?;

    let (preset, preset_line) = e.choice("reaction.preset", "none");
    let coefficient = |e: &mut Entries, key: &str, default: f64| -> Result<Coefficient> {
        Ok(e.get::<Coefficient>(key)?
            .map_or(Coefficient::Const(default), |(c, _)| c))
    };
    let reaction = match preset.as_str() {
        "none" => ReactionConfig::None,
        "logistic" => ReactionConfig::Logistic {
            alpha: coefficient(&mut e, "reaction.alpha", 1.0)?,
        },
        "bertozzi" => {
            let beta = match e.raw("reaction.beta") {
                None => None,
                Some((v, _)) if v == "auto" => None,
                Some((v, line)) => Some(v.parse::<f64>().map_err(|_| Error::Config {
                    line,
                    msg: "`reaction.beta` must be a number or `auto`".into(),
                })?),
            };
            ReactionConfig::Bertozzi {
                beta,
                target: coefficient(&mut e, "reaction.target", 0.5)?,
            }
        }
        "oono" => ReactionConfig::Oono {
            sigma: coefficient(&mut e, "reaction.sigma", 1.0)?,
        },
        "tristable" => ReactionConfig::Tristable {
            c: e.or("reaction.c", 1.0)?,
        },
        other => {
            return Err(Error::Config {
                line: preset_line,
                msg: format!("unknown reaction preset `{other}`"),
            })
        }
    };
    e.reject_unused(
        "reaction.",
        &format!("is not a parameter of the {preset} preset"),
    )?;

    let defaults = SolverConfig::default();
    let (policy, policy_line) = e.choice("solver.clamp_policy", "clamp");
    let clamp_policy = match policy.as_str() {
        "clamp" => ClampPolicy::ClampAndCount,
        "strict" => ClampPolicy::Strict,
        other => {
            return Err(Error::Config {
                line: policy_line,
                msg: format!("unknown clamp policy `{other}` (expected clamp or strict)"),
            })
        }
    };
    let solver = SolverConfig {
        dt: e.checked("solver.dt", defaults.dt, positive, "positive")?,
        t_end: e.checked("solver.t_end", defaults.t_end, |v| v >= 0.0, "non-negative")?,
        record_every: e.or("solver.record_every", defaults.record_every)?,
        bound_tol: e.checked("solver.bound_tol", defaults.bound_tol, positive, "positive")?,
        clamp_policy,
        cg_tol: e.checked("solver.cg_tol", defaults.cg_tol, positive, "positive")?,
        cg_max_iter: e.or("solver.cg_max_iter", defaults.cg_max_iter)?,
    };

    let seed = e.or("init.seed", 0u64)?;
    let (kind, kind_line) = e.choice("init.kind", "constant");
    let init = match kind.as_str() {
        "constant" => InitConfig::Constant {
            value: e.checked("init.value", 0.5, |v| (0.0..=1.0).contains(&v), "in [0, 1]")?,
        },
        "cosine" => InitConfig::Cosine {
            value: e.checked("init.value", 0.5, |v| (0.0..=1.0).contains(&v), "in [0, 1]")?,
            amplitude: e.or("init.amplitude", 0.1)?,
            mode: e.or("init.mode", 1u32)?,
        },
        "random" => InitConfig::Random {
            lo: e.checked("init.lo", 0.1, |v| (0.0..=1.0).contains(&v), "in [0, 1]")?,
            hi: e.checked("init.hi", 0.9, |v| (0.0..=1.0).contains(&v), "in [0, 1]")?,
        },
        "file" => match e.raw("init.path") {
            Some((p, _)) => InitConfig::File { path: p.into() },
            None => {
                return Err(Error::Config {
                    line: 0,
                    msg: "init.kind = file needs init.path".into(),
                })
            }
        },
        other => {
            return Err(Error::Config {
                line: kind_line,
                msg: format!("unknown initial condition `{other}`"),
            })
        }
    };
    e.reject_unused("init.", &format!("is not used by init.kind = {kind}"))?;

    let output_dir = PathBuf::from(e.or("output.dir", "out".to_string())?);
    let snapshot_every = e.or("output.snapshot_every", 0usize)?;

    let (pair_kind, pair_line) = e.choice("pair.kind", "reseed");
    let pair = match pair_kind.as_str() {
        "reseed" => PairConfig::Reseed {
            seed: e.get::<u64>("pair.seed")?.map(|(s, _)| s),
        },
        "shift" => PairConfig::Shift {
            shift: e.or("pair.shift", 0.01)?,
        },
        other => {
            return Err(Error::Config {
                line: pair_line,
                msg: format!("unknown pair kind `{other}` (expected reseed or shift)"),
            })
        }
    };
    e.reject_unused("pair.", "does not apply to this pair kind")?;

    let eq_defaults = EquilibriumConfig::default();
    let (reg, reg_line) = e.choice("equilibrium.regularization", "proximal");
    let regularization = match reg.as_str() {
        "proximal" => Regularization::Proximal,
        "literal" => Regularization::Literal,
        other => {
            return Err(Error::Config {
                line: reg_line,
                msg: format!("unknown regularization `{other}` (expected proximal or literal)"),
            })
        }
    };
    let equilibrium = EquilibriumConfig {
        eps_schedule: e
            .list("equilibrium.eps_schedule")?
            .map_or(eq_defaults.eps_schedule.clone(), |(v, _)| v),
        damping: e.or("equilibrium.damping", eq_defaults.damping)?,
        picard_tol: e.checked(
            "equilibrium.picard_tol",
            eq_defaults.picard_tol,
            positive,
            "positive",
        )?,
        residual_tol: e.checked(
            "equilibrium.residual_tol",
            eq_defaults.residual_tol,
            positive,
            "positive",
        )?,
        max_iter: e.or("equilibrium.max_iter", eq_defaults.max_iter)?,
        cg_tol: e.checked(
            "equilibrium.cg_tol",
            eq_defaults.cg_tol,
            positive,
            "positive",
        )?,
        cg_max_iter: eq_defaults.cg_max_iter,
        dedup_tol: e.checked(
            "equilibrium.dedup_tol",
            eq_defaults.dedup_tol,
            positive,
            "positive",
        )?,
        regularization,
    };
    equilibrium.validate()?;
    let equilibrium_seeds = EquilibriumSeeds {
        constants: e.list("equilibrium.seeds")?.map_or(Vec::new(), |(v, _)| v),
        random: e.or("equilibrium.random_seeds", 0usize)?,
    };

    let remainder = RemainderConfig {
        eps: e
            .list("remainder.eps")?
            .map_or(vec![1e-2, 3e-3, 1e-3, 3e-4], |(v, _)| v),
        t: e.checked("remainder.t", 0.5, positive, "positive")?,
        direction_mode: e.or("remainder.direction_mode", 1u32)?,
    };

    let tdef = TraceConfig::default();
    let trace = TraceConfig {
        t_end: e.checked("trace.t_end", tdef.t_end, positive, "positive")?,
        ortho_every: e.or("trace.ortho_every", tdef.ortho_every)?,
        transient: e.checked(
            "trace.transient",
            tdef.transient,
            |v| v >= 0.0,
            "non-negative",
        )?,
        samples: e.or("trace.samples", tdef.samples)?,
    };
    let trace_n_max = e.or("trace.n_max", 20usize)?;

    e.finish()?;

    let cfg = RunConfig {
        grid,
        kernel,
        reaction,
        solver,
        init,
        seed,
        output_dir,
        snapshot_every,
        pair,
        equilibrium,
        equilibrium_seeds,
        remainder,
        trace,
        trace_n_max,
    };
    cfg.check_ranges()?;
    Ok(cfg)
}

impl RunConfig {
    fn check_ranges(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if let InitConfig::Random { lo, hi } = self.init {
            if lo > hi {
                return bad(format!("init.lo = {lo} exceeds init.hi = {hi}"));
            }
        }
        if let InitConfig::Cosine {
            value, amplitude, ..
        } = self.init
        {
            if value - amplitude.abs() < 0.0 || value + amplitude.abs() > 1.0 {
                return bad("cosine initial condition leaves [0, 1]".into());
            }
        }
        if let InitConfig::File { path } = &self.init {
            if !path.exists() {
                return bad(format!(
                    "initial condition file {} does not exist",
                    path.display()
                ));
            }
        }
        if self.snapshot_every > 0 && !self.snapshot_every.is_multiple_of(self.solver.record_every)
        {
            return bad("output.snapshot_every must be a multiple of solver.record_every".into());
        }
        if self.trace.ortho_every == 0 || self.trace.samples == 0 {
            return bad("trace.ortho_every and trace.samples must be at least 1".into());
        }
        if self.trace_n_max > self.grid.node_count() {
            return bad("trace.n_max exceeds the node count".into());
        }
        if self
            .equilibrium_seeds
            .constants
            .iter()
            .any(|c| !(0.0..=1.0).contains(c))
        {
            return bad("equilibrium seeds must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn kernel_op(&self) -> Result<KernelOp> {
        KernelOp::assemble(&self.kernel, &self.grid)
    }

    /// The Bertozzi rate actually used, resolving `auto` from the kernel.
    pub fn resolved_beta(&self, op: &KernelOp) -> Option<f64> {
        match &self.reaction {
            ReactionConfig::Bertozzi { beta, .. } => Some(
                beta.unwrap_or_else(|| op.constants().contraction_threshold() + AUTO_BETA_MARGIN),
            ),
            _ => None,
        }
    }

    pub fn reaction_spec(&self, op: &KernelOp) -> Result<ReactionSpec> {
        let g = self.grid;
        match &self.reaction {
            ReactionConfig::None => Ok(ReactionSpec::zero(g)),
            ReactionConfig::Logistic { alpha } => ReactionSpec::logistic(&alpha.field(g)),
            ReactionConfig::Bertozzi { target, .. } => {
                let beta = self.resolved_beta(op).unwrap_or_default();
                ReactionSpec::bertozzi(&ScalarField::constant(g, beta), &target.field(g))
            }
            ReactionConfig::Oono { sigma } => ReactionSpec::oono(&sigma.field(g)),
            ReactionConfig::Tristable { c } => tristable(g, *c),
        }
    }

    pub fn random_field(&self, seed: u64, lo: f64, hi: f64) -> ScalarField {
        random_field(self.grid, seed, lo, hi)
    }

    pub fn initial_field(&self) -> Result<ScalarField> {
        let g = self.grid;
        Ok(match &self.init {
            InitConfig::Constant { value } => ScalarField::constant(g, *value),
            InitConfig::Cosine {
                value,
                amplitude,
                mode,
            } => {
                let (l, k) = (g.length(), *mode as f64);
                let two_d = g.dim() == 2;
                ScalarField::from_fn(g, |x| {
                    let c = (k * PI * x[0] / l).cos();
                    value
                        + amplitude
                            * if two_d {
                                c * (k * PI * x[1] / l).cos()
                            } else {
                                c
                            }
                })
            }
            InitConfig::Random { lo, hi } => self.random_field(self.seed, *lo, *hi),
            InitConfig::File { path } => {
                let (u, _) = dump::read_field(File::open(path)?)?;
                if u.grid() != &g {
                    return Err(Error::GridMismatch);
                }
                u
            }
        })
    }

    /// Second initial datum for the `pair` command.
    pub fn pair_field(&self, first: &ScalarField) -> ScalarField {
        match self.pair {
            PairConfig::Reseed { seed } => {
                let (lo, hi) = match self.init {
                    InitConfig::Random { lo, hi } => (lo, hi),
                    _ => (0.1, 0.9),
                };
                self.random_field(seed.unwrap_or(self.seed.wrapping_add(1)), lo, hi)
            }
            PairConfig::Shift { shift } => first.map(|v| (v + shift).clamp(0.0, 1.0)),
        }
    }

    pub fn equilibrium_seed_fields(&self) -> Result<Vec<ScalarField>> {
        let s = &self.equilibrium_seeds;
        let mut seeds: Vec<ScalarField> = s
            .constants
            .iter()
            .map(|&c| ScalarField::constant(self.grid, c))
            .collect();
        for k in 0..s.random {
            seeds.push(self.random_field(self.seed.wrapping_add(k as u64), 0.1, 0.9));
        }
        if seeds.is_empty() {
            seeds.push(self.initial_field()?);
        }
        Ok(seeds)
    }

    /// Initial data for the trace supremum: the configured datum followed by
    /// random fields.
    pub fn trace_initial_fields(&self) -> Result<Vec<ScalarField>> {
        let mut out = vec![self.initial_field()?];
        for k in 1..self.trace.samples {
            out.push(self.random_field(self.seed.wrapping_add(k as u64), 0.2, 0.8));
        }
        Ok(out)
    }

    pub fn remainder_direction(&self) -> ScalarField {
        let (l, k) = (self.grid.length(), self.remainder.direction_mode as f64);
        let d = ScalarField::from_fn(self.grid, |x| (k * PI * x[0] / l).cos());
        let n = d.norm_l2();
        d.scaled(1.0 / n)
    }

    /// Every setting, one `section.key = value` line each; parses back to
    /// the same configuration.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("grid.dim", self.grid.dim().to_string());
        line("grid.n", self.grid.n().to_string());
        line("grid.length", self.grid.length().to_string());
        match self.kernel.family {
            KernelFamily::Gaussian { c, lambda } => {
                line("kernel.family", "gaussian".into());
                line("kernel.c", c.to_string());
                line("kernel.lambda", lambda.to_string());
            }
            KernelFamily::Mollifier { c, radius } => {
                line("kernel.family", "mollifier".into());
                line("kernel.c", c.to_string());
                line("kernel.radius", radius.to_string());
            }
            KernelFamily::Newton { k } => {
                line("kernel.family", "newton".into());
                line("kernel.k", k.to_string());
            }
        }
        match &self.reaction {
            ReactionConfig::None => line("reaction.preset", "none".into()),
            ReactionConfig::Logistic { alpha } => {
                line("reaction.preset", "logistic".into());
                line("reaction.alpha", alpha.to_string());
            }
            ReactionConfig::Bertozzi { beta, target } => {
                line("reaction.preset", "bertozzi".into());
                line(
                    "reaction.beta",
                    beta.map_or("auto".into(), |b| b.to_string()),
                );
                line("reaction.target", target.to_string());
            }
            ReactionConfig::Oono { sigma } => {
                line("reaction.preset", "oono".into());
                line("reaction.sigma", sigma.to_string());
            }
            ReactionConfig::Tristable { c } => {
                line("reaction.preset", "tristable".into());
                line("reaction.c", c.to_string());
            }
        }
        let sv = &self.solver;
        line("solver.dt", sv.dt.to_string());
        line("solver.t_end", sv.t_end.to_string());
        line("solver.record_every", sv.record_every.to_string());
        line("solver.bound_tol", sv.bound_tol.to_string());
        line(
            "solver.clamp_policy",
            match sv.clamp_policy {
                ClampPolicy::ClampAndCount => "clamp",
                ClampPolicy::Strict => "strict",
            }
            .into(),
        );
        line("solver.cg_tol", sv.cg_tol.to_string());
        line("solver.cg_max_iter", sv.cg_max_iter.to_string());
        line("init.seed", self.seed.to_string());
        match &self.init {
            InitConfig::Constant { value } => {
                line("init.kind", "constant".into());
                line("init.value", value.to_string());
            }
            InitConfig::Cosine {
                value,
                amplitude,
                mode,
            } => {
                line("init.kind", "cosine".into());
                line("init.value", value.to_string());
                line("init.amplitude", amplitude.to_string());
                line("init.mode", mode.to_string());
            }
            InitConfig::Random { lo, hi } => {
                line("init.kind", "random".into());
                line("init.lo", lo.to_string());
                line("init.hi", hi.to_string());
            }
            InitConfig::File { path } => {
                line("init.kind", "file".into());
                line("init.path", path.display().to_string());
            }
        }
        line("output.dir", self.output_dir.display().to_string());
        line("output.snapshot_every", self.snapshot_every.to_string());
        match self.pair {
            PairConfig::Reseed { seed } => {
                line("pair.kind", "reseed".into());
                if let Some(seed) = seed {
                    line("pair.seed", seed.to_string());
                }
            }
            PairConfig::Shift { shift } => {
                line("pair.kind", "shift".into());
                line("pair.shift", shift.to_string());
            }
        }
        let eq = &self.equilibrium;
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        line("equilibrium.eps_schedule", join(&eq.eps_schedule));
        line("equilibrium.damping", eq.damping.to_string());
        line("equilibrium.picard_tol", eq.picard_tol.to_string());
        line("equilibrium.residual_tol", eq.residual_tol.to_string());
        line("equilibrium.max_iter", eq.max_iter.to_string());
        line("equilibrium.cg_tol", eq.cg_tol.to_string());
        line("equilibrium.dedup_tol", eq.dedup_tol.to_string());
        line(
            "equilibrium.regularization",
            match eq.regularization {
                Regularization::Proximal => "proximal",
                Regularization::Literal => "literal",
            }
            .into(),
        );
        if !self.equilibrium_seeds.constants.is_empty() {
            line("equilibrium.seeds", join(&self.equilibrium_seeds.constants));
        }
        line(
            "equilibrium.random_seeds",
            self.equilibrium_seeds.random.to_string(),
        );
        line("remainder.eps", join(&self.remainder.eps));
        line("remainder.t", self.remainder.t.to_string());
        line(
            "remainder.direction_mode",
            self.remainder.direction_mode.to_string(),
        );
        line("trace.n_max", self.trace_n_max.to_string());
        line("trace.t_end", self.trace.t_end.to_string());
        line("trace.ortho_every", self.trace.ortho_every.to_string());
        line("trace.transient", self.trace.transient.to_string());
        line("trace.samples", self.trace.samples.to_string());
        s
    }
}
