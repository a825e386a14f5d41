//! Nonlocal Cahn-Hilliard dynamics with reaction on cell-centred grids.

pub mod config;
pub mod diagnostics;
pub mod dump;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod model;
mod par;
pub mod runner;
pub mod tangent;
pub mod timestepper;

pub use config::{parse_config, Command, RunConfig};
pub use error::{Error, Result};
pub use grid::{Grid, ScalarField};
pub use kernels::{KernelConstants, KernelFamily, KernelOp, KernelSpec};
pub use model::{Reaction, ReactionSpec};
pub use runner::{execute, Outcome};
pub use timestepper::{ClampPolicy, SolverConfig, State};
