//! Uniform cell-centred grids on the box `[0, L]^d` with zero-flux boundaries.
//!
//! Every spatial operator here is written in flux form: a value is computed
//! once per interior face and added to one neighbour, subtracted from the
//! other. Boundary faces carry no flux, so the weighted sum of any operator
//! output telescopes to zero.

use crate::error::{Error, Result};
use crate::model::mobility;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
    h: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if n < 8 {
            return Err(Error::TooFewNodes(n));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "domain length must be positive, got {length}"
            )));
        }
        Ok(Self {
            dim,
            n,
            length,
            h: length / n as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Quadrature weight of one node, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// `|Ω| = L^d`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Per-axis indices of a flat node index. Axis 0 varies fastest.
    pub fn axis_index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx % self.n, idx / self.n],
        }
    }

    /// Cell-centre coordinates `(i + 1/2) h`; the unused second slot is 0 in 1D.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.axis_index(idx);
        let c = |k: usize| (k as f64 + 0.5) * self.h;
        match self.dim {
            1 => [c(i), 0.0],
            _ => [c(i), c(j)],
        }
    }

    /// Visits every interior face once as `(left, right)` node indices.
    pub fn for_each_face(&self, mut visit: impl FnMut(usize, usize)) {
        let n = self.n;
        match self.dim {
            1 => {
                for i in 0..n - 1 {
                    visit(i, i + 1);
                }
            }
            _ => {
                for row in 0..n {
                    let base = row * n;
                    for i in 0..n - 1 {
                        visit(base + i, base + i + 1);
                    }
                }
                for row in 0..n - 1 {
                    let base = row * n;
                    for i in 0..n {
                        visit(base + i, base + n + i);
                    }
                }
            }
        }
    }
}

/// Nodal values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite field value at node {i}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.node_count()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|i| f(grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ensure_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Spatial average `(1/|Ω|) ∫ u`; the node weights are uniform.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Discrete L² inner product `Σ a_i b_i h^d`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        dot(&self.values, &other.values) * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist_l2(&self, other: &ScalarField) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// `‖∇f‖_{L²}` from face differences.
    pub fn h1_seminorm(&self) -> f64 {
        let h = self.grid.h;
        let mut s = 0.0;
        self.grid.for_each_face(|i, j| {
            let d = (self.values[j] - self.values[i]) / h;
            s += d * d;
        });
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        self.map(|v| a * v)
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        axpy(a, &x.values, &mut self.values);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out = Δ_h f` with mirrored ghosts (zero normal derivative).
pub(crate) fn laplacian_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    out.iter_mut().for_each(|o| *o = 0.0);
    grid.for_each_face(|i, j| {
        let flux = (f[j] - f[i]) * inv_h2;
        out[i] += flux;
        out[j] -= flux;
    });
}

pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.len()];
    laplacian_into(&f.grid, &f.values, &mut out);
    ScalarField::from_vec_unchecked(f.grid, out)
}

/// Adds `∇·(μ(u)∇w)` into `out`. Face mobility is the arithmetic mean of the
/// nodal mobilities; boundary faces carry no flux.
pub(crate) fn add_div_mu_grad(grid: &Grid, u: &[f64], w: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    grid.for_each_face(|i, j| {
        let mu_face = 0.5 * (mobility(u[i]) + mobility(u[j]));
        let flux = mu_face * (w[j] - w[i]) * inv_h2;
        out[i] += flux;
        out[j] -= flux;
    });
}

pub fn div_mu_grad(u: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
    u.ensure_same_grid(w)?;
    let mut out = vec![0.0; u.len()];
    add_div_mu_grad(&u.grid, &u.values, &w.values, &mut out);
    Ok(ScalarField::from_vec_unchecked(u.grid, out))
}
