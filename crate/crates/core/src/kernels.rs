//! Dense convolution operators `ρ ↦ ∫_Ω K(|x − y|) ρ(y) dy` on a grid.
//!
//! Weights are assembled by the midpoint rule, `W[i][j] = K(|x_i − x_j|) h^d`,
//! from a table indexed by per-axis index offsets, so `W` is symmetric by
//! construction. The log-singular Newton kernel gets the exact cell average of
//! `K` on its diagonal.

use std::f64::consts::{FRAC_PI_4, LN_2};
use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::grid::{laplacian_into, Grid, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelFamily {
    /// `C exp(−|x|²/λ)`
    Gaussian { c: f64, lambda: f64 },
    /// `C exp(−r²/(r² − |x|²))` for `|x| < r`, else 0.
    Mollifier { c: f64, radius: f64 },
    /// `−k ln|x|` in two dimensions.
    Newton { k: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub fn gaussian(c: f64, lambda: f64) -> Self {
        Self {
            family: KernelFamily::Gaussian { c, lambda },
        }
    }

    pub fn mollifier(c: f64, radius: f64) -> Self {
        Self {
            family: KernelFamily::Mollifier { c, radius },
        }
    }

    /// Newton potential with constant `k` (1 when unspecified).
    pub fn newton(k: f64) -> Self {
        Self {
            family: KernelFamily::Newton { k },
        }
    }

    /// The null kernel (Gaussian with `C = 0`).
    pub fn zero() -> Self {
        Self::gaussian(0.0, 1.0)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self.family {
            KernelFamily::Gaussian { c, lambda } => {
                if !(c >= 0.0 && c.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
                    return bad(format!(
                        "gaussian kernel needs C >= 0 and λ > 0, got C = {c}, λ = {lambda}"
                    ));
                }
            }
            KernelFamily::Mollifier { c, radius } => {
                if !(c >= 0.0 && c.is_finite()) || !(radius > 0.0 && radius.is_finite()) {
                    return bad(format!(
                        "mollifier needs C >= 0 and radius > 0, got C = {c}, radius = {radius}"
                    ));
                }
            }
            KernelFamily::Newton { k } => {
                if grid.dim() < 2 {
                    return bad("Newton potentials are defined for d >= 2 only".into());
                }
                if !(k >= 0.0 && k.is_finite()) {
                    return bad(format!("Newton constant must be >= 0, got {k}"));
                }
            }
        }
        Ok(())
    }

    /// Pointwise `K(r)` for `r > 0` (and `r = 0` for the smooth families).
    pub fn eval(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian { c, lambda } => c * (-r * r / lambda).exp(),
            KernelFamily::Mollifier { c, radius } => {
                if r < radius {
                    let r2 = radius * radius;
                    c * (-r2 / (r2 - r * r)).exp()
                } else {
                    0.0
                }
            }
            KernelFamily::Newton { k } => -k * r.ln(),
        }
    }

    /// `∫_cell K` over the square cell of side `h` centred at the origin,
    /// used for the singular Newton diagonal. The mean of `ln|x|` over
    /// `[−a, a]²` is `ln a + ½ ln 2 − 3/2 + π/4`.
    pub fn newton_self_cell(k: f64, h: f64) -> f64 {
        let a = 0.5 * h;
        let mean_ln = a.ln() + 0.5 * LN_2 - 1.5 + FRAC_PI_4;
        -k * mean_ln * h * h
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            KernelFamily::Gaussian { c, lambda } => {
                write!(f, "gaussian(C = {c}, lambda = {lambda})")
            }
            KernelFamily::Mollifier { c, radius } => write!(f, "mollifier(C = {c}, h = {radius})"),
            KernelFamily::Newton { k } => write!(f, "newton(d = 2, k_2 = {k})"),
        }
    }
}

/// Constants of the bounds `‖K∗ρ‖_{W^{1,p}} ≤ r_p ‖ρ‖_{L^p}` and
/// `sup_x ∫|K(x − y)| dy`, estimated on the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConstants {
    pub r2: f64,
    pub rinf: f64,
    pub k2_sup: f64,
}

impl KernelConstants {
    /// `½ (r₂/4 + r_∞)²`: the reaction must satisfy `∂g/∂s ≤ −λ` with `λ`
    /// above this for trajectories to contract onto a unique equilibrium.
    pub fn contraction_threshold(&self) -> f64 {
        0.5 * (self.r2 / 4.0 + self.rinf).powi(2)
    }
}

#[derive(Debug)]
pub struct KernelOp {
    grid: Grid,
    spec: KernelSpec,
    /// Row-major `N × N`.
    weights: Vec<f64>,
    kbar: ScalarField,
    constants: OnceLock<KernelConstants>,
}

impl KernelOp {
    pub fn assemble(spec: &KernelSpec, grid: &Grid) -> Result<Self> {
        spec.validate(grid)?;
        let n = grid.n();
        let h = grid.spacing();
        let vol = grid.cell_volume();
        let rows = if grid.dim() == 1 { 1 } else { n };
        // table[dy * n + dx] = K(h |(dx, dy)|) h^d
        let mut table = vec![0.0; rows * n];
        for dy in 0..rows {
            for dx in 0..n {
                let r = h * ((dx * dx + dy * dy) as f64).sqrt();
                let k = match (spec.family, dx + dy) {
                    (KernelFamily::Newton { k }, 0) => KernelSpec::newton_self_cell(k, h),
                    _ => spec.eval(r) * vol,
                };
                if !k.is_finite() {
                    return Err(Error::NonFiniteKernel(r));
                }
                table[dy * n + dx] = k;
            }
        }
        let count = grid.node_count();
        let mut weights = vec![0.0; count * count];
        for i in 0..count {
            let [ix, iy] = grid.axis_index(i);
            let row = &mut weights[i * count..(i + 1) * count];
            for (j, wij) in row.iter_mut().enumerate() {
                let [jx, jy] = grid.axis_index(j);
                *wij = table[iy.abs_diff(jy) * n + ix.abs_diff(jx)];
            }
        }
        let kbar = weights
            .chunks_exact(count)
            .map(|row| row.iter().sum())
            .collect();
        Ok(Self {
            grid: *grid,
            spec: *spec,
            weights,
            kbar: ScalarField::from_vec_unchecked(*grid, kbar),
            constants: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.grid.node_count() + j]
    }

    /// `k̄(x_i) = Σ_j W[i][j]`.
    pub fn kbar(&self) -> &ScalarField {
        &self.kbar
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    pub(crate) fn convolve_into(&self, rho: &[f64], out: &mut [f64]) {
        let count = self.grid.node_count();
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(count)) {
            *o = row.iter().zip(rho).map(|(w, r)| w * r).sum();
        }
    }

    pub fn convolve(&self, rho: &ScalarField) -> Result<ScalarField> {
        if rho.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut out = vec![0.0; rho.len()];
        self.convolve_into(rho.values(), &mut out);
        Ok(ScalarField::from_vec_unchecked(self.grid, out))
    }

    /// `out = α W X` for `X` stored column-major with `cols` columns.
    pub(crate) fn convolve_columns(&self, alpha: f64, x: &[f64], cols: usize, out: &mut [f64]) {
        let n = self.grid.node_count();
        debug_assert_eq!(x.len(), n * cols);
        debug_assert_eq!(out.len(), n * cols);
        // SAFETY: all slices hold exactly the extents described by the strides.
        unsafe {
            matrixmultiply::dgemm(
                n,
                n,
                cols,
                alpha,
                self.weights.as_ptr(),
                n as isize,
                1,
                x.as_ptr(),
                1,
                n as isize,
                0.0,
                out.as_mut_ptr(),
                1,
                n as isize,
            );
        }
    }

    pub fn constants(&self) -> KernelConstants {
        *self.constants.get_or_init(|| KernelConstants {
            r2: self.estimate_r2(),
            rinf: self.estimate_rinf(),
            k2_sup: self
                .weights
                .chunks_exact(self.grid.node_count())
                .map(|row| row.iter().map(|w| w.abs()).sum::<f64>())
                .fold(0.0, f64::max),
        })
    }

    /// Power iteration for the L² → H¹ norm: the largest eigenvalue of
    /// `W (I − Δ_h) W`, since `‖Wρ‖²_{H¹} = ⟨Wρ, (I − Δ_h) Wρ⟩`.
    fn estimate_r2(&self) -> f64 {
        let count = self.grid.node_count();
        let mut v: Vec<f64> = (0..count)
            .map(|i| 1.0 + 0.25 * ((i as f64 + 0.5) * 0.7).cos())
            .collect();
        let mut wv = vec![0.0; count];
        let mut lap = vec![0.0; count];
        let mut av = vec![0.0; count];
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            self.convolve_into(&v, &mut wv);
            laplacian_into(&self.grid, &wv, &mut lap);
            for (l, w) in lap.iter_mut().zip(&wv) {
                *l = w - *l;
            }
            self.convolve_into(&lap, &mut av);
            let next: f64 = v.iter().zip(&av).map(|(a, b)| a * b).sum();
            std::mem::swap(&mut v, &mut av);
            if (next - lambda).abs() <= 1e-13 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.max(0.0).sqrt()
    }

    /// `max_i Σ_j (|W_ij| + |∇_i W_{·j}|)`: the W^{1,∞} response to unit
    /// indicator probes, with centred differences inside and one-sided ones
    /// at the boundary.
    fn estimate_rinf(&self) -> f64 {
        let count = self.grid.node_count();
        let n = self.grid.n();
        let h = self.grid.spacing();
        let dim = self.grid.dim();
        let mut best: f64 = 0.0;
        for i in 0..count {
            let idx = self.grid.axis_index(i);
            let mut neighbours = [(i, i, 1.0); 2];
            for (axis, nb) in neighbours.iter_mut().enumerate().take(dim) {
                let stride = if axis == 0 { 1 } else { n };
                let k = idx[axis];
                *nb = match k {
                    0 => (i + stride, i, 1.0 / h),
                    _ if k == n - 1 => (i, i - stride, 1.0 / h),
                    _ => (i + stride, i - stride, 0.5 / h),
                };
            }
            let mut s = 0.0;
            for j in 0..count {
                let mut g2 = 0.0;
                for &(p, m, scale) in neighbours.iter().take(dim) {
                    let d = (self.weight(p, j) - self.weight(m, j)) * scale;
                    g2 += d * d;
                }
                s += self.weight(i, j).abs() + g2.sqrt();
            }
            best = best.max(s);
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_positive_symmetric_with_boundary_mass_loss() {
        let g = Grid::new(1, 32, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::gaussian(1.0, 1.0), &g).unwrap();
        let n = g.node_count();
        for i in 0..n {
            for j in 0..n {
                assert!(op.weight(i, j) > 0.0);
                assert_eq!(op.weight(i, j), op.weight(j, i));
            }
        }
        let kbar = op.kbar().values();
        assert!(kbar[n / 2] > kbar[0]);
        assert!(kbar[n / 2] > kbar[n - 1]);
    }

    #[test]
    fn mollifier_has_compact_support() {
        let g = Grid::new(1, 40, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::mollifier(1.0, 0.25), &g).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let d = (g.coords(i)[0] - g.coords(j)[0]).abs();
                if d >= 0.25 - 1e-12 {
                    assert_eq!(op.weight(i, j), 0.0);
                } else {
                    assert!(op.weight(i, j) > 0.0);
                }
            }
        }
    }

    /// Mean of `−ln|x|` over the square `[−a, a]²` by tensor Gauss-Legendre
    /// on the four quadrants, each split so the corner singularity sits on a
    /// panel vertex.
    fn numeric_cell_average(h: f64) -> f64 {
        let a = 0.5 * h;
        let nodes = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        let weights = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        // Geometric panels towards the singular corner.
        let mut edges = vec![0.0];
        let mut e = a;
        let mut panels = vec![a];
        for _ in 0..40 {
            e *= 0.5;
            panels.push(e);
        }
        panels.reverse();
        edges.extend(panels);
        let mut total = 0.0;
        for px in edges.windows(2) {
            for py in edges.windows(2) {
                let (x0, x1, y0, y1) = (px[0], px[1], py[0], py[1]);
                for (xi, wx) in nodes.iter().zip(&weights) {
                    for (yi, wy) in nodes.iter().zip(&weights) {
                        let x = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * xi;
                        let y = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * yi;
                        let r = (x * x + y * y).sqrt();
                        total += wx * wy * 0.25 * (x1 - x0) * (y1 - y0) * (-r.ln());
                    }
                }
            }
        }
        total / (a * a)
    }

    #[test]
    fn newton_diagonal_is_cell_average() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::newton(1.0), &g).unwrap();
        let h = g.spacing();
        let oracle = numeric_cell_average(h) * h * h;
        for i in 0..g.node_count() {
            let d = op.weight(i, i);
            assert!(d.is_finite());
            assert_relative_eq!(d, oracle, max_relative = 1e-9);
        }
        assert!(KernelSpec::newton(1.0)
            .validate(&Grid::new(1, 16, 1.0).unwrap())
            .is_err());
    }

    #[test]
    fn convolve_examples() {
        let g = Grid::new(1, 24, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::gaussian(1.3, 0.2), &g).unwrap();
        let ones = op.convolve(&ScalarField::constant(g, 1.0)).unwrap();
        assert_eq!(ones.values(), op.kbar().values());

        let j = 7;
        let mut probe = ScalarField::zeros(g);
        probe.values_mut()[j] = 1.0 / g.cell_volume();
        let col = op.convolve(&probe).unwrap();
        for i in 0..24 {
            let r = (g.coords(i)[0] - g.coords(j)[0]).abs();
            assert_relative_eq!(col.values()[i], op.spec().eval(r), max_relative = 1e-12);
        }

        let sym = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos() + 0.3);
        let out = op.convolve(&sym).unwrap();
        for i in 0..12 {
            let (a, b) = (out.values()[i], out.values()[23 - i]);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        let other = Grid::new(1, 25, 1.0).unwrap();
        assert!(matches!(
            op.convolve(&ScalarField::zeros(other)),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn convolve_columns_matches_convolve() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::gaussian(1.0, 0.1), &g).unwrap();
        let n = g.node_count();
        let x: Vec<f64> = (0..3 * n).map(|k| ((k * 37 % 11) as f64) - 5.0).collect();
        let mut out = vec![0.0; 3 * n];
        op.convolve_columns(-2.0, &x, 3, &mut out);
        for c in 0..3 {
            let col = ScalarField::new(g, x[c * n..(c + 1) * n].to_vec()).unwrap();
            let single = op.convolve(&col).unwrap();
            for i in 0..n {
                assert_relative_eq!(
                    out[c * n + i],
                    -2.0 * single.values()[i],
                    max_relative = 1e-12,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn zero_kernel_constants() {
        let g = Grid::new(1, 16, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::zero(), &g).unwrap();
        assert!(op.is_zero());
        let c = op.constants();
        assert_eq!((c.r2, c.rinf, c.k2_sup), (0.0, 0.0, 0.0));
    }

    /// `∫_{−1}^{1} exp(−1/(1 − s²)) ds` by composite Simpson on a fine mesh.
    fn mollifier_unit_integral() -> f64 {
        let m = 200_000;
        let dx = 2.0 / m as f64;
        let f = |s: f64| {
            if s.abs() < 1.0 {
                (-1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        };
        let mut total = f(-1.0) + f(1.0);
        for k in 1..m {
            let s = -1.0 + k as f64 * dx;
            total += if k % 2 == 1 { 4.0 } else { 2.0 } * f(s);
        }
        total * dx / 3.0
    }

    #[test]
    fn mollifier_mass_bounds_k2() {
        let radius = 0.1;
        let c = 1.0 / (radius * mollifier_unit_integral());
        let g = Grid::new(1, 1000, 2.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::mollifier(c, radius), &g).unwrap();
        let k = op.constants();
        assert!(k.k2_sup <= 1.0 + 1e-7, "k2_sup = {}", k.k2_sup);
        assert!(k.k2_sup >= 1.0 - 1e-7, "k2_sup = {}", k.k2_sup);
        assert!(op.kbar().values()[0] < 0.6);
    }

    #[test]
    fn r2_scales_linearly_with_amplitude() {
        for spec in [
            (
                KernelSpec::gaussian(1.0, 0.05),
                KernelSpec::gaussian(2.0, 0.05),
            ),
            (
                KernelSpec::mollifier(0.7, 0.2),
                KernelSpec::mollifier(1.4, 0.2),
            ),
        ] {
            let g = Grid::new(1, 48, 1.0).unwrap();
            let a = KernelOp::assemble(&spec.0, &g).unwrap().constants();
            let b = KernelOp::assemble(&spec.1, &g).unwrap().constants();
            assert!(a.r2 > 0.0);
            assert_relative_eq!(b.r2, 2.0 * a.r2, max_relative = 1e-10);
            assert_relative_eq!(b.rinf, 2.0 * a.rinf, max_relative = 1e-12);
        }
    }

    #[test]
    fn r2_bounds_every_probe() {
        // The estimate is the operator norm; no probe may exceed it.
        let g = Grid::new(1, 40, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::gaussian(1.0, 0.02), &g).unwrap();
        let r2 = op.constants().r2;
        for k in 0..10 {
            let rho = ScalarField::from_fn(g, |x| (k as f64 * PI * x[0]).cos() + 0.1 * x[0]);
            let out = op.convolve(&rho).unwrap();
            let h1 = (out.norm_l2().powi(2) + out.h1_seminorm().powi(2)).sqrt();
            assert!(h1 <= r2 * rho.norm_l2() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn newton_2d_constants_are_finite() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let op = KernelOp::assemble(&KernelSpec::newton(1.0), &g).unwrap();
        let c = op.constants();
        assert!(c.r2.is_finite() && c.r2 > 0.0);
        assert!(c.rinf.is_finite() && c.rinf >= c.k2_sup);
    }

    #[test]
    fn gaussian_quadrature_second_order() {
        // Convolution of a smooth density against a fine-grid oracle.
        let spec = KernelSpec::gaussian(1.0, 0.05);
        let rho = |x: f64| 1.0 + 0.5 * (PI * x).cos();
        let oracle = |x: f64| {
            let m = 20_000;
            let dy = 1.0 / m as f64;
            (0..m)
                .map(|k| {
                    let y = (k as f64 + 0.5) * dy;
                    spec.eval((x - y).abs()) * rho(y) * dy
                })
                .sum::<f64>()
        };
        let mut errors = Vec::new();
        for n in [16, 32, 64] {
            let g = Grid::new(1, n, 1.0).unwrap();
            let op = KernelOp::assemble(&spec, &g).unwrap();
            let out = op
                .convolve(&ScalarField::from_fn(g, |x| rho(x[0])))
                .unwrap();
            let err = (0..n)
                .map(|i| (out.values()[i] - oracle(g.coords(i)[0])).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        for pair in errors.windows(2) {
            assert!(pair[0] / pair[1] >= 3.5, "ratio {}", pair[0] / pair[1]);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn convolution_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
                let g = Grid::new(2, 8, 1.0).unwrap();
                let op = KernelOp::assemble(&KernelSpec::gaussian(1.0, 0.1), &g).unwrap();
                let r1 = ScalarField::from_fn(g, |x| ((seed as f64) * x[0] + x[1]).sin());
                let r2 = ScalarField::from_fn(g, |x| ((seed as f64 + 1.0) * x[1]).cos() - x[0]);
                let mut combo = r1.scaled(a);
                combo.axpy(b, &r2);
                let lhs = op.convolve(&combo).unwrap();
                let mut rhs = op.convolve(&r1).unwrap().scaled(a);
                rhs.axpy(b, &op.convolve(&r2).unwrap());
                let scale = (a.abs() + b.abs()) * op.kbar().max() * 2.0 + 1e-300;
                for (x, y) in lhs.values().iter().zip(rhs.values()) {
                    prop_assert!((x - y).abs() <= 1e-12 * scale);
                }
            }

            #[test]
            fn assembled_weights_symmetric(c in 0.1f64..3.0, radius in 0.05f64..0.6, n in 8usize..14) {
                let g = Grid::new(2, n, 1.0).unwrap();
                let op = KernelOp::assemble(&KernelSpec::mollifier(c, radius), &g).unwrap();
                let count = g.node_count();
                for i in 0..count {
                    for j in 0..i {
                        prop_assert_eq!(op.weight(i, j), op.weight(j, i));
                    }
                }
                let k = op.constants();
                prop_assert!(k.k2_sup.is_finite());
                for (i, kb) in op.kbar().values().iter().enumerate() {
                    let row: f64 = (0..count).map(|j| op.weight(i, j)).sum();
                    prop_assert!((row - kb).abs() <= 1e-12 * kb.abs().max(1e-300));
                }
            }
        }
    }
}
