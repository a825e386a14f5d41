//! Matrix-free conjugate gradients for the shifted Neumann Laplacian and a
//! reorthogonalised Gram-Schmidt QR used by the tangent frames.

use crate::error::{Error, Result};
use crate::grid::{axpy, dot, laplacian_into, Grid, ScalarField};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioner-free CG on `apply(x) = b`. When `mean_zero` is set the
/// operator is only semi-definite with constants in its kernel; iterates and
/// residuals are kept in the mean-zero subspace and `b` must already lie there.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    mean_zero: bool,
) -> Result<CgOutcome> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome::default());
    }
    if mean_zero {
        remove_mean(x);
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if mean_zero {
        remove_mean(&mut r);
    }
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= tol * b_norm {
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: rr.sqrt() / b_norm,
        });
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: rr.sqrt() / b_norm,
            });
        }
        let alpha = rr / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        if mean_zero {
            remove_mean(&mut r);
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * b_norm {
            if mean_zero {
                remove_mean(x);
            }
            return Ok(CgOutcome {
                iterations: it,
                relative_residual: rr_new.sqrt() / b_norm,
            });
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err(Error::CgNotConverged {
        iterations: max_iter,
        residual: rr.sqrt() / b_norm,
    })
}

/// Solves `(shift·I − diffusion·Δ_h) x = b` with zero-flux boundaries, using
/// `x` as the starting guess. `shift = 0` selects the mean-zero complement.
pub fn solve_shifted_laplacian(
    grid: &Grid,
    shift: f64,
    diffusion: f64,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let apply = |v: &[f64], out: &mut [f64]| {
        laplacian_into(grid, v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = shift * vi - diffusion * *o;
        }
    };
    conjugate_gradient(apply, b, x, tol, max_iter, shift == 0.0)
}

pub(crate) fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// In-place QR of the column set in the discrete L² inner product (modified
/// Gram-Schmidt, two passes). Returns the diagonal of R. Columns are nested:
/// the first k outputs span the first k inputs.
pub fn orthonormalize(columns: &mut [ScalarField]) -> Result<Vec<f64>> {
    let mut diag = Vec::with_capacity(columns.len());
    for j in 0..columns.len() {
        let (done, rest) = columns.split_at_mut(j);
        let col = &mut rest[0];
        let initial = col.norm_l2();
        for _ in 0..2 {
            for q in done.iter() {
                let c = q.dot(col);
                col.axpy(-c, q);
            }
        }
        let norm = col.norm_l2();
        if !(norm > 1e-12 * initial.max(f64::MIN_POSITIVE)) || !norm.is_finite() {
            return Err(Error::FrameDegenerate { column: j, norm });
        }
        col.values_mut().iter_mut().for_each(|v| *v /= norm);
        diag.push(norm);
    }
    Ok(diag)
}
