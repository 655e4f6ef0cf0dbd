//! GMRES with modified Gram-Schmidt Arnoldi and optional restarts.

use crate::error::{Error, Result};

/// A fixed linear map on vectors of length [`dim`](LinearOperator::dim).
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

/// Adapter turning a closure into a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresSettings {
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Krylov dimension per cycle; `None` runs unrestarted.
    pub restart: Option<usize>,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-14,
            max_iters: 500,
            restart: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative residual before the first iteration and after each one.
    pub residuals: Vec<f64>,
    /// `‖b - A x‖ / ‖b‖` recomputed from the returned solution.
    pub final_residual: f64,
}

/// Threshold on `max |⟨v_i, w⟩| / ‖w‖` that triggers a second orthogonalisation pass.
const REORTH_THRESHOLD: f64 = 1e-8;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(op: &dyn LinearOperator, rhs: &[f64], x: &[f64], scratch: &mut [f64]) -> Result<Vec<f64>> {
    op.apply(x, scratch)?;
    Ok(rhs.iter().zip(scratch.iter()).map(|(b, ax)| b - ax).collect())
}

/// Solves `A x = b`, optionally right-preconditioned by the diagonal `precond`
/// (`A M y = b`, `x = M y`).
pub fn gmres(
    op: &dyn LinearOperator,
    rhs: &[f64],
    precond: Option<&[f64]>,
    settings: &GmresSettings,
) -> Result<GmresOutcome> {
    let n = op.dim();
    if rhs.len() != n || precond.is_some_and(|m| m.len() != n) {
        return Err(Error::ShapeMismatch(format!("GMRES dimension {n} does not match its inputs")));
    }
    if !(settings.rel_tol > 0.0 && settings.rel_tol < 1.0) || settings.max_iters == 0 {
        return Err(Error::InvalidParameter("need 0 < rel_tol < 1 and max_iters >= 1".into()));
    }
    if settings.restart == Some(0) {
        return Err(Error::InvalidParameter("restart length must be positive".into()));
    }
    let b_norm = norm(rhs);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(GmresOutcome {
            solution: x,
            iterations: 0,
            residuals: vec![0.0],
            final_residual: 0.0,
        });
    }
    let precondition = |v: &mut [f64]| {
        if let Some(m) = precond {
            v.iter_mut().zip(m).for_each(|(a, s)| *a *= s);
        }
    };

    let mut scratch = vec![0.0; n];
    let mut residuals = Vec::new();
    let mut iterations = 0;
    loop {
        let r = residual(op, rhs, &x, &mut scratch)?;
        let beta = norm(&r);
        let rel = beta / b_norm;
        if residuals.is_empty() {
            residuals.push(rel);
        }
        if rel <= settings.rel_tol {
            return Ok(GmresOutcome {
                solution: x,
                iterations,
                residuals,
                final_residual: rel,
            });
        }
        if iterations >= settings.max_iters {
            return Err(Error::NoConvergence {
                iterations,
                residual: rel,
            });
        }
        let m = settings
            .restart
            .unwrap_or(settings.max_iters)
            .min(settings.max_iters - iterations);

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // column-major Hessenberg, column k has k + 2 entries
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![beta];
        let mut w = vec![0.0; n];
        let mut z = vec![0.0; n];

        for k in 0..m {
            z.copy_from_slice(&basis[k]);
            precondition(&mut z);
            op.apply(&z, &mut w)?;
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= hij * b);
            }
            let mut w_norm = norm(&w);
            let loss = col[..=k].iter().fold(0.0f64, |acc, c| acc.max(c.abs())) / w_norm.max(f64::MIN_POSITIVE);
            if loss > REORTH_THRESHOLD {
                for (i, v) in basis.iter().enumerate() {
                    let corr = dot(&w, v);
                    col[i] += corr;
                    w.iter_mut().zip(v).for_each(|(a, b)| *a -= corr * b);
                }
                w_norm = norm(&w);
            }
            col[k + 1] = w_norm;

            for i in 0..k {
                let (c, s) = (cs[i], sn[i]);
                let (a, b) = (col[i], col[i + 1]);
                col[i] = c * a + s * b;
                col[i + 1] = -s * a + c * b;
            }
            let (a, b) = (col[k], col[k + 1]);
            let denom = a.hypot(b);
            if denom == 0.0 {
                return Err(Error::Breakdown(iterations + 1));
            }
            let (c, s) = (a / denom, b / denom);
            cs.push(c);
            sn.push(s);
            col[k] = denom;
            col[k + 1] = 0.0;
            let gk = g[k];
            g[k] = c * gk;
            g.push(-s * gk);
            h.push(col);
            iterations += 1;

            let estimate = g[k + 1].abs() / b_norm;
            residuals.push(estimate);
            // an invariant subspace: the Krylov solution is exact
            let happy = w_norm <= f64::EPSILON * denom;
            if happy || estimate <= settings.rel_tol {
                break;
            }
            basis.push(w.iter().map(|v| v / w_norm).collect());
        }

        let dim = h.len();
        let mut y = vec![0.0; dim];
        for i in (0..dim).rev() {
            let mut acc = g[i];
            for j in i + 1..dim {
                acc -= h[j][i] * y[j];
            }
            if h[i][i] == 0.0 {
                return Err(Error::Breakdown(iterations));
            }
            y[i] = acc / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (yj, v) in y.iter().zip(&basis) {
            update.iter_mut().zip(v).for_each(|(u, b)| *u += yj * b);
        }
        precondition(&mut update);
        x.iter_mut().zip(&update).for_each(|(a, u)| *a += u);

        if iterations >= settings.max_iters {
            let r = residual(op, rhs, &x, &mut scratch)?;
            let rel = norm(&r) / b_norm;
            if rel <= settings.rel_tol {
                return Ok(GmresOutcome {
                    solution: x,
                    iterations,
                    residuals,
                    final_residual: rel,
                });
            }
            return Err(Error::NoConvergence {
                iterations,
                residual: rel,
            });
        }
    }
}

/// `‖b - A x‖ / ‖b‖`.
pub fn relative_residual(op: &dyn LinearOperator, rhs: &[f64], x: &[f64]) -> Result<f64> {
    let mut scratch = vec![0.0; op.dim()];
    let r = residual(op, rhs, x, &mut scratch)?;
    let b = norm(rhs);
    Ok(if b == 0.0 { norm(&r) } else { norm(&r) / b })
}
