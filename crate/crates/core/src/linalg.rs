//! Matrix-free Krylov solvers over flat `f64` vectors.

use crate::error::{AggError, Result};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

fn norm2(v: &[f64]) -> f64 {
    par::dot(v, v).sqrt()
}

fn remove_mean(v: &mut [f64]) {
    let m = par::sum(v.len(), |r| v[r].iter().sum()) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Diagonal (Jacobi) preconditioner from stored inverse diagonal entries.
pub fn jacobi(inv_diag: &[f64]) -> impl FnMut(&[f64], &mut [f64]) + '_ {
    move |r, z| par::fill(z, |k| r[k] * inv_diag[k])
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi)definite operator; `precond` must be symmetric positive too. With `project_mean` the iteration is restricted
/// to mean-zero vectors, which handles the constant null space of pure
/// Neumann/periodic problems.
pub fn pcg<A, M>(
    mut apply: A,
    mut precond: M,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    project_mean: bool,
) -> Result<KrylovStats>
where
    A: FnMut(&[f64], &mut [f64]),
    M: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats::default());
    }
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    par::fill(&mut r, |k| b[k] - ap[k]);
    if project_mean {
        remove_mean(&mut r);
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if project_mean {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut res = norm2(&r) / bnorm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(KrylovStats { iterations: it, relative_residual: res });
        }
        apply(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(AggError::NonConvergence { iterations: it, residual: res });
        }
        let alpha = rz / pap;
        par::axpy(alpha, &p, x);
        par::axpy(-alpha, &ap, &mut r);
        if project_mean {
            remove_mean(&mut r);
        }
        precond(&r, &mut z);
        if project_mean {
            remove_mean(&mut z);
        }
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        par::fill(&mut ap, |k| z[k] + beta * p[k]);
        std::mem::swap(&mut p, &mut ap);
        res = norm2(&r) / bnorm;
    }
    if res <= tol {
        return Ok(KrylovStats { iterations: max_iter, relative_residual: res });
    }
    Err(AggError::NonConvergence { iterations: max_iter, residual: res })
}

/// Right-preconditioned BiCGSTAB for nonsymmetric operators.
pub fn bicgstab<A, M>(
    mut apply: A,
    mut precond: M,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovStats>
where
    A: FnMut(&[f64], &mut [f64]),
    M: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats::default());
    }
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    apply(x, &mut tmp);
    par::fill(&mut r, |k| b[k] - tmp[k]);
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zs = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm2(&r) / bnorm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(KrylovStats { iterations: it, relative_residual: res });
        }
        let rho_new = par::dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(AggError::NonConvergence { iterations: it, residual: res });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        par::fill(&mut tmp, |k| r[k] + beta * (p[k] - omega * v[k]));
        std::mem::swap(&mut p, &mut tmp);
        precond(&p, &mut y);
        apply(&y, &mut v);
        let rv = par::dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return Err(AggError::NonConvergence { iterations: it, residual: res });
        }
        alpha = rho / rv;
        par::fill(&mut s, |k| r[k] - alpha * v[k]);
        let snorm = norm2(&s) / bnorm;
        if snorm <= tol {
            par::axpy(alpha, &y, x);
            return Ok(KrylovStats { iterations: it + 1, relative_residual: snorm });
        }
        precond(&s, &mut zs);
        apply(&zs, &mut t);
        let tt = par::dot(&t, &t);
        omega = if tt > 0.0 { par::dot(&t, &s) / tt } else { 0.0 };
        par::axpy(alpha, &y, x);
        par::axpy(omega, &zs, x);
        par::fill(&mut r, |k| s[k] - omega * t[k]);
        res = norm2(&r) / bnorm;
        if omega == 0.0 {
            break;
        }
    }
    if res <= tol {
        return Ok(KrylovStats { iterations: max_iter, relative_residual: res });
    }
    Err(AggError::NonConvergence { iterations: max_iter, residual: res })
}
