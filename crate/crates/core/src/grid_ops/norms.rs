use super::{grad_cc, laplacian, solve_poisson, velocity_gradient, Coefficient, PoissonOptions};
use super::{ScalarField, VectorField};
use crate::error::{AggError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    Lp(f64),
    Linf,
    H1,
    /// `L² + ‖∇·‖² + ‖Δ·‖²`; the Laplacian seminorm stands in for the full
    /// Hessian, equivalent on Neumann/periodic fields up to a grid constant.
    H2Proxy,
    /// Dual norm of `H¹` on mean-zero fields, `‖∇ψ‖` with `Δψ = f`.
    HMinus1,
}

fn lp(values: &[f64], p: f64, area: f64) -> f64 {
    if p == 2.0 {
        return (values.iter().map(|v| v * v).sum::<f64>() * area).sqrt();
    }
    (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * area).powf(1.0 / p)
}

/// Norms of a cell-centred field.
pub fn norm(f: &ScalarField, kind: NormKind) -> Result<f64> {
    let area = f.grid.cell_area();
    Ok(match kind {
        NormKind::Lp(p) => lp(&f.values, p, area),
        NormKind::Linf => f.max_abs(),
        NormKind::H1 => {
            let g = grad_cc(f);
            (f.inner(f) + g.inner(&g)).sqrt()
        }
        NormKind::H2Proxy => {
            let g = grad_cc(f);
            let l = laplacian(f);
            (f.inner(f) + g.inner(&g) + l.inner(&l)).sqrt()
        }
        NormKind::HMinus1 => {
            let mean = f.mean();
            let scale = (f.inner(f) / f.grid.area()).sqrt();
            if mean.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(AggError::MeanNotZero { mean });
            }
            let mut centred = f.clone();
            centred.sub_mean();
            let psi = solve_poisson(&centred, Coefficient::Unit, &PoissonOptions::default())?;
            grad_cc(&psi).l2()
        }
    })
}

/// Norms of a face vector field. `Lp` and `Linf` use the cell-centred
/// velocity magnitude; `H1` adds the full velocity gradient.
pub fn vector_norm(v: &VectorField, kind: NormKind) -> Result<f64> {
    let area = v.grid.cell_area();
    let (cu, cw) = v.to_cells();
    let mag: Vec<f64> = cu.values.iter().zip(&cw.values).map(|(a, b)| (a * a + b * b).sqrt()).collect();
    Ok(match kind {
        NormKind::Lp(p) => lp(&mag, p, area),
        NormKind::Linf => mag.iter().fold(0.0, |m: f64, x| m.max(*x)),
        NormKind::H1 => (v.inner(v) + velocity_gradient(v).l2_sq()).sqrt(),
        other => {
            return Err(AggError::Validation {
                key: "norm".into(),
                reason: format!("{other:?} is not defined for vector fields"),
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_ops::{Boundary, GridSpec};
    use std::f64::consts::PI;

    #[test]
    fn zero_field_has_zero_norms() {
        let g = GridSpec::square(8, 1.0, Boundary::Wall).unwrap();
        let z = ScalarField::zeros(g);
        for k in [NormKind::Lp(2.0), NormKind::Lp(3.0), NormKind::Linf, NormKind::H1, NormKind::H2Proxy, NormKind::HMinus1] {
            assert_eq!(norm(&z, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn unit_field_on_unit_square() {
        let g = GridSpec::square(8, 1.0, Boundary::Wall).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert!((norm(&one, NormKind::Lp(2.0)).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(norm(&one, NormKind::Linf).unwrap(), 1.0);
        assert!(matches!(norm(&one, NormKind::HMinus1), Err(AggError::MeanNotZero { .. })));
    }

    #[test]
    fn hminus1_of_mode_is_l2_over_sqrt_lambda() {
        let g = GridSpec::new(32, 4, 1.0, 0.25, Boundary::Periodic, Boundary::Periodic).unwrap();
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let lam = 4.0 / (g.hx * g.hx) * (PI * g.hx).sin().powi(2);
        let hm1 = norm(&f, NormKind::HMinus1).unwrap();
        let l2 = norm(&f, NormKind::Lp(2.0)).unwrap();
        assert!((hm1 - l2 / lam.sqrt()).abs() < 1e-9 * l2);
    }
}
