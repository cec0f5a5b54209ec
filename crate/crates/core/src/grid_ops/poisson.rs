use super::spectral::FastDiag;
use super::{apply_face_laplacian, cell_to_faces, GridSpec, ScalarField, VectorField};
use crate::error::{AggError, Result};
use crate::linalg::{pcg, KrylovStats};

/// Diffusion coefficient in `div(c ∇ψ)`.
#[derive(Clone, Copy, Debug)]
pub enum Coefficient<'a> {
    Unit,
    /// Cell values, arithmetically averaged onto faces.
    Cell(&'a ScalarField),
    /// Face values used as given.
    Face(&'a VectorField),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonOptions {
    /// Relative residual target.
    pub tol: f64,
    /// `None` selects the default cap `50 √(nx ny)`.
    pub max_iter: Option<usize>,
    /// Allowed `|mean(rhs)| / rms(rhs)`.
    pub compat_tol: f64,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: None, compat_tol: 1e-12 }
    }
}

impl PoissonOptions {
    pub fn cap(&self, g: &GridSpec) -> usize {
        self.max_iter.unwrap_or_else(|| (50.0 * (g.cells() as f64).sqrt()).ceil() as usize)
    }
}

/// Solves `div(c ∇ψ) = rhs` with homogeneous Neumann (wall) or periodic
/// conditions and returns the zero-mean solution.
pub fn solve_poisson(rhs: &ScalarField, coeff: Coefficient<'_>, opts: &PoissonOptions) -> Result<ScalarField> {
    let mut psi = ScalarField::zeros(rhs.grid);
    solve_poisson_with_guess(rhs, coeff, opts, &mut psi)?;
    Ok(psi)
}

/// As [`solve_poisson`], starting from (and overwriting) `psi`.
pub fn solve_poisson_with_guess(
    rhs: &ScalarField,
    coeff: Coefficient<'_>,
    opts: &PoissonOptions,
    psi: &mut ScalarField,
) -> Result<KrylovStats> {
    let g = rhs.grid;
    let n = g.cells() as f64;
    let mean = rhs.values.iter().sum::<f64>() / n;
    let rms = (rhs.values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if mean.abs() > opts.compat_tol * rms {
        return Err(AggError::IncompatibleRhs { mean });
    }
    let owned;
    let faces: Option<(&[f64], &[f64])> = match coeff {
        Coefficient::Unit => None,
        Coefficient::Cell(c) => {
            owned = cell_to_faces(c);
            Some((&owned.u, &owned.w))
        }
        Coefficient::Face(c) => Some((&c.u, &c.w)),
    };
    // Constant-coefficient Laplacian with the mean face coefficient: the
    // preconditioned spectrum is bounded by the coefficient ratio.
    let cbar = match faces {
        None => 1.0,
        Some((cu, cw)) => {
            let (au, aw) = (face_mean(cu), face_mean(cw));
            0.5 * (au + aw)
        }
    };
    let fd = FastDiag::new(&g);
    // Solve the SPD problem -div(c ∇ψ) = -(rhs - mean).
    let b: Vec<f64> = rhs.values.iter().map(|v| -(v - mean)).collect();
    psi.sub_mean();
    let stats = pcg(
        |x, y| {
            apply_face_laplacian(&g, faces, x, y);
            y.iter_mut().for_each(|v| *v = -*v);
        },
        |r, z| fd.solve(|lx, ly| cbar * (lx + ly), r, z),
        &b,
        &mut psi.values,
        opts.tol,
        opts.cap(&g),
        true,
    )?;
    psi.sub_mean();
    Ok(stats)
}

fn face_mean(c: &[f64]) -> f64 {
    c.iter().sum::<f64>() / c.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_ops::{laplacian, Boundary::*};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zero_rhs_gives_zero() {
        let g = GridSpec::square(8, 1.0, Wall).unwrap();
        let psi = solve_poisson(&ScalarField::zeros(g), Coefficient::Unit, &PoissonOptions::default()).unwrap();
        assert_eq!(psi.max_abs(), 0.0);
    }

    #[test]
    fn inverts_the_stencil_on_a_mode() {
        let g = GridSpec::new(16, 16, 1.0, 1.0, Periodic, Periodic).unwrap();
        let mode = ScalarField::from_fn(g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let lam = 2.0 * 4.0 / (g.hx * g.hx) * (PI * g.hx).sin().powi(2);
        let rhs = mode.scaled(-lam);
        let psi = solve_poisson(&rhs, Coefficient::Unit, &PoissonOptions::default()).unwrap();
        let err = psi.sub(&mode).max_abs();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn rejects_nonzero_mean() {
        let g = GridSpec::square(8, 1.0, Wall).unwrap();
        let e = solve_poisson(&ScalarField::constant(g, 1.0), Coefficient::Unit, &PoissonOptions::default());
        assert!(matches!(e, Err(AggError::IncompatibleRhs { .. })));
    }

    /// Dense Gaussian elimination on the bordered system [A 1; 1ᵀ 0].
    fn dense_solve(g: &GridSpec, coeff: &ScalarField, rhs: &ScalarField) -> Vec<f64> {
        let n = g.cells();
        let faces = cell_to_faces(coeff);
        let m = n + 1;
        let mut a = vec![vec![0.0; m + 1]; m];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let mut col = vec![0.0; n];
            apply_face_laplacian(g, Some((&faces.u, &faces.w)), &e, &mut col);
            for r in 0..n {
                a[r][c] = col[r];
            }
        }
        for r in 0..n {
            a[r][n] = 1.0;
            a[n][r] = 1.0;
            a[r][m] = rhs.values[r];
        }
        for k in 0..m {
            let piv = (k..m).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
            a.swap(k, piv);
            for r in k + 1..m {
                let f = a[r][k] / a[k][k];
                for c in k..=m {
                    a[r][c] -= f * a[k][c];
                }
            }
        }
        let mut x = vec![0.0; m];
        for k in (0..m).rev() {
            let s: f64 = (k + 1..m).map(|c| a[k][c] * x[c]).sum();
            x[k] = (a[k][m] - s) / a[k][k];
        }
        x.truncate(n);
        x
    }

    #[test]
    fn matches_dense_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for bc in [Wall, Periodic] {
            let g = GridSpec::square(8, 1.0, bc).unwrap();
            let mut rhs = ScalarField::from_values(g, (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect());
            rhs.sub_mean();
            let coeff = ScalarField::from_values(g, (0..64).map(|_| rng.gen_range(0.5..2.0)).collect());
            let psi = solve_poisson(&rhs, Coefficient::Cell(&coeff), &PoissonOptions { tol: 1e-13, ..Default::default() }).unwrap();
            let direct = dense_solve(&g, &coeff, &rhs);
            let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..64 {
                assert!((psi.values[k] - direct[k]).abs() < 1e-9 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn residual_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = GridSpec::new(20, 12, 2.0, 1.0, Wall, Periodic).unwrap();
        let mut rhs = ScalarField::from_values(g, (0..g.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        rhs.sub_mean();
        let psi = solve_poisson(&rhs, Coefficient::Unit, &PoissonOptions::default()).unwrap();
        let r = laplacian(&psi).sub(&rhs);
        assert!(r.inner(&r).sqrt() <= 1e-10 * rhs.inner(&rhs).sqrt() * 1.01);
        assert!(psi.mean().abs() < 1e-14);
    }
}
