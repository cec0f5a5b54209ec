//! Staggered (MAC) rectangular grid: geometry, fields, difference operators,
//! norms and the Neumann/periodic Poisson solver.
//!
//! Layout: scalars live at cell centres, the x-velocity on x-normal faces and
//! the y-velocity on y-normal faces. On a periodic axis there are `n` faces per
//! row (face `i` sits on the left edge of cell `i`); on a wall axis there are
//! `n + 1`, and the two boundary faces always carry zero normal velocity.
//! Corner nodes carry the off-diagonal velocity derivatives.

mod field;
mod norms;
mod operators;
mod poisson;
mod spectral;

pub use field::{ScalarField, VectorField};
pub use norms::{norm, vector_norm, NormKind};
pub use operators::{
    cell_to_faces, div_face, grad_cc, grad_sq_cc, laplacian, velocity_gradient, VelocityGradient,
};
pub use poisson::{solve_poisson, solve_poisson_with_guess, Coefficient, PoissonOptions};

pub(crate) use operators::{apply_face_laplacian, grad_into};
pub(crate) use spectral::FastDiag;

use crate::error::{AggError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    /// No-slip velocity, homogeneous Neumann scalars.
    Wall,
}

impl Boundary {
    pub fn code(self) -> u8 {
        match self {
            Boundary::Periodic => 0,
            Boundary::Wall => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Boundary::Periodic),
            1 => Some(Boundary::Wall),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::Wall => "wall",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
    pub bc_x: Boundary,
    pub bc_y: Boundary,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, bc_x: Boundary, bc_y: Boundary) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(AggError::InvalidGrid(format!("need nx, ny >= 4, got {nx} x {ny}")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(AggError::InvalidGrid(format!("domain lengths must be positive, got {lx} x {ly}")));
        }
        Ok(Self { nx, ny, lx, ly, hx: lx / nx as f64, hy: ly / ny as f64, bc_x, bc_y })
    }

    /// Unit-spacing helper used throughout the tests.
    pub fn square(n: usize, l: f64, bc: Boundary) -> Result<Self> {
        Self::new(n, n, l, l, bc, bc)
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// x-faces per row.
    #[inline]
    pub fn nux(&self) -> usize {
        self.nx + usize::from(self.bc_x == Boundary::Wall)
    }

    /// Rows of y-faces.
    #[inline]
    pub fn nwy(&self) -> usize {
        self.ny + usize::from(self.bc_y == Boundary::Wall)
    }

    #[inline]
    pub fn n_u(&self) -> usize {
        self.nux() * self.ny
    }

    #[inline]
    pub fn n_w(&self) -> usize {
        self.nx * self.nwy()
    }

    /// Corner nodes per row / number of node rows.
    #[inline]
    pub fn nodes_x(&self) -> usize {
        self.nux()
    }

    #[inline]
    pub fn nodes_y(&self) -> usize {
        self.nwy()
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Whether x-face `i` is a no-through-flow wall face.
    #[inline]
    pub fn u_is_boundary(&self, i: usize) -> bool {
        self.bc_x == Boundary::Wall && (i == 0 || i == self.nx)
    }

    #[inline]
    pub fn w_is_boundary(&self, j: usize) -> bool {
        self.bc_y == Boundary::Wall && (j == 0 || j == self.ny)
    }

    /// Cell to the left of x-face `i` (wrapping on periodic axes).
    #[inline]
    pub(crate) fn left_of_u(&self, i: usize) -> usize {
        if i == 0 {
            self.nx - 1
        } else {
            i - 1
        }
    }

    /// Cell below y-face `j`.
    #[inline]
    pub(crate) fn below_w(&self, j: usize) -> usize {
        if j == 0 {
            self.ny - 1
        } else {
            j - 1
        }
    }

    /// x-face on the right edge of cell `i`.
    #[inline]
    pub(crate) fn right_face(&self, i: usize) -> usize {
        match self.bc_x {
            Boundary::Periodic => (i + 1) % self.nx,
            Boundary::Wall => i + 1,
        }
    }

    /// y-face on the top edge of cell row `j`.
    #[inline]
    pub(crate) fn top_face(&self, j: usize) -> usize {
        match self.bc_y {
            Boundary::Periodic => (j + 1) % self.ny,
            Boundary::Wall => j + 1,
        }
    }

    /// Quadrature weight of corner node `(i, j)`: 1 inside, 1/2 on a wall
    /// edge, 1/4 in a wall corner.
    #[inline]
    pub fn node_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if self.bc_x == Boundary::Wall && (i == 0 || i == self.nx) { 0.5 } else { 1.0 };
        let wy = if self.bc_y == Boundary::Wall && (j == 0 || j == self.ny) { 0.5 } else { 1.0 };
        wx * wy
    }

    /// Cell-centre coordinates.
    #[inline]
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }

    #[inline]
    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }

    /// Smallest nonzero eigenvalue of the negative discrete Laplacian.
    pub fn lambda_min(&self) -> f64 {
        let along = |h: f64, l: f64, bc: Boundary| {
            let theta = match bc {
                Boundary::Periodic => std::f64::consts::PI * h / l,
                Boundary::Wall => std::f64::consts::PI * h / (2.0 * l),
            };
            4.0 / (h * h) * theta.sin().powi(2)
        };
        along(self.hx, self.lx, self.bc_x).min(along(self.hy, self.ly, self.bc_y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_empty_grids() {
        assert!(GridSpec::new(3, 8, 1.0, 1.0, Boundary::Wall, Boundary::Wall).is_err());
        assert!(GridSpec::new(8, 8, 0.0, 1.0, Boundary::Wall, Boundary::Wall).is_err());
        let g = GridSpec::new(8, 4, 2.0, 1.0, Boundary::Wall, Boundary::Periodic).unwrap();
        assert_eq!(g.nux(), 9);
        assert_eq!(g.nwy(), 4);
        assert_eq!(g.hx, 0.25);
    }

    #[test]
    fn node_weights_sum_to_cell_count() {
        for bc in [Boundary::Wall, Boundary::Periodic] {
            let g = GridSpec::new(5, 7, 1.0, 1.0, bc, bc).unwrap();
            let mut s = 0.0;
            for j in 0..g.nodes_y() {
                for i in 0..g.nodes_x() {
                    s += g.node_weight(i, j);
                }
            }
            assert!((s - 35.0).abs() < 1e-12);
        }
    }
}
