use super::GridSpec;
use crate::par;

/// Cell-centred scalar samples, row-major (`j * nx + i`).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { values: vec![0.0; grid.cells()], grid }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { values: vec![c; grid.cells()], grid }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.cells(), "scalar field length mismatch");
        Self { grid, values }
    }

    /// Samples `f(x, y)` at cell centres.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.x_center(i), grid.y_center(j)));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    /// `∫ f` by the midpoint rule.
    pub fn integral(&self) -> f64 {
        par::sum(self.values.len(), |r| self.values[r].iter().sum()) * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.area()
    }

    /// Weighted inner product `Σ f g hx hy`.
    pub fn inner(&self, other: &Self) -> f64 {
        par::dot(&self.values, &other.values) * self.grid.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sub_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Self {
        let mut out = Self::zeros(self.grid);
        par::fill(&mut out.values, |k| f(self.values[k]));
        out
    }

    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        par::axpy(alpha, &x.values, &mut self.values);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

/// Face-normal velocity components (or any face-centred vector quantity).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: GridSpec,
    /// x-faces, row-major with `nux` entries per row.
    pub u: Vec<f64>,
    /// y-faces, row-major with `nx` entries per row, `nwy` rows.
    pub w: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { u: vec![0.0; grid.n_u()], w: vec![0.0; grid.n_w()], grid }
    }

    pub fn from_parts(grid: GridSpec, u: Vec<f64>, w: Vec<f64>) -> Self {
        assert_eq!(u.len(), grid.n_u(), "x-face array length mismatch");
        assert_eq!(w.len(), grid.n_w(), "y-face array length mismatch");
        let mut v = Self { grid, u, w };
        v.zero_boundary();
        v
    }

    /// Samples `(fu, fw)` at face midpoints; wall faces are forced to zero.
    pub fn from_fns(grid: GridSpec, fu: impl Fn(f64, f64) -> f64, fw: impl Fn(f64, f64) -> f64) -> Self {
        let mut v = Self::zeros(grid);
        let nux = grid.nux();
        for j in 0..grid.ny {
            for i in 0..nux {
                v.u[j * nux + i] = fu(i as f64 * grid.hx, grid.y_center(j));
            }
        }
        for j in 0..grid.nwy() {
            for i in 0..grid.nx {
                v.w[j * grid.nx + i] = fw(grid.x_center(i), j as f64 * grid.hy);
            }
        }
        v.zero_boundary();
        v
    }

    /// Constant vector on a fully periodic grid (walls zero their normal faces).
    pub fn constant(grid: GridSpec, cu: f64, cw: f64) -> Self {
        Self::from_fns(grid, |_, _| cu, |_, _| cw)
    }

    pub fn zero_boundary(&mut self) {
        let g = self.grid;
        let nux = g.nux();
        if g.bc_x == super::Boundary::Wall {
            for j in 0..g.ny {
                self.u[j * nux] = 0.0;
                self.u[j * nux + g.nx] = 0.0;
            }
        }
        if g.bc_y == super::Boundary::Wall {
            let top = g.ny * g.nx;
            self.w[..g.nx].iter_mut().for_each(|x| *x = 0.0);
            self.w[top..top + g.nx].iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Face inner product; each face carries the weight `hx hy`.
    pub fn inner(&self, other: &Self) -> f64 {
        (par::dot(&self.u, &other.u) + par::dot(&self.w, &other.w)) * self.grid.cell_area()
    }

    pub fn l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.w).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.w).all(|v| v.is_finite())
    }

    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        par::axpy(alpha, &x.u, &mut self.u);
        par::axpy(alpha, &x.w, &mut self.w);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.u.iter_mut().chain(self.w.iter_mut()).for_each(|v| *v *= alpha);
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Componentwise product with face coefficients.
    pub fn mul_faces(&mut self, coeff: &Self) {
        self.u.iter_mut().zip(&coeff.u).for_each(|(a, c)| *a *= c);
        self.w.iter_mut().zip(&coeff.w).for_each(|(a, c)| *a *= c);
    }

    /// Cell-centred components, averaged from the two bounding faces.
    pub fn to_cells(&self) -> (ScalarField, ScalarField) {
        let g = self.grid;
        let nux = g.nux();
        let mut cu = ScalarField::zeros(g);
        let mut cw = ScalarField::zeros(g);
        for j in 0..g.ny {
            let jt = g.top_face(j);
            for i in 0..g.nx {
                let ir = g.right_face(i);
                cu.values[j * g.nx + i] = 0.5 * (self.u[j * nux + i] + self.u[j * nux + ir]);
                cw.values[j * g.nx + i] = 0.5 * (self.w[j * g.nx + i] + self.w[jt * g.nx + i]);
            }
        }
        (cu, cw)
    }
}
