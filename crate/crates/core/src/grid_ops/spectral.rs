//! Exact diagonalisation of constant-coefficient second differences.
//!
//! The five-point stencils used here are separable, and each 1D factor is
//! diagonalised by a fast trigonometric transform: DCT-II for cell centres
//! with zero-flux ends, DST-II for cell centres with odd ghosts, DST-I for
//! faces with fixed end values, and the FFT on periodic axes. Any function of
//! the two 1D operators is then inverted in `O(N log N)`. Used as a
//! preconditioner for the variable-coefficient solves.

use std::f64::consts::PI;
use std::sync::Arc;

use rustdct::rustfft::{num_complex::Complex, Fft, FftPlanner};
use rustdct::{DctPlanner, Dst1, TransformType2And3};

use super::{Boundary, GridSpec};
use crate::par;

/// 1D point sets and their boundary closures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Axis {
    /// `n` cell centres, zero flux at both ends.
    CellNeumann,
    /// `n` cell centres with odd ghosts (zero value half a cell outside).
    CellDirichlet,
    /// `n + 1` faces whose two end points are held fixed; they get
    /// eigenvalue 0.
    FaceDirichlet,
    /// `n` equally spaced points on a circle.
    Periodic,
}

enum Plan {
    Cos(Arc<dyn TransformType2And3<f64>>),
    Sin(Arc<dyn TransformType2And3<f64>>),
    /// `None` when there are no interior points.
    Faces(Option<Arc<dyn Dst1<f64>>>),
    Fourier { fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>> },
}

struct Line {
    /// Number of points.
    len: usize,
    plan: Plan,
    /// Eigenvalue belonging to each transform coefficient.
    lambda: Vec<f64>,
    /// Per-coefficient factor that makes forward followed by inverse the
    /// identity.
    scale: Vec<f64>,
}

impl Line {
    fn new(axis: Axis, n: usize, h: f64) -> Self {
        let ih2 = 1.0 / (h * h);
        let eig = |th: f64| (2.0 - 2.0 * th.cos()) * ih2;
        let nf = n as f64;
        let mut dct = DctPlanner::new();
        match axis {
            Axis::CellNeumann => Self {
                len: n,
                plan: Plan::Cos(dct.plan_dct2(n)),
                lambda: (0..n).map(|k| eig(PI * k as f64 / nf)).collect(),
                scale: vec![2.0 / nf; n],
            },
            Axis::CellDirichlet => Self {
                len: n,
                plan: Plan::Sin(dct.plan_dst2(n)),
                lambda: (0..n).map(|k| eig(PI * (k + 1) as f64 / nf)).collect(),
                scale: vec![2.0 / nf; n],
            },
            Axis::FaceDirichlet => Self {
                len: n + 1,
                plan: Plan::Faces((n > 1).then(|| dct.plan_dst1(n - 1))),
                lambda: (0..=n).map(|i| if i == 0 || i == n { 0.0 } else { eig(PI * i as f64 / nf) }).collect(),
                scale: (0..=n).map(|i| if i == 0 || i == n { 1.0 } else { 2.0 / nf }).collect(),
            },
            Axis::Periodic => {
                let mut fft = FftPlanner::new();
                Self {
                    len: n,
                    plan: Plan::Fourier { fwd: fft.plan_fft_forward(n), inv: fft.plan_fft_inverse(n) },
                    lambda: (0..n).map(|m| eig(2.0 * PI * m as f64 / nf)).collect(),
                    scale: vec![1.0 / nf; n],
                }
            }
        }
    }

    fn is_complex(&self) -> bool {
        matches!(self.plan, Plan::Fourier { .. })
    }

    fn scratch(&self) -> Scratch {
        let (real, fft) = match &self.plan {
            Plan::Cos(t) | Plan::Sin(t) => (t.get_scratch_len(), 0),
            Plan::Faces(Some(t)) => (t.get_scratch_len(), 0),
            Plan::Faces(None) => (0, 0),
            Plan::Fourier { fwd, inv } => (0, fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())),
        };
        let zero = Complex::new(0.0, 0.0);
        Scratch {
            real: vec![0.0; real],
            buf: if self.is_complex() { vec![zero; self.len] } else { Vec::new() },
            fft: vec![zero; fft],
        }
    }

    /// Transforms one line held as real and imaginary parts. Real
    /// transforms act on both parts; `im` is unused unless some axis is
    /// periodic.
    fn apply(&self, re: &mut [f64], im: Option<&mut [f64]>, inverse: bool, s: &mut Scratch) {
        match &self.plan {
            Plan::Fourier { fwd, inv } => {
                let im = im.expect("periodic axes carry an imaginary part");
                for ((c, &a), &b) in s.buf.iter_mut().zip(re.iter()).zip(im.iter()) {
                    *c = Complex::new(a, b);
                }
                let t = if inverse { inv } else { fwd };
                t.process_with_scratch(&mut s.buf, &mut s.fft);
                for ((r, i), c) in re.iter_mut().zip(im.iter_mut()).zip(&s.buf) {
                    *r = c.re;
                    *i = c.im;
                }
            }
            _ => {
                self.apply_real(re, inverse, &mut s.real);
                if let Some(im) = im {
                    self.apply_real(im, inverse, &mut s.real);
                }
            }
        }
    }

    fn apply_real(&self, x: &mut [f64], inverse: bool, scratch: &mut [f64]) {
        match &self.plan {
            Plan::Cos(t) if inverse => t.process_dct3_with_scratch(x, scratch),
            Plan::Cos(t) => t.process_dct2_with_scratch(x, scratch),
            Plan::Sin(t) if inverse => t.process_dst3_with_scratch(x, scratch),
            Plan::Sin(t) => t.process_dst2_with_scratch(x, scratch),
            Plan::Faces(Some(t)) => {
                let n = x.len() - 1;
                t.process_dst1_with_scratch(&mut x[1..n], scratch);
            }
            Plan::Faces(None) => {}
            Plan::Fourier { .. } => unreachable!(),
        }
    }
}

/// Per-task work buffers for one [`Line`].
struct Scratch {
    real: Vec<f64>,
    buf: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
}

/// Lines handed to one task at a time.
const BLOCK: usize = 16;

fn cell_axis(bc: Boundary) -> Axis {
    match bc {
        Boundary::Wall => Axis::CellNeumann,
        Boundary::Periodic => Axis::Periodic,
    }
}

pub(crate) struct FastDiag {
    x: Line,
    y: Line,
}

impl FastDiag {
    /// Cell-centred scalars with zero-flux walls.
    pub(crate) fn new(g: &GridSpec) -> Self {
        Self::with_axes(g, cell_axis(g.bc_x), cell_axis(g.bc_y))
    }

    /// Axes for the x-velocity (first) and the y-velocity (second) under
    /// no-slip walls.
    pub(crate) fn velocity(g: &GridSpec) -> (Self, Self) {
        let face = |bc| if bc == Boundary::Wall { Axis::FaceDirichlet } else { Axis::Periodic };
        let tangential = |bc| if bc == Boundary::Wall { Axis::CellDirichlet } else { Axis::Periodic };
        (
            Self::with_axes(g, face(g.bc_x), tangential(g.bc_y)),
            Self::with_axes(g, tangential(g.bc_x), face(g.bc_y)),
        )
    }

    pub(crate) fn with_axes(g: &GridSpec, ax: Axis, ay: Axis) -> Self {
        Self { x: Line::new(ax, g.nx, g.hx), y: Line::new(ay, g.ny, g.hy) }
    }

    /// Number of unknowns.
    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.x.len * self.y.len
    }

    /// `out = f(Lx, Ly)⁻¹ r` for the separable second differences `Lx`,
    /// `Ly` (both positive semidefinite); `symbol` maps a pair of 1D
    /// eigenvalues to the matching eigenvalue of `f`. Modes with a zero
    /// symbol are dropped (pseudo-inverse).
    pub(crate) fn solve(&self, symbol: impl Fn(f64, f64) -> f64 + Sync, r: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.x.len, self.y.len);
        debug_assert_eq!(r.len(), nx * ny);
        let complex = self.x.is_complex() || self.y.is_complex();
        let mut re = r.to_vec();
        let mut im = if complex { vec![0.0; nx * ny] } else { Vec::new() };
        self.rows(&mut re, &mut im, false);

        // Columns: transpose, transform, scale, transform back.
        let mut cre = transpose(&re, nx, ny);
        let mut cim = if complex { transpose(&im, nx, ny) } else { Vec::new() };
        let (lx, ly) = (&self.x.lambda, &self.y.lambda);
        let (sx, sy) = (&self.x.scale, &self.y.scale);
        let column = |k: usize, cr: &mut [f64], ci: Option<&mut [f64]>, sc: &mut Scratch| {
            let mut ci = ci;
            self.y.apply(cr, ci.as_deref_mut(), false, sc);
            for l in 0..ny {
                let s = symbol(lx[k], ly[l]);
                let f = if s == 0.0 { 0.0 } else { sx[k] * sy[l] / s };
                cr[l] *= f;
                if let Some(ci) = ci.as_deref_mut() {
                    ci[l] *= f;
                }
            }
            self.y.apply(cr, ci, true, sc);
        };
        if complex {
            par::for_each_block2(&mut cre, &mut cim, ny, BLOCK, |k0, br, bi| {
                let mut sc = self.y.scratch();
                for (k, (cr, ci)) in br.chunks_mut(ny).zip(bi.chunks_mut(ny)).enumerate() {
                    column(k0 + k, cr, Some(ci), &mut sc);
                }
            });
        } else {
            par::for_each_block(&mut cre, ny, BLOCK, |k0, br| {
                let mut sc = self.y.scratch();
                for (k, cr) in br.chunks_mut(ny).enumerate() {
                    column(k0 + k, cr, None, &mut sc);
                }
            });
        }
        transpose_into(&cre, ny, nx, &mut re);
        if complex {
            transpose_into(&cim, ny, nx, &mut im);
        }
        self.rows(&mut re, &mut im, true);
        out.copy_from_slice(&re);
    }

    fn rows(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let nx = self.x.len;
        if im.is_empty() {
            par::for_each_block(re, nx, BLOCK, |_, blk| {
                let mut sc = self.x.scratch();
                blk.chunks_mut(nx).for_each(|row| self.x.apply(row, None, inverse, &mut sc));
            });
        } else {
            par::for_each_block2(re, im, nx, BLOCK, |_, ba, bb| {
                let mut sc = self.x.scratch();
                for (a, b) in ba.chunks_mut(nx).zip(bb.chunks_mut(nx)) {
                    self.x.apply(a, Some(b), inverse, &mut sc);
                }
            });
        }
    }
}

/// Transpose of a row-major `rows × cols` array.
fn transpose(a: &[f64], cols: usize, rows: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    transpose_into(a, cols, rows, &mut t);
    t
}

fn transpose_into(a: &[f64], cols: usize, rows: usize, t: &mut [f64]) {
    par::for_each_row(t, rows, |c, out| {
        for (r, o) in out.iter_mut().enumerate() {
            *o = a[r * cols + c];
        }
    });
}
