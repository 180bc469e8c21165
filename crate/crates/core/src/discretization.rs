//! Uniform cell-centred grids on boxes with zero-flux closure, and the
//! conservative face-flux operators built on them.
//!
//! Every divergence operator here is assembled face by face: a face flux is
//! computed once and added to one neighbour while being subtracted from the
//! other, and boundary faces carry no flux. The discrete integral of each
//! output therefore telescopes to zero up to rounding.

use crate::model::{canonical_d, canonical_s};
use crate::{Error, Result};

/// Uniform 1D or 2D cell-centred mesh on `[0, Lx] (x [0, Ly])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    extents: [f64; 2],
    h: [f64; 2],
}

impl Grid {
    pub const MIN_CELLS: usize = 3;

    pub fn new(extents: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = extents.len();
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid("grid.extents", "must have 1 or 2 entries"));
        }
        if cells.len() != dim {
            return Err(Error::invalid("grid.cells", "must have one entry per axis"));
        }
        let mut grid = Grid {
            dim,
            cells: [1, 1],
            extents: [1.0, 1.0],
            h: [1.0, 1.0],
        };
        for axis in 0..dim {
            if cells[axis] < Self::MIN_CELLS {
                return Err(Error::invalid("grid.cells", "must be at least 3 per axis"));
            }
            if !(extents[axis].is_finite() && extents[axis] > 0.0) {
                return Err(Error::invalid("grid.extents", "must be positive"));
            }
            grid.cells[axis] = cells[axis];
            grid.extents[axis] = extents[axis];
            grid.h[axis] = extents[axis] / cells[axis] as f64;
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn min_h(&self) -> f64 {
        self.h[..self.dim]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.extents[..self.dim].iter().product()
    }

    /// Cell centre of linear index `idx` (`idx = i + nx * j`). The second
    /// coordinate is 0 in 1D.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let i = idx % self.cells[0];
        let j = idx / self.cells[0];
        let x = (i as f64 + 0.5) * self.h[0];
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.h[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Visits every interior face as `(axis, p, q)` with `q` the neighbour of
    /// `p` in the positive direction.
    fn for_each_face(&self, mut visit: impl FnMut(usize, usize, usize)) {
        let [nx, ny] = self.cells;
        for j in 0..ny {
            for i in 0..nx - 1 {
                let p = i + nx * j;
                visit(0, p, p + 1);
            }
        }
        if self.dim == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let p = i + nx * j;
                    visit(1, p, p + nx);
                }
            }
        }
    }

    /// Assembles `∇·F` from face fluxes. `flux(axis, p, q, h)` returns the
    /// normal flux density across the face in the `p → q` direction sign
    /// convention of `k ∂φ/∂n`, i.e. positive when it feeds cell `p`.
    fn divergence(&self, flux: impl FnMut(usize, usize, usize, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.divergence_into(&mut out, flux);
        out
    }

    fn divergence_into(
        &self,
        out: &mut [f64],
        mut flux: impl FnMut(usize, usize, usize, f64) -> f64,
    ) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.for_each_face(|axis, p, q| {
            let h = self.h[axis];
            let g = flux(axis, p, q, h) / h;
            out[p] += g;
            out[q] -= g;
        });
    }

    /// Slice form of [`laplacian_neumann`] for matrix-free solvers.
    pub(crate) fn laplacian_into(&self, x: &[f64], out: &mut [f64]) {
        self.divergence_into(out, |_, p, q, h| (x[q] - x[p]) / h);
    }
}

/// One value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(
                "field",
                format!("must have {} values, got {}", grid.len(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "field",
                format!("has non-finite value in cell {i}"),
            ));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Field { grid, values }
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
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

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn ensure_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(cell) => Err(Error::NegativeDensity {
                cell,
                value: self.values[cell],
            }),
            None => Ok(()),
        }
    }
}

/// Cell-volume-weighted midpoint sum, accumulated with Neumaier
/// compensation.
pub fn integrate(phi: &Field) -> f64 {
    compensated_sum(phi.values.iter().copied()) * phi.grid.cell_volume()
}

/// `⟨φ, ψ⟩` under the cell-volume inner product.
pub fn inner(phi: &Field, psi: &Field) -> f64 {
    compensated_sum(phi.values.iter().zip(&psi.values).map(|(a, b)| a * b)) * phi.grid.cell_volume()
}

pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// 3-point (1D) / 5-point (2D) Laplacian with mirrored ghost cells.
pub fn laplacian_neumann(phi: &Field) -> Field {
    let v = &phi.values;
    let out = phi.grid.divergence(|_, p, q, h| (v[q] - v[p]) / h);
    Field::from_values_unchecked(phi.grid, out)
}

/// `∇·(D(u)∇u)` with `D(s) = (1 + s)^α`; the face diffusivity is the
/// arithmetic mean of the two cell values.
pub fn div_nonlinear_diffusion(u: &Field, alpha: f64) -> Result<Field> {
    u.ensure_nonnegative()?;
    let diffusivity: Vec<f64> = u.values.iter().map(|&s| canonical_d(s, alpha)).collect();
    let v = &u.values;
    let out = u
        .grid
        .divergence(|_, p, q, h| 0.5 * (diffusivity[p] + diffusivity[q]) * (v[q] - v[p]) / h);
    Ok(Field::from_values_unchecked(u.grid, out))
}

/// `χ ∇·(S(u)∇v)` with `S(s) = s (1 + s)^β`, donor-cell upwinded.
///
/// The term moves mass from high-`v` to low-`v` cells, so the donor at each
/// face is the neighbour with the larger `v`.
pub fn div_chemotactic_flux(u: &Field, v: &Field, beta: f64, chi: f64) -> Result<Field> {
    u.ensure_nonnegative()?;
    let uv = &u.values;
    let vv = &v.values;
    let out = u.grid.divergence(|_, p, q, h| {
        let dv = vv[q] - vv[p];
        let donor = if dv > 0.0 { q } else { p };
        chi * canonical_s(uv[donor], beta) * dv / h
    });
    Ok(Field::from_values_unchecked(u.grid, out))
}

/// Largest one-sided difference quotient `|φ_q - φ_p| / h` over interior
/// faces ("discrete gradient sup").
pub fn max_gradient(phi: &Field) -> f64 {
    let mut best = 0.0_f64;
    let v = &phi.values;
    phi.grid.for_each_face(|axis, p, q| {
        best = best.max((v[q] - v[p]).abs() / phi.grid.h[axis]);
    });
    best
}
