//! Uniform grids on `[0, x_max]` and densities living on them.

use serde::{Deserialize, Serialize};

use crate::error::{KecError, Result};
use crate::real::{r, Real};

/// Uniform grid with nodes `x_i = i * dx`, `i = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D<R> {
    pub x_max: R,
    pub n_points: usize,
}

impl<R: Real> Grid1D<R> {
    pub fn new(x_max: R, n_points: usize) -> Result<Self> {
        if n_points < 3 || x_max <= R::zero() {
            return Err(KecError::InvalidParameter(format!(
                "grid needs x_max > 0 and at least 3 points, got x_max = {x_max}, n = {n_points}"
            )));
        }
        Ok(Grid1D { x_max, n_points })
    }

    #[inline]
    pub fn dx(&self) -> R {
        self.x_max / r(self.n_points as f64 - 1.0)
    }

    #[inline]
    pub fn node(&self, i: usize) -> R {
        r::<R>(i as f64) * self.dx()
    }

    pub fn nodes(&self) -> Vec<R> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Finite-volume cell width: half cells at the two boundaries.
    #[inline]
    pub fn cell_volume(&self, i: usize) -> R {
        if i == 0 || i == self.n_points - 1 {
            self.dx() * r(0.5)
        } else {
            self.dx()
        }
    }
}

/// Trapezoid quadrature of sampled values on a uniform grid.
pub fn trapezoid<R: Real>(values: &[R], dx: R) -> R {
    if values.len() < 2 {
        return R::zero();
    }
    let half: R = r(0.5);
    let interior: R = values[1..values.len() - 1].iter().copied().sum();
    dx * (half * values[0] + interior + half * values[values.len() - 1])
}

/// Cumulative trapezoid integral starting from index `start` (value 0 there).
/// Entries before `start` copy the value at `start`.
pub fn cumulative_trapezoid<R: Real>(values: &[R], dx: R, start: usize) -> Vec<R> {
    let half: R = r(0.5);
    let mut out = vec![R::zero(); values.len()];
    let mut acc = R::zero();
    for i in start + 1..values.len() {
        acc = acc + half * dx * (values[i - 1] + values[i]);
        out[i] = acc;
    }
    let mut acc = R::zero();
    for i in (0..start).rev() {
        acc = acc - half * dx * (values[i] + values[i + 1]);
        out[i] = acc;
    }
    out
}

/// Nonnegative density samples on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<R> {
    pub grid: Grid1D<R>,
    pub values: Vec<R>,
}

impl<R: Real> DensityField<R> {
    pub fn new(grid: Grid1D<R>, values: Vec<R>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(KecError::LengthMismatch {
                expected: grid.n_points,
                got: values.len(),
            });
        }
        Ok(DensityField { grid, values })
    }

    pub fn zeros(grid: Grid1D<R>) -> Self {
        DensityField {
            grid,
            values: vec![R::zero(); grid.n_points],
        }
    }

    /// Trapezoid mass; identical to the finite-volume mass on a uniform grid.
    pub fn mass(&self) -> R {
        trapezoid(&self.values, self.grid.dx())
    }
}
