//! Cell-centered rectangular grids, the homogeneous-Neumann Laplacian and the
//! norms used throughout the analysis.
//!
//! Fields are stored flat in row-major order with the x axis varying fastest:
//! cell `(ix, iy)` lives at `iy * nx + ix`. In 1D there is a single axis.
//!
//! The boundary is handled by ghost-cell reflection (ghost value = adjacent
//! interior value), which makes the zero normal derivative hold at the cell
//! faces and makes the discrete Laplacian sum to exactly zero over the grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NetworkState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: extent must be positive and finite, got {extent}")]
    Extent { axis: usize, extent: f64 },
    #[error("axis {axis}: need at least 2 cells, got {cells}")]
    Cells { axis: usize, cells: usize },
    #[error("field has {got} values but the grid has {expected} cells")]
    Mismatch { expected: usize, got: usize },
}

/// One axis of a rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub extent: f64,
    pub cells: usize,
}

impl Axis {
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.extent / self.cells as f64
    }

    /// Coordinate of the center of cell `i`.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing()
    }
}

/// Serialized form: `{ extent = [Lx, (Ly)], cells = [nx, (ny)] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extent: Vec<f64>,
    pub cells: Vec<usize>,
}

/// A validated 1D or 2D cell-centered grid on `[0, L1] (x [0, L2])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    axes: Vec<Axis>,
}

impl TryFrom<GridSpec> for Grid {
    type Error = GridError;

    fn try_from(spec: GridSpec) -> Result<Self, Self::Error> {
        if spec.extent.len() != spec.cells.len() {
            return Err(GridError::Dimension(spec.extent.len().max(spec.cells.len())));
        }
        let axes = spec
            .extent
            .iter()
            .zip(&spec.cells)
            .map(|(&extent, &cells)| Axis { extent, cells })
            .collect();
        Grid::new(axes)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            extent: g.axes.iter().map(|a| a.extent).collect(),
            cells: g.axes.iter().map(|a| a.cells).collect(),
        }
    }
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self, GridError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(GridError::Dimension(axes.len()));
        }
        for (axis, a) in axes.iter().enumerate() {
            if !(a.extent.is_finite() && a.extent > 0.0) {
                return Err(GridError::Extent { axis, extent: a.extent });
            }
            if a.cells < 2 {
                return Err(GridError::Cells { axis, cells: a.cells });
            }
        }
        Ok(Self { axes })
    }

    pub fn line(extent: f64, cells: usize) -> Result<Self, GridError> {
        Self::new(vec![Axis { extent, cells }])
    }

    pub fn rect(extent: [f64; 2], cells: [usize; 2]) -> Result<Self, GridError> {
        Self::new(vec![
            Axis { extent: extent[0], cells: cells[0] },
            Axis { extent: extent[1], cells: cells[1] },
        ])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    /// Total number of cells.
    #[inline]
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lebesgue measure of the domain, `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.axes.iter().map(|a| a.extent).product()
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).fold(f64::INFINITY, f64::min)
    }

    /// Cell-center coordinates of flat index `idx`.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        match self.dim() {
            1 => [self.axes[0].center(idx), 0.0],
            _ => {
                let nx = self.axes[0].cells;
                [self.axes[0].center(idx % nx), self.axes[1].center(idx / nx)]
            }
        }
    }

    /// Samples `f` at every cell center.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Field {
        Field((0..self.len()).map(|i| f(self.center(i))).collect())
    }

    pub fn zeros(&self) -> Field {
        Field(vec![0.0; self.len()])
    }

    pub fn constant(&self, value: f64) -> Field {
        Field(vec![value; self.len()])
    }

    pub fn check(&self, f: &Field) -> Result<(), GridError> {
        if f.len() != self.len() {
            return Err(GridError::Mismatch { expected: self.len(), got: f.len() });
        }
        Ok(())
    }
}

/// Cell-center samples of one scalar quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|v| *v *= s);
    }

    /// `self - other`, pointwise.
    pub fn sub(&self, other: &Field) -> Field {
        Field(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

/// Writes the reflection-Neumann Laplacian of `f` into `out`.
/// Both slices must have `grid.len()` entries.
pub fn laplacian_into(f: &[f64], grid: &Grid, out: &mut [f64]) {
    let ax = grid.axis(0);
    let nx = ax.cells;
    let cx = 1.0 / (ax.spacing() * ax.spacing());
    let rows = f.len() / nx;
    for row in 0..rows {
        let base = row * nx;
        let line = &f[base..base + nx];
        let o = &mut out[base..base + nx];
        o[0] = cx * (line[1] - line[0]);
        for i in 1..nx - 1 {
            o[i] = cx * (line[i - 1] - 2.0 * line[i] + line[i + 1]);
        }
        o[nx - 1] = cx * (line[nx - 2] - line[nx - 1]);
    }
    if grid.dim() == 2 {
        let ay = grid.axis(1);
        let ny = ay.cells;
        let cy = 1.0 / (ay.spacing() * ay.spacing());
        for iy in 0..ny {
            let below = if iy == 0 { 0 } else { iy - 1 };
            let above = if iy == ny - 1 { ny - 1 } else { iy + 1 };
            for ix in 0..nx {
                let c = f[iy * nx + ix];
                out[iy * nx + ix] += cy * (f[below * nx + ix] - 2.0 * c + f[above * nx + ix]);
            }
        }
    }
}

pub fn laplacian_neumann(f: &Field, grid: &Grid) -> Result<Field, GridError> {
    grid.check(f)?;
    let mut out = vec![0.0; f.len()];
    laplacian_into(f.values(), grid, &mut out);
    Ok(Field(out))
}

/// `∫ f² dx` by the midpoint rule.
#[inline]
pub(crate) fn l2_squared(f: &[f64], cell_volume: f64) -> f64 {
    f.iter().map(|v| v * v).sum::<f64>() * cell_volume
}

/// `∫ f⁴ dx` by the midpoint rule.
#[inline]
pub(crate) fn l4_fourth(f: &[f64], cell_volume: f64) -> f64 {
    f.iter().map(|v| (v * v) * (v * v)).sum::<f64>() * cell_volume
}

pub fn norm_l2(f: &Field, grid: &Grid) -> f64 {
    l2_squared(f.values(), grid.cell_volume()).sqrt()
}

pub fn norm_l4(f: &Field, grid: &Grid) -> f64 {
    l4_fourth(f.values(), grid.cell_volume()).sqrt().sqrt()
}

/// L² norm of the discrete gradient: central differences in the interior,
/// one-sided differences in the first and last cell of each line.
pub fn seminorm_h1(f: &Field, grid: &Grid) -> f64 {
    let f = f.values();
    let mut acc = 0.0;
    let nx = grid.axis(0).cells;
    let strides: Vec<(usize, usize, f64)> = match grid.dim() {
        1 => vec![(1, nx, grid.axis(0).spacing())],
        _ => vec![
            (1, nx, grid.axis(0).spacing()),
            (nx, grid.axis(1).cells, grid.axis(1).spacing()),
        ],
    };
    for idx in 0..f.len() {
        for &(stride, n, h) in &strides {
            let pos = (idx / stride) % n;
            let d = if pos == 0 {
                (f[idx + stride] - f[idx]) / h
            } else if pos == n - 1 {
                (f[idx] - f[idx - stride]) / h
            } else {
                (f[idx + stride] - f[idx - stride]) / (2.0 * h)
            };
            acc += d * d;
        }
    }
    (acc * grid.cell_volume()).sqrt()
}

/// `Σ_i (‖u_i‖² + ‖v_i‖² + ‖w_i‖² + ‖ρ_i‖⁴_{L⁴})`
pub fn quasi_norm(net: &NetworkState, grid: &Grid) -> f64 {
    energy_functional(net, grid, 1.0)
}

/// `Σ_i (C₁‖u_i‖² + ‖v_i‖² + ‖w_i‖² + ‖ρ_i‖⁴_{L⁴})`
pub fn energy_functional(net: &NetworkState, grid: &Grid, c1: f64) -> f64 {
    let vol = grid.cell_volume();
    net.neurons
        .iter()
        .map(|s| {
            c1 * l2_squared(s.u.values(), vol)
                + l2_squared(s.v.values(), vol)
                + l2_squared(s.w.values(), vol)
                + l4_fourth(s.rho.values(), vol)
        })
        .sum()
}
