//! Cell-centered sampled functions on a [`Grid`].

use crate::error::{Error, Result};
use crate::geometry::Grid;

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    /// Samples `f(x, t)` at every cell center.
    pub fn from_fn<F: Fn(&[f64], f64) -> f64>(grid: &Grid, f: F) -> Self {
        let mut x = vec![0.0; grid.n()];
        let values = (0..grid.len())
            .map(|c| {
                let t = grid.center_into(c, &mut x);
                f(&x, t)
            })
            .collect();
        Self { grid: grid.clone(), values }
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

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        self.check_grid(other.grid())?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    /// Copy with every cell outside `cells` set to zero.
    pub fn restricted(&self, cells: &[usize]) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for &c in cells {
            values[c] = self.values[c];
        }
        Self { grid: self.grid.clone(), values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_over(&self, cells: &[usize]) -> f64 {
        cells.iter().fold(0.0, |m, &c| m.max(self.values[c].abs()))
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if &self.grid == grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// `n`-component vector field stored component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: &Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid: grid.clone(), components })
    }

    pub fn zeros(grid: &Grid, dim: usize) -> Self {
        Self { grid: grid.clone(), components: vec![vec![0.0; grid.len()]; dim] }
    }

    pub fn from_scalars(fields: Vec<ScalarField>) -> Result<Self> {
        let grid = fields.first().ok_or(Error::GridMismatch)?.grid().clone();
        let mut components = Vec::with_capacity(fields.len());
        for f in fields {
            f.check_grid(&grid)?;
            components.push(f.into_values());
        }
        Ok(Self { grid, components })
    }

    /// Samples `f(x, t, out)` at every cell center.
    pub fn from_fn<F: Fn(&[f64], f64, &mut [f64])>(grid: &Grid, dim: usize, f: F) -> Self {
        let mut components = vec![vec![0.0; grid.len()]; dim];
        let mut x = vec![0.0; grid.n()];
        let mut buf = vec![0.0; dim];
        for c in 0..grid.len() {
            let t = grid.center_into(c, &mut x);
            f(&x, t, &mut buf);
            for (comp, v) in components.iter_mut().zip(&buf) {
                comp[c] = *v;
            }
        }
        Self { grid: grid.clone(), components }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i]
    }

    pub fn component_field(&self, i: usize) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.components[i].clone() }
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.components
    }

    /// Euclidean norm at cell `c`.
    pub fn norm_at(&self, c: usize) -> f64 {
        self.components.iter().map(|v| v[c] * v[c]).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> ScalarField {
        let values = (0..self.grid.len()).map(|c| self.norm_at(c)).collect();
        ScalarField { grid: self.grid.clone(), values }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            components: self.components.iter().map(|v| v.iter().map(|x| s * x).collect()).collect(),
        }
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len()).fold(0.0, |m, c| m.max(self.norm_at(c)))
    }

    pub fn max_norm_over(&self, cells: &[usize]) -> f64 {
        cells.iter().fold(0.0, |m, &c| m.max(self.norm_at(c)))
    }
}

/// `n × n` matrix field, entries stored row-major as `entries[i * n + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    grid: Grid,
    rows: usize,
    entries: Vec<Vec<f64>>,
}

impl MatrixField {
    pub fn new(grid: &Grid, rows: usize, entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.len() != rows * rows || entries.iter().any(|e| e.len() != grid.len()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid: grid.clone(), rows, entries })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[i * self.rows + j]
    }

    /// Row `i` as a vector field (the gradient of the `i`-th partial).
    pub fn row(&self, i: usize) -> VectorField {
        VectorField {
            grid: self.grid.clone(),
            components: (0..self.rows).map(|j| self.entries[i * self.rows + j].clone()).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            rows: self.rows,
            entries: self.entries.iter().map(|e| e.iter().map(|v| v * s).collect()).collect(),
        }
    }

    /// Frobenius norm at cell `c`.
    pub fn norm_at(&self, c: usize) -> f64 {
        self.entries.iter().map(|v| v[c] * v[c]).sum::<f64>().sqrt()
    }
}
