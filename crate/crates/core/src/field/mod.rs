//! Discrete function spaces on the rectangle `(0, lx) x (0, ly)`.
//!
//! Fields live at cell centers `((i + 1/2) lx / nx, (j + 1/2) ly / ny)` and are
//! stored row-major with `y` as the outer index, so `values[[j, i]]` is the
//! cell at column `i`, row `j`. Integrals use uniform cell-average quadrature,
//! which is exact for the cosine basis at grid resolution.

mod snapshot;
mod spectral;

pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC};
pub(crate) use snapshot::{read_f64, read_u32};
pub use spectral::Spectral;

use ndarray::{Array2, Zip};

use crate::error::{ChcError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 8 || n % 2 != 0 {
                return Err(ChcError::InvalidGrid(format!(
                    "{name} = {n} must be even and at least 8"
                )));
            }
        }
        for (name, l) in [("lx", lx), ("ly", ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(ChcError::InvalidGrid(format!("{name} = {l} must be positive")));
            }
        }
        Ok(Self { nx, ny, lx, ly })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }
}

/// Scalar cell-centered field (order parameter, chemical potential, adjoint states).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Array2<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: Array2::zeros(grid.shape()),
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: Array2::from_elem(grid.shape(), c),
        }
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values =
            Array2::from_shape_fn(grid.shape(), |(j, i)| f(grid.x_center(i), grid.y_center(j)));
        Self { grid, values }
    }

    pub fn from_values(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(ChcError::ShapeMismatch(format!(
                "values {:?} vs grid {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ChcError::NonFiniteInput("scalar field"));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), grid.shape());
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.mapv(f))
    }

    pub fn try_map(&self, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let mut out = Array2::zeros(self.grid.shape());
        for (o, &v) in out.iter_mut().zip(self.values.iter()) {
            *o = f(v)?;
        }
        Ok(Self::from_raw(self.grid, out))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.grid, &self.values * c)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        self.values.scaled_add(a, &other.values);
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        Self::from_raw(self.grid, &self.values + &other.values)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        Self::from_raw(self.grid, &self.values - &other.values)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ScalarField) -> Self {
        Self::from_raw(self.grid, &self.values * &other.values)
    }

    /// L2 inner product `∫ f g` by cell quadrature.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let s: f64 = Zip::from(&self.values)
            .and(&other.values)
            .fold(0.0, |acc, a, b| acc + a * b);
        s * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        spatial_mean(self)
    }

    /// Copy with the spatial mean removed.
    pub fn mean_free(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }
}

/// Cell-centered vector field; both components share the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            x: Array2::zeros(grid.shape()),
            y: Array2::zeros(grid.shape()),
        }
    }

    pub fn from_components(grid: GridSpec, x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.dim() != grid.shape() || y.dim() != grid.shape() {
            return Err(ChcError::ShapeMismatch("vector field components".into()));
        }
        Ok(Self { grid, x, y })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut v = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (a, b) = f(grid.x_center(i), grid.y_center(j));
                v.x[[j, i]] = a;
                v.y[[j, i]] = b;
            }
        }
        v
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        let sx: f64 = Zip::from(&self.x).and(&other.x).fold(0.0, |a, p, q| a + p * q);
        let sy: f64 = Zip::from(&self.y).and(&other.y).fold(0.0, |a, p, q| a + p * q);
        (sx + sy) * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `(∫ |v|^p)^{1/p}` with the Euclidean pointwise magnitude.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = Zip::from(&self.x)
            .and(&self.y)
            .fold(0.0, |a, &vx, &vy| a + (vx * vx + vy * vy).sqrt().powf(p));
        (s * self.grid.cell_area()).powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        Zip::from(&self.x)
            .and(&self.y)
            .fold(0.0_f64, |m, &a, &b| m.max((a * a + b * b).sqrt()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            x: &self.x * c,
            y: &self.y * c,
        }
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        self.x.scaled_add(a, &other.x);
        self.y.scaled_add(a, &other.y);
    }

    /// Pointwise `s * v`.
    pub fn scale_by(&self, s: &ScalarField) -> Self {
        Self {
            grid: self.grid,
            x: &self.x * s.values(),
            y: &self.y * s.values(),
        }
    }

    /// Pointwise `v · w`.
    pub fn pointwise_dot(&self, other: &VectorField) -> ScalarField {
        ScalarField::from_raw(self.grid, &self.x * &other.x + &self.y * &other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `(∫ f²)^{1/2}`
    MeanSquare,
    /// `(∫ f² + ∫ |∇f|²)^{1/2}`
    H1,
    /// `(‖∇𝒩(f − f̄)‖² + |f̄|²)^{1/2}`, equivalent to the dual norm of H1.
    DualH1,
}

/// `(1/|𝒪|) ∫ f`
pub fn spatial_mean(f: &ScalarField) -> f64 {
    f.values.sum() / f.grid.n_cells() as f64
}
