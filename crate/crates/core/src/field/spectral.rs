use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustdct::{DctPlanner, TransformType2And3};

use super::{spatial_mean, GridSpec, NormKind, ScalarField, VectorField};
use crate::error::{ChcError, Result};

/// Orthonormal cosine/sine transforms along one axis.
///
/// Cosine mode `k` (`0..n`) is `cos(π k x / L)`; sine mode `k` (`1..=n`) is
/// `sin(π k x / L)` and is stored at index `k - 1`. Both transforms are
/// orthogonal matrices, so transposes are inverses.
#[derive(Clone)]
struct Axis1d {
    n: usize,
    plan: Arc<dyn TransformType2And3<f64>>,
    kappa: Vec<f64>,
    s0: f64,
    s1: f64,
}

impl Axis1d {
    fn new(planner: &mut DctPlanner<f64>, n: usize, length: f64) -> Self {
        let kappa = (0..n)
            .map(|k| std::f64::consts::PI * k as f64 / length)
            .collect();
        Self {
            n,
            plan: planner.plan_dct2(n),
            kappa,
            s0: (1.0 / n as f64).sqrt(),
            s1: (2.0 / n as f64).sqrt(),
        }
    }

    fn scratch_len(&self) -> usize {
        self.plan.get_scratch_len()
    }

    fn cos_forward(&self, buf: &mut [f64], scratch: &mut [f64]) {
        self.plan.process_dct2_with_scratch(buf, scratch);
        buf[0] *= self.s0;
        buf[1..].iter_mut().for_each(|v| *v *= self.s1);
    }

    fn cos_inverse(&self, buf: &mut [f64], scratch: &mut [f64]) {
        buf[0] *= 2.0 * self.s0;
        buf[1..].iter_mut().for_each(|v| *v *= self.s1);
        self.plan.process_dct3_with_scratch(buf, scratch);
    }

    fn sin_forward(&self, buf: &mut [f64], scratch: &mut [f64]) {
        self.plan.process_dst2_with_scratch(buf, scratch);
        let n = self.n;
        buf[..n - 1].iter_mut().for_each(|v| *v *= self.s1);
        buf[n - 1] *= self.s0;
    }

    fn sin_inverse(&self, buf: &mut [f64], scratch: &mut [f64]) {
        let n = self.n;
        buf[..n - 1].iter_mut().for_each(|v| *v *= self.s1);
        buf[n - 1] *= 2.0 * self.s0;
        self.plan.process_dst3_with_scratch(buf, scratch);
    }

    /// Cosine coefficients to sine coefficients of the derivative, in place.
    fn derive(&self, buf: &mut [f64]) {
        for k in 1..self.n {
            buf[k - 1] = -self.kappa[k] * buf[k];
        }
        buf[self.n - 1] = 0.0;
    }

    /// Transpose of [`Axis1d::derive`], in place.
    fn derive_transpose(&self, buf: &mut [f64]) {
        for k in (1..self.n).rev() {
            buf[k] = -self.kappa[k] * buf[k - 1];
        }
        buf[0] = 0.0;
    }
}

type LineOp = fn(&Axis1d, &mut [f64], &mut [f64]);

/// Spectral operator context for one grid: cosine (Neumann) transforms,
/// derivatives, the Laplacian and its Neumann inverse.
///
/// Holds only immutable plans; every call allocates its own scratch, so one
/// instance can be shared across threads.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    x: Axis1d,
    y: Axis1d,
    eigen: Array2<f64>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = DctPlanner::new();
        let x = Axis1d::new(&mut planner, grid.nx, grid.lx);
        let y = Axis1d::new(&mut planner, grid.ny, grid.ly);
        let eigen = Array2::from_shape_fn(grid.shape(), |(l, k)| {
            x.kappa[k] * x.kappa[k] + y.kappa[l] * y.kappa[l]
        });
        Self { grid, x, y, eigen }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `κx² + κy²` indexed `[l, k]`: the eigenvalues of `−Δ` on cosine modes.
    pub fn eigenvalues(&self) -> &Array2<f64> {
        &self.eigen
    }

    /// Smallest nonzero eigenvalue of `−Δ` with Neumann conditions.
    pub fn smallest_eigenvalue(&self) -> f64 {
        let kx = self.x.kappa[1];
        let ky = self.y.kappa[1];
        kx.min(ky).powi(2)
    }

    fn along_x(&self, a: &mut Array2<f64>, op: LineOp) {
        let mut scratch = vec![0.0; self.x.scratch_len()];
        for mut row in a.rows_mut() {
            let buf = row.as_slice_mut().expect("standard layout");
            op(&self.x, buf, &mut scratch);
        }
    }

    fn along_y(&self, a: &mut Array2<f64>, op: LineOp) {
        let mut scratch = vec![0.0; self.y.scratch_len()];
        let mut buf = vec![0.0; self.grid.ny];
        for mut col in a.axis_iter_mut(Axis(1)) {
            for (b, v) in buf.iter_mut().zip(col.iter()) {
                *b = *v;
            }
            op(&self.y, &mut buf, &mut scratch);
            for (v, b) in col.iter_mut().zip(buf.iter()) {
                *v = *b;
            }
        }
    }

    /// Orthonormal 2D cosine coefficients, indexed `[l, k]` (`y` mode, `x` mode).
    pub fn to_spectral(&self, f: &ScalarField) -> Array2<f64> {
        let mut a = f.values().to_owned();
        self.along_x(&mut a, |ax, b, s| ax.cos_forward(b, s));
        self.along_y(&mut a, |ax, b, s| ax.cos_forward(b, s));
        a
    }

    pub fn from_spectral(&self, coeffs: &Array2<f64>) -> ScalarField {
        let mut a = coeffs.to_owned();
        self.along_y(&mut a, |ax, b, s| ax.cos_inverse(b, s));
        self.along_x(&mut a, |ax, b, s| ax.cos_inverse(b, s));
        ScalarField::from_raw(self.grid, a)
    }

    /// Multiplies cosine coefficients by `symbol[l, k]`.
    pub fn apply_symbol(&self, f: &ScalarField, symbol: &Array2<f64>) -> ScalarField {
        let mut c = self.to_spectral(f);
        c *= symbol;
        self.from_spectral(&c)
    }

    /// `Δf` with homogeneous Neumann conditions.
    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        let mut c = self.to_spectral(f);
        c.zip_mut_with(&self.eigen, |v, e| *v *= -e);
        self.from_spectral(&c)
    }

    /// `𝒩f`: the zero-mean solution `z` of `−Δz = f` with Neumann conditions.
    pub fn inv_neumann_laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        let mean = spatial_mean(f);
        let tolerance = 1e-10 * f.l2_norm();
        if mean.abs() > tolerance {
            return Err(ChcError::NonZeroMeanInput { mean, tolerance });
        }
        let mut c = self.to_spectral(f);
        c.zip_mut_with(&self.eigen, |v, &e| *v = if e > 0.0 { *v / e } else { 0.0 });
        Ok(self.from_spectral(&c))
    }

    /// Spectral gradient; the x component expands in `sin(x) cos(y)` modes and
    /// the y component in `cos(x) sin(y)` modes.
    pub fn gradient(&self, f: &ScalarField) -> VectorField {
        let mut gx = f.values().to_owned();
        self.along_x(&mut gx, |ax, b, s| {
            ax.cos_forward(b, s);
            ax.derive(b);
            ax.sin_inverse(b, s);
        });
        let mut gy = f.values().to_owned();
        self.along_y(&mut gy, |ax, b, s| {
            ax.cos_forward(b, s);
            ax.derive(b);
            ax.sin_inverse(b, s);
        });
        VectorField {
            grid: self.grid,
            x: gx,
            y: gy,
        }
    }

    /// Exact transpose of [`Spectral::gradient`] (Euclidean, hence also L2).
    ///
    /// For fields whose normal component expands in sine modes this is the
    /// negative spectral divergence, and its output always has zero mean.
    pub fn gradient_adjoint(&self, v: &VectorField) -> ScalarField {
        let mut ax_part = v.x.to_owned();
        self.along_x(&mut ax_part, |ax, b, s| {
            ax.sin_forward(b, s);
            ax.derive_transpose(b);
            ax.cos_inverse(b, s);
        });
        let mut ay_part = v.y.to_owned();
        self.along_y(&mut ay_part, |ax, b, s| {
            ax.sin_forward(b, s);
            ax.derive_transpose(b);
            ax.cos_inverse(b, s);
        });
        ScalarField::from_raw(self.grid, ax_part + ay_part)
    }

    /// Spectral divergence `∂x vx + ∂y vy` in the sine expansion of each component.
    pub fn divergence(&self, v: &VectorField) -> ScalarField {
        self.gradient_adjoint(v).scaled(-1.0)
    }

    /// 0/1 mask keeping cosine modes below two thirds of each axis resolution.
    pub fn dealias_mask(&self) -> Array2<f64> {
        let (cx, cy) = (2 * self.grid.nx / 3, 2 * self.grid.ny / 3);
        Array2::from_shape_fn(self.grid.shape(), |(l, k)| {
            if k < cx && l < cy {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn norm(&self, f: &ScalarField, kind: NormKind) -> f64 {
        match kind {
            NormKind::MeanSquare => f.l2_norm(),
            NormKind::H1 => {
                let g = self.gradient(f);
                (f.dot(f) + g.dot(&g)).sqrt()
            }
            NormKind::DualH1 => {
                let mean = spatial_mean(f);
                let mut c = self.to_spectral(&f.map(|v| v - mean));
                // ‖∇𝒩g‖² = Σ ĝ² / κ² over nonzero modes
                c.zip_mut_with(&self.eigen, |v, &e| *v = if e > 0.0 { *v / e } else { 0.0 });
                let z = self.from_spectral(&c);
                let gz = self.gradient(&z);
                (gz.dot(&gz) + mean * mean).sqrt()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pseudo_random(grid: GridSpec, seed: u64) -> ScalarField {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let values = Array2::from_shape_simple_fn(grid.shape(), || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        });
        ScalarField::from_values(grid, values).unwrap()
    }

    fn rel(a: &ScalarField, b: &ScalarField) -> f64 {
        a.sub(b).l2_norm() / b.l2_norm().max(1e-300)
    }

    #[test]
    fn transforms_are_orthonormal() {
        let grid = GridSpec::new(16, 8, 2.0, 3.0).unwrap();
        let sp = Spectral::new(grid);
        let f = pseudo_random(grid, 3);
        let c = sp.to_spectral(&f);
        let parseval: f64 = c.iter().map(|v| v * v).sum();
        let direct: f64 = f.values().iter().map(|v| v * v).sum();
        assert!((parseval - direct).abs() < 1e-12 * direct);
        assert!(rel(&sp.from_spectral(&c), &f) < 1e-14);

        let mut buf: Vec<f64> = f.values().row(0).to_vec();
        let orig = buf.clone();
        let mut scratch = vec![0.0; sp.x.scratch_len()];
        sp.x.sin_forward(&mut buf, &mut scratch);
        let e: f64 = buf.iter().map(|v| v * v).sum();
        let e0: f64 = orig.iter().map(|v| v * v).sum();
        assert!((e - e0).abs() < 1e-13 * e0);
        sp.x.sin_inverse(&mut buf, &mut scratch);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let grid = GridSpec::unit_square(16).unwrap();
        let sp = Spectral::new(grid);
        let lap = sp.laplacian(&ScalarField::constant(grid, 2.5));
        assert!(lap.max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_cosine_eigenfunction() {
        let grid = GridSpec::new(32, 16, 1.7, 1.0).unwrap();
        let sp = Spectral::new(grid);
        let lx = grid.lx;
        let f = ScalarField::from_fn(grid, |x, _| (PI * x / lx).cos());
        let expected = f.scaled(-(PI / lx).powi(2));
        assert!(rel(&sp.laplacian(&f), &expected) < 1e-13);
    }

    #[test]
    fn laplacian_output_has_zero_mean() {
        let grid = GridSpec::unit_square(32).unwrap();
        let sp = Spectral::new(grid);
        let f = pseudo_random(grid, 11);
        let lap = sp.laplacian(&f);
        // the k = 0 coefficient of the output, inspected directly
        let c = sp.to_spectral(&lap);
        assert!(c[[0, 0]].abs() < 1e-13 * f.l2_norm() * grid.n_cells() as f64);
        assert!(lap.mean().abs() < 1e-13 * f.l2_norm());
    }

    #[test]
    fn inverse_laplacian_eigenfunction_and_zero() {
        let grid = GridSpec::new(16, 16, 2.0, 1.0).unwrap();
        let sp = Spectral::new(grid);
        let f = ScalarField::from_fn(grid, |x, _| (PI * x / 2.0).cos());
        let z = sp.inv_neumann_laplacian(&f).unwrap();
        assert!(rel(&z, &f.scaled((2.0 / PI).powi(2))) < 1e-13);
        let zero = sp.inv_neumann_laplacian(&ScalarField::zeros(grid)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn inverse_laplacian_rejects_nonzero_mean() {
        let grid = GridSpec::unit_square(8).unwrap();
        let sp = Spectral::new(grid);
        let err = sp.inv_neumann_laplacian(&ScalarField::constant(grid, 1.0));
        assert!(matches!(err, Err(ChcError::NonZeroMeanInput { .. })));
    }

    #[test]
    fn gradient_of_cosine() {
        let grid = GridSpec::new(32, 16, 1.5, 1.0).unwrap();
        let sp = Spectral::new(grid);
        let f = ScalarField::from_fn(grid, |x, _| (PI * x / 1.5).cos());
        let g = sp.gradient(&f);
        let ex = ScalarField::from_fn(grid, |x, _| -(PI / 1.5) * (PI * x / 1.5).sin());
        let gx = ScalarField::from_raw(grid, g.x.clone());
        assert!(rel(&gx, &ex) < 1e-13);
        assert!(g.y.iter().all(|v| v.abs() < 1e-13));
        let gc = sp.gradient(&ScalarField::constant(grid, 4.0));
        assert!(gc.max_abs() < 1e-12);
    }

    #[test]
    fn gradient_adjoint_is_transpose() {
        let grid = GridSpec::new(16, 24, 1.0, 2.0).unwrap();
        let sp = Spectral::new(grid);
        let f = pseudo_random(grid, 5);
        let v = VectorField {
            grid,
            x: pseudo_random(grid, 6).into_values(),
            y: pseudo_random(grid, 7).into_values(),
        };
        let lhs = sp.gradient(&f).dot(&v);
        let rhs = f.dot(&sp.gradient_adjoint(&v));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        assert!(sp.gradient_adjoint(&v).mean().abs() < 1e-14);
    }

    #[test]
    fn gradient_composition_is_laplacian() {
        let grid = GridSpec::unit_square(16).unwrap();
        let sp = Spectral::new(grid);
        let f = pseudo_random(grid, 9);
        let lhs = sp.gradient_adjoint(&sp.gradient(&f));
        let rhs = sp.laplacian(&f).scaled(-1.0);
        assert!(rel(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn norms_of_simple_fields() {
        let grid = GridSpec::unit_square(32).unwrap();
        let sp = Spectral::new(grid);
        let zero = ScalarField::zeros(grid);
        for kind in [NormKind::MeanSquare, NormKind::H1, NormKind::DualH1] {
            assert_eq!(sp.norm(&zero, kind), 0.0);
            let one = ScalarField::constant(grid, 1.0);
            assert!((sp.norm(&one, kind) - 1.0).abs() < 1e-13);
        }
        let f = ScalarField::from_fn(grid, |x, _| (PI * x).cos());
        assert!((sp.norm(&f, NormKind::MeanSquare) - 0.5_f64.sqrt()).abs() < 1e-13);
        assert!((sp.norm(&f, NormKind::H1) - (0.5 + PI * PI / 2.0).sqrt()).abs() < 1e-12);
        assert!((sp.norm(&f, NormKind::DualH1) - (1.0 / (2.0 * PI * PI)).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn dual_norm_bounded_by_smallest_eigenvalue() {
        let grid = GridSpec::new(16, 16, 3.0, 2.0).unwrap();
        let sp = Spectral::new(grid);
        for seed in 0..10 {
            let f = pseudo_random(grid, 100 + seed);
            let c = (1.0 / sp.smallest_eigenvalue()).max(1.0 / grid.area()).sqrt();
            assert!(sp.norm(&f, NormKind::DualH1) <= c * sp.norm(&f, NormKind::MeanSquare) * (1.0 + 1e-12));
        }
    }
}
