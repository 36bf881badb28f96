//! Divergence-free velocity controls through stream functions.
//!
//! A control holds, for every time step, the coefficients `a_{lk}` of
//! `ψ = Σ a_{lk} sin(kπx/lx) sin(lπy/ly)` for `k, l = 1..=K_u`, stored
//! `[step][l-1][k-1]`. The velocity is `u = (∂_y ψ, −∂_x ψ)`, so `div u = 0`
//! and `u·n = 0` hold by construction. On the cell-centered grid distinct
//! modes induce L2-orthogonal velocities, which makes the induced metric on
//! coefficients diagonal (see [`StreamControl::mode_weight`]).

use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{ChcError, Result};
use crate::field::{GridSpec, VectorField};

pub const CONTROL_MAGIC: &[u8; 4] = b"CHU1";

#[derive(Debug, Clone, PartialEq)]
pub struct StreamControl {
    grid: GridSpec,
    n_steps: usize,
    dt: f64,
    k_u: usize,
    coeffs: Vec<f64>,
}

impl StreamControl {
    pub fn zeros(grid: GridSpec, n_steps: usize, dt: f64, k_u: usize) -> Result<Self> {
        if k_u == 0 || 2 * k_u > grid.nx.min(grid.ny) {
            return Err(ChcError::param(
                "K_u",
                format!("{k_u} must be in 1..={}", grid.nx.min(grid.ny) / 2),
            ));
        }
        if n_steps == 0 {
            return Err(ChcError::param("n_steps", "must be at least 1"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ChcError::param("dt", format!("{dt} must be positive")));
        }
        Ok(Self {
            grid,
            n_steps,
            dt,
            k_u,
            coeffs: vec![0.0; n_steps * k_u * k_u],
        })
    }

    pub fn from_coeffs(grid: GridSpec, n_steps: usize, dt: f64, k_u: usize, coeffs: Vec<f64>) -> Result<Self> {
        let mut c = Self::zeros(grid, n_steps, dt, k_u)?;
        if coeffs.len() != c.coeffs.len() {
            return Err(ChcError::ShapeMismatch(format!(
                "{} coefficients, expected {}",
                coeffs.len(),
                c.coeffs.len()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(ChcError::NonFiniteInput("control coefficients"));
        }
        c.coeffs = coeffs;
        Ok(c)
    }

    /// Same coefficients `per_step` (`K_u²` entries) at every step.
    pub fn constant_in_time(grid: GridSpec, n_steps: usize, dt: f64, k_u: usize, per_step: &[f64]) -> Result<Self> {
        let coeffs = per_step.iter().copied().cycle().take(n_steps * per_step.len()).collect();
        Self::from_coeffs(grid, n_steps, dt, k_u, coeffs)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn k_u(&self) -> usize {
        self.k_u
    }

    pub fn modes_per_step(&self) -> usize {
        self.k_u * self.k_u
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn step(&self, n: usize) -> &[f64] {
        let m = self.modes_per_step();
        &self.coeffs[n * m..(n + 1) * m]
    }

    pub fn step_mut(&mut self, n: usize) -> &mut [f64] {
        let m = self.modes_per_step();
        &mut self.coeffs[n * m..(n + 1) * m]
    }

    pub fn same_shape(&self, other: &StreamControl) -> bool {
        self.grid == other.grid && self.n_steps == other.n_steps && self.k_u == other.k_u
    }

    fn check_shape(&self, other: &StreamControl) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(ChcError::ShapeMismatch("controls of different shape".into()))
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &StreamControl) -> Result<()> {
        self.check_shape(other)?;
        for (s, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *s += a * o;
        }
        Ok(())
    }

    /// `‖u_ψ‖²_{L²(𝒪)} / a²` for mode `(k, l)`: `(lx ly / 4)(κx² + κy²)`.
    pub fn mode_weight(&self, k: usize, l: usize) -> f64 {
        let kx = PI * k as f64 / self.grid.lx;
        let ky = PI * l as f64 / self.grid.ly;
        0.25 * self.grid.area() * (kx * kx + ky * ky)
    }

    fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.modes_per_step());
        for l in 1..=self.k_u {
            for k in 1..=self.k_u {
                w.push(self.mode_weight(k, l));
            }
        }
        w
    }

    /// `∫_Q u·v` of the induced velocities with left-endpoint time quadrature.
    pub fn inner(&self, other: &StreamControl) -> f64 {
        let w = self.weights();
        let m = w.len();
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| w[i % m] * a * b)
            .sum();
        s * self.dt
    }

    /// `‖u‖_{L²(Q)}`
    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Converts an L2-transpose (`V^T g` per step, see [`pullback_gradient`])
    /// into the Riesz representer for [`StreamControl::inner`].
    pub fn riesz_from_pullback(&self, pulled: &StreamControl) -> Result<StreamControl> {
        self.check_shape(pulled)?;
        let w = self.weights();
        let m = w.len();
        let mut out = pulled.clone();
        for (i, v) in out.coeffs.iter_mut().enumerate() {
            *v /= w[i % m];
        }
        Ok(out)
    }
}

/// Sampled sine/cosine tables for evaluating stream-function velocities.
#[derive(Debug, Clone)]
pub struct VelocityBasis {
    grid: GridSpec,
    k_u: usize,
    // [k-1][i] / [l-1][j]
    sin_x: Array2<f64>,
    cos_x: Array2<f64>,
    sin_y: Array2<f64>,
    cos_y: Array2<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
}

impl VelocityBasis {
    pub fn new(grid: GridSpec, k_u: usize) -> Self {
        let kx: Vec<f64> = (1..=k_u).map(|k| PI * k as f64 / grid.lx).collect();
        let ky: Vec<f64> = (1..=k_u).map(|l| PI * l as f64 / grid.ly).collect();
        let sin_x = Array2::from_shape_fn((k_u, grid.nx), |(k, i)| (kx[k] * grid.x_center(i)).sin());
        let cos_x = Array2::from_shape_fn((k_u, grid.nx), |(k, i)| (kx[k] * grid.x_center(i)).cos());
        let sin_y = Array2::from_shape_fn((k_u, grid.ny), |(l, j)| (ky[l] * grid.y_center(j)).sin());
        let cos_y = Array2::from_shape_fn((k_u, grid.ny), |(l, j)| (ky[l] * grid.y_center(j)).cos());
        Self {
            grid,
            k_u,
            sin_x,
            cos_x,
            sin_y,
            cos_y,
            kx,
            ky,
        }
    }

    pub fn for_control(ctrl: &StreamControl) -> Self {
        Self::new(ctrl.grid, ctrl.k_u)
    }

    pub fn k_u(&self) -> usize {
        self.k_u
    }

    /// `u = (∂_y ψ, −∂_x ψ)` for one step's coefficients.
    pub fn velocity(&self, coeffs: &[f64]) -> VectorField {
        let k_u = self.k_u;
        let a = Array2::from_shape_vec((k_u, k_u), coeffs.to_vec()).expect("K_u² coefficients");
        // ux[j,i] = Σ_{l,k} a[l,k] ky_l cos_y[l,j] sin_x[k,i]
        let a_ky = Array2::from_shape_fn((k_u, k_u), |(l, k)| a[[l, k]] * self.ky[l]);
        let a_kx = Array2::from_shape_fn((k_u, k_u), |(l, k)| -a[[l, k]] * self.kx[k]);
        let ux = self.cos_y.t().dot(&a_ky.dot(&self.sin_x));
        let uy = self.sin_y.t().dot(&a_kx.dot(&self.cos_x));
        VectorField::from_components(self.grid, ux, uy).expect("basis shapes")
    }

    /// L2(𝒪) transpose of [`VelocityBasis::velocity`]: `b[l,k] = ⟨u_{lk}, g⟩`.
    pub fn pullback(&self, g: &VectorField) -> Vec<f64> {
        let da = self.grid.cell_area();
        let px = self.cos_y.dot(&g.x).dot(&self.sin_x.t());
        let py = self.sin_y.dot(&g.y).dot(&self.cos_x.t());
        let mut out = Vec::with_capacity(self.k_u * self.k_u);
        for l in 0..self.k_u {
            for k in 0..self.k_u {
                out.push(da * (self.ky[l] * px[[l, k]] - self.kx[k] * py[[l, k]]));
            }
        }
        out
    }
}

pub fn stream_to_velocity(ctrl: &StreamControl, step: usize) -> Result<VectorField> {
    if step >= ctrl.n_steps {
        return Err(ChcError::IndexOutOfRange {
            index: step,
            len: ctrl.n_steps,
        });
    }
    Ok(VelocityBasis::for_control(ctrl).velocity(ctrl.step(step)))
}

/// `(Σ_n dt ‖uⁿ‖_{L³}^p)^{1/p}`
pub fn control_norm(ctrl: &StreamControl, p: f64) -> f64 {
    let basis = VelocityBasis::for_control(ctrl);
    control_norm_with(&basis, ctrl, p)
}

pub(crate) fn control_norm_with(basis: &VelocityBasis, ctrl: &StreamControl, p: f64) -> f64 {
    let s: f64 = (0..ctrl.n_steps)
        .map(|n| ctrl.dt * basis.velocity(ctrl.step(n)).lp_norm(3.0).powf(p))
        .sum();
    s.powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleSet {
    pub p_exponent: f64,
    pub bound: f64,
}

impl AdmissibleSet {
    pub fn new(p_exponent: f64, bound: f64) -> Result<Self> {
        if !(p_exponent > 2.0 && p_exponent.is_finite()) {
            return Err(ChcError::param("p_exponent", format!("{p_exponent} must exceed 2")));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(ChcError::param("L", format!("{bound} must be positive")));
        }
        Ok(Self { p_exponent, bound })
    }

    pub fn contains(&self, ctrl: &StreamControl) -> bool {
        control_norm(ctrl, self.p_exponent) <= self.bound * (1.0 + 1e-13)
    }
}

/// Radial scaling onto `{‖u‖_{L^p(0,T;L³)} ≤ L}`.
pub fn project_admissible(ctrl: &StreamControl, set: &AdmissibleSet) -> StreamControl {
    let norm = control_norm(ctrl, set.p_exponent);
    if norm <= set.bound {
        ctrl.clone()
    } else {
        ctrl.scaled(set.bound / norm)
    }
}

/// `V^T` applied step by step to a time-indexed vector field.
pub fn pullback_gradient(template: &StreamControl, g: &[VectorField]) -> Result<StreamControl> {
    if g.len() != template.n_steps {
        return Err(ChcError::ShapeMismatch(format!(
            "{} gradient fields for {} steps",
            g.len(),
            template.n_steps
        )));
    }
    if g.iter().any(|v| v.grid() != &template.grid) {
        return Err(ChcError::ShapeMismatch("gradient grid".into()));
    }
    let basis = VelocityBasis::for_control(template);
    let mut out = template.clone();
    for (n, gn) in g.iter().enumerate() {
        out.step_mut(n).copy_from_slice(&basis.pullback(gn));
    }
    Ok(out)
}

/// Causal moving average over the previous `width` steps (fewer at the start).
pub fn mollify_control(ctrl: &StreamControl, width: usize) -> Result<StreamControl> {
    if width == 0 {
        return Err(ChcError::param("width", "must be at least 1"));
    }
    let mut out = ctrl.clone();
    let m = ctrl.modes_per_step();
    for n in 0..ctrl.n_steps {
        let start = (n + 1).saturating_sub(width);
        let count = (n + 1 - start) as f64;
        let dst = out.step_mut(n);
        dst.iter_mut().for_each(|v| *v = 0.0);
        for s in start..=n {
            for (d, v) in dst.iter_mut().zip(&ctrl.coeffs[s * m..(s + 1) * m]) {
                *d += v;
            }
        }
        dst.iter_mut().for_each(|v| *v /= count);
    }
    Ok(out)
}

/// `CHU1`, `u32` n_steps, `u32` K_u, `f64` dt, then the per-step blocks, little-endian.
pub fn write_control<W: Write>(mut w: W, ctrl: &StreamControl) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 8 * ctrl.coeffs.len());
    buf.extend_from_slice(CONTROL_MAGIC);
    buf.extend_from_slice(&(ctrl.n_steps as u32).to_le_bytes());
    buf.extend_from_slice(&(ctrl.k_u as u32).to_le_bytes());
    buf.extend_from_slice(&ctrl.dt.to_le_bytes());
    for v in &ctrl.coeffs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a `CHU1` control; the grid is not stored in the file.
pub fn read_control<R: Read>(mut r: R, grid: GridSpec) -> Result<StreamControl> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CONTROL_MAGIC {
        return Err(ChcError::Format(format!("bad control magic {magic:?}")));
    }
    let n_steps = crate::field::read_u32(&mut r)? as usize;
    let k_u = crate::field::read_u32(&mut r)? as usize;
    let dt = crate::field::read_f64(&mut r)?;
    let len = n_steps * k_u * k_u;
    let mut coeffs = Vec::with_capacity(len);
    for _ in 0..len {
        coeffs.push(crate::field::read_f64(&mut r)?);
    }
    StreamControl::from_coeffs(grid, n_steps, dt, k_u, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Spectral;
    use crate::noise::noise_row;

    fn grid() -> GridSpec {
        GridSpec::new(32, 24, 2.0, 1.5).unwrap()
    }

    fn random_control(seed: u64, n_steps: usize, k_u: usize) -> StreamControl {
        let g = grid();
        let coeffs = noise_row(seed, 17, 0, n_steps * k_u * k_u);
        StreamControl::from_coeffs(g, n_steps, 0.1, k_u, coeffs).unwrap()
    }

    #[test]
    fn zero_stream_zero_velocity() {
        let c = StreamControl::zeros(grid(), 3, 0.1, 4).unwrap();
        assert_eq!(stream_to_velocity(&c, 1).unwrap().max_abs(), 0.0);
        assert!(matches!(stream_to_velocity(&c, 3), Err(ChcError::IndexOutOfRange { .. })));
    }

    #[test]
    fn single_mode_curl() {
        let g = grid();
        let mut c = StreamControl::zeros(g, 1, 0.1, 3).unwrap();
        c.step_mut(0)[0] = 1.0;
        let u = stream_to_velocity(&c, 0).unwrap();
        let (lx, ly) = (g.lx, g.ly);
        let exact = VectorField::from_fn(g, |x, y| {
            (
                PI / ly * (PI * x / lx).sin() * (PI * y / ly).cos(),
                -PI / lx * (PI * x / lx).cos() * (PI * y / ly).sin(),
            )
        });
        let mut d = u.clone();
        d.axpy(-1.0, &exact);
        assert!(d.max_abs() < 1e-14);
    }

    #[test]
    fn velocity_is_divergence_free_and_tangential() {
        let g = grid();
        let sp = Spectral::new(g);
        for s in 0..100 {
            let c = random_control(s, 1, 5);
            let u = stream_to_velocity(&c, 0).unwrap();
            assert!(sp.divergence(&u).l2_norm() <= 1e-12 * u.l2_norm());
        }
        // normal component at the boundary, by direct basis evaluation
        let c = random_control(7, 1, 5);
        let a = c.step(0);
        let umax = stream_to_velocity(&c, 0).unwrap().max_abs();
        let mut worst: f64 = 0.0;
        for t in 0..50 {
            let s = t as f64 / 49.0;
            let (x, y) = (s * g.lx, s * g.ly);
            let (mut ux_left, mut uy_bottom) = (0.0, 0.0);
            for l in 1..=5 {
                for k in 1..=5 {
                    let kx = PI * k as f64 / g.lx;
                    let ky = PI * l as f64 / g.ly;
                    let coef = a[(l - 1) * 5 + (k - 1)];
                    ux_left += coef * ky * (kx * g.lx).sin() * (ky * y).cos();
                    uy_bottom += -coef * kx * (kx * x).cos() * (ky * 0.0).sin();
                }
            }
            worst = worst.max(ux_left.abs()).max(uy_bottom.abs());
        }
        assert!(worst <= 1e-10 * umax);
    }

    #[test]
    fn modes_are_orthogonal_with_diagonal_weights() {
        let g = grid();
        let basis = VelocityBasis::new(g, 4);
        let c = StreamControl::zeros(g, 1, 1.0, 4).unwrap();
        for a in 0..16 {
            let mut ea = vec![0.0; 16];
            ea[a] = 1.0;
            let pulled = basis.pullback(&basis.velocity(&ea));
            for (b, v) in pulled.iter().enumerate() {
                let expected = if a == b { c.mode_weight(a % 4 + 1, a / 4 + 1) } else { 0.0 };
                assert!((v - expected).abs() < 1e-11 * (1.0 + expected), "{a} {b} {v} {expected}");
            }
        }
    }

    #[test]
    fn pullback_is_transpose() {
        let g = grid();
        for s in 0..20 {
            let dpsi = random_control(s, 2, 4);
            let gf: Vec<VectorField> = (0..2)
                .map(|n| {
                    let r = noise_row(s, 5, n, 2 * g.n_cells());
                    let (x, y) = r.split_at(g.n_cells());
                    VectorField::from_components(
                        g,
                        Array2::from_shape_vec(g.shape(), x.to_vec()).unwrap(),
                        Array2::from_shape_vec(g.shape(), y.to_vec()).unwrap(),
                    )
                    .unwrap()
                })
                .collect();
            let pulled = pullback_gradient(&dpsi, &gf).unwrap();
            let lhs: f64 = (0..2).map(|n| stream_to_velocity(&dpsi, n).unwrap().dot(&gf[n])).sum();
            let rhs: f64 = dpsi.coeffs().iter().zip(pulled.coeffs()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
        let zero = pullback_gradient(&random_control(0, 2, 4), &[VectorField::zeros(g), VectorField::zeros(g)]).unwrap();
        assert!(zero.coeffs().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn inner_matches_velocity_quadrature() {
        let c = random_control(3, 3, 4);
        let direct: f64 = (0..3).map(|n| c.dt() * stream_to_velocity(&c, n).unwrap().dot(&stream_to_velocity(&c, n).unwrap())).sum();
        assert!((c.inner(&c) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn control_norm_basics() {
        let g = grid();
        let zero = StreamControl::zeros(g, 4, 0.25, 3).unwrap();
        assert_eq!(control_norm(&zero, 6.0), 0.0);
        let per_step = noise_row(1, 1, 1, 9);
        let c = StreamControl::constant_in_time(g, 4, 0.25, 3, &per_step).unwrap();
        let u0 = stream_to_velocity(&c, 0).unwrap().lp_norm(3.0);
        assert!((control_norm(&c, 6.0) - u0).abs() < 1e-13 * u0);
        let r = random_control(4, 5, 3);
        let n = control_norm(&r, 4.0);
        assert!((control_norm(&r.scaled(2.5), 4.0) - 2.5 * n).abs() < 1e-13 * n);
    }

    #[test]
    fn projection_behaviour() {
        let r = random_control(9, 4, 3);
        let n = control_norm(&r, 6.0);
        let feasible = AdmissibleSet::new(6.0, 2.0 * n).unwrap();
        assert_eq!(project_admissible(&r, &feasible), r);
        let tight = AdmissibleSet::new(6.0, 0.5 * n).unwrap();
        let p = project_admissible(&r, &tight);
        assert!((control_norm(&p, 6.0) - 0.5 * n).abs() <= 1e-13 * n);
        for (a, b) in p.coeffs().iter().zip(r.coeffs()) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        let pp = project_admissible(&p, &tight);
        for (a, b) in pp.coeffs().iter().zip(p.coeffs()) {
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1e-300));
        }
        assert!(AdmissibleSet::new(2.0, 1.0).is_err());
    }

    #[test]
    fn mollify_examples() {
        let g = grid();
        let r = random_control(2, 6, 2);
        assert_eq!(mollify_control(&r, 1).unwrap(), r);
        let per = [0.3, -0.2, 0.5, 1.0];
        let c = StreamControl::constant_in_time(g, 6, 0.1, 2, &per).unwrap();
        let m = mollify_control(&c, 4).unwrap();
        for (a, b) in m.coeffs().iter().zip(c.coeffs()) {
            assert!((a - b).abs() < 1e-15);
        }
        // unit step at n = 3 becomes a four-step ramp
        let mut step = StreamControl::zeros(g, 10, 0.1, 2).unwrap();
        for n in 3..10 {
            step.step_mut(n)[0] = 1.0;
        }
        let m = mollify_control(&step, 4).unwrap();
        let seq: Vec<f64> = (0..10).map(|n| m.step(n)[0]).collect();
        let expected = [0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0, 1.0];
        for (a, b) in seq.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{seq:?}");
        }
    }

    #[test]
    fn mollify_does_not_increase_norm_on_random_controls() {
        for s in 0..10 {
            let r = random_control(100 + s, 20, 3);
            for p in [2.0, 6.0] {
                for w in [2, 4, 8] {
                    let m = mollify_control(&r, w).unwrap();
                    assert!(control_norm(&m, p) <= control_norm(&r, p));
                }
            }
        }
    }

    #[test]
    fn control_file_layout() {
        let r = random_control(1, 3, 2);
        let mut bytes = Vec::new();
        write_control(&mut bytes, &r).unwrap();
        assert_eq!(&bytes[..4], b"CHU1");
        assert_eq!(bytes.len(), 20 + 8 * 12);
        assert_eq!(read_control(bytes.as_slice(), grid()).unwrap(), r);
    }
}
