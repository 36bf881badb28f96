//! Initial data and seeded random controls.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{GridSpec, ScalarField};
use crate::velocity::StreamControl;

/// `mean + amplitude cos(4π x / lx)`: four stripes normal to `x`.
pub fn stripes(grid: GridSpec, mean: f64, amplitude: f64) -> ScalarField {
    let k = 4.0 * PI / grid.lx;
    ScalarField::from_fn(grid, |x, _| mean + amplitude * (k * x).cos())
}

/// `mean` plus mean-free uniform noise of size `amplitude`.
pub fn random_field(grid: GridSpec, mean: f64, amplitude: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = ScalarField::zeros(grid);
    f.values_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-1.0..1.0));
    let noise = f.mean_free();
    ScalarField::constant(grid, mean).add(&noise.scaled(amplitude))
}

/// A centered disk of one phase in the other, with a `tanh` interface whose
/// width is two cells.
pub fn tanh_disk(grid: GridSpec, mean: f64, amplitude: f64) -> ScalarField {
    let (cx, cy) = (0.5 * grid.lx, 0.5 * grid.ly);
    let radius = 0.25 * grid.lx.min(grid.ly);
    let width = 2.0 * grid.dx().max(grid.dy());
    ScalarField::from_fn(grid, |x, y| {
        let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
        mean + amplitude * ((radius - r) / (std::f64::consts::SQRT_2 * width)).tanh()
    })
}

/// Control shaped like `template` with coefficients uniform in `[-scale, scale]`.
pub fn random_control(template: &StreamControl, scale: f64, seed: u64) -> StreamControl {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = template.clone();
    out.coeffs_mut()
        .iter_mut()
        .for_each(|v| *v = scale * rng.random_range(-1.0..1.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_are_as_requested() {
        let g = GridSpec::new(32, 32, 2.0 * PI, 2.0 * PI).unwrap();
        assert!((stripes(g, 0.2, 0.8).mean() - 0.2).abs() < 1e-14);
        let r = random_field(g, -0.3, 0.05, 4);
        assert!((r.mean() + 0.3).abs() < 1e-14);
        assert!(r.sub(&ScalarField::constant(g, -0.3)).max_abs() <= 0.1);
        assert_eq!(random_field(g, 0.0, 1.0, 9), random_field(g, 0.0, 1.0, 9));
    }

    #[test]
    fn disk_inside_and_outside() {
        let g = GridSpec::new(64, 64, 1.0, 1.0).unwrap();
        let d = tanh_disk(g, 0.0, 1.0);
        assert!(d.values()[[32, 32]] > 0.99);
        assert!(d.values()[[0, 0]] < -0.99);
    }
}
