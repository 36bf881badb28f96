//! Truncated cylindrical Wiener process and the noise coefficient `B`.
//!
//! Channel `j` of the conservative multiplicative family is
//! `B(φ)e_j = h_j(φ) − mean(h_j(φ))` with `h_j(s) = a_j sin(s) / (1 + j)²`.
//! The additive family uses fixed spatial profiles `B e_j = a_j g_j`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ChcError, Result};
use crate::field::{GridSpec, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Off,
    Additive,
    ConservativeMultiplicative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    amplitudes: Vec<f64>,
    profiles: Vec<ScalarField>,
    c_b: f64,
}

impl NoiseModel {
    pub fn off() -> Self {
        Self {
            kind: NoiseKind::Off,
            amplitudes: Vec::new(),
            profiles: Vec::new(),
            c_b: 0.0,
        }
    }

    pub fn additive(amplitudes: Vec<f64>, profiles: Vec<ScalarField>) -> Result<Self> {
        if amplitudes.len() != profiles.len() {
            return Err(ChcError::ShapeMismatch(format!(
                "{} amplitudes for {} profiles",
                amplitudes.len(),
                profiles.len()
            )));
        }
        check_amplitudes(&amplitudes)?;
        if let Some(first) = profiles.first() {
            if profiles.iter().any(|p| p.grid() != first.grid()) {
                return Err(ChcError::ShapeMismatch("profiles on different grids".into()));
            }
        }
        let c_b = amplitudes
            .iter()
            .zip(&profiles)
            .map(|(a, g)| (a * g.max_abs()).powi(2))
            .sum();
        Ok(Self {
            kind: NoiseKind::Additive,
            amplitudes,
            profiles,
            c_b,
        })
    }

    /// Additive noise on the lowest non-constant cosine modes, ordered by total
    /// wavenumber, with amplitude `amp0 / (1 + j)²` on channel `j`.
    pub fn additive_cosine_modes(grid: GridSpec, j_modes: usize, amp0: f64) -> Result<Self> {
        let mut modes = Vec::new();
        let mut total = 1;
        while modes.len() < j_modes {
            for a in 0..=total {
                if modes.len() < j_modes {
                    modes.push((a, total - a));
                }
            }
            total += 1;
        }
        let profiles = modes
            .iter()
            .map(|&(a, b)| {
                let (ka, kb) = (
                    std::f64::consts::PI * a as f64 / grid.lx,
                    std::f64::consts::PI * b as f64 / grid.ly,
                );
                ScalarField::from_fn(grid, |x, y| (ka * x).cos() * (kb * y).cos())
            })
            .collect();
        let amplitudes = (0..j_modes).map(|j| amp0 / ((1 + j) as f64).powi(2)).collect();
        Self::additive(amplitudes, profiles)
    }

    pub fn conservative_multiplicative(amplitudes: Vec<f64>) -> Result<Self> {
        check_amplitudes(&amplitudes)?;
        // |h_j(y) − mean| ≤ 2 |a_j| / (1+j)²
        let c_b = amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| (2.0 * a * decay(j)).powi(2))
            .sum();
        Ok(Self {
            kind: NoiseKind::ConservativeMultiplicative,
            amplitudes,
            profiles: Vec::new(),
            c_b,
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn j_modes(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Bound on `Σ_j ‖B(y)e_j‖²_∞`, finite by construction.
    pub fn c_b(&self) -> f64 {
        self.c_b
    }

    fn check_row(&self, phi: &ScalarField, xi_row: &[f64]) -> Result<()> {
        if xi_row.len() != self.j_modes() {
            return Err(ChcError::ShapeMismatch(format!(
                "noise row has {} entries, model has {} channels",
                xi_row.len(),
                self.j_modes()
            )));
        }
        if let Some(g) = self.profiles.first() {
            if g.grid() != phi.grid() {
                return Err(ChcError::ShapeMismatch("noise profiles vs field grid".into()));
            }
        }
        Ok(())
    }

    /// `B(φ)e_j` for a single channel.
    pub fn channel(&self, phi: &ScalarField, j: usize) -> Result<ScalarField> {
        if j >= self.j_modes() {
            return Err(ChcError::IndexOutOfRange {
                index: j,
                len: self.j_modes(),
            });
        }
        Ok(match self.kind {
            NoiseKind::Off => unreachable!("off model has no channels"),
            NoiseKind::Additive => self.profiles[j].scaled(self.amplitudes[j]),
            NoiseKind::ConservativeMultiplicative => {
                let c = self.amplitudes[j] * decay(j);
                phi.map(|s| c * s.sin()).mean_free()
            }
        })
    }

    /// `Σ_j B(φ)e_j ξ_j √dt`.
    pub fn apply_b(&self, phi: &ScalarField, xi_row: &[f64], dt: f64) -> Result<ScalarField> {
        self.check_row(phi, xi_row)?;
        let sq = dt.sqrt();
        Ok(match self.kind {
            NoiseKind::Off => ScalarField::zeros(*phi.grid()),
            NoiseKind::Additive => {
                let mut out = ScalarField::zeros(*phi.grid());
                for ((g, a), xi) in self.profiles.iter().zip(&self.amplitudes).zip(xi_row) {
                    out.axpy(a * xi * sq, g);
                }
                out
            }
            NoiseKind::ConservativeMultiplicative => {
                // all channels share sin(φ), so the sum collapses to one mean-free field
                let w = self.channel_weight(xi_row) * sq;
                phi.map(|s| w * s.sin()).mean_free()
            }
        })
    }

    /// Directional derivative of [`NoiseModel::apply_b`] in `φ` along `θ`.
    pub fn apply_db(
        &self,
        phi: &ScalarField,
        theta: &ScalarField,
        xi_row: &[f64],
        dt: f64,
    ) -> Result<ScalarField> {
        self.check_row(phi, xi_row)?;
        Ok(match self.kind {
            NoiseKind::Off | NoiseKind::Additive => ScalarField::zeros(*phi.grid()),
            NoiseKind::ConservativeMultiplicative => {
                let w = self.channel_weight(xi_row) * dt.sqrt();
                let mut out = phi.map(|s| w * s.cos());
                out.values_mut().zip_mut_with(theta.values(), |o, t| *o *= t);
                out.mean_free()
            }
        })
    }

    /// L2 transpose of `θ ↦ apply_db(φ, θ)`.
    pub fn apply_db_adjoint(
        &self,
        phi: &ScalarField,
        w: &ScalarField,
        xi_row: &[f64],
        dt: f64,
    ) -> Result<ScalarField> {
        self.check_row(phi, xi_row)?;
        Ok(match self.kind {
            NoiseKind::Off | NoiseKind::Additive => ScalarField::zeros(*phi.grid()),
            NoiseKind::ConservativeMultiplicative => {
                let c = self.channel_weight(xi_row) * dt.sqrt();
                let wf = w.mean_free();
                let mut out = phi.map(|s| c * s.cos());
                out.values_mut().zip_mut_with(wf.values(), |o, v| *o *= v);
                out
            }
        })
    }

    fn channel_weight(&self, xi_row: &[f64]) -> f64 {
        self.amplitudes
            .iter()
            .zip(xi_row)
            .enumerate()
            .map(|(j, (a, xi))| a * decay(j) * xi)
            .sum()
    }
}

fn decay(j: usize) -> f64 {
    1.0 / ((1 + j) as f64).powi(2)
}

fn check_amplitudes(a: &[f64]) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ChcError::NonFiniteInput("noise amplitudes"))
    }
}

/// Standard normal draws for one noise path; increments are `ξ √dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub seed: u64,
    pub path_index: u64,
    pub n_steps: usize,
    pub dt: f64,
    j_modes: usize,
    xi: Array2<f64>,
}

impl NoiseRealization {
    pub fn j_modes(&self) -> usize {
        self.j_modes
    }

    pub fn row(&self, step: usize) -> &[f64] {
        self.xi.row(step).to_slice().expect("standard layout")
    }

    pub fn draws(&self) -> &Array2<f64> {
        &self.xi
    }
}

/// Word offset reserved per time step in the ChaCha keystream.
const WORDS_PER_STEP: u128 = 1 << 32;

/// Draws the normals of one step; a pure function of `(seed, path, step)`.
pub fn noise_row(seed: u64, path_index: u64, step: usize, j_modes: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    (0..j_modes).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn sample_noise(
    seed: u64,
    path_index: u64,
    n_steps: usize,
    dt: f64,
    model: &NoiseModel,
) -> Result<NoiseRealization> {
    if n_steps == 0 {
        return Err(ChcError::param("n_steps", "must be at least 1"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ChcError::param("dt", format!("{dt} must be positive")));
    }
    let j = model.j_modes();
    let mut xi = Array2::zeros((n_steps, j));
    if j > 0 {
        for (n, mut row) in xi.rows_mut().into_iter().enumerate() {
            for (v, d) in row.iter_mut().zip(noise_row(seed, path_index, n, j)) {
                *v = d;
            }
        }
    }
    Ok(NoiseRealization {
        seed,
        path_index,
        n_steps,
        dt,
        j_modes: j,
        xi,
    })
}

/// `seed=<u64> paths=<n> modes=<j> dt=<val>`
pub fn manifest_line(seed: u64, paths: usize, modes: usize, dt: f64) -> String {
    format!("seed={seed} paths={paths} modes={modes} dt={dt}")
}
