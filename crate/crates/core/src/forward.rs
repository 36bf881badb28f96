//! Stabilized semi-implicit Euler–Maruyama stepping of the state system.
//!
//! One step solves
//! `(I + dt Δ² − s dt Δ) φⁿ⁺¹ = φⁿ + dt Δ(Ψ′(φⁿ) − s φⁿ) − dt C(uⁿ, φⁿ) + B(φⁿ)ΔWⁿ`
//! diagonally in the cosine basis. The convection term is taken in flux form,
//! `C(u, φ) = div(u Fφ)` with `F` the optional 2/3 filter, so its spatial mean
//! vanishes identically and its transposes are exact.

use ndarray::Array2;

use crate::error::{ChcError, Result};
use crate::field::{GridSpec, NormKind, ScalarField, Spectral, VectorField};
use crate::noise::{NoiseModel, NoiseRealization};
use crate::potential::{EffectivePotential, PotentialModel, RegularizationParam};
use crate::velocity::{StreamControl, VelocityBasis};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub n_steps: usize,
    pub dt: f64,
    pub stabilization: f64,
    /// `Some(λ)` selects the regularized potential `Ψ_λ`.
    pub lambda: Option<RegularizationParam>,
    pub dealias: bool,
}

impl SolverParams {
    pub fn new(n_steps: usize, dt: f64, stabilization: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(ChcError::param("n_steps", "must be at least 1"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ChcError::param("dt", format!("{dt} must be positive")));
        }
        if !(stabilization.is_finite() && stabilization >= 0.0) {
            return Err(ChcError::param("stabilization", format!("{stabilization} must be nonnegative")));
        }
        Ok(Self {
            n_steps,
            dt,
            stabilization,
            lambda: None,
            dealias: false,
        })
    }

    pub fn with_lambda(mut self, lambda: RegularizationParam) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub potential: PotentialModel,
    pub noise: NoiseModel,
}

/// Stored `(φⁿ, μⁿ)` sequence of one path plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    /// `n_steps + 1` states, `phi[0]` is the initial datum.
    pub phi: Vec<ScalarField>,
    /// `n_steps` chemical potentials.
    pub mu: Vec<ScalarField>,
    pub mass: Vec<f64>,
    /// Free energy per state; empty when diagnostics were skipped.
    pub energy: Vec<f64>,
}

impl StateTrajectory {
    pub fn n_steps(&self) -> usize {
        self.mu.len()
    }

    pub fn terminal(&self) -> &ScalarField {
        self.phi.last().expect("at least the initial state")
    }

    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        self.mass.iter().fold(0.0, |d, m| d.max((m - m0).abs()))
    }
}

/// Per-grid stepping context: spectral plans, the implicit symbol, the
/// effective potential and the noise model. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct StateSolver {
    params: SolverParams,
    spectral: Spectral,
    implicit: Array2<f64>,
    filter: Option<Array2<f64>>,
    potential: EffectivePotential,
    noise: NoiseModel,
}

impl StateSolver {
    pub fn new(grid: GridSpec, params: SolverParams, models: &Models) -> Result<Self> {
        let potential = EffectivePotential::new(models.potential, params.lambda)?;
        let spectral = Spectral::new(grid);
        let (dt, s) = (params.dt, params.stabilization);
        let implicit = spectral
            .eigenvalues()
            .mapv(|k2| 1.0 / (1.0 + dt * k2 * k2 + s * dt * k2));
        let filter = params.dealias.then(|| spectral.dealias_mask());
        Ok(Self {
            params,
            spectral,
            implicit,
            filter,
            potential,
            noise: models.noise.clone(),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.spectral.grid()
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn potential(&self) -> &EffectivePotential {
        &self.potential
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// `Fφ`: identity, or the 2/3 truncation when dealiasing is on.
    pub fn filtered(&self, f: &ScalarField) -> ScalarField {
        match &self.filter {
            Some(mask) => self.spectral.apply_symbol(f, mask),
            None => f.clone(),
        }
    }

    /// `C(u, φ) = div(u Fφ)`; zero mean by construction.
    pub fn convection(&self, u: &VectorField, phi: &ScalarField) -> ScalarField {
        let flux = u.scale_by(&self.filtered(phi));
        self.spectral.divergence(&flux)
    }

    /// L2 transpose of `φ ↦ C(u, φ)`: `w ↦ −F(u·∇w)`.
    pub fn convection_transpose(&self, u: &VectorField, w: &ScalarField) -> ScalarField {
        let adv = u.pointwise_dot(&self.spectral.gradient(w));
        self.filtered(&adv).scaled(-1.0)
    }

    /// L2 transpose of `h ↦ C(h, φ)`, up to sign: `⟨C(h, φ), w⟩ = −⟨h, Fφ ∇w⟩`.
    pub fn convection_control_pullback(&self, phi: &ScalarField, w: &ScalarField) -> VectorField {
        self.spectral.gradient(w).scale_by(&self.filtered(phi))
    }

    /// `(I + dt Δ² − s dt Δ)⁻¹`, symmetric in L2.
    pub fn implicit_solve(&self, rhs: &ScalarField) -> ScalarField {
        self.spectral.apply_symbol(rhs, &self.implicit)
    }

    pub(crate) fn potential_prime(&self, phi: &ScalarField) -> Result<ScalarField> {
        phi.try_map(|r| self.potential.prime(r))
    }

    pub(crate) fn potential_second(&self, phi: &ScalarField) -> Result<ScalarField> {
        phi.try_map(|r| self.potential.second(r))
    }

    /// One time step; returns `(φⁿ⁺¹, μⁿ)`.
    pub fn step(
        &self,
        phi: &ScalarField,
        u: &VectorField,
        xi_row: &[f64],
    ) -> Result<(ScalarField, ScalarField)> {
        if phi.grid() != self.grid() || u.grid() != self.grid() {
            return Err(ChcError::ShapeMismatch("state or velocity grid vs solver grid".into()));
        }
        let (dt, s) = (self.params.dt, self.params.stabilization);
        let psi_prime = self.potential_prime(phi)?;

        let mut explicit = psi_prime.clone();
        explicit.axpy(-s, phi);
        let mut rhs = phi.clone();
        rhs.axpy(dt, &self.spectral.laplacian(&explicit));
        rhs.axpy(-dt, &self.convection(u, phi));
        rhs.axpy(1.0, &self.noise.apply_b(phi, xi_row, dt)?);

        let next = self.implicit_solve(&rhs);
        if !next.is_finite() {
            return Err(ChcError::NonFinite);
        }
        let mut mu = self.spectral.laplacian(&next).scaled(-1.0);
        mu.axpy(1.0, &psi_prime);
        mu.axpy(s, &next);
        mu.axpy(-s, phi);
        Ok((next, mu))
    }

    pub fn free_energy(&self, phi: &ScalarField) -> f64 {
        free_energy(&self.spectral, phi, &self.potential)
    }

    pub(crate) fn check_inputs(&self, ctrl: &StreamControl, noise: &NoiseRealization) -> Result<()> {
        let n = self.params.n_steps;
        if ctrl.grid() != self.grid() {
            return Err(ChcError::ShapeMismatch("control grid vs solver grid".into()));
        }
        if ctrl.n_steps() != n || noise.n_steps != n {
            return Err(ChcError::ShapeMismatch(format!(
                "control has {} steps, noise {}, solver {}",
                ctrl.n_steps(),
                noise.n_steps,
                n
            )));
        }
        if noise.j_modes() != self.noise.j_modes() {
            return Err(ChcError::ShapeMismatch(format!(
                "noise path has {} channels, model {}",
                noise.j_modes(),
                self.noise.j_modes()
            )));
        }
        let tol = 1e-12 * self.params.dt;
        if (ctrl.dt() - self.params.dt).abs() > tol || (noise.dt - self.params.dt).abs() > tol {
            return Err(ChcError::ShapeMismatch("time step of control or noise vs solver".into()));
        }
        Ok(())
    }

    /// Full forward solve with mass and energy diagnostics.
    pub fn solve(
        &self,
        phi0: &ScalarField,
        ctrl: &StreamControl,
        noise: &NoiseRealization,
    ) -> Result<StateTrajectory> {
        self.run(phi0, ctrl, noise, true)
    }

    /// Forward solve that skips the energy series.
    pub fn solve_states(
        &self,
        phi0: &ScalarField,
        ctrl: &StreamControl,
        noise: &NoiseRealization,
    ) -> Result<StateTrajectory> {
        self.run(phi0, ctrl, noise, false)
    }

    fn run(
        &self,
        phi0: &ScalarField,
        ctrl: &StreamControl,
        noise: &NoiseRealization,
        energy: bool,
    ) -> Result<StateTrajectory> {
        self.check_inputs(ctrl, noise)?;
        if phi0.grid() != self.grid() {
            return Err(ChcError::ShapeMismatch("initial datum grid vs solver grid".into()));
        }
        if !phi0.is_finite() {
            return Err(ChcError::NonFiniteInput("initial datum"));
        }
        let n = self.params.n_steps;
        let basis = VelocityBasis::for_control(ctrl);
        let mut traj = StateTrajectory {
            phi: Vec::with_capacity(n + 1),
            mu: Vec::with_capacity(n),
            mass: Vec::with_capacity(n + 1),
            energy: Vec::new(),
        };
        traj.mass.push(phi0.mean());
        if energy {
            traj.energy.push(self.free_energy(phi0));
        }
        traj.phi.push(phi0.clone());
        for step in 0..n {
            let u = basis.velocity(ctrl.step(step));
            let (next, mu) = self
                .step(&traj.phi[step], &u, noise.row(step))
                .map_err(|e| e.at_step(step))?;
            traj.mass.push(next.mean());
            if energy {
                traj.energy.push(self.free_energy(&next));
            }
            traj.phi.push(next);
            traj.mu.push(mu);
        }
        Ok(traj)
    }

    /// Advances `phi` from step `start` through `len` steps, returning every
    /// intermediate state including the first.
    pub(crate) fn replay(
        &self,
        phi: &ScalarField,
        start: usize,
        len: usize,
        basis: &VelocityBasis,
        ctrl: &StreamControl,
        noise: &NoiseRealization,
    ) -> Result<Vec<ScalarField>> {
        let mut out = Vec::with_capacity(len + 1);
        out.push(phi.clone());
        for step in start..start + len {
            let u = basis.velocity(ctrl.step(step));
            let (next, _) = self
                .step(out.last().expect("nonempty"), &u, noise.row(step))
                .map_err(|e| e.at_step(step))?;
            out.push(next);
        }
        Ok(out)
    }

    /// `‖φ‖_{V₁}` for the diagnostics series.
    pub fn h1_norm(&self, phi: &ScalarField) -> f64 {
        self.spectral.norm(phi, NormKind::H1)
    }
}

/// Convenience wrapper that builds a [`StateSolver`] for a single solve.
pub fn forward_solve(
    phi0: &ScalarField,
    ctrl: &StreamControl,
    noise: &NoiseRealization,
    params: SolverParams,
    models: &Models,
) -> Result<StateTrajectory> {
    StateSolver::new(*phi0.grid(), params, models)?.solve(phi0, ctrl, noise)
}

/// `½∫|∇φ|² + ∫Ψ(φ)`; `+∞` when `Ψ` is undefined somewhere on `φ`.
pub fn free_energy(spectral: &Spectral, phi: &ScalarField, potential: &EffectivePotential) -> f64 {
    let g = spectral.gradient(phi);
    let mut bulk = 0.0;
    for &r in phi.values() {
        match potential.value(r) {
            Ok(v) => bulk += v,
            Err(_) => return f64::INFINITY,
        }
    }
    0.5 * g.dot(&g) + bulk * phi.grid().cell_area()
}
