//! Discrete tangent and adjoint of the state recursion.
//!
//! Writing one forward step as `φⁿ⁺¹ = M R(φⁿ, uⁿ)`, the tangent is
//! `θⁿ⁺¹ = M[Aₙθⁿ − dt C(hⁿ, φⁿ) − dt Δgⁿ]` with
//! `Aₙθ = θ + dt Δ(aₙθ) − dt C(uⁿ, θ) + DB(φⁿ)θ ΔWⁿ` and `aₙ = Ψ″(φⁿ) − s`.
//! The adjoint runs the transposed recursion backwards,
//! `Pⁿ = M pⁿ⁺¹`, `pⁿ = Aₙᵀ Pⁿ + dt α₁(φⁿ − φ_Qⁿ)`, from `pᴺ = α₂(φᴺ − φ_T)`,
//! so that the duality identity holds to rounding error.

use crate::error::{ChcError, Result};
use crate::field::{ScalarField, VectorField};
use crate::forward::{StateSolver, StateTrajectory};
use crate::noise::NoiseRealization;
use crate::velocity::{StreamControl, VelocityBasis};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl CostWeights {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        for (name, a) in [("alpha1", alpha1), ("alpha2", alpha2), ("alpha3", alpha3)] {
            if !(a.is_finite() && a >= 0.0) {
                return Err(ChcError::param(name, format!("{a} must be nonnegative")));
            }
        }
        if alpha1 + alpha2 + alpha3 <= 0.0 {
            return Err(ChcError::param("alpha", "alpha1 + alpha2 + alpha3 must be positive"));
        }
        Ok(Self {
            alpha1,
            alpha2,
            alpha3,
        })
    }
}

/// Deterministic tracking targets: `φ_Qⁿ` for `n < N` and the terminal `φ_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub tracking: Vec<ScalarField>,
    pub terminal: ScalarField,
}

impl Targets {
    pub fn new(tracking: Vec<ScalarField>, terminal: ScalarField) -> Result<Self> {
        if tracking.iter().any(|f| f.grid() != terminal.grid()) {
            return Err(ChcError::ShapeMismatch("target grids differ".into()));
        }
        Ok(Self { tracking, terminal })
    }

    /// Same field at every step.
    pub fn stationary(tracking: ScalarField, terminal: ScalarField, n_steps: usize) -> Result<Self> {
        Self::new(vec![tracking; n_steps], terminal)
    }

    fn check(&self, solver: &StateSolver) -> Result<()> {
        let n = solver.params().n_steps;
        if self.tracking.len() != n {
            return Err(ChcError::ShapeMismatch(format!(
                "{} tracking targets for {n} steps",
                self.tracking.len()
            )));
        }
        if self.terminal.grid() != solver.grid() {
            return Err(ChcError::ShapeMismatch("target grid vs solver grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentTrajectory {
    pub theta: Vec<ScalarField>,
    pub nu: Vec<ScalarField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    /// `n_steps + 1` backward iterates, `p[N] = α₂(φᴺ − φ_T)`.
    pub p: Vec<ScalarField>,
    /// `Pⁿ = M pⁿ⁺¹`, the field paired with the step-`n` sources.
    pub p_step: Vec<ScalarField>,
    /// `−ΔPⁿ`
    pub p_tilde: Vec<ScalarField>,
}

/// `α₁/2 Σ_{n<N} dt‖φⁿ − φ_Qⁿ‖² + α₂/2 ‖φᴺ − φ_T‖²` for one path.
pub fn tracking_cost(states: &StateTrajectory, targets: &Targets, weights: &CostWeights, dt: f64) -> f64 {
    let mut j = 0.0;
    if weights.alpha1 != 0.0 {
        for (phi, q) in states.phi.iter().zip(&targets.tracking) {
            let d = phi.sub(q);
            j += 0.5 * weights.alpha1 * dt * d.dot(&d);
        }
    }
    if weights.alpha2 != 0.0 {
        let d = states.terminal().sub(&targets.terminal);
        j += 0.5 * weights.alpha2 * d.dot(&d);
    }
    j
}

fn check_states(
    solver: &StateSolver,
    states: &StateTrajectory,
    ctrl: &StreamControl,
    basis: &VelocityBasis,
    noise: &NoiseRealization,
) -> Result<()> {
    solver.check_inputs(ctrl, noise)?;
    let n = solver.params().n_steps;
    if states.phi.len() != n + 1 || states.mu.len() != n {
        return Err(ChcError::TrajectoryMismatch(format!(
            "{} states for {n} steps",
            states.phi.len()
        )));
    }
    if states.phi.iter().any(|f| f.grid() != solver.grid()) {
        return Err(ChcError::TrajectoryMismatch("state grid vs solver grid".into()));
    }
    let (first, _) = solver.step(&states.phi[0], &basis.velocity(ctrl.step(0)), noise.row(0))?;
    let scale = 1.0 + states.phi[1].max_abs();
    if first.sub(&states.phi[1]).max_abs() > 1e-12 * scale {
        return Err(ChcError::TrajectoryMismatch(
            "first step does not replay under the supplied control and noise".into(),
        ));
    }
    Ok(())
}

/// Linearized solve along direction `h` with optional forcing `g` in the
/// chemical potential equation (`ν = … − g`).
pub fn tangent_solve(
    solver: &StateSolver,
    states: &StateTrajectory,
    ctrl: &StreamControl,
    direction: &StreamControl,
    forcing: Option<&[ScalarField]>,
    noise: &NoiseRealization,
) -> Result<TangentTrajectory> {
    let basis = VelocityBasis::for_control(ctrl);
    check_states(solver, states, ctrl, &basis, noise)?;
    if !direction.same_shape(ctrl) {
        return Err(ChcError::ShapeMismatch("direction vs control".into()));
    }
    let n_steps = solver.params().n_steps;
    if let Some(g) = forcing {
        if g.len() != n_steps {
            return Err(ChcError::ShapeMismatch(format!("{} forcing fields for {n_steps} steps", g.len())));
        }
    }
    let (dt, s) = (solver.params().dt, solver.params().stabilization);
    let sp = solver.spectral();
    let grid = *solver.grid();
    let mut theta = vec![ScalarField::zeros(grid)];
    let mut nu = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let phi = &states.phi[n];
        let th = &theta[n];
        let u = basis.velocity(ctrl.step(n));
        let h = basis.velocity(direction.step(n));
        let psi2 = solver.potential_second(phi).map_err(|e| e.at_step(n))?;

        let mut inner = psi2.mul(th);
        inner.axpy(-s, th);
        if let Some(g) = forcing {
            inner.axpy(-1.0, &g[n]);
        }
        let mut rhs = th.clone();
        rhs.axpy(dt, &sp.laplacian(&inner));
        rhs.axpy(-dt, &solver.convection(&u, th));
        rhs.axpy(-dt, &solver.convection(&h, phi));
        rhs.axpy(1.0, &solver.noise().apply_db(phi, th, noise.row(n), dt)?);
        let next = solver.implicit_solve(&rhs);

        let mut nu_n = sp.laplacian(&next).scaled(-1.0);
        nu_n.axpy(1.0, &psi2.mul(th));
        nu_n.axpy(s, &next);
        nu_n.axpy(-s, th);
        if let Some(g) = forcing {
            nu_n.axpy(-1.0, &g[n]);
        }
        theta.push(next);
        nu.push(nu_n);
    }
    Ok(TangentTrajectory { theta, nu })
}

/// One transposed step: given `pⁿ⁺¹` returns `(pⁿ, Pⁿ)`.
fn adjoint_step(
    solver: &StateSolver,
    phi: &ScalarField,
    u: &VectorField,
    xi_row: &[f64],
    p_next: &ScalarField,
    tracking: Option<(&ScalarField, f64)>,
) -> Result<(ScalarField, ScalarField)> {
    let (dt, s) = (solver.params().dt, solver.params().stabilization);
    let sp = solver.spectral();
    let big_p = solver.implicit_solve(p_next);
    let mut a = solver.potential_second(phi)?;
    a.values_mut().mapv_inplace(|v| v - s);

    let mut p = big_p.clone();
    p.axpy(dt, &a.mul(&sp.laplacian(&big_p)));
    p.axpy(-dt, &solver.convection_transpose(u, &big_p));
    p.axpy(1.0, &solver.noise().apply_db_adjoint(phi, &big_p, xi_row, dt)?);
    if let Some((q, alpha1)) = tracking {
        p.axpy(dt * alpha1, &phi.sub(q));
    }
    Ok((p, big_p))
}

fn terminal_adjoint(phi_t: &ScalarField, targets: &Targets, weights: &CostWeights) -> ScalarField {
    phi_t.sub(&targets.terminal).scaled(weights.alpha2)
}

pub fn adjoint_solve(
    solver: &StateSolver,
    states: &StateTrajectory,
    ctrl: &StreamControl,
    targets: &Targets,
    weights: &CostWeights,
    noise: &NoiseRealization,
) -> Result<AdjointTrajectory> {
    let basis = VelocityBasis::for_control(ctrl);
    check_states(solver, states, ctrl, &basis, noise)?;
    targets.check(solver)?;
    let n_steps = solver.params().n_steps;
    let sp = solver.spectral();
    let mut p = vec![ScalarField::zeros(*solver.grid()); n_steps + 1];
    let mut p_step = p[..n_steps].to_vec();
    let mut p_tilde = p_step.clone();
    p[n_steps] = terminal_adjoint(states.terminal(), targets, weights);
    for n in (0..n_steps).rev() {
        let u = basis.velocity(ctrl.step(n));
        let tracking = (weights.alpha1 != 0.0).then(|| (&targets.tracking[n], weights.alpha1));
        let (pn, big_p) = adjoint_step(solver, &states.phi[n], &u, noise.row(n), &p[n + 1], tracking)
            .map_err(|e| e.at_step(n))?;
        p_tilde[n] = sp.laplacian(&big_p).scaled(-1.0);
        p[n] = pn;
        p_step[n] = big_p;
    }
    Ok(AdjointTrajectory { p, p_step, p_tilde })
}

/// Both sides of the duality identity on one path:
/// `Σ_{n<N} dt α₁⟨θⁿ, φⁿ − φ_Qⁿ⟩ + α₂⟨θᴺ, φᴺ − φ_T⟩` and
/// `Σ_n dt (⟨Fφⁿ hⁿ, ∇Pⁿ⟩ + ⟨P̃ⁿ, gⁿ⟩)`.
#[allow(clippy::too_many_arguments)]
pub fn duality_sides(
    solver: &StateSolver,
    states: &StateTrajectory,
    tangent: &TangentTrajectory,
    adjoint: &AdjointTrajectory,
    direction: &StreamControl,
    forcing: Option<&[ScalarField]>,
    targets: &Targets,
    weights: &CostWeights,
) -> (f64, f64) {
    let dt = solver.params().dt;
    let n_steps = solver.params().n_steps;
    let basis = VelocityBasis::for_control(direction);
    let mut lhs = 0.0;
    if weights.alpha1 != 0.0 {
        for n in 0..n_steps {
            lhs += dt * weights.alpha1 * tangent.theta[n].dot(&states.phi[n].sub(&targets.tracking[n]));
        }
    }
    lhs += weights.alpha2 * tangent.theta[n_steps].dot(&states.terminal().sub(&targets.terminal));
    let mut rhs = 0.0;
    for n in 0..n_steps {
        let h = basis.velocity(direction.step(n));
        rhs += dt * h.dot(&solver.convection_control_pullback(&states.phi[n], &adjoint.p_step[n]));
        if let Some(g) = forcing {
            rhs += dt * adjoint.p_tilde[n].dot(&g[n]);
        }
    }
    (lhs, rhs)
}

/// `|LHS − RHS| / (1 + |LHS| + |RHS|)` after a fresh tangent and adjoint solve.
#[allow(clippy::too_many_arguments)]
pub fn duality_gap(
    solver: &StateSolver,
    states: &StateTrajectory,
    ctrl: &StreamControl,
    direction: &StreamControl,
    forcing: Option<&[ScalarField]>,
    targets: &Targets,
    weights: &CostWeights,
    noise: &NoiseRealization,
) -> Result<f64> {
    let tangent = tangent_solve(solver, states, ctrl, direction, forcing, noise)?;
    let adjoint = adjoint_solve(solver, states, ctrl, targets, weights, noise)?;
    let (lhs, rhs) = duality_sides(solver, states, &tangent, &adjoint, direction, forcing, targets, weights);
    Ok(relative_gap(lhs, rhs))
}

pub fn relative_gap(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / (1.0 + lhs.abs() + rhs.abs())
}

/// SAA average of `Fφⁿ ∇Pⁿ` plus `α₃ uⁿ`, per step.
pub fn assemble_gradient(
    solver: &StateSolver,
    states_per_path: &[StateTrajectory],
    adjoints_per_path: &[AdjointTrajectory],
    ctrl: &StreamControl,
    weights: &CostWeights,
) -> Result<Vec<VectorField>> {
    if states_per_path.is_empty() {
        return Err(ChcError::EmptyPathSet);
    }
    if states_per_path.len() != adjoints_per_path.len() {
        return Err(ChcError::ShapeMismatch(format!(
            "{} state paths, {} adjoint paths",
            states_per_path.len(),
            adjoints_per_path.len()
        )));
    }
    let n_steps = ctrl.n_steps();
    let inv = 1.0 / states_per_path.len() as f64;
    let basis = VelocityBasis::for_control(ctrl);
    let mut out = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let mut g = basis.velocity(ctrl.step(n)).scaled(weights.alpha3);
        for (st, adj) in states_per_path.iter().zip(adjoints_per_path) {
            if st.phi.len() != n_steps + 1 || adj.p_step.len() != n_steps {
                return Err(ChcError::TrajectoryMismatch("path length vs control".into()));
            }
            g.axpy(inv, &solver.convection_control_pullback(&st.phi[n], &adj.p_step[n]));
        }
        out.push(g);
    }
    Ok(out)
}

/// Per-path outcome of a cost and gradient evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGradient {
    /// Tracking part of the cost on this path.
    pub cost: f64,
    /// `Vᵀ(Fφⁿ ∇Pⁿ)` per step, laid out like the control coefficients.
    pub pulled: Vec<f64>,
}

/// Tracking cost and state part of the gradient on one path, storing at most
/// `memory_cap` states. Beyond the cap the forward pass keeps uniformly
/// spaced checkpoints and the backward pass recomputes each segment.
#[allow(clippy::too_many_arguments)]
pub fn path_gradient(
    solver: &StateSolver,
    phi0: &ScalarField,
    ctrl: &StreamControl,
    basis: &VelocityBasis,
    noise: &NoiseRealization,
    targets: &Targets,
    weights: &CostWeights,
    memory_cap: usize,
) -> Result<PathGradient> {
    solver.check_inputs(ctrl, noise)?;
    targets.check(solver)?;
    let n_steps = solver.params().n_steps;
    let dt = solver.params().dt;
    let stride = checkpoint_stride(n_steps, memory_cap);

    let mut cost = 0.0;
    let mut checkpoints = Vec::with_capacity(n_steps / stride + 1);
    let mut phi = phi0.clone();
    for n in 0..n_steps {
        if weights.alpha1 != 0.0 {
            let d = phi.sub(&targets.tracking[n]);
            cost += 0.5 * weights.alpha1 * dt * d.dot(&d);
        }
        let (next, _) = solver
            .step(&phi, &basis.velocity(ctrl.step(n)), noise.row(n))
            .map_err(|e| e.at_step(n))?;
        if n % stride == 0 {
            checkpoints.push(std::mem::replace(&mut phi, next));
        } else {
            phi = next;
        }
    }
    let terminal = terminal_adjoint(&phi, targets, weights);
    if weights.alpha2 != 0.0 {
        let d = phi.sub(&targets.terminal);
        cost += 0.5 * weights.alpha2 * d.dot(&d);
    }

    let m = ctrl.modes_per_step();
    let mut pulled = vec![0.0; n_steps * m];
    let mut p = terminal;
    for (c, start) in checkpoints.iter().zip((0..n_steps).step_by(stride)).rev() {
        let len = stride.min(n_steps - start);
        let segment = solver.replay(c, start, len - 1, basis, ctrl, noise)?;
        for (offset, phi_n) in segment.iter().enumerate().rev() {
            let n = start + offset;
            let u = basis.velocity(ctrl.step(n));
            let tracking = (weights.alpha1 != 0.0).then(|| (&targets.tracking[n], weights.alpha1));
            let (pn, big_p) =
                adjoint_step(solver, phi_n, &u, noise.row(n), &p, tracking).map_err(|e| e.at_step(n))?;
            let g = solver.convection_control_pullback(phi_n, &big_p);
            pulled[n * m..(n + 1) * m].copy_from_slice(&basis.pullback(&g));
            p = pn;
        }
    }
    Ok(PathGradient { cost, pulled })
}

/// 1 when all `n_steps + 1` states fit in `memory_cap`, else `⌈√n_steps⌉`.
pub fn checkpoint_stride(n_steps: usize, memory_cap: usize) -> usize {
    if n_steps < memory_cap {
        1
    } else {
        (n_steps as f64).sqrt().ceil() as usize
    }
}
