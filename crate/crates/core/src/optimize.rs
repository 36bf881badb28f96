//! Sample-average reduced cost, projected gradient descent and gradient checks.

use rayon::prelude::*;

use crate::adjoint::{path_gradient, tracking_cost, CostWeights, Targets};
use crate::error::{ChcError, Result};
use crate::field::ScalarField;
use crate::forward::StateSolver;
use crate::noise::{sample_noise, NoiseRealization};
use crate::velocity::{control_norm, project_admissible, AdmissibleSet, StreamControl, VelocityBasis};

/// Frozen noise paths `(base_seed, 0..n_paths)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSpec {
    pub base_seed: u64,
    pub n_paths: usize,
    /// Index of the first path, so disjoint samples share a seed.
    pub first_path: u64,
}

impl SampleSpec {
    pub fn new(base_seed: u64, n_paths: usize) -> Result<Self> {
        if n_paths == 0 {
            return Err(ChcError::param("n_paths", "must be at least 1"));
        }
        Ok(Self {
            base_seed,
            n_paths,
            first_path: 0,
        })
    }

    pub fn offset(mut self, first_path: u64) -> Self {
        self.first_path = first_path;
        self
    }
}

/// The deterministic SAA problem `u ↦ Ĵ(u)` on frozen seeds.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    solver: StateSolver,
    phi0: ScalarField,
    targets: Targets,
    weights: CostWeights,
    paths: Vec<NoiseRealization>,
    memory_cap: usize,
}

/// Cost split into the per-path tracking parts and the control part.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    pub per_path: Vec<f64>,
    pub control: f64,
}

impl CostBreakdown {
    /// Monte Carlo standard error of the tracking part.
    pub fn standard_error(&self) -> f64 {
        let n = self.per_path.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = self.per_path.iter().sum::<f64>() / n;
        let var = self.per_path.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }
}

impl ReducedProblem {
    pub fn new(
        solver: StateSolver,
        phi0: ScalarField,
        targets: Targets,
        weights: CostWeights,
        sample: SampleSpec,
    ) -> Result<Self> {
        if phi0.grid() != solver.grid() {
            return Err(ChcError::ShapeMismatch("initial datum grid vs solver grid".into()));
        }
        let p = *solver.params();
        let paths = (0..sample.n_paths as u64)
            .map(|i| sample_noise(sample.base_seed, sample.first_path + i, p.n_steps, p.dt, solver.noise()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            solver,
            phi0,
            targets,
            weights,
            paths,
            memory_cap: usize::MAX,
        })
    }

    /// Maximum number of stored states per path before checkpointing.
    pub fn with_memory_cap(mut self, cap: usize) -> Self {
        self.memory_cap = cap.max(2);
        self
    }

    pub fn solver(&self) -> &StateSolver {
        &self.solver
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn initial(&self) -> &ScalarField {
        &self.phi0
    }

    pub fn paths(&self) -> &[NoiseRealization] {
        &self.paths
    }

    fn control_cost(&self, ctrl: &StreamControl) -> f64 {
        0.5 * self.weights.alpha3 * ctrl.inner(ctrl)
    }

    pub fn cost(&self, ctrl: &StreamControl) -> Result<CostBreakdown> {
        let dt = self.solver.params().dt;
        let per_path = self
            .paths
            .par_iter()
            .map(|noise| {
                let states = self.solver.solve_states(&self.phi0, ctrl, noise)?;
                Ok(tracking_cost(&states, &self.targets, &self.weights, dt))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.combine(per_path, ctrl))
    }

    fn combine(&self, per_path: Vec<f64>, ctrl: &StreamControl) -> CostBreakdown {
        let mean = per_path.iter().sum::<f64>() / per_path.len() as f64;
        let control = self.control_cost(ctrl);
        CostBreakdown {
            total: mean + control,
            per_path,
            control,
        }
    }

    /// Cost and its gradient as a control in the `L²(Q)` metric of
    /// [`StreamControl::inner`], so `Ĵ′(u)h = gradient.inner(h)`.
    pub fn cost_and_gradient(&self, ctrl: &StreamControl) -> Result<(CostBreakdown, StreamControl)> {
        let basis = VelocityBasis::for_control(ctrl);
        let results = self
            .paths
            .par_iter()
            .map(|noise| {
                path_gradient(
                    &self.solver,
                    &self.phi0,
                    ctrl,
                    &basis,
                    noise,
                    &self.targets,
                    &self.weights,
                    self.memory_cap,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let inv = 1.0 / results.len() as f64;
        let mut pulled = ctrl.scaled(0.0);
        for r in &results {
            for (acc, v) in pulled.coeffs_mut().iter_mut().zip(&r.pulled) {
                *acc += inv * v;
            }
        }
        let mut gradient = ctrl.riesz_from_pullback(&pulled)?;
        gradient.axpy(self.weights.alpha3, ctrl)?;
        let per_path = results.into_iter().map(|r| r.cost).collect();
        Ok((self.combine(per_path, ctrl), gradient))
    }
}

/// Convenience form of [`ReducedProblem::cost`].
pub fn evaluate_cost(problem: &ReducedProblem, ctrl: &StreamControl) -> Result<f64> {
    Ok(problem.cost(ctrl)?.total)
}

/// `‖u − Proj(u − g)‖_{L²(Q)}`
pub fn vi_residual(ctrl: &StreamControl, gradient: &StreamControl, admissible: &AdmissibleSet) -> Result<f64> {
    let mut trial = ctrl.clone();
    trial.axpy(-1.0, gradient)?;
    let mut diff = ctrl.clone();
    diff.axpy(-1.0, &project_admissible(&trial, admissible))?;
    Ok(diff.l2_norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub step0: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    /// Backtracking attempts per iteration before giving up.
    pub max_backtracks: usize,
    pub tol_vi: f64,
    pub admissible: AdmissibleSet,
}

impl OptimizerConfig {
    pub fn new(admissible: AdmissibleSet) -> Self {
        Self {
            max_iters: 20,
            step0: 1.0,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            max_backtracks: 30,
            tol_vi: 1e-6,
            admissible,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step0.is_finite() && self.step0 > 0.0) {
            return Err(ChcError::param("step0", "must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(ChcError::param("armijo_c", "must lie in (0, 1)"));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(ChcError::param("armijo_shrink", "must lie in (0, 1)"));
        }
        if !(self.tol_vi.is_finite() && self.tol_vi > 0.0) {
            return Err(ChcError::param("tol_vi", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationStatus {
    VITolReached,
    MaxIters,
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub iter: usize,
    pub cost: f64,
    pub vi_residual: f64,
    /// Accepted step size; 0 for the initial iterate.
    pub step: f64,
    pub control_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub iterates: Vec<IterateRecord>,
    pub status: TerminationStatus,
    pub control: StreamControl,
}

/// Projected gradient descent with Armijo backtracking on the projection arc:
/// a step `τ` is accepted when `Ĵ(u⁺) ≤ Ĵ(u) − (c/τ)‖u⁺ − u‖²`.
pub fn run_projected_gradient(
    problem: &ReducedProblem,
    ctrl0: &StreamControl,
    config: &OptimizerConfig,
) -> Result<OptimizationReport> {
    config.validate()?;
    let set = &config.admissible;
    let mut u = project_admissible(ctrl0, set);
    let (mut cost, mut grad) = problem.cost_and_gradient(&u)?;
    let mut residual = vi_residual(&u, &grad, set)?;
    let mut iterates = vec![IterateRecord {
        iter: 0,
        cost: cost.total,
        vi_residual: residual,
        step: 0.0,
        control_norm: control_norm(&u, set.p_exponent),
    }];
    let mut tau = config.step0;
    let mut status = TerminationStatus::MaxIters;
    for iter in 1..=config.max_iters {
        if residual <= config.tol_vi {
            status = TerminationStatus::VITolReached;
            break;
        }
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let mut trial = u.clone();
            trial.axpy(-tau, &grad)?;
            let trial = project_admissible(&trial, set);
            let mut step = trial.clone();
            step.axpy(-1.0, &u)?;
            let decrease = config.armijo_c / tau * step.inner(&step);
            match problem.cost(&trial) {
                Ok(c) if c.total <= cost.total - decrease && step.inner(&step) > 0.0 => {
                    accepted = Some(trial);
                    break;
                }
                // a blown-up trial counts as a rejected step
                Ok(_) | Err(ChcError::Step { .. }) => tau *= config.armijo_shrink,
                Err(e) => return Err(e),
            }
        }
        let Some(next) = accepted else {
            status = TerminationStatus::LineSearchFailed;
            break;
        };
        u = next;
        (cost, grad) = problem.cost_and_gradient(&u)?;
        residual = vi_residual(&u, &grad, set)?;
        iterates.push(IterateRecord {
            iter,
            cost: cost.total,
            vi_residual: residual,
            step: tau,
            control_norm: control_norm(&u, set.p_exponent),
        });
        tau = (tau / config.armijo_shrink).min(config.step0);
    }
    if status == TerminationStatus::MaxIters && residual <= config.tol_vi {
        status = TerminationStatus::VITolReached;
    }
    Ok(OptimizationReport {
        iterates,
        status,
        control: u,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckRow {
    pub delta: f64,
    pub finite_difference: f64,
    pub adjoint: f64,
    pub rel_error: f64,
}

/// Centered differences of the reduced cost along `direction` versus the
/// adjoint directional derivative, one row per `delta`.
pub fn gradient_check(
    problem: &ReducedProblem,
    ctrl: &StreamControl,
    direction: &StreamControl,
    deltas: &[f64],
) -> Result<Vec<CheckRow>> {
    if !direction.same_shape(ctrl) {
        return Err(ChcError::ShapeMismatch("direction vs control".into()));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(ChcError::param("deltas", "must be positive"));
    }
    let (_, grad) = problem.cost_and_gradient(ctrl)?;
    let adjoint = grad.inner(direction);
    deltas
        .iter()
        .map(|&delta| {
            let mut plus = ctrl.clone();
            plus.axpy(delta, direction)?;
            let mut minus = ctrl.clone();
            minus.axpy(-delta, direction)?;
            let fd = (problem.cost(&plus)?.total - problem.cost(&minus)?.total) / (2.0 * delta);
            let rel_error = (fd - adjoint).abs() / adjoint.abs().max(f64::MIN_POSITIVE);
            Ok(CheckRow {
                delta,
                finite_difference: fd,
                adjoint,
                rel_error,
            })
        })
        .collect()
}
