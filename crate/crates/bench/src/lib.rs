//! Shared fixtures for the solver benchmarks.

use std::f64::consts::PI;

use chc_core::noise::sample_noise;
use chc_core::presets::stripes;
use chc_core::{
    CostWeights, GridSpec, Models, NoiseModel, NoiseRealization, PotentialModel, ReducedProblem,
    SampleSpec, ScalarField, SolverParams, StateSolver, StreamControl, Targets,
};

/// Stripes stirred by a single vortex on an `n × n` grid over `[0, 2π]²`.
pub struct Fixture {
    pub solver: StateSolver,
    pub phi0: ScalarField,
    pub ctrl: StreamControl,
    pub noise: NoiseRealization,
}

impl Fixture {
    pub fn new(n: usize, n_steps: usize, noise: NoiseModel) -> Self {
        let grid = GridSpec::new(n, n, 2.0 * PI, 2.0 * PI).expect("valid grid");
        let dt = 2e-3;
        let models = Models {
            potential: PotentialModel::polynomial(),
            noise,
        };
        let params = SolverParams::new(n_steps, dt, 1.0).expect("valid params");
        let solver = StateSolver::new(grid, params, &models).expect("valid solver");
        let mut per_step = vec![0.0; 16];
        per_step[0] = 2.0;
        let ctrl = StreamControl::constant_in_time(grid, n_steps, dt, 4, &per_step).expect("valid control");
        let noise = sample_noise(1, 0, n_steps, dt, &models.noise).expect("valid noise");
        Self {
            solver,
            phi0: stripes(grid, 0.0, 0.8),
            ctrl,
            noise,
        }
    }

    /// Terminal tracking toward the uniform state over `n_paths` frozen paths.
    pub fn problem(&self, n_paths: usize) -> ReducedProblem {
        let grid = *self.solver.grid();
        let zero = ScalarField::zeros(grid);
        let n_steps = self.solver.params().n_steps;
        let targets = Targets::stationary(zero.clone(), zero, n_steps).expect("valid targets");
        let weights = CostWeights::new(0.0, 1.0, 1e-5).expect("valid weights");
        let sample = SampleSpec::new(1, n_paths).expect("valid sample");
        ReducedProblem::new(self.solver.clone(), self.phi0.clone(), targets, weights, sample).expect("valid problem")
    }
}
