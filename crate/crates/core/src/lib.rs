pub mod adjoint;
pub mod error;
pub mod field;
pub mod forward;
pub mod noise;
pub mod optimize;
pub mod potential;
pub mod presets;
pub mod velocity;

pub use adjoint::{AdjointTrajectory, CostWeights, TangentTrajectory, Targets};
pub use error::{ChcError, Result};
pub use forward::{Models, SolverParams, StateSolver, StateTrajectory};
pub use field::{GridSpec, NormKind, ScalarField, Spectral, VectorField};
pub use noise::{NoiseKind, NoiseModel, NoiseRealization};
pub use optimize::{OptimizationReport, OptimizerConfig, ReducedProblem, SampleSpec, TerminationStatus};
pub use potential::{EffectivePotential, PotentialKind, PotentialModel, RegularizationParam};
pub use velocity::{AdmissibleSet, StreamControl, VelocityBasis};
