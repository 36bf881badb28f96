//! Builds solver objects from a [`RunConfig`] and runs one command.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use chc_core::adjoint::{duality_sides, relative_gap, tangent_solve, adjoint_solve};
use chc_core::field::read_snapshot;
use chc_core::noise::manifest_line;
use chc_core::optimize::{gradient_check, run_projected_gradient};
use chc_core::presets::{random_control, random_field, stripes, tanh_disk};
use chc_core::velocity::read_control;
use chc_core::{
    AdmissibleSet, ChcError, CostWeights, Models, NoiseModel, OptimizerConfig, PotentialModel,
    ReducedProblem, RegularizationParam, SampleSpec, ScalarField, SolverParams, StateSolver,
    StreamControl, Targets, TerminationStatus,
};

use crate::config::{ConfigError, InitChoice, NoiseChoice, PotentialChoice, RunConfig};
use crate::output::{write_atomic, write_control_file, write_csv, write_field, Csv, Written};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Optimize,
    Gradcheck,
    Dualcheck,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] ChcError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A check ran to completion but missed its tolerance.
    #[error("{0}")]
    Tolerance(String),
    #[error("{0}")]
    LineSearchFailed(String),
}

impl CliError {
    pub fn tag(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Core(e) => e.tag(),
            CliError::Io { .. } => "Io",
            CliError::Tolerance(_) => "ToleranceExceeded",
            CliError::LineSearchFailed(_) => "LineSearchFailed",
        }
    }

    /// One `ERROR <tag>: <msg>` line per problem.
    pub fn lines(&self) -> Vec<String> {
        match self {
            CliError::Config(c) => c
                .issues
                .iter()
                .map(|i| format!("ERROR {}: {i}", self.tag()))
                .collect(),
            other => vec![format!("ERROR {}: {other}", other.tag())],
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Solver objects derived from a config.
pub struct Setup {
    pub config: RunConfig,
    pub solver: StateSolver,
    pub phi0: ScalarField,
    pub targets: Targets,
    pub weights: CostWeights,
    pub ctrl0: StreamControl,
    pub admissible: AdmissibleSet,
}

fn load_field(path: &Path, config: &RunConfig) -> Result<ScalarField, CliError> {
    let f = File::open(path).map_err(io_err(path))?;
    let field = read_snapshot(BufReader::new(f))?;
    if field.grid() != &config.grid {
        return Err(ChcError::ShapeMismatch(format!("{} is on a different grid", path.display())).into());
    }
    Ok(field)
}

impl Setup {
    pub fn new(config: &RunConfig) -> Result<Self, CliError> {
        let grid = config.grid;
        let potential = match config.potential {
            PotentialChoice::Polynomial => PotentialModel::polynomial(),
            PotentialChoice::Logarithmic => PotentialModel::logarithmic(config.theta, config.theta0)?,
        };
        let noise = match config.noise {
            NoiseChoice::Off => NoiseModel::off(),
            NoiseChoice::Additive => NoiseModel::additive_cosine_modes(grid, config.j_modes, config.amp0)?,
            NoiseChoice::Multiplicative => {
                NoiseModel::conservative_multiplicative(vec![config.amp0; config.j_modes])?
            }
        };
        let mut params = SolverParams::new(config.n_steps, config.dt(), config.stabilization)?
            .with_dealias(config.dealias);
        if config.use_regularized {
            params = params.with_lambda(RegularizationParam::new(config.lambda)?);
        }
        let solver = StateSolver::new(grid, params, &Models { potential, noise })?;

        let phi0 = match &config.init {
            InitChoice::Stripes => stripes(grid, config.init_mean, config.init_amplitude),
            InitChoice::Random => random_field(grid, config.init_mean, config.init_amplitude, config.init_seed),
            InitChoice::TanhDisk => tanh_disk(grid, config.init_mean, config.init_amplitude),
            InitChoice::File(p) => load_field(p, config)?,
        };
        let uniform = ScalarField::constant(grid, phi0.mean());
        let tracking = match &config.phi_q_file {
            Some(p) => load_field(p, config)?,
            None => uniform.clone(),
        };
        let terminal = match &config.phi_t_file {
            Some(p) => load_field(p, config)?,
            None => uniform,
        };
        let targets = Targets::stationary(tracking, terminal, config.n_steps)?;
        let weights = CostWeights::new(config.alpha1, config.alpha2, config.alpha3)?;

        let ctrl0 = match &config.control_file {
            Some(p) => {
                let f = File::open(p).map_err(io_err(p))?;
                let c = read_control(BufReader::new(f), grid)?;
                let template = StreamControl::zeros(grid, config.n_steps, config.dt(), config.k_u)?;
                if !c.same_shape(&template) || (c.dt() - config.dt()).abs() > 1e-12 * config.dt() {
                    return Err(ChcError::ShapeMismatch(format!(
                        "{} does not match time.n_steps, time.T and control.K_u",
                        p.display()
                    ))
                    .into());
                }
                c
            }
            None => {
                let mut per_step = vec![0.0; config.k_u * config.k_u];
                per_step[0] = config.vortex;
                StreamControl::constant_in_time(grid, config.n_steps, config.dt(), config.k_u, &per_step)?
            }
        };
        let admissible = AdmissibleSet::new(config.p_exponent, config.bound)?;
        Ok(Self {
            config: config.clone(),
            solver,
            phi0,
            targets,
            weights,
            ctrl0,
            admissible,
        })
    }

    pub fn problem(&self) -> Result<ReducedProblem, CliError> {
        let sample = SampleSpec::new(self.config.seed, self.config.n_paths)?;
        Ok(ReducedProblem::new(
            self.solver.clone(),
            self.phi0.clone(),
            self.targets.clone(),
            self.weights,
            sample,
        )?
        .with_memory_cap(self.config.memory_cap))
    }

    fn modes(&self) -> usize {
        self.solver.noise().j_modes()
    }
}

/// Outcome of a successful command.
#[derive(Debug)]
pub struct RunSummary {
    pub message: String,
    pub files: Vec<PathBuf>,
}

pub fn run_command(cmd: Command, config: &RunConfig) -> Result<RunSummary, CliError> {
    let setup = Setup::new(config)?;
    let out = config.out_dir.clone();
    let mut written = Written::default();
    let p = written.push(out.join("effective_config.txt")).to_path_buf();
    write_atomic(&p, config.effective_text().as_bytes()).map_err(io_err(&p))?;
    let manifest = format!(
        "{}\n",
        manifest_line(config.seed, config.n_paths, setup.modes(), config.dt())
    );
    let p = written.push(out.join("noise_manifest.txt")).to_path_buf();
    write_atomic(&p, manifest.as_bytes()).map_err(io_err(&p))?;

    let outcome = match cmd {
        Command::Simulate => simulate(&setup, &out, &mut written),
        Command::Optimize => optimize(&setup, &out, &mut written),
        Command::Gradcheck => gradcheck(&setup, &out, &mut written),
        Command::Dualcheck => dualcheck(&setup, &out, &mut written),
    };
    outcome.map(|message| RunSummary {
        message,
        files: written.0,
    })
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn simulate(setup: &Setup, out: &Path, written: &mut Written) -> Result<String, CliError> {
    let problem = setup.problem()?;
    let trajectories = problem
        .paths()
        .par_iter()
        .map(|noise| setup.solver.solve(&setup.phi0, &setup.ctrl0, noise))
        .collect::<Result<Vec<_>, _>>()?;
    let dt = setup.config.dt();
    let n_steps = setup.config.n_steps;
    let mut drift: f64 = 0.0;
    for (path, traj) in trajectories.iter().enumerate() {
        drift = drift.max(traj.max_mass_drift());
        let mut csv = Csv::new(&["time", "mass", "energy", "v1_norm"]);
        for (n, phi) in traj.phi.iter().enumerate() {
            csv.row(&[
                fmt(n as f64 * dt),
                fmt(traj.mass[n]),
                fmt(traj.energy[n]),
                fmt(setup.solver.h1_norm(phi)),
            ]);
            if n % setup.config.stride == 0 || n == n_steps {
                let p = written.push(out.join(format!("snapshots/path{path}_step{n:06}.chf")));
                write_field(p, phi)?;
            }
        }
        let p = written.push(out.join(format!("series_path{path}.csv"))).to_path_buf();
        write_csv(&p, &csv).map_err(io_err(&p))?;
    }
    Ok(format!(
        "simulate: {} path(s), {} steps, max mass drift {:e}",
        trajectories.len(),
        n_steps,
        drift
    ))
}

fn optimize(setup: &Setup, out: &Path, written: &mut Written) -> Result<String, CliError> {
    let c = &setup.config;
    if !c.optimizer_enabled {
        return Err(ConfigError {
            issues: vec![crate::config::ConfigIssue {
                key: "optimizer.enabled".into(),
                tag: "optimize requires optimizer.enabled = true".into(),
            }],
        }
        .into());
    }
    let problem = setup.problem()?;
    let mut opt = OptimizerConfig::new(setup.admissible);
    opt.max_iters = c.max_iters;
    opt.step0 = c.step0;
    opt.armijo_c = c.armijo_c;
    opt.armijo_shrink = c.armijo_shrink;
    opt.tol_vi = c.tol_vi;
    let report = run_projected_gradient(&problem, &setup.ctrl0, &opt)?;

    let mut csv = Csv::new(&["iter", "J", "vi_residual", "step", "norm_u"]);
    for it in &report.iterates {
        csv.row(&[
            it.iter.to_string(),
            fmt(it.cost),
            fmt(it.vi_residual),
            fmt(it.step),
            fmt(it.control_norm),
        ]);
    }
    let p = written.push(out.join("report.csv")).to_path_buf();
    write_csv(&p, &csv).map_err(io_err(&p))?;
    let p = written.push(out.join("control_final.chu"));
    write_control_file(p, &report.control)?;

    let first = report.iterates.first().expect("initial iterate");
    let last = report.iterates.last().expect("initial iterate");
    let message = format!(
        "optimize: {:?} after {} iterations, J {:e} -> {:e}, VI residual {:e} -> {:e}",
        report.status,
        report.iterates.len() - 1,
        first.cost,
        last.cost,
        first.vi_residual,
        last.vi_residual
    );
    if report.status == TerminationStatus::LineSearchFailed {
        return Err(CliError::LineSearchFailed(message));
    }
    Ok(message)
}

fn gradcheck(setup: &Setup, out: &Path, written: &mut Written) -> Result<String, CliError> {
    let problem = setup.problem()?;
    let direction = random_control(&setup.ctrl0, 1.0, setup.config.seed.wrapping_add(1));
    let rows = gradient_check(&problem, &setup.ctrl0, &direction, &[1e-3, 1e-4, 1e-5])?;
    let mut csv = Csv::new(&["delta_or_trial", "lhs", "rhs", "rel_error"]);
    for r in &rows {
        csv.row(&[fmt(r.delta), fmt(r.finite_difference), fmt(r.adjoint), fmt(r.rel_error)]);
    }
    let p = written.push(out.join("gradcheck.csv")).to_path_buf();
    write_csv(&p, &csv).map_err(io_err(&p))?;
    let best = rows.iter().map(|r| r.rel_error).fold(f64::INFINITY, f64::min);
    let message = format!(
        "gradcheck: min relative error {best:e} (tolerance {:e})",
        setup.config.grad_tol
    );
    if best <= setup.config.grad_tol {
        Ok(message)
    } else {
        Err(CliError::Tolerance(message))
    }
}

fn dualcheck(setup: &Setup, out: &Path, written: &mut Written) -> Result<String, CliError> {
    let problem = setup.problem()?;
    let solver = &setup.solver;
    let states = problem
        .paths()
        .par_iter()
        .map(|noise| solver.solve_states(&setup.phi0, &setup.ctrl0, noise))
        .collect::<Result<Vec<_>, _>>()?;
    let base = setup.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let gaps = (0..setup.config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = base.wrapping_add(trial as u64);
            let path = trial % states.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alphas: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..1.0));
            let weights = CostWeights::new(alphas[0], alphas[1], alphas[2])?;
            let h = random_control(&setup.ctrl0, 1.0, seed);
            let g: Vec<ScalarField> = (0..setup.config.n_steps)
                .map(|n| random_field(*solver.grid(), 0.0, 1.0, seed.wrapping_add(1 + n as u64)))
                .collect();
            let noise = &problem.paths()[path];
            let st = &states[path];
            let tangent = tangent_solve(solver, st, &setup.ctrl0, &h, Some(&g), noise)?;
            let adjoint = adjoint_solve(solver, st, &setup.ctrl0, &setup.targets, &weights, noise)?;
            let (lhs, rhs) = duality_sides(solver, st, &tangent, &adjoint, &h, Some(&g), &setup.targets, &weights);
            Ok((lhs, rhs, relative_gap(lhs, rhs)))
        })
        .collect::<Result<Vec<_>, ChcError>>()?;
    let mut csv = Csv::new(&["delta_or_trial", "lhs", "rhs", "rel_error"]);
    for (trial, (lhs, rhs, gap)) in gaps.iter().enumerate() {
        csv.row(&[trial.to_string(), fmt(*lhs), fmt(*rhs), fmt(*gap)]);
    }
    let p = written.push(out.join("dualcheck.csv")).to_path_buf();
    write_csv(&p, &csv).map_err(io_err(&p))?;
    let worst = gaps.iter().map(|g| g.2).fold(0.0, f64::max);
    let message = format!(
        "dualcheck: {} trials, max gap {worst:e} (tolerance {:e})",
        gaps.len(),
        setup.config.dual_tol
    );
    if worst <= setup.config.dual_tol {
        Ok(message)
    } else {
        Err(CliError::Tolerance(message))
    }
}
