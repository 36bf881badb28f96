//! Flat `key = value` run configuration.
//!
//! Every key has a default; parsing collects every violation before failing.
//! [`RunConfig::effective_text`] prints the full effective configuration in
//! the same format, so it parses back to an identical config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use chc_core::GridSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub tag: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        f.write_str(&lines.join("; "))
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialChoice {
    Polynomial,
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseChoice {
    Off,
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitChoice {
    Stripes,
    Random,
    TanhDisk,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub t_final: f64,
    pub n_steps: usize,

    pub potential: PotentialChoice,
    pub theta: f64,
    pub theta0: f64,
    pub lambda: f64,
    pub use_regularized: bool,

    pub noise: NoiseChoice,
    pub j_modes: usize,
    pub amp0: f64,
    pub seed: u64,
    pub n_paths: usize,

    pub k_u: usize,
    pub p_exponent: f64,
    pub bound: f64,
    /// Amplitude of the constant `(1, 1)` stream mode used when no control file is given.
    pub vortex: f64,
    pub control_file: Option<PathBuf>,

    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub phi_q_file: Option<PathBuf>,
    pub phi_t_file: Option<PathBuf>,

    pub init: InitChoice,
    pub init_mean: f64,
    pub init_amplitude: f64,
    pub init_seed: u64,

    pub optimizer_enabled: bool,
    pub max_iters: usize,
    pub step0: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub tol_vi: f64,

    pub out_dir: PathBuf,
    pub stride: usize,

    pub stabilization: f64,
    pub dealias: bool,
    pub memory_cap: usize,

    pub grad_tol: f64,
    pub dual_tol: f64,
    pub trials: usize,
}

const DEFAULTS: &[(&str, &str)] = &[
    ("grid.nx", "64"),
    ("grid.ny", "64"),
    ("grid.lx", "6.283185307179586"),
    ("grid.ly", "6.283185307179586"),
    ("time.T", "0.2"),
    ("time.n_steps", "100"),
    ("potential.kind", "polynomial"),
    ("potential.theta", "0.8"),
    ("potential.theta0", "1"),
    ("potential.lambda", "0.01"),
    ("potential.use_regularized", "false"),
    ("noise.kind", "off"),
    ("noise.j_modes", "4"),
    ("noise.amp0", "0.1"),
    ("noise.seed", "0"),
    ("noise.n_paths", "1"),
    ("control.K_u", "4"),
    ("control.p_exponent", "6"),
    ("control.L", "50"),
    ("control.vortex", "2"),
    ("control.file", ""),
    ("cost.alpha1", "0"),
    ("cost.alpha2", "1"),
    ("cost.alpha3", "0.00001"),
    ("cost.phi_Q_file", ""),
    ("cost.phi_T_file", ""),
    ("init.preset", "stripes"),
    ("init.file", ""),
    ("init.mean", "0"),
    ("init.amplitude", "0.8"),
    ("init.seed", "0"),
    ("optimizer.enabled", "true"),
    ("optimizer.max_iters", "10"),
    ("optimizer.step0", "1000"),
    ("optimizer.armijo_c", "0.0001"),
    ("optimizer.armijo_shrink", "0.5"),
    ("optimizer.tol_vi", "1e-8"),
    ("output.dir", "out"),
    ("output.stride", "10"),
    ("solver.stabilization", "auto"),
    ("solver.dealias", "false"),
    ("solver.memory_cap", "4096"),
    ("check.grad_tol", "1e-6"),
    ("check.dual_tol", "1e-10"),
    ("check.trials", "20"),
];

struct Reader<'a> {
    values: BTreeMap<&'a str, String>,
    issues: Vec<ConfigIssue>,
}

impl<'a> Reader<'a> {
    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    fn fail(&mut self, key: &str, tag: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: key.to_string(),
            tag: tag.into(),
        });
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        match self.raw(key).parse() {
            Ok(v) => Some(v),
            Err(_) => {
                let raw = self.raw(key).to_string();
                self.fail(key, format!("expected {what}, got `{raw}`"));
                None
            }
        }
    }

    fn real(&mut self, key: &str) -> f64 {
        match self.parsed::<f64>(key, "a real number") {
            Some(v) if v.is_finite() => v,
            Some(_) => {
                self.fail(key, "must be finite");
                f64::NAN
            }
            None => f64::NAN,
        }
    }

    fn count(&mut self, key: &str) -> usize {
        self.parsed(key, "a nonnegative integer").unwrap_or(0)
    }

    fn seed(&mut self, key: &str) -> u64 {
        self.parsed(key, "an unsigned 64-bit integer").unwrap_or(0)
    }

    fn flag(&mut self, key: &str) -> bool {
        self.parsed(key, "true or false").unwrap_or(false)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    fn positive(&mut self, key: &str, v: f64) {
        if v <= 0.0 {
            self.fail(key, "must be positive");
        }
    }

    fn nonnegative(&mut self, key: &str, v: f64) {
        if v < 0.0 {
            self.fail(key, "must be nonnegative");
        }
    }

    fn open_unit(&mut self, key: &str, v: f64) {
        if !(v > 0.0 && v < 1.0) && !v.is_nan() {
            self.fail(key, "must lie in (0, 1)");
        }
    }
}

/// Parses `key = value` lines with `#` comments.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut values: BTreeMap<&str, String> =
        DEFAULTS.iter().map(|(k, v)| (*k, v.to_string())).collect();
    let mut issues = Vec::new();
    let mut seen = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            issues.push(ConfigIssue {
                key: format!("line {}", lineno + 1),
                tag: "expected `key = value`".into(),
            });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        match DEFAULTS.iter().find(|(k, _)| *k == key) {
            Some((k, _)) => {
                if seen.insert(*k, lineno).is_some() {
                    issues.push(ConfigIssue {
                        key: key.to_string(),
                        tag: "duplicate key".into(),
                    });
                }
                values.insert(k, value.to_string());
            }
            None => issues.push(ConfigIssue {
                key: key.to_string(),
                tag: "unknown key".into(),
            }),
        }
    }
    let mut r = Reader { values, issues };
    let config = read(&mut r);
    if r.issues.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError { issues: r.issues })
    }
}

fn read(r: &mut Reader<'_>) -> RunConfig {
    let nx = r.count("grid.nx");
    let ny = r.count("grid.ny");
    let lx = r.real("grid.lx");
    let ly = r.real("grid.ly");
    let grid = match GridSpec::new(nx, ny, lx, ly) {
        Ok(g) => g,
        Err(e) => {
            r.fail("grid", e.to_string());
            GridSpec::new(8, 8, 1.0, 1.0).expect("fallback grid")
        }
    };

    let t_final = r.real("time.T");
    r.positive("time.T", t_final);
    let n_steps = r.count("time.n_steps");
    if n_steps == 0 {
        r.fail("time.n_steps", "must be at least 1");
    }

    let potential = match r.raw("potential.kind") {
        "polynomial" => PotentialChoice::Polynomial,
        "logarithmic" => PotentialChoice::Logarithmic,
        other => {
            let tag = format!("expected polynomial or logarithmic, got `{other}`");
            r.fail("potential.kind", tag);
            PotentialChoice::Polynomial
        }
    };
    let theta = r.real("potential.theta");
    let theta0 = r.real("potential.theta0");
    let lambda = r.real("potential.lambda");
    let use_regularized = r.flag("potential.use_regularized");
    if potential == PotentialChoice::Logarithmic {
        if !(theta > 0.0 && theta < theta0) {
            r.fail("potential.theta", "psi_log requires 0<theta<theta0");
        }
        if !use_regularized {
            r.fail("potential.use_regularized", "logarithmic potential requires the regularized scheme");
        }
    }
    if use_regularized {
        r.positive("potential.lambda", lambda);
    }

    let noise = match r.raw("noise.kind") {
        "off" => NoiseChoice::Off,
        "additive" => NoiseChoice::Additive,
        "multiplicative" => NoiseChoice::Multiplicative,
        other => {
            let tag = format!("expected off, additive or multiplicative, got `{other}`");
            r.fail("noise.kind", tag);
            NoiseChoice::Off
        }
    };
    let j_modes = r.count("noise.j_modes");
    if noise != NoiseChoice::Off && j_modes == 0 {
        r.fail("noise.j_modes", "noise requires at least one channel");
    }
    let amp0 = r.real("noise.amp0");
    r.nonnegative("noise.amp0", amp0);
    let seed = r.seed("noise.seed");
    let n_paths = r.count("noise.n_paths");
    if n_paths == 0 {
        r.fail("noise.n_paths", "must be at least 1");
    }

    let k_u = r.count("control.K_u");
    if k_u == 0 || k_u > nx.min(ny) / 2 {
        r.fail("control.K_u", "requires 1 <= K_u <= min(nx, ny)/2");
    }
    let p_exponent = r.real("control.p_exponent");
    if p_exponent <= 2.0 {
        r.fail("control.p_exponent", "admissible set requires p > 2");
    }
    let bound = r.real("control.L");
    r.positive("control.L", bound);
    let vortex = r.real("control.vortex");
    let control_file = r.path("control.file");

    let alpha1 = r.real("cost.alpha1");
    let alpha2 = r.real("cost.alpha2");
    let alpha3 = r.real("cost.alpha3");
    r.nonnegative("cost.alpha1", alpha1);
    r.nonnegative("cost.alpha2", alpha2);
    r.nonnegative("cost.alpha3", alpha3);
    if alpha1 + alpha2 + alpha3 <= 0.0 {
        r.fail("cost.alpha", "requires alpha1+alpha2+alpha3>0");
    }
    let phi_q_file = r.path("cost.phi_Q_file");
    let phi_t_file = r.path("cost.phi_T_file");

    let init_file = r.path("init.file");
    let init = match (r.raw("init.preset"), init_file) {
        (_, Some(p)) => InitChoice::File(p),
        ("stripes", None) => InitChoice::Stripes,
        ("random", None) => InitChoice::Random,
        ("tanh-disk", None) => InitChoice::TanhDisk,
        (other, None) => {
            let tag = format!("expected stripes, random or tanh-disk, got `{other}`");
            r.fail("init.preset", tag);
            InitChoice::Stripes
        }
    };
    let init_mean = r.real("init.mean");
    let init_amplitude = r.real("init.amplitude");
    let init_seed = r.seed("init.seed");

    let optimizer_enabled = r.flag("optimizer.enabled");
    if optimizer_enabled && p_exponent < 6.0 {
        r.fail("control.p_exponent", "adjoint requires p >= 6");
    }
    let max_iters = r.count("optimizer.max_iters");
    let step0 = r.real("optimizer.step0");
    r.positive("optimizer.step0", step0);
    let armijo_c = r.real("optimizer.armijo_c");
    r.open_unit("optimizer.armijo_c", armijo_c);
    let armijo_shrink = r.real("optimizer.armijo_shrink");
    r.open_unit("optimizer.armijo_shrink", armijo_shrink);
    let tol_vi = r.real("optimizer.tol_vi");
    r.positive("optimizer.tol_vi", tol_vi);

    let out_dir = PathBuf::from(r.raw("output.dir"));
    if out_dir.as_os_str().is_empty() {
        r.fail("output.dir", "must not be empty");
    }
    let stride = r.count("output.stride");
    if stride == 0 {
        r.fail("output.stride", "must be at least 1");
    }

    let stabilization = if r.raw("solver.stabilization") == "auto" {
        match potential {
            PotentialChoice::Polynomial => 1.0,
            PotentialChoice::Logarithmic => theta0 - theta,
        }
    } else {
        let s = r.real("solver.stabilization");
        r.nonnegative("solver.stabilization", s);
        s
    };
    let dealias = r.flag("solver.dealias");
    let memory_cap = r.count("solver.memory_cap");
    if memory_cap < 2 {
        r.fail("solver.memory_cap", "must be at least 2");
    }

    let grad_tol = r.real("check.grad_tol");
    r.positive("check.grad_tol", grad_tol);
    let dual_tol = r.real("check.dual_tol");
    r.positive("check.dual_tol", dual_tol);
    let trials = r.count("check.trials");
    if trials == 0 {
        r.fail("check.trials", "must be at least 1");
    }

    RunConfig {
        grid,
        t_final,
        n_steps,
        potential,
        theta,
        theta0,
        lambda,
        use_regularized,
        noise,
        j_modes,
        amp0,
        seed,
        n_paths,
        k_u,
        p_exponent,
        bound,
        vortex,
        control_file,
        alpha1,
        alpha2,
        alpha3,
        phi_q_file,
        phi_t_file,
        init,
        init_mean,
        init_amplitude,
        init_seed,
        optimizer_enabled,
        max_iters,
        step0,
        armijo_c,
        armijo_shrink,
        tol_vi,
        out_dir,
        stride,
        stabilization,
        dealias,
        memory_cap,
        grad_tol,
        dual_tol,
        trials,
    }
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Every key with its effective value, one `key = value` line each.
    pub fn effective_text(&self) -> String {
        let potential = match self.potential {
            PotentialChoice::Polynomial => "polynomial",
            PotentialChoice::Logarithmic => "logarithmic",
        };
        let noise = match self.noise {
            NoiseChoice::Off => "off",
            NoiseChoice::Additive => "additive",
            NoiseChoice::Multiplicative => "multiplicative",
        };
        let (preset, init_file) = match &self.init {
            InitChoice::Stripes => ("stripes", String::new()),
            InitChoice::Random => ("random", String::new()),
            InitChoice::TanhDisk => ("tanh-disk", String::new()),
            InitChoice::File(p) => ("stripes", p.display().to_string()),
        };
        let entries: Vec<(&str, String)> = vec![
            ("grid.nx", self.grid.nx.to_string()),
            ("grid.ny", self.grid.ny.to_string()),
            ("grid.lx", self.grid.lx.to_string()),
            ("grid.ly", self.grid.ly.to_string()),
            ("time.T", self.t_final.to_string()),
            ("time.n_steps", self.n_steps.to_string()),
            ("potential.kind", potential.into()),
            ("potential.theta", self.theta.to_string()),
            ("potential.theta0", self.theta0.to_string()),
            ("potential.lambda", self.lambda.to_string()),
            ("potential.use_regularized", self.use_regularized.to_string()),
            ("noise.kind", noise.into()),
            ("noise.j_modes", self.j_modes.to_string()),
            ("noise.amp0", self.amp0.to_string()),
            ("noise.seed", self.seed.to_string()),
            ("noise.n_paths", self.n_paths.to_string()),
            ("control.K_u", self.k_u.to_string()),
            ("control.p_exponent", self.p_exponent.to_string()),
            ("control.L", self.bound.to_string()),
            ("control.vortex", self.vortex.to_string()),
            ("control.file", path_text(&self.control_file)),
            ("cost.alpha1", self.alpha1.to_string()),
            ("cost.alpha2", self.alpha2.to_string()),
            ("cost.alpha3", self.alpha3.to_string()),
            ("cost.phi_Q_file", path_text(&self.phi_q_file)),
            ("cost.phi_T_file", path_text(&self.phi_t_file)),
            ("init.preset", preset.into()),
            ("init.file", init_file),
            ("init.mean", self.init_mean.to_string()),
            ("init.amplitude", self.init_amplitude.to_string()),
            ("init.seed", self.init_seed.to_string()),
            ("optimizer.enabled", self.optimizer_enabled.to_string()),
            ("optimizer.max_iters", self.max_iters.to_string()),
            ("optimizer.step0", self.step0.to_string()),
            ("optimizer.armijo_c", self.armijo_c.to_string()),
            ("optimizer.armijo_shrink", self.armijo_shrink.to_string()),
            ("optimizer.tol_vi", self.tol_vi.to_string()),
            ("output.dir", self.out_dir.display().to_string()),
            ("output.stride", self.stride.to_string()),
            ("solver.stabilization", self.stabilization.to_string()),
            ("solver.dealias", self.dealias.to_string()),
            ("solver.memory_cap", self.memory_cap.to_string()),
            ("check.grad_tol", self.grad_tol.to_string()),
            ("check.dual_tol", self.dual_tol.to_string()),
            ("check.trials", self.trials.to_string()),
        ];
        let mut text = String::from("# effective configuration\n");
        for (k, v) in entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        text
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(text: &str) -> Vec<String> {
        parse_config(text)
            .unwrap_err()
            .issues
            .into_iter()
            .map(|i| i.tag)
            .collect()
    }

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.grid.nx, 64);
        assert_eq!(c.n_steps, 100);
        assert_eq!(c.stabilization, 1.0);
        assert_eq!(c.init, InitChoice::Stripes);
        assert!((c.dt() - 2e-3).abs() < 1e-18);
    }

    #[test]
    fn comments_and_whitespace() {
        let c = parse_config("# header\n  grid.nx = 32   # trailing\n\ncost.alpha3=0.5\n").unwrap();
        assert_eq!(c.grid.nx, 32);
        assert_eq!(c.alpha3, 0.5);
    }

    #[test]
    fn log_potential_ordering() {
        let t = tags("potential.kind = logarithmic\npotential.theta = 1.2\npotential.use_regularized = true\n");
        assert_eq!(t, vec!["psi_log requires 0<theta<theta0"]);
    }

    #[test]
    fn weights_must_not_all_vanish() {
        let t = tags("cost.alpha1 = 0\ncost.alpha2 = 0\ncost.alpha3 = 0\n");
        assert_eq!(t, vec!["requires alpha1+alpha2+alpha3>0"]);
    }

    #[test]
    fn low_exponent_with_optimizer() {
        assert_eq!(tags("control.p_exponent = 4\n"), vec!["adjoint requires p >= 6"]);
        assert!(parse_config("control.p_exponent = 4\noptimizer.enabled = false\n").is_ok());
    }

    #[test]
    fn all_violations_reported() {
        let err = parse_config("grid.nx = 7\nbogus = 1\ntime.T = -1\ncost.alpha2 = x\n").unwrap_err();
        let keys: Vec<_> = err.issues.iter().map(|i| i.key.as_str()).collect();
        assert!(keys.contains(&"bogus"));
        assert!(keys.contains(&"grid"));
        assert!(keys.contains(&"time.T"));
        assert!(keys.contains(&"cost.alpha2"));
    }

    #[test]
    fn effective_text_round_trips() {
        let text = "noise.kind = multiplicative\nnoise.n_paths = 3\ninit.preset = tanh-disk\n\
                    potential.kind = logarithmic\npotential.use_regularized = true\n\
                    cost.phi_T_file = target.chf\ntime.T = 0.123\n";
        let c = parse_config(text).unwrap();
        assert!((c.stabilization - 0.2).abs() < 1e-15);
        let echoed = c.effective_text();
        assert_eq!(parse_config(&echoed).unwrap(), c);
        assert_eq!(parse_config(&echoed).unwrap().effective_text(), echoed);
    }

    #[test]
    fn duplicate_keys_rejected() {
        assert_eq!(tags("grid.nx = 32\ngrid.nx = 16\n"), vec!["duplicate key"]);
    }
}
