//! Experiment configuration files (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use chaintwin::control::{Init, OptimizerConfig};
use chaintwin::envnet::TruncationConfig;
use chaintwin::exactsim::ConeCriterion;
use chaintwin::models::{CircuitLayout, MblParams, Spin, XyzParams};
use chaintwin::rom::Route;
use chaintwin::C64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Artifact directory; defaults to `$CHAINTWIN_OUT/<name>` or
    /// `runs/<name>`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Disorder seeds for MBL models; for XYZ models only the first seed is
    /// used, as the seed of random controls and random initialization.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Marks large-chain settings that take hours.
    #[serde(default)]
    pub long_running: bool,
    pub model: ModelConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub truncation: TruncationSection,
    pub task: TaskConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Xyz {
        n: usize,
        steps: usize,
        target: usize,
        j: [f64; 3],
        h: [f64; 3],
        tau: f64,
    },
    Mbl {
        n: usize,
        steps: usize,
        target: usize,
        j: f64,
        #[serde(default)]
        include_last_field: bool,
    },
}

impl ModelConfig {
    pub fn n(&self) -> usize {
        match *self {
            ModelConfig::Xyz { n, .. } | ModelConfig::Mbl { n, .. } => n,
        }
    }

    pub fn steps(&self) -> usize {
        match *self {
            ModelConfig::Xyz { steps, .. } | ModelConfig::Mbl { steps, .. } => steps,
        }
    }

    pub fn target(&self) -> usize {
        match *self {
            ModelConfig::Xyz { target, .. } | ModelConfig::Mbl { target, .. } => target,
        }
    }

    pub fn is_disordered(&self) -> bool {
        matches!(self, ModelConfig::Mbl { .. })
    }

    /// Circuit for one disorder seed, with the model's target spin.
    pub fn layout(&self, seed: u64) -> chaintwin::Result<CircuitLayout> {
        match *self {
            ModelConfig::Xyz { n, steps, target, j, h, tau } => {
                CircuitLayout::xyz(&XyzParams { j, h, tau }, n, steps, target)
            }
            ModelConfig::Mbl { n, steps, target, j, include_last_field } => {
                let mut p = MblParams::sampled(j, n, seed);
                p.include_last_field = include_last_field;
                CircuitLayout::mbl(&p, steps, target)
            }
        }
    }
}

/// Per-spin initial product state; defaults to `|↑⟩` on the target and
/// `|↓⟩` elsewhere, or all `|↓⟩` for transfer.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub spins: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub epsilon: f64,
    pub r_max: usize,
    #[serde(default)]
    pub route: RouteName,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RouteName {
    #[default]
    Chain,
    Dense,
}

impl TruncationSection {
    pub fn config(&self) -> TruncationConfig {
        TruncationConfig::new(self.epsilon, self.r_max)
    }

    pub fn route(&self) -> Route {
        match self.route {
            RouteName::Chain => Route::Chain,
            RouteName::Dense => Route::Dense,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    /// Trajectories only; optionally under random controls on a window.
    Simulate {
        #[serde(default)]
        random_window: Option<[usize; 2]>,
    },
    /// Mutual-information revival of the target: multistep protocol on the
    /// window, optimized single gate, one- and two-flip spin echo.
    Echo {
        window: [usize; 2],
        /// Time of the single gate and of the σx flips; defaults to the
        /// window centre.
        #[serde(default)]
        flip_at: Option<usize>,
        #[serde(default = "yes")]
        baselines: bool,
    },
    EraseRecover {
        #[serde(default)]
        window: Option<[usize; 2]>,
    },
    /// Controls act on Alice's spin, which must be the model target.
    Transfer {
        bob: usize,
        #[serde(default)]
        window: Option<[usize; 2]>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub init: InitName,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    #[default]
    Identity,
    Random,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            learning_rate: d.learning_rate,
            beta1: d.beta1,
            beta2: d.beta2,
            eps_adam: d.eps_adam,
            max_iters: d.max_iters,
            tol: d.tol,
            init: InitName::Identity,
        }
    }
}

impl OptimizerSection {
    pub fn config(&self, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_adam: self.eps_adam,
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
            init: match self.init {
                InitName::Identity => Init::Identity,
                InitName::Random => Init::Random,
            },
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Compare against the exact simulator (needs `n ≤ exact_max_spins`).
    pub exact: bool,
    pub exact_max_spins: usize,
    /// Information-flow maps from the target spin.
    pub info_flow: bool,
    pub light_cone: bool,
    pub cone_delta: f64,
    pub cone_criterion: CriterionName,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CriterionName {
    #[default]
    StateChange,
    Sensitivity,
}

impl CriterionName {
    pub fn criterion(self) -> ConeCriterion {
        match self {
            CriterionName::StateChange => ConeCriterion::StateChange,
            CriterionName::Sensitivity => ConeCriterion::Sensitivity,
        }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            exact: true,
            exact_max_spins: 16,
            info_flow: true,
            light_cone: false,
            cone_delta: 1e-6,
            cone_criterion: CriterionName::StateChange,
        }
    }
}

/// A field-level validation failure.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { field: field.to_owned(), message: message.into() })
}

fn check_window(field: &str, w: [usize; 2], steps: usize) -> Result<(), ConfigError> {
    if w[0] > w[1] {
        return fail(field, format!("start {} after stop {}", w[0], w[1]));
    }
    if w[1] > steps {
        return fail(field, format!("window [{}, {}) must lie within [0, {steps})", w[0], w[1]));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, Box<dyn std::error::Error>> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Box<dyn std::error::Error>> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()).into())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return fail("name", "must be a non-empty file name");
        }
        if self.seeds.is_empty() {
            return fail("seeds", "need at least one seed");
        }
        let (n, steps, l) = (self.model.n(), self.model.steps(), self.model.target());
        if n < 2 {
            return fail("model.n", "need at least two spins");
        }
        if steps == 0 {
            return fail("model.steps", "need at least one step");
        }
        if l >= n {
            return fail("model.target", format!("{l} outside [0, {n})"));
        }
        match &self.model {
            ModelConfig::Xyz { j, h, tau, .. } => {
                if !(*tau > 0.0 && tau.is_finite()) {
                    return fail("model.tau", "must be positive");
                }
                if j.iter().chain(h).any(|x| !x.is_finite()) {
                    return fail("model.j", "couplings and fields must be finite");
                }
            }
            ModelConfig::Mbl { j, .. } => {
                if !j.is_finite() {
                    return fail("model.j", "must be finite");
                }
            }
        }
        if let Some(spins) = &self.initial.spins {
            if spins.len() != n {
                return fail("initial.spins", format!("{} entries for {n} spins", spins.len()));
            }
            if let Some(bad) = spins.iter().find(|s| s.parse::<Spin>().is_err()) {
                return fail("initial.spins", format!("unknown spin state {bad:?}"));
            }
        }
        let t = &self.truncation;
        if !(0.0..1.0).contains(&t.epsilon) {
            return fail("truncation.epsilon", format!("{} outside [0, 1)", t.epsilon));
        }
        if t.r_max == 0 {
            return fail("truncation.r_max", "must be at least 1");
        }
        match &self.task {
            TaskConfig::Simulate { random_window } => {
                if let Some(w) = random_window {
                    check_window("task.random_window", *w, steps)?;
                }
            }
            TaskConfig::Echo { window, flip_at, .. } => {
                check_window("task.window", *window, steps)?;
                if flip_at.is_some_and(|k| k >= steps) {
                    return fail("task.flip_at", format!("must lie in [0, {steps})"));
                }
            }
            TaskConfig::EraseRecover { window } => {
                if steps % 2 != 0 {
                    return fail("model.steps", "erase_recover needs an even number of steps");
                }
                if let Some(w) = window {
                    check_window("task.window", *w, steps)?;
                }
            }
            TaskConfig::Transfer { bob, window } => {
                if *bob >= n {
                    return fail("task.bob", format!("{bob} outside [0, {n})"));
                }
                if *bob == l {
                    return fail("task.bob", "Bob's spin must differ from Alice's (the model target)");
                }
                if let Some(w) = window {
                    check_window("task.window", *w, steps)?;
                }
            }
        }
        self.optimizer.config(0).validate().map_err(|e| ConfigError { field: "optimizer".into(), message: e.to_string() })?;
        if !(self.analysis.cone_delta > 0.0) {
            return fail("analysis.cone_delta", "must be positive");
        }
        Ok(())
    }

    /// Initial single-spin states. For transfer, Bob's entry is replaced by
    /// each tetrahedron state in turn and Alice starts in `|↓⟩`.
    pub fn initial_states(&self) -> Vec<[C64; 2]> {
        let (n, l) = (self.model.n(), self.model.target());
        let up = if matches!(self.task, TaskConfig::Transfer { .. }) { n } else { l };
        match &self.initial.spins {
            Some(spins) => spins.iter().map(|s| s.parse::<Spin>().expect("validated").amplitudes()).collect(),
            None => (0..n).map(|i| if i == up { Spin::Up } else { Spin::Down }.amplitudes()).collect(),
        }
    }

    /// Window of the optimized controls.
    pub fn control_window(&self) -> Option<[usize; 2]> {
        let steps = self.model.steps();
        match &self.task {
            TaskConfig::Simulate { random_window } => *random_window,
            TaskConfig::Echo { window, .. } => Some(*window),
            TaskConfig::EraseRecover { window } | TaskConfig::Transfer { window, .. } => Some(window.unwrap_or([0, steps])),
        }
    }

    /// Seeds that produce distinct circuits.
    pub fn realization_seeds(&self) -> Vec<u64> {
        if self.model.is_disordered() {
            self.seeds.clone()
        } else {
            vec![self.seeds[0]]
        }
    }
}
