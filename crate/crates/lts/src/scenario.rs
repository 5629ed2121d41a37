//! TOML scenario files.
//!
//! A scenario names a model, an optional initial state, default parameters
//! and a list of tasks. Unknown keys are rejected. Semantic errors inside a
//! task are reported with the line of the task's table.

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Spanned;

fn one() -> f64 {
    1.0
}

fn default_far() -> f64 {
    lts_core::coarse::DEFAULT_FAR_THRESHOLD
}

fn default_near() -> f64 {
    lts_core::coarse::DEFAULT_NEAR_THRESHOLD
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateSpec>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub tasks: Vec<Spanned<TaskSpec>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `n_spins` independent spins with splitting `omega`.
    Spin {
        n_spins: u32,
        #[serde(default = "one")]
        omega: f64,
    },
    /// `modes` oscillators of frequency `omega`, each truncated at `nu_max`
    /// quanta.
    Oscillator {
        modes: u32,
        #[serde(default = "one")]
        omega: f64,
        nu_max: u32,
    },
    /// Diagonal Hamiltonian with the given level energies.
    Levels {
        energies: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degeneracies: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        energy_scale: Option<f64>,
    },
    /// GUE-like Hermitian matrix scaled by `scale`, drawn from the seed.
    RandomHermitian {
        dim: usize,
        #[serde(default = "one")]
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    /// `(|E_max⟩ + sign |E_g⟩)/√2`.
    Extremes {
        #[serde(default = "one")]
        sign: f64,
    },
    Eigen {
        level: usize,
    },
    /// Level populations, spread uniformly inside each eigenblock.
    Populations {
        probs: Vec<f64>,
    },
    /// `Σ_m √w_m e^{iφ_m} |m⟩` over one basis vector per level, normalized.
    Superposition {
        weights: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phases: Option<Vec<f64>>,
    },
    RandomPure,
    RandomMixed,
    MaximallyMixed,
}

/// Concentration and time grid. `λ` is given by exactly one of `lambda`,
/// `lambda_rel` (`λ = rel·(E/π)²`) and `sqrt_lambda_rel` (`√λ = rel·E/π`),
/// with `E` the spectral span.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqrt_lambda_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_count: Option<usize>,
    /// Explicit grid; overrides `t_start`/`t_stop`/`t_count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

impl Params {
    fn has_lambda(&self) -> bool {
        self.lambda.is_some() || self.lambda_rel.is_some() || self.sqrt_lambda_rel.is_some()
    }

    /// Task-level values win. Any `λ` key in the task replaces all three
    /// scenario `λ` keys, and `times` replaces the grid keys.
    pub fn merged(&self, task: Option<&Params>) -> Params {
        let Some(t) = task else {
            return self.clone();
        };
        let mut out = self.clone();
        if t.has_lambda() {
            out.lambda = t.lambda;
            out.lambda_rel = t.lambda_rel;
            out.sqrt_lambda_rel = t.sqrt_lambda_rel;
        }
        if t.times.is_some() {
            out.times = t.times.clone();
        } else if t.t_start.is_some() || t.t_stop.is_some() || t.t_count.is_some() {
            out.times = None;
        }
        out.t_start = t.t_start.or(self.t_start);
        out.t_stop = t.t_stop.or(self.t_stop);
        out.t_count = t.t_count.or(self.t_count);
        out
    }

    pub fn check(&self) -> Result<(), String> {
        let n = [self.lambda, self.lambda_rel, self.sqrt_lambda_rel]
            .iter()
            .filter(|x| x.is_some())
            .count();
        if n > 1 {
            return Err("give only one of lambda, lambda_rel, sqrt_lambda_rel".into());
        }
        for (key, v) in [
            ("lambda", self.lambda),
            ("lambda_rel", self.lambda_rel),
            ("sqrt_lambda_rel", self.sqrt_lambda_rel),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(format!("{key} must be finite and > 0"));
                }
            }
        }
        if let Some(times) = &self.times {
            if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err("times must be finite and >= 0".into());
            }
        } else {
            let (a, b) = (self.t_start.unwrap_or(0.0), self.t_stop.unwrap_or(DEFAULT_T_STOP));
            if !(a >= 0.0 && b >= a && b.is_finite()) {
                return Err("need 0 <= t_start <= t_stop".into());
            }
            if self.t_count == Some(0) {
                return Err("t_count must be >= 1".into());
            }
        }
        Ok(())
    }
}

pub const DEFAULT_T_STOP: f64 = 10.0;
pub const DEFAULT_T_COUNT: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Companions {
    #[default]
    Omit,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseRule {
    #[default]
    GroupMean,
    PerPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[default]
    Exact,
    Unitary,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builder {
    #[default]
    Greedy,
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaChoice {
    #[default]
    Minimal,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    #[default]
    Normal,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSpec {
    Spectrum(SpectrumTask),
    Evolve(EvolveTask),
    MarkovScan(MarkovScanTask),
    Coarse(CoarseTask),
    Opensys(OpensysTask),
    Classify(ClassifyTask),
    Factors(FactorsTask),
    Near(NearTask),
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Spectrum(_) => "spectrum",
            TaskSpec::Evolve(_) => "evolve",
            TaskSpec::MarkovScan(_) => "markov-scan",
            TaskSpec::Coarse(_) => "coarse",
            TaskSpec::Opensys(_) => "opensys",
            TaskSpec::Classify(_) => "classify",
            TaskSpec::Factors(_) => "factors",
            TaskSpec::Near(_) => "near",
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            TaskSpec::Spectrum(t) => t.name.as_deref(),
            TaskSpec::Evolve(t) => t.name.as_deref(),
            TaskSpec::MarkovScan(t) => t.name.as_deref(),
            TaskSpec::Coarse(t) => t.name.as_deref(),
            TaskSpec::Opensys(t) => t.name.as_deref(),
            TaskSpec::Classify(t) => t.name.as_deref(),
            TaskSpec::Factors(t) => t.name.as_deref(),
            TaskSpec::Near(t) => t.name.as_deref(),
        }
    }

    pub fn params(&self) -> Option<&Params> {
        match self {
            TaskSpec::Spectrum(_) => None,
            TaskSpec::Evolve(t) => t.params.as_ref(),
            TaskSpec::MarkovScan(t) => t.params.as_ref(),
            TaskSpec::Coarse(t) => t.params.as_ref(),
            TaskSpec::Opensys(t) => t.params.as_ref(),
            TaskSpec::Classify(t) => t.params.as_ref(),
            TaskSpec::Factors(t) => t.params.as_ref(),
            TaskSpec::Near(t) => t.params.as_ref(),
        }
    }

    fn needs_model(&self) -> bool {
        !matches!(self, TaskSpec::Opensys(_))
    }

    fn check(&self) -> Result<(), String> {
        if let Some(p) = self.params() {
            p.check()?;
        }
        match self {
            TaskSpec::Coarse(t) => thresholds(t.far, t.near),
            TaskSpec::MarkovScan(t) => thresholds(t.far, t.near),
            TaskSpec::Opensys(t) => {
                if let Some(scan) = &t.reduced_scan {
                    thresholds(scan.far, scan.near)?;
                }
                if !(t.epsilon > 0.0 && t.epsilon < 1.0) {
                    return Err("epsilon must lie in (0, 1)".into());
                }
                Ok(())
            }
            TaskSpec::Factors(t) => {
                if t.gaps.is_empty() && t.gaps_rel.is_empty() && t.gap_divisors.is_empty() {
                    return Err("factors needs gaps, gaps_rel or gap_divisors".into());
                }
                if t.gap_divisors.iter().any(|d| !(*d > 0.0)) {
                    return Err("gap_divisors must be > 0".into());
                }
                Ok(())
            }
            TaskSpec::Near(t) => {
                if t.level.is_some() && t.e_m.is_some() {
                    return Err("give at most one of level and e_m".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn thresholds(far: f64, near: f64) -> Result<(), String> {
    if !(far > 0.0 && far < near && near < 1.0) {
        return Err("need 0 < far < near < 1".into());
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Apply the exact map to the scenario state on the time grid.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    /// Also write the Kraus weights and level coefficients at the last time.
    #[serde(default)]
    pub kraus: bool,
}

/// CP of each member and every intermediate map, and the composition law,
/// over the time grid.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovScanTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    #[serde(default)]
    pub family: Family,
    #[serde(default = "default_far")]
    pub far: f64,
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default)]
    pub companions: Companions,
    #[serde(default)]
    pub phase_rule: PhaseRule,
}

impl Default for MarkovScanTask {
    fn default() -> Self {
        Self {
            name: None,
            params: None,
            family: Family::Exact,
            far: default_far(),
            near: default_near(),
            companions: Companions::Omit,
            phase_rule: PhaseRule::GroupMean,
        }
    }
}

/// Build a coarse graining and scan the approximate map over the grid.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    #[serde(default)]
    pub builder: Builder,
    /// Window width as a fraction of the span (window builder only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_rel: Option<f64>,
    #[serde(default = "default_far")]
    pub far: f64,
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default)]
    pub phase_rule: PhaseRule,
}

impl Default for CoarseTask {
    fn default() -> Self {
        Self {
            name: None,
            params: None,
            builder: Builder::Greedy,
            window_rel: None,
            far: default_far(),
            near: default_near(),
            phase_rule: PhaseRule::GroupMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InteractionSpec {
    /// `energies[α][β]` for system level `α` and environment level `β`.
    Explicit {
        energies: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        system_ranks: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        env_ranks: Option<Vec<usize>>,
    },
    /// Independent draws `scale·X` with `X` standard normal or uniform on
    /// `[−1, 1]`.
    Random {
        system_levels: usize,
        env_levels: usize,
        #[serde(default)]
        distribution: Distribution,
        #[serde(default = "one")]
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladSpec {
    pub gamma: Vec<Vec<f64>>,
    pub a_values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedScanSpec {
    #[serde(default = "default_far")]
    pub far: f64,
    #[serde(default = "default_near")]
    pub near: f64,
}

fn default_epsilon() -> f64 {
    lts_core::opensys::DEFAULT_EPSILON_DEC
}

fn default_persistence() -> usize {
    lts_core::opensys::DEFAULT_PERSISTENCE
}

/// Reduced dynamics of a system under a pure-decoherence coupling.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OpensysTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    pub interaction: InteractionSpec,
    /// Environment level weights `p_β`; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_weights: Option<Vec<f64>>,
    /// Initial system state, over the system levels in index order; the
    /// uniform superposition when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_state: Option<StateSpec>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_persistence")]
    pub persistence: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lindblad: Option<LindbladSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced_scan: Option<ReducedScanSpec>,
}

fn default_d_hi() -> f64 {
    2.1
}

fn default_fid_tol() -> f64 {
    0.70
}

fn default_s() -> f64 {
    9.0
}

/// Domain classification of the scenario state or of a batch of states.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<StateSpec>>,
    #[serde(default)]
    pub lambda_policy: LambdaChoice,
    #[serde(default = "default_d_hi")]
    pub d_hi: f64,
    #[serde(default = "default_d_hi")]
    pub r_hi: f64,
    #[serde(default = "default_fid_tol")]
    pub fid_tol: f64,
    #[serde(default = "one")]
    pub r_small: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
}

impl Default for ClassifyTask {
    fn default() -> Self {
        Self {
            name: None,
            params: None,
            states: None,
            lambda_policy: LambdaChoice::Minimal,
            d_hi: default_d_hi(),
            r_hi: default_d_hi(),
            fid_tol: default_fid_tol(),
            r_small: 1.0,
            s: default_s(),
            k: None,
        }
    }
}

/// Gaussian factors `exp(−δ²/4λ)` for a list of gaps.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FactorsTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    /// Absolute gaps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gaps: Vec<f64>,
    /// Gaps as fractions of the span.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gaps_rel: Vec<f64>,
    /// Gaps `E/q` for each listed `q`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gap_divisors: Vec<f64>,
}

/// Near factor of the coarse-graining interval at one level.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NearTask {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    pub k: f64,
    #[serde(default = "one")]
    pub r_small: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    /// Level index; the ground level when neither this nor `e_m` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    /// Explicit level energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_m: Option<f64>,
}

/// A scenario error with the 1-based line it refers to, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|b| **b == b'\n')
        .count()
        + 1
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        && !name.starts_with('.')
}

impl Scenario {
    /// Parse and validate scenario text.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        sc.validate(Some(text))?;
        Ok(sc)
    }

    /// Semantic checks; `text` is used to turn task spans into lines.
    pub fn validate(&self, text: Option<&str>) -> Result<(), ScenarioError> {
        self.params.check().map_err(|message| ScenarioError {
            line: None,
            message: format!("[params]: {message}"),
        })?;
        let mut seen = HashSet::new();
        for (i, task) in self.tasks.iter().enumerate() {
            let line = text.map(|t| line_of(t, task.span().start));
            let err = |message: String| ScenarioError {
                line,
                message: format!("task {i}: {message}"),
            };
            let spec = task.get_ref();
            spec.check().map_err(err)?;
            if spec.needs_model() && self.model.is_none() {
                return Err(err(format!("{} needs a [model]", spec.kind())));
            }
            let stem = self.stem(i);
            if !valid_name(&stem) {
                return Err(err(format!("invalid task name {stem:?}")));
            }
            if !seen.insert(stem.clone()) {
                return Err(err(format!("duplicate task name {stem:?}")));
            }
        }
        Ok(())
    }

    /// Output file stem of task `i`: its name, or `NN-kind`.
    pub fn stem(&self, i: usize) -> String {
        let t = self.tasks[i].get_ref();
        match t.name() {
            Some(n) => n.to_string(),
            None => format!("{i:02}-{}", t.kind()),
        }
    }

    /// Single-task scenario, as built by the subcommands.
    pub fn single(model: Option<ModelSpec>, state: Option<StateSpec>, params: Params, task: TaskSpec) -> Scenario {
        Scenario {
            seed: 0,
            out_dir: None,
            model,
            state,
            params,
            tasks: vec![Spanned::new(0..0, task)],
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}
