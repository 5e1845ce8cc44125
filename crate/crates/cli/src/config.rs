//! Scenario files: one TOML document per run.
//!
//! Every key is validated before any path is simulated; unknown keys are
//! rejected. [`ScenarioConfig::canonical`] fills in the defaults, and its
//! TOML form parses back to the same settings.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Seed used when neither the file nor `--seed` gives one.
pub const DEFAULT_SEED: u64 = 0x4d45_5355_4741_4b49;

/// Number of steps per horizon when `step` is omitted.
pub const DEFAULT_STEPS: usize = 100;

pub const DEFAULT_REQUIRED_PER_HALVING: f64 = 1.3;

/// A configuration problem tied to one key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_depth: Option<usize>,
    pub process: ProcessConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrand: Option<IntegrandConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ito: Option<ItoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Jump process or SDE to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessConfig {
    Poisson {
        rate: f64,
    },
    Cox {
        phi: PhiConfig,
        driving: DrivingConfig,
    },
    Hawkes {
        base: f64,
        kernel: KernelConfig,
    },
    CompoundPoisson {
        rate: f64,
        marks: MarksConfig,
    },
    CompoundHawkes {
        base: f64,
        kernel: KernelConfig,
        marks: MarksConfig,
    },
    CompoundCox {
        phi: PhiConfig,
        driving: DrivingConfig,
        marks: MarksConfig,
    },
    DiscreteState {
        x0: i64,
        table: TableConfig,
    },
    Sde {
        x0: f64,
        #[serde(default)]
        drift: CoefficientConfig,
        #[serde(default)]
        diffusion: CoefficientConfig,
        /// Any of the point-process types; omitted means no jumps.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        jumps: Option<Box<ProcessConfig>>,
        #[serde(default = "JumpMapConfig::identity")]
        large: JumpMapConfig,
        #[serde(default = "JumpMapConfig::identity")]
        small: JumpMapConfig,
        #[serde(default = "yes")]
        compensate: bool,
    },
}

fn yes() -> bool {
    true
}

impl ProcessConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProcessConfig::Poisson { .. } => "poisson",
            ProcessConfig::Cox { .. } => "cox",
            ProcessConfig::Hawkes { .. } => "hawkes",
            ProcessConfig::CompoundPoisson { .. } => "compound_poisson",
            ProcessConfig::CompoundHawkes { .. } => "compound_hawkes",
            ProcessConfig::CompoundCox { .. } => "compound_cox",
            ProcessConfig::DiscreteState { .. } => "discrete_state",
            ProcessConfig::Sde { .. } => "sde",
        }
    }
}

/// `φ` applied to the driving path of a Cox process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    Constant {
        value: f64,
    },
    Affine {
        intercept: f64,
        slope: f64,
    },
    /// `1 + sin² x`.
    OnePlusSin2,
}

/// Driving path, sampled on the step grid and interpolated linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DrivingConfig {
    Linear {
        #[serde(default)]
        intercept: f64,
        slope: f64,
    },
    Sine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
}

impl DrivingConfig {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DrivingConfig::Linear { intercept, slope } => intercept + slope * t,
            DrivingConfig::Sine {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * (frequency * t).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// `α e^{−βu}`.
    Exponential { alpha: f64, beta: f64 },
    /// `α (1 + u/c)^{−p}`.
    PowerLaw { alpha: f64, c: f64, p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarksConfig {
    PointMass {
        value: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Exponential {
        rate: f64,
    },
    PowerLaw {
        exponent: f64,
        low: f64,
        high: f64,
    },
    /// `[[mark, weight], ...]`, weights normalized.
    Atoms {
        points: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TableConfig {
    BirthDeath { birth: f64, death: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `c · x`.
    Linear {
        coefficient: f64,
    },
}

/// `h(t, z, x)` in front of the jump measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpMapConfig {
    Zero,
    Identity,
    /// `z (c0 + c1 x)`.
    Affine {
        c0: f64,
        c1: f64,
    },
}

impl JumpMapConfig {
    fn identity() -> Self {
        JumpMapConfig::Identity
    }
}

/// Integrand `θ(t, z)` for compensated integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandConfig {
    Identity,
    Square,
    /// `|z|^exponent`.
    Power {
        exponent: f64,
    },
    Constant {
        value: f64,
    },
}

impl IntegrandConfig {
    pub fn label(&self) -> String {
        match self {
            IntegrandConfig::Identity => "identity".into(),
            IntegrandConfig::Square => "square".into(),
            IntegrandConfig::Power { exponent } => format!("power({exponent})"),
            IntegrandConfig::Constant { value } => format!("constant({value})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    /// Levels compared by the coupling diagnostics; defaults to
    /// `1..=grid_depth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
    /// Truncation windows `n` for the compensated-integral sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItoConfig {
    #[serde(default = "default_functions")]
    pub functions: Vec<String>,
    /// Starting value for point-process scenarios; `sde` uses its own `x0`.
    #[serde(default)]
    pub x0: f64,
    /// Step sizes for the convergence sweep, decreasing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dts: Option<Vec<f64>>,
    #[serde(default = "default_per_halving")]
    pub required_per_halving: f64,
}

impl Default for ItoConfig {
    fn default() -> Self {
        Self {
            functions: default_functions(),
            x0: 0.0,
            dts: None,
            required_per_halving: DEFAULT_REQUIRED_PER_HALVING,
        }
    }
}

fn default_functions() -> Vec<String> {
    vec!["square".into()]
}

fn default_per_halving() -> f64 {
    DEFAULT_REQUIRED_PER_HALVING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    /// Checkpoint times; defaults to `T/4, T/2, T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<f64>>,
    /// Multiplies the compensator. Anything but 1 should fail.
    #[serde(default = "one")]
    pub compensator_scale: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            checkpoints: None,
            compensator_scale: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Write only the first `csv_paths` paths to the CSV files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_paths: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
            csv_paths: None,
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn default_directory() -> String {
    "out".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn positive(field: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be a finite number > 0, got {x}")))
    }
}

/// Best guess at the key a parse error refers to: a backticked name in the
/// message, else the key on the offending line.
fn parse_error_field(text: &str, span: Option<std::ops::Range<usize>>, message: &str) -> String {
    if let Some(name) = message.split('`').nth(1) {
        return name.to_string();
    }
    span.and_then(|s| {
        let start = text[..s.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
        let line = text[start..].lines().next()?;
        let (key, _) = line.split_once('=')?;
        Some(key.trim().to_string())
    })
    .unwrap_or_else(|| "<document>".into())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        if text.trim().is_empty() {
            return Err(ConfigError::new("<document>", "configuration is empty"));
        }
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().trim().to_string();
            ConfigError::new(parse_error_field(text, e.span(), &message), message)
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Resolved step `Δt`.
    pub fn step(&self) -> f64 {
        self.step.unwrap_or(self.horizon / DEFAULT_STEPS as f64)
    }

    /// The same settings with every default written out.
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.step = Some(self.step());
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.canonical()).expect("scenario configs always serialize")
    }

    /// Checks that do not need the domain objects. The rest happens when
    /// the scenario is built.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.scenario.trim().is_empty() {
            return Err(ConfigError::new("scenario", "must not be empty"));
        }
        positive("horizon", self.horizon)?;
        if let Some(step) = self.step {
            positive("step", step)?;
            if step > self.horizon {
                return Err(ConfigError::new(
                    "step",
                    format!("must not exceed horizon {}", self.horizon),
                ));
            }
        }
        if self.paths == 0 {
            return Err(ConfigError::new("paths", "must be >= 1"));
        }
        if let Some(k) = self.grid_depth {
            if !(1..=20).contains(&k) {
                return Err(ConfigError::new("grid_depth", format!("must be in 1..=20, got {k}")));
            }
        }
        if let Some(ito) = &self.ito {
            if ito.functions.is_empty() {
                return Err(ConfigError::new("ito.functions", "must name at least one function"));
            }
            if let Some(dts) = &ito.dts {
                if dts.len() < 2 || dts.iter().any(|&d| !(d > 0.0)) || dts.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(ConfigError::new(
                        "ito.dts",
                        "need at least two decreasing positive step sizes",
                    ));
                }
                if dts[0] > self.horizon {
                    return Err(ConfigError::new("ito.dts", "step sizes must not exceed horizon"));
                }
            }
            positive("ito.required_per_halving", ito.required_per_halving)?;
        }
        if let Some(v) = &self.validate {
            positive("validate.compensator_scale", v.compensator_scale)?;
            if let Some(cp) = &v.checkpoints {
                if cp.is_empty()
                    || cp.iter().any(|&t| !(t > 0.0 && t <= self.horizon))
                    || cp.windows(2).any(|w| !(w[1] > w[0]))
                {
                    return Err(ConfigError::new(
                        "validate.checkpoints",
                        "need increasing times in (0, horizon]",
                    ));
                }
            }
        }
        if self.output.formats.is_empty() {
            return Err(ConfigError::new("output.formats", "must list csv and/or json"));
        }
        if self.output.directory.is_empty() {
            return Err(ConfigError::new("output.directory", "must not be empty"));
        }
        Ok(())
    }
}
