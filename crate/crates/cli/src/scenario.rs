//! Turns a validated config into library objects.

use std::sync::Arc;

use mesugaki::history::{DrivingPath, TimeGrid};
use mesugaki::integral::Integrand;
use mesugaki::ito::{Coefficient, JumpMap, SemimartingaleSpec, TestFunction};
use mesugaki::marks::MarkDistribution;
use mesugaki::point_process::{IntensityModel, Kernel, RateBound, RateFn};
use mesugaki::sde::{discrete_state_process, JumpTable, MesugakiSdeSpec, StateMeasure};
use mesugaki::wakarase::WakaraseMeasure;

use crate::config::{
    CoefficientConfig, ConfigError, DrivingConfig, IntegrandConfig, JumpMapConfig, KernelConfig, MarksConfig,
    PhiConfig, ProcessConfig, ScenarioConfig, TableConfig,
};

fn at<T>(field: &str, r: mesugaki::Result<T>) -> Result<T, ConfigError> {
    r.map_err(|e| ConfigError::new(field, e.to_string()))
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Process {
    /// Unit marks.
    Counting(IntensityModel),
    /// `μ(dz; t) = λ(t) p(dz)`; `ground` is `λ`.
    Marked {
        ground: IntensityModel,
        mu: WakaraseMeasure,
    },
    /// `ito` is the matching semimartingale when the jump measure does not
    /// depend on the state and small jumps are compensated.
    Sde {
        spec: MesugakiSdeSpec,
        ito: Option<SemimartingaleSpec>,
    },
}

impl Process {
    /// The jump measure, with unit marks for counting processes.
    pub fn measure(&self) -> Option<WakaraseMeasure> {
        match self {
            Process::Counting(model) => Some(WakaraseMeasure::density(
                model.clone(),
                MarkDistribution::point_mass(1.0).expect("unit mark"),
            )),
            Process::Marked { mu, .. } => Some(mu.clone()),
            Process::Sde { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: TimeGrid,
    pub process: Process,
    pub integrand: Option<Integrand>,
    pub functions: Vec<TestFunction>,
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        config.check()?;
        let config = config.canonical();
        let grid = at("step", TimeGrid::new(config.horizon, config.step()))?;
        let process = build_process(&config.process, "process", &grid)?;
        let integrand = config.integrand.as_ref().map(build_integrand);
        let functions = config
            .ito
            .as_ref()
            .map(|ito| {
                ito.functions
                    .iter()
                    .map(|name| {
                        TestFunction::by_name(name).ok_or_else(|| {
                            ConfigError::new(
                                "ito.functions",
                                format!("unknown function `{name}` (linear, square, cube, log, exp, sin)"),
                            )
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?
            .unwrap_or_default();
        Ok(Self {
            config,
            grid,
            process,
            integrand,
            functions,
        })
    }
}

fn build_integrand(c: &IntegrandConfig) -> Integrand {
    match *c {
        IntegrandConfig::Identity => Integrand::identity(),
        IntegrandConfig::Square => Integrand::mark_only(|z| z * z),
        IntegrandConfig::Power { exponent } => Integrand::mark_only(move |z| z.abs().powf(exponent)),
        IntegrandConfig::Constant { value } => Integrand::constant(value),
    }
}

fn build_marks(c: &MarksConfig, field: &str) -> Result<MarkDistribution, ConfigError> {
    at(
        field,
        match c {
            MarksConfig::PointMass { value } => MarkDistribution::point_mass(*value),
            MarksConfig::Uniform { low, high } => MarkDistribution::uniform(*low, *high),
            MarksConfig::Exponential { rate } => MarkDistribution::exponential(*rate),
            MarksConfig::PowerLaw { exponent, low, high } => MarkDistribution::power_law(*exponent, *low, *high),
            MarksConfig::Atoms { points } => MarkDistribution::atoms(points.clone()),
        },
    )
}

fn build_kernel(c: &KernelConfig, field: &str) -> Result<Kernel, ConfigError> {
    at(
        field,
        match *c {
            KernelConfig::Exponential { alpha, beta } => Kernel::exponential(alpha, beta),
            KernelConfig::PowerLaw { alpha, c, p } => Kernel::power_law(alpha, c, p),
        },
    )
}

/// The driving path on the step grid, `φ`, and a constant bound on
/// `φ(X_t)`. `φ` affine in a piecewise-linear path peaks at a node.
fn build_cox(
    phi: &PhiConfig,
    driving: &DrivingConfig,
    grid: &TimeGrid,
    field: &str,
) -> Result<IntensityModel, ConfigError> {
    let path = at(
        &format!("{field}.driving"),
        DrivingPath::from_fn(grid, |t| driving.eval(t)),
    )?;
    let (rate, bound) = match *phi {
        PhiConfig::Constant { value } => {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(ConfigError::new(
                    format!("{field}.phi.value"),
                    format!("must be >= 0, got {value}"),
                ));
            }
            (RateFn::constant(value), value)
        }
        PhiConfig::Affine { intercept, slope } => {
            let at_nodes: Vec<f64> = path.values().iter().map(|x| intercept + slope * x).collect();
            if at_nodes.iter().any(|r| !(*r >= 0.0)) {
                return Err(ConfigError::new(
                    format!("{field}.phi"),
                    "rate must stay >= 0 along the driving path",
                ));
            }
            let max = at_nodes.iter().copied().fold(0.0, f64::max);
            (RateFn::new(move |x| intercept + slope * x), max)
        }
        PhiConfig::OnePlusSin2 => (RateFn::new(|x| 1.0 + x.sin().powi(2)), 2.0),
    };
    Ok(IntensityModel::cox(rate, Arc::new(path), RateBound::Constant(bound)))
}

fn build_coefficient(c: &CoefficientConfig) -> Coefficient {
    match *c {
        CoefficientConfig::Zero => Coefficient::Zero,
        CoefficientConfig::Constant { value } => Coefficient::Constant(value),
        CoefficientConfig::Linear { coefficient } => Coefficient::Linear(coefficient),
    }
}

fn build_jump_map(c: &JumpMapConfig) -> JumpMap {
    match *c {
        JumpMapConfig::Zero => JumpMap::Zero,
        JumpMapConfig::Identity => JumpMap::identity(),
        JumpMapConfig::Affine { c0, c1 } => JumpMap::Affine { c0, c1 },
    }
}

fn build_process(c: &ProcessConfig, field: &str, grid: &TimeGrid) -> Result<Process, ConfigError> {
    let marked = |ground: IntensityModel, marks: &MarksConfig| -> Result<Process, ConfigError> {
        let law = build_marks(marks, &format!("{field}.marks"))?;
        Ok(Process::Marked {
            mu: WakaraseMeasure::density(ground.clone(), law),
            ground,
        })
    };
    let hawkes = |base: f64, kernel: &KernelConfig| -> Result<IntensityModel, ConfigError> {
        let k = build_kernel(kernel, &format!("{field}.kernel"))?;
        if !(base > 0.0) || !base.is_finite() {
            return Err(ConfigError::new(
                format!("{field}.base"),
                format!("must be > 0, got {base}"),
            ));
        }
        at(&format!("{field}.kernel"), IntensityModel::hawkes(base, k))
    };
    let rate_field = format!("{field}.rate");
    match c {
        ProcessConfig::Poisson { rate } => Ok(Process::Counting(at(&rate_field, IntensityModel::homogeneous(*rate))?)),
        ProcessConfig::Cox { phi, driving } => Ok(Process::Counting(build_cox(phi, driving, grid, field)?)),
        ProcessConfig::Hawkes { base, kernel } => Ok(Process::Counting(hawkes(*base, kernel)?)),
        ProcessConfig::CompoundPoisson { rate, marks } => {
            marked(at(&rate_field, IntensityModel::homogeneous(*rate))?, marks)
        }
        ProcessConfig::CompoundHawkes { base, kernel, marks } => marked(hawkes(*base, kernel)?, marks),
        ProcessConfig::CompoundCox { phi, driving, marks } => marked(build_cox(phi, driving, grid, field)?, marks),
        ProcessConfig::DiscreteState { x0, table } => {
            let TableConfig::BirthDeath { birth, death } = *table;
            let table = at(&format!("{field}.table"), JumpTable::birth_death(birth, death))?;
            Ok(Process::Sde {
                spec: discrete_state_process(table, *x0 as f64),
                ito: None,
            })
        }
        ProcessConfig::Sde {
            x0,
            drift,
            diffusion,
            jumps,
            large,
            small,
            compensate,
        } => {
            if !x0.is_finite() {
                return Err(ConfigError::new(format!("{field}.x0"), "must be finite"));
            }
            let mu = match jumps.as_deref() {
                None => WakaraseMeasure::zero(),
                Some(ProcessConfig::DiscreteState { .. } | ProcessConfig::Sde { .. }) => {
                    return Err(ConfigError::new(
                        format!("{field}.jumps.type"),
                        "jumps must be a point process (poisson, cox, hawkes or compound_*)",
                    ))
                }
                Some(inner) => build_process(inner, &format!("{field}.jumps"), grid)?
                    .measure()
                    .expect("point processes have a measure"),
            };
            let (a, b) = (build_coefficient(drift), build_coefficient(diffusion));
            let (h1, h2) = (build_jump_map(large), build_jump_map(small));
            let mut spec = MesugakiSdeSpec::new(*x0, StateMeasure::Fixed(mu.clone()))
                .with_drift(a.clone())
                .with_diffusion(b.clone())
                .with_jumps(h1.clone(), h2.clone());
            let ito = if *compensate {
                Some(
                    SemimartingaleSpec::new(*x0, mu)
                        .with_drift(a)
                        .with_diffusion(b)
                        .with_jumps(h1, h2),
                )
            } else {
                spec = spec.uncompensated();
                None
            };
            Ok(Process::Sde { spec, ito })
        }
    }
}
