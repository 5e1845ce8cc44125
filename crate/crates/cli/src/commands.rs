//! The four subcommands. Each returns its files in memory; nothing here
//! touches the file system.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use mesugaki::construction::{diagnose_convergence, simulate_mesugaki, ConvergenceReport, MesugakiPath};
use mesugaki::diagnostics::{
    chi_square_poisson, martingale_test, mean_identity_test, time_change_residuals, ChiSquareReport,
};
use mesugaki::ensemble::{mean_and_se, run_paths, sample_variance};
use mesugaki::history::{JumpEvent, PathHistory};
use mesugaki::integral::{compensated_at, integrate_compensated, truncation_sweep, Integrand, SweepReport};
use mesugaki::io::{jump_path_rows, write_events_csv, write_paths_csv, PathRow};
use mesugaki::ito::{dt_sweep, residual_ensemble, DtSweepReport, ResidualReport, EXACT_TOL, LINEAR_TOL};
use mesugaki::point_process::{compensator_at, simulate_counting, IntensityModel};
use mesugaki::sde::euler_simulate;

use crate::config::{Format, ProcessConfig, ScenarioConfig};
use crate::scenario::{Process, Scenario};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Converge,
    ItoCheck,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Converge => "converge",
            Command::ItoCheck => "ito-check",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Files to write plus the aggregate verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub files: Vec<OutputFile>,
    pub pass: bool,
    pub headline: String,
}

impl Outcome {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.name == name).map(|f| f.bytes.as_slice())
    }

    pub fn json(&self, name: &str) -> Option<Value> {
        serde_json::from_slice(self.file(name)?).ok()
    }
}

pub fn run(command: Command, config: &ScenarioConfig) -> Result<Outcome, CliError> {
    let scn = Scenario::build(config)?;
    match command {
        Command::Simulate => simulate(&scn),
        Command::Converge => converge(&scn),
        Command::ItoCheck => ito_check(&scn),
        Command::Validate => validate(&scn),
    }
}

/// The canonical config without `output.directory`, which may change
/// between otherwise identical runs.
fn config_echo(cfg: &ScenarioConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("configs serialize");
    if let Some(out) = v.get_mut("output").and_then(Value::as_object_mut) {
        out.remove("directory");
    }
    v
}

fn json_file<T: Serialize>(name: &str, value: &T) -> OutputFile {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
    bytes.push(b'\n');
    OutputFile {
        name: name.into(),
        bytes,
    }
}

/// Mean, spread and the standard error of the sample variance, the last
/// from the fourth central moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub count: usize,
    pub mean: f64,
    pub standard_error: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub min: f64,
    pub max: f64,
}

impl SampleStats {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, standard_error) = mean_and_se(xs);
        let n = xs.len() as f64;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        Self {
            count: xs.len(),
            mean,
            standard_error,
            variance: sample_variance(xs),
            variance_se: ((m4 - m2 * m2) / n).sqrt(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// `[(value, count)]` when every sample is an integer.
fn histogram(xs: &[f64]) -> Option<Vec<(i64, usize)>> {
    if xs.iter().any(|x| x.fract() != 0.0 || x.abs() > 1e15) {
        return None;
    }
    let mut counts = BTreeMap::new();
    for &x in xs {
        *counts.entry(x as i64).or_insert(0) += 1;
    }
    Some(counts.into_iter().collect())
}

#[derive(Debug, Serialize)]
struct IntegralStats {
    integrand: String,
    #[serde(flatten)]
    stats: SampleStats,
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    command: &'static str,
    config: Value,
    terminal: SampleStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    events: Option<SampleStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram: Option<Vec<(i64, usize)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    poisson_gof: Option<ChiSquareReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    integral: Option<IntegralStats>,
}

struct Simulated {
    rows: Vec<PathRow>,
    events: Option<Vec<Vec<JumpEvent>>>,
    terminal: Vec<f64>,
    integral: Option<Vec<f64>>,
}

fn simulate_paths(scn: &Scenario) -> Result<Simulated, CliError> {
    let cfg = &scn.config;
    let (seed, n, horizon, step) = (cfg.seed, cfg.paths, cfg.horizon, scn.grid.step());
    let keep = cfg.output.csv_paths.unwrap_or(n).min(n);
    match &scn.process {
        Process::Counting(model) => {
            let paths = run_paths(seed, n, |_, rng| simulate_counting(model, horizon, rng))?;
            let rows = paths[..keep]
                .iter()
                .enumerate()
                .flat_map(|(i, p)| jump_path_rows(i, p))
                .collect();
            Ok(Simulated {
                rows,
                terminal: paths.iter().map(|p| p.len() as f64).collect(),
                events: Some(paths),
                integral: None,
            })
        }
        Process::Marked { mu, .. } => {
            let theta = scn.integrand.as_ref();
            let out = run_paths(seed, n, |_, rng| {
                let path = simulate_mesugaki(mu, horizon, rng)?;
                let m = theta
                    .map(|th| integrate_compensated(th, mu, &path, horizon, step))
                    .transpose()?;
                Ok((path, m))
            })?;
            let rows = out[..keep]
                .iter()
                .enumerate()
                .flat_map(|(i, (p, _))| jump_path_rows(i, p.events()))
                .collect();
            Ok(Simulated {
                rows,
                terminal: out.iter().map(|(p, _)| p.terminal_value()).collect(),
                integral: theta.map(|_| out.iter().map(|(_, m)| m.unwrap_or(f64::NAN)).collect()),
                events: Some(out.into_iter().map(|(p, _)| p.history.into_events()).collect()),
            })
        }
        Process::Sde { spec, .. } => {
            let paths = run_paths(seed, n, |_, rng| euler_simulate(spec, &scn.grid, rng))?;
            let rows = paths[..keep]
                .iter()
                .enumerate()
                .flat_map(|(i, p)| {
                    p.times.iter().zip(&p.values).map(move |(&time, &value)| PathRow {
                        path_id: i,
                        time,
                        value,
                        mark: None,
                    })
                })
                .collect();
            Ok(Simulated {
                rows,
                terminal: paths.iter().map(|p| p.terminal()).collect(),
                events: None,
                integral: None,
            })
        }
    }
}

/// Writes `paths.csv`, `events.csv` (point processes) and `summary.json`.
pub fn simulate(scn: &Scenario) -> Result<Outcome, CliError> {
    let cfg = &scn.config;
    let sim = simulate_paths(scn)?;
    let mut files = Vec::new();
    if cfg.output.wants(Format::Csv) {
        let mut buf = Vec::new();
        write_paths_csv(
            &mut buf,
            &sim.rows,
            sim.events.is_some() && !matches!(scn.process, Process::Counting(_)),
        )
        .expect("writing to memory");
        files.push(OutputFile {
            name: "paths.csv".into(),
            bytes: buf,
        });
        if let Some(events) = &sim.events {
            let keep = cfg.output.csv_paths.unwrap_or(events.len()).min(events.len());
            let mut buf = Vec::new();
            write_events_csv(&mut buf, &events[..keep]).expect("writing to memory");
            files.push(OutputFile {
                name: "events.csv".into(),
                bytes: buf,
            });
        }
    }
    let poisson_gof = match cfg.process {
        ProcessConfig::Poisson { rate } => {
            let counts: Vec<u64> = sim.terminal.iter().map(|&c| c as u64).collect();
            Some(chi_square_poisson(&counts, rate * cfg.horizon)?)
        }
        _ => None,
    };
    let summary = SimulateSummary {
        command: "simulate",
        config: config_echo(cfg),
        terminal: SampleStats::of(&sim.terminal),
        events: sim
            .events
            .as_ref()
            .map(|ev| SampleStats::of(&ev.iter().map(|p| p.len() as f64).collect::<Vec<_>>())),
        histogram: histogram(&sim.terminal),
        poisson_gof,
        integral: sim.integral.as_ref().map(|m| IntegralStats {
            integrand: cfg.integrand.as_ref().map(|i| i.label()).unwrap_or_default(),
            stats: SampleStats::of(m),
        }),
    };
    let headline = format!(
        "{}: {} paths, mean terminal value {:.6} (se {:.6})",
        cfg.scenario, cfg.paths, summary.terminal.mean, summary.terminal.standard_error
    );
    if cfg.output.wants(Format::Json) {
        files.push(json_file("summary.json", &summary));
    }
    Ok(Outcome {
        files,
        pass: true,
        headline,
    })
}

#[derive(Debug, Serialize)]
struct ConvergeSummary {
    command: &'static str,
    config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    construction: Option<ConvergenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation: Option<SweepReport>,
    pass: bool,
}

/// Coupled-level diagnostics and, with `converge.windows`, the truncation
/// sweep. Writes `convergence.json`.
pub fn converge(scn: &Scenario) -> Result<Outcome, CliError> {
    let cfg = &scn.config;
    let mu = scn
        .process
        .measure()
        .ok_or_else(|| CliError::Usage("converge needs a point-process scenario".into()))?;
    let conv = cfg.converge.clone().unwrap_or_default();
    let levels = match (&conv.levels, cfg.grid_depth) {
        (Some(l), _) => Some(l.clone()),
        (None, Some(k)) => Some((1..=k).collect::<Vec<_>>()),
        (None, None) => None,
    };
    if levels.is_none() && conv.windows.is_none() {
        return Err(crate::config::ConfigError::new(
            "grid_depth",
            "converge needs grid_depth, converge.levels or converge.windows",
        )
        .into());
    }
    let construction = match levels {
        Some(levels) => {
            if levels.len() < 2 {
                let field = if conv.levels.is_some() {
                    "converge.levels"
                } else {
                    "grid_depth"
                };
                return Err(crate::config::ConfigError::new(field, "needs at least 2 levels").into());
            }
            Some(diagnose_convergence(
                &mu,
                &levels,
                cfg.horizon,
                cfg.paths,
                cfg.seed,
                scn.grid.step(),
            )?)
        }
        None => None,
    };
    let truncation = match &conv.windows {
        Some(windows) => {
            let theta = scn.integrand.clone().unwrap_or_else(Integrand::identity);
            Some(truncation_sweep(
                &theta,
                &mu,
                cfg.horizon,
                cfg.paths,
                windows,
                cfg.seed,
                scn.grid.step(),
            )?)
        }
        None => None,
    };
    let pass =
        !construction.as_ref().is_some_and(|c| c.any_violation()) && !truncation.as_ref().is_some_and(|t| t.any_flag());
    let headline = format!(
        "{}: {} pair(s), {} truncation pair(s), {}",
        cfg.scenario,
        construction.as_ref().map_or(0, |c| c.pairs.len()),
        truncation.as_ref().map_or(0, |t| t.pairs.len()),
        if pass { "no bound violations" } else { "bound violated" }
    );
    let summary = ConvergeSummary {
        command: "converge",
        config: config_echo(cfg),
        construction,
        truncation,
        pass,
    };
    Ok(Outcome {
        files: vec![json_file("convergence.json", &summary)],
        pass,
        headline,
    })
}

/// One named pass/fail check with its supporting numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: Value,
}

#[derive(Debug, Serialize)]
struct ItoSummary {
    command: &'static str,
    config: Value,
    checks: Vec<Check>,
    residuals: Vec<ResidualReport>,
    sweeps: Vec<DtSweepReport>,
    pass: bool,
}

/// Residuals of the Itô formula for each configured function, plus the
/// optional step-size sweep for every nonlinear one. Writes `ito.json`.
pub fn ito_check(scn: &Scenario) -> Result<Outcome, CliError> {
    let cfg = &scn.config;
    let ito = cfg.ito.clone().unwrap_or_default();
    let spec = match &scn.process {
        Process::Sde { ito: Some(spec), .. } => spec.clone(),
        Process::Sde { .. } => {
            return Err(CliError::Usage(
                "ito-check needs compensated small jumps and a state-independent jump measure".into(),
            ))
        }
        p => mesugaki::ito::SemimartingaleSpec::new(ito.x0, p.measure().expect("point process")),
    };
    let functions = if scn.functions.is_empty() {
        vec![mesugaki::ito::TestFunction::square()]
    } else {
        scn.functions.clone()
    };
    let mut checks = Vec::new();
    let mut residuals = Vec::new();
    let mut sweeps = Vec::new();
    for f in &functions {
        let probes: [f64; 5] = if f.name == "log" {
            [0.3, 0.4, 1.0, 1.5, 2.5]
        } else {
            [-1.5, -0.3, 0.4, 1.0, 2.5]
        };
        f.check_derivatives(&probes)?;
        let r = residual_ensemble(&spec, f, &scn.grid, cfg.paths, cfg.seed)?;
        if r.pure_jump {
            checks.push(Check {
                name: format!("pure_jump/{}", f.name),
                pass: r.max <= EXACT_TOL,
                detail: serde_json::json!({ "max": r.max, "tolerance": EXACT_TOL }),
            });
        }
        if f.name == "linear" {
            checks.push(Check {
                name: "linear".into(),
                pass: r.max <= LINEAR_TOL,
                detail: serde_json::json!({ "max": r.max, "tolerance": LINEAR_TOL }),
            });
        }
        residuals.push(r);
        // the linear residual is rounding only, so it has nothing to converge
        if let (Some(dts), false) = (&ito.dts, f.name == "linear") {
            let s = dt_sweep(
                &spec,
                f,
                cfg.horizon,
                dts,
                cfg.paths,
                cfg.seed,
                ito.required_per_halving,
            )?;
            checks.push(Check {
                name: format!("dt_sweep/{}", f.name),
                pass: s.pass,
                detail: serde_json::json!({ "per_halving": s.per_halving, "slope": s.slope }),
            });
            sweeps.push(s);
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    let headline = format!(
        "{}: {} check(s), max residual {:e}",
        cfg.scenario,
        checks.len(),
        residuals.iter().map(|r| r.max).fold(0.0, f64::max)
    );
    let summary = ItoSummary {
        command: "ito-check",
        config: config_echo(cfg),
        checks,
        residuals,
        sweeps,
        pass,
    };
    Ok(Outcome {
        files: vec![json_file("ito.json", &summary)],
        pass,
        headline,
    })
}

#[derive(Debug, Serialize)]
struct ValidateSummary {
    command: &'static str,
    config: Value,
    tests: Vec<Check>,
    pass: bool,
}

struct ValidatedPath {
    events: Vec<JumpEvent>,
    /// `N_t − c Λ_t` at the checkpoints.
    martingale: Vec<f64>,
    /// `c Λ` at each event time, then at `T`.
    time_change: Vec<f64>,
    terminal_count: f64,
    terminal_compensator: f64,
    integral: Option<Vec<f64>>,
}

fn validate_path(
    history: &PathHistory,
    ground: &IntensityModel,
    checkpoints: &[f64],
    horizon: f64,
    step: f64,
    scale: f64,
) -> mesugaki::Result<ValidatedPath> {
    let lam = compensator_at(ground, history, checkpoints, step)?;
    let mut times: Vec<f64> = history.events().iter().map(|e| e.time).collect();
    times.push(horizon);
    let tc: Vec<f64> = compensator_at(ground, history, &times, step)?
        .into_iter()
        .map(|l| scale * l)
        .collect();
    Ok(ValidatedPath {
        events: history.events().to_vec(),
        martingale: checkpoints
            .iter()
            .zip(&lam)
            .map(|(&t, l)| history.count_through(t) as f64 - scale * l)
            .collect(),
        terminal_count: history.len() as f64,
        terminal_compensator: *tc.last().expect("horizon appended"),
        time_change: tc,
        integral: None,
    })
}

/// Martingale, random-time-change and mean-identity tests on the ground
/// process, plus the compensated integral when an integrand is set.
/// Writes `diagnostics.json`.
pub fn validate(scn: &Scenario) -> Result<Outcome, CliError> {
    let cfg = &scn.config;
    let v = cfg.validate.clone().unwrap_or_default();
    let (horizon, step, scale) = (cfg.horizon, scn.grid.step(), v.compensator_scale);
    let checkpoints = v
        .checkpoints
        .clone()
        .unwrap_or_else(|| vec![horizon / 4.0, horizon / 2.0, horizon]);
    let paths: Vec<ValidatedPath> = match &scn.process {
        Process::Counting(model) => run_paths(cfg.seed, cfg.paths, |_, rng| {
            let h = PathHistory::from_events(0.0, simulate_counting(model, horizon, rng)?)?;
            validate_path(&h, model, &checkpoints, horizon, step, scale)
        })?,
        Process::Marked { ground, mu } => {
            let theta = scn.integrand.as_ref();
            run_paths(cfg.seed, cfg.paths, |_, rng| {
                let path: MesugakiPath = simulate_mesugaki(mu, horizon, rng)?;
                let mut out = validate_path(&path.history, ground, &checkpoints, horizon, step, scale)?;
                out.integral = theta
                    .map(|th| compensated_at(th, mu, &path, &checkpoints, step))
                    .transpose()?;
                Ok(out)
            })?
        }
        Process::Sde { .. } => {
            return Err(CliError::Usage("validate needs a point-process scenario".into()));
        }
    };

    let mut tests = Vec::new();
    let samples: Vec<Vec<f64>> = paths.iter().map(|p| p.martingale.clone()).collect();
    let m = martingale_test(&checkpoints, &samples)?;
    tests.push(Check {
        name: "martingale".into(),
        pass: m.pass,
        detail: serde_json::to_value(&m).expect("serializable"),
    });

    let events: Vec<Vec<JumpEvent>> = paths.iter().map(|p| p.events.clone()).collect();
    let (ks, residuals) = time_change_residuals(&events, horizon, |i, _| Ok(paths[i].time_change.clone()))?;
    tests.push(Check {
        name: "time_change".into(),
        pass: ks.pass && !ks.inconclusive,
        detail: serde_json::json!({ "ks": ks, "residuals": residuals.len() }),
    });

    let lhs: Vec<f64> = paths.iter().map(|p| p.terminal_count).collect();
    let rhs: Vec<f64> = paths.iter().map(|p| p.terminal_compensator).collect();
    let mi = mean_identity_test(&lhs, &rhs)?;
    tests.push(Check {
        name: "mean_identity".into(),
        pass: mi.pass,
        detail: serde_json::to_value(mi).expect("serializable"),
    });

    if paths.first().is_some_and(|p| p.integral.is_some()) {
        let samples: Vec<Vec<f64>> = paths.iter().map(|p| p.integral.clone().unwrap_or_default()).collect();
        let m = martingale_test(&checkpoints, &samples)?;
        tests.push(Check {
            name: "compensated_integral".into(),
            pass: m.pass,
            detail: serde_json::to_value(&m).expect("serializable"),
        });
    }

    let pass = tests.iter().all(|t| t.pass);
    let headline = format!(
        "{}: {}/{} tests pass",
        cfg.scenario,
        tests.iter().filter(|t| t.pass).count(),
        tests.len()
    );
    let summary = ValidateSummary {
        command: "validate",
        config: config_echo(cfg),
        tests,
        pass,
    };
    Ok(Outcome {
        files: vec![json_file("diagnostics.json", &summary)],
        pass,
        headline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_stats_of_known_sample() {
        let s = SampleStats::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.variance, 5.0 / 3.0);
        assert_eq!((s.min, s.max), (1.0, 4.0));
    }

    #[test]
    fn histogram_only_for_integers() {
        assert_eq!(histogram(&[2.0, 0.0, 2.0]), Some(vec![(0, 1), (2, 2)]));
        assert_eq!(histogram(&[0.5]), None);
    }
}
