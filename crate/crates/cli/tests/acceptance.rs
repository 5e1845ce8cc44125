//! Acceptance run: every criterion at full size, one line each.
//!
//! Scenario-backed criteria go through the same entry point as the
//! binary and read their numbers back from the emitted JSON; the rest
//! call the library directly. Oracles are computed here, independently of
//! the code under test.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::Value;

use mesugaki::construction::{simulate_coupled, simulate_level};
use mesugaki::diagnostics::ks_two_sample;
use mesugaki::ensemble::run_paths;
use mesugaki::ito::{EXACT_TOL, LINEAR_TOL};
use mesugaki::marks::MarkDistribution;
use mesugaki::point_process::IntensityModel;
use mesugaki::rng::RngStream;
use mesugaki::wakarase::{refine_grid, MarkGrid, WakaraseMeasure};
use mesugaki_cli::{run_scenario, Command, Outcome, ScenarioConfig};

const THREADS: usize = 4;

struct Run {
    name: &'static str,
    command: Command,
    config: ScenarioConfig,
    outcome: Outcome,
    elapsed: Duration,
}

impl Run {
    fn json(&self) -> Value {
        let file = match self.command {
            Command::Simulate => "summary.json",
            Command::Converge => "convergence.json",
            Command::ItoCheck => "ito.json",
            Command::Validate => "diagnostics.json",
        };
        self.outcome.json(file).expect("command wrote its JSON")
    }
}

fn scenario(name: &'static str, command: Command) -> Run {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.toml"));
    let config = ScenarioConfig::from_file(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    let start = Instant::now();
    let outcome = run_scenario(command, &config, Some(THREADS)).unwrap_or_else(|e| panic!("{name}: {e}"));
    Run {
        name,
        command,
        config,
        outcome,
        elapsed: start.elapsed(),
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---- oracles ----

/// `ln Γ(x)` by the Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let t = x + 7.5;
    let s: f64 = C[0]
        + C[1..]
            .iter()
            .enumerate()
            .map(|(i, c)| c / (x + i as f64 + 1.0))
            .sum::<f64>();
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`: series below `a + 1`,
/// Lentz continued fraction above.
fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let prefactor = (-x + a * x.ln() - ln_gamma(a)).exp();
    if x < a + 1.0 {
        let (mut term, mut sum, mut ap) = (1.0 / a, 1.0 / a, a);
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        1.0 - sum * prefactor
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            d = if d.abs() < tiny { tiny } else { d };
            c = b + an / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        prefactor * h
    }
}

/// Pearson chi-square against Poisson(`mean`) from a histogram: single
/// cells while the expected count is at least 5, then one tail cell.
fn poisson_chi_square(hist: &[(i64, u64)], mean: f64) -> (f64, usize, f64) {
    let n: u64 = hist.iter().map(|h| h.1).sum();
    let observed = |k: i64| hist.iter().find(|h| h.0 == k).map_or(0, |h| h.1) as f64;
    let mut pmf = (-mean).exp();
    let (mut stat, mut cells, mut k, mut used_p, mut used_obs) = (0.0, 0, 0i64, 0.0, 0.0);
    while n as f64 * pmf >= 5.0 {
        let e = n as f64 * pmf;
        stat += (observed(k) - e).powi(2) / e;
        used_p += pmf;
        used_obs += observed(k);
        cells += 1;
        k += 1;
        pmf *= mean / k as f64;
    }
    let e_tail = n as f64 * (1.0 - used_p);
    stat += (n as f64 - used_obs - e_tail).powi(2) / e_tail;
    cells += 1;
    let dof = cells - 1;
    (stat, dof, gamma_q(dof as f64 / 2.0, stat / 2.0))
}

/// `E N_T` of the exponential Hawkes process: `g' = β(λ0 − g) + α g`,
/// `g(0) = λ0`, integrated together with `∫g` by RK4.
fn hawkes_mean(base: f64, alpha: f64, beta: f64, horizon: f64) -> f64 {
    let rhs = |g: f64| beta * (base - g) + alpha * g;
    let steps = 50_000;
    let h = horizon / steps as f64;
    let (mut g, mut acc) = (base, 0.0);
    for _ in 0..steps {
        let k1 = rhs(g);
        let k2 = rhs(g + 0.5 * h * k1);
        let k3 = rhs(g + 0.5 * h * k2);
        let k4 = rhs(g + h * k3);
        acc += h / 6.0 * (g + 2.0 * (g + 0.5 * h * k1) + 2.0 * (g + 0.5 * h * k2) + (g + h * k3));
        g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    acc
}

/// `∫ z² (μ − μ_n)` for unit-rate uniform marks on (0, 1): each grid cell
/// below 1 carries its mass at its left end.
fn uniform_deficit(level: usize) -> f64 {
    let pts = MarkGrid::at_level(level).unwrap().points().to_vec();
    let kept: f64 = pts
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let hi = pts.get(k + 1).copied().unwrap_or(f64::INFINITY).min(1.0);
            if hi > z {
                z * z * (hi - z)
            } else {
                0.0
            }
        })
        .sum();
    1.0 / 3.0 - kept
}

/// Transient law of the birth–death chain on `{0, …, cap}` by
/// uniformization.
fn birth_death_law(birth: f64, death: f64, horizon: f64, cap: usize) -> Vec<f64> {
    let lam = birth + death;
    let mut p = vec![0.0; cap + 1];
    p[0] = 1.0;
    let mut out = vec![0.0; cap + 1];
    let mut w = (-lam * horizon).exp();
    for k in 0..500 {
        for (o, pi) in out.iter_mut().zip(&p) {
            *o += w * pi;
        }
        let mut q = vec![0.0; cap + 1];
        for (i, &pi) in p.iter().enumerate() {
            let up = if i < cap { birth } else { 0.0 };
            let down = if i > 0 { death } else { 0.0 };
            q[i] += pi * (1.0 - (up + down) / lam);
            if i < cap {
                q[i + 1] += pi * up / lam;
            }
            if i > 0 {
                q[i - 1] += pi * down / lam;
            }
        }
        p = q;
        w *= lam * horizon / (k + 1) as f64;
    }
    out
}

fn gillespie(birth: f64, death: f64, horizon: f64, rng: &mut RngStream) -> f64 {
    let (mut t, mut x) = (0.0, 0.0);
    loop {
        let total = birth + if x > 0.0 { death } else { 0.0 };
        t += rng.exp1() / total;
        if t >= horizon {
            return x;
        }
        x += if rng.uniform() * total < birth { 1.0 } else { -1.0 };
    }
}

// ---- criteria ----

fn poisson_sanity(run: &Run) -> Verdict {
    let s = run.json();
    let mean = f(&s["terminal"]["mean"]);
    let tol = 4.0 * (2.0f64 / 1e5).sqrt();
    let hist: Vec<(i64, u64)> = s["histogram"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| (h[0].as_i64().unwrap(), h[1].as_u64().unwrap()))
        .collect();
    let (stat, dof, p) = poisson_chi_square(&hist, 2.0);
    let lib_p = f(&s["poisson_gof"]["p_value"]);
    let fast = run.elapsed < Duration::from_secs(10);
    verdict(
        (mean - 2.0).abs() <= tol && p > 0.01 && lib_p > 0.01 && fast,
        format!(
            "mean {mean:.5} (|err| {:.5} <= {tol:.5}), chi2 {stat:.3} on {dof} dof p = {p:.4} (library p = {lib_p:.4}), {:.2?}",
            (mean - 2.0).abs(),
            run.elapsed
        ),
    )
}

fn hawkes_mean_oracle(run: &Run) -> Verdict {
    let s = run.json();
    let oracle = hawkes_mean(1.0, 1.0, 2.0, 5.0);
    let closed = 2.0 * 5.0 - (1.0 - (-5.0f64).exp());
    let (mean, se) = (f(&s["terminal"]["mean"]), f(&s["terminal"]["standard_error"]));
    let fast = run.elapsed < Duration::from_secs(60);
    verdict(
        (oracle - closed).abs() < 1e-9 && (oracle - 9.0067).abs() < 1e-4 && (mean - oracle).abs() <= 4.0 * se && fast,
        format!(
            "mean {mean:.4} vs oracle {oracle:.4} (z = {:.2}), {:.2?}",
            (mean - oracle) / se,
            run.elapsed
        ),
    )
}

fn validate_test<'a>(v: &'a Value, name: &str) -> &'a Value {
    v["tests"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["name"] == name)
        .unwrap()
}

fn martingale_suite(runs: &[&Run]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let v = run.json();
        let t = validate_test(&v, "martingale");
        let cps = t["detail"]["checkpoints"].as_array().unwrap();
        let horizon = run.config.horizon;
        let times: Vec<f64> = cps.iter().map(|c| f(&c["time"])).collect();
        let zmax = cps
            .iter()
            .map(|c| (f(&c["mean"]) / f(&c["standard_error"])).abs())
            .fold(0.0, f64::max);
        let n = t["detail"]["sample_count"].as_u64().unwrap();
        pass &= zmax <= 4.0
            && t["pass"] == true
            && times == [horizon / 4.0, horizon / 2.0, horizon]
            && (10_000..=100_000).contains(&n);
        parts.push(format!("{} max|z| {zmax:.2} ({n} paths)", run.config.process.kind()));
    }
    verdict(pass, parts.join(", "))
}

fn time_change_suite(runs: &[&Run]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let v = run.json();
        let t = validate_test(&v, "time_change");
        let count = t["detail"]["residuals"].as_u64().unwrap();
        let p = f(&t["detail"]["ks"]["p_value"]);
        pass &= count >= 10_000 && p > 0.01 && t["pass"] == true;
        parts.push(format!("{} {count} residuals p = {p:.3}", run.config.process.kind()));
    }
    verdict(pass, parts.join(", "))
}

fn grid_recursion() -> Verdict {
    let z2 = refine_grid(&MarkGrid::level_one());
    let z3 = refine_grid(&z2);
    let mut sizes = true;
    let mut g = MarkGrid::level_one();
    for n in 1..=12 {
        sizes &= g.len() == (1 << n) - 1;
        g = refine_grid(&g);
    }
    verdict(
        z2.points() == [0.5, 1.0, 2.0] && z3.points() == [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0] && sizes,
        format!(
            "Z_2 = {:?}, Z_3 = {:?}, |Z_n| = 2^n - 1 for n <= 12: {sizes}",
            z2.points(),
            z3.points()
        ),
    )
}

fn step_one_bound(run: &Run) -> Verdict {
    let v = run.json();
    let pairs = v["construction"]["pairs"].as_array().unwrap();
    let mut pass = run.elapsed < Duration::from_secs(120) && run.config.paths == 10_000;
    let mut parts = Vec::new();
    let mut seen = Vec::new();
    for p in pairs {
        let (n, m) = (p["n"].as_u64().unwrap() as usize, p["m"].as_u64().unwrap() as usize);
        seen.push((n, m));
        let oracle = uniform_deficit(n);
        let (emp, se, bound) = (f(&p["empirical_l2"]), f(&p["standard_error"]), f(&p["bound"]));
        pass &= (bound - oracle).abs() < 1e-9 && emp <= bound + 4.0 * se;
        parts.push(format!("({n},{m}) {emp:.5} +- {se:.5} <= {oracle:.5}"));
    }
    pass &= seen == [(2, 4), (4, 6)];
    parts.push(format!("{:.2?}", run.elapsed));
    verdict(pass, parts.join(", "))
}

fn coupling_invariants() -> Verdict {
    let measures = [
        WakaraseMeasure::density(
            IntensityModel::homogeneous(1.0).unwrap(),
            MarkDistribution::uniform(0.0, 1.0).unwrap(),
        ),
        WakaraseMeasure::density(
            IntensityModel::homogeneous(2.0).unwrap(),
            MarkDistribution::exponential(1.0).unwrap(),
        ),
    ];
    let mut per_path = true;
    let mut families = 0;
    for (k, mu) in measures.iter().enumerate() {
        let ok = run_paths(500 + k as u64, 1_000, |_, rng| {
            let fam = simulate_coupled(mu, 6, 1.0, rng)?;
            let mut ok = fam.jumps_monotone();
            for n in 1..6 {
                for m in n + 1..=6 {
                    ok &= fam.difference_nondecreasing(n, m);
                }
            }
            Ok(ok)
        })
        .unwrap();
        families += ok.len();
        per_path &= ok.iter().all(|&b| b);
    }
    let mu = Arc::new(measures[1].clone());
    let grid = MarkGrid::at_level(3).unwrap();
    let coupled = run_paths(510, 10_000, |_, rng| {
        Ok(simulate_coupled(&mu, 3, 1.0, rng)?.level(3).terminal_value())
    })
    .unwrap();
    let direct = run_paths(511, 10_000, |_, rng| {
        Ok(simulate_level(&mu, &grid, 1.0, rng)?.terminal_value())
    })
    .unwrap();
    let ks = ks_two_sample(&coupled, &direct);
    verdict(
        per_path && ks.p_value > 0.01,
        format!(
            "{families} families monotone: {per_path}, level-3 marginal KS p = {:.3}",
            ks.p_value
        ),
    )
}

fn isometry(run: &Run) -> Verdict {
    let s = run.json();
    let i = &s["integral"];
    let (m, se, var, vse) = (
        f(&i["mean"]),
        f(&i["standard_error"]),
        f(&i["variance"]),
        f(&i["variance_se"]),
    );
    // λ T ∫ z² dz on (0, 1]
    let oracle = 2.0 / 3.0;
    verdict(
        m.abs() <= 4.0 * se && (var - oracle).abs() <= 4.0 * vse && run.config.paths == 100_000,
        format!("mean {m:.5} (se {se:.5}), variance {var:.5} vs {oracle:.5} (se {vse:.5})"),
    )
}

fn truncation(run: &Run) -> Verdict {
    let v = run.json();
    let pairs = v["truncation"]["pairs"].as_array().unwrap();
    let mut pass = true;
    let mut ns = Vec::new();
    let mut parts = Vec::new();
    for p in pairs {
        let n = f(&p["n"]);
        // ∫_0^{1/n} z² z^{-1/2} dz
        let oracle = 0.4 * n.powf(-2.5);
        let (emp, se, bound) = (f(&p["empirical_l2_diff"]), f(&p["se"]), f(&p["tail_bound"]));
        pass &= (bound - oracle).abs() < 1e-8 && emp <= bound + 4.0 * se;
        ns.push(n);
        parts.push(format!("n={n} {emp:.2e} <= {oracle:.2e}"));
    }
    pass &= ns == [2.0, 4.0, 8.0];
    verdict(pass, parts.join(", "))
}

fn ito_exact(pure: &[&Run], all: &[&Run]) -> Verdict {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut paths = 0;
    for run in pure {
        let v = run.json();
        for r in v["residuals"].as_array().unwrap() {
            pass &= r["pure_jump"] == true;
            for p in r["paths"].as_array().unwrap() {
                let res = f(&p["residual"]);
                worst = worst.max(res);
                pass &= res <= EXACT_TOL;
                paths += 1;
            }
        }
        pass &= run.config.paths == 1_000;
    }
    let mut linear_worst: f64 = 0.0;
    for run in all {
        let v = run.json();
        let lin = v["residuals"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["function"] == "linear");
        match lin {
            Some(r) => {
                linear_worst = linear_worst.max(f(&r["max"]));
                pass &= f(&r["max"]) <= LINEAR_TOL;
            }
            None => pass = false,
        }
    }
    verdict(
        pass,
        format!(
            "{paths} path residuals, max {worst:.2e} <= {EXACT_TOL:e}; linear f on {} suites max {linear_worst:.2e} <= {LINEAR_TOL:e}",
            all.len()
        ),
    )
}

fn ito_sweep(run: &Run) -> Verdict {
    let v = run.json();
    let s = &v["sweeps"][0];
    let per: Vec<f64> = s["per_halving"].as_array().unwrap().iter().map(f).collect();
    let dts: Vec<f64> = s["levels"].as_array().unwrap().iter().map(|l| f(&l["dt"])).collect();
    verdict(
        per.len() == 2 && per.iter().all(|&r| r >= 1.3) && dts == [1e-2, 1e-3, 1e-4],
        format!(
            "{} median factor per halving {:?}, slope {:.3}",
            s["function"].as_str().unwrap_or("?"),
            per.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            f(&s["slope"])
        ),
    )
}

fn birth_death(run: &Run) -> Verdict {
    let s = run.json();
    let mut xs = Vec::new();
    for h in s["histogram"].as_array().unwrap() {
        xs.extend(std::iter::repeat_n(
            h[0].as_f64().unwrap(),
            h[1].as_u64().unwrap() as usize,
        ));
    }
    let law = birth_death_law(1.0, 1.0, 1.0, 60);
    let oracle: f64 = law.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let (mean, se) = (f(&s["terminal"]["mean"]), f(&s["terminal"]["standard_error"]));
    let ys = run_paths(520, 10_000, |_, rng| Ok(gillespie(1.0, 1.0, 1.0, rng))).unwrap();
    let ks = ks_two_sample(&xs, &ys);
    verdict(
        xs.len() == 10_000
            && (law.iter().sum::<f64>() - 1.0).abs() < 1e-12
            && (mean - oracle).abs() <= 4.0 * se
            && ks.p_value > 0.01,
        format!(
            "mean {mean:.4} vs oracle {oracle:.4} (z = {:.2}), KS vs Gillespie p = {:.3}",
            (mean - oracle) / se,
            ks.p_value
        ),
    )
}

fn determinism(runs: &[&Run]) -> Verdict {
    let mut pass = true;
    let mut differing = Vec::new();
    let mut files = 0;
    for run in runs {
        let again = run_scenario(run.command, &run.config, Some(1)).expect("rerun");
        let same = again.files == run.outcome.files;
        files += run.outcome.files.len();
        if !same {
            differing.push(run.name);
        }
        pass &= same && !run.outcome.files.is_empty();
    }
    verdict(
        pass,
        format!(
            "{} scenarios, {files} CSV/JSON files identical with {THREADS} vs 1 threads{}",
            runs.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!("; differing: {differing:?}")
            }
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let poisson = scenario("poisson_sanity", Command::Simulate);
    let hawkes = scenario("hawkes_mean", Command::Simulate);
    let v_poisson = scenario("validate_poisson", Command::Validate);
    let v_cox = scenario("validate_cox", Command::Validate);
    let v_hawkes = scenario("validate_hawkes", Command::Validate);
    let step_one = scenario("step_one_bound", Command::Converge);
    let iso = scenario("isometry", Command::Simulate);
    let trunc = scenario("truncation", Command::Converge);
    let ito_sym = scenario("ito_symmetric", Command::ItoCheck);
    let ito_hawkes = scenario("ito_hawkes", Command::ItoCheck);
    let ito_small = scenario("ito_small_marks", Command::ItoCheck);
    let ito_jd = scenario("ito_jump_diffusion", Command::ItoCheck);
    let ito_geo = scenario("ito_geometric", Command::ItoCheck);
    let bd = scenario("birth_death", Command::Simulate);

    let validations = [&v_poisson, &v_cox, &v_hawkes];
    let all = [
        &poisson,
        &hawkes,
        &v_poisson,
        &v_cox,
        &v_hawkes,
        &step_one,
        &iso,
        &trunc,
        &ito_sym,
        &ito_hawkes,
        &ito_small,
        &ito_jd,
        &ito_geo,
        &bd,
    ];
    let results = [
        ("Poisson sanity", poisson_sanity(&poisson)),
        ("Hawkes mean oracle", hawkes_mean_oracle(&hawkes)),
        ("compensator martingale suite", martingale_suite(&validations)),
        ("random-time-change residuals", time_change_suite(&validations)),
        ("grid recursion", grid_recursion()),
        ("step-1 L2 bound", step_one_bound(&step_one)),
        ("coupling invariants", coupling_invariants()),
        ("compensated-integral isometry", isometry(&iso)),
        ("truncation tail bound", truncation(&trunc)),
        (
            "Ito pure-jump exactness",
            ito_exact(
                &[&ito_sym, &ito_hawkes, &ito_small],
                &[&ito_sym, &ito_hawkes, &ito_small, &ito_jd, &ito_geo],
            ),
        ),
        ("Ito mixed-case convergence", ito_sweep(&ito_geo)),
        ("discrete-state CTMC equivalence", birth_death(&bd)),
        ("determinism", determinism(&all)),
    ];
    let mut failed = 0;
    for (k, (name, v)) in results.iter().enumerate() {
        println!(
            "criterion {:>2} {} {name}: {}",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {}/{} criteria pass in {:.1?}",
        results.len() - failed,
        results.len(),
        start.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
