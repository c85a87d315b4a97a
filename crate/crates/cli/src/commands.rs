//! One function per subcommand. Each reads its config sections, runs, and
//! writes its CSV (and SVG with `--plot`) into the output directory.

use std::path::{Path, PathBuf};

use coxkit::filtering::{grid_oracle, ks_filter, laplace_filter, LaplaceConfig, LaplaceMethod, LevelFunctional, OracleOptions};
use coxkit::girsanov::{expectation_of_z_test, induction_identity_test, reweighted_law_test, InductionConfig, ReweightedLawConfig};
use coxkit::mc::{map_replicates, replicate_rng};
use coxkit::watanabe::{
    martingale_test, predictable_integral_test, ConditioningEvent, MartingaleTestConfig, PredictableRule,
    SimplePredictableProcess,
};
use coxkit::{psi, sample_cox_sequential, sample_cox_timechange, sample_prior, CheckRow, IntensityPath, PointPattern, PriorSpec, YRule};

use crate::battery::{self, BatterySettings};
use crate::config::{self, check_times, Config, RunSettings};
use crate::output::{num, num_list, range, Csv, Svg};
use crate::CliError;

/// What a subcommand produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub checks: usize,
    pub failures: usize,
}

impl Outcome {
    fn record(&mut self, rows: &[CheckRow]) {
        self.checks += rows.len();
        self.failures += rows.iter().filter(|r| !r.passed()).count();
    }
}

pub struct Context<'a> {
    pub config: &'a Config,
    pub run: RunSettings,
    pub out: &'a Path,
    pub plot: bool,
}

impl Context<'_> {
    fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(0)
    }
}

fn check_csv(header: &[&str; 5], rows: &[CheckRow]) -> Csv {
    let mut csv = Csv::new(header);
    for r in rows {
        csv.row([r.name.clone(), num(r.estimate), num(r.target), num(r.std_error), r.verdict.as_str().to_string()]);
    }
    csv
}

const CHECK_HEADER: [&str; 5] = ["check_name", "estimate", "target", "std_error", "pass"];

fn counting_staircase(pattern: &PointPattern<f64>) -> Vec<(f64, f64)> {
    std::iter::once((0.0, 0.0))
        .chain(pattern.arrivals().iter().enumerate().map(|(i, t)| (*t, (i + 1) as f64)))
        .collect()
}

fn cumulative_curve(path: &IntensityPath<f64>) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = path.breakpoints().iter().map(|b| (*b, path.cumulative(*b).unwrap())).collect();
    pts.push((path.horizon(), path.total()));
    pts
}

fn level_staircase(path: &IntensityPath<f64>) -> Vec<(f64, f64)> {
    path.breakpoints().iter().zip(path.levels()).map(|(b, l)| (*b, *l)).collect()
}

/// `simulate.csv`: `replicate_id,arrivals` (semicolon-joined times).
/// `simulate_paths.csv`: `replicate_id,breakpoints,levels` of the drawn paths.
pub fn simulate(ctx: &Context) -> Result<Outcome, CliError> {
    let prior = config::prior(ctx.config)?;
    let section = ctx.config.section("simulate");
    let sequential = match section.opt_str("sampler")?.unwrap_or("timechange") {
        "timechange" => false,
        "sequential" => true,
        other => return Err(CliError::Config(format!("[simulate] sampler: unknown sampler {other:?}"))),
    };
    ctx.config.reject_unknown()?;
    let draws = map_replicates(ctx.run.replicates, ctx.seed(), |_, rng| {
        let path = sample_prior(&prior, rng).expect("validated prior");
        let pattern = if sequential { sample_cox_sequential(&path, rng) } else { sample_cox_timechange(&path, rng) };
        (path, pattern)
    });
    let mut arrivals = Csv::new(&["replicate_id", "arrivals"]);
    let mut paths = Csv::new(&["replicate_id", "breakpoints", "levels"]);
    for (k, (path, pattern)) in draws.iter().enumerate() {
        arrivals.row([k.to_string(), num_list(pattern.arrivals())]);
        paths.row([k.to_string(), num_list(path.breakpoints()), num_list(path.levels())]);
    }
    let mut outcome = Outcome::default();
    outcome.files.push(arrivals.write(ctx.out, "simulate.csv")?);
    outcome.files.push(paths.write(ctx.out, "simulate_paths.csv")?);
    if ctx.plot {
        let (path, pattern) = &draws[0];
        let top = (pattern.len() as f64).max(path.total());
        let mut svg = Svg::new("N_t and its compensator, replicate 0", (0.0, path.horizon()), (0.0, top));
        svg.staircase("N_t", "black", &counting_staircase(pattern), path.horizon());
        svg.polyline("Lambda(t)", "firebrick", &cumulative_curve(path));
        outcome.files.push(crate::output::write_file(ctx.out, "simulate.svg", &svg.render())?);
    }
    Ok(outcome)
}

/// `densities.csv`: `t,psi_value`, then a footer row `inf,<atom>`.
pub fn densities(ctx: &Context) -> Result<Outcome, CliError> {
    let prior = config::prior(ctx.config)?;
    let s = ctx.config.section("densities");
    let n = s.usize_or("n", 0)?;
    let r = s.f64_or("r", 0.0)?;
    let observed = s.usize_or("observed_count", 0)?;
    let horizon = prior.horizon();
    check_times(&s.field("r"), &[r], 0.0, horizon)?;
    let times = s.times("times", "grid")?.unwrap_or_else(|| (0..=100).map(|i| r + (horizon - r) * i as f64 / 100.0).collect());
    check_times(&s.field("times"), &times, 0.0, f64::INFINITY)?;
    ctx.config.reject_unknown()?;
    // A random prior is resolved by one draw from the run seed.
    let path = match &prior {
        PriorSpec::Fixed(p) => p.clone(),
        other => sample_prior(other, &mut replicate_rng(ctx.seed(), 0))?,
    };
    let kernel = psi(&path, n, r, observed)?;
    let mut csv = Csv::new(&["t", "psi_value"]);
    let values: Vec<(f64, f64)> = times.iter().map(|t| (*t, kernel.eval(*t))).collect();
    for (t, v) in &values {
        csv.row([num(*t), num(*v)]);
    }
    csv.row(["inf".into(), num(kernel.atom())]);
    let mut outcome = Outcome::default();
    outcome.files.push(csv.write(ctx.out, "densities.csv")?);
    if ctx.plot {
        let x = range(times.iter().cloned());
        let y = range(values.iter().map(|v| v.1).chain([0.0]));
        let mut svg = Svg::new(&format!("density of T_{} given N_{r} = {observed}", n + 1), x, y);
        svg.polyline("psi", "steelblue", &values);
        outcome.files.push(crate::output::write_file(ctx.out, "densities.svg", &svg.render())?);
    }
    Ok(outcome)
}

/// `watanabe.csv`: `event,estimate,std_error,pass`.
pub fn watanabe_check(ctx: &Context) -> Result<Outcome, CliError> {
    let prior = config::prior(ctx.config)?;
    let s = ctx.config.section("watanabe");
    let horizon = prior.horizon();
    let r = s.f64_or("r", 0.0)?;
    let t = s.f64_or("t", horizon)?;
    if !(r >= 0.0 && r < t && t <= horizon) {
        return Err(CliError::Config(format!("[watanabe] r, t: need 0 <= r < t <= {horizon}, got r = {r}, t = {t}")));
    }
    let events: Vec<ConditioningEvent> = s
        .opt_str_list("events")?
        .unwrap_or_else(|| vec!["all"])
        .into_iter()
        .map(|e| ConditioningEvent::parse(e).map_err(|err| CliError::Config(format!("[watanabe] events: {err}"))))
        .collect::<Result<_, _>>()?;
    let stop_at = s.opt_usize_list("stop_at")?.unwrap_or_default();
    let grid = s.opt_f64_list("predictable_grid")?;
    let rules: Vec<PredictableRule> = s
        .opt_str_list("predictable_rules")?
        .unwrap_or_else(|| vec!["no_arrival_yet", "count_plus_one", "level_at_cell_start"])
        .into_iter()
        .map(|p| PredictableRule::parse(p).map_err(|err| CliError::Config(format!("[watanabe] predictable_rules: {err}"))))
        .collect::<Result<_, _>>()?;
    ctx.config.reject_unknown()?;

    let cfg = MartingaleTestConfig { r, t, replicates: ctx.run.replicates, seed: ctx.seed() };
    let mut rows = martingale_test(&prior, &events, &stop_at, cfg)?.rows;
    if let Some(grid) = grid {
        for (i, rule) in rules.into_iter().enumerate() {
            let label = rule_name(&rule);
            let phi = SimplePredictableProcess::new(grid.clone(), rule)
                .map_err(|e| CliError::Config(format!("[watanabe] predictable_grid: {e}")))?;
            let rep = predictable_integral_test(&prior, &phi, ctx.run.replicates, coxkit::mc::derive_seed(ctx.seed(), 1 + i as u64))?;
            rows.push(CheckRow { name: format!("predictable[{label}]"), ..rep.row });
        }
    }
    let mut csv = Csv::new(&["event", "estimate", "std_error", "pass"]);
    for r in &rows {
        csv.row([r.name.clone(), num(r.estimate), num(r.std_error), r.verdict.as_str().into()]);
    }
    let mut outcome = Outcome::default();
    outcome.record(&rows);
    outcome.files.push(csv.write(ctx.out, "watanabe.csv")?);
    Ok(outcome)
}

fn rule_name(rule: &PredictableRule) -> String {
    match rule {
        PredictableRule::Constant(c) => format!("constant:{c}"),
        PredictableRule::NoArrivalYet => "no_arrival_yet".into(),
        PredictableRule::CountPlusOne => "count_plus_one".into(),
        PredictableRule::LevelAtCellStart => "level_at_cell_start".into(),
        PredictableRule::Custom(_) => "custom".into(),
    }
}

/// `girsanov.csv`: `check_name,estimate,target,std_error,pass`.
pub fn girsanov_check(ctx: &Context) -> Result<Outcome, CliError> {
    let prior = config::prior(ctx.config)?;
    let horizon = prior.horizon();
    let s = ctx.config.section("girsanov");
    let rule_strings = s.opt_str_list("y_rules")?.unwrap_or_else(|| vec!["constant:2"]);
    let rules: Vec<(String, YRule)> = rule_strings
        .iter()
        .map(|r| {
            YRule::parse(r, horizon)
                .and_then(|rule| rule.validate_for(&prior).map(|_| rule))
                .map(|rule| (r.to_string(), rule))
                .map_err(|e| CliError::Config(format!("[girsanov] y_rules: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let times = s.opt_f64_list("times")?.unwrap_or_else(|| vec![horizon]);
    check_times(&s.field("times"), &times, 0.0, horizon)?;
    let intervals = s.opt_pair_list("intervals")?.unwrap_or_default();
    if let Some((a, b)) = intervals.iter().find(|(a, b)| !(*a >= 0.0 && a < b && *b <= horizon)) {
        return Err(CliError::Config(format!("[girsanov] intervals: ({a}, {b}] not inside [0, {horizon}]")));
    }
    let n_max = s.usize_or("n_max", 8)?;
    let induction = s.opt_pair_list("induction")?.unwrap_or_default();
    let induction_t = s.f64_or("induction_t", horizon)?;
    check_times(&s.field("induction_t"), &[induction_t], 0.0, horizon)?;
    let outer = s.usize_or("induction_outer", (ctx.run.replicates / 25).max(1))?;
    let inner = s.usize_or("induction_inner", 32)?;
    let mut pairs = Vec::new();
    for (n, j) in &induction {
        if n.fract() != 0.0 || j.fract() != 0.0 || *n < 0.0 || *j < 0.0 || j > n || *n > 5.0 {
            return Err(CliError::Config(format!("[girsanov] induction: need integers 0 <= j <= n <= 5, got [{n}, {j}]")));
        }
        pairs.push((*n as usize, *j as usize));
    }
    ctx.config.reject_unknown()?;

    let mut rows = Vec::new();
    let mut salt = 0u64;
    let mut next_seed = || {
        salt += 1;
        coxkit::mc::derive_seed(ctx.seed(), salt)
    };
    for (label, rule) in &rules {
        for t in &times {
            let rep = expectation_of_z_test(&prior, rule, *t, ctx.run.replicates, next_seed())?;
            rows.push(CheckRow { name: format!("{label}/E[Z_{t}]"), ..rep.row });
        }
        if !intervals.is_empty() {
            let cfg = ReweightedLawConfig { n_max, replicates: ctx.run.replicates, seed: next_seed(), ..Default::default() };
            let rep = reweighted_law_test(&prior, rule, &intervals, cfg)?;
            rows.extend(rep.rows.into_iter().map(|r| CheckRow { name: format!("{label}/law{}", r.name), ..r }));
        }
        for (n, j) in &pairs {
            let cfg = InductionConfig { t: induction_t, n: *n, j: *j, outer, inner, seed: next_seed() };
            let rep = induction_identity_test(&prior, rule, cfg)?;
            rows.push(CheckRow { name: format!("{label}/{}", rep.row.name), ..rep.row });
        }
    }
    let mut outcome = Outcome::default();
    outcome.record(&rows);
    outcome.files.push(check_csv(&CHECK_HEADER, &rows).write(ctx.out, "girsanov.csv")?);
    Ok(outcome)
}

/// Reads one replicate of a `simulate.csv`.
fn read_simulated(path: &Path, replicate: usize, horizon: f64) -> Result<PointPattern<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("[observation] simulate_csv: cannot read {}: {e}", path.display())))?;
    let row = read_row(&text, replicate, "arrivals", path)?;
    let arrivals = parse_list(&row[1], path)?;
    PointPattern::new(arrivals, horizon).map_err(|e| CliError::Config(format!("[observation] simulate_csv: {e}")))
}

fn read_row(text: &str, replicate: usize, column: &str, path: &Path) -> Result<Vec<String>, CliError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.split(',').any(|h| h == column) {
        return Err(CliError::Config(format!("{}: missing column {column}", path.display())));
    }
    lines
        .map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>())
        .find(|cells| cells.first().and_then(|c| c.parse::<usize>().ok()) == Some(replicate))
        .ok_or_else(|| CliError::Config(format!("{}: no replicate {replicate}", path.display())))
}

fn parse_list(cell: &str, path: &Path) -> Result<Vec<f64>, CliError> {
    if cell.is_empty() {
        return Ok(Vec::new());
    }
    cell.split(';')
        .map(|x| x.parse::<f64>().map_err(|_| CliError::Config(format!("{}: bad number {x:?}", path.display()))))
        .collect()
}

fn read_true_path(path: &Path, replicate: usize, horizon: f64) -> Result<IntensityPath<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("[observation] paths_csv: cannot read {}: {e}", path.display())))?;
    let row = read_row(&text, replicate, "levels", path)?;
    if row.len() != 3 {
        return Err(CliError::Config(format!("{}: malformed row", path.display())));
    }
    IntensityPath::new(parse_list(&row[1], path)?, parse_list(&row[2], path)?, horizon)
        .map_err(|e| CliError::Config(format!("[observation] paths_csv: {e}")))
}

/// `filter.csv`: `t,estimate,std_error,ess,oracle_value,pass`; the last two
/// are empty when no oracle applies.
pub fn filter(ctx: &Context) -> Result<Outcome, CliError> {
    let prior = config::prior(ctx.config)?;
    let horizon = prior.horizon();
    let obs = ctx.config.section("observation");
    let inline = obs.opt_f64_list("arrivals")?;
    let simulated = obs.opt_str("simulate_csv")?;
    let replicate = obs.usize_or("replicate", 0)?;
    let paths_csv = obs.opt_str("paths_csv")?;
    let jump_times = obs.opt_f64_list("jump_times")?;
    let (observed, truth) = match (inline, simulated) {
        (Some(a), None) => (
            PointPattern::new(a, horizon).map_err(|e| CliError::Config(format!("[observation] arrivals: {e}")))?,
            None,
        ),
        (None, Some(file)) => {
            let file = PathBuf::from(file);
            let observed = read_simulated(&file, replicate, horizon)?;
            let sibling = file.with_file_name("simulate_paths.csv");
            let truth = match paths_csv {
                Some(p) => Some(read_true_path(Path::new(p), replicate, horizon)?),
                None if sibling.exists() => Some(read_true_path(&sibling, replicate, horizon)?),
                None => None,
            };
            (observed, truth)
        }
        _ => return Err(CliError::Config("[observation]: give exactly one of arrivals or simulate_csv".into())),
    };

    let s = ctx.config.section("filter");
    let method = s.opt_str("method")?.unwrap_or("ks");
    let times = s.times("times", "grid")?.unwrap_or_else(|| vec![horizon]);
    check_times(&s.field("times"), &times, 0.0, horizon)?;
    let want_oracle = s.opt_bool("oracle")?.unwrap_or(true);
    let estimates: Vec<(f64, coxkit::FilterEstimate, Option<f64>)> = match method {
        "ks" => {
            let f = LevelFunctional::parse(s.opt_str("functional")?.unwrap_or("identity"))
                .map_err(|e| CliError::Config(format!("[filter] functional: {e}")))?;
            ctx.config.reject_unknown()?;
            if jump_times.is_some() {
                return Err(CliError::Config("[observation] jump_times: only used with method = \"laplace\"".into()));
            }
            times
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let est = ks_filter(&prior, &observed, &f, *t, ctx.run.replicates, coxkit::mc::derive_seed(ctx.seed(), i as u64))?;
                    let oracle = if want_oracle { Some(grid_oracle(&prior, &observed, &f, *t, OracleOptions::default())?) } else { None };
                    Ok((*t, est, oracle))
                })
                .collect::<Result<_, CliError>>()?
        }
        "laplace" => {
            let alpha = s.f64("alpha")?;
            let laplace_method = match s.opt_str("laplace_method")?.unwrap_or("auto") {
                "auto" => LaplaceMethod::Auto,
                "monte_carlo" => LaplaceMethod::MonteCarlo,
                "enumerate" => LaplaceMethod::Enumerate,
                other => return Err(CliError::Config(format!("[filter] laplace_method: unknown method {other:?}"))),
            };
            ctx.config.reject_unknown()?;
            let PriorSpec::CompoundPoisson { spec, .. } = &prior else {
                return Err(CliError::Config("[filter] method: laplace needs a compound_poisson prior".into()));
            };
            let jumps = jump_times.ok_or_else(|| CliError::Config("[observation] jump_times: missing".into()))?;
            times
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let cfg = LaplaceConfig {
                        alpha,
                        t: *t,
                        method: laplace_method,
                        replicates: ctx.run.replicates,
                        seed: coxkit::mc::derive_seed(ctx.seed(), i as u64),
                    };
                    let est = laplace_filter(spec, horizon, &observed, &jumps, cfg)?;
                    let m = jumps.iter().filter(|s| **s <= *t).count();
                    let enumerable = spec.jump_law.atoms().is_some() && m <= coxkit::filtering::MAX_ENUMERATED_JUMPS;
                    let oracle = if want_oracle && enumerable {
                        let exact = LaplaceConfig { method: LaplaceMethod::Enumerate, ..cfg };
                        Some(laplace_filter(spec, horizon, &observed, &jumps, exact)?.value)
                    } else {
                        None
                    };
                    Ok((*t, est, oracle))
                })
                .collect::<Result<_, CliError>>()?
        }
        other => return Err(CliError::Config(format!("[filter] method: unknown method {other:?}"))),
    };

    let mut csv = Csv::new(&["t", "estimate", "std_error", "ess", "oracle_value", "pass"]);
    let mut rows = Vec::new();
    for (t, est, oracle) in &estimates {
        let (oracle_cell, pass_cell) = match oracle {
            Some(o) => {
                let row = CheckRow::banded(format!("t={t}"), est.value, *o, est.std_error);
                let verdict = row.verdict.as_str().to_string();
                rows.push(row);
                (num(*o), verdict)
            }
            None => (String::new(), String::new()),
        };
        csv.row([num(*t), num(est.value), num(est.std_error), num(est.effective_sample_size), oracle_cell, pass_cell]);
    }
    let mut outcome = Outcome::default();
    outcome.record(&rows);
    outcome.files.push(csv.write(ctx.out, "filter.csv")?);
    if ctx.plot {
        let curve: Vec<(f64, f64)> = estimates.iter().map(|(t, e, _)| (*t, e.value)).collect();
        let mut ys: Vec<f64> = curve.iter().map(|p| p.1).collect();
        if let Some(p) = &truth {
            ys.extend(p.levels().iter().cloned());
        }
        let mut svg = Svg::new("filter estimate", (0.0, horizon), range(ys.into_iter().chain([0.0])));
        svg.polyline("estimate", "steelblue", &curve);
        if let Some(p) = &truth {
            svg.staircase("true X_t", "black", &level_staircase(p), horizon);
        }
        outcome.files.push(crate::output::write_file(ctx.out, "filter.svg", &svg.render())?);
    }
    Ok(outcome)
}

/// `verify_all.csv`: `check_name,estimate,target,std_error,pass` for the
/// whole built-in battery.
pub fn verify_all(ctx: &Context) -> Result<Outcome, CliError> {
    let s = ctx.config.section("battery");
    let probes = s.usize_or("probes", 10_000)?;
    ctx.config.reject_unknown()?;
    let seed = ctx
        .run
        .seed
        .ok_or_else(|| CliError::Config("seed: verify-all needs --seed or [run] seed".into()))?;
    let settings = BatterySettings { seed, replicates: ctx.run.replicates, probes: probes.max(1) };
    let rows = battery::run_all(&settings)?;
    let mut outcome = Outcome::default();
    outcome.record(&rows);
    outcome.files.push(check_csv(&CHECK_HEADER, &rows).write(ctx.out, "verify_all.csv")?);
    for r in rows.iter().filter(|r| !r.passed()) {
        eprintln!("FAIL {}: estimate {} target {} se {}", r.name, num(r.estimate), num(r.target), num(r.std_error));
    }
    Ok(outcome)
}
