//! The built-in verification battery run by `verify-all`.
//!
//! Each group returns report rows. Monte Carlo rows pass within four
//! standard errors; exact rows carry a fixed tolerance and a zero standard
//! error; distributional rows report the p-value as the estimate and the
//! significance level as the target. Every group draws from its own seed
//! derived from the master seed, so groups can be run alone with identical
//! results.

use coxkit::filtering::{
    fn_intensity, grid_oracle, ks_filter, laplace_filter, LaplaceConfig, LaplaceMethod, LevelFunctional,
    OracleOptions,
};
use coxkit::girsanov::{
    expectation_of_z_test, induction_identity_test, reweighted_law_test, InductionConfig, ReweightedLawConfig,
};
use coxkit::intensity::{CompoundPoissonIntensitySpec, JumpLaw, LevelLaw};
use coxkit::mc::{derive_seed, map_replicates, replicate_rng};
use coxkit::stats::{chi_square_gof, chi_square_homogeneity, TestOutcome, SIGNIFICANCE};
use coxkit::watanabe::{
    martingale_test, predictable_integral_test, ConditioningEvent, MartingaleTestConfig, PredictableRule,
    SimplePredictableProcess,
};
use coxkit::{
    chou_meyer_intensity, increment_pmf, psi, sample_cox_sequential, sample_cox_timechange, sample_prior, CheckRow,
    IntensityPath, PointPattern, PriorSpec, Result, Verdict, YRule,
};
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct BatterySettings {
    pub seed: u64,
    /// Monte Carlo replicates per check.
    pub replicates: usize,
    /// Random probes for the exact identities.
    pub probes: usize,
}

/// Named groups in report order.
pub const GROUPS: [(&str, fn(&BatterySettings) -> Result<Vec<CheckRow>>); 8] = [
    ("density", density_checks),
    ("recurrence", recurrence_checks),
    ("chou_meyer", chou_meyer_checks),
    ("sampler", sampler_checks),
    ("watanabe", watanabe_checks),
    ("girsanov", girsanov_checks),
    ("filter_exact", filter_exact_checks),
    ("filter_oracle", filter_oracle_checks),
];

pub fn run_all(s: &BatterySettings) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for (_, group) in GROUPS {
        rows.extend(group(s)?);
    }
    Ok(rows)
}

fn seed_for(s: &BatterySettings, group: u64, item: u64) -> u64 {
    derive_seed(s.seed, group * 10_000 + item)
}

fn tolerance_row(name: String, estimate: f64, target: f64, tol: f64) -> CheckRow {
    CheckRow {
        name,
        estimate,
        target,
        std_error: 0.0,
        verdict: Verdict::from_pass((estimate - target).abs() <= tol),
    }
}

fn test_row(name: String, out: TestOutcome) -> CheckRow {
    CheckRow {
        name,
        estimate: out.p_value,
        target: SIGNIFICANCE,
        std_error: 0.0,
        verdict: Verdict::from_pass(out.passes()),
    }
}

fn prefixed(prefix: &str, rows: Vec<CheckRow>) -> Vec<CheckRow> {
    rows.into_iter().map(|r| CheckRow { name: format!("{prefix}/{}", r.name), ..r }).collect()
}

/// Random step path with one to five pieces, some of them zero.
pub fn random_path<R: Rng + ?Sized>(rng: &mut R) -> IntensityPath<f64> {
    let pieces = rng.random_range(1..=5);
    let horizon = rng.random_range(1.0..5.0);
    let mut cuts: Vec<f64> = (1..pieces).map(|_| rng.random_range(0.0..horizon)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut bps = vec![0.0];
    bps.extend(cuts.into_iter().filter(|c| *c > 0.0));
    let levels = bps
        .iter()
        .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.1..4.0) })
        .collect();
    IntensityPath::new(bps, levels, horizon).expect("valid by construction")
}

fn fixed(bps: &[f64], levels: &[f64], horizon: f64) -> PriorSpec {
    PriorSpec::Fixed(IntensityPath::new(bps.to_vec(), levels.to_vec(), horizon).expect("valid battery path"))
}

fn cp(x0: f64, rate: f64, jump_law: JumpLaw, horizon: f64) -> PriorSpec {
    PriorSpec::CompoundPoisson { spec: CompoundPoissonIntensitySpec { x0, jump_rate: rate, jump_law }, horizon }
}

fn discrete_level(values: &[f64], probs: &[f64], horizon: f64) -> PriorSpec {
    PriorSpec::RandomLevel { law: LevelLaw::Discrete { values: values.to_vec(), probs: probs.to_vec() }, horizon }
}

/// The priors the statistical groups run on.
pub fn battery_priors() -> Vec<(&'static str, PriorSpec)> {
    vec![
        ("constant", fixed(&[0.0], &[2.0], 2.0)),
        ("piecewise", fixed(&[0.0, 0.5, 1.2], &[1.0, 3.0, 0.5], 2.0)),
        ("plateau", fixed(&[0.0, 0.6, 1.1], &[2.0, 0.0, 1.5], 2.0)),
        ("level_discrete", discrete_level(&[0.5, 1.5, 3.0], &[0.3, 0.4, 0.3], 2.0)),
        ("level_gamma", PriorSpec::RandomLevel { law: LevelLaw::Gamma { shape: 2.0, scale: 0.75 }, horizon: 2.0 }),
        ("cp_exponential", cp(1.0, 1.0, JumpLaw::Exponential { mean: 0.5 }, 2.0)),
        ("cp_discrete", cp(0.5, 1.5, JumpLaw::Discrete { values: vec![0.25, 1.0], probs: vec![0.5, 0.5] }, 2.0)),
    ]
}

fn prior_named(name: &str) -> PriorSpec {
    battery_priors().into_iter().find(|(n, _)| *n == name).expect("known battery prior").1
}

/// Kernel mass `int psi + atom = 1` on random configurations.
pub fn density_checks(s: &BatterySettings) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for k in 0..24u64 {
        let mut rng = replicate_rng(seed_for(s, 1, 0), k);
        let path = random_path(&mut rng);
        let r = rng.random_range(0.0..path.horizon());
        let observed = rng.random_range(0..3);
        let n = observed + rng.random_range(0..4);
        let mass = psi(&path, n, r, observed)?.total_mass();
        rows.push(tolerance_row(format!("density/mass_{k:02}(n={n},N_r={observed})"), mass, 1.0, 1e-9));
    }
    Ok(rows)
}

/// `psi^{n-1}_u int_r^u X = (n - N_r) psi^n_u` on random probes.
pub fn recurrence_checks(s: &BatterySettings) -> Result<Vec<CheckRow>> {
    let worst: Vec<f64> = map_replicates(s.probes, seed_for(s, 2, 0), |_, rng| {
        let path = random_path(rng);
        let r = rng.random_range(0.0..path.horizon());
        let nr = rng.random_range(0..3);
        let n = nr + rng.random_range(1..6);
        let u = rng.random_range(r..path.horizon() * 1.5);
        let lhs = psi(&path, n - 1, r, nr).unwrap().eval(u) * path.integral(r, u);
        let rhs = (n - nr) as f64 * psi(&path, n, r, nr).unwrap().eval(u);
        let scale = lhs.abs().max(rhs.abs());
        if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale }
    });
    let worst = worst.into_iter().fold(0.0, f64::max);
    Ok(vec![tolerance_row("recurrence/max_relative_error".into(), worst, 0.0, 1e-12)])
}

/// Intensity rebuilt from the one-step kernels equals the path level.
pub fn chou_meyer_checks(s: &BatterySettings) -> Result<Vec<CheckRow>> {
    let errors: Vec<f64> = map_replicates(s.probes, seed_for(s, 3, 0), |_, rng| {
        let path = random_path(rng);
        let pattern = sample_cox_timechange(&path, rng);
        let t = rng.random_range(0.0..path.horizon());
        let x = path.level_at(t);
        match chou_meyer_intensity(&path, &pattern, t) {
            Ok(l) if x == 0.0 => if l == 0.0 { 0.0 } else { f64::INFINITY },
            Ok(l) => (l - x).abs() / x,
            Err(_) => f64::INFINITY,
        }
    });
    let worst = errors.into_iter().fold(0.0, f64::max);
    Ok(vec![tolerance_row("chou_meyer/max_relative_error".into(), worst, 0.0, 1e-10)])
}

fn count_cells(counts: &[usize], cells: usize) -> Vec<u64> {
    let mut h = vec![0u64; cells + 1];
    for c in counts {
        h[(*c).min(cells)] += 1;
    }
    h
}

const COUNT_CELLS: usize = 30;
const PIT_CELLS: usize = 20;

/// Counts on `[0, horizon]` against the conditional Poisson law, for both
/// samplers, plus equality of the two samplers' count laws.
///
/// Fixed paths use the count histogram directly. For random priors each
/// count is mapped through its own path's Poisson distribution with a
/// uniform tie-break, which is uniform exactly under the conditional law,
/// and the transformed values are binned.
pub fn sampler_checks(s: &BatterySettings) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for (i, (name, prior)) in battery_priors().into_iter().enumerate() {
        prior.validate()?;
        let h = prior.horizon();
        let mut counts_by_sampler = Vec::new();
        for (j, sampler) in ["timechange", "sequential"].into_iter().enumerate() {
            let draws: Vec<(usize, f64)> = map_replicates(s.replicates, seed_for(s, 4, (i * 2 + j) as u64), |_, rng| {
                let path = sample_prior(&prior, rng).unwrap();
                let pattern = if j == 0 { sample_cox_timechange(&path, rng) } else { sample_cox_sequential(&path, rng) };
                let n = pattern.count(h);
                let below: f64 = (0..n).map(|k| increment_pmf(&path, 0.0, h, k).unwrap()).sum();
                let pit = below + rng.random::<f64>() * increment_pmf(&path, 0.0, h, n).unwrap();
                (n, pit)
            });
            let counts: Vec<usize> = draws.iter().map(|d| d.0).collect();
            let out = match &prior {
                PriorSpec::Fixed(path) => {
                    let mut probs: Vec<f64> = (0..COUNT_CELLS).map(|n| increment_pmf(path, 0.0, h, n).unwrap()).collect();
                    let head: f64 = probs.iter().sum();
                    probs.push((1.0 - head).max(0.0));
                    chi_square_gof(&count_cells(&counts, COUNT_CELLS), &probs, 5.0)?
                }
                _ => {
                    let mut bins = vec![0u64; PIT_CELLS];
                    for (_, u) in &draws {
                        bins[((u * PIT_CELLS as f64) as usize).min(PIT_CELLS - 1)] += 1;
                    }
                    chi_square_gof(&bins, &[1.0 / PIT_CELLS as f64; PIT_CELLS], 5.0)?
                }
            };
            rows.push(test_row(format!("sampler/{name}/{sampler}/count_law"), out));
            counts_by_sampler.push(counts);
        }
        let out = chi_square_homogeneity(
            &count_cells(&counts_by_sampler[0], COUNT_CELLS),
            &count_cells(&counts_by_sampler[1], COUNT_CELLS),
            5.0,
        )?;
        rows.push(test_row(format!("sampler/{name}/samplers_agree"), out));
    }
    Ok(rows)
}

/// Compensated increments over `(0.8, 1.6]` on conditioning events, plain
/// and stopped, and paired predictable integrals.
pub fn watanabe_checks(s: &BatterySettings) -> Result<Vec<CheckRow>> {
    let (r, t) = (0.8, 1.6);
    let events: Vec<ConditioningEvent> = [
        "all",
        "count_eq:0",
        "count_ge:1",
        "count_le:1",
        "level_above:0.8:1.0",
        "count_eq:1&level_below:0.8:2.0",
    ]
    .iter()
    .map(|e| ConditioningEvent::parse(e))
    .collect::<Result<_>>()?;
    let grid = vec![0.0, 0.5, 1.0, 1.5, 2.0];
    let rules = ["no_arrival_yet", "count_plus_one", "level_at_cell_start", "constant:1.5"];
    let mut rows = Vec::new();
    for (i, name) in ["piecewise", "level_discrete", "cp_exponential"].into_iter().enumerate() {
        let prior = prior_named(name);
        let cfg = MartingaleTestConfig { r, t, replicates: s.replicates, seed: seed_for(s, 5, i as u64) };
        let rep = martingale_test(&prior, &events, &[1, 2], cfg)?;
        rows.extend(prefixed(&format!("watanabe/{name}"), rep.rows));
        for (j, rule) in rules.iter().enumerate() {
            let phi = SimplePredictableProcess::new(grid.clone(), PredictableRule::parse(rule)?)?;
            let rep = predictable_integral_test(&prior, &phi, s.replicates, seed_for(s, 5, 100 + (i * 10 + j) as u64))?;
            let mut row = rep.row;
            row.name = format!("watanabe/{name}/predictable[{rule}]");
            rows.push(row);
        }
    }
    Ok(rows)
}

/// `E[Z_t] = 1`, the reweighted increment law, and the induction identity.
pub fn girsanov_checks(s: &BatterySettings) -> Result<Vec<CheckRow>> {
    // On the exponential-jump prior the weight for Y = 1/X has finite
    // variance only for horizons below 2 / mean jump; use horizon 1.
    let cp_short = cp(1.0, 1.0, JumpLaw::Exponential { mean: 0.5 }, 1.0);
    let table = |h: f64| YRule::parse("table:0=1.5,0.4=0.5,0.8=2", h);
    let expectation: Vec<(&str, PriorSpec, YRule, f64)> = vec![
        ("constant", prior_named("constant"), YRule::Constant(2.0), 2.0),
        ("piecewise", prior_named("piecewise"), table(2.0)?, 1.5),
        ("level_discrete", prior_named("level_discrete"), YRule::Reciprocal(1.0), 2.0),
        ("level_gamma", prior_named("level_gamma"), YRule::Constant(0.5), 2.0),
        ("cp_exponential_h1", cp_short.clone(), YRule::Reciprocal(1.0), 1.0),
        ("cp_discrete", prior_named("cp_discrete"), YRule::Reciprocal(1.0), 2.0),
        ("cp_discrete", prior_named("cp_discrete"), YRule::Constant(1.5), 1.0),
    ];
    let mut rows = Vec::new();
    for (i, (name, prior, rule, t)) in expectation.iter().enumerate() {
        let rep = expectation_of_z_test(prior, rule, *t, s.replicates, seed_for(s, 6, i as u64))?;
        let mut row = rep.row;
        row.name = format!("girsanov/{name}/{}/E[Z_{t}]", rule_label(rule));
        rows.push(row);
    }
    let laws: Vec<(&str, PriorSpec, YRule, Vec<(f64, f64)>)> = vec![
        ("constant", prior_named("constant"), YRule::Constant(2.0), vec![(0.0, 1.0), (0.5, 2.0)]),
        ("cp_exponential_h1", cp_short, YRule::Reciprocal(1.0), vec![(0.0, 1.0)]),
        ("level_discrete", prior_named("level_discrete"), table(2.0)?, vec![(0.2, 1.4)]),
    ];
    for (i, (name, prior, rule, intervals)) in laws.iter().enumerate() {
        let cfg = ReweightedLawConfig { replicates: s.replicates, seed: seed_for(s, 6, 100 + i as u64), ..Default::default() };
        let rep = reweighted_law_test(prior, rule, intervals, cfg)?;
        rows.extend(prefixed(&format!("girsanov/{name}/{}/law", rule_label(rule)), rep.rows));
    }
    let outer = (s.replicates / 25).max(100);
    let prior = prior_named("level_discrete");
    for (rule_i, rule) in [YRule::Constant(2.0), table(2.0)?].iter().enumerate() {
        for (k, (n, j)) in [(1, 1), (2, 1), (2, 2), (3, 1), (3, 3)].into_iter().enumerate() {
            let cfg = InductionConfig { t: 1.5, n, j, outer, inner: 32, seed: seed_for(s, 6, 200 + (rule_i * 10 + k) as u64) };
            let rep = induction_identity_test(&prior, rule, cfg)?;
            let mut row = rep.row;
            row.name = format!("girsanov/level_discrete/{}/{}", rule_label(rule), row.name);
            rows.push(row);
        }
    }
    Ok(rows)
}

fn rule_label(rule: &YRule) -> String {
    match rule {
        YRule::Constant(c) => format!("Y=const({c})"),
        YRule::Reciprocal(c) => format!("Y={c}/X"),
        YRule::Table(_) => "Y=table".into(),
    }
}

/// Posterior means of the two-point prior `X in {1, 2}` on `[0, 1]`.
pub fn two_point_closed_forms() -> (f64, f64) {
    let (e1, e2) = ((-1.0f64).exp(), (-2.0f64).exp());
    ((e1 + 2.0 * e2) / (e1 + e2), (e1 + 4.0 * e2) / (e1 + 2.0 * e2))
}

/// Two-point prior: Monte Carlo filter within 4 SE of the closed form and
/// the oracle within 1e-12.
pub fn filter_exact_checks(s: &BatterySettings) -> Result<Vec<CheckRow>> {
    let prior = discrete_level(&[1.0, 2.0], &[0.5, 0.5], 1.0);
    let (none_value, one_value) = two_point_closed_forms();
    let mut rows = Vec::new();
    for (i, (label, arrivals, want)) in
        [("no_arrival", vec![], none_value), ("one_arrival", vec![0.5], one_value)].into_iter().enumerate()
    {
        let observed = PointPattern::new(arrivals, 1.0)?;
        let est = fn_intensity(&prior, &observed, 1.0, s.replicates, seed_for(s, 7, i as u64))?;
        rows.push(CheckRow::banded(format!("filter_exact/two_point/{label}/ks_filter"), est.value, want, est.std_error));
        let oracle = grid_oracle(&prior, &observed, &LevelFunctional::Identity, 1.0, OracleOptions::default())?;
        rows.push(tolerance_row(format!("filter_exact/two_point/{label}/oracle"), oracle, want, 1e-12));
    }
    Ok(rows)
}

/// Filters against the exact Bayes oracle on observations simulated from
/// each prior, the Laplace filter against enumeration, and `alpha = 0`.
pub fn filter_oracle_checks(s: &BatterySettings) -> Result<Vec<CheckRow>> {
    let priors: Vec<(&str, PriorSpec)> = vec![
        ("level_discrete", prior_named("level_discrete")),
        ("level_uniform", PriorSpec::RandomLevel { law: LevelLaw::Uniform { low: 0.5, high: 3.0 }, horizon: 2.0 }),
        ("level_gamma", prior_named("level_gamma")),
        ("cp_discrete", cp(1.0, 1.0, JumpLaw::Discrete { values: vec![0.5, 1.5], probs: vec![0.5, 0.5] }, 2.0)),
        ("cp_fixed", cp(1.0, 1.0, JumpLaw::Fixed { value: 0.75 }, 2.0)),
    ];
    let functionals = [
        (LevelFunctional::Identity, 2.0),
        (LevelFunctional::Exp(0.3), 1.25),
        (LevelFunctional::Indicator(1.2), 0.75),
    ];
    let mut rows = Vec::new();
    for (i, (name, prior)) in priors.iter().enumerate() {
        let mut rng = replicate_rng(seed_for(s, 8, 0), i as u64);
        let truth = sample_prior(prior, &mut rng)?;
        let observed = sample_cox_timechange(&truth, &mut rng);
        for (j, (f, t)) in functionals.iter().enumerate() {
            let oracle = grid_oracle(prior, &observed, f, *t, OracleOptions::default())?;
            let est = ks_filter(prior, &observed, f, *t, s.replicates, seed_for(s, 8, 10 + (i * 3 + j) as u64))?;
            rows.push(CheckRow::banded(format!("filter_oracle/{name}/{f}/t={t}"), est.value, oracle, est.std_error));
        }
    }

    let spec = CompoundPoissonIntensitySpec {
        x0: 1.0,
        jump_rate: 1.0,
        jump_law: JumpLaw::Discrete { values: vec![0.5, 1.5], probs: vec![0.5, 0.5] },
    };
    let cases: Vec<(&str, Vec<f64>, Vec<f64>, f64)> = vec![
        ("one_jump", vec![0.7], vec![0.4], 1.0),
        ("three_jumps", vec![0.35, 0.6, 1.2, 1.3], vec![0.3, 0.9, 1.1], 1.5),
    ];
    for (i, (label, arrivals, jumps, t)) in cases.iter().enumerate() {
        let observed = PointPattern::new(arrivals.clone(), 2.0)?;
        let base = LaplaceConfig { alpha: 1.0, t: *t, method: LaplaceMethod::Enumerate, replicates: s.replicates, seed: 0 };
        let exact = laplace_filter(&spec, 2.0, &observed, jumps, base)?;
        let mc = laplace_filter(
            &spec,
            2.0,
            &observed,
            jumps,
            LaplaceConfig { method: LaplaceMethod::MonteCarlo, seed: seed_for(s, 8, 100 + i as u64), ..base },
        )?;
        rows.push(CheckRow::banded(format!("filter_oracle/laplace/{label}/alpha=1"), mc.value, exact.value, mc.std_error));
        for method in [LaplaceMethod::Enumerate, LaplaceMethod::MonteCarlo] {
            let cfg = LaplaceConfig { alpha: 0.0, method, seed: seed_for(s, 8, 200 + i as u64), ..base };
            let one = laplace_filter(&spec, 2.0, &observed, jumps, cfg)?;
            rows.push(tolerance_row(format!("filter_oracle/laplace/{label}/alpha=0/{method:?}"), one.value, 1.0, 0.0));
        }
    }
    let exp_spec = CompoundPoissonIntensitySpec { x0: 1.0, jump_rate: 1.0, jump_law: JumpLaw::Exponential { mean: 0.5 } };
    let observed = PointPattern::new(vec![0.35, 0.6, 1.2], 2.0)?;
    let cfg = LaplaceConfig { alpha: 0.0, t: 1.5, method: LaplaceMethod::MonteCarlo, replicates: s.replicates, seed: seed_for(s, 8, 300) };
    let one = laplace_filter(&exp_spec, 2.0, &observed, &[0.3, 0.9], cfg)?;
    rows.push(tolerance_row("filter_oracle/laplace/exponential/alpha=0/MonteCarlo".into(), one.value, 1.0, 0.0));
    Ok(rows)
}
