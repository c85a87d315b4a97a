//! Experiment configuration.
//!
//! Configs are TOML documents with one table per concern (`[run]`,
//! `[prior]`, `[simulate]`, ...). Every key is typed and every key must be
//! known: a misspelt field is a config error that names it.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::Path;

use coxkit::intensity::{CompoundPoissonIntensitySpec, JumpLaw, LevelLaw};
use coxkit::{IntensityPath, PriorSpec};
use toml::{Table, Value};

use crate::CliError;

pub const DEFAULT_REPLICATES: usize = 100_000;

/// Parsed config with per-key bookkeeping for unknown-field detection.
#[derive(Debug)]
pub struct Config {
    table: Table,
    used: RefCell<BTreeSet<(String, String)>>,
    sections_seen: RefCell<BTreeSet<String>>,
}

/// Read access to one `[section]`; a missing section reads as empty.
pub struct Section<'a> {
    name: &'a str,
    table: Option<&'a Table>,
    config: &'a Config,
}

fn bad(field: &str, what: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {what}"))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for (k, v) in &table {
            if !v.is_table() {
                return Err(bad(k, "top-level keys must be inside a [section]"));
            }
        }
        Ok(Self { table, used: RefCell::default(), sections_seen: RefCell::default() })
    }

    pub fn section<'a>(&'a self, name: &'a str) -> Section<'a> {
        self.sections_seen.borrow_mut().insert(name.to_string());
        Section { name, table: self.table.get(name).and_then(Value::as_table), config: self }
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.table.contains_key(name)
    }

    /// Fails on the first section or key that no reader asked for.
    pub fn reject_unknown(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let seen = self.sections_seen.borrow();
        for (name, value) in &self.table {
            if !seen.contains(name) {
                return Err(bad(&format!("[{name}]"), "unknown section for this subcommand"));
            }
            for key in value.as_table().into_iter().flat_map(|t| t.keys()) {
                if !used.contains(&(name.clone(), key.clone())) {
                    return Err(bad(&format!("[{name}] {key}"), "unknown key"));
                }
            }
        }
        Ok(())
    }
}

impl<'a> Section<'a> {
    pub fn field(&self, key: &str) -> String {
        format!("[{}] {key}", self.name)
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.config.used.borrow_mut().insert((self.name.to_string(), key.to_string()));
        self.table.and_then(|t| t.get(key))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.table.is_some_and(|t| t.contains_key(key))
    }

    fn number(&self, key: &str, v: &Value) -> Result<f64, CliError> {
        let x = match v {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            Value::String(s) if s == "inf" => f64::INFINITY,
            _ => return Err(bad(&self.field(key), format!("expected a number, got {v}"))),
        };
        if x.is_nan() {
            return Err(bad(&self.field(key), "NaN is not allowed"));
        }
        Ok(x)
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.raw(key).map(|v| self.number(key, v)).transpose()
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.opt_f64(key)?.ok_or_else(|| bad(&self.field(key), "missing"))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(v) => Err(bad(&self.field(key), format!("expected a nonnegative integer, got {v}"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.opt_usize(key)?.unwrap_or(default))
    }

    pub fn opt_u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            // seeds above i64::MAX are written as strings
            Some(Value::String(s)) => s
                .parse()
                .map(Some)
                .map_err(|_| bad(&self.field(key), format!("expected a 64-bit unsigned integer, got {s:?}"))),
            Some(v) => Err(bad(&self.field(key), format!("expected a nonnegative integer, got {v}"))),
        }
    }

    pub fn opt_bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(bad(&self.field(key), format!("expected true or false, got {v}"))),
        }
    }

    pub fn opt_str(&self, key: &str) -> Result<Option<&'a str>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(v) => Err(bad(&self.field(key), format!("expected a string, got {v}"))),
        }
    }

    pub fn str(&self, key: &str) -> Result<&'a str, CliError> {
        self.opt_str(key)?.ok_or_else(|| bad(&self.field(key), "missing"))
    }

    pub fn opt_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items.iter().map(|v| self.number(key, v)).collect::<Result<_, _>>().map(Some),
            Some(v) => Err(bad(&self.field(key), format!("expected a list of numbers, got {v}"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.opt_f64_list(key)?.ok_or_else(|| bad(&self.field(key), "missing"))
    }

    pub fn opt_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    _ => Err(bad(&self.field(key), format!("expected nonnegative integers, got {v}"))),
                })
                .collect::<Result<_, _>>()
                .map(Some),
            Some(v) => Err(bad(&self.field(key), format!("expected a list of integers, got {v}"))),
        }
    }

    pub fn opt_str_list(&self, key: &str) -> Result<Option<Vec<&'a str>>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().ok_or_else(|| bad(&self.field(key), format!("expected strings, got {v}"))))
                .collect::<Result<_, _>>()
                .map(Some),
            Some(v) => Err(bad(&self.field(key), format!("expected a list of strings, got {v}"))),
        }
    }

    /// A list of two-element lists, e.g. `intervals = [[0.0, 1.0], [0.5, 2.0]]`.
    pub fn opt_pair_list(&self, key: &str) -> Result<Option<Vec<(f64, f64)>>, CliError> {
        let shape = || bad(&self.field(key), "expected a list of [a, b] pairs");
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v.as_array().map(|a| a.as_slice()) {
                    Some([a, b]) => Ok((self.number(key, a)?, self.number(key, b)?)),
                    _ => Err(shape()),
                })
                .collect::<Result<_, _>>()
                .map(Some),
            Some(_) => Err(shape()),
        }
    }

    /// A list of times, given either as `times = [...]` or as
    /// `grid = [start, end, count]` (inclusive, evenly spaced).
    pub fn times(&self, times_key: &str, grid_key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let listed = self.opt_f64_list(times_key)?;
        let grid = self.opt_f64_list(grid_key)?;
        match (listed, grid) {
            (Some(_), Some(_)) => Err(bad(&self.field(grid_key), format!("give either {times_key} or {grid_key}"))),
            (Some(t), None) => Ok(Some(t)),
            (None, Some(g)) => {
                if g.len() != 3 || g[2] < 1.0 || g[2].fract() != 0.0 || !(g[1] >= g[0]) {
                    return Err(bad(&self.field(grid_key), "expected [start, end, count] with end >= start"));
                }
                let n = g[2] as usize;
                if n == 1 {
                    return Ok(Some(vec![g[0]]));
                }
                Ok(Some((0..n).map(|i| g[0] + (g[1] - g[0]) * i as f64 / (n - 1) as f64).collect()))
            }
            (None, None) => Ok(None),
        }
    }
}

/// Seed and replicate count shared by every subcommand; command-line flags
/// take precedence over `[run]`.
#[derive(Debug, Clone, Copy)]
pub struct RunSettings {
    pub seed: Option<u64>,
    pub replicates: usize,
}

pub fn run_settings(cfg: &Config, seed: Option<u64>, replicates: Option<usize>) -> Result<RunSettings, CliError> {
    let run = cfg.section("run");
    let file_seed = run.opt_u64("seed")?;
    let file_reps = run.opt_usize("replicates")?;
    let replicates = replicates.or(file_reps).unwrap_or(DEFAULT_REPLICATES);
    if replicates == 0 {
        return Err(bad("replicates", "must be at least 1"));
    }
    Ok(RunSettings { seed: seed.or(file_seed), replicates })
}

/// Reads `[prior]`.
///
/// ```toml
/// [prior]
/// kind = "fixed"            # breakpoints = [...], levels = [...]
/// kind = "random_level"     # law = "discrete" | "uniform" | "gamma"
/// kind = "compound_poisson" # x0, jump_rate, jump_law = "exponential" | "fixed" | "discrete"
/// horizon = 2.0
/// ```
pub fn prior(cfg: &Config) -> Result<PriorSpec, CliError> {
    if !cfg.has_section("prior") {
        return Err(bad("[prior]", "missing section"));
    }
    let s = cfg.section("prior");
    let horizon = s.f64("horizon")?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(bad(&s.field("horizon"), format!("must be positive and finite, got {horizon}")));
    }
    let kind = s.str("kind")?;
    let prior = match kind {
        "fixed" => {
            let path = IntensityPath::new(s.f64_list("breakpoints")?, s.f64_list("levels")?, horizon)
                .map_err(|e| bad("[prior] breakpoints/levels", e))?;
            PriorSpec::Fixed(path)
        }
        "random_level" => {
            let law = match s.str("law")? {
                "discrete" => LevelLaw::Discrete { values: s.f64_list("values")?, probs: s.f64_list("probs")? },
                "uniform" => LevelLaw::Uniform { low: s.f64("low")?, high: s.f64("high")? },
                "gamma" => LevelLaw::Gamma { shape: s.f64("shape")?, scale: s.f64("scale")? },
                other => return Err(bad(&s.field("law"), format!("unknown level law {other:?}"))),
            };
            PriorSpec::RandomLevel { law, horizon }
        }
        "compound_poisson" => {
            let jump_law = match s.str("jump_law")? {
                "exponential" => JumpLaw::Exponential { mean: s.f64("jump_mean")? },
                "fixed" => JumpLaw::Fixed { value: s.f64("jump_value")? },
                "discrete" => JumpLaw::Discrete { values: s.f64_list("jump_values")?, probs: s.f64_list("jump_probs")? },
                other => return Err(bad(&s.field("jump_law"), format!("unknown jump law {other:?}"))),
            };
            let spec = CompoundPoissonIntensitySpec { x0: s.f64("x0")?, jump_rate: s.f64("jump_rate")?, jump_law };
            PriorSpec::CompoundPoisson { spec, horizon }
        }
        other => return Err(bad(&s.field("kind"), format!("unknown prior kind {other:?}"))),
    };
    prior.validate().map_err(|e| bad("[prior]", e))?;
    Ok(prior)
}

/// Checks that every time lies in `[lo, horizon]`.
pub fn check_times(field: &str, times: &[f64], lo: f64, horizon: f64) -> Result<(), CliError> {
    if let Some(t) = times.iter().find(|t| !(**t >= lo && **t <= horizon)) {
        return Err(bad(field, format!("time {t} outside [{lo}, {horizon}]")));
    }
    Ok(())
}
