//! Acceptance run: one line per criterion, nonzero exit on any failure.
//!
//! `cargo test -p coxkit-cli --test acceptance`

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use coxkit::CheckRow;
use coxkit_cli::battery::{self, BatterySettings};

const SEED: u64 = 42;
const REPLICATES: usize = 100_000;
const PROBES: usize = 10_000;

struct Criterion {
    id: usize,
    name: &'static str,
    tolerance: &'static str,
    group: fn(&BatterySettings) -> coxkit::Result<Vec<CheckRow>>,
    /// Least number of rows the group must produce.
    min_rows: usize,
}

const CRITERIA: [Criterion; 8] = [
    Criterion { id: 1, name: "density normalization", tolerance: "|mass - 1| <= 1e-9, >= 20 configs", group: battery::density_checks, min_rows: 20 },
    Criterion { id: 2, name: "recurrence identity", tolerance: "relative error <= 1e-12 on 1e4 probes", group: battery::recurrence_checks, min_rows: 1 },
    Criterion { id: 3, name: "Chou-Meyer intensity", tolerance: "relative error <= 1e-10 on 1e4 probes", group: battery::chou_meyer_checks, min_rows: 1 },
    Criterion { id: 4, name: "sampler law", tolerance: "p > 0.001 (chi-square, KS)", group: battery::sampler_checks, min_rows: 4 },
    Criterion { id: 5, name: "compensated martingale", tolerance: "|estimate| <= 4 SE", group: battery::watanabe_checks, min_rows: 1 },
    Criterion { id: 6, name: "change of measure", tolerance: "within 4 SE per row", group: battery::girsanov_checks, min_rows: 1 },
    Criterion { id: 7, name: "two-point filter", tolerance: "MC within 4 SE, oracle within 1e-12", group: battery::filter_exact_checks, min_rows: 4 },
    Criterion { id: 8, name: "filter vs oracle", tolerance: "within 4 SE, alpha = 0 exactly 1", group: battery::filter_oracle_checks, min_rows: 10 },
];

fn statistical(id: usize) -> bool {
    matches!(id, 5..=8)
}

fn verify_all(config: &Path, out: &Path, threads: Option<&str>) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_coxkit"));
    cmd.arg("verify-all").arg("--config").arg(config).arg("--seed").arg(SEED.to_string()).arg("--out").arg(out);
    match threads {
        Some(n) => cmd.env("COXKIT_THREADS", n),
        None => cmd.env_remove("COXKIT_THREADS"),
    };
    let status = cmd.output().map_err(|e| format!("spawn failed: {e}"))?.status;
    if status.code() != Some(0) {
        return Err(format!("verify-all exited with {status}"));
    }
    std::fs::read(out.join("verify_all.csv")).map_err(|e| format!("no report: {e}"))
}

fn reproducibility() -> Result<String, String> {
    let config: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", "battery.cfg"].iter().collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [("default", None), ("default again", None), ("COXKIT_THREADS=1", Some("1")), ("COXKIT_THREADS=8", Some("8"))];
    let mut reports = Vec::new();
    for (i, (label, threads)) in runs.iter().enumerate() {
        let bytes = verify_all(&config, &dir.path().join(i.to_string()), *threads)?;
        reports.push((label, bytes));
    }
    let (first_label, first) = &reports[0];
    for (label, bytes) in &reports[1..] {
        if bytes != first {
            return Err(format!("report under {label} differs from {first_label}"));
        }
    }
    Ok(format!("{} runs, {} bytes each, identical", reports.len(), first.len()))
}

fn main() {
    let settings = BatterySettings { seed: SEED, replicates: REPLICATES, probes: PROBES };
    println!("acceptance: seed {SEED}, {REPLICATES} replicates, {PROBES} probes");
    let mut failed = 0;
    for c in &CRITERIA {
        let start = Instant::now();
        let line = match (c.group)(&settings) {
            Ok(rows) => {
                let bad: Vec<&CheckRow> = rows.iter().filter(|r| !r.passed()).collect();
                let enough = rows.len() >= c.min_rows;
                let ok = bad.is_empty() && enough;
                if !ok {
                    failed += 1;
                }
                let worst = if c.id == 4 {
                    let p = rows.iter().map(|r| r.estimate).fold(1.0, f64::min);
                    format!("min p {p:.4}")
                } else if statistical(c.id) {
                    let z = rows
                        .iter()
                        .filter(|r| r.std_error > 0.0)
                        .map(|r| ((r.estimate - r.target) / r.std_error).abs())
                        .fold(0.0, f64::max);
                    format!("max |z| {z:.2}")
                } else {
                    let e = rows.iter().map(|r| (r.estimate - r.target).abs()).fold(0.0, f64::max);
                    format!("max error {e:.2e}")
                };
                let mut line = format!(
                    "{} {}/{} rows, {worst} [{}]",
                    if ok { "PASS" } else { "FAIL" },
                    rows.len() - bad.len(),
                    rows.len(),
                    c.tolerance
                );
                if !enough {
                    line.push_str(&format!(" (needs at least {} rows)", c.min_rows));
                }
                for r in bad {
                    line.push_str(&format!("\n    failed {}: estimate {} target {} se {}", r.name, r.estimate, r.target, r.std_error));
                }
                line
            }
            Err(e) => {
                failed += 1;
                format!("FAIL error: {e}")
            }
        };
        println!("criterion {} ({}): {line} in {:.1}s", c.id, c.name, start.elapsed().as_secs_f64());
    }
    let start = Instant::now();
    let line = match reproducibility() {
        Ok(msg) => format!("PASS {msg} [byte-identical verify_all.csv]"),
        Err(msg) => {
            failed += 1;
            format!("FAIL {msg}")
        }
    };
    println!("criterion 9 (reproducibility): {line} in {:.1}s", start.elapsed().as_secs_f64());
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
