use std::path::Path;
use std::process::{Command, Output};

fn coxkit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coxkit"))
        .args(args)
        .current_dir(dir)
        .env_remove("COXKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

const FIXED: &str = "[prior]\nkind = \"fixed\"\nhorizon = 2.0\nbreakpoints = [0.0, 1.0]\nlevels = [1.5, 0.5]\n";

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = coxkit(&["simulate", "--config", "nope.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{FIXED}levles = [1.0]\n"));
    let out = coxkit(&["simulate", "--config", &cfg, "--replicates", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[prior] levles"));
}

#[test]
fn bad_usage_and_help_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(coxkit(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(coxkit(&["simulate"], dir.path()).status.code(), Some(2));
    let help = coxkit(&["filter", "--help"], dir.path());
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("t,estimate,std_error,ess,oracle_value,pass"));
}

#[test]
fn invalid_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", FIXED);
    let out = Command::new(env!("CARGO_BIN_EXE_coxkit"))
        .args(["simulate", "--config", &cfg, "--replicates", "2"])
        .current_dir(dir.path())
        .env("COXKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_intensity_gives_empty_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[prior]\nkind = \"fixed\"\nhorizon = 3.0\nbreakpoints = [0.0]\nlevels = [0.0]\n",
    );
    let out = coxkit(&["simulate", "--config", &cfg, "--seed", "1", "--replicates", "5"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = read(dir.path(), "simulate.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "replicate_id,arrivals");
    assert_eq!(&lines[1..], &["0,", "1,", "2,", "3,", "4,"]);
}

#[test]
fn simulate_round_trips_into_filter() {
    let dir = tempfile::tempdir().unwrap();
    let prior = "[prior]\nkind = \"random_level\"\nhorizon = 2.0\nlaw = \"discrete\"\nvalues = [0.5, 2.0]\nprobs = [0.5, 0.5]\n";
    let cfg = write(dir.path(), "sim.toml", prior);
    let out = coxkit(&["simulate", "--config", &cfg, "--seed", "4", "--replicates", "10", "--out", "sim", "--plot"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&dir.path().join("sim"), "simulate_paths.csv").lines().next(), Some("replicate_id,breakpoints,levels"));
    assert!(read(&dir.path().join("sim"), "simulate.svg").contains("<svg"));

    let filter = format!(
        "{prior}[observation]\nsimulate_csv = \"sim/simulate.csv\"\nreplicate = 3\n[filter]\ngrid = [0.0, 2.0, 5]\n"
    );
    let cfg = write(dir.path(), "filter.toml", &filter);
    let out = coxkit(&["filter", "--config", &cfg, "--seed", "9", "--replicates", "20000", "--plot"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "filter.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,estimate,std_error,ess,oracle_value,pass"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    for row in &rows {
        assert_eq!(row[5], "pass");
        let est: f64 = row[1].parse().unwrap();
        assert!((0.5..=2.0).contains(&est));
    }
    assert!(read(dir.path(), "filter.svg").contains("true X_t"));
}

#[test]
fn densities_end_with_the_atom() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[prior]\nkind = \"fixed\"\nhorizon = 2.0\nbreakpoints = [0.0, 1.0]\nlevels = [1.5, 0.0]\n\
         [densities]\nn = 1\nr = 0.5\nobserved_count = 0\ngrid = [0.5, 2.0, 4]\n",
    );
    let out = coxkit(&["densities", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = read(dir.path(), "densities.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,psi_value");
    assert_eq!(lines.len(), 6);
    let atom: f64 = lines[5].strip_prefix("inf,").unwrap().parse().unwrap();
    // The intensity dies at 1, leaving mass 0.75 for two more arrivals.
    let m: f64 = 0.75;
    assert!((atom - (-m).exp() * (1.0 + m)).abs() < 1e-15);
    // 17 significant digits.
    assert_eq!(lines[1].split(',').next(), Some("5.0000000000000000e-1"));
}

#[test]
fn out_of_range_times_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{FIXED}[observation]\narrivals = [0.5]\n[filter]\ntimes = [3.0]\n"));
    assert_eq!(coxkit(&["filter", "--config", &cfg], dir.path()).status.code(), Some(2));
}

#[test]
fn checks_write_their_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!(
            "{FIXED}[run]\nseed = 5\nreplicates = 20000\n[watanabe]\nr = 0.5\nt = 1.5\nevents = [\"all\", \"count_eq:0\"]\n"
        ),
    );
    let out = coxkit(&["watanabe-check", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(dir.path(), "watanabe.csv").starts_with("event,estimate,std_error,pass\nall,"));
    let cfg = write(
        dir.path(),
        "g.toml",
        &format!("{FIXED}[run]\nseed = 5\nreplicates = 20000\n[girsanov]\ny_rules = [\"constant:2\"]\nintervals = [[0.0, 1.0]]\n"),
    );
    let out = coxkit(&["girsanov-check", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(dir.path(), "girsanov.csv").starts_with("check_name,estimate,target,std_error,pass\n"));
}

#[test]
fn sections_of_other_subcommands_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{FIXED}[girsanov]\ny_rules = [\"constant:2\"]\n"));
    let out = coxkit(&["simulate", "--config", &cfg, "--replicates", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[girsanov]"));
}

#[test]
fn verify_all_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[battery]\nprobes = 10\n");
    assert_eq!(coxkit(&["verify-all", "--config", &cfg], dir.path()).status.code(), Some(2));
}
