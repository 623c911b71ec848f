//! Command line runner for the kslab experiments. The binary is a thin
//! wrapper around [`execute`], which tests drive in-process.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use kslab::experiments::{self, ExperimentKind};
use kslab::report::{sweep_csv, Outcome, SweepRow};
use kslab::validate::{self, Faults};

pub use config::{load as load_config, parse as parse_config, Config};

/// Runs the kslab experiments from config files.
#[derive(Parser)]
#[command(name = "kslab", version)]
struct Cli {
    /// Output directory for reports and CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write the assembled kernel matrices as text.
    #[arg(long, global = true)]
    dump_matrices: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write report.json (plus sweep.csv for sweeps).
    Run { config: PathBuf },
    /// Run the weight sweep of a config and write sweep.csv.
    Sweep { config: PathBuf },
    /// Run the invariant suite at small resolutions.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    LerayLevi,
}

/// Exit status 2: the config (or the command line) is unusable.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Parses `args` (program name first) and runs the command. Returns the
/// exit status: 0 success, 1 failed assertion or numerical error, 2 bad
/// config or command line.
pub fn execute<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            let _ = writeln!(err, "error: {e}");
            return 2;
        }
    }
    match dispatch(&cli, out, err) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) if e.is::<ConfigError>() => {
            let _ = writeln!(err, "{e}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    match &cli.cmd {
        Cmd::Run { config } => run(cli, config, out, err),
        Cmd::Sweep { config } => sweep(cli, config, out),
        Cmd::Validate { seed, inject_fault } => {
            let faults = Faults {
                corrupt_lambda: matches!(inject_fault, Some(Fault::LerayLevi)),
            };
            run_validate(*seed, faults, out, err)
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<Config> {
    let mut c = config::load(path).map_err(ConfigError)?;
    if cli.dump_matrices {
        c.plan.dump_dir = Some(cli.out.join("matrices"));
    }
    Ok(c)
}

/// Library errors that come from the config rather than the numerics.
fn classify(e: kslab::Error) -> anyhow::Error {
    match e {
        kslab::Error::InvalidParameter(_) => ConfigError(e.into()).into(),
        other => other.into(),
    }
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn provenance(c: &Config) -> Vec<(&'static str, String)> {
    vec![
        ("experiment", c.plan.kind.name().to_string()),
        ("config_sha256", c.hash.clone()),
        ("seed", c.plan.seed.to_string()),
        (
            "domains",
            c.plan.domains.iter().map(|d| d.label()).collect::<Vec<_>>().join("; "),
        ),
    ]
}

fn is_runtime(c: &kslab::report::Check) -> bool {
    c.name.starts_with("runtime")
}

/// `report.json` holds only what the seed determines; wall-clock numbers go
/// to `timing.json` so reruns compare byte for byte.
fn report_json(c: &Config, o: &Outcome) -> Result<Value> {
    let checks: Vec<_> = o.checks.iter().filter(|c| !is_runtime(c)).collect();
    Ok(json!({
        "experiment": o.id,
        "title": o.title,
        "config_sha256": c.hash,
        "seed": c.plan.seed,
        "plan": serde_json::to_value(&c.plan)?,
        "passed": checks.iter().all(|c| c.passed),
        "checks": checks,
        "notes": o.notes,
        "data": o.data,
    }))
}

fn run(cli: &Cli, path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    let c = load(cli, path)?;
    let o = experiments::run(&c.plan).map_err(classify)?;
    let report = report_json(&c, &o)?;
    write_atomic(&cli.out.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    let timing: Vec<_> = o.checks.iter().filter(|c| is_runtime(c)).collect();
    let timing = json!({ "runtime_s": o.runtime_s, "checks": timing });
    write_atomic(&cli.out.join("timing.json"), serde_json::to_string_pretty(&timing)?.as_bytes())?;
    if c.plan.kind == ExperimentKind::WeightedSweep {
        let rows: Vec<SweepRow> = serde_json::from_value(o.data["rows"].clone())?;
        write_atomic(&cli.out.join("sweep.csv"), sweep_csv(&rows, &provenance(&c)).as_bytes())?;
    }
    writeln!(out, "{}", o.line())?;
    for n in &o.notes {
        writeln!(out, "  note: {n}")?;
    }
    if let Some(f) = o.failures().next() {
        writeln!(err, "assertion failed: {}", f.describe())?;
    }
    Ok(o.passed())
}

fn sweep(cli: &Cli, path: &Path, out: &mut dyn Write) -> Result<bool> {
    let c = load(cli, path)?;
    if c.plan.exponents.is_empty() {
        return Err(ConfigError(anyhow::anyhow!("sweep needs [weights] exponents")).into());
    }
    let rows = experiments::sweep(&c.plan).map_err(classify)?;
    let target = cli.out.join("sweep.csv");
    write_atomic(&target, sweep_csv(&rows, &provenance(&c)).as_bytes())?;
    writeln!(out, "wrote {} rows to {}", rows.len(), target.display())?;
    Ok(true)
}

fn run_validate(seed: u64, faults: Faults, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    let s = validate::run(seed, faults)?;
    for (module, ok, total) in s.counts() {
        writeln!(out, "{module:<20} {ok}/{total}")?;
    }
    for o in s.outcomes.iter().filter(|o| !o.passed) {
        writeln!(out, "FAIL {}: {} ({})", o.module, o.name, o.detail)?;
    }
    writeln!(out, "validate finished in {:.1} s", s.runtime_s)?;
    if let Some(f) = s.first_failure() {
        writeln!(err, "first failure: {} / {}", f.module, f.name)?;
    }
    Ok(s.passed())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn configs() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
    }

    struct Ran {
        code: u8,
        out: String,
        err: String,
    }

    fn call(args: &[&str]) -> Ran {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = execute(std::iter::once("kslab").chain(args.iter().copied()), &mut o, &mut e);
        Ran {
            code,
            out: String::from_utf8(o).unwrap(),
            err: String::from_utf8(e).unwrap(),
        }
    }

    fn run_cfg(dir: &Path, cfg: &Path, extra: &[&str]) -> Ran {
        let mut args = vec!["--out", dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        args.extend(["run", cfg.to_str().unwrap()]);
        call(&args)
    }

    #[test]
    fn disk_szego_config_passes() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_cfg(dir.path(), &configs().join("disk-szego.cfg"), &[]);
        assert_eq!(r.code, 0, "{}", r.err);
        assert!(r.out.starts_with("PASS disk-szego"));
        let report: Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(report["passed"], true);
        let err = report["checks"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["name"] == "max relative L2 error")
            .unwrap()["value"]
            .as_f64()
            .unwrap();
        assert!(err <= 1e-6);
        assert!(dir.path().join("timing.json").exists());
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("noseed.cfg");
        fs::write(&cfg, "[experiment]\nkind = \"disk-szego\"\n").unwrap();
        let r = run_cfg(dir.path(), &cfg, &[]);
        assert_eq!(r.code, 2);
        assert!(r.err.contains("seed"), "{}", r.err);
        assert!(!dir.path().join("report.json").exists());
    }

    #[test]
    fn unreadable_config_and_bad_flags_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_cfg(dir.path(), Path::new("/nonexistent/x.cfg"), &[]).code, 2);
        assert_eq!(call(&["run"]).code, 2);
        assert_eq!(call(&["frobnicate"]).code, 2);
    }

    #[test]
    fn wrong_domain_for_an_oracle_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("x.cfg");
        fs::write(
            &cfg,
            "[experiment]\nkind = \"disk-szego\"\nseed = 1\n[domain]\nspecs = [\"ellipsoid 1 2\"]\n",
        )
        .unwrap();
        assert_eq!(run_cfg(dir.path(), &cfg, &[]).code, 2);
    }

    #[test]
    fn coercivity_failure_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_cfg(dir.path(), &configs().join("coercivity-fail.cfg"), &[]);
        assert_eq!(r.code, 1);
        assert!(r.err.contains("FAILED-COERCIVITY"), "{}", r.err);
    }

    #[test]
    fn sweep_is_byte_identical_on_rerun() {
        let cfg = configs().join("quick-sweep.cfg");
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let r = call(&["--out", d.path().to_str().unwrap(), "sweep", cfg.to_str().unwrap()]);
            assert_eq!(r.code, 0, "{}", r.err);
        }
        let x = fs::read(dirs[0].path().join("sweep.csv")).unwrap();
        let y = fs::read(dirs[1].path().join("sweep.csv")).unwrap();
        assert_eq!(x, y);
        let csv = String::from_utf8(x).unwrap();
        assert!(csv.contains("# seed: 7"));
        assert!(csv.contains("# config_sha256: "));
        assert!(csv.lines().any(|l| l == kslab::report::SWEEP_COLUMNS));
        // Constant weight: the projection has norm one.
        let row = csv.lines().find(|l| l.starts_with("0,2,128,")).unwrap();
        let norm: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
        assert!((norm - 1.0).abs() < 1e-6, "{row}");
    }

    #[test]
    fn run_report_is_byte_identical_on_rerun() {
        let cfg = configs().join("reconstruct.cfg");
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let r = run_cfg(d.path(), &cfg, &[]);
            assert_eq!(r.code, 0, "{}", r.err);
        }
        let x = fs::read(dirs[0].path().join("report.json")).unwrap();
        let y = fs::read(dirs[1].path().join("report.json")).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dump_matrices_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_cfg(dir.path(), &configs().join("reconstruct.cfg"), &["--dump-matrices"]);
        assert_eq!(r.code, 0, "{}", r.err);
        let n = fs::read_dir(dir.path().join("matrices")).unwrap().count();
        assert_eq!(n, 6);
    }

    #[test]
    fn validate_passes_and_counts_modules() {
        let r = call(&["validate"]);
        assert_eq!(r.code, 0, "{}", r.out);
        for m in [
            "domain_geometry",
            "quasi_metric",
            "measures_quadrature",
            "weights",
            "operators",
            "kerzman_stein",
        ] {
            assert!(r.out.contains(m), "{}", r.out);
        }
    }

    #[test]
    fn validate_names_corrupted_leray_levi() {
        let r = call(&["validate", "--inject-fault", "leray-levi"]);
        assert_eq!(r.code, 1);
        assert!(r.err.contains("leray_levi"), "{}", r.err);
    }
}
