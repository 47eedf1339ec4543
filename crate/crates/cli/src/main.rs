//! Command-line front end: validate scenarios, run one simulation or a
//! protocol x load x seed grid.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use leosim::metrics::{aggregate, export_series, export_summary, write_atomic, MetricsError};
use leosim::sweep::{self, GridRow, GridSpec};
use leosim::{simulate, EngineError, ProtocolKind, Scenario, ScenarioInvalid};

const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "leosim", version, about = "LEO constellation routing simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and write summary.v1 and series.csv.
    Run(RunArgs),
    /// Run a protocol x load x seed grid and write grid.csv.
    Compare(CompareArgs),
    /// Check a scenario file and print the effective configuration.
    Validate {
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    protocol: ProtocolKind,
    #[arg(long)]
    load: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, env = "LEOSIM_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Comma-separated protocols.
    #[arg(long, default_value = "ipv4,ipv6,mpls,srv6,srv6-green")]
    protocols: String,
    /// START:STOP:STEP, inclusive.
    #[arg(long, default_value = "0.1:1.0:0.1")]
    loads: String,
    /// Seeds 1..=N.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, env = "LEOSIM_OUT", default_value = "out")]
    out: PathBuf,
    /// Parallel runs; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep rows already in grid.csv and run only the missing cells.
    #[arg(long)]
    resume: bool,
}

enum Failure {
    Invalid(Vec<String>),
    Io(String),
}

impl From<ScenarioInvalid> for Failure {
    fn from(e: ScenarioInvalid) -> Self {
        Failure::Invalid(e.0.iter().map(|v| v.to_string()).collect())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::ScenarioInvalid(s) => s.into(),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Io(e.to_string())
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load_scenario(path: Option<&Path>) -> Result<Scenario, Failure> {
    let Some(path) = path else {
        return Ok(Scenario::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    Ok(Scenario::parse(&text)?)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let sc = load_scenario(a.scenario.as_deref())?;
    let trace = simulate(&sc, a.protocol, a.load, a.seed)?;
    let summary = aggregate(&trace);
    create_dir(&a.out)?;
    export_summary(&summary, &a.out.join("summary.v1"))?;
    export_series(&trace.samples, &a.out.join("series.csv"))?;
    println!(
        "{} load {} seed {}: pdr {:.2}% peak cpu {:.2}% avg cpu {:.2}% avg mem {:.0} B overhead {:.2}%",
        summary.protocol,
        summary.load_fraction,
        summary.seed,
        summary.pdr_pct,
        summary.peak_cpu_pct,
        summary.avg_cpu_pct,
        summary.avg_mem_bytes,
        summary.overhead_pct
    );
    Ok(())
}

fn parse_protocols(s: &str) -> Result<Vec<ProtocolKind>, Failure> {
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for p in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match p.parse() {
            Ok(p) if !out.contains(&p) => out.push(p),
            Ok(_) => {}
            Err(e) => bad.push(format!("protocols: {e}")),
        }
    }
    if out.is_empty() && bad.is_empty() {
        bad.push("protocols: empty list".into());
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Failure::Invalid(bad))
    }
}

/// Inclusive `START:STOP:STEP` range, rounded to six decimals so that
/// 0.1 steps land on the written values.
fn parse_loads(s: &str) -> Result<Vec<f64>, Failure> {
    let invalid = |m: String| Failure::Invalid(vec![format!("loads: {m}")]);
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(invalid(format!("'{s}' is not START:STOP:STEP")));
    }
    let mut v = [0.0f64; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.trim().parse().map_err(|e| invalid(format!("'{p}': {e}")))?;
    }
    let [start, stop, step] = v;
    if !(step > 0.0) || stop < start {
        return Err(invalid(format!("'{s}' needs STEP > 0 and STOP >= START")));
    }
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&stop) {
        return Err(invalid(format!("'{s}' reaches outside [0, 1]")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e6).round() / 1e6).collect())
}

fn cmd_compare(a: CompareArgs) -> Result<(), Failure> {
    let sc = load_scenario(a.scenario.as_deref())?;
    let spec = GridSpec {
        protocols: parse_protocols(&a.protocols)?,
        loads: parse_loads(&a.loads)?,
        seeds: (1..=a.seeds).collect(),
    };
    if spec.seeds.is_empty() {
        return Err(Failure::Invalid(vec!["seeds: must be at least 1".into()]));
    }
    create_dir(&a.out)?;
    let path = a.out.join("grid.csv");
    let done = if a.resume && path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| io_failure(&path, e))?;
        sweep::parse_grid_csv(&text).map_err(|e| Failure::Invalid(vec![e.to_string()]))?
    } else {
        Vec::new()
    };
    let todo = sweep::pending(&spec, &done);
    eprintln!("{} cells to run, {} already done", todo.len(), done.len());
    let jobs = a.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::Io(e.to_string()))?;
    let rows = Mutex::new(done);
    pool.install(|| {
        todo.par_iter().try_for_each(|&cell| -> Result<(), Failure> {
            let row = sweep::run_cell(&sc, cell)?;
            eprintln!(
                "{} load {} seed {}: pdr {:.2}",
                row.protocol, row.load, row.seed, row.pdr_pct
            );
            // Rewritten after every cell so an interrupted grid can resume.
            let mut rows = rows.lock().expect("grid rows lock");
            rows.push(row);
            write_atomic(&path, sweep::grid_csv(&rows).as_bytes())?;
            Ok(())
        })
    })?;
    let rows: Vec<GridRow> = rows.into_inner().expect("grid rows lock");
    write_atomic(&path, sweep::grid_csv(&rows).as_bytes())?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    for c in sweep::check_orderings(&rows) {
        println!("{}: {}", c.name, if c.passed() { "holds" } else { "violated" });
        for f in &c.failures {
            println!("  {f}");
        }
    }
    Ok(())
}

fn cmd_validate(scenario: Option<PathBuf>) -> Result<(), Failure> {
    let sc = load_scenario(scenario.as_deref())?;
    print!("{}", sc.echo());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Validate { scenario } => cmd_validate(scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(v)) => {
            eprintln!("invalid configuration ({} problem(s)):", v.len());
            for line in v {
                eprintln!("  {line}");
            }
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Io(m)) => {
            eprintln!("io failure: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
