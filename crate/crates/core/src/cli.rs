//! The `fblab` command line: one subcommand per experiment, a JSON config
//! with flag overrides, and deterministic artifacts under an output root.
//!
//! Exit codes: 0 success, 1 compute failure (a `report.json` records it),
//! 2 configuration error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

mod commands;
mod oracles;

pub use commands::linearized_bound;
pub use oracles::{oracle_suite, OracleCheck};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "FBLAB_OUT";
/// Output root when neither flag, config nor environment names one.
pub const DEFAULT_OUT: &str = "fblab-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Radial,
    Linearized,
    Flatness,
    Monotonicity,
    SweepGamma2,
    SweepGamma0,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Radial => "radial",
            Self::Linearized => "linearized",
            Self::Flatness => "flatness",
            Self::Monotonicity => "monotonicity",
            Self::SweepGamma2 => "sweep-gamma2",
            Self::SweepGamma0 => "sweep-gamma0",
            Self::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Ap,
    Ac,
}

/// Every setting of a run. Config files use the same keys; unknown keys
/// are rejected. After resolution every key the command uses is filled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    /// Grid dimension (solve) or radial dimension n (radial, sweeps).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<f64>,
    /// Tilt of the planar profile data in 2D solves, degrees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescaled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shoot_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangential_dims: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_test: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Radial geometry for the sweeps instead of the 1D interval.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radial: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Recorded for reproducibility; every search in the laboratory is
    /// deterministic, so no computation draws from it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads for parallel loops; 0 uses all cores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "fblab", version, about = "Free boundary numerical laboratory")]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root (default: $FBLAB_OUT, else ./fblab-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel loops (0: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Recorded in the report; all searches are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Minimize the energy on a 1D interval or a 2D square.
    Solve(SolveArgs),
    /// Radial exterior solution and its free boundary offset mu.
    Radial(RadialArgs),
    /// Weighted degenerate equation on a half space.
    Linearized(LinearizedArgs),
    /// Flatness decay along a dyadic ladder on an embedded radial solution.
    Flatness(FlatnessArgs),
    /// Monotonicity quantity on a relaxed radial minimizer.
    Monotonicity(MonotonicityArgs),
    /// Rescaled energies as gamma increases to 2.
    SweepGamma2(SweepArgs),
    /// Unrescaled energies as gamma decreases to 0.
    SweepGamma0(SweepArgs),
    /// Closed-form oracle suite.
    Validate,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    gamma: Option<f64>,
    /// Grid dimension, 1 or 2.
    #[arg(long)]
    dim: Option<usize>,
    /// Cells per side.
    #[arg(long)]
    cells: Option<usize>,
    /// Boundary value at x = 0 (1D).
    #[arg(long)]
    left: Option<f64>,
    /// Boundary value at x = 1 (1D).
    #[arg(long)]
    right: Option<f64>,
    /// Tilt of the planar profile boundary data (2D), degrees.
    #[arg(long)]
    angle_deg: Option<f64>,
    /// Half width of the 2D square.
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveKind>,
    /// Scale the potential by c_gamma.
    #[arg(long)]
    rescaled: Option<bool>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    energy_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct RadialArgs {
    #[arg(long)]
    gamma: Option<f64>,
    /// Dimension n of the radial problem.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    shoot_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct LinearizedArgs {
    /// Weight exponent s in (-1, 0].
    #[arg(long, allow_negative_numbers = true)]
    s: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// Tangential dimensions, 1 or 2.
    #[arg(long)]
    tangential_dims: Option<usize>,
    /// Solve with the exact quadratic solution as data and report the error.
    #[arg(long)]
    exact_test: bool,
    #[arg(long)]
    solve_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct FlatnessArgs {
    #[arg(long)]
    gamma: Option<f64>,
    /// Blow-up factor of the embedded radial solution.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    half_width: Option<f64>,
    /// Base radius of the ladder.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Debug, Args)]
struct MonotonicityArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    half_width: Option<f64>,
    /// Comma-separated increasing radii.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated gammas.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long)]
    left: Option<f64>,
    #[arg(long)]
    right: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    /// Use the radial geometry of dimension --dim.
    #[arg(long)]
    radial: bool,
    #[arg(long)]
    dim: Option<usize>,
}

/// Keys set from the command line, for error attribution.
type FlagSet = BTreeSet<&'static str>;

macro_rules! overlay {
    ($cfg:ident, $flags:ident, $args:ident; $($key:ident),* $(,)?) => {
        $(
            if let Some(v) = $args.$key {
                $cfg.$key = Some(v);
                $flags.insert(stringify!($key));
            }
        )*
    };
}

fn overlay_flags(cli: Cli, cfg: &mut RunConfig) -> (Command, FlagSet) {
    let mut flags = FlagSet::new();
    let Cli { out, jobs, seed, command, .. } = cli;
    let global = GlobalArgs { out, jobs, seed };
    overlay!(cfg, flags, global; out, jobs, seed);
    let command = match command {
        Sub::Solve(a) => {
            overlay!(cfg, flags, a; gamma, dim, cells, left, right, angle_deg, half_width, objective, rescaled, max_iters, energy_tol);
            Command::Solve
        }
        Sub::Radial(a) => {
            overlay!(cfg, flags, a; gamma, dim, shoot_tol);
            Command::Radial
        }
        Sub::Linearized(a) => {
            let exact_test = a.exact_test.then_some(true);
            overlay!(cfg, flags, a; s, h, tangential_dims, solve_tol);
            let a = ExactFlag { exact_test };
            overlay!(cfg, flags, a; exact_test);
            Command::Linearized
        }
        Sub::Flatness(a) => {
            overlay!(cfg, flags, a; gamma, lambda, h, half_width, radius, rho, levels);
            Command::Flatness
        }
        Sub::Monotonicity(a) => {
            overlay!(cfg, flags, a; gamma, lambda, h, half_width, radii, max_iters);
            Command::Monotonicity
        }
        Sub::SweepGamma2(a) => {
            overlay_sweep(cfg, &mut flags, a);
            Command::SweepGamma2
        }
        Sub::SweepGamma0(a) => {
            overlay_sweep(cfg, &mut flags, a);
            Command::SweepGamma0
        }
        Sub::Validate => Command::Validate,
    };
    (command, flags)
}

struct GlobalArgs {
    out: Option<PathBuf>,
    jobs: Option<usize>,
    seed: Option<u64>,
}

struct ExactFlag {
    exact_test: Option<bool>,
}

struct RadialFlag {
    radial: Option<bool>,
}

fn overlay_sweep(cfg: &mut RunConfig, flags: &mut FlagSet, a: SweepArgs) {
    let radial = a.radial.then_some(true);
    overlay!(cfg, flags, a; gammas, left, right, cells, dim);
    let a = RadialFlag { radial };
    overlay!(cfg, flags, a; radial);
}

/// A configuration problem, attributed to a config line or a flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

/// Where configuration keys came from.
pub(crate) struct Sources {
    path: Option<PathBuf>,
    text: String,
    flags: FlagSet,
}

impl Sources {
    /// `path:line: key: msg` for config keys, `--key: msg` for flags.
    pub(crate) fn error(&self, key: &str, msg: impl std::fmt::Display) -> ConfigError {
        if self.flags.contains(key) {
            return ConfigError(format!("--{}: {msg}", key.replace('_', "-")));
        }
        let needle = format!("\"{key}\"");
        match (&self.path, self.text.lines().position(|l| l.contains(&needle))) {
            (Some(p), Some(line)) => ConfigError(format!("{}:{}: {key}: {msg}", p.display(), line + 1)),
            _ => ConfigError(format!("{key}: {msg}")),
        }
    }
}

fn load_config(path: &Path) -> std::result::Result<(RunConfig, String), ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let cfg = serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m).to_string();
        ConfigError(format!("{}:{}:{}: {msg}", path.display(), e.line(), e.column()))
    })?;
    Ok((cfg, text))
}

/// Output directory: flag or config `out`, else `$FBLAB_OUT`, else the
/// default root; artifacts go to `<root>/<command>`.
fn out_root(cfg: &RunConfig) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Result of a command: a JSON summary for the report and lines for stdout.
pub(crate) struct Outcome {
    pub summary: Value,
    pub stdout: Vec<String>,
    /// Nonzero when the run completed but a check failed.
    pub failed_check: Option<String>,
}

/// Run the command line `argv` (including the program name); returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (mut cfg, text, path) = match &cli.config {
        Some(p) => match load_config(p) {
            Ok((c, t)) => (c, t, Some(p.clone())),
            Err(e) => {
                eprintln!("{e}");
                return EXIT_CONFIG;
            }
        },
        None => (RunConfig::default(), String::new(), None),
    };
    let (command, flags) = overlay_flags(cli, &mut cfg);
    let sources = Sources { path, text, flags };
    if let Some(c) = cfg.command {
        if c != command {
            eprintln!(
                "{}",
                sources.error("command", format!("config is for `{}`, not `{}`", c.name(), command.name()))
            );
            return EXIT_CONFIG;
        }
    }
    cfg.command = Some(command);
    if let Err(e) = commands::resolve(command, &mut cfg, &sources) {
        eprintln!("{e}");
        return EXIT_CONFIG;
    }
    let dir = out_root(&cfg).join(command.name());
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("cannot create {}: {e}", dir.display());
        return EXIT_COMPUTE;
    }
    let jobs = cfg.jobs.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start {jobs} worker threads: {e}");
            return EXIT_COMPUTE;
        }
    };
    let result = pool.install(|| commands::execute(command, &cfg, &dir));
    let (status, code, body) = match result {
        Ok(o) => {
            for line in &o.stdout {
                println!("{line}");
            }
            match o.failed_check {
                None => ("ok", EXIT_OK, json!({ "result": o.summary })),
                Some(msg) => {
                    eprintln!("check failed: {msg}");
                    ("failed", EXIT_COMPUTE, json!({ "result": o.summary, "failure": msg }))
                }
            }
        }
        Err(e) => {
            eprintln!("{command} failed: {e}", command = command.name());
            ("failed", EXIT_COMPUTE, json!({ "failure": e.to_string() }))
        }
    };
    let mut report = json!({ "command": command.name(), "status": status, "config": cfg });
    if let (Value::Object(r), Value::Object(b)) = (&mut report, body) {
        r.extend(b);
    }
    match write_json(&dir.join("report.json"), &report) {
        Ok(()) => code,
        Err(e) => {
            eprintln!("cannot write report: {e}");
            EXIT_COMPUTE
        }
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Create `path` and hand a buffered writer to `f`.
pub(crate) fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush().map_err(Error::from)
}

/// Whitespace-separated columns with a `#` header, for gnuplot.
pub(crate) fn write_dat(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "# {}", header.join(" "))?;
        for r in rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:.10e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    })
}

/// A gnuplot script stub plotting column 2 against column 1 of `dat`.
pub(crate) fn write_plot_stub(dir: &Path, dat: &str, xlabel: &str, ylabel: &str) -> Result<()> {
    write_file(&dir.join("plot.gp"), |w| {
        writeln!(w, "# gnuplot -p plot.gp")?;
        writeln!(w, "set xlabel '{xlabel}'")?;
        writeln!(w, "set ylabel '{ylabel}'")?;
        writeln!(w, "plot '{dat}' using 1:2 with linespoints title '{ylabel}'")
    })
}
