//! Batch front-end: configuration, engine dispatch, CSV output and
//! comparison of result files.

pub mod compare;
pub mod config;
pub mod csvio;
pub mod engines;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use config::{parse_override, Engine, RunConfig};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CSM_IEOM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "csm-ieom", version, about = "Central spin model autocorrelation engines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective-Hamiltonian propagation of the central spin autocorrelation.
    Ieom(RunFlags),
    /// Classical ensemble simulation of a finite bath.
    Classical(RunFlags),
    /// Exact quantum dynamics of a small bath.
    Exact(RunFlags),
    /// Closed-form frozen Overhauser field curve.
    Frozen(RunFlags),
    /// Chain coefficients, chain eigenvalues and head weights.
    Coeffs(RunFlags),
    /// Deviation statistics between two result files.
    Compare(CompareArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunFlags {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` override, applied last; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    /// Number of bath spins or `inf`.
    #[arg(long)]
    pub n_bath: Option<String>,
    #[arg(long)]
    pub n_tr: Option<String>,
    /// Per-site boson caps, e.g. `181,8,1`.
    #[arg(long)]
    pub n_max: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub t_max: Option<String>,
    /// Integration steps per output sample.
    #[arg(long)]
    pub stride: Option<String>,
    /// Field on the central spin, e.g. `10,0,0`.
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<String>,
    #[arg(long)]
    pub z_nuclear: Option<String>,
    #[arg(long)]
    pub nuclear_zeeman: bool,
    /// `chain` or `diagonal`.
    #[arg(long)]
    pub representation: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<String>,
    /// `exact` or `analytic` chain coefficients.
    #[arg(long)]
    pub coefficients: Option<String>,
    #[arg(long)]
    pub no_central: bool,
    #[arg(long)]
    pub no_chain: bool,
    /// `full` or `reachable`.
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub basis_cache: Option<String>,
    #[arg(long)]
    pub max_states: Option<String>,
    /// Classical mode: `dynamic` or `frozen`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Random vectors of the exact engine, or `full`.
    #[arg(long)]
    pub vectors: Option<String>,
    /// `pair` or `polarized`.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub block: Option<String>,
    #[arg(long)]
    pub max_bath: Option<String>,
    /// Fixed-order parallel reductions, bitwise reproducible across thread
    /// counts.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub file_a: PathBuf,
    pub file_b: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub t_min: f64,
    #[arg(long, default_value_t = f64::INFINITY)]
    pub t_max: f64,
    /// Report the first time the deviation exceeds this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunFlags {
    /// Flag values as `key=value` pairs in configuration-key spelling.
    pub fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut opt = |k: &str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        };
        opt("gamma", &self.gamma);
        opt("n_bath", &self.n_bath);
        opt("n_tr", &self.n_tr);
        opt("n_max", &self.n_max);
        opt("dt", &self.dt);
        opt("t_max", &self.t_max);
        opt("stride", &self.stride);
        opt("h", &self.h);
        opt("z_nuclear", &self.z_nuclear);
        opt("representation", &self.representation);
        opt("samples", &self.samples);
        opt("seed", &self.seed);
        opt("out", &self.out);
        opt("coefficients", &self.coefficients);
        opt("basis", &self.basis);
        opt("basis_cache", &self.basis_cache);
        opt("max_states", &self.max_states);
        opt("mode", &self.mode);
        opt("vectors", &self.vectors);
        opt("estimator", &self.estimator);
        opt("block", &self.block);
        opt("max_bath", &self.max_bath);
        let flag = |k: &str, on: bool| on.then(|| (k.to_string(), "true".to_string()));
        out.extend(flag("enable_nuclear_zeeman", self.nuclear_zeeman));
        out.extend(self.no_central.then(|| ("enable_central".into(), "false".into())));
        out.extend(self.no_chain.then(|| ("enable_chain".into(), "false".into())));
        out.extend(flag("deterministic", self.deterministic));
        for s in &self.set {
            out.push(parse_override(s)?);
        }
        Ok(out)
    }

    /// Configuration for `engine`: file first, then flags.
    pub fn resolve(&self, engine: Engine) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(engine);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        cfg.engine = engine;
        cfg.apply(self.overrides()?)?;
        if cfg.engine != engine {
            return Err(config_engine_conflict(engine, cfg.engine));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn config_engine_conflict(cmd: Engine, set: Engine) -> Error {
    Error::Parameter {
        name: "engine",
        reason: format!("override selects {set} but the subcommand is {cmd}"),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(std::io::BufWriter::new(std::fs::File::create(p)?))
        }
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

/// Sizes the global thread pool from [`THREADS_ENV`] when set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{THREADS_ENV}: expected a thread count, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Internal(e.to_string()))
}

pub fn run(cli: Cli) -> Result<()> {
    let (flags, engine) = match cli.command {
        Command::Compare(args) => return run_compare(&args),
        Command::Ieom(f) => (f, Engine::Ieom),
        Command::Classical(f) => (f, Engine::Classical),
        Command::Exact(f) => (f, Engine::Exact),
        Command::Frozen(f) => (f, Engine::Frozen),
        Command::Coeffs(f) => (f, Engine::Coeffs),
    };
    let cfg = flags.resolve(engine)?;
    log::info!("running {engine} with {} threads", rayon::current_num_threads());
    if engine == Engine::Coeffs {
        let table = engines::coefficient_table(&cfg)?;
        let mut w = open_output(cfg.out.as_deref())?;
        csvio::write_coefficients(&mut w, &table)?;
        w.flush()?;
        return Ok(());
    }
    let series = engines::simulate(&cfg)?;
    let mut w = open_output(cfg.out.as_deref())?;
    csvio::write_series(&mut w, &series)?;
    w.flush()?;
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<()> {
    let a = csvio::load_series(&args.file_a)?;
    let b = csvio::load_series(&args.file_b)?;
    let stats = compare::compare(&a, &b, (args.t_min, args.t_max), args.threshold)?;
    let mut w = open_output(args.out.as_deref())?;
    writeln!(w, "file_a={}", args.file_a.display())?;
    writeln!(w, "file_b={}", args.file_b.display())?;
    for key in ["engine", "coefficients", "representation"] {
        if let (Some(x), Some(y)) = (a.meta(key), b.meta(key)) {
            writeln!(w, "{key}={x},{y}")?;
        }
    }
    for (k, v) in stats.to_pairs() {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}
