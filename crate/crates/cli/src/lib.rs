//! Command-line front end: argument parsing, config merging and dispatch.

pub mod commands;
pub mod config;
pub mod emit;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use schottky_dilog::exec::ExecMode;
use schottky_dilog::moebius::ComplexPoint;
use schottky_dilog::poincare::WeightMode;
use sha2::{Digest, Sha256};

use config::{ConfigError, Format, PolylogFunction, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "schottky", version, about = "Single-valued polylogarithms and Poincare series over Schottky groups")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FLOAT")]
    pub tol: Option<f64>,
    #[arg(long, global = true, value_name = "INT")]
    pub max_len: Option<usize>,
    #[arg(long, global = true, value_name = "INT")]
    pub depth: Option<usize>,
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub weight: Option<WeightArg>,
    #[arg(long, global = true, value_name = "INT")]
    pub threads: Option<usize>,
    /// Deterministic reductions (default).
    #[arg(long, global = true, conflicts_with = "fast")]
    pub strict: bool,
    /// Finer work splitting; results may differ in the last bits.
    #[arg(long, global = true)]
    pub fast: bool,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    Holomorphic,
    Absolute,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FunctionArg {
    Li,
    BlochWigner,
    RamakrishnanL,
    RamakrishnanD,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Li_n, Bloch-Wigner D and Ramakrishnan's L_m, D_m at a point.
    Polylog(PolylogArgs),
    /// Elliptic dilogarithm sum over the Tate curve.
    Elliptic(EllipticArgs),
    #[command(subcommand)]
    Group(GroupCommand),
    #[command(subcommand)]
    Measure(MeasureCommand),
    #[command(subcommand)]
    Series(SeriesCommand),
    /// Monte-Carlo Bers integral of the Bloch-Wigner function.
    Bers,
}

#[derive(Debug, Args)]
pub struct PolylogArgs {
    /// Point as `re,im`, `re` or `inf`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    pub z: Option<ComplexPoint>,
    #[arg(long)]
    pub order: Option<u32>,
    #[arg(long, value_enum, conflicts_with = "bloch_wigner")]
    pub function: Option<FunctionArg>,
    #[arg(long)]
    pub bloch_wigner: bool,
}

#[derive(Debug, Args)]
pub struct EllipticArgs {
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    pub q: Option<ComplexPoint>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    pub x: Option<ComplexPoint>,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    pub z: Option<ComplexPoint>,
}

#[derive(Debug, Subcommand)]
pub enum GroupCommand {
    Validate,
    Limitset,
    Delta,
    Nielsen,
}

#[derive(Debug, Subcommand)]
pub enum MeasureCommand {
    Build,
    Residual,
}

#[derive(Debug, Subcommand)]
pub enum SeriesCommand {
    Eval(PointArgs),
    Automorphy,
    Report(PointArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Polylog(_) => "polylog",
            Command::Elliptic(_) => "elliptic",
            Command::Group(GroupCommand::Validate) => "group validate",
            Command::Group(GroupCommand::Limitset) => "group limitset",
            Command::Group(GroupCommand::Delta) => "group delta",
            Command::Group(GroupCommand::Nielsen) => "group nielsen",
            Command::Measure(MeasureCommand::Build) => "measure build",
            Command::Measure(MeasureCommand::Residual) => "measure residual",
            Command::Series(SeriesCommand::Eval(_)) => "series eval",
            Command::Series(SeriesCommand::Automorphy) => "series automorphy",
            Command::Series(SeriesCommand::Report(_)) => "series report",
            Command::Bers => "bers",
        }
    }
}

/// Parses `re,im`, a bare real `re`, or `inf`.
pub fn parse_point(s: &str) -> Result<ComplexPoint, String> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") {
        return Ok(ComplexPoint::Infinity);
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
    let (re, im) = match t.split_once(',') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => (num(t)?, 0.0),
    };
    if !(re.is_finite() && im.is_finite()) {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(ComplexPoint::new(re, im))
}

/// Flags override config values.
fn merge(cfg: &mut RunConfig, cli: &Cli) {
    let g = &cli.global;
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = Some(v);
            }
        };
    }
    set!(tol, g.tol);
    set!(max_len, g.max_len);
    set!(depth, g.depth);
    set!(seed, g.seed);
    set!(threads, g.threads);
    set!(format, g.format);
    set!(
        weight,
        g.weight.map(|w| match w {
            WeightArg::Holomorphic => WeightMode::Holomorphic,
            WeightArg::Absolute => WeightMode::Absolute,
        })
    );
    if g.fast {
        cfg.mode = Some(ExecMode::Fast);
    } else if g.strict {
        cfg.mode = Some(ExecMode::Strict);
    }
    match &cli.command {
        Command::Polylog(a) => {
            set!(z, a.z);
            set!(order, a.order);
            if a.bloch_wigner {
                cfg.function = Some(PolylogFunction::BlochWigner);
            }
            set!(
                function,
                a.function.map(|f| match f {
                    FunctionArg::Li => PolylogFunction::Li,
                    FunctionArg::BlochWigner => PolylogFunction::BlochWigner,
                    FunctionArg::RamakrishnanL => PolylogFunction::RamakrishnanL,
                    FunctionArg::RamakrishnanD => PolylogFunction::RamakrishnanD,
                })
            );
        }
        Command::Elliptic(a) => {
            set!(q, a.q.and_then(|q| q.finite()).map(|q| [q.re, q.im]));
            set!(x, a.x);
        }
        Command::Series(SeriesCommand::Eval(p) | SeriesCommand::Report(p)) => set!(z, p.z),
        _ => {}
    }
}

pub fn config_hash(cfg: &RunConfig) -> String {
    Sha256::digest(cfg.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (mut cfg, source) = match &cli.global.config {
        Some(path) => match config::load_config(path) {
            Ok((c, s)) => (c, Some(s)),
            Err(e) => {
                eprintln!("{e}");
                return EXIT_CONFIG;
            }
        },
        None => (RunConfig::default(), None),
    };
    merge(&mut cfg, &cli);
    let base = cli.global.config.as_ref().and_then(|p| p.parent().map(PathBuf::from)).unwrap_or_default();
    let hash = config_hash(&cfg);
    let name = cli.command.name();
    let outcome = commands::dispatch(&cli.command, &cfg, &base);
    let out = cli.global.out.as_deref();
    match outcome {
        Err(commands::Failure::Config(e)) => {
            eprintln!("{}", e.locate(cli.global.config.as_deref(), source.as_deref()));
            EXIT_CONFIG
        }
        Err(commands::Failure::Io(msg)) => {
            eprintln!("{msg}");
            EXIT_IO
        }
        Err(commands::Failure::Numeric(msg)) => {
            let diagnostics = vec![msg.clone()];
            let report = emit::Report { command: name, config_hash: &hash, results: &serde_json::Value::Null, diagnostics: &diagnostics };
            if let Err(e) = emit::write_output(out, &emit::report_bytes(&report)) {
                eprintln!("{e}");
                return EXIT_IO;
            }
            eprintln!("{msg}");
            EXIT_NONCONVERGENCE
        }
        Ok(o) => {
            let report = emit::Report { command: name, config_hash: &hash, results: &o.results, diagnostics: &o.diagnostics };
            let written = match (&o.artifact, out) {
                (Some(bytes), Some(_)) => emit::write_output(out, bytes)
                    .and_then(|_| emit::write_output(None, &emit::report_bytes(&report))),
                (Some(bytes), None) => emit::write_output(None, bytes),
                (None, _) => emit::write_output(out, &emit::report_bytes(&report)),
            };
            if let Err(e) = written {
                eprintln!("{e}");
                return EXIT_IO;
            }
            if o.converged {
                EXIT_OK
            } else {
                for d in &o.diagnostics {
                    eprintln!("{d}");
                }
                EXIT_NONCONVERGENCE
            }
        }
    }
}

impl From<ConfigError> for commands::Failure {
    fn from(e: ConfigError) -> Self {
        commands::Failure::Config(e)
    }
}
