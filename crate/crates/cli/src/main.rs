mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clipkde::experiments::DensityCatalog;
use clipkde::Error;

use commands::{Format, Producer};
use config::ExperimentConfig;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O or internal error
  2  invalid config or usage
  3  unknown density or estimator id
  4  invalid or empty region
  5  unsupported combination (mode and dimension, estimator and mode)
  6  numerical failure (quadrature, bandwidth too large, integral check)
  7  validation failed

Errors are also printed to stderr as one JSON object with `error`, `message`
and `exit_code`.";

#[derive(Parser)]
#[command(name = "clipkde", version, about = "Clipped variable-bandwidth kernel density estimators", after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config; defaults are used for anything missing.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Output does not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory [default: config `output.dir`, else `.`]
    #[arg(long, global = true, env = "CLIPKDE_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one estimator on one seeded sample.
    Estimate,
    /// Sup-norm error rate over `n_values` and replications.
    Rates,
    /// Sup-norm gap between the real and ideal McKay estimators.
    Gap,
    /// Log-log slope of the exact bias against h.
    BiasScan,
    /// Print the kernel moments.
    Moments {
        /// Dimension [default: that of the config density]
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Run registration, kernel and config checks, or re-run an output file.
    Validate {
        /// Re-run the command embedded in this output file and compare bytes.
        #[arg(long)]
        reproduce: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::GridMismatch | Error::SingularSystem => 1,
        Error::UnknownId { .. } => 3,
        Error::InvalidRegion(_) | Error::EmptyRegion => 4,
        Error::Unsupported(_) | Error::UnsupportedOrder(_) => 5,
        Error::BandwidthTooLarge { .. }
        | Error::Quadrature { .. }
        | Error::ZeroScale
        | Error::NegativeDensity(_)
        | Error::IntegralCheck { .. }
        | Error::InsufficientData(_) => 6,
        _ => 2,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match exit_code(e) {
        1 => "internal",
        3 => "unknown_id",
        4 => "invalid_region",
        5 => "unsupported",
        6 => "numerical",
        _ => "config",
    }
}

fn fail(e: &Error) -> ExitCode {
    let code = exit_code(e);
    let report = serde_json::json!({
        "error": error_kind(e),
        "message": e.to_string(),
        "exit_code": code,
    });
    eprintln!("{report}");
    ExitCode::from(code)
}

fn validation_failed(message: String) -> ExitCode {
    let report = serde_json::json!({
        "error": "validation_failed",
        "message": message,
        "exit_code": 7,
    });
    eprintln!("{report}");
    ExitCode::from(7)
}

fn load_config(global: &Global) -> clipkde::Result<ExperimentConfig> {
    let mut config = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn out_dir(global: &Global, config: &ExperimentConfig) -> PathBuf {
    global
        .out_dir
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn reproduce(path: &Path, catalog: &DensityCatalog) -> clipkde::Result<ExitCode> {
    let original = std::fs::read(path)?;
    let prov = output::read_provenance(&original)?;
    let config = ExperimentConfig::from_toml(&prov.config)?;
    let what = Producer::from_name(&prov.command)?;
    let format: Format = prov.format.parse()?;
    let artifacts = commands::produce(what, &config, format, catalog)?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let matching = artifacts.iter().find(|a| a.name == name).or(match artifacts.as_slice() {
        [only] => Some(only),
        _ => None,
    });
    let Some(fresh) = matching else {
        return Ok(validation_failed(format!(
            "re-running `{}` wrote no file named {name}",
            prov.command
        )));
    };
    if prov.version != output::VERSION {
        println!("note: file written by clipkde {}, this is {}", prov.version, output::VERSION);
    }
    if fresh.bytes == original {
        println!("reproduce {}  PASS  {} bytes identical", path.display(), original.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("reproduce {}  FAIL", path.display());
        Ok(validation_failed(format!("{} differs from a fresh run", path.display())))
    }
}

fn run(cli: Cli) -> clipkde::Result<ExitCode> {
    if let Some(workers) = cli.global.workers {
        if workers == 0 {
            return Err(Error::InvalidArgument("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let catalog = DensityCatalog::with_builtins();
    let config = load_config(&cli.global)?;
    let what = match cli.command {
        Command::Estimate => Producer::Estimate,
        Command::Rates => Producer::Rates,
        Command::Gap => Producer::Gap,
        Command::BiasScan => Producer::BiasScan,
        Command::Moments { dim } => {
            let dim = match dim {
                Some(d) => d,
                None => config.density_model(&catalog)?.dim(),
            };
            print!("{}", commands::moments_table(&config.kernel_spec(dim)?)?);
            return Ok(ExitCode::SUCCESS);
        }
        Command::Validate { reproduce: Some(path) } => return reproduce(&path, &catalog),
        Command::Validate { reproduce: None } => {
            let checks = commands::validation_checks(&config, &catalog);
            print!("{}", commands::checks_table(&checks));
            let failed = checks.iter().filter(|c| !c.passed).count();
            return Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                validation_failed(format!("{failed} checks failed"))
            });
        }
    };
    let resolved = config.resolved(&catalog)?;
    let artifacts = commands::produce(what, &resolved, cli.global.format, &catalog)?;
    for path in output::write_all(&out_dir(&cli.global, &config), &artifacts)? {
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}
