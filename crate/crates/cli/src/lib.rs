//! Command-line front end: argument parsing, the analysis pipeline and output
//! writing. The binary in `main.rs` is a thin wrapper around [`run`].

pub mod error;
pub mod pipeline;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ovsens::ingest::ZoneSpec;
use ovsens::report::{Format, Rendered};
use ovsens::Error;

pub use error::{PResult, PipelineError};
pub use pipeline::{run_pipeline, Command, Options};

#[derive(Debug, Parser)]
#[command(name = "ovsens", version, about = "Omitted-variable sensitivity analysis for regression treatment effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Fit the outcome regression (after optional stepwise selection).
    Fit(Common),
    /// Treatment-confounding and partial-R² benchmarks for every covariate and candidate.
    Benchmark(Common),
    /// Sensitivity intervals for the treatment coefficient.
    Sensitivity(Common),
    /// Linear-combination effect targets, their benchmarks and intervals.
    Targets(Common),
    /// Propensity-score subclassification, balance check and stratified benchmarks.
    Propensity(Common),
    /// Refit every benchmark variable and compare against the closed forms.
    Verify(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Analysis configuration (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Data file, overriding the one named in the config.
    #[arg(short, long)]
    pub data: Option<PathBuf>,
    /// Output format.
    #[arg(short, long, default_value = "text")]
    pub format: String,
    /// Output file (text, json) or directory (csv). Defaults to stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Comma-separated zones: `T:R`, `T:R:k`, `benchmark:<var>[:R]`.
    #[arg(long)]
    pub zones: Option<String>,
    /// Confidence level of the intervals.
    #[arg(long)]
    pub q: Option<f64>,
    /// Worker threads for parallel benchmark refits (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Record the wall-clock time in the report metadata.
    #[arg(long)]
    pub timestamp: bool,
}

impl Sub {
    pub fn parts(&self) -> (Command, &Common) {
        match self {
            Sub::Fit(c) => (Command::Fit, c),
            Sub::Benchmark(c) => (Command::Benchmark, c),
            Sub::Sensitivity(c) => (Command::Sensitivity, c),
            Sub::Targets(c) => (Command::Targets, c),
            Sub::Propensity(c) => (Command::Propensity, c),
            Sub::Verify(c) => (Command::Verify, c),
        }
    }
}

fn usage_error(operation: &'static str, source: Error) -> PipelineError {
    PipelineError {
        module: "cli_report",
        operation,
        source,
    }
}

/// Runs a parsed command line and returns the rendered output files.
pub fn execute(cli: &Cli) -> PResult<Vec<Rendered>> {
    let (command, common) = cli.command.parts();
    let format: Format = common.format.parse().map_err(|e| usage_error("parse_args", e))?;
    let zones = common
        .zones
        .as_deref()
        .map(ZoneSpec::parse_list)
        .transpose()
        .map_err(|e| usage_error("parse_args", e))?;
    let opts = Options {
        config: common.config.clone(),
        data: common.data.clone(),
        zones,
        q_level: common.q,
        timestamp: common.timestamp,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| usage_error("thread_pool", Error::InvalidArgument(e.to_string())))?;
    let report = pool.install(|| run_pipeline(command, &opts))?;
    report.render(format).map_err(|e| usage_error("render", e))
}

/// Writes rendered output to `out` or, without one, to `stdout`.
pub fn write_output(rendered: &[Rendered], out: Option<&std::path::Path>, stdout: &mut dyn Write) -> PResult<()> {
    let io = |path: &std::path::Path, e: std::io::Error| {
        usage_error(
            "write_output",
            Error::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            },
        )
    };
    match out {
        None => {
            let many = rendered.len() > 1;
            for r in rendered {
                let res = if many {
                    writeln!(stdout, "# {}", r.name).and_then(|_| stdout.write_all(&r.bytes))
                } else {
                    stdout.write_all(&r.bytes)
                };
                res.map_err(|e| io(std::path::Path::new("<stdout>"), e))?;
            }
            Ok(())
        }
        Some(path) if rendered.len() == 1 && !path.is_dir() => {
            std::fs::write(path, &rendered[0].bytes).map_err(|e| io(path, e))
        }
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            for r in rendered {
                let p = dir.join(&r.name);
                std::fs::write(&p, &r.bytes).map_err(|e| io(&p, e))?;
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs the pipeline and writes the output. Returns the
/// process exit code; diagnostics go to `stderr`.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = execute(&cli).and_then(|r| write_output(&r, cli.command.parts().1.out.as_deref(), stdout));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
