//! `railpath`: synthetic data, ground truth, extraction, evaluation,
//! rendering and timing from the command line.
//!
//! Files of one image share a stem: `out/scene0003` stands for
//! `out/scene0003.scene.json`, `out/scene0003.center.tpeh` and so on.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 I/O error,
//! 3 no start path found.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "railpath",
    version,
    about = "Rail ego-path extraction from track-point heatmaps"
)]
struct Cli {
    /// Images processed in parallel; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate scenes with known ego-paths and their heatmaps.
    Synth(commands::SynthArgs),
    /// Build ground-truth heatmaps and masks from scene files.
    Gtgen(commands::GtgenArgs),
    /// Extract ego-paths from heatmaps.
    Extract(commands::ExtractArgs),
    /// Score extracted paths against scene files.
    Eval(commands::EvalArgs),
    /// Draw extracted paths, optionally scored against a scene.
    Render(commands::RenderArgs),
    /// Time the pipeline on one image.
    Bench(commands::BenchArgs),
}

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NoStartPath(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::NoStartPath(_) => 3,
        }
    }

    /// Prefixes the message with the image it concerns.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
            CliError::NoStartPath(m) => CliError::NoStartPath(format!("{what}: {m}")),
        }
    }
}

impl From<railpath::Error> for CliError {
    fn from(e: railpath::Error) -> Self {
        use railpath::Error as E;
        match e {
            E::NoStartPath { .. } => CliError::NoStartPath(e.to_string()),
            E::Io { .. } | E::Png(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

/// `dir/stem` when a directory is given, otherwise the stem itself.
pub fn stem_in(dir: Option<&Path>, stem: &Path) -> PathBuf {
    match dir {
        Some(d) => d.join(stem.file_name().unwrap_or(stem.as_os_str())),
        None => stem.to_path_buf(),
    }
}

/// `stem` with `suffix` appended to its file name.
pub fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Gtgen(a) => commands::gtgen(&a),
        Command::Extract(a) => commands::extract(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Render(a) => commands::render(&a),
        Command::Bench(a) => commands::bench(&a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not failures; usage errors are
            // invalid input, which keeps exit code 2 for I/O.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
