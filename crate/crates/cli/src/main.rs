mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use layedit::synth::SynthConfig;
use layedit::ClassifierKind;

use config::{Overrides, RunConfig};

/// Bad input or configuration; exits with status 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// Some pages failed during a run.
#[derive(Debug)]
pub struct PageFailures(pub usize);

impl std::fmt::Display for PageFailures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} page(s) failed", self.0)
    }
}

impl std::error::Error for PageFailures {}

#[derive(Parser)]
#[command(name = "layedit", version, about = "Span-to-Markdown conversion driven by an edit queue")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert every page of a span file to Markdown.
    Transform {
        spans: PathBuf,
        /// Output directory; defaults to `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plain generation with a single trigger per page.
        #[arg(long)]
        no_edit: bool,
    },
    /// Compare plain generation against the edit queue on one corpus.
    Bench {
        spans: PathBuf,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted Markdown files against references, matched by file name.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label spans and write a label file.
    Classify {
        spans: PathBuf,
        /// Same as --classifier.
        #[arg(long)]
        kind: Option<ClassifierKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Edit queue tools.
    Queue {
        #[command(subcommand)]
        command: QueueCommand,
    },
    /// Check a span file and the configuration.
    Validate { spans: PathBuf },
    /// Write a seeded synthetic span file.
    Synth {
        #[arg(long, default_value_t = 20)]
        pages: usize,
        #[arg(long, default_value_t = 0.35)]
        copy_fraction: f64,
        #[arg(long, default_value_t = 360)]
        words_per_page: usize,
        #[arg(long, default_value_t = 0.5)]
        two_column_prob: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum QueueCommand {
    /// Build queues from a label file or the configured classifier.
    Build {
        spans: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// One JSON queue per line instead of a summary.
        #[arg(long)]
        dump: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut overrides = cli.overrides;
    if let Command::Classify { kind: Some(k), .. } = &cli.command {
        overrides.classifier = Some(*k);
    }
    let cfg = RunConfig::load(&overrides)?;
    match cli.command {
        Command::Transform { spans, out, no_edit } => commands::transform(&cfg, &spans, out, no_edit),
        Command::Bench { spans, out } => commands::bench(&cfg, &spans, out),
        Command::Eval { pred, reference, out } => commands::eval(&pred, &reference, out),
        Command::Classify { spans, out, .. } => commands::classify(&cfg, &spans, out),
        Command::Queue {
            command: QueueCommand::Build { spans, labels, dump, out },
        } => commands::queue_build(&cfg, &spans, labels, dump, out),
        Command::Validate { spans } => commands::validate(&cfg, &spans),
        Command::Synth {
            pages,
            copy_fraction,
            words_per_page,
            two_column_prob,
            out,
        } => {
            let synth = SynthConfig {
                pages,
                copy_fraction,
                words_per_page,
                two_column_prob,
                ..Default::default()
            };
            commands::synth(&cfg, synth, out)
        }
    }
}

/// 1 for invalid input or configuration, 2 for runtime failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<PageFailures>() {
            continue;
        }
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<layedit::Error>() {
            return match e {
                layedit::Error::Remote(_)
                | layedit::Error::Backbone { .. }
                | layedit::Error::Io(_) => 2,
                _ => 1,
            };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
