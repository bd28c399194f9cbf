//! `tsexam` command-line interface: configuration loading, argument parsing,
//! and the subcommand implementations.
//!
//! Every subcommand writes its artifacts under the configured run directory
//! together with a manifest of content digests; with the mock provider, runs
//! are byte-identical functions of (config, seed).

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{CommandFactory, Parser, Subcommand};

pub use config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "tsexam",
    version,
    about = "Build, verify, refine, and administer multiple-choice time series reasoning exams",
    long_about = None,
    max_term_width = 100
)]
pub struct Cli {
    /// Path to the run configuration file (TOML).
    #[arg(short, long, global = true, default_value = "tsexam.toml")]
    pub config: PathBuf,

    /// Override the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Override the config's output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a built-in synthetic exam.
    Gen {
        /// Per-category question count as CATEGORY=N (repeatable); omit for
        /// the default category mix.
        #[arg(long = "count", value_name = "CATEGORY=N")]
        counts: Vec<String>,
    },
    /// Refine an exam iteratively with IRT fitting and resampling.
    Refine {
        /// Exam file to refine.
        #[arg(long)]
        exam: PathBuf,
    },
    /// Run the template-forging agent over the configured dataset.
    Agent {
        /// Number of template slots to attempt (default from config).
        #[arg(long)]
        num_templates: Option<usize>,
    },
    /// Administer an exam to a configured model and record its responses.
    Administer {
        /// Exam file to administer.
        #[arg(long)]
        exam: PathBuf,
        /// Model role name from the config's [models] table.
        #[arg(long)]
        model: String,
        /// Series representation: vision or text (default from config).
        #[arg(long)]
        modality: Option<String>,
        /// Plot resolution for vision modality (default from config).
        #[arg(long)]
        dpi: Option<u32>,
    },
    /// Score recorded responses against an exam.
    Score {
        #[arg(long)]
        exam: PathBuf,
        /// Newline-delimited response records from `administer`.
        #[arg(long)]
        responses: PathBuf,
    },
    /// Panel-of-judges rubric scoring over an exam's questions.
    Jury {
        #[arg(long)]
        exam: PathBuf,
    },
    /// Embedding and edit-distance diversity over an exam's questions.
    Diversity {
        #[arg(long)]
        exam: PathBuf,
        /// Questions sampled for the pairwise metrics.
        #[arg(long)]
        sample: Option<usize>,
        /// Embedding model role name (defaults to `embedder`).
        #[arg(long)]
        embedder: Option<String>,
    },
    /// Render every question's series to a PNG plot.
    Render {
        #[arg(long)]
        exam: PathBuf,
        /// Plot resolution in DPI (default from config).
        #[arg(long)]
        dpi: Option<u32>,
    },
    /// Interactively approve or reject template documents.
    Review {
        /// Template files or directories containing .toml documents.
        paths: Vec<PathBuf>,
    },
}

/// Render the long help text (golden-file tested).
pub fn long_help() -> String {
    Cli::command().render_long_help().to_string()
}

/// Parse arguments and run the selected command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let mut config = Config::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out_dir) = cli.out_dir {
        config.out_dir = out_dir;
    }
    std::fs::create_dir_all(&config.out_dir)?;

    match cli.command {
        Command::Gen { counts } => commands::gen(&config, &counts),
        Command::Refine { exam } => commands::refine(&config, &exam),
        Command::Agent { num_templates } => commands::agent(&config, num_templates),
        Command::Administer {
            exam,
            model,
            modality,
            dpi,
        } => commands::administer(&config, &exam, &model, modality.as_deref(), dpi),
        Command::Score { exam, responses } => commands::score(&config, &exam, &responses),
        Command::Jury { exam } => commands::jury(&config, &exam),
        Command::Diversity {
            exam,
            sample,
            embedder,
        } => commands::diversity(&config, &exam, sample, embedder.as_deref()),
        Command::Render { exam, dpi } => commands::render(&config, &exam, dpi),
        Command::Review { paths } => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            commands::review(&config, &paths, stdin.lock(), stdout.lock())
        }
    }
}
