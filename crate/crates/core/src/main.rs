use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use subtrend::config::RunConfig;
use subtrend::pipeline::{
    cmd_analyze, cmd_export, cmd_ingest, cmd_train, AnalysisOutput, Scope, Task,
};

#[derive(Parser)]
#[command(
    name = "subtrend",
    version,
    about = "Sentiment and abusive-language trends in movie subtitles"
)]
struct Cli {
    /// Run configuration (flat key = value file).
    #[arg(long, global = true, default_value = "subtrend.conf")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Sentiment,
    Abuse,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Corpus,
    Film,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the catalog and every subtitle file into a manifest.
    Ingest,
    /// Train and evaluate a native linear model.
    Train {
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Labelled CSV; defaults to the path in the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score films and write the report bundle.
    Analyze {
        #[arg(long, value_enum, default_value = "corpus")]
        scope: ScopeArg,
        /// Film id, required with `--scope film`.
        #[arg(long)]
        id: Option<String>,
    },
    /// Rewrite CSVs from the JSON report bundles.
    Export,
}

fn run(cli: Cli) -> subtrend::Result<()> {
    let config = RunConfig::load(&cli.config)?;
    match cli.command {
        Command::Ingest => {
            let m = cmd_ingest(&config)?;
            println!(
                "ingested {} films ({} failed, {} without subtitles, {} unmatched files)",
                m.films.len(),
                m.failed.len(),
                m.missing_subtitles.len(),
                m.unmatched_files.len()
            );
        }
        Command::Train { task, data } => {
            let task = match task {
                TaskArg::Sentiment => Task::Sentiment,
                TaskArg::Abuse => Task::Abuse,
            };
            let r = cmd_train(&config, task, data.as_deref())?;
            let (header, row) = r.test.csv_columns();
            let cells: Vec<String> = header
                .iter()
                .zip(&row)
                .map(|(h, v)| format!("{h}={v:.4}"))
                .collect();
            println!("{} ({}): {}", r.model, task.as_str(), cells.join(" "));
        }
        Command::Analyze { scope, id } => {
            let scope = match (scope, id) {
                (ScopeArg::Corpus, _) => Scope::Corpus,
                (ScopeArg::Film, Some(id)) => Scope::Film(id),
                (ScopeArg::Film, None) => {
                    return Err(subtrend::Error::InvalidArgument(
                        "--scope film needs --id".into(),
                    ))
                }
            };
            match cmd_analyze(&config, &scope)? {
                AnalysisOutput::Corpus(r) => {
                    println!(
                        "analyzed {} films with backend {}",
                        r.film_count, r.meta.backend
                    );
                    for f in &r.fallbacks {
                        eprintln!(
                            "fallback: {} items {}..{}: {}",
                            f.task, f.start, f.end, f.reason
                        );
                    }
                }
                AnalysisOutput::Film(r) => {
                    println!(
                        "{}: {} windows, {} cues",
                        r.summary.film_id,
                        r.timeline.windows.len(),
                        r.cues.len()
                    )
                }
            }
        }
        Command::Export => {
            let n = cmd_export(&config)?;
            println!("exported {n} bundles");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
