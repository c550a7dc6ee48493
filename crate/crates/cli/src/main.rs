use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use signaffect::pipeline::{self, Command, PipelineConfig, PipelineError};

/// Relate sign-language annotations to emotion labels from translations.
#[derive(Debug, Parser)]
#[command(name = "signaffect", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    min_frames: Option<u64>,
    #[arg(long, global = true)]
    min_support: Option<u64>,
    /// FER sidecar (JSON Lines).
    #[arg(long, global = true)]
    fer: Option<PathBuf>,
    #[arg(long, global = true)]
    fer_threshold: Option<f64>,
    #[arg(long, global = true, value_parser = ["utterance", "frame"])]
    group_folds_by: Option<String>,
    /// Worker threads (0 = all cores). Does not change any output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override any config key, e.g. `--set n_trees=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Expand spans to frames and map facial features to action units.
    Ingest,
    /// Tag translations with lexicon categories and apply the frame threshold.
    Tag,
    /// Rank annotated features by P(label | feature).
    Stats {
        /// Label to rank (category, or `category (lexicon)`). Repeatable.
        #[arg(long)]
        label: Vec<String>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Fit the forest on all labelled frames and write feature importance.
    Train,
    /// Cross-validate the forest.
    Eval,
    /// Frame-count histograms and a corpus summary.
    Report,
    /// Every command above, in order.
    All,
}

fn build_config(cli: &Cli) -> Result<(PipelineConfig, Command), PipelineError> {
    let c = &cli.common;
    let mut config = match &c.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    let here = Path::new("");
    let mut set = |key: &str, value: String| config.set(key, &value, here);
    if let Some(v) = c.seed {
        set("seed", v.to_string())?;
    }
    if let Some(v) = &c.out {
        set("out", v.display().to_string())?;
    }
    if let Some(v) = c.min_frames {
        set("min_frames", v.to_string())?;
    }
    if let Some(v) = c.min_support {
        set("min_support", v.to_string())?;
    }
    if let Some(v) = &c.fer {
        set("fer", v.display().to_string())?;
    }
    if let Some(v) = c.fer_threshold {
        set("fer_threshold", v.to_string())?;
    }
    if let Some(v) = &c.group_folds_by {
        set("group_folds_by", v.clone())?;
    }
    if let Some(v) = c.threads {
        set("threads", v.to_string())?;
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        set(k.trim(), v.trim().to_string())?;
    }
    let command = match &cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::Tag => Command::Tag,
        Cmd::Stats { label, top_k } => {
            if !label.is_empty() {
                config.labels = label.clone();
            }
            if let Some(k) = top_k {
                config.top_k = *k;
            }
            Command::Stats
        }
        Cmd::Train => Command::Train,
        Cmd::Eval => Command::Eval,
        Cmd::Report => Command::Report,
        Cmd::All => Command::All,
    };
    Ok((config, command))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = build_config(&cli).and_then(|(config, command)| {
        let outcome = pipeline::run(&config, command)?;
        Ok((config, outcome))
    });
    match result {
        Ok((config, outcome)) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for name in &outcome.written {
                println!("{}", config.out_dir.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
