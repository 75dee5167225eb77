//! Replays a recorded pull-request timeline against the in-memory forge.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use funnelbot_core::config::{parse_config, Mode};
use funnelbot_core::replay::{replay_with, ReplayOptions, TimelineFile};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Aggregate,
    Passthrough,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum ReportFormat {
    Json,
    #[default]
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "funnelbot-replay", version, about)]
struct Args {
    /// Timeline JSON file.
    #[arg(long)]
    timeline: PathBuf,
    /// Repository policy (YAML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the policy's mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Write the rendered managed comment here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    report: ReportFormat,
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn run(args: Args) -> Result<(), String> {
    let timeline = TimelineFile::from_json(&read(&args.timeline)?)
        .map_err(|e| format!("{}: {e}", args.timeline.display()))?;
    let config_text = match &args.config {
        Some(path) => {
            let text = read(path)?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            Some(text)
        }
        None => None,
    };
    let options = ReplayOptions {
        config_text,
        mode: args.mode.map(|m| match m {
            ModeArg::Aggregate => Mode::Aggregate,
            ModeArg::Passthrough => Mode::Passthrough,
        }),
        restart_after: None,
    };
    let run = replay_with(&timeline, &options).map_err(|e| e.to_string())?;

    if let Some(out) = &args.out {
        let rendered = run.report.rendered.as_deref().unwrap_or_default();
        std::fs::write(out, rendered)
            .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    }
    match args.report {
        ReportFormat::Json => println!(
            "{}",
            serde_json::to_string_pretty(&run.report).expect("report serializes")
        ),
        ReportFormat::Text => print!("{}", run.report.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("funnelbot-replay: {message}");
            ExitCode::from(2)
        }
    }
}
