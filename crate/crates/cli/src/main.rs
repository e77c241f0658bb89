// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use kmm_cli::{output, runner, OutputFormat, RunConfig, RunError};
use kmm_core::ExperimentResult;

#[derive(Parser)]
#[command(name = "kmm", version, about = "Kernel mean matching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one method `repeats` times and append the mean.
    Run(Common),
    /// Vary `sweep.axis` over `sweep.values`; one mean row per value.
    Sweep(Common),
    /// Grow the reference set batch by batch; one mean row per batch.
    Scalable(Common),
    /// One mean row per method on shared splits. Pass several configs, or
    /// one config with `compare.methods`.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Config file; repeat for `compare`.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Override one key, e.g. `--set params.t=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output file; overrides the `output` key.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output format; overrides the `format` key.
    #[arg(long, value_parser = ["csv", "jsonl"])]
    format: Option<String>,
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    type Protocol = fn(&[RunConfig]) -> Result<Vec<ExperimentResult>, RunError>;
    let (common, protocol, multi): (Common, Protocol, bool) = match cli.command {
        Command::Run(c) => (c, |cs| runner::run(&cs[0]), false),
        Command::Sweep(c) => (c, |cs| runner::sweep(&cs[0]), false),
        Command::Scalable(c) => (c, |cs| runner::scalable(&cs[0]), false),
        Command::Compare(c) => (c, runner::compare, true),
    };
    let configs = common
        .configs
        .iter()
        .map(|p| RunConfig::load(p, &common.overrides).with_context(|| format!("in config {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if configs.len() > 1 && !multi {
        bail!("only compare accepts more than one --config");
    }
    let first = &configs[0];
    let path = match common.output.or_else(|| first.output.clone()) {
        Some(p) => p,
        None => bail!("no output file; set `output` in the config or pass --output"),
    };
    let format = match common.format {
        Some(f) => f.parse::<OutputFormat>().map_err(anyhow::Error::msg)?,
        None => first.format,
    };
    let records = protocol(&configs)?;
    output::write_file(&path, &records, format)?;
    eprintln!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Causes are often already spelled out in their parent's message.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1).map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
