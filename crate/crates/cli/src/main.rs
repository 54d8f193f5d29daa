use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forlion_cli::{render, run_config, validate, write_report, RawConfig, RunError, Task};

/// D-optimal designs for GLMs and multinomial logistic models.
///
/// Any config key can be overridden with a dotted flag, e.g.
/// `--algorithm.reltol=1e-6` or `--rounding.grid.x1=0.1`.
#[derive(Parser)]
#[command(name = "forlion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locally D-optimal approximate design (parameters.theta).
    Design(RunArgs),
    /// EW D-optimal approximate design (parameters.prior or parameters.samples).
    EwDesign(RunArgs),
    /// Round a design (the config's `design`, or a fresh optimum) to an exact design.
    Round(RunArgs),
    /// Relative D-efficiency of `design` against `compare_design`.
    Efficiency(RunArgs),
    /// Fisher information at `point`.
    Info(RunArgs),
    /// Run the task named in the config.
    Run(RunArgs),
    /// Check a config without running it.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Where to write the JSON report.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Do not print the design table.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Validate as this task instead of the config's.
    #[arg(long)]
    task: Option<String>,
}

fn split_overrides() -> (Vec<String>, Vec<String>) {
    let mut clap_args = Vec::new();
    let mut overrides = Vec::new();
    for a in std::env::args() {
        let is_override = a
            .strip_prefix("--")
            .and_then(|s| s.split_once('='))
            .is_some_and(|(k, _)| k.contains('.'));
        if is_override {
            overrides.push(a);
        } else {
            clap_args.push(a);
        }
    }
    (clap_args, overrides)
}

fn report_error(e: &RunError) {
    match e {
        RunError::Validation(diags) => {
            for d in diags {
                eprintln!("error: {d}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides();
    let cli = Cli::parse_from(args);
    let (task, run) = match cli.command {
        Command::Design(a) => (Some(Task::Design), a),
        Command::EwDesign(a) => (Some(Task::EwDesign), a),
        Command::Round(a) => (Some(Task::Round), a),
        Command::Efficiency(a) => (Some(Task::Efficiency), a),
        Command::Info(a) => (Some(Task::Info), a),
        Command::Run(a) => (None, a),
        Command::Validate(v) => {
            let task = match v.task.as_deref().map(|t| serde_json::from_value(serde_json::Value::String(t.into()))) {
                None => None,
                Some(Ok(t)) => Some(t),
                Some(Err(_)) => {
                    eprintln!("error: unknown task `{}`", v.task.unwrap_or_default());
                    return ExitCode::from(2);
                }
            };
            let diags = match RawConfig::from_path(&v.config).and_then(|mut r| r.apply(&overrides).map(|_| r)) {
                Ok(raw) => validate(&raw, task),
                Err(d) => vec![d],
            };
            for d in &diags {
                println!("{d}");
            }
            return ExitCode::from(if diags.is_empty() { 0 } else { 2 });
        }
    };
    match run_config(&run.config, task, &overrides, run.seed) {
        Ok((report, code)) => {
            if !run.quiet {
                print!("{}", render(&report));
            }
            if report.budget_exceeded {
                eprintln!("warning: cubature budget exhausted");
            }
            if let Some(out) = &run.output {
                if let Err(e) = write_report(&report, out) {
                    report_error(&e);
                    return ExitCode::from(e.exit_code() as u8);
                }
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
