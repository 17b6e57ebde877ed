mod args;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;

use args::{Cli, Command, OutputArgs};
use run::{CliError, RunConfig, RunManifest, RunOutput};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Compute(a) => execute(RunConfig::from_compute(&a)?, &a.output),
        Command::Evaluate(a) => {
            let run = RunConfig::from_evaluate(&a)?;
            let started = Instant::now();
            let output = run.execute()?;
            if let (Some(path), Some(table)) = (&a.table, &output.display) {
                write_file(path, table)?;
            }
            finish(&run, &a.output, output, started)
        }
        Command::ExportFigure(a) => execute(RunConfig::from_export(&a)?, &a.output),
        Command::Replay(a) => {
            let text = std::fs::read_to_string(&a.manifest)
                .with_context(|| format!("cannot read manifest {}", a.manifest.display()))?;
            let manifest: RunManifest = serde_json::from_str(&text)
                .with_context(|| format!("malformed manifest {}", a.manifest.display()))?;
            let output = manifest.run.execute()?;
            emit(a.out.as_deref(), &output)
        }
    }
}

fn execute(run: RunConfig, out: &OutputArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let output = run.execute()?;
    finish(&run, out, output, started)
}

fn finish(run: &RunConfig, out: &OutputArgs, output: RunOutput, started: Instant) -> Result<(), CliError> {
    emit(out.out.as_deref(), &output)?;
    let manifest_path = out.manifest.clone().or_else(|| {
        out.out.as_ref().map(|p| {
            let mut name = p.as_os_str().to_owned();
            name.push(".manifest.json");
            PathBuf::from(name)
        })
    });
    if let Some(path) = manifest_path {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            run: run.clone(),
            output: out.out.clone(),
            duration_ms: started.elapsed().as_millis() as u64,
        };
        let mut text = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
        text.push('\n');
        write_file(&path, &text)?;
    }
    Ok(())
}

fn emit(out: Option<&Path>, output: &RunOutput) -> Result<(), CliError> {
    if let Some(display) = &output.display {
        eprint!("{display}");
    }
    match out {
        Some(path) => write_file(path, &output.payload),
        None => {
            print!("{}", output.payload);
            Ok(())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Runtime)
}
