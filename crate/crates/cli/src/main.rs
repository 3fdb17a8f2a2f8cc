mod args;
mod commands;
mod failure;
mod io;
mod manifest;
mod pipeline;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use lasiq_core::rng::named_stream;

use args::{Cli, Command};
use failure::{CliResult, Failure};
use io::{Artifact, Ctx};
use manifest::{manifest_path_for, sha256_hex, FileDigest, RunManifest, RunStatus};

/// Write artifacts in order; those without a path go to stdout.
pub(crate) fn write_artifacts(artifacts: &[Artifact]) -> CliResult<Vec<FileDigest>> {
    let mut written = Vec::new();
    for a in artifacts {
        match &a.path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| {
                        Failure::stage(anyhow::anyhow!("creating {}: {e}", dir.display()))
                    })?;
                }
                fs::write(p, &a.bytes)
                    .map_err(|e| Failure::stage(anyhow::anyhow!("writing {}: {e}", p.display())))?;
                written.push(FileDigest {
                    path: p.clone(),
                    sha256: sha256_hex(&a.bytes),
                });
            }
            None => std::io::stdout()
                .write_all(&a.bytes)
                .map_err(|e| Failure::stage(anyhow::anyhow!("stdout: {e}")))?,
        }
    }
    Ok(written)
}

fn stage_args(cmd: &Command) -> serde_json::Value {
    let v = match cmd {
        Command::Lattice(a) => serde_json::to_value(a),
        Command::Fit(a) => serde_json::to_value(a),
        Command::Collisions(a) => serde_json::to_value(a),
        Command::Yield(a) => serde_json::to_value(a),
        Command::Plan(a) => serde_json::to_value(a),
        Command::Anneal(a) => serde_json::to_value(a),
        Command::GateError(a) => serde_json::to_value(a),
        Command::Zz(a) => serde_json::to_value(a),
        Command::Pipeline(_) => unreachable!("pipelines are handled separately"),
    };
    v.expect("arguments serialize")
}

fn run_single(cli: &Cli) -> CliResult<()> {
    let name = cli.command.name();
    let seed = named_stream(cli.seed, name, 0);
    let ctx = Ctx::new(seed, PathBuf::new(), cli.out.clone(), cli.quiet);
    let outcome = commands::execute(&cli.command, &ctx)?;
    let written = write_artifacts(&outcome.artifacts)?;
    if let Some(first) = written.first() {
        let mut m = RunManifest::new(name, stage_args(&cli.command), cli.seed);
        m.inputs = ctx.inputs();
        m.outputs = written.clone();
        if let Some(f) = &outcome.failure {
            m.status = RunStatus::Failed;
            m.error = Some(f.to_string());
        }
        let path = manifest_path_for(&first.path);
        m.relativize(path.parent().unwrap_or(Path::new("")));
        fs::write(&path, m.to_bytes())
            .map_err(|e| Failure::stage(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    }
    outcome.failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be ≥ 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Pipeline(p) => {
            pipeline::run_pipeline(&p.config, cli.out.as_deref(), cli.seed, cli.quiet)
        }
        _ => run_single(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit as u8)
        }
    }
}
