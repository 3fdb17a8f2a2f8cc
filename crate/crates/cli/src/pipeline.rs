//! JSON pipelines: `{"stages": [{"stage": "fit", "out": "model.json", "chip": "chip.json"}, ...]}`.
//!
//! Stage keys other than `stage` and `out` are the subcommand's flags in
//! snake_case. Stages run in dependency order, where a stage depends on any
//! earlier-listed or later-listed stage whose output it reads; ties keep file
//! order. Stage seeds derive from the top-level seed, the stage name and its
//! occurrence index among stages of that name, so a single `plan` stage gets
//! the same stream as `lasiq plan` with the same seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use lasiq_core::rng::named_stream;

use crate::args::Command;
use crate::commands::{declared_inputs, declared_outputs, default_output, execute, STAGES};
use crate::failure::{CliResult, Exit, Failure};
use crate::io::{resolve, Ctx};
use crate::manifest::{sha256_hex, FileDigest, RunManifest, RunStatus, StageRecord};
use crate::write_artifacts;

pub const MANIFEST_NAME: &str = "manifest.json";

struct Stage {
    name: String,
    occurrence: u64,
    cmd: Command,
    out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn schema(msg: String) -> Failure {
    Failure::schema(anyhow::anyhow!(msg))
}

fn parse_args<T: serde::de::DeserializeOwned>(
    i: usize,
    name: &str,
    rest: Map<String, Value>,
) -> CliResult<T> {
    serde_json::from_value(Value::Object(rest))
        .map_err(|e| schema(format!("stage {i} ({name}): {e}")))
}

fn parse_stage(
    i: usize,
    v: &Value,
    counts: &mut BTreeMap<String, u64>,
    base: &Path,
) -> CliResult<Stage> {
    let Value::Object(obj) = v else {
        return Err(schema(format!("stage {i} is not an object")));
    };
    let mut rest = obj.clone();
    let name = match rest.remove("stage") {
        Some(Value::String(s)) => s,
        _ => return Err(schema(format!("stage {i} has no \"stage\" name"))),
    };
    if !STAGES.contains(&name.as_str()) {
        return Err(Failure::new(
            Exit::UnknownStage,
            anyhow::anyhow!("stage {i}: unknown stage {name:?}; expected one of {STAGES:?}"),
        ));
    }
    let occurrence = *counts
        .entry(name.clone())
        .and_modify(|c| *c += 1)
        .or_insert(0);
    let out = match rest.remove("out") {
        Some(Value::String(s)) => PathBuf::from(s),
        None => {
            let d = Path::new(default_output(&name));
            if occurrence == 0 {
                d.to_path_buf()
            } else {
                let ext = d.extension().and_then(|e| e.to_str()).unwrap_or_default();
                let stem = d.file_stem().and_then(|e| e.to_str()).unwrap_or_default();
                PathBuf::from(format!("{stem}-{occurrence}.{ext}"))
            }
        }
        Some(_) => return Err(schema(format!("stage {i}: \"out\" must be a string"))),
    };
    let cmd = match name.as_str() {
        "lattice" => Command::Lattice(parse_args(i, &name, rest)?),
        "fit" => Command::Fit(parse_args(i, &name, rest)?),
        "collisions" => Command::Collisions(parse_args(i, &name, rest)?),
        "yield" => Command::Yield(parse_args(i, &name, rest)?),
        "plan" => Command::Plan(parse_args(i, &name, rest)?),
        "anneal" => Command::Anneal(parse_args(i, &name, rest)?),
        "gate-error" => Command::GateError(parse_args(i, &name, rest)?),
        _ => Command::Zz(parse_args(i, &name, rest)?),
    };
    let out = resolve(base, &out);
    let inputs = declared_inputs(&cmd)
        .iter()
        .map(|p| resolve(base, p))
        .collect();
    let outputs = declared_outputs(&cmd, Some(&out), base);
    Ok(Stage {
        name,
        occurrence,
        cmd,
        out,
        inputs,
        outputs,
    })
}

/// Stable topological order: among ready stages the earliest listed runs first.
fn order(stages: &[Stage]) -> CliResult<Vec<usize>> {
    let mut producer: BTreeMap<&Path, usize> = BTreeMap::new();
    for (i, s) in stages.iter().enumerate() {
        for o in &s.outputs {
            if let Some(j) = producer.insert(o, i) {
                return Err(schema(format!(
                    "stages {j} and {i} both write {}",
                    o.display()
                )));
            }
        }
    }
    let deps: Vec<BTreeSet<usize>> = stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.inputs
                .iter()
                .filter_map(|p| producer.get(p.as_path()).copied())
                .filter(|&j| j != i)
                .collect()
        })
        .collect();
    let mut done = vec![false; stages.len()];
    let mut out = Vec::with_capacity(stages.len());
    while out.len() < stages.len() {
        let next = (0..stages.len())
            .find(|&i| !done[i] && deps[i].iter().all(|&j| done[j]))
            .ok_or_else(|| schema("stage inputs and outputs form a cycle".into()))?;
        done[next] = true;
        out.push(next);
    }
    Ok(out)
}

pub fn run_pipeline(
    config: &Path,
    workdir: Option<&Path>,
    seed: u64,
    quiet: bool,
) -> CliResult<()> {
    let bytes = fs::read(config).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::missing(config),
        _ => Failure::stage(anyhow::anyhow!("reading {}: {e}", config.display())),
    })?;
    let doc: Value =
        serde_json::from_slice(&bytes).map_err(|e| schema(format!("{}: {e}", config.display())))?;
    let list = match &doc {
        Value::Object(o) if o.keys().all(|k| k == "stages") => match o.get("stages") {
            Some(Value::Array(a)) => a.clone(),
            _ => return Err(schema("pipeline needs a \"stages\" array".into())),
        },
        _ => {
            return Err(schema(
                "pipeline must be an object with only a \"stages\" array".into(),
            ))
        }
    };
    let base = match workdir {
        Some(w) => {
            fs::create_dir_all(w)
                .map_err(|e| Failure::stage(anyhow::anyhow!("creating {}: {e}", w.display())))?;
            w.to_path_buf()
        }
        None => config.parent().map(Path::to_path_buf).unwrap_or_default(),
    };

    let mut counts = BTreeMap::new();
    let stages = list
        .iter()
        .enumerate()
        .map(|(i, v)| parse_stage(i, v, &mut counts, &base))
        .collect::<CliResult<Vec<_>>>()?;
    let order = order(&stages)?;

    let produced: BTreeSet<&Path> = stages
        .iter()
        .flat_map(|s| s.outputs.iter().map(PathBuf::as_path))
        .collect();
    for s in &stages {
        if let Some(p) = s
            .inputs
            .iter()
            .find(|p| !produced.contains(p.as_path()) && !p.exists())
        {
            return Err(Failure::missing(p).context(format!("stage {}", s.name)));
        }
    }

    let mut manifest = RunManifest::new("pipeline", doc.clone(), seed);
    manifest.inputs.push(FileDigest {
        path: config.to_path_buf(),
        sha256: sha256_hex(&bytes),
    });
    let mut result = Ok(());
    for &i in &order {
        let s = &stages[i];
        let stage_seed = named_stream(seed, &s.name, s.occurrence);
        let ctx = Ctx::new(stage_seed, base.clone(), Some(s.out.clone()), quiet);
        ctx.note(format!("[{}] {}", s.name, s.out.display()));
        let mut record = StageRecord {
            stage: s.name.clone(),
            seed: stage_seed,
            status: RunStatus::Ok,
            error: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        let failure = match execute(&s.cmd, &ctx) {
            Ok(outcome) => match write_artifacts(&outcome.artifacts) {
                Ok(written) => {
                    record.outputs = written;
                    outcome.failure
                }
                Err(e) => Some(e),
            },
            Err(e) => Some(e),
        };
        record.inputs = ctx.inputs();
        for d in &record.inputs {
            if !produced.contains(d.path.as_path())
                && !manifest.inputs.iter().any(|x| x.path == d.path)
            {
                manifest.inputs.push(d.clone());
            }
        }
        manifest.outputs.extend(record.outputs.iter().cloned());
        if let Some(f) = failure {
            let f = f.context(format!("stage {} ({})", i, s.name));
            record.status = RunStatus::Failed;
            record.error = Some(f.to_string());
            manifest.status = RunStatus::Failed;
            manifest.error = record.error.clone();
            manifest.stages.push(record);
            result = Err(f);
            break;
        }
        manifest.stages.push(record);
    }
    manifest.relativize(&base);
    let path = base.join(MANIFEST_NAME);
    fs::write(&path, manifest.to_bytes())
        .map_err(|e| Failure::stage(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    result
}
