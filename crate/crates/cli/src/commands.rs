//! One function per stage. Stages compute everything in memory and hand back
//! artifacts; the caller writes them, so a failing stage leaves no output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use lasiq_core::anneal::{anneal_chip, success_stats, AnnealConfig};
use lasiq_core::collision::{chip_collisions, CollisionBounds};
use lasiq_core::freq_model::{fit_chip, FitOptions, PowerLawModel};
use lasiq_core::gate::{
    error_vs_detuning_sweep, static_zz, static_zz_perturbative, sub_threshold_windows,
    SweepOptions, TransmonPair, Window,
};
use lasiq_core::lattice::{build_heavy_hex, build_preset, Preset};
use lasiq_core::planner::{generate_plan, FrequencyPlan, PlanConstraints, QubitStatus};
use lasiq_core::synth::{synth_chip, SynthConfig};
use lasiq_core::yield_mc::yield_curve;
use lasiq_core::Error as CoreError;

use crate::args::{
    AnnealArgs, CollisionsArgs, Command, FitArgs, GateErrorArgs, LatticeArgs, PlanArgs, YieldArgs,
    ZzArgs,
};
use crate::failure::{CliResult, Failure};
use crate::io::{
    read_freqs, AnnealRow, Artifact, CollisionRow, Ctx, PlanRow, ResidualRow, SweepRow, YieldRow,
};

pub const STAGES: [&str; 8] = [
    "lattice",
    "fit",
    "collisions",
    "yield",
    "plan",
    "anneal",
    "gate-error",
    "zz",
];

/// Artifacts of a stage plus, for a stage that still produced output (an
/// infeasible plan's best effort), the failure to report after writing.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub failure: Option<Failure>,
}

impl From<Vec<Artifact>> for Outcome {
    fn from(artifacts: Vec<Artifact>) -> Self {
        Outcome {
            artifacts,
            failure: None,
        }
    }
}

/// Input files a stage will read, as written in its arguments.
pub fn declared_inputs(cmd: &Command) -> Vec<PathBuf> {
    let mut v = Vec::new();
    match cmd {
        Command::Lattice(_) | Command::Pipeline(_) => {}
        Command::Fit(a) => v.push(a.chip.clone()),
        Command::Collisions(a) => {
            v.push(a.chip.clone());
            v.extend(a.freqs.clone());
            v.extend(a.bounds.clone());
        }
        Command::Yield(a) => {
            v.extend([a.chip.clone(), a.targets.clone()]);
            v.extend(a.bounds.clone());
        }
        Command::Plan(a) => {
            v.extend([a.chip.clone(), a.model.clone()]);
            v.extend(a.constraints.clone());
        }
        Command::Anneal(a) => {
            v.extend([a.chip.clone(), a.targets.clone()]);
            v.extend(a.config.clone());
        }
        Command::GateError(a) => v.push(a.pair.clone()),
        Command::Zz(a) => v.push(a.pair.clone()),
    }
    v
}

/// Files a stage writes given its resolved primary output.
pub fn declared_outputs(cmd: &Command, out: Option<&Path>, base: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = out.map(Path::to_path_buf).into_iter().collect();
    if let Command::Fit(a) = cmd {
        v.extend(residuals_path(a, out, base));
    }
    v
}

/// Default name of a stage's primary output inside a pipeline directory.
pub fn default_output(stage: &str) -> &'static str {
    match stage {
        "lattice" => "chip.json",
        "fit" => "model.json",
        "collisions" => "collisions.csv",
        "yield" => "yield.csv",
        "plan" => "plan.csv",
        "anneal" => "outcomes.csv",
        "gate-error" => "sweep.csv",
        _ => "zz.json",
    }
}

pub fn execute(cmd: &Command, ctx: &Ctx) -> CliResult<Outcome> {
    match cmd {
        Command::Lattice(a) => lattice(a, ctx).map(Outcome::from),
        Command::Fit(a) => fit(a, ctx).map(Outcome::from),
        Command::Collisions(a) => collisions(a, ctx).map(Outcome::from),
        Command::Yield(a) => yield_stage(a, ctx).map(Outcome::from),
        Command::Plan(a) => plan(a, ctx),
        Command::Anneal(a) => anneal(a, ctx).map(Outcome::from),
        Command::GateError(a) => gate_error(a, ctx).map(Outcome::from),
        Command::Zz(a) => zz(a, ctx).map(Outcome::from),
        Command::Pipeline(_) => unreachable!("pipelines are not stages"),
    }
}

fn lattice(a: &LatticeArgs, ctx: &Ctx) -> CliResult<Vec<Artifact>> {
    let topo = match (&a.preset, a.rows, a.cols) {
        (Some(p), None, None) => build_preset(p.parse::<Preset>()?),
        (None, Some(r), Some(c)) => build_heavy_hex(r, c)?,
        _ => {
            return Err(Failure::schema(anyhow::anyhow!(
                "lattice needs either a preset or both rows and cols"
            )))
        }
    };
    let chip = if a.synth {
        let cfg = SynthConfig {
            f_nominal_mhz: a.f_nominal_mhz,
            freq_spread_rel: a.spread_rel,
            measurement_sigma_mhz: a.measurement_sigma_mhz,
            ..SynthConfig::default()
        };
        synth_chip(&topo, &cfg, ctx.seed)?
    } else {
        topo
    };
    ctx.note(format!(
        "{}: {} qubits, {} edges",
        chip.name(),
        chip.len(),
        chip.edges().len()
    ));
    Ok(vec![Artifact {
        path: ctx.out.clone(),
        bytes: chip.to_json_string().into_bytes(),
    }])
}

fn residuals_path(a: &FitArgs, out: Option<&Path>, base: &Path) -> Option<PathBuf> {
    match (&a.residuals, out) {
        (Some(r), _) => Some(crate::io::resolve(base, r)),
        (None, Some(o)) => {
            let stem = o
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Some(o.with_file_name(format!("{stem}_residuals.csv")))
        }
        (None, None) => None,
    }
}

fn fit(a: &FitArgs, ctx: &Ctx) -> CliResult<Vec<Artifact>> {
    let chip = ctx.read_chip(&a.chip)?;
    let (model, stats) = fit_chip(
        &chip,
        FitOptions {
            pinned_exponent: a.pin_exponent,
        },
    )?;
    ctx.note(format!(
        "f01 = {:.6e}·R^{:.4}, σ_f = {:.2} MHz over {} qubits",
        model.a,
        model.p,
        model.sigma_f,
        stats.residuals.len()
    ));
    let mut out = vec![Artifact::json(ctx.out.clone(), &model)];
    if let Some(path) = residuals_path(a, ctx.out.as_deref(), &ctx.base) {
        let rows: Vec<ResidualRow> = stats
            .residuals
            .iter()
            .map(|&(qubit_id, residual_mhz)| ResidualRow {
                qubit_id,
                residual_mhz,
            })
            .collect();
        out.push(Artifact::csv(
            Some(path),
            &["qubit_id", "residual_mhz"],
            &rows,
        )?);
    }
    Ok(out)
}

fn bounds_or(
    ctx: &Ctx,
    path: &Option<PathBuf>,
    default: CollisionBounds,
) -> CliResult<CollisionBounds> {
    let b = match path {
        Some(p) => ctx.read_json::<CollisionBounds>(p)?,
        None => default,
    };
    b.validate().map_err(Failure::schema)?;
    Ok(b)
}

fn collisions(a: &CollisionsArgs, ctx: &Ctx) -> CliResult<Vec<Artifact>> {
    let chip = ctx.read_chip(&a.chip)?;
    let freqs = match &a.freqs {
        Some(p) => read_freqs(ctx, p)?,
        None => chip.f01_map()?,
    };
    let bounds = bounds_or(ctx, &a.bounds, CollisionBounds::default())?;
    let report = chip_collisions(&chip, &freqs, &bounds)?;
    ctx.note(format!(
        "{} collisions, by type {:?}",
        report.total(),
        report.counts
    ));
    let rows: Vec<CollisionRow> = report
        .violations
        .iter()
        .map(|v| CollisionRow {
            control: v.edge.0,
            target: v.edge.1,
            kind: v.kind.number(),
            margin_mhz: v.margin,
        })
        .collect();
    Ok(vec![Artifact::csv(
        ctx.out.clone(),
        &["control", "target", "type", "margin_mhz"],
        &rows,
    )?])
}

fn yield_stage(a: &YieldArgs, ctx: &Ctx) -> CliResult<Vec<Artifact>> {
    let chip = ctx.read_chip(&a.chip)?;
    let targets = read_freqs(ctx, &a.targets)?;
    let bounds = bounds_or(ctx, &a.bounds, CollisionBounds::default())?;
    let curve = yield_curve(
        &chip,
        &targets,
        &a.sigma_grid.values(),
        &bounds,
        a.trials,
        ctx.seed,
    )?;
    let rows: Vec<YieldRow> = curve
        .points()
        .map(|(s, e)| YieldRow {
            sigma_mhz: s,
            yield_frac: e.yield_frac,
            ci: e.ci,
            mean_collisions: e.mean_collisions,
        })
        .collect();
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        ctx.note(format!(
            "yield {:.4} at σ = {} MHz, {:.4} at σ = {} MHz ({} trials)",
            first.yield_frac, first.sigma_mhz, last.yield_frac, last.sigma_mhz, a.trials
        ));
    }
    Ok(vec![Artifact::csv(
        ctx.out.clone(),
        &["sigma_mhz", "yield", "ci", "mean_collisions"],
        &rows,
    )?])
}

const PLAN_HEADER: &[&str] = &[
    "qubit_id",
    "f_target_mhz",
    "r_target_ohm",
    "df_mhz",
    "dr_rel",
    "status",
];
const ANNEAL_HEADER: &[&str] = &[
    "qubit_id",
    "r0",
    "r_target",
    "r_final",
    "exposures",
    "status",
    "dev_rel",
];

fn plan_rows(plan: &FrequencyPlan) -> Vec<PlanRow> {
    plan.ids()
        .map(|id| PlanRow {
            qubit_id: id,
            f_target_mhz: plan.targets_f[&id],
            r_target_ohm: plan.targets_r[&id],
            df_mhz: -plan.shifts_f[&id],
            dr_rel: plan.shifts_r_rel[&id],
            status: plan.status(id).to_string(),
        })
        .collect()
}

fn plan(a: &PlanArgs, ctx: &Ctx) -> CliResult<Outcome> {
    let chip = ctx.read_chip(&a.chip)?;
    let model: PowerLawModel = ctx.read_json(&a.model)?;
    model.validate().map_err(Failure::schema)?;
    let constraints: PlanConstraints = match &a.constraints {
        Some(p) => ctx.read_json(p)?,
        None => PlanConstraints::default(),
    };
    constraints.validate().map_err(Failure::schema)?;
    match generate_plan(&chip, &model, &constraints, ctx.seed) {
        Ok(plan) => {
            let tuned = plan
                .ids()
                .filter(|&id| plan.status(id) == QubitStatus::Tuned)
                .count();
            ctx.note(format!(
                "{tuned}/{} qubits tuned, worst margin {:.2} MHz",
                chip.len(),
                plan.worst_margin
            ));
            Ok(vec![Artifact::csv(
                ctx.out.clone(),
                PLAN_HEADER,
                &plan_rows(&plan),
            )?]
            .into())
        }
        Err(CoreError::Infeasible(report)) => {
            for b in &report.blocking {
                ctx.note(format!("qubit {} blocked: {}", b.id, b.reason));
            }
            ctx.note("writing best-effort plan with blocked qubits left untuned");
            let failure = Failure::stage(CoreError::Infeasible(report.clone()));
            Ok(Outcome {
                artifacts: vec![Artifact::csv(
                    ctx.out.clone(),
                    PLAN_HEADER,
                    &plan_rows(&report.best_effort),
                )?],
                failure: Some(failure),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn anneal(a: &AnnealArgs, ctx: &Ctx) -> CliResult<Vec<Artifact>> {
    let chip = ctx.read_chip(&a.chip)?;
    let rows: Vec<PlanRow> = ctx.read_csv(&a.targets)?;
    let targets: BTreeMap<usize, f64> = rows
        .iter()
        .filter(|r| r.status == QubitStatus::Tuned.to_string())
        .map(|r| (r.qubit_id, r.r_target_ohm))
        .collect();
    let cfg: AnnealConfig = match &a.config {
        Some(p) => ctx.read_json(p)?,
        None => AnnealConfig::default(),
    };
    cfg.validate().map_err(Failure::schema)?;
    let results = anneal_chip(&chip, &targets, &cfg, ctx.seed)?;
    let out_rows: Vec<AnnealRow> = results
        .iter()
        .map(|q| match &q.outcome {
            Ok(o) => AnnealRow {
                qubit_id: q.id,
                r0: q.r0,
                r_target: q.r_target,
                r_final: Some(o.final_r),
                exposures: Some(o.exposures),
                status: o.status.to_string(),
                dev_rel: Some(o.final_dev_rel),
            },
            Err(_) => AnnealRow {
                qubit_id: q.id,
                r0: q.r0,
                r_target: q.r_target,
                r_final: None,
                exposures: None,
                status: "rejected".into(),
                dev_rel: None,
            },
        })
        .collect();
    for q in &results {
        if let Err(reason) = &q.outcome {
            ctx.note(format!("qubit {} rejected: {reason}", q.id));
        }
    }
    let outcomes: Vec<_> = results
        .iter()
        .filter_map(|q| q.outcome.as_ref().ok().copied())
        .collect();
    if outcomes.is_empty() {
        ctx.note("no tuned qubits to anneal");
    } else {
        let s = success_stats(&outcomes, &[])?;
        ctx.note(format!(
            "{} anneals: success {:.1}%, overshoot {}, undershoot {}, RMS deviation {:.3}%",
            s.n,
            100.0 * s.success_rate,
            s.overshoot,
            s.undershoot,
            100.0 * s.rms_dev_success
        ));
    }
    Ok(vec![Artifact::csv(
        ctx.out.clone(),
        ANNEAL_HEADER,
        &out_rows,
    )?])
}

fn read_pair(ctx: &Ctx, p: &Path) -> CliResult<TransmonPair> {
    let pair: TransmonPair = ctx.read_json(p)?;
    pair.validate().map_err(Failure::schema)?;
    Ok(pair)
}

fn gate_error(a: &GateErrorArgs, ctx: &Ctx) -> CliResult<Vec<Artifact>> {
    let pair = read_pair(ctx, &a.pair)?;
    let grid = match a.sweep {
        Some(g) => g.values(),
        None => vec![pair.detuning()],
    };
    let opts = SweepOptions {
        gate_time: a.gate_time,
        solver_tol: a.solver_tol,
        rotary: !a.no_rotary,
    };
    ctx.note(format!("calibrating {} detuning point(s)", grid.len()));
    let points = error_vs_detuning_sweep(&pair, &grid, &opts)?;
    let rows: Vec<SweepRow> = points
        .iter()
        .map(|p| SweepRow {
            detuning_mhz: p.detuning,
            error: p.error,
            zz_khz: p.zz_khz,
            status: p.status.to_string(),
        })
        .collect();
    if grid.len() > 1 {
        let width = |t: f64| {
            sub_threshold_windows(&points, t)
                .iter()
                .map(Window::width)
                .sum::<f64>()
        };
        ctx.note(format!(
            "sub-threshold width: {:.0} MHz below 1%, {:.0} MHz below 0.5%, {:.0} MHz below 0.1%",
            width(1e-2),
            width(5e-3),
            width(1e-3)
        ));
    } else if let Some(e) = points[0].error {
        ctx.note(format!(
            "gate error {e:.3e} at Δ = {} MHz",
            points[0].detuning
        ));
    }
    Ok(vec![Artifact::csv(
        ctx.out.clone(),
        &["detuning_mhz", "error", "zz_khz", "status"],
        &rows,
    )?])
}

#[derive(Serialize)]
struct ZzReport {
    zz_khz: f64,
    zz_perturbative_khz: Option<f64>,
    min_overlap: f64,
    ambiguous: bool,
}

fn zz(a: &ZzArgs, ctx: &Ctx) -> CliResult<Vec<Artifact>> {
    let pair = read_pair(ctx, &a.pair)?;
    let exact = static_zz(&pair)?;
    let perturbative = match static_zz_perturbative(&pair) {
        Ok(v) => Some(v),
        Err(CoreError::Pole(_)) => None,
        Err(e) => return Err(e.into()),
    };
    if exact.ambiguous {
        ctx.note("warning: levels are hybridized; ZZ is not meaningful at this detuning");
    }
    let report = ZzReport {
        zz_khz: exact.zz_khz,
        zz_perturbative_khz: perturbative,
        min_overlap: exact.min_overlap,
        ambiguous: exact.ambiguous,
    };
    Ok(vec![Artifact::json(ctx.out.clone(), &report)])
}
