//! The `run` command: integrate a scenario and emit its trajectory and summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use imitation_core::analysis::{
    balancedness_deviation, convergence_report, invariant_audit, CheckStatus,
};
use imitation_core::dynamics::integrate;
use imitation_core::equilibria::{restricted_nash_enumerate, y_circle, EquilibriumSet};
use imitation_core::{AuditReport, Network, Population, State, Target, Traj};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::{rows, write_file};
use crate::scenario::{matrix, AnalysisSpec, Model, Scenario, TargetSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub game: String,
    pub mechanism: String,
    pub step: f64,
    pub t_end: f64,
    pub samples: usize,
    pub final_time: f64,
    /// Rows are actions, columns are communities.
    pub final_state: Vec<Vec<f64>>,
    pub final_y: Vec<f64>,
    pub final_phi: Option<f64>,
    pub final_field_inf_norm: f64,
    pub stats: StatsJson,
    pub convergence: Vec<ConvergenceJson>,
    pub balancedness: Vec<BalancednessJson>,
    pub audit: AuditJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsJson {
    pub steps: usize,
    pub renormalizations: usize,
    pub clamps: usize,
    pub forced_clamps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceJson {
    pub target: &'static str,
    pub threshold: f64,
    pub window: f64,
    pub converged: bool,
    pub final_distance: f64,
    pub time_of_convergence: Option<f64>,
    pub oscillation_detected: bool,
    pub min_distance_tail: f64,
    pub amplitude: f64,
    pub turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalancednessJson {
    pub window: f64,
    pub threshold: f64,
    pub final_deviation: f64,
    pub tail_max: f64,
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditJson {
    pub passed: bool,
    pub checks: Vec<CheckJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckJson {
    pub name: &'static str,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl From<&AuditReport> for AuditJson {
    fn from(r: &AuditReport) -> Self {
        let checks = r
            .checks
            .iter()
            .map(|c| match &c.status {
                CheckStatus::Passed => CheckJson {
                    name: c.name,
                    status: "passed",
                    sample: None,
                    detail: None,
                },
                CheckStatus::Failed { index, detail } => CheckJson {
                    name: c.name,
                    status: "failed",
                    sample: Some(*index),
                    detail: Some(detail.clone()),
                },
                CheckStatus::Skipped(why) => CheckJson {
                    name: c.name,
                    status: "skipped",
                    sample: None,
                    detail: Some(why.clone()),
                },
            })
            .collect();
        AuditJson {
            passed: r.passed(),
            checks,
        }
    }
}

/// Everything `run` produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Traj,
    pub summary: RunSummary,
    pub csv: String,
    pub summary_json: String,
}

pub fn execute(scenario: &Scenario, model: &Model) -> CliResult<RunOutput> {
    let Model {
        game,
        net,
        mechanism,
        x0,
        settings,
    } = model;
    let traj = integrate(x0, game, net, mechanism, settings)
        .map_err(|e| CliError::from_core("integrator", e))?;
    let audit = invariant_audit(&traj, game, net, mechanism);

    let mut convergence = Vec::new();
    let mut balancedness = Vec::new();
    for (k, a) in scenario.analyses.iter().enumerate() {
        let field = format!("analyses[{k}]");
        match a {
            AnalysisSpec::Convergence {
                target,
                threshold,
                window,
            } => {
                let t = resolve_target(target, model, &field)?;
                let r = convergence_report(&traj, &t, *threshold, *window)
                    .map_err(|e| CliError::from_core(&field, e))?;
                convergence.push(ConvergenceJson {
                    target: target.label(),
                    threshold: r.threshold,
                    window: r.window,
                    converged: r.converged,
                    final_distance: r.final_distance,
                    time_of_convergence: r.time_of_convergence,
                    oscillation_detected: r.oscillation_detected,
                    min_distance_tail: r.min_distance_tail,
                    amplitude: r.amplitude,
                    turns: r.turns,
                });
            }
            AnalysisSpec::Balancedness { window, threshold } => {
                let dev = balancedness_deviation(&traj, net);
                let t_end = *traj.times.last().expect("nonempty trajectory");
                let tail_max = traj
                    .times
                    .iter()
                    .zip(&dev)
                    .filter(|(t, _)| **t >= t_end - window)
                    .fold(0.0f64, |m, (_, d)| m.max(*d));
                balancedness.push(BalancednessJson {
                    window: *window,
                    threshold: *threshold,
                    final_deviation: *dev.last().expect("nonempty trajectory"),
                    tail_max,
                    balanced: tail_max <= *threshold,
                });
            }
        }
    }

    let last = traj.samples.last().expect("nonempty trajectory");
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        game: game.name().to_string(),
        mechanism: mechanism.name().to_string(),
        step: settings.step,
        t_end: settings.t_end,
        samples: traj.len(),
        final_time: *traj.times.last().expect("nonempty trajectory"),
        final_state: rows(traj.final_state()),
        final_y: last.y.clone(),
        final_phi: last.phi,
        final_field_inf_norm: last.field_norm,
        stats: StatsJson {
            steps: traj.stats.steps,
            renormalizations: traj.stats.renormalizations,
            clamps: traj.stats.clamps,
            forced_clamps: traj.stats.forced_clamps,
        },
        convergence,
        balancedness,
        audit: AuditJson::from(&audit),
    };
    let csv = trajectory_csv(&traj, game.actions().labels(), net);
    let mut summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    summary_json.push('\n');
    Ok(RunOutput {
        trajectory: traj,
        summary,
        csv,
        summary_json,
    })
}

fn resolve_target(spec: &TargetSpec, model: &Model, field: &str) -> CliResult<Target<f64>> {
    let core = |e| CliError::from_core(field, e);
    match spec {
        TargetSpec::Point { y } => Ok(Target::Point(Population::new(y.clone()).map_err(core)?.into_vec())),
        TargetSpec::SystemPoint { x } => {
            let x = matrix(x, field)?;
            Ok(Target::SystemPoint(State::new(x, &model.net).map_err(core)?.into_matrix()))
        }
        TargetSpec::Nash => {
            let e = restricted_nash_enumerate(&model.game).map_err(core)?;
            let sets: Vec<EquilibriumSet<f64>> =
                e.sets.into_iter().filter(|s| s.nash).map(|s| s.set).collect();
            Ok(Target::Sets(sets))
        }
        TargetSpec::YCircle => Ok(Target::from(y_circle(&model.game).map_err(core)?)),
    }
}

/// Header: `t`, then `x_<action>_<community>` action-major, then `y_<action>`,
/// then `phi`, `dphi_dt`, `field_inf_norm`.
pub fn csv_header(actions: &[String], communities: &[String]) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for a in actions {
        for c in communities {
            h.push(format!("x_{a}_{c}"));
        }
    }
    for a in actions {
        h.push(format!("y_{a}"));
    }
    h.extend(["phi", "dphi_dt", "field_inf_norm"].map(String::from));
    h
}

fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("write to string");
}

pub fn trajectory_csv(traj: &Traj, actions: &[String], net: &Network) -> String {
    let mut out = csv_header(actions, net.labels()).join(",");
    out.push('\n');
    for ((t, x), s) in traj.times.iter().zip(&traj.states).zip(&traj.samples) {
        num(&mut out, *t);
        for v in x.matrix().iter() {
            out.push(',');
            num(&mut out, *v);
        }
        for v in &s.y {
            out.push(',');
            num(&mut out, *v);
        }
        for v in [s.phi, s.dphi_dt] {
            out.push(',');
            if let Some(v) = v {
                num(&mut out, v);
            }
        }
        out.push(',');
        num(&mut out, s.field_norm);
        out.push('\n');
    }
    out
}

pub fn trajectory_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(format!("{name}.trajectory.csv"))
}

pub fn summary_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(format!("{name}.summary.json"))
}

/// Runs a scenario and writes both artifacts into `out_dir`.
pub fn run_to_dir(scenario: &Scenario, out_dir: &Path) -> CliResult<RunOutput> {
    let model = scenario.build()?;
    let out = execute(scenario, &model)?;
    write_file(&trajectory_path(out_dir, &scenario.name), &out.csv)?;
    write_file(&summary_path(out_dir, &scenario.name), &out.summary_json)?;
    Ok(out)
}
