//! The `sweep` command: the Cartesian product of parameter grids, run
//! concurrently and indexed deterministically.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{pretty, write_file};
use crate::run::{run_to_dir, summary_path, trajectory_path};
use crate::scenario::{InitialStateSpec, MechanismSpec, Scenario};

/// Parameter grids. Absent axes keep the scenario's value; an axis that is
/// present but empty yields no runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<InitialStateSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanisms: Option<Vec<MechanismSpec>>,
}

impl SweepOverrides {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("{}: cannot read overrides: {e}", path.display()))
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            CliError::Validation(format!(
                "{}:{}:{}: field `{}`: {}",
                path.display(),
                inner.line(),
                inner.column(),
                e.path(),
                inner
            ))
        })
    }

    fn is_empty_grid(&self) -> bool {
        let axes = [
            self.seeds.as_ref().map(Vec::len),
            self.initial_states.as_ref().map(Vec::len),
            self.mechanisms.as_ref().map(Vec::len),
        ];
        axes.iter().all(Option::is_none) || axes.contains(&Some(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Combination {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexEntry {
    pub index: usize,
    pub name: String,
    pub parameters: Combination,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oscillation_detected: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepIndex {
    pub scenario: String,
    pub runs: Vec<IndexEntry>,
}

impl SweepIndex {
    pub fn any_aborted(&self) -> bool {
        self.runs.iter().any(|r| r.status == "aborted")
    }
}

fn combinations(o: &SweepOverrides) -> Vec<Combination> {
    if o.is_empty_grid() {
        return Vec::new();
    }
    let seeds: Vec<Option<u64>> = match &o.seeds {
        Some(s) => s.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let inits: Vec<Option<usize>> = match &o.initial_states {
        Some(v) => (0..v.len()).map(Some).collect(),
        None => vec![None],
    };
    let mechs: Vec<Option<usize>> = match &o.mechanisms {
        Some(v) => (0..v.len()).map(Some).collect(),
        None => vec![None],
    };
    let mut out = Vec::new();
    for &mechanism in &mechs {
        for &initial_state in &inits {
            for &seed in &seeds {
                out.push(Combination {
                    seed,
                    initial_state,
                    mechanism,
                });
            }
        }
    }
    out
}

fn variant(base: &Scenario, o: &SweepOverrides, c: &Combination, k: usize) -> Scenario {
    let mut s = base.clone();
    s.name = format!("{}__{k}", base.name);
    if let (Some(i), Some(list)) = (c.initial_state, &o.initial_states) {
        s.initial_state = list[i].clone();
    }
    if let (Some(i), Some(list)) = (c.mechanism, &o.mechanisms) {
        s.mechanism = list[i].clone();
    }
    if let (Some(seed), InitialStateSpec::RandomInterior { seed: slot }) =
        (c.seed, &mut s.initial_state)
    {
        *slot = seed;
    }
    s
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Validates every combination, runs them on a pool of `workers` threads and
/// writes `<name>.sweep.json`. Aborted runs are recorded in the index.
pub fn execute(
    base: &Scenario,
    overrides: &SweepOverrides,
    out_dir: &Path,
    workers: usize,
) -> CliResult<SweepIndex> {
    let combos = combinations(overrides);
    let scenarios: Vec<Scenario> = combos
        .iter()
        .enumerate()
        .map(|(k, c)| variant(base, overrides, c, k))
        .collect();
    for s in &scenarios {
        s.build()
            .map_err(|e| CliError::Validation(format!("sweep run `{}`: {e}", s.name)))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    let results: Vec<CliResult<crate::run::RunOutput>> =
        pool.install(|| scenarios.par_iter().map(|s| run_to_dir(s, out_dir)).collect());

    let mut runs = Vec::with_capacity(results.len());
    for (k, ((s, c), r)) in scenarios.iter().zip(combos).zip(results).enumerate() {
        let entry = match r {
            Ok(out) => IndexEntry {
                index: k,
                name: s.name.clone(),
                parameters: c,
                status: "ok",
                trajectory: Some(file_name(&trajectory_path(out_dir, &s.name))),
                summary: Some(file_name(&summary_path(out_dir, &s.name))),
                final_y: Some(out.summary.final_y.clone()),
                converged: Some(out.summary.convergence.iter().map(|c| c.converged).collect()),
                oscillation_detected: Some(
                    out.summary
                        .convergence
                        .iter()
                        .map(|c| c.oscillation_detected)
                        .collect(),
                ),
                error: None,
            },
            Err(CliError::Abort(msg)) => IndexEntry {
                index: k,
                name: s.name.clone(),
                parameters: c,
                status: "aborted",
                trajectory: None,
                summary: None,
                final_y: None,
                converged: None,
                oscillation_detected: None,
                error: Some(msg),
            },
            Err(e) => return Err(e),
        };
        runs.push(entry);
    }
    let index = SweepIndex {
        scenario: base.name.clone(),
        runs,
    };
    write_file(&out_dir.join(format!("{}.sweep.json", base.name)), &pretty(&index))?;
    Ok(index)
}
