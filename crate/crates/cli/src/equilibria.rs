//! The `equilibria` command: balanced restricted Nash states merged with the
//! grid oracle, classified and sorted deterministically.

use std::cmp::Ordering;

use imitation_core::equilibria::{
    classify_equilibrium, find_equilibria_numeric, grid_size, restricted_nash_enumerate,
    EquilibriumClass, OracleSettings, TheoremVerdict, MEMBERSHIP_TOLERANCE,
};
use imitation_core::state::balanced_state;
use imitation_core::{Population, Record, State};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::rows;
use crate::scenario::Model;

/// Oracle grid local minima below this field norm are refined. Coarse grids
/// leave boundary equilibria a few grid steps away from a sample, so the
/// prefilter is looser than the acceptance tolerance.
pub const CANDIDATE_THRESHOLD: f64 = 0.05;

/// Classification tolerance on the field norm.
pub const CLASSIFY_TOLERANCE: f64 = 1e-8;

/// Merge radius in `‖·‖∞` on the system state.
pub const MERGE_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordJson {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub support: Vec<String>,
    pub field_inf_norm: f64,
    pub tags: Vec<&'static str>,
    pub is_connected: bool,
    pub verdict: VerdictJson,
    pub exact_enumeration: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictJson {
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl From<&TheoremVerdict> for VerdictJson {
    fn from(v: &TheoremVerdict) -> Self {
        let (status, detail) = match v {
            TheoremVerdict::NotApplicable(d) => ("not_applicable", Some(d.clone())),
            TheoremVerdict::Consistent => ("consistent", None),
            TheoremVerdict::Violation(d) => ("violation", Some(d.clone())),
            TheoremVerdict::Inconclusive(d) => ("inconclusive", Some(d.clone())),
        };
        VerdictJson { status, detail }
    }
}

/// Result of the equilibria command plus diagnostics for stderr.
#[derive(Debug, Clone)]
pub struct EquilibriaOutput {
    pub records: Vec<Record>,
    pub json: Vec<RecordJson>,
    pub warnings: Vec<String>,
    pub density_used: usize,
}

fn inf_dist(a: &State, b: &State) -> f64 {
    a.matrix()
        .iter()
        .zip(b.matrix().iter())
        .fold(0.0, |m, (u, v)| m.max((u - v).abs()))
}

/// Actions whose share exceeds the classification support threshold.
pub fn support(y: &Population) -> Vec<usize> {
    (0..y.len()).filter(|&i| y[i] > MEMBERSHIP_TOLERANCE).collect()
}

fn order(a: &Record, b: &Record) -> Ordering {
    let sa = support(&a.y);
    let sb = support(&b.y);
    sa.len()
        .cmp(&sb.len())
        .then_with(|| sa.cmp(&sb))
        .then_with(|| lex(a.y.as_slice(), b.y.as_slice()))
        .then_with(|| lex(a.x.matrix().as_slice().unwrap(), b.x.matrix().as_slice().unwrap()))
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(u, v)| u.total_cmp(v))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

pub fn execute(model: &Model, density: usize) -> CliResult<EquilibriaOutput> {
    let Model {
        game, net, mechanism, ..
    } = model;
    let n = game.n_actions();
    let m = net.len();
    let mut warnings = Vec::new();

    let mut records: Vec<Record> = Vec::new();
    let exact = match restricted_nash_enumerate(game) {
        Ok(en) => {
            if !en.exact {
                warnings.push(
                    "game is not affine: restricted Nash enumeration is a best-effort multistart search"
                        .to_string(),
                );
            }
            for y in en.points() {
                let x = balanced_state(&y, net);
                let r = classify_equilibrium(&x, game, net, mechanism, CLASSIFY_TOLERANCE)
                    .map_err(|e| CliError::from_core("equilibria", e))?;
                if r.field_norm <= CLASSIFY_TOLERANCE {
                    records.push(r);
                }
            }
            en.exact
        }
        Err(e) => {
            warnings.push(format!("enumeration unavailable ({e}); oracle results only"));
            false
        }
    };

    let mut settings = OracleSettings::new(density.max(1));
    settings.candidate_threshold = CANDIDATE_THRESHOLD;
    while settings.density > 1 && grid_size(n, m, settings.density) > settings.max_points {
        settings.density -= 1;
    }
    if settings.density != density {
        warnings.push(format!(
            "grid density {density} exceeds the point budget; using density {}",
            settings.density
        ));
    }
    let found = find_equilibria_numeric(game, net, mechanism, &settings)
        .map_err(|e| CliError::from_core("equilibria", e))?;
    for rec in found {
        match records.iter_mut().find(|r| inf_dist(&r.x, &rec.x) <= MERGE_RADIUS) {
            Some(r) => {
                r.classes.insert(EquilibriumClass::OracleFound);
            }
            None => records.push(rec),
        }
    }
    records.sort_by(order);

    let labels = game.actions().labels();
    let json = records
        .iter()
        .map(|r| RecordJson {
            x: rows(&r.x),
            y: r.y.as_slice().to_vec(),
            support: support(&r.y).into_iter().map(|i| labels[i].clone()).collect(),
            field_inf_norm: r.field_norm,
            tags: r.classes.iter().map(|c| c.tag()).collect(),
            is_connected: r.connected,
            verdict: VerdictJson::from(&r.verdict),
            exact_enumeration: exact,
            warnings: warnings.clone(),
        })
        .collect();
    Ok(EquilibriaOutput {
        records,
        json,
        warnings,
        density_used: settings.density,
    })
}
