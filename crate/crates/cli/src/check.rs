//! The `check` command: which convergence and characterization results the
//! scenario's hypotheses support, and why.

use imitation_core::equilibria::{restricted_nash_enumerate, EquilibriumSet};
use imitation_core::games::check_potential;
use imitation_core::mechanisms::{check_assumption1, check_assumption2, Witness};
use imitation_core::{AssumptionReport, RateProfile};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::scenario::Model;

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0x5eed;
const POTENTIAL_SAMPLES: usize = 2_000;
const POTENTIAL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub network: NetworkJson,
    pub game: GameJson,
    pub mechanism: MechanismJson,
    pub initial_state: InitialJson,
    pub theorem1: Verdict,
    pub theorem2: Verdict,
    pub corollary1: Corollary,
    pub restricted_start_balances: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkJson {
    pub connected: bool,
    pub undirected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameJson {
    pub name: String,
    pub affine: bool,
    pub potential: PotentialJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialJson {
    pub declared: bool,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_error: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismJson {
    pub name: String,
    pub rate_profile: &'static str,
    pub assumption1: AssumptionJson,
    pub assumption2: AssumptionJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionJson {
    pub holds_on_samples: bool,
    pub samples_tested: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<WitnessJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessJson {
    pub y: Vec<f64>,
    pub actions: Vec<usize>,
    pub rates: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl From<&Witness<f64>> for WitnessJson {
    fn from(w: &Witness<f64>) -> Self {
        WitnessJson {
            y: w.y.clone(),
            actions: w.actions.clone(),
            rates: w.rates.clone(),
            rewards: w.rewards.clone(),
        }
    }
}

impl From<&AssumptionReport<f64>> for AssumptionJson {
    fn from(r: &AssumptionReport<f64>) -> Self {
        AssumptionJson {
            holds_on_samples: r.holds_on_samples,
            samples_tested: r.samples_tested,
            counterexample: r.counterexample.as_ref().map(WitnessJson::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialJson {
    pub full_support: bool,
    pub restricted_nash_population: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub applicable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<&'static str>,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corollary {
    pub applicable: bool,
    pub reasons: Vec<String>,
    /// Nash set is finite, so the population state converges to one point.
    pub converges_to_point: bool,
    /// Assumption 2 also holds, so the limit is balanced.
    pub balanced_limit: bool,
}

fn verdict(reasons: Vec<String>, case: Option<&'static str>) -> Verdict {
    Verdict {
        applicable: reasons.is_empty(),
        case,
        reasons,
    }
}

pub fn execute(model: &Model, samples: usize, seed: u64) -> CliResult<CheckReport> {
    let Model {
        game,
        net,
        mechanism,
        x0,
        ..
    } = model;
    let core = |e| CliError::from_core("check", e);
    let connected = net.is_connected();
    let undirected = net.is_undirected();

    let potential = if game.has_potential() {
        let c = check_potential(game, POTENTIAL_SAMPLES, seed, POTENTIAL_STEP).map_err(core)?;
        PotentialJson {
            declared: true,
            passed: c.passed,
            max_error: Some(c.max_error),
            samples: c.samples,
        }
    } else {
        PotentialJson {
            declared: false,
            passed: false,
            max_error: None,
            samples: 0,
        }
    };
    let a1 = check_assumption1(mechanism, game, samples, seed).map_err(core)?;
    let a2 = check_assumption2(mechanism, game, samples, seed).map_err(core)?;
    let profile = match mechanism.profile() {
        RateProfile::Positive => "positive",
        RateProfile::ZeroAtTies => "zero_at_ties",
        RateProfile::Unknown => "unknown",
    };

    let y0 = x0.population();
    let full_support = y0.as_slice().iter().all(|v| *v > 0.0);
    let sup: Vec<usize> = (0..y0.len()).filter(|&i| y0[i] > 0.0).collect();
    let r0 = game.rewards(y0.as_slice());
    let lo = sup.iter().map(|&i| r0[i]).fold(f64::INFINITY, f64::min);
    let hi = sup.iter().map(|&i| r0[i]).fold(f64::NEG_INFINITY, f64::max);
    let restricted_start = hi - lo <= 1e-9 * (1.0 + lo.abs().max(hi.abs()));

    let not_connected = "network not connected (strongly)".to_string();
    let no_a1 = "mechanism fails Assumption 1 on samples".to_string();

    let mut r1 = Vec::new();
    if !connected {
        r1.push(not_connected.clone());
    }
    if !a1.holds_on_samples {
        r1.push(no_a1.clone());
    }
    let case = match mechanism.profile() {
        RateProfile::Positive => Some("positive_rates"),
        RateProfile::ZeroAtTies => Some("zero_rates_at_ties"),
        RateProfile::Unknown => {
            if r1.is_empty() {
                Some("inclusion_only")
            } else {
                None
            }
        }
    };
    let theorem1 = verdict(r1, if connected && a1.holds_on_samples { case } else { None });

    let mut r2 = Vec::new();
    if !potential.declared {
        r2.push("game is not potential".to_string());
    } else if !potential.passed {
        r2.push("declared potential fails the gradient check".to_string());
    }
    if !undirected {
        r2.push("network is directed".to_string());
    }
    if !connected {
        r2.push(not_connected.clone());
    }
    if !a1.holds_on_samples {
        r2.push(no_a1.clone());
    }
    if !full_support {
        r2.push("initial state does not have full support".to_string());
    }
    let theorem2 = verdict(r2.clone(), None);

    let mut rc = r2;
    let mut finite = false;
    match restricted_nash_enumerate(game) {
        Ok(en) if en.exact => {
            let nash: Vec<_> = en.sets.iter().filter(|s| s.nash).collect();
            finite = nash.iter().all(|s| matches!(s.set, EquilibriumSet::Point(_)));
            let interior = nash
                .iter()
                .all(|s| s.set.points().iter().all(|p| p.iter().all(|v| *v > 0.0)));
            if !interior {
                rc.push("game has a Nash equilibrium on the simplex boundary".to_string());
            }
        }
        _ => rc.push("Nash set cannot be enumerated exactly for a non-affine game".to_string()),
    }
    let applicable = rc.is_empty();
    let corollary1 = Corollary {
        applicable,
        reasons: rc,
        converges_to_point: applicable && finite,
        balanced_limit: applicable && finite && a2.holds_on_samples,
    };

    let mut rp = Vec::new();
    if !undirected {
        rp.push("network is directed".to_string());
    }
    if !connected {
        rp.push(not_connected);
    }
    if !a1.holds_on_samples {
        rp.push(no_a1);
    }
    if !a2.holds_on_samples {
        rp.push("mechanism fails Assumption 2 on samples".to_string());
    }
    if !restricted_start {
        rp.push("initial population state is not restricted Nash".to_string());
    }
    let restricted_start_balances = verdict(rp, None);

    Ok(CheckReport {
        network: NetworkJson {
            connected,
            undirected,
        },
        game: GameJson {
            name: game.name().to_string(),
            affine: game.affine_form().is_some(),
            potential,
        },
        mechanism: MechanismJson {
            name: mechanism.name().to_string(),
            rate_profile: profile,
            assumption1: AssumptionJson::from(&a1),
            assumption2: AssumptionJson::from(&a2),
        },
        initial_state: InitialJson {
            full_support,
            restricted_nash_population: restricted_start,
        },
        theorem1,
        theorem2,
        corollary1,
        restricted_start_balances,
    })
}
