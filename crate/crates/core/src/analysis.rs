//! Judgments on trajectories: convergence and oscillation, balancedness,
//! boundary repulsion of non-Nash restricted equilibria, and invariant
//! audits.

use ndarray::Array2;

use crate::dynamics::{population_derivative, Trajectory};
use crate::equilibria::{EquilibriumSet, YCircle, MEMBERSHIP_TOLERANCE, NASH_SLACK};
use crate::error::{Error, Result};
use crate::games::PopulationGame;
use crate::mechanisms::ImitationMechanism;
use crate::network::CommunityNetwork;
use crate::sampling;
use crate::scalar::Scalar;
use crate::state::{balance_gap, support_of, SystemState};

/// What a trajectory is expected to approach. Distances are `‖·‖∞`.
#[derive(Debug, Clone, PartialEq)]
pub enum Target<T> {
    /// A population state.
    Point(Vec<T>),
    /// A union of sets of population states.
    Sets(Vec<EquilibriumSet<T>>),
    /// A system state.
    SystemPoint(Array2<T>),
}

impl<T: Scalar> From<YCircle<T>> for Target<T> {
    fn from(c: YCircle<T>) -> Self {
        Target::Sets(c.components.into_iter().map(|(_, s)| s).collect())
    }
}

impl<T: Scalar> Target<T> {
    pub fn distance(&self, x: &SystemState<T>, y: &[T]) -> T {
        match self {
            Target::Point(p) => y
                .iter()
                .zip(p)
                .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())),
            Target::Sets(sets) => sets
                .iter()
                .map(|s| s.distance(y))
                .fold(T::infinity(), T::min),
            Target::SystemPoint(p) => x
                .matrix()
                .iter()
                .zip(p.iter())
                .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<T> {
    pub converged: bool,
    pub threshold: T,
    pub window: T,
    pub final_distance: T,
    /// Earliest recorded time after which every distance is within the
    /// threshold, when converged.
    pub time_of_convergence: Option<T>,
    pub oscillation_detected: bool,
    /// Minimum distance over the second half of the time span.
    pub min_distance_tail: T,
    /// Peak-to-trough range of the distance over the final window.
    pub amplitude: T,
    /// Sign changes of the discrete derivative over the final window.
    pub turns: usize,
}

/// Distance from `target` at every recorded sample.
pub fn distance_series<T: Scalar>(traj: &Trajectory<T>, target: &Target<T>) -> Vec<T> {
    traj.states
        .iter()
        .zip(&traj.samples)
        .map(|(x, s)| target.distance(x, &s.y))
        .collect()
}

/// Converged iff every distance in the final `window` is within
/// `threshold`. Oscillation is a heuristic: not converged, range above
/// `5·threshold` and at least two turns of the distance in the window.
pub fn convergence_report<T: Scalar>(
    traj: &Trajectory<T>,
    target: &Target<T>,
    threshold: T,
    window: T,
) -> Result<ConvergenceReport<T>> {
    if traj.is_empty() {
        return Err(Error::invalid("trajectory", "is empty"));
    }
    if !(threshold > T::zero()) {
        return Err(Error::invalid("convergence threshold", "must be positive"));
    }
    let t0 = traj.times[0];
    let t_end = *traj.times.last().expect("nonempty");
    let span = t_end - t0;
    if !(window > T::zero()) || (span > T::zero() && window >= span) {
        return Err(Error::invalid(
            "convergence window",
            format!("must lie in (0, {span})"),
        ));
    }
    let d = distance_series(traj, target);
    let start = t_end - window;
    let tail: Vec<T> = traj
        .times
        .iter()
        .zip(&d)
        .filter(|(t, _)| **t >= start)
        .map(|(_, v)| *v)
        .collect();
    let converged = tail.iter().all(|v| *v <= threshold);
    let time_of_convergence = if converged {
        let last_out = d.iter().rposition(|v| *v > threshold);
        Some(match last_out {
            None => t0,
            Some(k) => traj.times[k + 1],
        })
    } else {
        None
    };
    let hi = tail.iter().copied().fold(T::neg_infinity(), T::max);
    let lo = tail.iter().copied().fold(T::infinity(), T::min);
    let amplitude = hi - lo;
    let mut turns = 0;
    let mut last_sign = 0i8;
    for w in tail.windows(2) {
        let s = if w[1] > w[0] {
            1
        } else if w[1] < w[0] {
            -1
        } else {
            0
        };
        if s != 0 {
            if last_sign != 0 && s != last_sign {
                turns += 1;
            }
            last_sign = s;
        }
    }
    let oscillation_detected = !converged && amplitude > T::lit(5.0) * threshold && turns >= 2;
    let half = t0 + span / T::lit(2.0);
    let min_distance_tail = traj
        .times
        .iter()
        .zip(&d)
        .filter(|(t, _)| **t >= half)
        .map(|(_, v)| *v)
        .fold(T::infinity(), T::min);
    Ok(ConvergenceReport {
        converged,
        threshold,
        window,
        final_distance: *d.last().expect("nonempty"),
        time_of_convergence,
        oscillation_detected,
        min_distance_tail,
        amplitude,
        turns,
    })
}

/// `‖x(t) − y(t)·ηᵀ‖∞` at every recorded sample.
pub fn balancedness_deviation<T: Scalar>(
    traj: &Trajectory<T>,
    net: &CommunityNetwork<T>,
) -> Vec<T> {
    traj.states.iter().map(|x| balance_gap(x, net)).collect()
}

/// Probes states near a restricted Nash state that is not Nash and checks
/// that every unplayed action earning more than the played ones grows.
pub fn boundary_repulsion_check<T: Scalar>(
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
    x_bullet: &SystemState<T>,
    eps_probe: T,
    n_probes: usize,
    seed: u64,
) -> Result<bool> {
    if !(eps_probe > T::zero()) || n_probes == 0 {
        return Err(Error::invalid(
            "boundary probe",
            "needs a positive radius and at least one probe",
        ));
    }
    if !net.is_undirected() || !net.is_connected() {
        return Err(Error::Precondition(
            "network must be undirected and connected".into(),
        ));
    }
    if !mech.claims_assumption1() {
        return Err(Error::Precondition(
            "mechanism must satisfy Assumption 1".into(),
        ));
    }
    let y = x_bullet.population();
    let y = y.as_slice();
    let r = game.rewards(y);
    let sup = support_of(y);
    let common = r[sup[0]];
    let tol = T::tol(MEMBERSHIP_TOLERANCE);
    if sup.iter().any(|&i| (r[i] - common).abs() > tol) {
        return Err(Error::Precondition(
            "state is not a restricted Nash equilibrium".into(),
        ));
    }
    let better: Vec<usize> = (0..y.len())
        .filter(|i| !sup.contains(i) && r[*i] > common + T::lit(NASH_SLACK))
        .collect();
    if better.is_empty() {
        return Err(Error::Precondition(
            "state is a Nash equilibrium; no unplayed action earns more".into(),
        ));
    }
    let (n, m) = x_bullet.matrix().dim();
    let mut rng = sampling::rng(seed);
    for _ in 0..n_probes {
        // x = (1 − s)·x• + s·z with z interior, so every action is present
        // and ‖x − x•‖∞ ≤ s < eps.
        let cols: Vec<Vec<T>> = (0..m)
            .map(|_| sampling::interior_simplex(&mut rng, n, T::lit(1e-3)))
            .collect();
        let u: f64 = rand::Rng::gen_range(&mut rng, 0.05..1.0);
        let s = eps_probe * T::lit(u);
        let x = Array2::from_shape_fn((n, m), |(i, h)| {
            (T::one() - s) * x_bullet.get(i, h) + s * cols[h][i] * net.eta()[h]
        });
        let x = SystemState::new(x, net)?;
        let ydot = population_derivative(&x, game, net, mech)?;
        if better.iter().any(|&i| !(ydot[i] > T::zero())) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Passed,
    Failed { index: usize, detail: String },
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub checks: Vec<Check>,
}

impl AuditReport {
    /// No check failed. Skipped checks count as passing.
    pub fn passed(&self) -> bool {
        self.checks
            .iter()
            .all(|c| !matches!(c.status, CheckStatus::Failed { .. }))
    }

    pub fn get(&self, name: &str) -> Option<&CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| &c.status)
    }
}

pub const DRIFT_TOLERANCE: f64 = 1e-8;
pub const MONOTONE_SLACK: f64 = 1e-8;
pub const DERIVATIVE_FLOOR: f64 = -1e-10;
pub const SIMPLEX_TOLERANCE: f64 = 1e-10;

/// Entries the dynamics can make positive: those positive at the start, and
/// `(i, h)` whenever `W_hk > 0` for some reachable `(i, k)`. Every other
/// entry has zero inflow forever.
pub fn reachable_entries<T: Scalar>(x0: &SystemState<T>, net: &CommunityNetwork<T>) -> Array2<bool> {
    let (n, m) = x0.matrix().dim();
    let w = net.weights();
    let mut reach = x0.matrix().mapv(|v| v > T::zero());
    loop {
        let mut changed = false;
        for i in 0..n {
            for h in 0..m {
                if !reach[[i, h]] && (0..m).any(|k| w[[h, k]] > T::zero() && reach[[i, k]]) {
                    reach[[i, h]] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return reach;
        }
    }
}

fn first_failure<T>(
    items: impl IntoIterator<Item = T>,
    mut bad: impl FnMut(usize, T) -> Option<String>,
) -> CheckStatus {
    for (k, item) in items.into_iter().enumerate() {
        if let Some(detail) = bad(k, item) {
            return CheckStatus::Failed { index: k, detail };
        }
    }
    CheckStatus::Passed
}

/// Checks column sums, supports, potential monotonicity (when it applies)
/// and the simplex constraint at every recorded sample.
pub fn invariant_audit<T: Scalar>(
    traj: &Trajectory<T>,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
) -> AuditReport {
    let mut checks = Vec::new();
    let eta = net.eta();

    let drift_tol = T::tol(DRIFT_TOLERANCE);
    checks.push(Check {
        name: "column_sums",
        status: first_failure(traj.states.iter().zip(&traj.samples), |_, (x, s)| {
            let worst = x
                .matrix()
                .columns()
                .into_iter()
                .zip(eta)
                .map(|(c, e)| (c.sum() - *e).abs())
                .fold(s.column_drift, T::max);
            (worst > drift_tol).then(|| format!("column drift {worst}"))
        }),
    });

    let support_status = match traj.states.first() {
        None => CheckStatus::Skipped("empty trajectory".into()),
        Some(x0) => {
            let reach = reachable_entries(x0, net);
            let s0 = support_of(&traj.samples[0].y);
            first_failure(traj.states.iter().zip(&traj.samples), |_, (x, s)| {
                if support_of(&s.y) != s0 {
                    return Some(format!("support changed to {:?}", support_of(&s.y)));
                }
                for ((i, h), v) in x.matrix().indexed_iter() {
                    if x0.get(i, h) > T::zero() && !(*v > T::zero()) {
                        return Some(format!("entry ({i}, {h}) left the support"));
                    }
                    if !reach[[i, h]] && *v != T::zero() {
                        return Some(format!("unreachable entry ({i}, {h}) became {v}"));
                    }
                }
                None
            })
        }
    };
    checks.push(Check {
        name: "support",
        status: support_status,
    });

    let potential_status = if !game.has_potential() {
        CheckStatus::Skipped("game has no potential".into())
    } else if !net.is_undirected() || !net.is_connected() {
        CheckStatus::Skipped("network is not undirected and connected".into())
    } else if !mech.claims_assumption1() {
        CheckStatus::Skipped("mechanism does not claim Assumption 1".into())
    } else {
        let slack = T::tol(MONOTONE_SLACK);
        let floor = T::lit(DERIVATIVE_FLOOR);
        let mut prev: Option<T> = None;
        first_failure(&traj.samples, |_, s| {
            let phi = s.phi?;
            if let Some(p) = prev {
                if phi < p - slack {
                    return Some(format!("potential fell from {p} to {phi}"));
                }
            }
            prev = Some(phi);
            match s.dphi_dt {
                Some(d) if d < floor => Some(format!("dΦ/dt = {d}")),
                _ => None,
            }
        })
    };
    checks.push(Check {
        name: "potential_monotone",
        status: potential_status,
    });

    let simplex_tol = T::tol(SIMPLEX_TOLERANCE);
    checks.push(Check {
        name: "simplex",
        status: first_failure(&traj.samples, |_, s| {
            let sum: T = s.y.iter().copied().sum();
            if let Some(v) = s.y.iter().find(|v| **v < -simplex_tol || !v.is_finite()) {
                return Some(format!("entry {v} outside the simplex"));
            }
            ((sum - T::one()).abs() > simplex_tol).then(|| format!("entries sum to {sum}"))
        }),
    });
    AuditReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegratorSettings};
    use crate::games::{anticoordination_game, congestion_game, constant_reward_game, rps_game};
    use crate::mechanisms::{pairwise_proportional_mechanism, sigmoid_uniform};
    use crate::state::{balanced_state, PopulationState};
    use ndarray::array;

    fn net() -> CommunityNetwork<f64> {
        CommunityNetwork::new(["a", "b"], vec![0.7, 0.3], array![[1.0, 0.2], [0.2, 1.0]]).unwrap()
    }

    fn nash() -> Vec<f64> {
        vec![6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]
    }

    #[test]
    fn constant_trajectory_converges_at_start() {
        let net = net();
        let g = congestion_game();
        let m = sigmoid_uniform(&g, 1.0).unwrap();
        let x0 = balanced_state(&PopulationState::new(nash()).unwrap(), &net);
        let traj = integrate(&x0, &g, &net, &m, &IntegratorSettings::new(5.0)).unwrap();
        let rep = convergence_report(&traj, &Target::Point(nash()), 1e-3, 1.0).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.time_of_convergence, Some(0.0));
        assert!(!rep.oscillation_detected);
        assert!(balancedness_deviation(&traj, &net).iter().all(|v| *v <= 1e-10));
    }

    #[test]
    fn report_is_monotone_in_threshold() {
        let net = net();
        let g = congestion_game();
        let m = pairwise_proportional_mechanism(&g);
        let x0 = SystemState::new(array![[0.1, 0.2], [0.3, 0.05], [0.3, 0.05]], &net).unwrap();
        let traj = integrate(&x0, &g, &net, &m, &IntegratorSettings::new(10.0)).unwrap();
        let t = Target::Point(nash());
        let mut was = false;
        for tau in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let c = convergence_report(&traj, &t, tau, 2.0).unwrap().converged;
            assert!(!was || c);
            was = c;
        }
        assert!(was);
    }

    #[test]
    fn report_validates_arguments() {
        let net = CommunityNetwork::<f64>::single();
        let g = anticoordination_game();
        let m = sigmoid_uniform(&g, 1.0).unwrap();
        let x0 = SystemState::new(array![[0.3], [0.7]], &net).unwrap();
        let traj = integrate(&x0, &g, &net, &m, &IntegratorSettings::new(1.0)).unwrap();
        let t = Target::Point(vec![0.5, 0.5]);
        assert!(convergence_report(&traj, &t, 0.0, 0.5).is_err());
        assert!(convergence_report(&traj, &t, 1e-3, 1.0).is_err());
    }

    #[test]
    fn repulsion_from_non_nash_vertex() {
        let net = net();
        for g in [constant_reward_game::<f64>(), anticoordination_game()] {
            let m = sigmoid_uniform(&g, 1.0).unwrap();
            let xb = balanced_state(&PopulationState::pure(2, 0), &net);
            for seed in 0..10 {
                assert!(boundary_repulsion_check(&g, &net, &m, &xb, 1e-3, 100, seed).unwrap());
            }
        }
    }

    #[test]
    fn repulsion_rejects_nash() {
        let net = net();
        let g = constant_reward_game::<f64>();
        let m = sigmoid_uniform(&g, 1.0).unwrap();
        let xb = balanced_state(&PopulationState::pure(2, 1), &net);
        assert!(matches!(
            boundary_repulsion_check(&g, &net, &m, &xb, 1e-3, 10, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn audit_rps_skips_potential_and_flags_corruption() {
        let net = net();
        let g = rps_game();
        let m = sigmoid_uniform(&g, 1.0).unwrap();
        let x0 = SystemState::new(array![[0.2, 0.13], [0.15, 0.03], [0.35, 0.14]], &net).unwrap();
        let mut traj = integrate(&x0, &g, &net, &m, &IntegratorSettings::new(5.0)).unwrap();
        let rep = invariant_audit(&traj, &g, &net, &m);
        assert!(rep.passed(), "{rep:?}");
        assert!(matches!(rep.get("potential_monotone"), Some(CheckStatus::Skipped(_))));
        traj.samples[42].y[1] = -1e-3;
        let rep = invariant_audit(&traj, &g, &net, &m);
        assert_eq!(
            rep.get("simplex"),
            Some(&CheckStatus::Failed {
                index: 42,
                detail: "entry -0.001 outside the simplex".into()
            })
        );
    }

    #[test]
    fn reachability_respects_one_way_links() {
        let net = CommunityNetwork::new(["a", "b"], vec![0.7, 0.3], array![[1.0, 0.0], [0.2, 1.0]])
            .unwrap();
        let x0 = SystemState::new(array![[0.7, 0.2], [0.0, 0.1]], &net).unwrap();
        let r = reachable_entries(&x0, &net);
        assert!(!r[[1, 0]]);
        let x0 = SystemState::new(array![[0.6, 0.3], [0.1, 0.0]], &net).unwrap();
        assert!(reachable_entries(&x0, &net)[[1, 1]]);
    }
}
