//! The imitation vector field, its aggregate over communities, and a
//! fixed-step RK4 integrator that keeps states on the constraint set.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::games::PopulationGame;
use crate::mechanisms::ImitationMechanism;
use crate::network::CommunityNetwork;
use crate::scalar::Scalar;
use crate::state::SystemState;

/// Entries below this value abort an integration.
pub const ABORT_THRESHOLD: f64 = -1e-6;

fn check_dims<T: Scalar>(
    n_actions: usize,
    n_comm: usize,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
) -> Result<()> {
    if game.n_actions() != n_actions {
        return Err(Error::Dimension {
            what: "game actions",
            expected: n_actions,
            got: game.n_actions(),
        });
    }
    if mech.n_actions() != n_actions {
        return Err(Error::Dimension {
            what: "mechanism actions",
            expected: n_actions,
            got: mech.n_actions(),
        });
    }
    if net.len() != n_comm {
        return Err(Error::Dimension {
            what: "network communities",
            expected: n_comm,
            got: net.len(),
        });
    }
    Ok(())
}

fn row_sums<T: Scalar>(x: ArrayView2<'_, T>) -> Vec<T> {
    x.rows().into_iter().map(|r| r.iter().copied().sum()).collect()
}

/// `Z_ih = Σ_k W_hk x_ik`: the weighted presence of action `i` seen from
/// community `h`.
fn encounter<T: Scalar>(x: ArrayView2<'_, T>, w: ArrayView2<'_, T>) -> Array2<T> {
    let (n, m) = x.dim();
    Array2::from_shape_fn((n, m), |(i, h)| {
        let mut s = T::zero();
        for k in 0..m {
            s += w[[h, k]] * x[[i, k]];
        }
        s
    })
}

/// Evaluates the field into `out` and returns whether every rate was finite.
///
/// Uses `ẋ_ih = Z_ih Σ_{j≠i} x_jh f_ji − x_ih Σ_{j≠i} Z_jh f_ij`. The diagonal
/// terms cancel analytically and are skipped so that single-action states
/// give an exact zero.
fn field_into<T: Scalar>(
    x: ArrayView2<'_, T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
    f: &mut Array2<T>,
    out: &mut Array2<T>,
) -> bool {
    let (n, m) = x.dim();
    let y = row_sums(x);
    mech.rates_into(&y, f);
    let finite = f.iter().all(|v| v.is_finite());
    let z = encounter(x, net.weights());
    for h in 0..m {
        for i in 0..n {
            let mut inflow = T::zero();
            let mut outflow = T::zero();
            for j in 0..n {
                if j != i {
                    inflow += x[[j, h]] * f[[j, i]];
                    outflow += z[[j, h]] * f[[i, j]];
                }
            }
            out[[i, h]] = z[[i, h]] * inflow - x[[i, h]] * outflow;
        }
    }
    finite
}

/// The imitation dynamics
/// `ẋ_ih = Σ_j Σ_k (x_jh W_hk x_ik f_ji(y) − x_ih W_hk x_jk f_ij(y))`.
pub fn vector_field<T: Scalar>(
    x: &SystemState<T>,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
) -> Result<Array2<T>> {
    check_dims(x.n_actions(), x.n_communities(), game, net, mech)?;
    let n = x.n_actions();
    let mut f = Array2::zeros((n, n));
    let mut out = Array2::zeros(x.matrix().dim());
    field_into(x.matrix(), net, mech, &mut f, &mut out);
    Ok(out)
}

/// `Λ_ij = Σ_{h,k} x_ih W_hk x_jk`.
pub fn lambda_matrix<T: Scalar>(x: &SystemState<T>, net: &CommunityNetwork<T>) -> Result<Array2<T>> {
    if x.n_communities() != net.len() {
        return Err(Error::Dimension {
            what: "network communities",
            expected: x.n_communities(),
            got: net.len(),
        });
    }
    Ok(lambda_of(x.matrix(), net))
}

fn lambda_of<T: Scalar>(x: ArrayView2<'_, T>, net: &CommunityNetwork<T>) -> Array2<T> {
    let (n, m) = x.dim();
    let z = encounter(x, net.weights());
    Array2::from_shape_fn((n, n), |(i, j)| {
        let mut s = T::zero();
        for h in 0..m {
            s += x[[i, h]] * z[[j, h]];
        }
        s
    })
}

/// `ẏ_i = Σ_j (Λ_ji f_ji − Λ_ij f_ij)`.
pub fn population_derivative<T: Scalar>(
    x: &SystemState<T>,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
) -> Result<Vec<T>> {
    check_dims(x.n_actions(), x.n_communities(), game, net, mech)?;
    let lambda = lambda_of(x.matrix(), net);
    let f = mech.rates(&row_sums(x.matrix()));
    let n = x.n_actions();
    Ok((0..n)
        .map(|i| {
            let mut s = T::zero();
            for j in 0..n {
                if j != i {
                    s += lambda[[j, i]] * f[[j, i]] - lambda[[i, j]] * f[[i, j]];
                }
            }
            s
        })
        .collect())
}

/// Closed form `½ Σ_ij Λ_ij (f_ji − f_ij)(r_i − r_j)` of `dΦ/dt`, valid on
/// undirected networks only.
pub fn potential_derivative<T: Scalar>(
    x: &SystemState<T>,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
) -> Result<T> {
    check_dims(x.n_actions(), x.n_communities(), game, net, mech)?;
    if !game.has_potential() {
        return Err(Error::NoPotential(game.name().to_string()));
    }
    if !net.is_undirected() {
        return Err(Error::DirectedNetwork);
    }
    let n = x.n_actions();
    let mut f = Array2::zeros((n, n));
    Ok(closed_form_rate(x.matrix(), game, net, mech, &mut f))
}

fn closed_form_rate<T: Scalar>(
    x: ArrayView2<'_, T>,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
    f: &mut Array2<T>,
) -> T {
    let y = row_sums(x);
    mech.rates_into(&y, f);
    let r = game.rewards(&y);
    let lambda = lambda_of(x, net);
    let n = y.len();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            s += lambda[[i, j]] * (f[[j, i]] - f[[i, j]]) * (r[i] - r[j]);
        }
    }
    s / T::lit(2.0)
}

/// `r(y)·ẏ`, the rate of change of any potential on any network.
pub fn potential_rate<T: Scalar>(
    x: &SystemState<T>,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
) -> Result<T> {
    let ydot = population_derivative(x, game, net, mech)?;
    let r = game.rewards(x.population().as_slice());
    Ok(r.iter().zip(&ydot).map(|(a, b)| *a * *b).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings<T> {
    pub step: T,
    pub t_end: T,
    pub record_every: usize,
    pub renorm_threshold: T,
    pub clamp_floor: T,
}

impl<T: Scalar> IntegratorSettings<T> {
    pub fn new(t_end: T) -> Self {
        Self {
            step: T::lit(0.01),
            t_end,
            record_every: 1,
            renorm_threshold: T::lit(1e-9),
            clamp_floor: T::lit(1e-14),
        }
    }

    pub fn with_step(mut self, step: T) -> Self {
        self.step = step;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v.is_finite() && v > T::zero();
        if !pos(self.step) {
            return Err(Error::invalid("integrator", "step must be positive"));
        }
        if !pos(self.t_end) {
            return Err(Error::invalid("integrator", "t_end must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("integrator", "record_every must be at least 1"));
        }
        if !pos(self.renorm_threshold) || !pos(self.clamp_floor) {
            return Err(Error::invalid(
                "integrator",
                "renormalization threshold and clamp floor must be positive",
            ));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened to land on `t_end`.
    pub fn n_steps(&self) -> usize {
        let ratio = (self.t_end / self.step).to_f64_lossy();
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

/// Derived quantities at a recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub y: Vec<T>,
    pub phi: Option<T>,
    /// Closed-form `dΦ/dt` on undirected networks, `r·ẏ` otherwise.
    pub dphi_dt: Option<T>,
    pub field_norm: T,
    /// Largest `|Σ_i x_ih − η_h|` seen before renormalization since the
    /// previous record.
    pub column_drift: T,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub steps: usize,
    pub renormalizations: usize,
    /// Negative rounding residues set to zero under the clamp policy.
    pub clamps: usize,
    /// Small negatives outside the clamp policy that were zeroed anyway.
    pub forced_clamps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<SystemState<T>>,
    pub samples: Vec<Sample<T>>,
    pub stats: IntegrationStats,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &SystemState<T> {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn final_y(&self) -> &[T] {
        &self.samples.last().expect("trajectory is never empty").y
    }
}

struct Workspace<T> {
    f: Array2<T>,
    k: [Array2<T>; 4],
    tmp: Array2<T>,
}

/// Integrates the dynamics from `x0` with classical RK4 at a fixed step.
///
/// After each step, negative rounding residues are zeroed when the entry
/// started at zero or had decayed below `clamp_floor`; any entry below
/// −1e-6 aborts. Columns drifting from their community size by more than
/// `renorm_threshold` are rescaled, never shifted. The initial and final
/// states are always recorded.
pub fn integrate<T: Scalar>(
    x0: &SystemState<T>,
    game: &PopulationGame<T>,
    net: &CommunityNetwork<T>,
    mech: &ImitationMechanism<T>,
    settings: &IntegratorSettings<T>,
) -> Result<Trajectory<T>> {
    settings.validate()?;
    let (n, m) = x0.matrix().dim();
    check_dims(n, m, game, net, mech)?;
    let potential = game.has_potential();
    let undirected = net.is_undirected();
    let n_steps = settings.n_steps();
    let h_full = settings.step;
    let mut ws = Workspace {
        f: Array2::zeros((n, n)),
        k: std::array::from_fn(|_| Array2::zeros((n, m))),
        tmp: Array2::zeros((n, m)),
    };
    let mut x = x0.matrix().to_owned();
    let start = x.clone();
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        samples: Vec::new(),
        stats: IntegrationStats::default(),
    };
    let mut drift_since_record = T::zero();
    let abort = |t: T, reason: String| Error::IntegrationAbort {
        time: t.to_f64_lossy(),
        reason,
    };

    for k in 0..=n_steps {
        let t = if k == n_steps {
            settings.t_end
        } else {
            h_full * T::of(k)
        };
        let Workspace { f, k: ks, tmp } = &mut ws;
        if !field_into(x.view(), net, mech, f, &mut ks[0]) {
            return Err(abort(t, "imitation rate is not finite".into()));
        }
        if ks[0].iter().any(|v| !v.is_finite()) {
            return Err(abort(t, "vector field is not finite".into()));
        }
        if k % settings.record_every == 0 || k == n_steps {
            let y = row_sums(x.view());
            let phi = game.potential(&y);
            let dphi_dt = if !potential {
                None
            } else if undirected {
                Some(closed_form_rate(x.view(), game, net, mech, f))
            } else {
                let r = game.rewards(&y);
                let ydot: Vec<T> = ks[0].rows().into_iter().map(|r| r.sum()).collect();
                Some(r.iter().zip(&ydot).map(|(a, b)| *a * *b).sum())
            };
            let field_norm = ks[0].iter().fold(T::zero(), |a, v| a.max(v.abs()));
            traj.times.push(t);
            traj.states.push(SystemState::from_array_unchecked(x.clone()));
            traj.samples.push(Sample {
                y,
                phi,
                dphi_dt,
                field_norm,
                column_drift: drift_since_record,
            });
            drift_since_record = T::zero();
        }
        if k == n_steps {
            break;
        }
        let h = if k + 1 == n_steps {
            settings.t_end - h_full * T::of(k)
        } else {
            h_full
        };
        let half = h / T::lit(2.0);
        for stage in 1..4 {
            let c = if stage == 3 { h } else { half };
            tmp.assign(&x);
            tmp.scaled_add(c, &ks[stage - 1]);
            let rest = &mut ks[stage..];
            if !field_into(tmp.view(), net, mech, f, &mut rest[0]) {
                return Err(abort(t, "imitation rate is not finite".into()));
            }
        }
        tmp.assign(&x);
        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        ndarray::Zip::from(&mut x)
            .and(&ks[0])
            .and(&ks[1])
            .and(&ks[2])
            .and(&ks[3])
            .for_each(|xv, a, b, c, d| *xv += sixth * (*a + two * *b + two * *c + *d));
        traj.stats.steps += 1;
        let t_next = t + h;

        let scale = x.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let floor = settings.clamp_floor;
        for ((i, hh), v) in x.indexed_iter_mut() {
            if !v.is_finite() {
                return Err(abort(t_next, format!("entry ({i}, {hh}) is not finite")));
            }
            if *v < T::zero() {
                if *v < T::lit(ABORT_THRESHOLD) {
                    return Err(abort(
                        t_next,
                        format!("entry ({i}, {hh}) fell to {v}; step may be too large"),
                    ));
                }
                let prev = tmp[[i, hh]];
                let eligible = start[[i, hh]] == T::zero() || prev.abs() < floor;
                if eligible && *v >= -floor * scale.max(T::one()) {
                    traj.stats.clamps += 1;
                } else {
                    traj.stats.forced_clamps += 1;
                }
                *v = T::zero();
            }
        }

        for (hh, mut col) in x.columns_mut().into_iter().enumerate() {
            let eta = net.eta()[hh];
            let sum: T = col.iter().copied().sum();
            let dev = (sum - eta).abs();
            drift_since_record = drift_since_record.max(dev);
            if dev > settings.renorm_threshold {
                if !(sum > T::zero()) {
                    return Err(abort(t_next, format!("column {hh} collapsed")));
                }
                col.mapv_inplace(|v| v * eta / sum);
                traj.stats.renormalizations += 1;
            }
        }
    }
    Ok(traj)
}
