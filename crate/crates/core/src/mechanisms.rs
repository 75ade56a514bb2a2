//! Imitation mechanisms and sampled checkers for the two structural
//! assumptions on them.
//!
//! Assumption 1: `sgn(f_ij − f_ji) = sgn(r_j − r_i)` for every pair.
//! Assumption 2: whenever `r_i = r_j = r_l` for distinct actions,
//! `f_ij = f_il > 0`.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::games::PopulationGame;
use crate::sampling;
use crate::scalar::Scalar;

type RatesFn<T> = dyn Fn(&[T], &mut Array2<T>) + Send + Sync;

/// Sign tolerance of the Assumption 1 comparison.
pub const SIGN_TOLERANCE: f64 = 1e-9;
/// Reward gap below which actions count as tied for Assumption 2.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Allowed difference between `f_ij` and `f_il` at a located tie.
pub const RATE_EQUALITY_TOLERANCE: f64 = 1e-7;

/// How the off-diagonal rates behave, which selects the case of the
/// equilibrium characterization that applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateProfile {
    /// `f_ij(y) > 0` for all `i ≠ j` and all `y`.
    Positive,
    /// `f_ij(y) = 0` whenever `r_i(y) = r_j(y)`.
    ZeroAtTies,
    /// Neither property is known to hold.
    Unknown,
}

/// Rate map `y ↦ f(y)` with the assumptions it is claimed to satisfy.
#[derive(Clone)]
pub struct ImitationMechanism<T> {
    name: String,
    n_actions: usize,
    rates: Arc<RatesFn<T>>,
    claims_assumption1: bool,
    claims_assumption2: bool,
    profile: RateProfile,
}

impl<T> fmt::Debug for ImitationMechanism<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImitationMechanism")
            .field("name", &self.name)
            .field("n_actions", &self.n_actions)
            .field("claims_assumption1", &self.claims_assumption1)
            .field("claims_assumption2", &self.claims_assumption2)
            .field("profile", &self.profile)
            .finish()
    }
}

impl<T: Scalar> ImitationMechanism<T> {
    /// Mechanism from a closure filling the `n × n` rate matrix at `y`.
    ///
    /// The closure must return nonnegative finite values and be Lipschitz on
    /// the simplex; the latter cannot be verified here.
    pub fn new<F>(
        name: impl Into<String>,
        n_actions: usize,
        claims_assumption1: bool,
        claims_assumption2: bool,
        profile: RateProfile,
        rates: F,
    ) -> Self
    where
        F: Fn(&[T], &mut Array2<T>) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            n_actions,
            rates: Arc::new(rates),
            claims_assumption1,
            claims_assumption2,
            profile,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn claims_assumption1(&self) -> bool {
        self.claims_assumption1
    }

    pub fn claims_assumption2(&self) -> bool {
        self.claims_assumption2
    }

    pub fn profile(&self) -> RateProfile {
        self.profile
    }

    pub fn rates_into(&self, y: &[T], out: &mut Array2<T>) {
        (self.rates)(y, out)
    }

    pub fn rates(&self, y: &[T]) -> Array2<T> {
        let mut out = Array2::zeros((self.n_actions, self.n_actions));
        self.rates_into(y, &mut out);
        out
    }
}

/// Vertices of the simplex followed by `n_samples` uniform draws.
fn probe_points<T: Scalar>(n: usize, n_samples: usize, seed: u64) -> Vec<Vec<T>> {
    let mut pts: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|k| if k == i { T::one() } else { T::zero() }).collect())
        .collect();
    let mut rng = sampling::rng(seed);
    pts.extend((0..n_samples).map(|_| sampling::uniform_simplex(&mut rng, n)));
    pts
}

const DEFAULT_PROBES: usize = 1000;
const DEFAULT_PROBE_SEED: u64 = 0x5eed;

/// Replicator rates `f_ij = c + r_j`. Without `c` the constant defaults to
/// `1 + max |r|` over sampled states.
pub fn replicator_mechanism<T: Scalar>(
    game: &PopulationGame<T>,
    c: Option<T>,
) -> Result<ImitationMechanism<T>> {
    let n = game.n_actions();
    let probes = probe_points::<T>(n, DEFAULT_PROBES, DEFAULT_PROBE_SEED);
    let mut min_r = T::infinity();
    let mut max_abs = T::zero();
    for y in &probes {
        for r in game.rewards(y) {
            if !r.is_finite() {
                return Err(Error::invalid("game", "reward is not finite on the simplex"));
            }
            min_r = min_r.min(r);
            max_abs = max_abs.max(r.abs());
        }
    }
    let c = match c {
        Some(c) if !c.is_finite() => {
            return Err(Error::invalid("replicator constant", "must be finite"))
        }
        Some(c) => c,
        None => T::one() + max_abs,
    };
    if c + min_r < T::zero() {
        return Err(Error::invalid(
            "replicator constant",
            format!("c = {c} yields negative rate {} at a sampled state", c + min_r),
        ));
    }
    let profile = if c + min_r > T::zero() {
        RateProfile::Positive
    } else {
        RateProfile::Unknown
    };
    let g = game.clone();
    Ok(ImitationMechanism::new(
        format!("replicator(c={c})"),
        n,
        true,
        true,
        profile,
        move |y: &[T], out: &mut Array2<T>| {
            let r = g.rewards(y);
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] = c + r[j];
                }
            }
        },
    ))
}

/// Pairwise proportional imitation `f_ij = max(r_j − r_i, 0)`.
pub fn pairwise_proportional_mechanism<T: Scalar>(
    game: &PopulationGame<T>,
) -> ImitationMechanism<T> {
    let n = game.n_actions();
    let g = game.clone();
    ImitationMechanism::new(
        "pairwise_proportional",
        n,
        true,
        false,
        RateProfile::ZeroAtTies,
        move |y: &[T], out: &mut Array2<T>| {
            let r = g.rewards(y);
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] = (r[j] - r[i]).max(T::zero());
                }
            }
        },
    )
}

/// Logistic rates `f_ij = 1 / (1 + exp(−K_ij (r_j − r_i)))`.
pub fn sigmoid_mechanism<T: Scalar>(
    game: &PopulationGame<T>,
    k: Array2<T>,
) -> Result<ImitationMechanism<T>> {
    let n = game.n_actions();
    if k.dim() != (n, n) {
        return Err(Error::Dimension {
            what: "sigmoid gain matrix",
            expected: n,
            got: k.nrows(),
        });
    }
    if let Some(v) = k.iter().find(|v| !v.is_finite() || **v <= T::zero()) {
        return Err(Error::invalid(
            "sigmoid gain matrix",
            format!("entry {v} must be positive"),
        ));
    }
    let g = game.clone();
    Ok(ImitationMechanism::new(
        "sigmoid",
        n,
        true,
        true,
        RateProfile::Positive,
        move |y: &[T], out: &mut Array2<T>| {
            let r = g.rewards(y);
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] = T::one() / (T::one() + (-k[[i, j]] * (r[j] - r[i])).exp());
                }
            }
        },
    ))
}

/// Sigmoid mechanism with the same gain on every pair.
pub fn sigmoid_uniform<T: Scalar>(
    game: &PopulationGame<T>,
    k: T,
) -> Result<ImitationMechanism<T>> {
    let n = game.n_actions();
    sigmoid_mechanism(game, Array2::from_elem((n, n), k))
}

/// Rates independent of the state. Claims no assumption: whether they hold
/// depends on the game.
pub fn constant_mechanism<T: Scalar>(rates: Array2<T>) -> Result<ImitationMechanism<T>> {
    let n = rates.nrows();
    if rates.ncols() != n {
        return Err(Error::Dimension {
            what: "constant rate matrix",
            expected: n,
            got: rates.ncols(),
        });
    }
    if let Some(v) = rates.iter().find(|v| !v.is_finite() || **v < T::zero()) {
        return Err(Error::invalid(
            "constant rate matrix",
            format!("entry {v} must be nonnegative"),
        ));
    }
    let positive = (0..n).all(|i| (0..n).all(|j| i == j || rates[[i, j]] > T::zero()));
    let profile = if positive {
        RateProfile::Positive
    } else {
        RateProfile::Unknown
    };
    Ok(ImitationMechanism::new(
        "constant",
        n,
        false,
        false,
        profile,
        move |_y: &[T], out: &mut Array2<T>| out.assign(&rates),
    ))
}

/// Rates affine in the population state: `f(y) = base + Σ_l y_l · slopes[l]`.
/// Nonnegativity is checked exactly at the simplex vertices.
pub fn affine_mechanism<T: Scalar>(
    base: Array2<T>,
    slopes: Vec<Array2<T>>,
) -> Result<ImitationMechanism<T>> {
    let n = base.nrows();
    if base.ncols() != n || slopes.len() != n || slopes.iter().any(|s| s.dim() != (n, n)) {
        return Err(Error::Dimension {
            what: "affine rate coefficients",
            expected: n,
            got: slopes.len(),
        });
    }
    if base
        .iter()
        .chain(slopes.iter().flat_map(|s| s.iter()))
        .any(|v| !v.is_finite())
    {
        return Err(Error::invalid("affine rate coefficients", "must be finite"));
    }
    let mut positive = true;
    for (l, s) in slopes.iter().enumerate() {
        let at_vertex = &base + s;
        if let Some(v) = at_vertex.iter().find(|v| **v < T::zero()) {
            return Err(Error::invalid(
                "affine rate coefficients",
                format!("rate {v} is negative at vertex {l}"),
            ));
        }
        positive &= (0..n).all(|i| (0..n).all(|j| i == j || at_vertex[[i, j]] > T::zero()));
    }
    let profile = if positive {
        RateProfile::Positive
    } else {
        RateProfile::Unknown
    };
    Ok(ImitationMechanism::new(
        "affine",
        n,
        false,
        false,
        profile,
        move |y: &[T], out: &mut Array2<T>| {
            out.assign(&base);
            for (l, s) in slopes.iter().enumerate() {
                out.scaled_add(y[l], s);
            }
        },
    ))
}

/// Sampled spot check that every rate is finite and nonnegative.
pub fn validate_rates<T: Scalar>(
    mech: &ImitationMechanism<T>,
    n_samples: usize,
    seed: u64,
) -> Result<()> {
    let n = mech.n_actions();
    let mut f = Array2::zeros((n, n));
    for y in probe_points::<T>(n, n_samples, seed) {
        mech.rates_into(&y, &mut f);
        if let Some(v) = f.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::invalid(
                "imitation rates",
                format!("rate {v} at y = {y:?} is negative or not finite"),
            ));
        }
    }
    Ok(())
}

/// State and actions at which an assumption fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness<T> {
    pub y: Vec<T>,
    /// The ordered pair `(i, j)` for Assumption 1, the triple `(i, j, l)`
    /// for Assumption 2.
    pub actions: Vec<usize>,
    /// `(f_ij, f_ji)` or `(f_ij, f_il)`.
    pub rates: Vec<T>,
    /// Rewards of `actions`, in order.
    pub rewards: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport<T> {
    pub assumption: u8,
    pub holds_on_samples: bool,
    pub counterexample: Option<Witness<T>>,
    pub samples_tested: usize,
}

impl<T: Scalar> AssumptionReport<T> {
    /// Re-evaluates the counterexample and reports whether it still violates
    /// the assumption. `false` when there is none.
    pub fn reproduce(&self, mech: &ImitationMechanism<T>, game: &PopulationGame<T>) -> bool {
        let Some(w) = &self.counterexample else {
            return false;
        };
        let f = mech.rates(&w.y);
        let r = game.rewards(&w.y);
        match (self.assumption, w.actions.as_slice()) {
            (1, &[i, j]) => a1_violated(&f, &r, i, j),
            (2, &[i, j, l]) => is_tie(&r, i, j, l) && a2_violated(&f, i, j, l),
            _ => false,
        }
    }
}

fn sgn<T: Scalar>(v: T) -> i8 {
    let eps = T::lit(SIGN_TOLERANCE);
    if v > eps {
        1
    } else if v < -eps {
        -1
    } else {
        0
    }
}

fn a1_violated<T: Scalar>(f: &Array2<T>, r: &[T], i: usize, j: usize) -> bool {
    sgn(f[[i, j]] - f[[j, i]]) != sgn(r[j] - r[i])
}

fn is_tie<T: Scalar>(r: &[T], i: usize, j: usize, l: usize) -> bool {
    let tol = T::tol(TIE_TOLERANCE);
    (r[i] - r[j]).abs() <= tol && (r[i] - r[l]).abs() <= tol && (r[j] - r[l]).abs() <= tol
}

fn a2_violated<T: Scalar>(f: &Array2<T>, i: usize, j: usize, l: usize) -> bool {
    let (a, b) = (f[[i, j]], f[[i, l]]);
    let eq_tol = T::tol(RATE_EQUALITY_TOLERANCE) * (T::one() + a.abs().max(b.abs()));
    (a - b).abs() > eq_tol || !(a > T::lit(SIGN_TOLERANCE))
}

/// Checks Assumption 1 at `n_samples` uniform draws on the simplex.
pub fn check_assumption1<T: Scalar>(
    mech: &ImitationMechanism<T>,
    game: &PopulationGame<T>,
    n_samples: usize,
    seed: u64,
) -> Result<AssumptionReport<T>> {
    let n = game.n_actions();
    if mech.n_actions() != n {
        return Err(Error::Dimension {
            what: "mechanism",
            expected: n,
            got: mech.n_actions(),
        });
    }
    let mut rng = sampling::rng(seed);
    let mut f = Array2::zeros((n, n));
    for s in 0..n_samples {
        let y: Vec<T> = sampling::uniform_simplex(&mut rng, n);
        mech.rates_into(&y, &mut f);
        let r = game.rewards(&y);
        for i in 0..n {
            for j in 0..n {
                if i != j && a1_violated(&f, &r, i, j) {
                    return Ok(AssumptionReport {
                        assumption: 1,
                        holds_on_samples: false,
                        counterexample: Some(Witness {
                            rates: vec![f[[i, j]], f[[j, i]]],
                            rewards: vec![r[i], r[j]],
                            y,
                            actions: vec![i, j],
                        }),
                        samples_tested: s + 1,
                    });
                }
            }
        }
    }
    Ok(AssumptionReport {
        assumption: 1,
        holds_on_samples: true,
        counterexample: None,
        samples_tested: n_samples,
    })
}

/// Bisection for a sign change of `g` on `[0, 1]`. `None` without one.
fn bisect<T: Scalar>(mut g: impl FnMut(T) -> T) -> Option<T> {
    let (mut lo, mut hi) = (T::zero(), T::one());
    let (glo, ghi) = (g(lo), g(hi));
    if glo == T::zero() {
        return Some(lo);
    }
    if ghi == T::zero() {
        return Some(hi);
    }
    if (glo > T::zero()) == (ghi > T::zero()) || !glo.is_finite() || !ghi.is_finite() {
        return None;
    }
    let lo_positive = glo > T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == T::zero() {
            return Some(mid);
        }
        if (gm > T::zero()) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo + hi) / T::lit(2.0))
}

/// Searches the face spanned by `(i, j, l)`, scaled into `y0`'s remaining
/// mass, for a three-way reward tie. The inner bisection moves mass from
/// `i` to `j` to equalize `r_i` and `r_j`; the outer one moves mass to `l`.
fn locate_tie<T: Scalar>(
    game: &PopulationGame<T>,
    y0: &[T],
    (i, j, l): (usize, usize, usize),
) -> Option<Vec<T>> {
    let mass = y0[i] + y0[j] + y0[l];
    let point = |s: T, t: T| {
        let mut y = y0.to_vec();
        y[i] = mass * (T::one() - t) * (T::one() - s);
        y[j] = mass * (T::one() - t) * s;
        y[l] = mass * t;
        y
    };
    let inner = |t: T| {
        bisect(|s: T| {
            let r = game.rewards(&point(s, t));
            r[j] - r[i]
        })
    };
    let outer = |t: T| {
        inner(t).map_or(T::nan(), |s| {
            let r = game.rewards(&point(s, t));
            r[l] - r[i]
        })
    };
    let t = bisect(outer)?;
    let s = inner(t)?;
    let y = point(s, t);
    is_tie(&game.rewards(&y), i, j, l).then_some(y)
}

/// Checks Assumption 2 at three-way reward ties found among uniform samples
/// and by bisection on simplex faces through each sample.
pub fn check_assumption2<T: Scalar>(
    mech: &ImitationMechanism<T>,
    game: &PopulationGame<T>,
    n_samples: usize,
    seed: u64,
) -> Result<AssumptionReport<T>> {
    let n = game.n_actions();
    if mech.n_actions() != n {
        return Err(Error::Dimension {
            what: "mechanism",
            expected: n,
            got: mech.n_actions(),
        });
    }
    let mut report = AssumptionReport {
        assumption: 2,
        holds_on_samples: true,
        counterexample: None,
        samples_tested: 0,
    };
    if n < 3 {
        return Ok(report);
    }
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for l in j + 1..n {
                triples.push((i, j, l));
            }
        }
    }
    let mut rng = sampling::rng(seed);
    let mut f = Array2::zeros((n, n));
    let mut tested_full_face = false;
    for _ in 0..n_samples {
        let y0: Vec<T> = sampling::uniform_simplex(&mut rng, n);
        for &(i, j, l) in &triples {
            let mut candidates = vec![y0.clone()];
            // On a game with three actions every face search hits the same tie.
            if n > 3 || !tested_full_face {
                if let Some(y) = locate_tie(game, &y0, (i, j, l)) {
                    candidates.push(y);
                }
            }
            for y in candidates {
                let r = game.rewards(&y);
                if !is_tie(&r, i, j, l) {
                    continue;
                }
                report.samples_tested += 1;
                mech.rates_into(&y, &mut f);
                for (a, b, c) in [(i, j, l), (j, i, l), (l, i, j)] {
                    if a2_violated(&f, a, b, c) {
                        report.holds_on_samples = false;
                        report.counterexample = Some(Witness {
                            rates: vec![f[[a, b]], f[[a, c]]],
                            rewards: vec![r[a], r[b], r[c]],
                            y,
                            actions: vec![a, b, c],
                        });
                        return Ok(report);
                    }
                }
            }
        }
        tested_full_face = true;
    }
    Ok(report)
}
