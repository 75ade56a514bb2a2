//! Population games: reward maps on the simplex, optional potentials, the
//! built-in examples, and a finite-difference potential check.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::sampling;
use crate::scalar::Scalar;
use crate::state::ActionSet;

type RewardFn<T> = dyn Fn(&[T], &mut [T]) + Send + Sync;
type PotentialFn<T> = dyn Fn(&[T]) -> T + Send + Sync;

/// Rewards `r(y) = b + A y` with an optional quadratic potential
/// `Φ(y) = yᵀ P y + qᵀ y`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGame<T> {
    pub a: Array2<T>,
    pub b: Array1<T>,
    pub potential: Option<(Array2<T>, Array1<T>)>,
}

impl<T: Scalar> AffineGame<T> {
    fn rewards_into(&self, y: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = self.b[i];
            for (j, yj) in y.iter().enumerate() {
                s += self.a[[i, j]] * *yj;
            }
            *o = s;
        }
    }

    fn potential_at(&self, y: &[T]) -> Option<T> {
        let (p, q) = self.potential.as_ref()?;
        let n = y.len();
        let mut s = T::zero();
        for i in 0..n {
            s += q[i] * y[i];
            for j in 0..n {
                s += p[[i, j]] * y[i] * y[j];
            }
        }
        Some(s)
    }
}

/// A continuous population game `(A, r)`, possibly with a potential.
///
/// Potentials are meaningful up to an additive constant: only the
/// differences `∂Φ/∂y_j − ∂Φ/∂y_i` are required to match `r_j − r_i`.
#[derive(Clone)]
pub struct PopulationGame<T> {
    name: String,
    actions: ActionSet,
    reward: Arc<RewardFn<T>>,
    potential: Option<Arc<PotentialFn<T>>>,
    affine: Option<AffineGame<T>>,
}

impl<T> fmt::Debug for PopulationGame<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PopulationGame")
            .field("name", &self.name)
            .field("actions", &self.actions.labels())
            .field("potential", &self.potential.is_some())
            .field("affine", &self.affine.is_some())
            .finish()
    }
}

impl<T: Scalar> PopulationGame<T> {
    /// Game given by an arbitrary reward closure. `reward(y, out)` must fill
    /// `out` with finite values for every `y` in the simplex and be
    /// re-entrant.
    pub fn new<F>(name: impl Into<String>, actions: ActionSet, reward: F) -> Self
    where
        F: Fn(&[T], &mut [T]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            actions,
            reward: Arc::new(reward),
            potential: None,
            affine: None,
        }
    }

    /// Game with affine rewards `r_i(y) = b_i + Σ_j A_ij y_j`.
    pub fn affine(
        name: impl Into<String>,
        actions: ActionSet,
        a: Array2<T>,
        b: Array1<T>,
    ) -> Result<Self> {
        let n = actions.len();
        if a.dim() != (n, n) {
            return Err(Error::Dimension {
                what: "reward matrix",
                expected: n,
                got: a.nrows(),
            });
        }
        if b.len() != n {
            return Err(Error::Dimension {
                what: "reward offsets",
                expected: n,
                got: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("affine game", "coefficients must be finite"));
        }
        let form = AffineGame {
            a,
            b,
            potential: None,
        };
        let eval = form.clone();
        let mut game = Self::new(name, actions, move |y: &[T], out: &mut [T]| {
            eval.rewards_into(y, out)
        });
        game.affine = Some(form);
        Ok(game)
    }

    /// Attaches a potential closure.
    pub fn with_potential<F>(mut self, potential: F) -> Self
    where
        F: Fn(&[T]) -> T + Send + Sync + 'static,
    {
        self.potential = Some(Arc::new(potential));
        if let Some(form) = self.affine.as_mut() {
            form.potential = None;
        }
        self
    }

    /// Attaches `Φ(y) = yᵀ P y + qᵀ y` and records it in the affine form.
    pub fn with_quadratic_potential(mut self, p: Array2<T>, q: Array1<T>) -> Result<Self> {
        let n = self.n_actions();
        if p.dim() != (n, n) || q.len() != n {
            return Err(Error::Dimension {
                what: "quadratic potential",
                expected: n,
                got: q.len(),
            });
        }
        let form = AffineGame {
            a: Array2::zeros((n, n)),
            b: Array1::zeros(n),
            potential: Some((p, q)),
        };
        let eval = form.clone();
        self.potential = Some(Arc::new(move |y: &[T]| {
            eval.potential_at(y).expect("potential present")
        }));
        if let (Some(aff), Some(pot)) = (self.affine.as_mut(), form.potential) {
            aff.potential = Some(pot);
        }
        Ok(self)
    }

    /// Drops any potential, e.g. to build negative controls.
    pub fn without_potential(mut self) -> Self {
        self.potential = None;
        if let Some(form) = self.affine.as_mut() {
            form.potential = None;
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn rewards_into(&self, y: &[T], out: &mut [T]) {
        (self.reward)(y, out)
    }

    pub fn rewards(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_actions()];
        self.rewards_into(y, &mut out);
        out
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    pub fn potential(&self, y: &[T]) -> Option<T> {
        self.potential.as_ref().map(|p| p(y))
    }

    /// The declarative affine form, when the game was built from one.
    pub fn affine_form(&self) -> Option<&AffineGame<T>> {
        self.affine.as_ref()
    }
}

/// Two actions with constant rewards 0 and 1; `Φ(y) = y_1`.
pub fn constant_reward_game<T: Scalar>() -> PopulationGame<T> {
    let n = 2;
    let z = T::zero();
    let o = T::one();
    PopulationGame::affine(
        "constant_reward",
        ActionSet::indexed(n).expect("valid"),
        Array2::zeros((n, n)),
        Array1::from(vec![z, o]),
    )
    .and_then(|g| g.with_quadratic_potential(Array2::zeros((n, n)), Array1::from(vec![z, o])))
    .expect("built-in game is valid")
}

/// `r_0 = y_1`, `r_1 = 1 − y_1`; potential `Φ(y) = y_1 − y_1²`.
pub fn anticoordination_game<T: Scalar>() -> PopulationGame<T> {
    let z = T::zero();
    let o = T::one();
    PopulationGame::affine(
        "anticoordination",
        ActionSet::indexed(2).expect("valid"),
        Array2::from_shape_vec((2, 2), vec![z, o, z, -o]).expect("shape"),
        Array1::from(vec![z, o]),
    )
    .and_then(|g| {
        g.with_quadratic_potential(
            Array2::from_shape_vec((2, 2), vec![z, z, z, -o]).expect("shape"),
            Array1::from(vec![z, o]),
        )
    })
    .expect("built-in game is valid")
}

/// Three-route congestion archetype `r = (−2y_0, −4y_1, −6y_2)` with
/// `Φ = −y_0² − 2y_1² − 3y_2²`.
pub fn congestion_game<T: Scalar>() -> PopulationGame<T> {
    let d = |v: [f64; 3]| Array2::from_diag(&Array1::from(v.iter().map(|x| T::lit(*x)).collect::<Vec<_>>()));
    PopulationGame::affine(
        "congestion",
        ActionSet::indexed(3).expect("valid"),
        d([-2.0, -4.0, -6.0]),
        Array1::zeros(3),
    )
    .and_then(|g| g.with_quadratic_potential(d([-1.0, -2.0, -3.0]), Array1::zeros(3)))
    .expect("built-in game is valid")
}

/// Rock–paper–scissors: `r_0 = y_1 − y_2`, `r_1 = y_2 − y_0`, `r_2 = y_0 − y_1`.
/// Not a potential game.
pub fn rps_game<T: Scalar>() -> PopulationGame<T> {
    let z = T::zero();
    let o = T::one();
    PopulationGame::affine(
        "rps",
        ActionSet::indexed(3).expect("valid"),
        Array2::from_shape_vec((3, 3), vec![z, o, -o, -o, z, o, o, -o, z]).expect("shape"),
        Array1::zeros(3),
    )
    .expect("built-in game is valid")
}

/// Outcome of the finite-difference potential check.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialCheck<T> {
    pub passed: bool,
    pub max_error: T,
    /// Worst `(y, i, j)` found, where `|r_j − r_i − D_{e_j−e_i}Φ|` is largest.
    pub worst: Option<(Vec<T>, usize, usize)>,
    pub samples: usize,
}

/// Discrepancy above which [`check_potential`] fails.
pub const POTENTIAL_TOLERANCE: f64 = 1e-5;

/// Compares `r_j − r_i` with the central difference of `Φ` along the simplex
/// tangent `e_j − e_i` at interior samples at distance more than `2h` from the
/// boundary.
pub fn check_potential<T: Scalar>(
    game: &PopulationGame<T>,
    n_samples: usize,
    seed: u64,
    h: T,
) -> Result<PotentialCheck<T>> {
    let phi = game
        .potential
        .as_ref()
        .ok_or_else(|| Error::NoPotential(game.name.clone()))?;
    if !(h > T::zero()) {
        return Err(Error::invalid("finite-difference step", "must be positive"));
    }
    let n = game.n_actions();
    if T::of(n) * h * T::lit(3.0) >= T::one() {
        return Err(Error::invalid(
            "finite-difference step",
            "too large for an interior sample",
        ));
    }
    let mut rng = sampling::rng(seed);
    let mut max_error = T::zero();
    let mut worst = None;
    let mut r = vec![T::zero(); n];
    let mut probe = vec![T::zero(); n];
    for _ in 0..n_samples {
        let y: Vec<T> = sampling::interior_simplex(&mut rng, n, h * T::lit(3.0));
        game.rewards_into(&y, &mut r);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                probe.copy_from_slice(&y);
                probe[j] += h;
                probe[i] -= h;
                let up = phi(&probe);
                probe[j] -= h + h;
                probe[i] += h + h;
                let down = phi(&probe);
                let fd = (up - down) / (h + h);
                let err = (r[j] - r[i] - fd).abs();
                if !(err <= max_error) {
                    max_error = err;
                    worst = Some((y.clone(), i, j));
                }
            }
        }
    }
    Ok(PotentialCheck {
        passed: max_error <= T::lit(POTENTIAL_TOLERANCE),
        max_error,
        worst,
        samples: n_samples,
    })
}
