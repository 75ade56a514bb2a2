//! Action sets, population states on the simplex and system states (one
//! column per community).

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::network::CommunityNetwork;
use crate::scalar::Scalar;

/// Ordered, duplicate-free action labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    labels: Vec<String>,
}

impl ActionSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::invalid("action set", "at least one action required"));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::invalid("action set", format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels })
    }

    /// Actions labelled `0..n`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Probability vector over actions.
///
/// Entries are nonnegative and sum to one. Inputs within the construction
/// tolerance (1e-12 for `f64`) are rescaled by their actual sum, so the stored
/// vector satisfies the constraint up to a single rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState<T> {
    values: Vec<T>,
}

impl<T: Scalar> PopulationState<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("population state", "empty vector"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::invalid(
                "population state",
                format!("entry {v} is negative or not finite"),
            ));
        }
        let sum: T = values.iter().copied().sum();
        if (sum - T::one()).abs() > T::tol(1e-12) {
            return Err(Error::invalid(
                "population state",
                format!("entries sum to {sum}, expected 1"),
            ));
        }
        let values = values.into_iter().map(|v| v / sum).collect();
        Ok(Self { values })
    }

    /// Uniform distribution over `n` actions.
    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![T::one() / T::of(n); n],
        }
    }

    /// All mass on `action`.
    pub fn pure(n: usize, action: usize) -> Self {
        let mut values = vec![T::zero(); n];
        values[action] = T::one();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        Self { values }
    }
}

impl<T> std::ops::Index<usize> for PopulationState<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

/// Action-by-community matrix of population fractions.
///
/// Column `h` sums to the size of community `h`; all entries are nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState<T> {
    x: Array2<T>,
}

impl<T: Scalar> SystemState<T> {
    /// Validates `x` against `net` and rescales each column to its exact size
    /// when the deviation is within 1e-10.
    pub fn new(x: Array2<T>, net: &CommunityNetwork<T>) -> Result<Self> {
        let (n_actions, n_comm) = x.dim();
        if n_actions == 0 {
            return Err(Error::invalid("system state", "no actions"));
        }
        if n_comm != net.len() {
            return Err(Error::Dimension {
                what: "system state columns",
                expected: net.len(),
                got: n_comm,
            });
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return Err(Error::invalid(
                "system state",
                format!("entry {v} is negative or not finite"),
            ));
        }
        let mut x = x;
        for (h, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            let eta = net.eta()[h];
            let sum: T = col.iter().copied().sum();
            if (sum - eta).abs() > T::tol(1e-10) {
                return Err(Error::invalid(
                    "system state",
                    format!("column {h} sums to {sum}, expected community size {eta}"),
                ));
            }
            if sum > T::zero() {
                col.mapv_inplace(|v| v * eta / sum);
            }
        }
        Ok(Self { x })
    }

    /// Builds a state from rows given as nested vectors (`rows[action][community]`).
    pub fn from_rows(rows: &[Vec<T>], net: &CommunityNetwork<T>) -> Result<Self> {
        let n_comm = rows.first().map_or(0, Vec::len);
        let mut x = Array2::zeros((rows.len(), n_comm));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_comm {
                return Err(Error::Dimension {
                    what: "system state row",
                    expected: n_comm,
                    got: row.len(),
                });
            }
            for (h, v) in row.iter().enumerate() {
                x[[i, h]] = *v;
            }
        }
        Self::new(x, net)
    }

    pub(crate) fn from_array_unchecked(x: Array2<T>) -> Self {
        Self { x }
    }

    pub fn matrix(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn into_matrix(self) -> Array2<T> {
        self.x
    }

    pub fn n_actions(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_communities(&self) -> usize {
        self.x.ncols()
    }

    pub fn get(&self, action: usize, community: usize) -> T {
        self.x[[action, community]]
    }

    /// Row sums `y = x·1`.
    pub fn population(&self) -> PopulationState<T> {
        population_state(self)
    }
}

/// Population state corresponding to a system state: the row sums of `x`.
pub fn population_state<T: Scalar>(x: &SystemState<T>) -> PopulationState<T> {
    let y: Array1<T> = x.x.sum_axis(Axis(1));
    PopulationState::from_vec_unchecked(y.to_vec())
}

/// The balanced system state `x_ih = y_i·η_h`.
pub fn balanced_state<T: Scalar>(
    y: &PopulationState<T>,
    net: &CommunityNetwork<T>,
) -> SystemState<T> {
    let x = Array2::from_shape_fn((y.len(), net.len()), |(i, h)| y[i] * net.eta()[h]);
    SystemState { x }
}

/// Largest entrywise gap `|x_ih − y_i·η_h|`.
pub fn balance_gap<T: Scalar>(x: &SystemState<T>, net: &CommunityNetwork<T>) -> T {
    let y = population_state(x);
    x.x.indexed_iter()
        .map(|((i, h), v)| (*v - y[i] * net.eta()[h]).abs())
        .fold(T::zero(), T::max)
}

pub fn is_balanced<T: Scalar>(x: &SystemState<T>, net: &CommunityNetwork<T>, tol: T) -> bool {
    balance_gap(x, net) <= tol
}

/// Indices of actions with strictly positive share.
pub fn support<T: Scalar>(y: &PopulationState<T>) -> Vec<usize> {
    support_of(y.as_slice())
}

pub(crate) fn support_of<T: Scalar>(y: &[T]) -> Vec<usize> {
    y.iter()
        .enumerate()
        .filter(|(_, v)| **v > T::zero())
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn net2(eta: [f64; 2]) -> CommunityNetwork<f64> {
        CommunityNetwork::new(["a", "b"], eta.to_vec(), array![[1.0, 0.2], [0.2, 1.0]]).unwrap()
    }

    #[test]
    fn action_set_rejects_duplicates() {
        assert!(ActionSet::new(["r", "p", "r"]).is_err());
        assert!(ActionSet::new(Vec::<String>::new()).is_err());
        let a = ActionSet::indexed(3).unwrap();
        assert_eq!(a.index_of("2"), Some(2));
    }

    #[test]
    fn population_state_renormalizes_within_tolerance() {
        let y = PopulationState::new(vec![0.5 + 4e-13, 0.5]).unwrap();
        let s: f64 = y.as_slice().iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 4.0 * f64::EPSILON);
        assert!(PopulationState::new(vec![0.5, 0.6]).is_err());
        assert!(PopulationState::new(vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn population_of_single_action_state() {
        let net = net2([0.7, 0.3]);
        let x = SystemState::from_rows(&[vec![0.7, 0.3], vec![0.0, 0.0]], &net).unwrap();
        assert_eq!(population_state(&x).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn population_of_example4_equilibrium() {
        let net = net2([0.7, 0.3]);
        let x = SystemState::from_rows(&[vec![0.7, 0.14], vec![0.0, 0.16]], &net).unwrap();
        let y = population_state(&x);
        assert_abs_diff_eq!(y[0], 0.84, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 0.16, epsilon = 1e-15);
        assert_eq!(support(&y), vec![0, 1]);
        assert!(!is_balanced(&x, &net, 1e-3));
    }

    #[test]
    fn system_state_checks_columns() {
        let net = net2([0.7, 0.3]);
        assert!(SystemState::from_rows(&[vec![0.7, 0.2], vec![0.0, 0.0]], &net).is_err());
        assert!(SystemState::from_rows(&[vec![0.8, 0.3], vec![-0.1, 0.0]], &net).is_err());
        assert!(SystemState::from_rows(&[vec![0.7], vec![0.0]], &net).is_err());
    }

    #[test]
    fn balanced_pure_action() {
        let net = net2([0.5, 0.5]);
        let x = balanced_state(&PopulationState::pure(2, 0), &net);
        assert_eq!(x.matrix(), array![[0.5, 0.5], [0.0, 0.0]]);
    }

    #[test]
    fn balanced_congestion_nash() {
        let net = net2([0.7, 0.3]);
        let y = PopulationState::new(vec![6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]).unwrap();
        let x = balanced_state(&y, &net);
        let expected = array![
            [0.381_818_181_818_181_8, 0.163_636_363_636_363_6],
            [0.190_909_090_909_090_9, 0.081_818_181_818_181_8],
            [0.127_272_727_272_727_3, 0.054_545_454_545_454_5]
        ];
        for (a, b) in x.matrix().iter().zip(expected.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
        assert!(is_balanced(&x, &net, 1e-12));
    }

    #[test]
    fn single_community_is_always_balanced() {
        let net = CommunityNetwork::new(["only"], vec![1.0], array![[1.0]]).unwrap();
        let x = SystemState::from_rows(&[vec![0.2], vec![0.5], vec![0.3]], &net).unwrap();
        assert!(is_balanced(&x, &net, 1e-15));
    }

    #[test]
    fn support_examples() {
        assert_eq!(support(&PopulationState::<f64>::pure(2, 0)), vec![0]);
        assert_eq!(support(&PopulationState::<f64>::uniform(4)), vec![0, 1, 2, 3]);
    }

    #[test]
    fn works_in_single_precision() {
        let net =
            CommunityNetwork::<f32>::new(["a", "b"], vec![0.7, 0.3], array![[1.0, 0.0], [0.2, 1.0]])
                .unwrap();
        let x = SystemState::from_rows(&[vec![0.7, 0.14], vec![0.0, 0.16]], &net).unwrap();
        assert!((population_state(&x)[1] - 0.16).abs() < 1e-6);
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_filter_map("nonzero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-3).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn balanced_round_trip(y in simplex(4), eta in simplex(3)) {
            prop_assume!(eta.iter().all(|e| *e > 1e-3));
            let net = CommunityNetwork::new(["a", "b", "c"], eta.clone(),
                Array2::from_elem((3, 3), 1.0)).unwrap();
            let y = PopulationState::new(y).unwrap();
            let x = balanced_state(&y, &net);
            let back = population_state(&x);
            for i in 0..4 {
                prop_assert!((back[i] - y[i]).abs() <= 1e-14);
            }
            for (h, e) in net.eta().iter().enumerate() {
                let col: f64 = x.matrix().column(h).sum();
                prop_assert!((col - e).abs() <= 1e-14);
            }
            prop_assert_eq!(support(&back), support(&y));
            let s: f64 = back.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-10);
            // balanced ∘ population is the identity on balanced states
            let again = balanced_state(&back, &net);
            for (a, b) in again.matrix().iter().zip(x.matrix().iter()) {
                prop_assert!((a - b).abs() <= 1e-14);
            }
        }
    }
}
