use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Communities with their relative sizes and the interaction weights between
/// them. `weights[[h, k]]` scales the rate at which members of `h` meet
/// members of `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityNetwork<T> {
    labels: Vec<String>,
    eta: Vec<T>,
    weights: Array2<T>,
}

impl<T: Scalar> CommunityNetwork<T> {
    pub fn new<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        eta: Vec<T>,
        weights: Array2<T>,
    ) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("network", "at least one community required"));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::invalid("network", format!("duplicate community `{l}`")));
            }
        }
        if eta.len() != n {
            return Err(Error::Dimension {
                what: "community sizes",
                expected: n,
                got: eta.len(),
            });
        }
        if weights.dim() != (n, n) {
            return Err(Error::Dimension {
                what: "weight matrix",
                expected: n,
                got: if weights.nrows() != n {
                    weights.nrows()
                } else {
                    weights.ncols()
                },
            });
        }
        if let Some(e) = eta.iter().find(|e| !e.is_finite() || **e <= T::zero()) {
            return Err(Error::invalid(
                "network",
                format!("community size {e} must be positive"),
            ));
        }
        let sum: T = eta.iter().copied().sum();
        if (sum - T::one()).abs() > T::tol(1e-12) {
            return Err(Error::invalid(
                "network",
                format!("community sizes sum to {sum}, expected 1"),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < T::zero()) {
            return Err(Error::invalid(
                "network",
                format!("weight {w} must be nonnegative"),
            ));
        }
        if let Some(h) = (0..n).find(|&h| weights[[h, h]] <= T::zero()) {
            return Err(Error::invalid(
                "network",
                format!("diagonal weight of community {h} must be positive"),
            ));
        }
        let eta = eta.into_iter().map(|e| e / sum).collect();
        Ok(Self {
            labels,
            eta,
            weights,
        })
    }

    /// Single fully mixed community with unit weight.
    pub fn single() -> Self {
        Self::new(["all"], vec![T::one()], Array2::from_elem((1, 1), T::one()))
            .expect("trivial network is valid")
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

    pub fn eta(&self) -> &[T] {
        &self.eta
    }

    pub fn weights(&self) -> ArrayView2<'_, T> {
        self.weights.view()
    }

    /// Strong connectivity of the positivity pattern of the weight matrix.
    pub fn is_connected(&self) -> bool {
        is_connected(self)
    }

    pub fn is_undirected(&self) -> bool {
        is_undirected(self)
    }
}

/// True when every community reaches every other along edges `h → k` with
/// `W_hk > 0`, i.e. the weight matrix is irreducible.
pub fn is_connected<T: Scalar>(net: &CommunityNetwork<T>) -> bool {
    let n = net.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(h) = stack.pop() {
            for (k, s) in seen.iter_mut().enumerate() {
                let w = if forward {
                    net.weights[[h, k]]
                } else {
                    net.weights[[k, h]]
                };
                if w > T::zero() && !*s {
                    *s = true;
                    stack.push(k);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Exact symmetry of the weight matrix.
pub fn is_undirected<T: Scalar>(net: &CommunityNetwork<T>) -> bool {
    let n = net.len();
    (0..n).all(|h| (0..h).all(|k| net.weights[[h, k]] == net.weights[[k, h]]))
}
