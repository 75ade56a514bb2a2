//! Dense reduced row echelon form for the small linear systems that arise in
//! support enumeration.

use ndarray::{Array1, Array2};

use crate::scalar::Scalar;

/// General solution of `A z = b`: `z = particular + basis · t`.
#[derive(Debug, Clone)]
pub(crate) struct AffineSolution<T> {
    pub particular: Array1<T>,
    /// Columns span the kernel of `A`.
    pub basis: Array2<T>,
}

/// Solves `A z = b` by Gauss–Jordan elimination with partial pivoting.
/// Returns `None` when the system is inconsistent.
pub(crate) fn solve_affine<T: Scalar>(
    a: &Array2<T>,
    b: &Array1<T>,
    tol: T,
) -> Option<AffineSolution<T>> {
    let (m, n) = a.dim();
    let mut aug = Array2::zeros((m, n + 1));
    for r in 0..m {
        for c in 0..n {
            aug[[r, c]] = a[[r, c]];
        }
        aug[[r, n]] = b[r];
    }
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let (best, val) = (row..m)
            .map(|r| (r, aug[[r, col]].abs()))
            .fold((row, T::zero()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if val <= tol {
            continue;
        }
        if best != row {
            for c in 0..=n {
                aug.swap([row, c], [best, c]);
            }
        }
        let p = aug[[row, col]];
        for c in 0..=n {
            aug[[row, c]] /= p;
        }
        for r in 0..m {
            if r != row {
                let f = aug[[r, col]];
                if f != T::zero() {
                    for c in 0..=n {
                        let v = aug[[row, c]];
                        aug[[r, c]] -= f * v;
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    // Rows below the pivots must be consistent.
    for r in row..m {
        if aug[[r, n]].abs() > tol {
            return None;
        }
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut particular = Array1::zeros(n);
    for (r, &c) in pivots.iter().enumerate() {
        particular[c] = aug[[r, n]];
    }
    let mut basis = Array2::zeros((n, free.len()));
    for (k, &f) in free.iter().enumerate() {
        basis[[f, k]] = T::one();
        for (r, &c) in pivots.iter().enumerate() {
            basis[[c, k]] = -aug[[r, f]];
        }
    }
    Some(AffineSolution { particular, basis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn unique_solution() {
        let a = array![[2.0f64, -4.0], [1.0, 1.0]];
        let b = array![0.0, 1.0];
        let s = solve_affine(&a, &b, 1e-12).unwrap();
        assert_eq!(s.basis.ncols(), 0);
        assert!((s.particular[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.particular[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_system() {
        let a = array![[0.0, 0.0], [1.0, 1.0]];
        let b = array![1.0, 1.0];
        assert!(solve_affine(&a, &b, 1e-12).is_none());
    }

    #[test]
    fn kernel_of_underdetermined_system() {
        let a = array![[0.0f64, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let b = array![0.0, 1.0];
        let s = solve_affine(&a, &b, 1e-12).unwrap();
        assert_eq!(s.basis.ncols(), 2);
        let z = &s.particular + &s.basis.dot(&array![0.25, 0.5]);
        assert!((z.sum() - 1.0).abs() < 1e-15);
    }
}
