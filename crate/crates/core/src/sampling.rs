//! Seeded sampling on the simplex.
//!
//! Uses ChaCha8 so that a given seed yields the same stream on every
//! platform.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

pub type SimplexRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SimplexRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw from the flat Dirichlet(1, …, 1) distribution: normalized
/// standard exponentials.
pub fn uniform_simplex<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    let e: Vec<f64> = (0..n)
        .map(|_| {
            // 1 - U lies in (0, 1], so the logarithm is finite.
            let u: f64 = rng.gen();
            -(1.0 - u).ln()
        })
        .collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| T::lit(v / s)).collect()
}

/// Uniform simplex draw pulled towards the barycenter so that every entry is
/// at least `floor`.
pub fn interior_simplex<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize, floor: T) -> Vec<T> {
    let raw: Vec<T> = uniform_simplex(rng, n);
    let keep = T::one() - T::of(n) * floor;
    raw.into_iter().map(|v| v * keep + floor).collect()
}

/// Random matrix with row sums `y` and column sums `eta`, positive wherever
/// `y_i > 0`. Built by alternately scaling rows and columns of a random
/// positive matrix, ending on an exact column scaling.
pub fn state_with_population<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    y: &[T],
    eta: &[T],
) -> Array2<T> {
    let (n, m) = (y.len(), eta.len());
    let mut x = Array2::from_shape_fn((n, m), |(i, _)| {
        if y[i] > T::zero() {
            T::lit(0.05 + rng.gen::<f64>())
        } else {
            T::zero()
        }
    });
    for _ in 0..2000 {
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let s: T = row.sum();
            if s > T::zero() {
                row.mapv_inplace(|v| v * y[i] / s);
            }
        }
        let mut worst = T::zero();
        for (h, mut col) in x.columns_mut().into_iter().enumerate() {
            let s: T = col.sum();
            worst = worst.max((s - eta[h]).abs());
            col.mapv_inplace(|v| v * eta[h] / s);
        }
        if worst <= T::epsilon() {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_on_the_simplex() {
        let mut r = rng(7);
        for _ in 0..100 {
            let y: Vec<f64> = uniform_simplex(&mut r, 4);
            assert!(y.iter().all(|v| *v >= 0.0));
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn interior_samples_respect_floor() {
        let mut r = rng(1);
        for _ in 0..100 {
            let y: Vec<f64> = interior_simplex(&mut r, 3, 0.01);
            assert!(y.iter().all(|v| *v >= 0.01 - 1e-15));
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn margins_are_matched() {
        let mut r = rng(2);
        let y = [0.5, 0.0, 0.5];
        let eta = [0.7, 0.3];
        let x: Array2<f64> = state_with_population(&mut r, &y, &eta);
        for (i, row) in x.rows().into_iter().enumerate() {
            assert!((row.sum() - y[i]).abs() < 1e-14);
        }
        for (h, col) in x.columns().into_iter().enumerate() {
            assert!((col.sum() - eta[h]).abs() < 1e-15);
        }
        assert!(x.row(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn seeded_streams_repeat() {
        let a: Vec<f64> = uniform_simplex(&mut rng(3), 5);
        let b: Vec<f64> = uniform_simplex(&mut rng(3), 5);
        assert_eq!(a, b);
    }
}
