use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Lower Cholesky factor of a symmetric positive-definite `n × n` matrix
/// stored row-major.
pub(crate) fn cholesky<T: Scalar>(a: &[T], n: usize) -> Result<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                // pivots lost to rounding count as singular
                let floor = a[i * n + i].abs() * T::epsilon() * T::count(16 * n);
                if !(sum > floor) || !sum.is_finite() {
                    bail!(
                        Numeric,
                        "covariance is singular or indefinite (pivot {i} = {sum})"
                    );
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the lower factor.
pub(crate) fn cholesky_solve<T: Scalar>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let x = cholesky_solve(&l, 3, &[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((ax - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_singular() {
        assert!(cholesky(&[1.0f64, 1.0, 1.0, 1.0], 2).is_err());
        assert!(cholesky(&[0.0f32], 1).is_err());
    }
}
