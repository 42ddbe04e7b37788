//! Dense LU factorization with partial pivoting.

use crate::scalar::Scalar;

/// Returned when a pivot falls below the relative singularity threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    pub column: usize,
}

/// Row-major LU factors of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    /// Factors the `n × n` row-major matrix `a` in place.
    pub fn factor(mut a: Vec<T>, n: usize) -> Result<Self, Singular> {
        assert_eq!(a.len(), n * n, "matrix is not n x n");
        let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tol = T::epsilon() * T::of_usize(n.max(1)) * T::of(16.0) * scale;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tol) {
                return Err(Singular { column: k });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..(k + 1) * n];
            for row in tail.chunks_exact_mut(n) {
                let f = row[k] / pivot;
                if f == T::zero() {
                    continue;
                }
                row[k] = f;
                for j in k + 1..n {
                    row[j] -= f * pivot_row[j];
                }
            }
        }
        Ok(Lu { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: T = row.iter().zip(&x[..i]).map(|(l, v)| *l * *v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: T = row.iter().zip(&x[i + 1..]).map(|(u, v)| *u * *v).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }
}

/// Factors and solves in one step.
pub fn solve<T: Scalar>(a: Vec<T>, n: usize, b: &[T]) -> Result<Vec<T>, Singular> {
    Ok(Lu::factor(a, n)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn solves_small_system_requiring_pivot() {
        // [[0, 2], [3, 1]] x = [4, 5]  ->  x = [1, 2]
        let x = solve(vec![0.0f64, 2.0, 3.0, 1.0], 2, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn detects_singular_matrix() {
        assert!(Lu::factor(vec![1.0, 2.0, 2.0, 4.0], 2).is_err());
        assert!(Lu::factor(vec![0.0f64; 9], 3).is_err());
    }

    proptest! {
        #[test]
        fn residual_is_small(vals in proptest::collection::vec(-10.0f64..10.0, 16), b in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let mut a = vals.clone();
            for i in 0..4 { a[i * 4 + i] += 45.0; }
            let x = solve(a.clone(), 4, &b).unwrap();
            for i in 0..4 {
                let r: f64 = (0..4).map(|j| a[i * 4 + j] * x[j]).sum::<f64>() - b[i];
                prop_assert!(r.abs() < 1e-10);
            }
        }
    }
}
