//! The difference matrix D, its centered right inverse U, and conversions
//! between the theta (fitted values) and beta (sorted adjacent differences)
//! parameterizations.
//!
//! D is the (n-1) x n first-difference matrix with row pattern (1, -1), so
//! `(D v)[k] = v[k] - v[k+1]`. U is the n x (n-1) matrix obtained by
//! centering the columns of the upper-triangular matrix of ones and
//! dropping the last column; it satisfies `U D + (1/n) 1 1^T = I` and
//! `D U = I`. Products with D, D^T, U, and U^T are all computed in O(n) by
//! cumulative sums; U is materialized densely only for the
//! degrees-of-freedom estimator and in tests.

use crate::error::FlamError;

/// Adjacent differences with the (1, -1) sign convention:
/// `out[k] = v[k] - v[k+1]`.
pub fn diff(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[0] - w[1]).collect()
}

/// D^T applied to a vector of length n-1, returning length n.
pub fn diff_transpose(s: &[f64]) -> Vec<f64> {
    let n = s.len() + 1;
    let mut out = vec![0.0; n];
    out[0] = s[0];
    for i in 1..n - 1 {
        out[i] = s[i] - s[i - 1];
    }
    out[n - 1] = -s[n - 2];
    out
}

/// U applied to beta (length n-1), returning length n. Computed as the
/// suffix sums of beta minus their mean, which centers the result exactly.
pub fn u_apply(beta: &[f64]) -> Vec<f64> {
    let n = beta.len() + 1;
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n - 1).rev() {
        acc += beta[i];
        out[i] = acc;
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    for v in &mut out {
        *v -= mean;
    }
    out
}

/// U^T applied to a vector of length n, returning length n-1:
/// `out[j] = (a_1 + ... + a_{j+1}) - (j+1)/n * sum(a)`. For centered input
/// these are exactly the leading partial sums.
pub fn u_transpose_apply(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let total: f64 = a.iter().sum();
    let mut out = Vec::with_capacity(n - 1);
    let mut acc = 0.0;
    for (i, &v) in a.iter().take(n - 1).enumerate() {
        acc += v;
        out.push(acc - (i + 1) as f64 / n as f64 * total);
    }
    out
}

/// Dense U, for the df estimator and identity checks:
/// `U[i][j] = 1{i <= j} - (j+1)/n` (0-based).
pub fn build_u(n: usize) -> Result<Vec<Vec<f64>>, FlamError> {
    if n < 2 {
        return Err(FlamError::invalid(format!("build_u needs n >= 2, got {n}")));
    }
    let mut u = vec![vec![0.0; n - 1]; n];
    for (i, row) in u.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let ind = if i <= j { 1.0 } else { 0.0 };
            *v = ind - (j + 1) as f64 / n as f64;
        }
    }
    Ok(u)
}

/// Entry (a, b) of U^T U in closed form: `min(a,b)+1 - (a+1)(b+1)/n`
/// (0-based column indices).
pub fn u_gram_entry(n: usize, a: usize, b: usize) -> f64 {
    (a.min(b) + 1) as f64 - ((a + 1) * (b + 1)) as f64 / n as f64
}

/// Map beta (sorted adjacent differences) back to a centered theta in
/// observation order: theta = P^T U beta.
pub fn theta_from_beta(beta: &[f64], ordering: &[usize]) -> Result<Vec<f64>, FlamError> {
    if beta.len() + 1 != ordering.len() {
        return Err(FlamError::invalid(format!(
            "beta has length {}, expected {}",
            beta.len(),
            ordering.len().saturating_sub(1)
        )));
    }
    let sorted = u_apply(beta);
    let mut theta = vec![0.0; ordering.len()];
    for (k, &src) in ordering.iter().enumerate() {
        theta[src] = sorted[k];
    }
    Ok(theta)
}

/// Map a centered theta (observation order) to beta = D P theta. Inputs
/// whose mean is not numerically zero are rejected.
pub fn beta_from_theta(theta: &[f64], ordering: &[usize]) -> Result<Vec<f64>, FlamError> {
    if theta.len() != ordering.len() {
        return Err(FlamError::invalid(format!(
            "theta has length {}, expected {}",
            theta.len(),
            ordering.len()
        )));
    }
    let n = theta.len() as f64;
    let maxabs = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean = theta.iter().sum::<f64>() / n;
    if mean.abs() > 1e-8 * n * (1.0 + maxabs) {
        return Err(FlamError::invalid(format!(
            "theta must be centered, mean is {mean:e}"
        )));
    }
    let sorted: Vec<f64> = ordering.iter().map(|&i| theta[i]).collect();
    Ok(diff(&sorted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn build_u_small_cases() {
        let u2 = build_u(2).unwrap();
        assert!(close(u2[0][0], 0.5, 1e-15) && close(u2[1][0], -0.5, 1e-15));
        let u3 = build_u(3).unwrap();
        let expect = [[2.0 / 3.0, 1.0 / 3.0], [-1.0 / 3.0, 1.0 / 3.0], [-1.0 / 3.0, -2.0 / 3.0]];
        for i in 0..3 {
            for j in 0..2 {
                assert!(close(u3[i][j], expect[i][j], 1e-15));
            }
        }
        assert!(build_u(1).is_err());
    }

    #[test]
    fn u_identity_and_column_sums() {
        // U D + (1/n) 1 1^T = I, columns of U sum to zero, for n in 2..=64.
        for n in 2..=64usize {
            let u = build_u(n).unwrap();
            for j in 0..n - 1 {
                let colsum: f64 = (0..n).map(|i| u[i][j]).sum();
                assert!(colsum.abs() < 1e-12, "n={n} col {j} sum {colsum}");
            }
            for i in 0..n {
                for m in 0..n {
                    // (U D)[i][m] = U[i][m] - U[i][m-1], out-of-range terms zero.
                    let a = if m < n - 1 { u[i][m] } else { 0.0 };
                    let b = if m > 0 { u[i][m - 1] } else { 0.0 };
                    let val = a - b + 1.0 / n as f64;
                    let expect = if i == m { 1.0 } else { 0.0 };
                    assert!(close(val, expect, 1e-12), "n={n} ({i},{m}): {val}");
                }
            }
        }
    }

    #[test]
    fn fast_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 3, 5, 17] {
            let u = build_u(n).unwrap();
            let beta: Vec<f64> = (0..n - 1).map(|_| rng.random::<f64>() - 0.5).collect();
            let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let ub = u_apply(&beta);
            for i in 0..n {
                let dense: f64 = (0..n - 1).map(|j| u[i][j] * beta[j]).sum();
                assert!(close(ub[i], dense, 1e-12));
            }
            let uta = u_transpose_apply(&a);
            for j in 0..n - 1 {
                let dense: f64 = (0..n).map(|i| u[i][j] * a[i]).sum();
                assert!(close(uta[j], dense, 1e-12));
            }
        }
    }

    #[test]
    fn theta_from_beta_examples() {
        let zero = theta_from_beta(&[0.0, 0.0], &[0, 1, 2]).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-15));
        let theta = theta_from_beta(&[1.0, 0.0], &[0, 1, 2]).unwrap();
        assert!(close(theta[0], 2.0 / 3.0, 1e-15));
        assert!(close(theta[1], -1.0 / 3.0, 1e-15));
        assert!(close(theta[2], -1.0 / 3.0, 1e-15));
        assert!(theta_from_beta(&[1.0], &[0, 1, 2]).is_err());
    }

    #[test]
    fn beta_from_theta_examples() {
        let b = beta_from_theta(&[2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0], &[0, 1, 2]).unwrap();
        assert!(close(b[0], 1.0, 1e-15) && close(b[1], 0.0, 1e-15));
        // constant centered theta -> no jumps
        let b = beta_from_theta(&[0.0, 0.0, 0.0], &[2, 0, 1]).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-15));
        // non-centered input rejected
        assert!(beta_from_theta(&[1.0, 1.0, 1.0], &[0, 1, 2]).is_err());
    }

    #[test]
    fn round_trip_beta_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(2..40usize);
            let beta: Vec<f64> = (0..n - 1).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let mut ord: Vec<usize> = (0..n).collect();
            ord.shuffle(&mut rng);
            let theta = theta_from_beta(&beta, &ord).unwrap();
            assert!(theta.iter().sum::<f64>().abs() < 1e-10 * n as f64);
            let back = beta_from_theta(&theta, &ord).unwrap();
            for (a, b) in beta.iter().zip(back.iter()) {
                assert!(close(*a, *b, 1e-12));
            }
        }
    }

    #[test]
    fn round_trip_theta_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let n = rng.random_range(2..40usize);
            let mut theta: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let mean = theta.iter().sum::<f64>() / n as f64;
            theta.iter_mut().for_each(|v| *v -= mean);
            let mut ord: Vec<usize> = (0..n).collect();
            ord.shuffle(&mut rng);
            let beta = beta_from_theta(&theta, &ord).unwrap();
            let back = theta_from_beta(&beta, &ord).unwrap();
            for (a, b) in theta.iter().zip(back.iter()) {
                assert!(close(*a, *b, 1e-10));
            }
        }
    }

    #[test]
    fn diff_transpose_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 3, 9] {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let s: Vec<f64> = (0..n - 1).map(|_| rng.random::<f64>()).collect();
            let dv = diff(&v);
            let dts = diff_transpose(&s);
            let lhs: f64 = dv.iter().zip(&s).map(|(a, b)| a * b).sum();
            let rhs: f64 = v.iter().zip(&dts).map(|(a, b)| a * b).sum();
            assert!(close(lhs, rhs, 1e-12));
        }
    }

    #[test]
    fn u_gram_matches_dense() {
        for n in [2usize, 3, 7, 12] {
            let u = build_u(n).unwrap();
            for a in 0..n - 1 {
                for b in 0..n - 1 {
                    let dense: f64 = (0..n).map(|i| u[i][a] * u[i][b]).sum();
                    assert!(close(u_gram_entry(n, a, b), dense, 1e-12));
                }
            }
        }
    }
}
