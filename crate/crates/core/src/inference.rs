//! Degrees-of-freedom estimation: the unbiased trace estimator over the
//! active difference coordinates, the knot-count shortcut for pure fusion
//! fits, and a Monte-Carlo covariance estimator for validating both.

use crate::dataset::{Dataset, PenaltySpec};
use crate::diffs::u_gram_entry;
use crate::error::FlamError;
use crate::fit::FlamFit;
use crate::ZERO_TOL;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Active difference coordinates of a fit, the corresponding columns of
/// the reparameterization matrix V, and the block-diagonal curvature term
/// of the group penalty restricted to those coordinates.
#[derive(Debug, Clone)]
pub struct ActiveSetDecomposition {
    /// Active indices {i : |beta_ji| > [`ZERO_TOL`]} per feature.
    pub per_feature: Vec<Vec<usize>>,
    pub total: usize,
    /// n x |A| matrix of active V columns (feature-major order).
    pub v_active: DMatrix<f64>,
    /// |A| x |A| block diagonal: per feature,
    /// `G/s - (G b)(G b)^T / s^3` with `G = U_A^T U_A`, `b` the active
    /// betas, and `s = ||U_A b||`.
    pub s2: DMatrix<f64>,
}

/// Build the decomposition of a fitted model. Dense matrices are formed
/// over active columns only.
pub fn decompose(data: &Dataset, fit: &FlamFit) -> Result<ActiveSetDecomposition, FlamError> {
    let n = data.n();
    let p = data.p();
    if fit.betas.len() != p || fit.betas.iter().any(|b| b.len() != n - 1) {
        return Err(FlamError::invalid("fit shape does not match data"));
    }
    let per_feature: Vec<Vec<usize>> = fit
        .betas
        .iter()
        .map(|b| {
            (0..n - 1)
                .filter(|&i| b[i].abs() > ZERO_TOL)
                .collect::<Vec<usize>>()
        })
        .collect();
    let total: usize = per_feature.iter().map(|a| a.len()).sum();

    let mut v_active = DMatrix::<f64>::zeros(n, total);
    let mut s2 = DMatrix::<f64>::zeros(total, total);
    let mut offset = 0usize;
    for j in 0..p {
        let idx = &per_feature[j];
        if idx.is_empty() {
            continue;
        }
        let ord = data.ordering(j);
        for (c, &k) in idx.iter().enumerate() {
            // column of V for coordinate (j, k): P_j^T times column k of U
            for (row, &src) in ord.iter().enumerate() {
                let ind = if row <= k { 1.0 } else { 0.0 };
                v_active[(src, offset + c)] = ind - (k + 1) as f64 / n as f64;
            }
        }
        let m = idx.len();
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                gram[(a, b)] = u_gram_entry(n, idx[a], idx[b]);
            }
        }
        let bvec = DVector::from_iterator(m, idx.iter().map(|&k| fit.betas[j][k]));
        let gb = &gram * &bvec;
        let s = bvec.dot(&gb).max(0.0).sqrt();
        if s <= 0.0 {
            return Err(FlamError::numeric(
                "active feature has zero fitted norm in the S2 block",
            ));
        }
        for a in 0..m {
            for b in 0..m {
                s2[(offset + a, offset + b)] = gram[(a, b)] / s - gb[a] * gb[b] / (s * s * s);
            }
        }
        offset += m;
    }
    Ok(ActiveSetDecomposition { per_feature, total, v_active, s2 })
}

/// Result of the trace estimator; `ridge_fallback` marks a singular
/// epsilon = 0 system that was re-solved with epsilon = 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct DfEstimate {
    pub df: f64,
    pub ridge_fallback: bool,
}

/// The unbiased degrees-of-freedom estimator:
/// `Tr(V_A [V_A^T V_A + (1-alpha) lambda S2 + eps I]^{-1} V_A^T) + 1`,
/// computed by a Cholesky solve of the regularized Gram matrix. An empty
/// active set returns exactly 1 (the intercept).
pub fn df_flam(
    data: &Dataset,
    fit: &FlamFit,
    penalty: &PenaltySpec,
) -> Result<DfEstimate, FlamError> {
    let dec = decompose(data, fit)?;
    df_from_decomposition(&dec, penalty)
}

/// Same as [`df_flam`] but from a precomputed decomposition.
pub fn df_from_decomposition(
    dec: &ActiveSetDecomposition,
    penalty: &PenaltySpec,
) -> Result<DfEstimate, FlamError> {
    if dec.total == 0 {
        return Ok(DfEstimate { df: 1.0, ridge_fallback: false });
    }
    let gram = dec.v_active.transpose() * &dec.v_active;
    let gw = penalty.group_weight();
    let build = |eps: f64| -> DMatrix<f64> {
        let mut m = gram.clone();
        if gw > 0.0 {
            m += dec.s2.scale(gw);
        }
        for d in 0..dec.total {
            m[(d, d)] += eps;
        }
        m
    };
    let mut ridge_fallback = false;
    let chol = match build(penalty.epsilon).cholesky() {
        Some(c) => c,
        None => {
            if penalty.epsilon == 0.0 {
                ridge_fallback = true;
                build(1e-8)
                    .cholesky()
                    .ok_or_else(|| FlamError::numeric("regularized Gram matrix is singular"))?
            } else {
                return Err(FlamError::numeric("regularized Gram matrix is singular"));
            }
        }
    };
    let solved = chol.solve(&gram);
    let df = solved.trace() + 1.0;
    Ok(DfEstimate { df, ridge_fallback })
}

/// Total number of knots: nonzero betas across all features.
pub fn knot_count(fit: &FlamFit) -> usize {
    fit.knots_per_feature().iter().sum()
}

/// Monte-Carlo degrees of freedom and its standard error.
#[derive(Debug, Clone, Copy)]
pub struct DfMonteCarlo {
    pub df: f64,
    pub se: f64,
}

/// Estimate `(1/sigma^2) sum_i Cov(y_i, yhat_i)` by simulation: draw
/// `y = mu + sigma * eps` per replicate, refit, and average
/// `(1/sigma^2) sum_i (yhat_i - mu_i)(y_i - mu_i)`. Replicates use
/// independent seeded streams and run in parallel; results are identical
/// for any thread count.
pub fn df_monte_carlo<F>(
    mu: &[f64],
    sigma: f64,
    fitter: F,
    n_reps: usize,
    seed: u64,
) -> Result<DfMonteCarlo, FlamError>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if n_reps < 2 {
        return Err(FlamError::invalid("need at least 2 replicates"));
    }
    if !(sigma > 0.0) {
        return Err(FlamError::invalid("sigma must be positive"));
    }
    let n = mu.len();
    let normal = Normal::new(0.0, 1.0).map_err(|e| FlamError::invalid(e.to_string()))?;
    let terms: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            let y: Vec<f64> =
                (0..n).map(|i| mu[i] + sigma * normal.sample(&mut rng)).collect();
            let y_hat = fitter(&y);
            let mut acc = 0.0;
            for i in 0..n {
                acc += (y_hat[i] - mu[i]) * (y[i] - mu[i]);
            }
            acc / (sigma * sigma)
        })
        .collect();
    let mean = terms.iter().sum::<f64>() / n_reps as f64;
    let var =
        terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n_reps - 1) as f64;
    Ok(DfMonteCarlo { df: mean, se: (var / n_reps as f64).sqrt() })
}
