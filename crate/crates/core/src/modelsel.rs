//! Sparsity thresholds, cross-validation, step-function extraction, and
//! error metrics.

use crate::dataset::Dataset;
use crate::error::FlamError;
use crate::fit::{flam_path_at, FitConfig, FlamFit};
use crate::glm::{logistic_path_at, LossKind};
use crate::stepfn::StepFunction;
use crate::ZERO_TOL;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Smallest lambda at which the solution is guaranteed completely sparse:
/// `min(||V^T ytilde||_inf / alpha, ||ytilde||_2 / (1 - alpha))` with the
/// conventions x/0 = +inf. The infinity norm is computed in O(np) as the
/// per-feature maximum absolute partial sum of the centered response in
/// sorted order. A constant response returns 0. For alpha 0 and 1 the
/// threshold is sharp (necessary and sufficient); in between it is a
/// sufficient upper bound.
pub fn lambda_sparse_threshold(data: &Dataset, alpha: f64) -> Result<f64, FlamError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FlamError::invalid(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let n = data.n();
    let ybar = data.mean_y();
    let ytilde: Vec<f64> = data.y().iter().map(|v| v - ybar).collect();
    let norm2 = ytilde.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm2 == 0.0 {
        return Ok(0.0);
    }
    let mut g_max = 0.0f64;
    for j in 0..data.p() {
        let ord = data.ordering(j);
        let mut acc = 0.0;
        for &i in ord.iter().take(n - 1) {
            acc += ytilde[i];
            g_max = g_max.max(acc.abs());
        }
    }
    let t_fuse = if alpha > 0.0 { g_max / alpha } else { f64::INFINITY };
    let t_group = if alpha < 1.0 { norm2 / (1.0 - alpha) } else { f64::INFINITY };
    Ok(t_fuse.min(t_group))
}

/// Per-lambda validation losses and the selected lambda.
#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub se_loss: Vec<f64>,
    pub chosen_lambda: f64,
    pub chosen_index: usize,
    /// Fold id of each observation, determined by the seed.
    pub fold_assignments: Vec<usize>,
}

/// K-fold cross-validation over a fixed descending lambda grid. Folds are
/// a seeded random partition; each fold fits the warm-started path on the
/// remaining data and scores the held-out observations with mean squared
/// error (squared loss) or mean binomial deviance (logistic). The chosen
/// lambda minimizes the mean validation loss, ties going to the larger
/// (sparser) lambda. Folds run in parallel; results do not depend on the
/// thread count.
pub fn cross_validate(
    data: &Dataset,
    alpha: f64,
    k_folds: usize,
    lambda_grid: &[f64],
    loss: LossKind,
    seed: u64,
    config: &FitConfig,
) -> Result<CvResult, FlamError> {
    let n = data.n();
    if k_folds < 2 {
        return Err(FlamError::invalid("need at least 2 folds"));
    }
    if k_folds > n {
        return Err(FlamError::invalid(format!(
            "cannot split {n} observations into {k_folds} folds"
        )));
    }
    // every training set must itself be a valid dataset
    let max_fold = n.div_ceil(k_folds);
    if n - max_fold < 2 {
        return Err(FlamError::invalid(
            "a fold would leave fewer than 2 training observations",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut rng);
    let mut fold_assignments = vec![0usize; n];
    for (pos, &i) in shuffled.iter().enumerate() {
        fold_assignments[i] = pos % k_folds;
    }

    let fold_losses: Vec<Result<Vec<f64>, FlamError>> = (0..k_folds)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> =
                (0..n).filter(|&i| fold_assignments[i] != fold).collect();
            let val: Vec<usize> =
                (0..n).filter(|&i| fold_assignments[i] == fold).collect();
            let train_data = data.subset(&train)?;
            let fits: Vec<FlamFit> = match loss {
                LossKind::Squared => {
                    flam_path_at(&train_data, alpha, lambda_grid, config)?.fits
                }
                LossKind::Logistic => {
                    logistic_path_at(&train_data, alpha, lambda_grid, config)?.fits
                }
            };
            let mut losses = Vec::with_capacity(fits.len());
            for fit in &fits {
                let steps = step_functions(fit, &train_data)?;
                let mut total = 0.0;
                for &i in &val {
                    let mut eta = fit.theta0;
                    for (j, sf) in steps.iter().enumerate() {
                        eta += sf.evaluate(data.column(j)[i]);
                    }
                    let yi = data.y()[i];
                    total += match loss {
                        LossKind::Squared => (yi - eta) * (yi - eta),
                        LossKind::Logistic => {
                            let p = crate::glm::expit(eta).clamp(1e-12, 1.0 - 1e-12);
                            -2.0 * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln())
                        }
                    };
                }
                losses.push(total / val.len() as f64);
            }
            Ok(losses)
        })
        .collect();

    let mut per_fold: Vec<Vec<f64>> = Vec::with_capacity(k_folds);
    for r in fold_losses {
        per_fold.push(r?);
    }
    let m = lambda_grid.len();
    let mut mean_loss = vec![0.0; m];
    let mut se_loss = vec![0.0; m];
    for l in 0..m {
        let vals: Vec<f64> = per_fold.iter().map(|f| f[l]).collect();
        let mean = vals.iter().sum::<f64>() / k_folds as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (k_folds - 1) as f64;
        mean_loss[l] = mean;
        se_loss[l] = (var / k_folds as f64).sqrt();
    }
    // grid is descending, so scanning forward with a strict comparison
    // breaks ties toward the larger lambda
    let mut chosen_index = 0;
    for l in 1..m {
        if mean_loss[l] < mean_loss[chosen_index] {
            chosen_index = l;
        }
    }
    Ok(CvResult {
        lambdas: lambda_grid.to_vec(),
        chosen_lambda: lambda_grid[chosen_index],
        chosen_index,
        mean_loss,
        se_loss,
        fold_assignments,
    })
}

/// Extract the fitted step function of every feature: knots sit at
/// midpoints between consecutive distinct covariate values where the
/// fitted level changes; beyond the training range the fit is constant.
/// Observations sharing a covariate value share a level (their mean,
/// though fused fits make them equal whenever alpha > 0).
pub fn step_functions(fit: &FlamFit, data: &Dataset) -> Result<Vec<StepFunction>, FlamError> {
    let n = data.n();
    let p = data.p();
    if fit.thetas.len() != p || fit.thetas.iter().any(|t| t.len() != n) {
        return Err(FlamError::invalid("fit shape does not match data"));
    }
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let ord = data.ordering(j);
        let xs: Vec<f64> = ord.iter().map(|&i| data.column(j)[i]).collect();
        let ts: Vec<f64> = ord.iter().map(|&i| fit.thetas[j][i]).collect();
        // collapse ties in x to a single (x, mean level) point
        let mut px: Vec<f64> = Vec::with_capacity(n);
        let mut pt: Vec<f64> = Vec::with_capacity(n);
        let mut k = 0;
        while k < n {
            let mut end = k + 1;
            while end < n && xs[end] == xs[k] {
                end += 1;
            }
            let level = ts[k..end].iter().sum::<f64>() / (end - k) as f64;
            px.push(xs[k]);
            pt.push(level);
            k = end;
        }
        let mut knots = Vec::new();
        let mut levels = vec![pt[0]];
        for g in 1..px.len() {
            if (pt[g] - pt[g - 1]).abs() > ZERO_TOL {
                knots.push(0.5 * (px[g - 1] + px[g]));
                levels.push(pt[g]);
            }
        }
        out.push(StepFunction::new(knots, levels, xs[0], xs[n - 1])?);
    }
    Ok(out)
}

/// Mean squared error.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64, FlamError> {
    if y.len() != y_hat.len() {
        return Err(FlamError::invalid(format!(
            "length mismatch: {} vs {}",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(FlamError::invalid("mse of empty vectors"));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PenaltySpec;
    use crate::fit::{flam_bcd, lambda_grid};
    use rand_distr::{Distribution, Normal, Uniform};

    #[test]
    fn threshold_group_only() {
        let data = Dataset::new(vec![1.0, 2.0, 3.0], vec![vec![0.0, 1.0, 2.0]]).unwrap();
        let t = lambda_sparse_threshold(&data, 0.0).unwrap();
        assert!((t - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn threshold_fusion_only_partial_sums() {
        let data = Dataset::new(vec![0.0, 0.0, 10.0], vec![vec![0.0, 1.0, 2.0]]).unwrap();
        let t = lambda_sparse_threshold(&data, 1.0).unwrap();
        assert!((t - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_interior_alpha_is_min_formula() {
        let data = Dataset::new(vec![0.0, 0.0, 10.0], vec![vec![0.0, 1.0, 2.0]]).unwrap();
        let g: f64 = 20.0 / 3.0;
        let norm = (200.0f64 / 3.0).sqrt();
        let t = lambda_sparse_threshold(&data, 0.5).unwrap();
        assert!((t - (2.0 * g).min(2.0 * norm)).abs() < 1e-12);
    }

    #[test]
    fn threshold_constant_response_is_zero() {
        let data = Dataset::new(vec![4.0, 4.0, 4.0], vec![vec![0.0, 1.0, 2.0]]).unwrap();
        assert_eq!(lambda_sparse_threshold(&data, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn threshold_sharp_at_alpha_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let unif = Uniform::new(-2.5, 2.5).unwrap();
        let norm = Normal::new(0.0, 1.0).unwrap();
        for &alpha in &[0.0, 1.0] {
            for _ in 0..20 {
                let n = rng.random_range(8..30usize);
                let p = rng.random_range(1..4usize);
                let x: Vec<Vec<f64>> =
                    (0..p).map(|_| (0..n).map(|_| unif.sample(&mut rng)).collect()).collect();
                let y: Vec<f64> = (0..n).map(|_| norm.sample(&mut rng)).collect();
                let data = Dataset::new(y, x).unwrap();
                let t = lambda_sparse_threshold(&data, alpha).unwrap();
                let config = FitConfig::with_tol(1e-12);
                let above = PenaltySpec::with_epsilon(t * (1.0 + 1e-6), alpha, 0.0).unwrap();
                let fit = flam_bcd(&data, &above, &config, None).unwrap();
                assert!(fit.active_features.is_empty(), "alpha={alpha} not sparse above");
                let below = PenaltySpec::with_epsilon(t * (1.0 - 1e-2), alpha, 0.0).unwrap();
                let fit = flam_bcd(&data, &below, &config, None).unwrap();
                assert!(!fit.active_features.is_empty(), "alpha={alpha} sparse below");
            }
        }
    }

    #[test]
    fn step_functions_zero_fit() {
        let data = Dataset::new(vec![1.0, 2.0], vec![vec![0.0, 1.0]]).unwrap();
        let fit = FlamFit::from_parts(&data, 1.5, vec![vec![0.0, 0.0]], 0.0, 0, true);
        let sf = step_functions(&fit, &data).unwrap();
        assert_eq!(sf[0].n_knots(), 0);
        assert_eq!(sf[0].levels, vec![0.0]);
    }

    #[test]
    fn step_functions_midpoint_knot() {
        let data = Dataset::new(
            vec![1.0, 2.0, 4.0, 5.0],
            vec![vec![1.0, 2.0, 3.0, 4.0]],
        )
        .unwrap();
        let fit = FlamFit::from_parts(
            &data,
            3.0,
            vec![vec![1.5, 1.5, 4.5, 4.5]],
            0.0,
            0,
            true,
        );
        let sf = step_functions(&fit, &data).unwrap();
        assert_eq!(sf[0].knots, vec![2.5]);
        assert_eq!(sf[0].levels, vec![1.5, 4.5]);
        // training points reproduce the fitted values
        for (i, &x) in data.column(0).iter().enumerate() {
            assert_eq!(sf[0].evaluate(x), fit.thetas[0][i]);
        }
    }

    #[test]
    fn step_functions_reproduce_training_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let unif = Uniform::new(-2.5, 2.5).unwrap();
        let norm = Normal::new(0.0, 1.0).unwrap();
        let n = 40;
        let x: Vec<Vec<f64>> =
            (0..3).map(|_| (0..n).map(|_| unif.sample(&mut rng)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| x[0][i].signum() + 0.5 * x[1][i] + norm.sample(&mut rng))
            .collect();
        let data = Dataset::new(y, x).unwrap();
        let penalty = PenaltySpec::with_epsilon(1.0, 0.9, 0.0).unwrap();
        let fit = flam_bcd(&data, &penalty, &FitConfig::default(), None).unwrap();
        let sf = step_functions(&fit, &data).unwrap();
        for j in 0..3 {
            for i in 0..n {
                let v = sf[j].evaluate(data.column(j)[i]);
                assert!((v - fit.thetas[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert!(mse(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn mse_recovers_parameter_fit_metric() {
        // sum_j ||theta_j - thetahat_j||^2 recomputed through per-feature
        // mse agrees with the direct sum of squares
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let sim = crate::sim::generate(&crate::sim::ScenarioSpec {
            scenario: 1,
            n: 50,
            p_total: 4,
            n_signal: 4,
            noise_sd: 1.0,
            seed: 12,
        })
        .unwrap();
        let penalty = PenaltySpec::with_epsilon(2.0, 1.0, 0.0).unwrap();
        let fit = flam_bcd(&sim.data, &penalty, &FitConfig::default(), None).unwrap();
        let mut direct = 0.0;
        let mut via_mse = 0.0;
        for j in 0..4 {
            for i in 0..50 {
                let d = sim.theta_true[j][i] - fit.thetas[j][i];
                direct += d * d;
            }
            via_mse += 50.0 * mse(&sim.theta_true[j], &fit.thetas[j]).unwrap();
        }
        assert!((direct - via_mse).abs() <= 1e-10 * (1.0 + direct));
        let _ = rng.random::<f64>();
    }

    fn noise_data(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Dataset {
        let unif = Uniform::new(-2.5, 2.5).unwrap();
        let norm = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<Vec<f64>> =
            (0..p).map(|_| (0..n).map(|_| unif.sample(rng)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| norm.sample(rng)).collect();
        Dataset::new(y, x).unwrap()
    }

    #[test]
    fn cv_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let data = noise_data(&mut rng, 40, 2);
        let top = lambda_sparse_threshold(&data, 1.0).unwrap();
        let grid = lambda_grid(top, 10, 1e-2);
        let config = FitConfig::default();
        let a = cross_validate(&data, 1.0, 5, &grid, LossKind::Squared, 99, &config).unwrap();
        let b = cross_validate(&data, 1.0, 5, &grid, LossKind::Squared, 99, &config).unwrap();
        assert_eq!(a.fold_assignments, b.fold_assignments);
        assert_eq!(a.chosen_lambda, b.chosen_lambda);
        assert_eq!(a.mean_loss, b.mean_loss);
        let c = cross_validate(&data, 1.0, 5, &grid, LossKind::Squared, 100, &config).unwrap();
        assert_ne!(a.fold_assignments, c.fold_assignments);
    }

    #[test]
    fn cv_leave_one_out_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let data = noise_data(&mut rng, 10, 1);
        let top = lambda_sparse_threshold(&data, 0.5).unwrap();
        let grid = lambda_grid(top, 5, 0.1);
        let config = FitConfig::default();
        let res = cross_validate(&data, 0.5, 10, &grid, LossKind::Squared, 1, &config).unwrap();
        assert!(res.mean_loss.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cv_rejects_bad_folds() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let data = noise_data(&mut rng, 6, 1);
        let grid = [1.0, 0.5];
        let config = FitConfig::default();
        assert!(cross_validate(&data, 1.0, 1, &grid, LossKind::Squared, 0, &config).is_err());
        assert!(cross_validate(&data, 1.0, 7, &grid, LossKind::Squared, 0, &config).is_err());
    }

    #[test]
    fn cv_null_data_prefers_sparse_end() {
        // On pure noise the null model is optimal, so the chosen lambda
        // should sit within one grid step of the threshold most of the time.
        let mut hist = vec![0usize; 8];
        let reps = 100;
        for rep in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(7000 + rep);
            let data = noise_data(&mut rng, 50, 3);
            let top = lambda_sparse_threshold(&data, 1.0).unwrap();
            let grid = lambda_grid(top, 8, 1e-2);
            let config = FitConfig::default();
            let res =
                cross_validate(&data, 1.0, 10, &grid, LossKind::Squared, rep, &config).unwrap();
            hist[res.chosen_index] += 1;
        }
        let hits: usize = hist[..2].iter().sum();
        assert!(hits >= 80, "only {hits}/{reps} chose a near-threshold lambda: {hist:?}");
    }
}
