//! Independent reference solvers used only by tests and the acceptance
//! suite. Nothing here shares code with the dynamic-programming solver or
//! the block coordinate descent loop it is used to check.
//!
//! * [`prox_dual`] solves the inner problem
//!   `0.5||y - theta||^2 + w1 ||D theta||_1 + w2 ||theta||_2`
//!   by projected gradient on its dual: theta = y - D^T s - u with s in a
//!   box and u in a Euclidean ball. The duality gap certifies accuracy.
//! * [`oracle_prox_gradient`] runs plain proximal gradient descent on the
//!   full additive objective, using `prox_dual` for the per-feature
//!   proximal step.
//! * [`oracle_grid_qp`] exhaustively minimizes the 1D fused lasso over a
//!   discrete level grid by dynamic programming (tiny n only).

use crate::dataset::{Dataset, PenaltySpec};
use crate::diffs;
use crate::error::FlamError;

/// Result of a dual solve: primal point plus the certified duality gap.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub theta: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
}

fn project_ball(v: &mut [f64], radius: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > radius {
        let f = if radius == 0.0 { 0.0 } else { radius / norm };
        v.iter_mut().for_each(|x| *x *= f);
    }
}

fn inner_objective(y: &[f64], w1: f64, w2: f64, theta: &[f64]) -> f64 {
    let fit: f64 = y.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
    let tv: f64 = theta.windows(2).map(|t| (t[0] - t[1]).abs()).sum();
    let nrm: f64 = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    0.5 * fit + w1 * tv + w2 * nrm
}

/// Projected-gradient dual solve with caller-owned warm-start state. `s`
/// must have length n-1 and `u` length n; both are updated in place.
pub fn prox_dual_warm(
    y: &[f64],
    w1: f64,
    w2: f64,
    s: &mut Vec<f64>,
    u: &mut Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> DualSolution {
    let n = y.len();
    s.resize(n.saturating_sub(1), 0.0);
    u.resize(n, 0.0);
    s.iter_mut().for_each(|v| *v = v.clamp(-w1, w1));
    project_ball(u, w2);

    // With no fusion term the dual reduces to projecting y onto the
    // w2-ball, which is exact in one step.
    if w1 == 0.0 || n == 1 {
        u.copy_from_slice(y);
        project_ball(u, w2);
        s.iter_mut().for_each(|v| *v = 0.0);
        let theta: Vec<f64> = y.iter().zip(u.iter()).map(|(a, b)| a - b).collect();
        return DualSolution { theta, gap: 0.0, iterations: 0 };
    }

    // ||[D^T I]||^2 <= lambda_max(D^T D) + 1 <= 5.
    let step = 1.0 / 5.0;
    let mut theta = vec![0.0; n];
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    for it in 0..max_iter {
        iterations = it + 1;
        // residual r = y - D^T s - u (the current primal point)
        let dts = diffs::diff_transpose(s);
        for i in 0..n {
            theta[i] = y[i] - dts[i] - u[i];
        }
        // gradient steps with projections
        let dr = diffs::diff(&theta);
        for (sk, g) in s.iter_mut().zip(dr.iter()) {
            *sk = (*sk + step * g).clamp(-w1, w1);
        }
        if w2 > 0.0 {
            for (uk, r) in u.iter_mut().zip(theta.iter()) {
                *uk += step * r;
            }
            project_ball(u, w2);
        }
        // duality gap at the refreshed primal point
        let dts = diffs::diff_transpose(s);
        for i in 0..n {
            theta[i] = y[i] - dts[i] - u[i];
        }
        let dtheta = diffs::diff(&theta);
        let tv: f64 = dtheta.iter().map(|v| v.abs()).sum();
        let sdot: f64 = dtheta.iter().zip(s.iter()).map(|(a, b)| a * b).sum();
        let nrm: f64 = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
        let udot: f64 = theta.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
        gap = (w1 * tv - sdot) + (w2 * nrm - udot);
        let primal = inner_objective(y, w1, w2, &theta);
        if gap <= tol * (1.0 + primal.abs()) {
            break;
        }
    }
    DualSolution { theta, gap, iterations }
}

/// Cold-start dual solve of the inner prox problem; see [`prox_dual_warm`].
pub fn prox_dual(y: &[f64], w1: f64, w2: f64, tol: f64, max_iter: usize) -> DualSolution {
    let mut s = Vec::new();
    let mut u = Vec::new();
    prox_dual_warm(y, w1, w2, &mut s, &mut u, tol, max_iter)
}

/// A converged oracle fit of the full additive objective.
#[derive(Debug, Clone)]
pub struct OracleFit {
    pub theta0: f64,
    pub thetas: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
}

/// Plain proximal gradient descent on the additive objective with the
/// intercept eliminated analytically. The per-feature prox is solved by
/// [`prox_dual_warm`] to near machine precision, warm-started across
/// iterations. Terminates once the relative objective decrease stays
/// below `tol` for ten consecutive iterations; a sustained objective
/// increase reports a numeric failure.
pub fn oracle_prox_gradient(
    data: &Dataset,
    penalty: &PenaltySpec,
    init: Option<&[Vec<f64>]>,
    step: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<OracleFit, FlamError> {
    let n = data.n();
    let p = data.p();
    let lip = p as f64;
    let step = step.unwrap_or(1.0 / lip);
    let w1 = penalty.fuse_weight() * step;
    let w2 = penalty.group_weight() * step;

    let mut thetas: Vec<Vec<f64>> = match init {
        Some(t0) => {
            if t0.len() != p || t0.iter().any(|t| t.len() != n) {
                return Err(FlamError::invalid("oracle init has wrong shape"));
            }
            t0.to_vec()
        }
        None => vec![vec![0.0; n]; p],
    };
    let mut duals: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); p];

    let objective = |thetas: &[Vec<f64>]| -> f64 {
        let mut r: Vec<f64> = data.y().to_vec();
        for t in thetas {
            for (ri, ti) in r.iter_mut().zip(t) {
                *ri -= ti;
            }
        }
        let mean = r.iter().sum::<f64>() / n as f64;
        let fit: f64 = r.iter().map(|v| (v - mean) * (v - mean)).sum();
        let mut pen = 0.0;
        for (j, t) in thetas.iter().enumerate() {
            let ord = data.ordering(j);
            let sorted: Vec<f64> = ord.iter().map(|&i| t[i]).collect();
            let tv: f64 = sorted.windows(2).map(|w| (w[0] - w[1]).abs()).sum();
            let nrm: f64 = t.iter().map(|x| x * x).sum::<f64>().sqrt();
            pen += penalty.fuse_weight() * tv + penalty.group_weight() * nrm;
        }
        0.5 * fit + pen
    };

    let mut prev_obj = objective(&thetas);
    let mut small_streak = 0usize;
    let mut rise_streak = 0usize;
    let mut iterations = 0usize;
    let mut z = vec![0.0; n];

    for it in 0..max_iter {
        iterations = it + 1;
        let mut r: Vec<f64> = data.y().to_vec();
        for t in &thetas {
            for (ri, ti) in r.iter_mut().zip(t) {
                *ri -= ti;
            }
        }
        let mean = r.iter().sum::<f64>() / n as f64;
        for v in &mut r {
            *v -= mean;
        }
        for j in 0..p {
            let ord = data.ordering(j);
            for (k, &src) in ord.iter().enumerate() {
                z[k] = thetas[j][src] + step * r[src];
            }
            let (s, u) = &mut duals[j];
            let sol = prox_dual_warm(&z, w1, w2, s, u, 1e-14, 50_000);
            for (k, &src) in ord.iter().enumerate() {
                thetas[j][src] = sol.theta[k];
            }
        }
        let obj = objective(&thetas);
        if !obj.is_finite() {
            return Err(FlamError::numeric("oracle objective is not finite"));
        }
        if obj > prev_obj + 1e-10 * (1.0 + prev_obj.abs()) {
            rise_streak += 1;
            if rise_streak >= 100 {
                return Err(FlamError::numeric(
                    "oracle objective increased for 100 consecutive steps",
                ));
            }
        } else {
            rise_streak = 0;
        }
        if (prev_obj - obj).abs() <= tol * (1.0 + prev_obj.abs()) {
            small_streak += 1;
            if small_streak >= 10 {
                prev_obj = obj;
                break;
            }
        } else {
            small_streak = 0;
        }
        prev_obj = obj;
    }

    let mut r: Vec<f64> = data.y().to_vec();
    for t in &thetas {
        for (ri, ti) in r.iter_mut().zip(t) {
            *ri -= ti;
        }
    }
    let theta0 = r.iter().sum::<f64>() / n as f64;
    Ok(OracleFit { theta0, thetas, objective: prev_obj, iterations })
}

/// Exhaustive minimization of the 1D fused lasso over the level grid
/// `{min(y) - step, ..., max(y) + step}` by dynamic programming; the
/// transition minimum is computed with an L1 distance transform so each
/// stage costs O(grid). Only for n <= 6.
pub fn oracle_grid_qp(y: &[f64], w: f64, grid_step: f64) -> Result<Vec<f64>, FlamError> {
    let n = y.len();
    if n == 0 || n > 6 {
        return Err(FlamError::invalid(format!("grid oracle needs 1 <= n <= 6, got {n}")));
    }
    if !grid_step.is_finite() || grid_step <= 0.0 {
        return Err(FlamError::invalid("grid step must be positive"));
    }
    if y.iter().any(|v| !v.is_finite()) || !w.is_finite() || w < 0.0 {
        return Err(FlamError::invalid("grid oracle inputs must be finite, w >= 0"));
    }
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min) - grid_step;
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + grid_step;
    let m = ((hi - lo) / grid_step).ceil() as usize + 1;
    if m > 1_000_000 {
        return Err(FlamError::invalid("grid step too small for the data range"));
    }
    let grid: Vec<f64> = (0..m).map(|v| lo + v as f64 * grid_step).collect();

    let mut dp: Vec<f64> = grid.iter().map(|&g| 0.5 * (y[0] - g) * (y[0] - g)).collect();
    let mut parents: Vec<Vec<u32>> = Vec::with_capacity(n);
    parents.push(Vec::new());
    let hop = w * grid_step;
    for &yi in &y[1..] {
        let mut env = dp.clone();
        let mut arg: Vec<u32> = (0..m as u32).collect();
        for v in 1..m {
            if env[v - 1] + hop < env[v] {
                env[v] = env[v - 1] + hop;
                arg[v] = arg[v - 1];
            }
        }
        for v in (0..m - 1).rev() {
            if env[v + 1] + hop < env[v] {
                env[v] = env[v + 1] + hop;
                arg[v] = arg[v + 1];
            }
        }
        for v in 0..m {
            dp[v] = 0.5 * (yi - grid[v]) * (yi - grid[v]) + env[v];
        }
        parents.push(arg);
    }

    let mut best = 0usize;
    for v in 1..m {
        if dp[v] < dp[best] {
            best = v;
        }
    }
    let mut out = vec![0.0; n];
    out[n - 1] = grid[best];
    let mut cur = best;
    for i in (1..n).rev() {
        cur = parents[i][cur] as usize;
        out[i - 1] = grid[cur];
    }
    Ok(out)
}
