//! Exact O(n) solver for the 1D fused lasso subproblem
//!
//! ```text
//!     minimize  0.5 * ||y - theta||^2 + w * sum_i |theta_i - theta_{i+1}|
//! ```
//!
//! via dynamic programming over the derivatives of the forward messages.
//! Each message derivative is a continuous non-decreasing piecewise-linear
//! function; adding an observation appends a unit-slope term, and the
//! total-variation penalty clips the derivative to [-w, +w]. The clip
//! locations are stored per step and recovered in a backward pass. Each
//! breakpoint is inserted and removed at most once, so a full solve is
//! O(n) amortized.
//!
//! Two independent reference oracles live in [`crate::solver::oracle`]:
//! a projected-gradient solver for the dual of the prox problem, and an
//! exhaustive grid search for tiny inputs. They exist to test everything
//! else and are not used by the fitting paths.

use crate::error::FlamError;

pub mod oracle;

/// One inner fused-lasso problem: the (already sorted) target vector and
/// the fusion weight alpha * lambda.
#[derive(Debug, Clone)]
pub struct FlProblem {
    pub target: Vec<f64>,
    pub fuse_weight: f64,
}

impl FlProblem {
    pub fn new(target: Vec<f64>, fuse_weight: f64) -> Result<Self, FlamError> {
        if target.is_empty() {
            return Err(FlamError::invalid("fused lasso target is empty"));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(FlamError::invalid("fused lasso target contains NaN/Inf"));
        }
        if !fuse_weight.is_finite() || fuse_weight < 0.0 {
            return Err(FlamError::invalid(format!(
                "fuse weight must be >= 0, got {fuse_weight}"
            )));
        }
        Ok(FlProblem { target, fuse_weight })
    }
}

/// Exact minimizer of the 1D fused lasso. See the module docs for the
/// algorithm; `n == 1` or zero weight return the target unchanged.
pub fn fused_lasso_1d(problem: &FlProblem) -> Vec<f64> {
    let mut ws = FusedLassoWorkspace::new();
    let mut out = vec![0.0; problem.target.len()];
    ws.solve(&problem.target, problem.fuse_weight, &mut out);
    out
}

/// Reusable buffers for repeated fused-lasso solves of (possibly) varying
/// size. The block coordinate descent loop keeps one of these per thread
/// so inner solves allocate nothing.
#[derive(Debug, Default)]
pub struct FusedLassoWorkspace {
    x: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    tm: Vec<f64>,
    tp: Vec<f64>,
}

impl FusedLassoWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solve into `out` (length must equal `y.len()`). Inputs are assumed
    /// finite with `w >= 0`; the public wrapper validates.
    pub fn solve(&mut self, y: &[f64], w: f64, out: &mut [f64]) {
        let n = y.len();
        assert_eq!(out.len(), n);
        if n == 1 || w == 0.0 {
            out.copy_from_slice(y);
            return;
        }

        self.x.resize(2 * n, 0.0);
        self.a.resize(2 * n, 0.0);
        self.b.resize(2 * n, 0.0);
        self.tm.resize(n - 1, 0.0);
        self.tp.resize(n - 1, 0.0);
        let (x, a, b) = (&mut self.x, &mut self.a, &mut self.b);
        let (tm, tp) = (&mut self.tm, &mut self.tp);

        // Derivative of the first message is theta - y[0]; clip at -w/+w
        // and absorb the second observation.
        tm[0] = y[0] - w;
        tp[0] = y[0] + w;
        let mut l = n - 1;
        let mut r = n;
        x[l] = tm[0];
        a[l] = 1.0;
        b[l] = -y[0] + w;
        x[r] = tp[0];
        a[r] = -1.0;
        b[r] = w + y[0];
        let mut afirst = 1.0;
        let mut bfirst = -w - y[1];
        let mut alast = 1.0;
        let mut blast = w - y[1];

        for t in 2..n {
            // Where does the current derivative hit -w (from the left)?
            let mut alo = afirst;
            let mut blo = bfirst;
            let mut lo = l;
            while lo <= r && alo * x[lo] + blo < -w {
                alo += a[lo];
                blo += b[lo];
                lo += 1;
            }
            let thresh_m = (-w - blo) / alo;

            // ... and +w (from the right)?
            let mut ahi = alast;
            let mut bhi = blast;
            let mut hi = r;
            while hi + 1 > lo && ahi * x[hi] + bhi > w {
                ahi -= a[hi];
                bhi -= b[hi];
                hi -= 1;
            }
            let thresh_p = (w - bhi) / ahi;

            tm[t - 1] = thresh_m;
            tp[t - 1] = thresh_p;

            // Clip outside [thresh_m, thresh_p] and add the next data term.
            l = lo - 1;
            x[l] = thresh_m;
            a[l] = alo;
            b[l] = blo + w;
            r = hi + 1;
            x[r] = thresh_p;
            a[r] = -ahi;
            b[r] = w - bhi;
            afirst = 1.0;
            bfirst = -w - y[t];
            alast = 1.0;
            blast = w - y[t];
        }

        // Root of the final derivative gives the last coordinate.
        let mut alo = afirst;
        let mut blo = bfirst;
        let mut lo = l;
        while lo <= r && alo * x[lo] + blo < 0.0 {
            alo += a[lo];
            blo += b[lo];
            lo += 1;
        }
        out[n - 1] = -blo / alo;
        for t in (1..n).rev() {
            out[t - 1] = out[t].clamp(tm[t - 1], tp[t - 1]);
        }
    }
}

/// Objective of the 1D fused lasso at `theta`.
pub fn fused_lasso_objective(y: &[f64], w: f64, theta: &[f64]) -> f64 {
    let fit: f64 = y.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
    let tv: f64 = theta.windows(2).map(|t| (t[0] - t[1]).abs()).sum();
    0.5 * fit + w * tv
}

/// Worst KKT violation of a candidate fused-lasso solution, scaled so that
/// an exact solution scores ~0 regardless of the data magnitude. The dual
/// vector is reconstructed from the cumulative sums of the residual; the
/// score combines box violations, sign mismatches at jumps, and the
/// stationarity defect at the free end.
pub fn fused_lasso_kkt_violation(y: &[f64], w: f64, theta: &[f64]) -> f64 {
    let n = y.len();
    let maxabs = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = 1.0 + maxabs;
    if n == 1 {
        return (theta[0] - y[0]).abs() / scale;
    }
    // Stationarity: theta - y + w D^T s = 0 with s_k in [-1, 1] and
    // s_k = sign(theta_k - theta_{k+1}) at jumps. Cumulative sums give
    // w * s_k = sum_{i<=k} (y_i - theta_i); the total sum must vanish.
    let mut worst: f64 = 0.0;
    let mut acc = 0.0;
    for k in 0..n {
        acc += y[k] - theta[k];
        if k == n - 1 {
            worst = worst.max(acc.abs());
            break;
        }
        if w == 0.0 {
            worst = worst.max(acc.abs());
            continue;
        }
        let s = acc / w;
        let jump = theta[k] - theta[k + 1];
        if jump.abs() > 1e-9 * scale {
            worst = worst.max((s - jump.signum()).abs() * w);
        } else {
            worst = worst.max((s.abs() - 1.0).max(0.0) * w);
        }
    }
    worst / scale
}
