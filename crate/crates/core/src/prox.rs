//! Proximal compositions: group soft-scaling and its composition with an
//! arbitrary base prox. Solving the fused subproblem and then shrinking
//! the whole solution toward zero is the exact proximal operator of the
//! combined fusion + group penalty, and the same composition holds for
//! any seminorm in place of the fusion term.

use crate::error::FlamError;

/// Multiply `theta` by `(1 - group_weight / ||theta||_2)+`, the proximal
/// operator of `group_weight * ||.||_2`. Returns the zero vector whenever
/// `||theta||_2 <= group_weight` (including `theta = 0`).
pub fn soft_scale(theta: &[f64], group_weight: f64) -> Vec<f64> {
    let mut out = theta.to_vec();
    soft_scale_in_place(&mut out, group_weight);
    out
}

/// In-place variant of [`soft_scale`]; returns the scale factor applied.
pub fn soft_scale_in_place(theta: &mut [f64], group_weight: f64) -> f64 {
    if group_weight == 0.0 {
        return 1.0;
    }
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let factor = if norm <= group_weight { 0.0 } else { 1.0 - group_weight / norm };
    for v in theta.iter_mut() {
        *v *= factor;
    }
    factor
}

/// Proximal operator of `alpha*lambda*||B .|| + group_weight*||.||_2`
/// given an exact solver for the `||B .||`-penalized problem alone: apply
/// the base solver, then soft-scale its output.
pub fn generic_sparse_prox<F>(
    y: &[f64],
    base_solver: F,
    group_weight: f64,
) -> Result<Vec<f64>, FlamError>
where
    F: FnOnce(&[f64]) -> Result<Vec<f64>, FlamError>,
{
    let mut base = base_solver(y)?;
    if base.len() != y.len() {
        return Err(FlamError::invalid(format!(
            "base solver returned length {}, expected {}",
            base.len(),
            y.len()
        )));
    }
    soft_scale_in_place(&mut base, group_weight);
    Ok(base)
}
