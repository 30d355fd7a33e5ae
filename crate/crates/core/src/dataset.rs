//! Core data containers: the regression dataset with per-feature sort
//! orders, and the penalty specification.

use crate::error::FlamError;

/// A response vector together with an n x p covariate matrix and, for each
/// feature, the permutation that sorts that column ascending.
///
/// Columns are stored feature-major (`x[j]` is the j-th column). Orderings
/// are computed once at construction and shared read-only by the fitting
/// code; all products with the permutation matrices P_j are index lookups.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    orderings: Vec<Vec<usize>>,
}

impl Dataset {
    /// Build a dataset from a response and feature columns, validating
    /// dimensions and finiteness and computing the sort order of every
    /// column. Requires n >= 2 observations and p >= 1 features.
    pub fn new(y: Vec<f64>, x: Vec<Vec<f64>>) -> Result<Self, FlamError> {
        let n = y.len();
        if n < 2 {
            return Err(FlamError::invalid(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        if x.is_empty() {
            return Err(FlamError::invalid("need at least 1 feature"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(FlamError::invalid("response contains non-finite values"));
        }
        for (j, col) in x.iter().enumerate() {
            if col.len() != n {
                return Err(FlamError::invalid(format!(
                    "feature {j} has {} rows, expected {n}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(FlamError::invalid(format!(
                    "feature {j} contains non-finite values"
                )));
            }
        }
        let orderings = x
            .iter()
            .map(|col| order_feature(col))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset { y, x, orderings })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn mean_y(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    /// The j-th feature column, in observation order.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.x[j]
    }

    /// Source indices of the j-th column sorted ascending: `ordering(j)[k]`
    /// is the row holding the k-th smallest value.
    pub fn ordering(&self, j: usize) -> &[usize] {
        &self.orderings[j]
    }

    /// Restrict to a subset of rows (used by cross-validation folds).
    /// Orderings are recomputed for the subset.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset, FlamError> {
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let x = self
            .x
            .iter()
            .map(|col| rows.iter().map(|&i| col[i]).collect())
            .collect();
        Dataset::new(y, x)
    }
}

/// Stable argsort: returns the sequence of source indices that sorts `x`
/// ascending, ties keeping their original order.
pub fn order_feature(x: &[f64]) -> Result<Vec<usize>, FlamError> {
    if x.is_empty() {
        return Err(FlamError::invalid("cannot order an empty vector"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FlamError::invalid("cannot order non-finite values"));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    Ok(idx)
}

/// The (lambda, alpha, epsilon) triple: lambda scales the whole penalty,
/// alpha trades fusion against group sparsity, and epsilon is the small
/// ridge stabilizer used by the degrees-of-freedom estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

impl PenaltySpec {
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(lambda: f64, alpha: f64) -> Result<Self, FlamError> {
        Self::with_epsilon(lambda, alpha, Self::DEFAULT_EPSILON)
    }

    pub fn with_epsilon(lambda: f64, alpha: f64, epsilon: f64) -> Result<Self, FlamError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(FlamError::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
            return Err(FlamError::invalid(format!("alpha must be in [0, 1], got {alpha}")));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(FlamError::invalid(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(PenaltySpec { lambda, alpha, epsilon })
    }

    /// Weight on the fusion term, alpha * lambda.
    pub fn fuse_weight(&self) -> f64 {
        self.alpha * self.lambda
    }

    /// Weight on the group term, (1 - alpha) * lambda.
    pub fn group_weight(&self) -> f64 {
        (1.0 - self.alpha) * self.lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_feature_basic() {
        assert_eq!(order_feature(&[3.0, 1.0, 2.0]).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn order_feature_stable_ties() {
        assert_eq!(order_feature(&[1.0, 1.0]).unwrap(), vec![0, 1]);
        assert_eq!(order_feature(&[2.0, 1.0, 1.0, 2.0]).unwrap(), vec![1, 2, 0, 3]);
    }

    #[test]
    fn order_feature_identity_on_sorted() {
        let x = [0.5, 1.0, 2.0, 7.0];
        assert_eq!(order_feature(&x).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn order_feature_idempotent() {
        let x = [4.0, -1.0, 2.5, 2.5, 0.0];
        let ord = order_feature(&x).unwrap();
        let sorted: Vec<f64> = ord.iter().map(|&i| x[i]).collect();
        assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
        let again = order_feature(&sorted).unwrap();
        assert_eq!(again, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn order_feature_rejects_empty() {
        assert!(order_feature(&[]).is_err());
    }

    #[test]
    fn dataset_validates() {
        assert!(Dataset::new(vec![1.0], vec![vec![1.0]]).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], vec![vec![1.0, 2.0]]).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], vec![vec![1.0]]).is_err());
        let d = Dataset::new(vec![1.0, 2.0, 3.0], vec![vec![3.0, 1.0, 2.0]]).unwrap();
        assert_eq!(d.ordering(0), &[1, 2, 0]);
        let sorted: Vec<f64> = d.ordering(0).iter().map(|&i| d.column(0)[i]).collect();
        assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn penalty_validates() {
        assert!(PenaltySpec::new(-1.0, 0.5).is_err());
        assert!(PenaltySpec::new(1.0, 1.5).is_err());
        assert!(PenaltySpec::with_epsilon(1.0, 0.5, -1e-9).is_err());
        let p = PenaltySpec::new(2.0, 0.25).unwrap();
        assert_eq!(p.fuse_weight(), 0.5);
        assert_eq!(p.group_weight(), 1.5);
        assert_eq!(p.epsilon, PenaltySpec::DEFAULT_EPSILON);
    }
}
