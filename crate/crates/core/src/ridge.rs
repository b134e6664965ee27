//! Closed-form ridge regression with an unpenalized intercept.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    /// `outputs x features`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl RidgeSolution {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }
}

/// Minimizes `||X W + 1 b - Y||^2 + lambda ||W||^2`.
///
/// Solved through the normal equations of the intercept-augmented design with
/// a Cholesky factorization.
pub fn ridge_fit(features: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> Result<RidgeSolution> {
    let n = features.len();
    if n == 0 {
        return Err(invalid("ridge fit needs at least one sample"));
    }
    if targets.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} feature rows but {} target rows",
            targets.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("ridge lambda must be >= 0, got {lambda}")));
    }
    let d = features[0].len();
    let c = targets[0].len();
    if features.iter().any(|r| r.len() != d) || targets.iter().any(|r| r.len() != c) {
        return Err(Error::ShapeMismatch("ragged ridge inputs".into()));
    }

    let p = d + 1;
    let design = DMatrix::from_fn(n, p, |i, j| if j < d { features[i][j] } else { 1.0 });
    let y = DMatrix::from_fn(n, c, |i, j| targets[i][j]);
    let mut normal = design.transpose() * &design;
    for j in 0..d {
        normal[(j, j)] += lambda;
    }
    let rhs = design.transpose() * y;

    let chol = normal.clone().cholesky().ok_or(Error::SingularSystem)?;
    let diag: DVector<f64> = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v * v), hi.max(v * v)));
    if !(lo > 1e-13 * hi) {
        return Err(Error::SingularSystem);
    }
    let sol = chol.solve(&rhs);

    let weights = (0..c)
        .map(|k| (0..d).map(|j| sol[(j, k)]).collect())
        .collect();
    let bias = (0..c).map(|k| sol[(d, k)]).collect();
    Ok(RidgeSolution { weights, bias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn one_hot(n: usize, c: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..c).map(|k| if i % c == k { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn exact_interpolation_when_square() {
        // d features + intercept = 9 unknowns per output, 9 samples
        let x = random_rows(9, 8, 1);
        let y = one_hot(9, 3);
        let sol = ridge_fit(&x, &y, 0.0).unwrap();
        for (row, target) in x.iter().zip(&y) {
            for (p, t) in sol.predict(row).iter().zip(target) {
                assert!((p - t).abs() < 1e-6, "{p} vs {t}");
            }
        }
    }

    #[test]
    fn huge_lambda_shrinks_weights() {
        let x = random_rows(40, 5, 2);
        let y = one_hot(40, 4);
        let sol = ridge_fit(&x, &y, 1e12).unwrap();
        let max = sol.weights.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-9);
    }

    #[test]
    fn duplicated_rows_match_direct_solve() {
        let x = random_rows(30, 6, 3);
        let y = one_hot(30, 3);
        let mut x2 = x.clone();
        x2.extend(x.iter().cloned());
        let mut y2 = y.clone();
        y2.extend(y.iter().cloned());

        let a = ridge_fit(&x, &y, 0.0).unwrap();
        let b = ridge_fit(&x2, &y2, 0.0).unwrap();
        for (u, v) in a.weights.iter().flatten().zip(b.weights.iter().flatten()) {
            assert!((u - v).abs() < 1e-9);
        }
        // with a penalty, doubling the data is the same as halving lambda
        let c = ridge_fit(&x2, &y2, 0.5).unwrap();
        let d = ridge_fit(&x, &y, 0.25).unwrap();
        for (u, v) in c.weights.iter().flatten().zip(d.weights.iter().flatten()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_without_penalty() {
        let mut x = random_rows(20, 3, 4);
        for r in &mut x {
            r[2] = r[0];
        }
        let y = one_hot(20, 2);
        assert!(matches!(ridge_fit(&x, &y, 0.0), Err(Error::SingularSystem)));
        assert!(ridge_fit(&x, &y, 1e-3).is_ok());
    }
}
