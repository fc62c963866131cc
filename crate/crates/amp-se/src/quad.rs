//! Gauss–Hermite quadrature (physicists' convention).
//!
//! Nodes and weights come from the Golub–Welsch algorithm: the rule of
//! degree n is the eigensystem of the symmetric tridiagonal Jacobi matrix
//! with zero diagonal and off-diagonal `sqrt(k/2)`. Rules are cached per
//! node count since the same rule is reused across many `mmse` calls.

use nalgebra::DMatrix;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// A Gauss–Hermite rule: integrates `exp(-x^2) f(x)` over the real line.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();

impl GaussHermite {
    /// Computes the rule with `n` nodes (n >= 1).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature rule needs at least one node");
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 0..n - 1 {
            let off = ((k + 1) as f64 * 0.5).sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
        let eigen = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eigen
            .eigenvalues
            .iter()
            .zip(eigen.eigenvectors.row(0).iter())
            .map(|(&x, &v0)| (x, v0 * v0 * std::f64::consts::PI.sqrt()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Returns the cached rule with `n` nodes.
    pub fn cached(n: usize) -> Arc<GaussHermite> {
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap();
        map.entry(n).or_insert_with(|| Arc::new(GaussHermite::new(n))).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `exp(-x^2) f(x)` over the real line.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Expectation `E[f(Y)]` for `Y ~ N(mean, var)`.
    pub fn gaussian_expectation<F: Fn(f64) -> f64>(&self, mean: f64, var: f64, f: F) -> f64 {
        let scale = (2.0 * var).sqrt();
        let norm = std::f64::consts::PI.sqrt();
        self.integrate(|x| f(mean + scale * x)) / norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_integrates_to_sqrt_pi() {
        let rule = GaussHermite::new(5);
        assert_abs_diff_eq!(rule.integrate(|_| 1.0), std::f64::consts::PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn second_moment_of_standard_normal() {
        let rule = GaussHermite::new(21);
        let m2 = rule.gaussian_expectation(0.0, 1.0, |y| y * y);
        assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn shifted_gaussian_moments() {
        let rule = GaussHermite::new(31);
        let mean = rule.gaussian_expectation(1.5, 0.25, |y| y);
        let var = rule.gaussian_expectation(1.5, 0.25, |y| (y - 1.5) * (y - 1.5));
        assert_abs_diff_eq!(mean, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn cached_rule_matches_fresh() {
        let fresh = GaussHermite::new(127);
        let cached = GaussHermite::cached(127);
        assert_eq!(fresh.nodes, cached.nodes);
        assert_eq!(fresh.weights, cached.weights);
    }

    #[test]
    fn degree_three_nodes_are_known() {
        let rule = GaussHermite::new(3);
        let expect = [-(1.5f64).sqrt(), 0.0, (1.5f64).sqrt()];
        for (got, want) in rule.nodes.iter().zip(expect) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }
}
