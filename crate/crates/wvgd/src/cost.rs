//! Transport cost functions.

/// A latent-space point. All points within one problem share a dimension.
pub type Point = Vec<f64>;

/// Cost of transporting mass from one point to another, together with its
/// gradient in the first argument.
pub trait CostFunction: Sync {
    /// c(a, b) >= 0. Panics on dimension mismatch.
    fn evaluate(&self, a: &[f64], b: &[f64]) -> f64;

    /// Gradient of `evaluate` with respect to `a`.
    fn grad_first(&self, a: &[f64], b: &[f64]) -> Vec<f64>;
}

/// c(a, b) = sum_h (a_h - b_h)^2, the cost used throughout the experiments.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredEuclidean;

impl CostFunction for SquaredEuclidean {
    fn evaluate(&self, a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len(), "cost arguments must share a dimension");
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    fn grad_first(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        assert_eq!(a.len(), b.len(), "cost arguments must share a dimension");
        a.iter().zip(b).map(|(x, y)| 2.0 * (x - y)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::finite_difference_gradient;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    #[test]
    fn zero_at_identity() {
        let c = SquaredEuclidean;
        assert_eq!(c.evaluate(&[0.0], &[0.0]), 0.0);
        assert_eq!(c.evaluate(&[1.5, -2.0], &[1.5, -2.0]), 0.0);
    }

    #[test]
    fn three_four_five() {
        let c = SquaredEuclidean;
        assert_eq!(c.evaluate(&[1.0, 2.0], &[4.0, 6.0]), 25.0);
    }

    #[test]
    fn gradient_closed_form() {
        let c = SquaredEuclidean;
        assert_eq!(c.grad_first(&[1.0, 2.0], &[4.0, 6.0]), vec![-6.0, -8.0]);
    }

    #[test]
    #[should_panic(expected = "dimension")]
    fn dimension_mismatch_panics() {
        SquaredEuclidean.evaluate(&[0.0], &[0.0, 1.0]);
    }

    #[test]
    fn gradient_matches_finite_differences_at_seeded_points() {
        let c = SquaredEuclidean;
        let mut rng = RngStream::new(2024);
        for _ in 0..100 {
            let a = rng.standard_normal_vec(3);
            let b = rng.standard_normal_vec(3);
            let analytic = c.grad_first(&a, &b);
            let fd = finite_difference_gradient(|z| c.evaluate(z, &b), &a, 1e-5).unwrap();
            for (g, f) in analytic.iter().zip(&fd) {
                assert_relative_eq!(g, f, max_relative = 1e-5, epsilon = 1e-7);
            }
        }
    }
}
