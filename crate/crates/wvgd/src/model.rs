//! The inference-target interface.
//!
//! A target exposes the unnormalized log joint density log p(z, x) and its
//! gradient. The particle dynamics itself never needs the gradient (it only
//! differentiates the cost), but the SVGD baseline does, and gradient checks
//! validate every shipped target.

use crate::error::{Result, WvgdError};

/// Unnormalized log posterior over an unconstrained latent space.
pub trait TargetModel: Sync {
    /// Latent dimension d.
    fn dim(&self) -> usize;

    /// log p(z, x) up to an additive constant. Finite for all finite z
    /// unless the target's support is restricted (none of the shipped
    /// targets restrict support).
    fn log_joint(&self, z: &[f64]) -> f64;

    /// Gradient of `log_joint`.
    fn grad_log_joint(&self, z: &[f64]) -> Vec<f64>;
}

/// Central finite differences (f(z + h e_k) - f(z - h e_k)) / (2h).
///
/// Serves as the independent check for every analytic gradient in the crate.
pub fn finite_difference_gradient<F>(f: F, z: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "step size must be positive");
    let mut grad = Vec::with_capacity(z.len());
    let mut buf = z.to_vec();
    for k in 0..z.len() {
        buf[k] = z[k] + h;
        let up = f(&buf);
        buf[k] = z[k] - h;
        let down = f(&buf);
        buf[k] = z[k];
        if !up.is_finite() || !down.is_finite() {
            return Err(WvgdError::NonFinite {
                context: format!("finite differences at coordinate {k}"),
            });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_is_exact_under_central_differences() {
        let f = |z: &[f64]| z.iter().map(|x| x * x).sum::<f64>();
        let g = finite_difference_gradient(f, &[1.0, 1.0], 1e-5).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn constant_gives_zero() {
        let g = finite_difference_gradient(|_| 3.5, &[0.2, -0.7, 1.1], 1e-4).unwrap();
        for gk in g {
            assert_abs_diff_eq!(gk, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn standard_normal_score() {
        let log_density =
            |z: &[f64]| -0.5 * z[0] * z[0] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let g = finite_difference_gradient(log_density, &[0.5], 1e-5).unwrap();
        assert_abs_diff_eq!(g[0], -0.5, epsilon = 1e-6);
    }

    #[test]
    fn non_finite_evaluation_errors() {
        let f = |z: &[f64]| if z[0] > 0.0 { f64::NEG_INFINITY } else { 0.0 };
        assert!(finite_difference_gradient(f, &[0.0], 1e-3).is_err());
    }
}
