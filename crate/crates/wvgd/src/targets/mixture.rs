//! One-dimensional Gaussian-mixture targets and the conjugate Gaussian model.

use crate::model::TargetModel;
use crate::rng::RngStream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mixture of K univariate Gaussians with simplex weights.
#[derive(Debug, Clone)]
pub struct GaussianMixtureTarget {
    pub weights: Vec<f64>,
    pub locations: Vec<f64>,
    pub scales: Vec<f64>,
}

impl GaussianMixtureTarget {
    pub fn new(weights: Vec<f64>, locations: Vec<f64>, scales: Vec<f64>) -> Self {
        assert_eq!(weights.len(), locations.len());
        assert_eq!(weights.len(), scales.len());
        assert!(!weights.is_empty());
        let sum: f64 = weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "weights must sum to 1");
        assert!(scales.iter().all(|s| *s > 0.0), "scales must be positive");
        Self {
            weights,
            locations,
            scales,
        }
    }

    /// The single-component mixture N(0, 1).
    pub fn standard_normal() -> Self {
        Self::new(vec![1.0], vec![0.0], vec![1.0])
    }

    /// Normalized density value.
    pub fn density(&self, z: f64) -> f64 {
        self.log_density(z).exp()
    }

    pub fn log_density(&self, z: f64) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|k| {
                let t = (z - self.locations[k]) / self.scales[k];
                let l = self.weights[k].ln() - 0.5 * t * t - self.scales[k].ln() - 0.5 * LN_2PI;
                max = max.max(l);
                l
            })
            .collect();
        if !max.is_finite() {
            return f64::NEG_INFINITY;
        }
        max + terms.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    /// Window containing all but ~1e-14 of the mass: eight max-scale
    /// standard deviations beyond the extreme locations.
    pub fn window(&self) -> (f64, f64) {
        let max_scale = self.scales.iter().cloned().fold(0.0, f64::max);
        let lo = self.locations.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self
            .locations
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo - 8.0 * max_scale, hi + 8.0 * max_scale)
    }
}

impl TargetModel for GaussianMixtureTarget {
    fn dim(&self) -> usize {
        1
    }

    fn log_joint(&self, z: &[f64]) -> f64 {
        assert_eq!(z.len(), 1);
        self.log_density(z[0])
    }

    fn grad_log_joint(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), 1);
        let x = z[0];
        // d/dz log sum_k w_k phi_k = sum_k r_k * (-(z - mu_k)/s_k^2) with
        // responsibilities r_k.
        let log_total = self.log_density(x);
        let mut grad = 0.0;
        for k in 0..self.weights.len() {
            let t = (x - self.locations[k]) / self.scales[k];
            let log_term =
                self.weights[k].ln() - 0.5 * t * t - self.scales[k].ln() - 0.5 * LN_2PI;
            let resp = (log_term - log_total).exp();
            grad += resp * (-(x - self.locations[k]) / (self.scales[k] * self.scales[k]));
        }
        vec![grad]
    }
}

/// Draws the experiment's random target: a five-component mixture with
/// uniform raw weights, N(0, location_std^2) locations, and U(0.1, 1) scales.
pub fn sample_random_mixture(rng: &mut RngStream, location_std: f64) -> GaussianMixtureTarget {
    let k = 5;
    let raw: Vec<f64> = (0..k).map(|_| rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let locations = (0..k).map(|_| location_std * rng.standard_normal()).collect();
    let scales = (0..k).map(|_| rng.uniform_in(0.1, 1.0)).collect();
    GaussianMixtureTarget::new(weights, locations, scales)
}

/// Conjugate 1D model: z ~ N(0, prior_std^2), x | z ~ N(z, noise_std^2).
/// `log_joint` is the exact joint density, so exp(log_joint) integrates to
/// the evidence p(x).
#[derive(Debug, Clone)]
pub struct GaussianPosteriorTarget {
    pub prior_std: f64,
    pub noise_std: f64,
    pub observation: f64,
}

impl GaussianPosteriorTarget {
    pub fn conjugate(prior_std: f64, noise_std: f64, observation: f64) -> Self {
        assert!(prior_std > 0.0 && noise_std > 0.0);
        Self {
            prior_std,
            noise_std,
            observation,
        }
    }
}

impl TargetModel for GaussianPosteriorTarget {
    fn dim(&self) -> usize {
        1
    }

    fn log_joint(&self, z: &[f64]) -> f64 {
        assert_eq!(z.len(), 1);
        let zp = z[0] / self.prior_std;
        let r = (self.observation - z[0]) / self.noise_std;
        -0.5 * zp * zp - self.prior_std.ln() - 0.5 * r * r - self.noise_std.ln() - LN_2PI
    }

    fn grad_log_joint(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), 1);
        vec![
            -z[0] / (self.prior_std * self.prior_std)
                + (self.observation - z[0]) / (self.noise_std * self.noise_std),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::finite_difference_gradient;
    use crate::oracle::Quadrature1D;
    use approx::assert_abs_diff_eq;

    #[test]
    fn random_mixture_shape_and_simplex() {
        let mut rng = RngStream::new(3);
        let m = sample_random_mixture(&mut rng, 1.5);
        assert_eq!(m.weights.len(), 5);
        assert_abs_diff_eq!(m.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(m.scales.iter().all(|s| (0.1..=1.0).contains(s)));
    }

    #[test]
    fn random_mixture_density_normalizes() {
        for seed in 0..10 {
            let mut rng = RngStream::new(seed);
            let m = sample_random_mixture(&mut rng, 1.5);
            let quad = Quadrature1D::new(-10.0 + m.window().0.min(0.0), 10.0 + m.window().1.max(0.0), 16_385);
            let mass = quad.integrate(&|z| m.density(z));
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn mixture_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(7);
        let m = sample_random_mixture(&mut rng, 1.5);
        for _ in 0..100 {
            let z = vec![rng.uniform_in(-4.0, 4.0)];
            let analytic = m.grad_log_joint(&z)[0];
            let fd = finite_difference_gradient(|p| m.log_joint(p), &z, 1e-5).unwrap()[0];
            let scale = fd.abs().max(1.0);
            assert!(
                (analytic - fd).abs() / scale < 1e-4,
                "at {z:?}: {analytic} vs {fd}"
            );
        }
    }

    #[test]
    fn conjugate_gradient_matches_finite_differences() {
        let t = GaussianPosteriorTarget::conjugate(1.0, 1.0, 0.4);
        let mut rng = RngStream::new(8);
        for _ in 0..50 {
            let z = vec![rng.uniform_in(-3.0, 3.0)];
            let analytic = t.grad_log_joint(&z)[0];
            let fd = finite_difference_gradient(|p| t.log_joint(p), &z, 1e-5).unwrap()[0];
            assert!((analytic - fd).abs() / fd.abs().max(1.0) < 1e-4);
        }
    }
}
