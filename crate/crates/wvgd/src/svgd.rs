//! Stein variational gradient descent baseline with the median-based
//! adaptive bandwidth.

use crate::error::{Result, WvgdError};
use crate::model::TargetModel;

/// Kernel bandwidth policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthMode {
    /// md^2 / ln N with md the median pairwise distance, refreshed every
    /// step.
    AdaptiveMedian,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct SvgdState {
    pub particles: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub bandwidth_mode: BandwidthMode,
    pub step: usize,
    /// Decay timescale for the learning rate; `None` keeps it constant.
    pub tau: Option<f64>,
}

impl SvgdState {
    pub fn new(particles: Vec<Vec<f64>>, learning_rate: f64) -> Self {
        assert!(!particles.is_empty());
        assert!(learning_rate > 0.0);
        Self {
            particles,
            learning_rate,
            bandwidth_mode: BandwidthMode::AdaptiveMedian,
            step: 0,
            tau: None,
        }
    }

    fn effective_lr(&self) -> f64 {
        match self.tau {
            Some(tau) => self.learning_rate / (1.0 + self.step as f64 / tau),
            None => self.learning_rate,
        }
    }
}

/// Median pairwise distance squared over ln N; falls back to 1e-3 when all
/// particles coincide. Uses the natural logarithm.
pub fn median_bandwidth(particles: &[Vec<f64>]) -> Result<f64> {
    let n = particles.len();
    if n < 2 {
        return Err(WvgdError::EmptyEnsemble);
    }
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = particles[i]
                .iter()
                .zip(&particles[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            distances.push(d2.sqrt());
        }
    }
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = distances.len();
    let md = if m % 2 == 1 {
        distances[m / 2]
    } else {
        0.5 * (distances[m / 2 - 1] + distances[m / 2])
    };
    if md == 0.0 {
        return Ok(1e-3);
    }
    Ok(md * md / (n as f64).ln())
}

/// Gaussian kernel exp(-||a - b||^2 / bw), no factor of two in the exponent.
fn kernel(a: &[f64], b: &[f64], bw: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / bw).exp()
}

/// One SVGD update:
/// z_i <- z_i + lr * (1/N) sum_j [k(z_j, z_i) grad log p(z_j) + grad_{z_j} k(z_j, z_i)].
/// The single-particle case reduces to plain gradient ascent on the log
/// joint.
pub fn svgd_step(state: &SvgdState, target: &dyn TargetModel) -> Result<SvgdState> {
    let n = state.particles.len();
    let d = state.particles[0].len();
    let lr = state.effective_lr();
    let mut next = state.clone();

    if n == 1 {
        let grad = target.grad_log_joint(&state.particles[0]);
        for (zk, gk) in next.particles[0].iter_mut().zip(&grad) {
            *zk += lr * gk;
            if !zk.is_finite() {
                return Err(WvgdError::NonFinite {
                    context: "single-particle update".into(),
                });
            }
        }
        next.step += 1;
        return Ok(next);
    }

    let bw = match state.bandwidth_mode {
        BandwidthMode::AdaptiveMedian => median_bandwidth(&state.particles)?,
        BandwidthMode::Fixed(b) => b,
    };
    let grads: Vec<Vec<f64>> = state
        .particles
        .iter()
        .map(|z| target.grad_log_joint(z))
        .collect();
    for i in 0..n {
        let mut phi = vec![0.0; d];
        for j in 0..n {
            let k = kernel(&state.particles[j], &state.particles[i], bw);
            for h in 0..d {
                // grad_{z_j} k(z_j, z_i) = -2 (z_j - z_i) k / bw.
                let grad_k = -2.0 * (state.particles[j][h] - state.particles[i][h]) * k / bw;
                phi[h] += k * grads[j][h] + grad_k;
            }
        }
        for h in 0..d {
            next.particles[i][h] += lr * phi[h] / n as f64;
            if !next.particles[i][h].is_finite() {
                return Err(WvgdError::NonFinite {
                    context: format!("svgd update of particle {i}"),
                });
            }
        }
    }
    next.step += 1;
    Ok(next)
}

/// Runs n_steps of SVGD.
pub fn run(state: SvgdState, target: &dyn TargetModel, n_steps: usize) -> Result<SvgdState> {
    let mut state = state;
    for _ in 0..n_steps {
        state = svgd_step(&state, target)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::targets::GaussianMixtureTarget;
    use approx::assert_abs_diff_eq;

    #[test]
    fn median_bandwidth_on_three_points() {
        // Pairwise distances {1, 1, 2}: median 1, bw = 1 / ln 3.
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let bw = median_bandwidth(&pts).unwrap();
        assert_abs_diff_eq!(bw, 1.0 / 3.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(bw, 0.9102, epsilon = 1e-4);
    }

    #[test]
    fn coincident_particles_fall_back() {
        let pts = vec![vec![1.0], vec![1.0], vec![1.0]];
        assert_eq!(median_bandwidth(&pts).unwrap(), 1e-3);
    }

    #[test]
    fn bandwidth_scales_quadratically() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.5]];
        let scaled: Vec<Vec<f64>> = pts.iter().map(|p| vec![3.0 * p[0]]).collect();
        let bw = median_bandwidth(&pts).unwrap();
        let bw_scaled = median_bandwidth(&scaled).unwrap();
        assert_abs_diff_eq!(bw_scaled, 9.0 * bw, epsilon = 1e-12);
    }

    #[test]
    fn single_particle_errors_for_bandwidth() {
        assert!(median_bandwidth(&[vec![0.0]]).is_err());
    }

    #[test]
    fn kernel_is_symmetric_with_antisymmetric_gradient() {
        let a = vec![0.3, -0.7];
        let b = vec![1.1, 0.4];
        let bw = 0.8;
        assert_abs_diff_eq!(kernel(&a, &b, bw), kernel(&b, &a, bw), epsilon = 1e-15);
        let k = kernel(&a, &b, bw);
        for h in 0..2 {
            let grad_a = -2.0 * (a[h] - b[h]) * k / bw;
            let grad_b = -2.0 * (b[h] - a[h]) * k / bw;
            assert_abs_diff_eq!(grad_a, -grad_b, epsilon = 1e-15);
        }
    }

    #[test]
    fn one_particle_svgd_is_gradient_ascent_bitwise() {
        let target = GaussianMixtureTarget::standard_normal();
        let mut svgd = SvgdState::new(vec![vec![1.7]], 0.05);
        let mut plain = vec![1.7];
        for _ in 0..50 {
            svgd = svgd_step(&svgd, &target).unwrap();
            let g = target.grad_log_joint(&plain);
            plain[0] += 0.05 * g[0];
            assert_eq!(svgd.particles[0][0], plain[0]);
        }
    }

    #[test]
    fn mean_update_equals_mean_attraction() {
        // Repulsion cancels in the mean for translation-equivariant kernels;
        // checked with two coincident-in-pair particles.
        let target = GaussianMixtureTarget::standard_normal();
        let state = SvgdState {
            particles: vec![vec![-0.6], vec![0.9]],
            learning_rate: 0.1,
            bandwidth_mode: BandwidthMode::Fixed(0.7),
            step: 0,
            tau: None,
        };
        let next = svgd_step(&state, &target).unwrap();
        let mean_before = (state.particles[0][0] + state.particles[1][0]) / 2.0;
        let mean_after = (next.particles[0][0] + next.particles[1][0]) / 2.0;
        // Mean attraction term: (1/N^2) sum_i sum_j k(z_j, z_i) grad log p(z_j).
        let bw = 0.7;
        let mut attraction = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                attraction += kernel(&state.particles[j], &state.particles[i], bw)
                    * target.grad_log_joint(&state.particles[j])[0];
            }
        }
        attraction /= 4.0;
        assert_abs_diff_eq!(mean_after - mean_before, 0.1 * attraction, epsilon = 1e-12);
    }

    #[test]
    fn converged_ensemble_matches_standard_normal_moments() {
        let target = GaussianMixtureTarget::standard_normal();
        let mut rng = RngStream::new(31);
        let particles: Vec<Vec<f64>> = (0..20).map(|_| vec![2.0 * rng.standard_normal()]).collect();
        let mut state = SvgdState::new(particles, 0.3);
        state.tau = Some(1000.0);
        let state = run(state, &target, 2000).unwrap();
        let n = state.particles.len() as f64;
        let mean: f64 = state.particles.iter().map(|p| p[0]).sum::<f64>() / n;
        let var: f64 = state
            .particles
            .iter()
            .map(|p| (p[0] - mean) * (p[0] - mean))
            .sum::<f64>()
            / (n - 1.0);
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.15, "std {}", var.sqrt());
    }
}
