//! Density scoring for the method comparison: the continuous approximation
//! of each method against the ground-truth density in squared error.

use crate::dynamics::WvgdState;
use crate::tessellation::WeightEstimate;
use statrs::distribution::{ContinuousCDF, Normal};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Uniform evaluation grid over a window.
#[derive(Debug, Clone)]
pub struct Grid {
    pub nodes: Vec<f64>,
    step: f64,
}

impl Grid {
    pub fn new(lower: f64, upper: f64, n: usize) -> Self {
        assert!(lower < upper && n >= 2);
        let step = (upper - lower) / (n - 1) as f64;
        Self {
            nodes: (0..n).map(|i| lower + i as f64 * step).collect(),
            step,
        }
    }

    /// Default scoring grid: 2048 uniform nodes.
    pub fn scoring(lower: f64, upper: f64) -> Self {
        Self::new(lower, upper, 2048)
    }
}

/// int (f - g)^2 dz by the trapezoid rule on the grid.
pub fn l2_error<F, G>(f: &F, g: &G, grid: &Grid) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let sq: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&z| {
            let d = f(z) - g(z);
            d * d
        })
        .collect();
    let mut acc = 0.0;
    for w in sq.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * grid.step;
    }
    acc
}

/// The ensemble's continuous approximation at z (one-dimensional):
/// sum_j beta_j I_j(z) q(z; theta_j) / Z_j, with Z_j computed exactly from
/// the cell interval via the Gaussian CDF.
pub fn wvgd_density(state: &WvgdState, weights: &WeightEstimate, z: f64) -> f64 {
    assert_eq!(state.ensemble.dim(), 1, "density scoring is one-dimensional");
    let n = state.ensemble.len();
    // Cells of sorted 1D particles are intervals between midpoints; find the
    // owner of z by argmin of squared distance, lowest index on ties.
    let mut owner = 0;
    let mut best = f64::INFINITY;
    for j in 0..n {
        let d = (state.ensemble.position(j)[0] - z).abs();
        if d < best {
            best = d;
            owner = j;
        }
    }
    let beta = weights.weights[owner];
    if beta <= 0.0 {
        return 0.0;
    }
    let component = &state.components[owner];
    let mean = component.mean[0];
    let std = component.log_std[0].exp();
    // Interval of the owner's cell.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let zj = state.ensemble.position(owner)[0];
    for k in 0..n {
        if k == owner {
            continue;
        }
        let zk = state.ensemble.position(k)[0];
        let mid = 0.5 * (zj + zk);
        if zk < zj {
            lo = lo.max(mid);
        } else {
            hi = hi.min(mid);
        }
    }
    let normal = Normal::new(mean, std).expect("positive std");
    let z_cell = normal.cdf(hi.min(mean + 40.0 * std)) - normal.cdf(lo.max(mean - 40.0 * std));
    if z_cell <= 0.0 {
        return 0.0;
    }
    let t = (z - mean) / std;
    let base = (-0.5 * t * t - std.ln() - 0.5 * LN_2PI).exp();
    beta * base / z_cell
}

/// Gaussian kernel density estimate (1/N) sum_i N(z; z_i, bandwidth^2).
pub fn kde_density(particles: &[f64], bandwidth: f64, z: f64) -> f64 {
    assert!(bandwidth > 0.0);
    let n = particles.len() as f64;
    particles
        .iter()
        .map(|zi| {
            let t = (z - zi) / bandwidth;
            (-0.5 * t * t - bandwidth.ln() - 0.5 * LN_2PI).exp()
        })
        .sum::<f64>()
        / n
}

/// Golden-section search for the KDE bandwidth minimizing the squared error
/// against the true density over the grid. Searches [1e-3, 10] to a 1e-4
/// tolerance; degenerate (coincident) particles fall back to 1e-3.
pub fn fit_kde_bandwidth<F>(particles: &[f64], true_density: &F, grid: &Grid) -> f64
where
    F: Fn(f64) -> f64,
{
    assert!(particles.len() >= 2, "need at least two particles");
    let spread = particles
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        - particles.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 0.0 {
        return 1e-3;
    }
    let objective =
        |bw: f64| l2_error(&|z| kde_density(particles, bw, z), true_density, grid);
    golden_section(&objective, 1e-3, 10.0, 1e-4)
}

/// Golden-section minimization of a unimodal objective on [lo, hi].
fn golden_section<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::SquaredEuclidean;
    use crate::dynamics;
    use crate::ensemble::ParticleEnsemble;
    use crate::oracle::std_normal_pdf;
    use crate::rng::RngStream;
    use crate::targets::GaussianMixtureTarget;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn kde_integrates_to_one() {
        let particles = vec![-1.0, 0.3, 2.0];
        let grid = Grid::new(-12.0, 12.0, 1 << 15);
        let total = l2_like_integral(&|z| kde_density(&particles, 0.5, z), &grid);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }

    fn l2_like_integral<F: Fn(f64) -> f64>(f: &F, grid: &Grid) -> f64 {
        let vals: Vec<f64> = grid.nodes.iter().map(|&z| f(z)).collect();
        let mut acc = 0.0;
        for w in vals.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * grid.step;
        }
        acc
    }

    #[test]
    fn single_particle_kde_is_one_gaussian_bump() {
        let pdf_at_center = kde_density(&[1.5], 0.4, 1.5);
        assert_abs_diff_eq!(
            pdf_at_center,
            1.0 / (0.4 * (2.0 * std::f64::consts::PI).sqrt()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn symmetric_particles_give_symmetric_density() {
        let particles = vec![-2.0, -0.5, 0.5, 2.0];
        for z in [0.1, 0.7, 1.9] {
            assert_abs_diff_eq!(
                kde_density(&particles, 0.6, z),
                kde_density(&particles, 0.6, -z),
                epsilon = 1e-14
            );
        }
    }

    fn converged_state_on_standard_normal() -> (WvgdState, crate::tessellation::WeightEstimate) {
        let target = GaussianMixtureTarget::standard_normal();
        let cost = SquaredEuclidean;
        let ensemble =
            ParticleEnsemble::uniform(vec![vec![-0.6], vec![0.6]]).unwrap();
        let state = WvgdState::new(ensemble, 0.05, Some(500.0), 0.05, 256);
        let (state, _) =
            dynamics::run(state, &target, &cost, 1000, &RngStream::new(51), None).unwrap();
        let weights = state.weights.clone();
        (state, weights)
    }

    #[test]
    fn wvgd_density_integrates_to_one() {
        let (state, weights) = converged_state_on_standard_normal();
        let grid = Grid::new(-9.0, 9.0, 1 << 14);
        let total = l2_like_integral(&|z| wvgd_density(&state, &weights, z), &grid);
        assert_abs_diff_eq!(total, 1.0, epsilon = 0.02);
    }

    #[test]
    fn single_component_state_reduces_to_one_gaussian() {
        let ensemble = ParticleEnsemble::uniform(vec![vec![0.0]]).unwrap();
        let mut state = WvgdState::new(ensemble, 0.05, None, 0.05, 128);
        state.components[0].mean = vec![0.3];
        state.components[0].log_std = vec![(0.8f64).ln()];
        let weights = crate::tessellation::WeightEstimate {
            weights: vec![1.0],
            ess: vec![128.0],
            n_samples: 128,
        };
        for z in [-1.0, 0.0, 0.4, 2.0] {
            let t: f64 = (z - 0.3) / 0.8;
            let expected = (-0.5 * t * t).exp() / (0.8 * (2.0 * std::f64::consts::PI).sqrt());
            assert_abs_diff_eq!(wvgd_density(&state, &weights, z), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn fitted_bandwidth_beats_bracket_endpoints() {
        let mut rng = RngStream::new(61);
        let particles: Vec<f64> = (0..40).map(|_| rng.standard_normal()).collect();
        let grid = Grid::scoring(-9.0, 9.0);
        let bw = fit_kde_bandwidth(&particles, &std_normal_pdf, &grid);
        let err = |b: f64| l2_error(&|z| kde_density(&particles, b, z), &std_normal_pdf, &grid);
        assert!(err(bw) <= err(1e-3));
        assert!(err(bw) <= err(10.0));
    }

    #[test]
    fn grid_scan_agrees_with_golden_section() {
        let mut rng = RngStream::new(62);
        let particles: Vec<f64> = (0..30).map(|_| rng.standard_normal()).collect();
        let grid = Grid::scoring(-9.0, 9.0);
        let bw = fit_kde_bandwidth(&particles, &std_normal_pdf, &grid);
        let err = |b: f64| l2_error(&|z| kde_density(&particles, b, z), &std_normal_pdf, &grid);
        // 20-point log-spaced scan.
        let mut best_scan = f64::INFINITY;
        for i in 0..20 {
            let b = 1e-3 * (10.0f64 / 1e-3).powf(i as f64 / 19.0);
            best_scan = best_scan.min(err(b));
        }
        assert!(err(bw) <= best_scan * 1.05);
    }

    #[test]
    fn kde_error_decreases_with_more_exact_samples() {
        let grid = Grid::scoring(-9.0, 9.0);
        let mut errors = Vec::new();
        for (seed, n) in [(70u64, 20usize), (71, 200), (72, 2000)] {
            let mut rng = RngStream::new(seed);
            let particles: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let bw = fit_kde_bandwidth(&particles, &std_normal_pdf, &grid);
            errors.push(l2_error(
                &|z| kde_density(&particles, bw, z),
                &std_normal_pdf,
                &grid,
            ));
        }
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    }

    proptest! {
        #[test]
        fn l2_error_is_nonnegative_symmetric_and_zero_on_self(
            shift in -2.0f64..2.0,
            scale in 0.5f64..2.0,
        ) {
            let grid = Grid::scoring(-10.0, 10.0);
            let f = move |z: f64| std_normal_pdf((z - shift) / scale) / scale;
            let g = std_normal_pdf;
            let fg = l2_error(&f, &g, &grid);
            let gf = l2_error(&g, &f, &grid);
            prop_assert!(fg >= 0.0);
            prop_assert!((fg - gf).abs() < 1e-12);
            prop_assert!(l2_error(&f, &f, &grid) == 0.0);
        }
    }
}
