//! Brute-force ground truth for one-dimensional problems.
//!
//! Everything here is deliberately independent of the sampling-based code
//! paths: quadrature of the transport loss, cell masses, truncated-Gaussian
//! moments and entropy, Lloyd iteration for optimal quantizers, and the
//! closed-form evidence of the conjugate Gaussian model. Higher-dimensional
//! validation relies on property tests instead.

use crate::error::{Result, WvgdError};
use crate::rng::RngStream;

/// Composite Simpson rule on [lower, upper].
#[derive(Debug, Clone, Copy)]
pub struct Quadrature1D {
    pub lower: f64,
    pub upper: f64,
    pub n_nodes: usize,
}

impl Quadrature1D {
    pub fn new(lower: f64, upper: f64, n_nodes: usize) -> Self {
        assert!(lower < upper, "lower bound must be below upper bound");
        assert!(n_nodes >= 64, "need at least 64 nodes");
        Self {
            lower,
            upper,
            n_nodes,
        }
    }

    /// Integral of f over [lower, upper].
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F) -> f64 {
        simpson(f, self.lower, self.upper, self.n_nodes)
    }

    /// Integral of f over [a, b] within the window, using a node count
    /// proportional to the subinterval length (at least 65).
    pub fn integrate_on<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let a = a.max(self.lower);
        let b = b.min(self.upper);
        if a >= b {
            return 0.0;
        }
        let frac = (b - a) / (self.upper - self.lower);
        let n = ((self.n_nodes as f64 * frac).ceil() as usize).max(65);
        simpson(f, a, b, n)
    }

    /// True when doubling the node count moves the integral by < 1e-8.
    pub fn converged<F: Fn(f64) -> f64>(&self, f: &F) -> bool {
        let coarse = self.integrate(f);
        let fine = simpson(f, self.lower, self.upper, 2 * self.n_nodes);
        (coarse - fine).abs() < 1e-8
    }
}

/// Composite Simpson with ~n nodes (rounded up to an even interval count).
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n_nodes: usize) -> f64 {
    let mut intervals = n_nodes.max(2) - 1;
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let x = a + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

/// Cell boundaries of sorted 1D particles under squared Euclidean cost:
/// the midpoints between neighbours.
pub fn cell_boundaries(particles: &[f64]) -> Result<Vec<f64>> {
    if particles.windows(2).any(|w| w[0] >= w[1]) {
        return Err(WvgdError::UnsortedParticles);
    }
    Ok(particles
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .collect())
}

/// Transport loss sum_j int_{L_j} c(z_j, z) p(z) dz by piecewise quadrature.
///
/// Boundaries are the cost midpoints, which for squared Euclidean cost are
/// the arithmetic midpoints of neighbouring particles.
pub fn quadrature_loss<D, C>(
    particles: &[f64],
    density: &D,
    cost: &C,
    quad: &Quadrature1D,
) -> Result<f64>
where
    D: Fn(f64) -> f64,
    C: Fn(f64, f64) -> f64,
{
    let bounds = cell_boundaries(particles)?;
    let mut loss = 0.0;
    for (j, &zj) in particles.iter().enumerate() {
        let lo = if j == 0 { quad.lower } else { bounds[j - 1] };
        let hi = if j == particles.len() - 1 {
            quad.upper
        } else {
            bounds[j]
        };
        loss += quad.integrate_on(&|z| cost(zj, z) * density(z), lo, hi);
    }
    Ok(loss)
}

/// Posterior mass of each cell, int_{L_j} p(z) dz, by quadrature.
pub fn quadrature_cell_masses<D>(
    particles: &[f64],
    density: &D,
    quad: &Quadrature1D,
) -> Result<Vec<f64>>
where
    D: Fn(f64) -> f64,
{
    let bounds = cell_boundaries(particles)?;
    let mut masses = Vec::with_capacity(particles.len());
    for j in 0..particles.len() {
        let lo = if j == 0 { quad.lower } else { bounds[j - 1] };
        let hi = if j == particles.len() - 1 {
            quad.upper
        } else {
            bounds[j]
        };
        masses.push(quad.integrate_on(density, lo, hi));
    }
    Ok(masses)
}

/// Outcome of a Lloyd run: quantizer positions, loss, and the per-iteration
/// loss trace of the winning start.
#[derive(Debug, Clone)]
pub struct LloydResult {
    pub positions: Vec<f64>,
    pub loss: f64,
    pub loss_history: Vec<f64>,
}

/// Optimal N-point quantizer of a 1D density under squared Euclidean cost.
///
/// Alternates midpoint boundaries and conditional-mean centroids until the
/// largest position change drops below 1e-10 or `n_iter` is reached. Eight
/// starts (equal-mass quantiles plus seven seeded random configurations)
/// guard against local minima; the best loss wins.
pub fn lloyd_1d<D>(density: &D, n: usize, n_iter: usize, quad: &Quadrature1D) -> LloydResult
where
    D: Fn(f64) -> f64,
{
    assert!(n >= 1);
    let mut best: Option<LloydResult> = None;
    for start in 0..8u64 {
        let init = if start == 0 {
            quantile_init(density, n, quad)
        } else {
            let mut rng = RngStream::new(0x11_0D_5EED ^ start);
            let mut pts: Vec<f64> = (0..n)
                .map(|_| rng.uniform_in(quad.lower, quad.upper))
                .collect();
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Nudge duplicates apart so boundaries stay well defined.
            for i in 1..pts.len() {
                if pts[i] - pts[i - 1] < 1e-9 {
                    pts[i] = pts[i - 1] + 1e-9;
                }
            }
            pts
        };
        let candidate = lloyd_from(init, density, n_iter, quad);
        if best.as_ref().is_none_or(|b| candidate.loss < b.loss) {
            best = Some(candidate);
        }
    }
    best.expect("at least one Lloyd start")
}

/// Equal-mass quantile positions (the t-th particle at the (t+1/2)/n quantile).
pub fn quantile_init<D>(density: &D, n: usize, quad: &Quadrature1D) -> Vec<f64>
where
    D: Fn(f64) -> f64,
{
    let grid = 4096;
    let h = (quad.upper - quad.lower) / grid as f64;
    let mut cdf = Vec::with_capacity(grid + 1);
    let mut acc = 0.0;
    cdf.push(0.0);
    let mut prev = density(quad.lower);
    for i in 1..=grid {
        let x = quad.lower + i as f64 * h;
        let cur = density(x);
        acc += 0.5 * (prev + cur) * h;
        cdf.push(acc);
        prev = cur;
    }
    let total = acc.max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let target = (t as f64 + 0.5) / n as f64 * total;
        let idx = cdf.partition_point(|&c| c < target).min(grid);
        out.push(quad.lower + idx as f64 * h);
    }
    for i in 1..out.len() {
        if out[i] - out[i - 1] < 1e-9 {
            out[i] = out[i - 1] + 1e-9;
        }
    }
    out
}

fn lloyd_from<D>(mut pts: Vec<f64>, density: &D, n_iter: usize, quad: &Quadrature1D) -> LloydResult
where
    D: Fn(f64) -> f64,
{
    let cost = |a: f64, z: f64| (a - z) * (a - z);
    let mut history = Vec::new();
    for _ in 0..n_iter {
        history.push(quadrature_loss(&pts, density, &cost, quad).expect("sorted"));
        let bounds = cell_boundaries(&pts).expect("sorted");
        let mut moved: f64 = 0.0;
        let mut next = Vec::with_capacity(pts.len());
        for j in 0..pts.len() {
            let lo = if j == 0 { quad.lower } else { bounds[j - 1] };
            let hi = if j == pts.len() - 1 {
                quad.upper
            } else {
                bounds[j]
            };
            let mass = quad.integrate_on(density, lo, hi);
            let first = quad.integrate_on(&|z| z * density(z), lo, hi);
            // An empty cell keeps its particle in place.
            let centroid = if mass > 1e-300 { first / mass } else { pts[j] };
            moved = moved.max((centroid - pts[j]).abs());
            next.push(centroid);
        }
        next.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 1..next.len() {
            if next[i] - next[i - 1] < 1e-9 {
                next[i] = next[i - 1] + 1e-9;
            }
        }
        pts = next;
        if moved < 1e-10 {
            break;
        }
    }
    let loss = quadrature_loss(&pts, density, &cost, quad).expect("sorted");
    history.push(loss);
    LloydResult {
        positions: pts,
        loss,
        loss_history: history,
    }
}

/// Normalizer, mean, variance, and differential entropy of a 1D Gaussian
/// N(mean, std^2) truncated to (a, b), all by quadrature. Infinite bounds
/// are clipped twelve standard deviations out.
pub fn truncated_moments_entropy(
    mean: f64,
    std: f64,
    a: f64,
    b: f64,
) -> Result<(f64, f64, f64, f64)> {
    assert!(std > 0.0 && a < b);
    let lo = a.max(mean - 12.0 * std);
    let hi = b.min(mean + 12.0 * std);
    if lo >= hi {
        return Err(WvgdError::NormalizerUnderflow);
    }
    let quad = Quadrature1D::new(lo, hi, 8193);
    let base = |z: f64| {
        let t = (z - mean) / std;
        (-0.5 * t * t).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
    };
    let z_norm = quad.integrate(&base);
    if z_norm < 1e-300 {
        return Err(WvgdError::NormalizerUnderflow);
    }
    let m1 = quad.integrate(&|z| z * base(z)) / z_norm;
    let m2 = quad.integrate(&|z| z * z * base(z)) / z_norm;
    let var = m2 - m1 * m1;
    let entropy = quad.integrate(&|z| {
        let q = base(z) / z_norm;
        if q > 0.0 {
            -q * q.ln()
        } else {
            0.0
        }
    });
    Ok((z_norm, m1, var, entropy))
}

/// log p(x) for the model z ~ N(0, prior_std^2), x | z ~ N(z, noise_std^2):
/// log N(x; 0, prior_std^2 + noise_std^2).
pub fn conjugate_evidence(prior_std: f64, noise_std: f64, observation: f64) -> f64 {
    assert!(prior_std > 0.0 && noise_std > 0.0);
    let var = prior_std * prior_std + noise_std * noise_std;
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - observation * observation / (2.0 * var)
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

    fn std_quad() -> Quadrature1D {
        Quadrature1D::new(-8.0, 8.0, 4097)
    }

    #[test]
    fn one_particle_loss_is_variance_plus_bias() {
        let quad = std_quad();
        let cost = |a: f64, z: f64| (a - z) * (a - z);
        let loss = quadrature_loss(&[0.0], &std_normal_pdf, &cost, &quad).unwrap();
        assert_abs_diff_eq!(loss, 1.0, epsilon = 1e-8);
        let loss = quadrature_loss(&[0.5], &std_normal_pdf, &cost, &quad).unwrap();
        assert_abs_diff_eq!(loss, 1.25, epsilon = 1e-8);
    }

    #[test]
    fn two_particle_loss_at_lloyd_fixed_point() {
        let quad = std_quad();
        let cost = |a: f64, z: f64| (a - z) * (a - z);
        let loss = quadrature_loss(
            &[-SQRT_2_OVER_PI, SQRT_2_OVER_PI],
            &std_normal_pdf,
            &cost,
            &quad,
        )
        .unwrap();
        assert_abs_diff_eq!(loss, 1.0 - 2.0 / std::f64::consts::PI, epsilon = 1e-6);
    }

    #[test]
    fn unsorted_particles_error() {
        let quad = std_quad();
        let cost = |a: f64, z: f64| (a - z) * (a - z);
        assert!(quadrature_loss(&[1.0, -1.0], &std_normal_pdf, &cost, &quad).is_err());
    }

    #[test]
    fn lloyd_on_standard_normal() {
        let quad = std_quad();
        let r1 = lloyd_1d(&std_normal_pdf, 1, 200, &quad);
        assert_abs_diff_eq!(r1.positions[0], 0.0, epsilon = 1e-9);
        let r2 = lloyd_1d(&std_normal_pdf, 2, 500, &quad);
        assert_abs_diff_eq!(r2.positions[0], -SQRT_2_OVER_PI, epsilon = 1e-5);
        assert_abs_diff_eq!(r2.positions[1], SQRT_2_OVER_PI, epsilon = 1e-5);
    }

    #[test]
    fn lloyd_on_symmetric_bimodal_places_one_particle_per_mode() {
        let quad = Quadrature1D::new(-12.0, 12.0, 8193);
        let density = |z: f64| 0.5 * std_normal_pdf(z + 3.0) + 0.5 * std_normal_pdf(z - 3.0);
        let r = lloyd_1d(&density, 2, 500, &quad);
        assert!((r.positions[0] + 3.0).abs() < 0.5, "{:?}", r.positions);
        assert!((r.positions[1] - 3.0).abs() < 0.5, "{:?}", r.positions);
    }

    #[test]
    fn lloyd_loss_is_monotone_nonincreasing() {
        let quad = std_quad();
        let density = |z: f64| 0.6 * std_normal_pdf(z - 1.0) + 0.4 * std_normal_pdf((z + 2.0) / 0.5) / 0.5;
        let r = lloyd_1d(&density, 3, 200, &quad);
        for w in r.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "history {:?}", r.loss_history);
        }
    }

    #[test]
    fn lloyd_beats_random_configurations() {
        let quad = std_quad();
        let r = lloyd_1d(&std_normal_pdf, 3, 300, &quad);
        let cost = |a: f64, z: f64| (a - z) * (a - z);
        let mut rng = RngStream::new(99);
        for _ in 0..100 {
            let mut pts: Vec<f64> = (0..3).map(|_| rng.uniform_in(-4.0, 4.0)).collect();
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if pts.windows(2).any(|w| w[1] - w[0] < 1e-6) {
                continue;
            }
            let loss = quadrature_loss(&pts, &std_normal_pdf, &cost, &quad).unwrap();
            assert!(r.loss <= loss + 1e-9);
        }
    }

    #[test]
    fn truncated_half_line_matches_closed_forms() {
        let (z, mean, var, entropy) = truncated_moments_entropy(0.0, 1.0, 0.0, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(z, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(mean, SQRT_2_OVER_PI, epsilon = 1e-8);
        // Half-normal variance 1 - 2/pi.
        assert_abs_diff_eq!(var, 1.0 - 2.0 / std::f64::consts::PI, epsilon = 1e-8);
        assert_abs_diff_eq!(entropy, 0.72579, epsilon = 1e-5);
    }

    #[test]
    fn untruncated_recovers_gaussian_moments() {
        let (z, mean, var, entropy) =
            truncated_moments_entropy(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(z, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(
            entropy,
            0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn truncated_entropy_is_symmetric() {
        let (_, _, _, left) = truncated_moments_entropy(0.0, 1.0, f64::NEG_INFINITY, 0.0).unwrap();
        let (_, _, _, right) = truncated_moments_entropy(0.0, 1.0, 0.0, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(left, right, epsilon = 1e-10);
    }

    #[test]
    fn conjugate_evidence_closed_form() {
        // log N(0.4; 0, 2) with variance 2.
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln() - 0.4 * 0.4 / 4.0;
        assert_abs_diff_eq!(conjugate_evidence(1.0, 1.0, 0.4), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(conjugate_evidence(1.0, 1.0, 0.4), -1.305_512, epsilon = 1e-6);
        // Quadrature cross-check of the same evidence.
        let quad = Quadrature1D::new(-10.0, 10.0, 8193);
        let joint = |z: f64| std_normal_pdf(z) * std_normal_pdf(0.4 - z);
        let evidence = quad.integrate(&joint).ln();
        assert_abs_diff_eq!(conjugate_evidence(1.0, 1.0, 0.4), evidence, epsilon = 1e-9);
    }

    #[test]
    fn evidence_is_maximized_at_zero_and_monotone_in_magnitude() {
        let at = |x: f64| conjugate_evidence(1.0, 1.0, x);
        assert!(at(0.0) > at(0.3));
        assert!(at(0.3) > at(0.8));
        assert!(at(-0.3) > at(-0.8));
        assert_abs_diff_eq!(at(0.5), at(-0.5), epsilon = 1e-14);
    }

    #[test]
    fn quadrature_stability_under_node_doubling() {
        let quad = std_quad();
        assert!(quad.converged(&std_normal_pdf));
        assert!(quad.converged(&|z: f64| z * z * std_normal_pdf(z)));
    }
}
