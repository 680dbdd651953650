//! Cost-induced tessellation of the latent space.
//!
//! Cell j collects every point whose transport cost to particle j is
//! minimal; under squared Euclidean cost these are the Voronoi regions of
//! the particles. Membership is a brute-force argmin over the N particles —
//! no cell geometry is ever constructed.

use crate::cost::CostFunction;
use crate::ensemble::ParticleEnsemble;
use crate::error::{Result, WvgdError};
use crate::model::TargetModel;
use crate::rng::RngStream;
use crate::varfit::VariationalComponent;
use serde::Serialize;

/// A particle ensemble paired with the cost that induces its cells.
pub struct Tessellation<'a> {
    ensemble: &'a ParticleEnsemble,
    cost: &'a dyn CostFunction,
}

/// Self-normalized importance-sampling estimate of the cell masses.
#[derive(Debug, Clone, Serialize)]
pub struct WeightEstimate {
    /// Estimated beta_j; nonnegative, sums to 1.
    pub weights: Vec<f64>,
    /// Effective sample size of the importance weights in each cell.
    pub ess: Vec<f64>,
    /// Samples drawn per cell.
    pub n_samples: usize,
}

impl<'a> Tessellation<'a> {
    pub fn new(ensemble: &'a ParticleEnsemble, cost: &'a dyn CostFunction) -> Self {
        Self { ensemble, cost }
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        self.ensemble
    }

    pub fn cost(&self) -> &dyn CostFunction {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.ensemble.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }

    /// Index of the cell containing z: argmin_j c(z^j, z), lowest index on
    /// exact ties.
    pub fn assign_cell(&self, z: &[f64]) -> usize {
        let mut best = 0;
        let mut best_cost = self.cost.evaluate(self.ensemble.position(0), z);
        for j in 1..self.ensemble.len() {
            let c = self.cost.evaluate(self.ensemble.position(j), z);
            if c < best_cost {
                best = j;
                best_cost = c;
            }
        }
        best
    }

    /// log of the unnormalized density restricted to cell j:
    /// log_joint(z) when z lies in cell j, -inf otherwise. The 1/beta_j
    /// constant is omitted; only ratios and in-cell expectations are ever
    /// taken.
    pub fn restricted_log_density(&self, target: &dyn TargetModel, j: usize, z: &[f64]) -> f64 {
        assert!(j < self.ensemble.len(), "cell index out of range");
        if self.assign_cell(z) == j {
            target.log_joint(z)
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Estimates the optimal weights beta_j = int_{L_j} p(z|x) dz (up to the
    /// shared evidence constant) by self-normalized importance sampling with
    /// one truncated proposal per cell.
    ///
    /// Draws `n_samples` from each proposal; the per-cell unnormalized mass
    /// is hat(Z)_j * mean_m exp(log_joint - log q_base), with hat(Z)_j the
    /// empirical acceptance rate. Weights are normalized across cells.
    pub fn estimate_weights(
        &self,
        target: &dyn TargetModel,
        proposals: &[VariationalComponent],
        n_samples: usize,
        rng: &RngStream,
    ) -> Result<WeightEstimate> {
        assert!(n_samples >= 100, "need at least 100 samples per cell");
        assert_eq!(proposals.len(), self.ensemble.len());
        let n = self.ensemble.len();
        if n == 1 {
            return Ok(WeightEstimate {
                weights: vec![1.0],
                ess: vec![n_samples as f64],
                n_samples,
            });
        }

        let mut log_mass = Vec::with_capacity(n);
        let mut ess = Vec::with_capacity(n);
        for (j, component) in proposals.iter().enumerate() {
            assert_eq!(component.cell_index, j, "proposal {j} fitted to wrong cell");
            let proposal = component.defensive();
            let mut cell_rng = rng.substream(j as u64);
            let batch = proposal.sample(self, n_samples, &mut cell_rng)?;
            // log alpha_m up to the constant log Z_j, which is reinstated
            // through the acceptance rate below.
            let log_alpha: Vec<f64> = batch
                .points
                .iter()
                .map(|z| target.log_joint(z) - proposal.base_log_density(z))
                .collect();
            let max = log_alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(WvgdError::StarvedCell { cell: j });
            }
            let scaled: Vec<f64> = log_alpha.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = scaled.iter().sum();
            let sum_sq: f64 = scaled.iter().map(|a| a * a).sum();
            ess.push(sum * sum / sum_sq);
            log_mass.push(
                batch.acceptance_rate.ln() + max + (sum / batch.points.len() as f64).ln(),
            );
        }

        let max = log_mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = log_mass.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        let weights: Vec<f64> = unnorm.iter().map(|m| m / total).collect();
        Ok(WeightEstimate {
            weights,
            ess,
            n_samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::SquaredEuclidean;
    use crate::oracle::{quadrature_cell_masses, std_normal_pdf, Quadrature1D};
    use crate::targets::GaussianMixtureTarget;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ensemble_1d(xs: &[f64]) -> ParticleEnsemble {
        ParticleEnsemble::uniform(xs.iter().map(|x| vec![*x]).collect()).unwrap()
    }

    #[test]
    fn assigns_nearer_particle() {
        let e = ensemble_1d(&[-1.0, 1.0]);
        let cost = SquaredEuclidean;
        let t = Tessellation::new(&e, &cost);
        assert_eq!(t.assign_cell(&[0.2]), 1);
    }

    #[test]
    fn tie_broken_by_lowest_index() {
        let e = ensemble_1d(&[-1.0, 1.0]);
        let cost = SquaredEuclidean;
        let t = Tessellation::new(&e, &cost);
        assert_eq!(t.assign_cell(&[0.0]), 0);
    }

    #[test]
    fn three_particle_brute_force_case() {
        let e = ParticleEnsemble::uniform(vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0]])
            .unwrap();
        let cost = SquaredEuclidean;
        let t = Tessellation::new(&e, &cost);
        // Squared distances from (2,2): 8, 5, 5 -> tie between 1 and 2 -> 1.
        assert_eq!(t.assign_cell(&[2.0, 2.0]), 1);
    }

    #[test]
    fn restricted_density_matches_indicator() {
        let e = ensemble_1d(&[0.0, 2.0]);
        let cost = SquaredEuclidean;
        let t = Tessellation::new(&e, &cost);
        let target = GaussianMixtureTarget::standard_normal();
        // z = 0.5 lies in cell 0 (boundary at 1).
        let expected = -0.5 * 0.5 * 0.5 - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_abs_diff_eq!(
            t.restricted_log_density(&target, 0, &[0.5]),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expected, -1.0439, epsilon = 1e-4);
        assert_eq!(
            t.restricted_log_density(&target, 1, &[0.5]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn single_cell_weight_is_exactly_one() {
        let e = ensemble_1d(&[0.3]);
        let cost = SquaredEuclidean;
        let t = Tessellation::new(&e, &cost);
        let target = GaussianMixtureTarget::standard_normal();
        let proposals = vec![VariationalComponent::centered(&[0.3], 0)];
        let w = t
            .estimate_weights(&target, &proposals, 256, &RngStream::new(5))
            .unwrap();
        assert_eq!(w.weights, vec![1.0]);
    }

    #[test]
    fn symmetric_particles_split_mass_evenly() {
        let e = ensemble_1d(&[-1.0, 1.0]);
        let cost = SquaredEuclidean;
        let t = Tessellation::new(&e, &cost);
        let target = GaussianMixtureTarget::standard_normal();
        let proposals = vec![
            VariationalComponent::centered(&[-1.0], 0),
            VariationalComponent::centered(&[1.0], 1),
        ];
        let w = t
            .estimate_weights(&target, &proposals, 4000, &RngStream::new(17))
            .unwrap();
        assert_abs_diff_eq!(w.weights[0], 0.5, epsilon = 0.02);
        assert_abs_diff_eq!(w.weights[1], 0.5, epsilon = 0.02);
        assert_abs_diff_eq!(w.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_masses_match_gaussian_cdf() {
        // Particles at 0 and 2: boundary at 1, masses Phi(1) and 1 - Phi(1).
        let e = ensemble_1d(&[0.0, 2.0]);
        let cost = SquaredEuclidean;
        let t = Tessellation::new(&e, &cost);
        let target = GaussianMixtureTarget::standard_normal();
        let proposals = vec![
            VariationalComponent::centered(&[0.0], 0),
            VariationalComponent::centered(&[2.0], 1),
        ];
        let w = t
            .estimate_weights(&target, &proposals, 8000, &RngStream::new(23))
            .unwrap();
        assert_abs_diff_eq!(w.weights[0], 0.8413, epsilon = 0.02);
        assert_abs_diff_eq!(w.weights[1], 0.1587, epsilon = 0.02);

        // Quadrature oracle agrees on the cell masses.
        let quad = Quadrature1D::new(-8.0, 8.0, 4097);
        let masses = quadrature_cell_masses(&[0.0, 2.0], &std_normal_pdf, &quad).unwrap();
        assert_abs_diff_eq!(masses[0], 0.8413, epsilon = 1e-4);
    }

    proptest! {
        #[test]
        fn partition_of_unity(zs in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
            let e = ensemble_1d(&[-2.0, -0.5, 0.1, 3.0]);
            let cost = SquaredEuclidean;
            let t = Tessellation::new(&e, &cost);
            for z in zs {
                let hits: usize = (0..4)
                    .filter(|&j| t.assign_cell(&[z]) == j)
                    .count();
                prop_assert_eq!(hits, 1);
            }
        }

        #[test]
        fn membership_invariant_under_cost_scaling(
            z0 in -5.0f64..5.0,
            z1 in -5.0f64..5.0,
            scale in 1e-3f64..1e3,
        ) {
            struct Scaled(f64);
            impl CostFunction for Scaled {
                fn evaluate(&self, a: &[f64], b: &[f64]) -> f64 {
                    self.0 * SquaredEuclidean.evaluate(a, b)
                }
                fn grad_first(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
                    SquaredEuclidean.grad_first(a, b).iter().map(|g| self.0 * g).collect()
                }
            }
            let e = ensemble_1d(&[-1.5, 0.2, 2.7]);
            let plain = SquaredEuclidean;
            let scaled = Scaled(scale);
            let t_plain = Tessellation::new(&e, &plain);
            let t_scaled = Tessellation::new(&e, &scaled);
            prop_assert_eq!(t_plain.assign_cell(&[z0]), t_scaled.assign_cell(&[z0]));
            prop_assert_eq!(t_plain.assign_cell(&[z1]), t_scaled.assign_cell(&[z1]));
        }
    }
}
