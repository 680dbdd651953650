//! The particle update: importance-sampled transport gradients and the
//! coupled particle / component descent loop.
//!
//! Each step draws M samples from every component, forms the self-normalized
//! importance estimate of E_{p_j}[grad_1 c(z_j, z)], moves the particles
//! against it, then gives every component one KL descent step against its
//! freshly moved cell. Cell masses are re-estimated every
//! `weight_refresh_every` steps and feed only the loss diagnostic, never the
//! update itself.

use crate::cost::CostFunction;
use crate::ensemble::{ParticleEnsemble, COINCIDENCE_EPS};
use crate::error::{Result, WvgdError};
use crate::model::TargetModel;
use crate::rng::RngStream;
use crate::tessellation::{Tessellation, WeightEstimate};
use crate::varfit::VariationalComponent;
use serde::Serialize;

/// Mutable state of one WVGD run.
#[derive(Debug, Clone)]
pub struct WvgdState {
    pub ensemble: ParticleEnsemble,
    pub components: Vec<VariationalComponent>,
    /// Latest cell-mass estimate; uniform until the first refresh.
    pub weights: WeightEstimate,
    pub step: usize,
    /// Base particle learning rate lambda_0.
    pub lambda: f64,
    /// Decay timescale: effective rate is lambda_0 / (1 + t / tau).
    /// `None` keeps the rate constant.
    pub tau: Option<f64>,
    /// Component (inner) learning rate epsilon.
    pub inner_lr: f64,
    /// Samples per particle per step, M.
    pub samples_per_step: usize,
    /// Steps between cell-mass refreshes.
    pub weight_refresh_every: usize,
    /// Samples per cell for each refresh.
    pub weight_samples: usize,
}

impl WvgdState {
    /// Fresh state with components centered on the particles and uniform
    /// weights.
    pub fn new(
        ensemble: ParticleEnsemble,
        lambda: f64,
        tau: Option<f64>,
        inner_lr: f64,
        samples_per_step: usize,
    ) -> Self {
        assert!(lambda > 0.0 && inner_lr > 0.0 && samples_per_step >= 1);
        let n = ensemble.len();
        let components = (0..n)
            .map(|j| VariationalComponent::centered(ensemble.position(j), j))
            .collect();
        let weights = WeightEstimate {
            weights: ensemble.weights().to_vec(),
            ess: vec![0.0; n],
            n_samples: 0,
        };
        Self {
            ensemble,
            components,
            weights,
            step: 0,
            lambda,
            tau,
            inner_lr,
            samples_per_step,
            weight_refresh_every: 25,
            weight_samples: 512,
        }
    }

    fn decay(&self) -> f64 {
        match self.tau {
            Some(tau) => 1.0 / (1.0 + self.step as f64 / tau),
            None => 1.0,
        }
    }

    /// Particle learning rate at the current step.
    pub fn effective_lambda(&self) -> f64 {
        self.lambda * self.decay()
    }

    /// Component learning rate at the current step.
    pub fn effective_inner_lr(&self) -> f64 {
        self.inner_lr * self.decay()
    }

    fn check_components(&self) {
        for (j, c) in self.components.iter().enumerate() {
            assert_eq!(c.cell_index, j, "component {j} bound to wrong cell");
        }
    }
}

/// Self-normalized gradient estimate for every particle, with Monte Carlo
/// standard errors, effective sample sizes, and the loss diagnostic.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub per_particle_grads: Vec<Vec<f64>>,
    pub per_particle_se: Vec<Vec<f64>>,
    pub per_particle_ess: Vec<f64>,
    /// sum_j beta_j E_{p_j}[c(z_j, z)] under the latest weight estimate.
    pub loss_estimate: f64,
}

/// One trajectory row per (step, particle).
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub particle: usize,
    pub coords: Vec<f64>,
    pub loss_estimate: f64,
    pub ess: f64,
}

/// Estimates the transport gradient of every particle:
/// (1/A_j) sum_m alpha_m grad_1 c(z_j, zeta_m) with zeta_m drawn from
/// component j and alpha_m = exp(log_joint - log q_base). The per-cell
/// constants Z_j and beta_j cancel in the self-normalization.
pub fn estimate_gradient(
    state: &WvgdState,
    target: &dyn TargetModel,
    cost: &dyn CostFunction,
    rng: &RngStream,
) -> Result<GradientEstimate> {
    state.check_components();
    let n = state.ensemble.len();
    let d = state.ensemble.dim();
    let tessellation = Tessellation::new(&state.ensemble, cost);
    let mut grads = Vec::with_capacity(n);
    let mut ses = Vec::with_capacity(n);
    let mut esses = Vec::with_capacity(n);
    let mut loss = 0.0;
    for j in 0..n {
        let mut particle_rng = rng.substream(j as u64);
        let proposal = state.components[j].defensive();
        let batch = proposal.sample(&tessellation, state.samples_per_step, &mut particle_rng)?;
        let log_alpha: Vec<f64> = batch
            .points
            .iter()
            .map(|z| target.log_joint(z) - proposal.base_log_density(z))
            .collect();
        let max = log_alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(WvgdError::ZeroNormalization { particle: j });
        }
        let alpha: Vec<f64> = log_alpha.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = alpha.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(WvgdError::ZeroNormalization { particle: j });
        }
        let weights: Vec<f64> = alpha.iter().map(|a| a / total).collect();
        let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
        esses.push(1.0 / sum_sq);

        let sample_grads: Vec<Vec<f64>> = batch
            .points
            .iter()
            .map(|z| cost.grad_first(state.ensemble.position(j), z))
            .collect();
        let mut grad = vec![0.0; d];
        for (w, g) in weights.iter().zip(&sample_grads) {
            for (acc, gk) in grad.iter_mut().zip(g) {
                *acc += w * gk;
            }
        }
        // Delta-method standard error of the self-normalized estimator.
        let mut se = vec![0.0; d];
        for (w, g) in weights.iter().zip(&sample_grads) {
            for k in 0..d {
                let dev = g[k] - grad[k];
                se[k] += w * w * dev * dev;
            }
        }
        for s in se.iter_mut() {
            *s = s.sqrt();
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(WvgdError::NonFinite {
                context: format!("gradient of particle {j}"),
            });
        }
        let mean_cost: f64 = weights
            .iter()
            .zip(&batch.points)
            .map(|(w, z)| w * cost.evaluate(state.ensemble.position(j), z))
            .sum();
        loss += state.weights.weights[j] * mean_cost;
        grads.push(grad);
        ses.push(se);
    }
    Ok(GradientEstimate {
        per_particle_grads: grads,
        per_particle_se: ses,
        per_particle_ess: esses,
        loss_estimate: loss,
    })
}

/// Moves every particle against its gradient at the current learning rate.
/// Particles that land within 1e-12 of an earlier one are nudged 1e-8 in a
/// seeded random direction.
pub fn step_particles(
    state: &WvgdState,
    grads: &GradientEstimate,
    rng: &RngStream,
) -> Result<WvgdState> {
    let lr = state.effective_lambda();
    let n = state.ensemble.len();
    let d = state.ensemble.dim();
    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut z = state.ensemble.position(j).to_vec();
        for (zk, gk) in z.iter_mut().zip(&grads.per_particle_grads[j]) {
            *zk -= lr * gk;
            if !zk.is_finite() {
                return Err(WvgdError::NonFinite {
                    context: format!("position update of particle {j}"),
                });
            }
        }
        positions.push(z);
    }
    let mut jitter_rng = rng.substream(0xC0_111D);
    for later in 1..n {
        for earlier in 0..later {
            let dist2: f64 = positions[later]
                .iter()
                .zip(&positions[earlier])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist2.sqrt() <= COINCIDENCE_EPS {
                let dir = jitter_rng.standard_normal_vec(d);
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                for (zk, dk) in positions[later].iter_mut().zip(&dir) {
                    *zk += 1e-8 * dk / norm;
                }
            }
        }
    }
    let mut next = state.clone();
    next.ensemble = state.ensemble.with_positions(positions)?;
    next.step += 1;
    Ok(next)
}

/// Runs `n_steps` of the coupled dynamics: refresh weights on schedule,
/// move particles, then give each component one KL step against the moved
/// tessellation. Records one trajectory row per particle per step.
pub fn run(
    mut state: WvgdState,
    target: &dyn TargetModel,
    cost: &dyn CostFunction,
    n_steps: usize,
    rng: &RngStream,
    mut on_step: Option<&mut dyn FnMut(&WvgdState, &GradientEstimate)>,
) -> Result<(WvgdState, Vec<TrajectoryRow>)> {
    let mut trajectory = Vec::with_capacity(n_steps * state.ensemble.len());
    for t in 0..n_steps {
        let step_rng = rng.substream(state.step as u64);

        if t % state.weight_refresh_every == 0 {
            let tessellation = Tessellation::new(&state.ensemble, cost);
            let estimate = tessellation.estimate_weights(
                target,
                &state.components,
                state.weight_samples,
                &step_rng.substream(0),
            )?;
            state.ensemble = state.ensemble.with_weights(estimate.weights.clone())?;
            state.weights = estimate;
        }

        let grads = estimate_gradient(&state, target, cost, &step_rng.substream(1))?;
        let mut next = step_particles(&state, &grads, &step_rng.substream(2))?;

        // One KL descent step per component against the moved cells; the
        // batch used for the gradient also refreshes the log Z estimate.
        let inner_lr = next.effective_inner_lr();
        let tessellation = Tessellation::new(&next.ensemble, cost);
        let comp_rng = step_rng.substream(3);
        let mut updated = Vec::with_capacity(next.components.len());
        for component in &next.components {
            let mut rng_j = comp_rng.substream(component.cell_index as u64);
            let batch = component.sample(&tessellation, next.samples_per_step, &mut rng_j)?;
            let grad = component.kl_gradient_from_batch(&batch, target);
            let stepped = component
                .step(&grad, inner_lr)?
                .with_log_z(batch.log_z_estimate());
            updated.push(stepped);
        }
        next.components = updated;

        for j in 0..next.ensemble.len() {
            trajectory.push(TrajectoryRow {
                step: t,
                particle: j,
                coords: next.ensemble.position(j).to_vec(),
                loss_estimate: grads.loss_estimate,
                ess: grads.per_particle_ess[j],
            });
        }
        if let Some(cb) = on_step.as_deref_mut() {
            cb(&next, &grads);
        }
        state = next;
    }
    Ok((state, trajectory))
}

/// Two-particle decomposition of the particle-1 velocity in one dimension.
///
/// Returns (global, r12) where global integrates grad_1 c(z1, z) p(z) over
/// the whole line and r12 integrates the same over the half-line claimed by
/// particle 2. The formal-loss velocity of particle 1 is -(global - r12).
/// The target's unnormalized density is normalized by quadrature over the
/// window.
pub fn repulsion_decomposition(
    ensemble: &ParticleEnsemble,
    target: &dyn TargetModel,
    cost: &dyn CostFunction,
    window: (f64, f64),
) -> Result<(f64, f64)> {
    assert_eq!(ensemble.dim(), 1, "decomposition is one-dimensional");
    assert_eq!(ensemble.len(), 2, "decomposition needs exactly two particles");
    let z1 = ensemble.position(0)[0];
    let z2 = ensemble.position(1)[0];
    if z1 >= z2 {
        return Err(WvgdError::UnsortedParticles);
    }
    let quad = crate::oracle::Quadrature1D::new(window.0, window.1, 16_385);
    let evidence = quad.integrate(&|z: f64| target.log_joint(&[z]).exp());
    let density = |z: f64| target.log_joint(&[z]).exp() / evidence;
    let integrand = |z: f64| cost.grad_first(&[z1], &[z])[0] * density(z);
    let global = quad.integrate(&integrand);
    let mid = 0.5 * (z1 + z2);
    let r12 = quad.integrate_on(&integrand, mid, window.1);
    Ok((global, r12))
}

/// Writes trajectory rows as CSV with one coordinate column per dimension.
pub fn write_trajectory_csv<W: std::io::Write>(
    writer: W,
    rows: &[TrajectoryRow],
    dim: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["step".to_string(), "particle".to_string()];
    header.extend((0..dim).map(|k| format!("coord_{k}")));
    header.push("loss_estimate".into());
    header.push("ess".into());
    w.write_record(&header)?;
    for row in rows {
        let mut record = vec![row.step.to_string(), row.particle.to_string()];
        record.extend(row.coords.iter().map(|c| format!("{c}")));
        record.push(format!("{}", row.loss_estimate));
        record.push(format!("{}", row.ess));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
