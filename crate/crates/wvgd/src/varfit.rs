//! Truncated diagonal-Gaussian variational components.
//!
//! Component j approximates the transportation density of cell j: a diagonal
//! Gaussian base q(z; theta_j) restricted to the cell, q_j = I_j q / Z_j.
//! Sampling is by rejection, the normalizer Z_j is estimated by the
//! empirical acceptance rate, and the KL / entropy gradients use the score
//! identity: because the cell is a fixed region of z-space (it depends on
//! the particles, never on theta_j), expectations under q_j differentiate as
//!
//!   grad E_{q_j}[f] = Cov_{q_j}(score, f) + E_{q_j}[grad_theta f],
//!   grad log Z_j    = E_{q_j}[score],
//!
//! with score = grad_theta log q. Assembling the KL this way cancels the
//! unknown constants log Z_j and log beta_j identically, leaving
//! grad KL(q_j || p_j) = Cov_{q_j}(score, log q - log p).

use crate::error::{Result, WvgdError};
use crate::model::TargetModel;
use crate::rng::RngStream;
use crate::tessellation::{Tessellation, WeightEstimate};
use serde::{Deserialize, Serialize};

/// Clamp bound for log_std; exp(13.8) is about 1e6.
pub const LOG_STD_CLAMP: f64 = 13.8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Estimate of log Z_j with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LogZEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl Default for LogZEstimate {
    fn default() -> Self {
        Self {
            value: 0.0,
            std_error: 0.0,
        }
    }
}

/// Diagonal Gaussian base restricted to one tessellation cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalComponent {
    pub cell_index: usize,
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub log_z: LogZEstimate,
}

/// Accepted draws from a component, with the reparameterization noise that
/// produced them and the acceptance bookkeeping.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub points: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub n_proposed: usize,
}

impl SampleBatch {
    /// log Z estimate implied by this batch's acceptance rate, with a
    /// binomial standard error mapped through the logarithm.
    pub fn log_z_estimate(&self) -> LogZEstimate {
        let p = self.acceptance_rate;
        let se = (p * (1.0 - p) / self.n_proposed as f64).sqrt() / p;
        LogZEstimate {
            value: p.ln(),
            std_error: se,
        }
    }
}

/// Gradient with respect to (mean, log_std).
#[derive(Debug, Clone)]
pub struct ComponentGradient {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl ComponentGradient {
    pub fn zeros(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            log_std: vec![0.0; d],
        }
    }

    pub fn norm(&self) -> f64 {
        self.mean
            .iter()
            .chain(&self.log_std)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Monte Carlo ELBO of one component against its restricted target.
#[derive(Debug, Clone, Serialize)]
pub struct ElboEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub acceptance_rate: f64,
}

impl VariationalComponent {
    /// Component centered on a particle with unit standard deviations.
    pub fn centered(position: &[f64], cell_index: usize) -> Self {
        Self {
            cell_index,
            mean: position.to_vec(),
            log_std: vec![0.0; position.len()],
            log_z: LogZEstimate::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// log of the untruncated base density q(z; theta).
    pub fn base_log_density(&self, z: &[f64]) -> f64 {
        assert_eq!(z.len(), self.dim());
        let mut acc = 0.0;
        for h in 0..z.len() {
            let s = self.log_std[h].exp();
            let t = (z[h] - self.mean[h]) / s;
            acc += -0.5 * t * t - self.log_std[h];
        }
        acc - 0.5 * LN_2PI * z.len() as f64
    }

    /// Score grad_theta log q(z; theta) at a fixed point z.
    pub fn score(&self, z: &[f64]) -> ComponentGradient {
        let d = self.dim();
        let mut g = ComponentGradient::zeros(d);
        for h in 0..d {
            let s = self.log_std[h].exp();
            let eps = (z[h] - self.mean[h]) / s;
            g.mean[h] = eps / s;
            g.log_std[h] = eps * eps - 1.0;
        }
        g
    }

    /// Rejection sampler: draw eps ~ N(0, I), map to z = mean + std * eps,
    /// accept when z falls in this component's cell. Errors when fewer than
    /// max(1, n/10) draws are accepted within 50 n proposals.
    pub fn sample(
        &self,
        tessellation: &Tessellation,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<SampleBatch> {
        assert!(n >= 1);
        assert_eq!(tessellation.ensemble().dim(), self.dim());
        let d = self.dim();
        let stds: Vec<f64> = self.log_std.iter().map(|l| l.exp()).collect();
        let budget = 50 * n;
        let mut points = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        let mut proposed = 0;
        while points.len() < n && proposed < budget {
            let eps = rng.standard_normal_vec(d);
            let z: Vec<f64> = (0..d).map(|h| self.mean[h] + stds[h] * eps[h]).collect();
            proposed += 1;
            if tessellation.assign_cell(&z) == self.cell_index {
                points.push(z);
                noise.push(eps);
            }
        }
        if points.len() < (n / 10).max(1) {
            return Err(WvgdError::ComponentStarved {
                cell: self.cell_index,
                accepted: points.len(),
                proposed,
            });
        }
        let acceptance_rate = points.len() as f64 / proposed as f64;
        Ok(SampleBatch {
            points,
            noise,
            acceptance_rate,
            n_proposed: proposed,
        })
    }

    /// Defensive importance-sampling proposal built on this component: a
    /// mixture of the base Gaussian and a widened copy. The wide sleeve
    /// keeps proposal mass on any posterior mass the KL fit has abandoned,
    /// which the self-normalized weights then recover exactly.
    pub fn defensive(&self) -> DefensiveProposal<'_> {
        DefensiveProposal {
            component: self,
            sleeve_weight: DEFENSIVE_SLEEVE_WEIGHT,
            widen: DEFENSIVE_WIDEN,
        }
    }

    /// Gradient of the entropy S[q_j] = -E_{q_j}[log q] + log Z_j.
    ///
    /// Assembled from the score identity: the E[log q] term contributes
    /// Cov(score, log q) + E[score], the log Z_j term contributes E[score],
    /// so grad S = -Cov(score, log q).
    pub fn entropy_gradient(
        &self,
        tessellation: &Tessellation,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<ComponentGradient> {
        assert!(n >= 2);
        let batch = self.sample(tessellation, n, rng)?;
        Ok(self.entropy_gradient_from_batch(&batch))
    }

    /// Entropy gradient evaluated on an existing batch of accepted samples.
    pub fn entropy_gradient_from_batch(&self, batch: &SampleBatch) -> ComponentGradient {
        let logq: Vec<f64> = batch
            .points
            .iter()
            .map(|z| self.base_log_density(z))
            .collect();
        let mut grad = self.score_covariance(&batch.points, &logq);
        for g in grad.mean.iter_mut().chain(grad.log_std.iter_mut()) {
            *g = -*g;
        }
        grad
    }

    /// Gradient of KL(q_j || p_j) with respect to (mean, log_std):
    /// Cov_{q_j}(score, log q - log p).
    pub fn kl_gradient(
        &self,
        tessellation: &Tessellation,
        target: &dyn TargetModel,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<ComponentGradient> {
        assert!(n >= 2);
        let batch = self.sample(tessellation, n, rng)?;
        Ok(self.kl_gradient_from_batch(&batch, target))
    }

    /// KL gradient evaluated on an existing batch of accepted samples.
    pub fn kl_gradient_from_batch(
        &self,
        batch: &SampleBatch,
        target: &dyn TargetModel,
    ) -> ComponentGradient {
        let f: Vec<f64> = batch
            .points
            .iter()
            .map(|z| self.base_log_density(z) - target.log_joint(z))
            .collect();
        self.score_covariance(&batch.points, &f)
    }

    /// Sample covariance between each score coordinate and a scalar payload.
    fn score_covariance(&self, points: &[Vec<f64>], payload: &[f64]) -> ComponentGradient {
        let n = points.len();
        let d = self.dim();
        let mut grad = ComponentGradient::zeros(d);
        if n < 2 {
            return grad;
        }
        let f_mean = payload.iter().sum::<f64>() / n as f64;
        let mut score_mean = ComponentGradient::zeros(d);
        let scores: Vec<ComponentGradient> = points.iter().map(|z| self.score(z)).collect();
        for s in &scores {
            for h in 0..d {
                score_mean.mean[h] += s.mean[h] / n as f64;
                score_mean.log_std[h] += s.log_std[h] / n as f64;
            }
        }
        for (s, f) in scores.iter().zip(payload) {
            let df = f - f_mean;
            for h in 0..d {
                grad.mean[h] += (s.mean[h] - score_mean.mean[h]) * df;
                grad.log_std[h] += (s.log_std[h] - score_mean.log_std[h]) * df;
            }
        }
        let denom = (n - 1) as f64;
        for g in grad.mean.iter_mut().chain(grad.log_std.iter_mut()) {
            *g /= denom;
        }
        grad
    }

    /// One descent step on (mean, log_std); log_std is clamped so that the
    /// standard deviations stay within [1e-6, 1e6].
    pub fn step(&self, grad: &ComponentGradient, lr: f64) -> Result<Self> {
        assert!(lr > 0.0);
        let mut next = self.clone();
        for h in 0..self.dim() {
            next.mean[h] -= lr * grad.mean[h];
            next.log_std[h] =
                (next.log_std[h] - lr * grad.log_std[h]).clamp(-LOG_STD_CLAMP, LOG_STD_CLAMP);
            if !next.mean[h].is_finite() || !next.log_std[h].is_finite() {
                return Err(WvgdError::NonFinite {
                    context: format!("component update for cell {}", self.cell_index),
                });
            }
        }
        Ok(next)
    }

    /// Returns the component with a refreshed log Z estimate.
    pub fn with_log_z(&self, log_z: LogZEstimate) -> Self {
        let mut next = self.clone();
        next.log_z = log_z;
        next
    }

    /// Monte Carlo estimate of ELBO(q_j, p_j) =
    /// E_{q_j}[log p_j(z, x) - log q_j(z)], with
    /// log p_j = log_joint - log beta_j on the cell and
    /// log q_j = base log density - log Z_j.
    pub fn elbo(
        &self,
        tessellation: &Tessellation,
        target: &dyn TargetModel,
        log_beta: f64,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<ElboEstimate> {
        assert!(n >= 2);
        let batch = self.sample(tessellation, n, rng)?;
        let log_z = batch.log_z_estimate();
        let values: Vec<f64> = batch
            .points
            .iter()
            .map(|z| target.log_joint(z) - log_beta - self.base_log_density(z) + log_z.value)
            .collect();
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        // The log Z shift applies to every sample, so its error adds to the
        // Monte Carlo error in quadrature.
        let std_error = (var / m + log_z.std_error * log_z.std_error).sqrt();
        Ok(ElboEstimate {
            value: mean,
            std_error,
            n_samples: values.len(),
            acceptance_rate: batch.acceptance_rate,
        })
    }
}

/// Mixture weight of the widened sleeve in a defensive proposal.
pub const DEFENSIVE_SLEEVE_WEIGHT: f64 = 0.1;
/// Standard-deviation multiplier of the widened sleeve.
pub const DEFENSIVE_WIDEN: f64 = 4.0;

/// Two-component proposal for importance sampling: the component's base
/// Gaussian plus a widened sleeve. Used wherever expectations under a
/// restricted posterior are importance-sampled (particle gradients, cell
/// masses); the pure component remains the sampler for its own KL and
/// entropy gradients.
pub struct DefensiveProposal<'a> {
    component: &'a VariationalComponent,
    sleeve_weight: f64,
    widen: f64,
}

impl DefensiveProposal<'_> {
    pub fn cell_index(&self) -> usize {
        self.component.cell_index
    }

    /// log of the untruncated mixture density.
    pub fn base_log_density(&self, z: &[f64]) -> f64 {
        let narrow = self.component.base_log_density(z);
        let d = self.component.dim();
        let mut wide = 0.0;
        for h in 0..d {
            let log_std = self.component.log_std[h] + self.widen.ln();
            let s = log_std.exp();
            let t = (z[h] - self.component.mean[h]) / s;
            wide += -0.5 * t * t - log_std;
        }
        wide -= 0.5 * LN_2PI * d as f64;
        let a = (1.0 - self.sleeve_weight).ln() + narrow;
        let b = self.sleeve_weight.ln() + wide;
        let max = a.max(b);
        max + ((a - max).exp() + (b - max).exp()).ln()
    }

    /// Rejection sampler against the component's cell, drawing each
    /// proposal from the narrow or wide branch.
    pub fn sample(
        &self,
        tessellation: &Tessellation,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<SampleBatch> {
        assert!(n >= 1);
        let d = self.component.dim();
        let budget = 50 * n;
        let mut points = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        let mut proposed = 0;
        while points.len() < n && proposed < budget {
            let widen = if rng.uniform() < self.sleeve_weight {
                self.widen
            } else {
                1.0
            };
            let eps = rng.standard_normal_vec(d);
            let z: Vec<f64> = (0..d)
                .map(|h| {
                    self.component.mean[h] + widen * self.component.log_std[h].exp() * eps[h]
                })
                .collect();
            proposed += 1;
            if tessellation.assign_cell(&z) == self.component.cell_index {
                points.push(z);
                noise.push(eps);
            }
        }
        if points.len() < (n / 10).max(1) {
            return Err(WvgdError::ComponentStarved {
                cell: self.component.cell_index,
                accepted: points.len(),
                proposed,
            });
        }
        let acceptance_rate = points.len() as f64 / proposed as f64;
        Ok(SampleBatch {
            points,
            noise,
            acceptance_rate,
            n_proposed: proposed,
        })
    }
}

/// Partitioned evidence lower bound: sum_j beta_j ELBO(q_j, p_j), with the
/// per-component errors combined in quadrature.
pub fn pelbo(
    components: &[VariationalComponent],
    tessellation: &Tessellation,
    target: &dyn TargetModel,
    weights: &WeightEstimate,
    n: usize,
    rng: &RngStream,
) -> Result<(f64, f64)> {
    assert_eq!(components.len(), tessellation.len());
    assert_eq!(weights.weights.len(), components.len());
    let mut value = 0.0;
    let mut var = 0.0;
    for (j, component) in components.iter().enumerate() {
        let beta = weights.weights[j];
        if beta <= 0.0 {
            continue;
        }
        let mut cell_rng = rng.substream(j as u64);
        let elbo = component.elbo(tessellation, target, beta.ln(), n, &mut cell_rng)?;
        value += beta * elbo.value;
        var += beta * beta * elbo.std_error * elbo.std_error;
    }
    Ok((value, var.sqrt()))
}
