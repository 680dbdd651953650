//! The weighted particle ensemble: the discrete side of the transport problem.

use crate::error::{Result, WvgdError};
use serde::{Deserialize, Serialize};

/// Minimum pairwise distance before two particles are considered coincident.
pub const COINCIDENCE_EPS: f64 = 1e-12;

/// N particle positions z^1..z^N with weights beta_1..beta_N.
///
/// Weights are uniform 1/N until a weight estimate replaces them. Positions
/// are pairwise distinct; coincident particles would make the tessellation
/// degenerate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    positions: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(WvgdError::EmptyEnsemble);
        }
        let d = positions[0].len();
        for p in &positions {
            if p.len() != d || p.iter().any(|x| !x.is_finite()) {
                return Err(WvgdError::NonFinite {
                    context: "particle position".into(),
                });
            }
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let dist2: f64 = positions[i]
                    .iter()
                    .zip(&positions[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if dist2.sqrt() <= COINCIDENCE_EPS {
                    return Err(WvgdError::CoincidentParticles(i, j));
                }
            }
        }
        if weights.len() != positions.len() {
            return Err(WvgdError::InvalidWeights { sum: f64::NAN });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(WvgdError::InvalidWeights { sum });
        }
        Ok(Self { positions, weights })
    }

    /// Ensemble with uniform weights 1/N.
    pub fn uniform(positions: Vec<Vec<f64>>) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(WvgdError::EmptyEnsemble);
        }
        Self::new(positions, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    pub fn position(&self, j: usize) -> &[f64] {
        &self.positions[j]
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Replaces the weights, revalidating the simplex constraint.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.positions.clone(), weights)
    }

    /// Replaces the positions, keeping the current weights.
    pub fn with_positions(&self, positions: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(positions, self.weights.clone())
    }
}
