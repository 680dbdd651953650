//! Particle-based variational inference through semi-discrete optimal
//! transport.
//!
//! A posterior is approximated by N weighted particles plus one truncated
//! diagonal-Gaussian density per particle. The particles descend the
//! transport loss E_p[sum_j I_j(z) c(z_j, z)]; each particle owns the cell
//! of latent space it is cheapest to transport to, and its density component
//! is fitted to the posterior restricted to that cell by KL descent. The
//! crate also ships an SVGD baseline, quadrature oracles for
//! one-dimensional ground truth, density scoring, and the experiment
//! harness behind the `wvgd` binary.

pub mod config;
pub mod cost;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod svgd;
pub mod targets;
pub mod tessellation;
pub mod varfit;

pub use cost::{CostFunction, Point, SquaredEuclidean};
pub use ensemble::ParticleEnsemble;
pub use error::{Result, WvgdError};
pub use model::{finite_difference_gradient, TargetModel};
pub use rng::RngStream;
pub use tessellation::{Tessellation, WeightEstimate};
pub use varfit::{ComponentGradient, ElboEstimate, VariationalComponent};
