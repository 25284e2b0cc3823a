//! Analytic wave functions: Gaussian packets in a uniform field and the
//! entangled pair state built from them.

pub mod gaussian;
pub mod quad;
pub mod state;
pub mod sum;

pub use gaussian::{gaussian_t, GaussianParams};
pub use quad::QuadExp;
pub use state::{
    CollapseInfo, ConditionalState, MomentumState, PairVelocity, Particle, TwoParticleState,
};
pub use sum::{FrozenSum, OwnedSum, ProductSum, Term};
