//! Microscopic layer: a classical ensemble of monads with external forces
//! and number/momentum/energy-conserving binary collisions, projected onto
//! hydrodynamic moment fields with statistical residual checks.

mod collisions;
mod ensemble;
mod moments;
mod rng;

pub use collisions::{collide, CollisionStats};
pub use ensemble::{stream_and_force, MonadEnsemble, MonadForce, PeriodicBox};
pub use moments::{
    moment_residuals, project_moments, residual_suite, EquationNorms, MomentFields,
    MomentResidualReport, ResidualSuite, DEFAULT_MIN_CELL_COUNT,
};
pub use rng::{stream_rng, tagged_rng};
