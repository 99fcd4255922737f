//! Desk-scale simulator for the chain from classical kinetics through
//! hydrodynamics to n-particle wave mechanics.
//!
//! Two field engines evolve the same physics in different variables — a
//! split-step wave solver ([`schrodinger`]) and a density/phase solver
//! ([`hydro`]) — and cross-validate each other. A classical ensemble layer
//! ([`kinetics`]) runs conserving binary collisions and checks that the
//! hydrodynamic moment equations emerge from it. The [`observables`] module
//! holds the static functionals (quantum potential, stress closure, Fisher
//! information, energy ledger) that tie the layers together.

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod hydro;
pub mod kinetics;
pub mod observables;
pub mod potential;
pub mod schrodinger;
pub mod snapshot;
pub mod spectral;
pub mod transform;
pub mod verify;

pub use diagnostics::DiagnosticsRecord;
pub use error::{QhdError, Result};
pub use field::{MadelungPair, WaveField};
pub use grid::{LatticeGrid, MonadScale};
pub use potential::{ConstitutiveParams, ExternalPotential, NonlinearTerm, PairPotential, PotentialSpec};
pub use spectral::SpectralOps;
pub use transform::{to_madelung, to_wavefield, MadelungDecomposition, PhaseUnwrapPolicy};
