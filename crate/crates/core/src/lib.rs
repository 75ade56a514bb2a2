//! Deterministic imitation dynamics for population games played over
//! community networks.
//!
//! A population of players is split into communities of fixed relative size.
//! Players meet at rates given by a nonnegative interaction matrix, compare
//! rewards, and copy the action of the player they met at a rate set by an
//! imitation mechanism. The resulting system of ODEs lives on the set of
//! action-by-community matrices whose column sums equal the community sizes.
//!
//! The crate provides:
//!
//! - the domain types ([`SystemState`], [`PopulationState`],
//!   [`CommunityNetwork`], [`PopulationGame`], [`ImitationMechanism`]);
//! - built-in games and mechanisms plus sampled checkers for the structural
//!   assumptions the convergence results rely on ([`games`], [`mechanisms`]);
//! - the vector field and a fixed-step, simplex-preserving RK4 integrator
//!   ([`dynamics`]);
//! - equilibrium enumeration and classification ([`equilibria`]);
//! - trajectory-level judgments such as convergence, oscillation and
//!   invariant audits ([`analysis`]).
//!
//! All numerical code is generic over a [`Scalar`] (`f32` or `f64`). The
//! `f64` instantiations are exported under short aliases at the crate root.

// `!(v > 0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod equilibria;
mod error;
pub mod games;
mod linalg;
pub mod mechanisms;
pub mod network;
pub mod sampling;
mod scalar;
pub mod state;

pub use crate::analysis::{AuditReport, ConvergenceReport, Target};
pub use crate::dynamics::{IntegratorSettings, Trajectory};
pub use crate::equilibria::{EquilibriumClass, EquilibriumRecord};
pub use crate::error::{Error, Result};
pub use crate::games::{AffineGame, PopulationGame};
pub use crate::mechanisms::{AssumptionReport, ImitationMechanism, RateProfile};
pub use crate::network::CommunityNetwork;
pub use crate::scalar::Scalar;
pub use crate::state::{ActionSet, PopulationState, SystemState};

/// Default scalar used by the CLI and the acceptance suite.
pub type Real = f64;

pub type Population = PopulationState<Real>;
pub type State = SystemState<Real>;
pub type Network = CommunityNetwork<Real>;
pub type Game = PopulationGame<Real>;
pub type Mechanism = ImitationMechanism<Real>;
pub type Settings = IntegratorSettings<Real>;
pub type Traj = Trajectory<Real>;
pub type Record = EquilibriumRecord<Real>;
