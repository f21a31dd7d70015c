//! Wire cutting for tree-structured circuits by learning each cut channel's
//! Heisenberg-picture observable instead of decomposing the wire.
//!
//! Layout, bottom up:
//!
//! * [`linalg`]: validated complex matrices, norms, partial traces.
//! * [`channels`]: density operators, CPTP maps, measurement.
//! * [`ensembles`]: 2-design, stabilizer-product and Pauli-eigenstate inputs.
//! * [`tomography`]: classical shadows of `Phi^dagger(O)` and the shot planner.
//! * [`knitting`]: the learned-observable knitting identities, and the Pauli
//!   quasi-probability baseline.
//! * [`treesim`]: trees of channels, shot allocation, the estimators, and the
//!   separation experiment.
//!
//! All randomness flows from one `u64` seed through [`rng::StreamKey`]
//! substreams, so results do not depend on thread count or scheduling.
//!
//! ```
//! use knitsim_core::ensembles::EnsembleKind;
//! use knitsim_core::tomography::plan_shots;
//!
//! let n = plan_shots(EnsembleKind::TwoDesign, 2, 1.0, 0.1, 0.1).unwrap();
//! assert_eq!(n, 9088);
//! ```

pub mod channels;
pub mod ensembles;
pub mod error;
pub mod exec;
pub mod knitting;
pub mod linalg;
pub mod rng;
pub mod tomography;
pub mod treesim;

pub use error::{KnitError, Result};
