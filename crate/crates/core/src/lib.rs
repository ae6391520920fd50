//! Reduced-order models ("digital twins") of a single controlled spin in a
//! quantum spin chain.
//!
//! The rest of the chain is compressed into a time-indexed environment
//! network whose bond dimension adapts to a global accuracy target. The
//! resulting effective gates drive the target spin together with a small
//! effective environment, which makes repeated evaluation of control losses
//! and their gradients cheap enough for Riemannian optimization of unitary
//! control sequences. An exact state-vector simulator serves as the oracle.
//!
//! Module map:
//!
//! - [`tensor`]: dense complex linear algebra kernel.
//! - [`models`]: XYZ and disordered Floquet circuits, product states.
//! - [`envnet`]: dyadic gate decomposition and environment compression.
//! - [`rom`]: effective gates, propagation, channels, mutual information.
//! - [`control`]: control losses, gradients, Riemannian ADAM.
//! - [`exactsim`]: full state-vector oracle, information flow, light cone.
//! - [`container`]: versioned binary serialization of networks and controls.
//!
//! Bit ordering: spin 0 is the most significant bit of every state-vector
//! and operator index.

pub mod container;
pub mod control;
pub mod envnet;
mod error;
pub mod exactsim;
pub mod models;
pub mod rom;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{CMat, C64};
