//! State pruning for diagonal deep state space models.
//!
//! Layers are diagonal linear recursions `x_{k+1} = Λ̄ x_k + B̄ u_k`,
//! `y_k = Re(C x_k) + D u_k`, discretized from continuous-time parameters by
//! zero-order hold. Each state is scored by the H∞ norm of its rank-1
//! subsystem; layer-adaptive normalization (LAST) makes the scores comparable
//! across layers so a single global threshold can choose which states to drop.

pub mod cli;
pub mod discretize;
pub mod error;
pub mod io;
pub mod layer;
pub mod norms;
pub mod pruning;
pub mod simulate;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use layer::{Activation, Arch, CtLayer, CtModel, DtLayer, Model, C64};
