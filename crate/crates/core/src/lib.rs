//! Hierarchical safe velocity control for a simulated skid-steer robot.
//!
//! Each drive side is a lumped first-order actuation chain ([`plant`]).
//! Nominal control comes from a small feedforward network trained as an
//! inverse model ([`nn`], [`lm`]). A barrier-function adaptive controller
//! ([`rac`]) takes over when a latched supervisor ([`supervisor`]) sees
//! the tracking error leave its low-level envelope, and the same
//! supervisor halts the vehicle if the error reaches the outer envelope.

pub mod error;
pub mod io;
pub mod lm;
pub mod metrics;
pub mod nn;
pub mod plant;
pub mod rac;
pub mod scenario;
pub mod supervisor;

pub use error::{Error, Result};
