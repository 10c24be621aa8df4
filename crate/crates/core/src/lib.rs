//! Rate adaptation for packet links over a slowly fading Rayleigh channel,
//! driven by delayed ACK/NAK feedback.

pub mod belief;
pub mod channel;
pub mod cli;
pub mod controllers;
pub mod error;
pub mod feedback;
pub mod phy;
pub mod queue;
pub mod sim;
pub mod special;
pub mod validate;

pub use error::{Error, Result};
