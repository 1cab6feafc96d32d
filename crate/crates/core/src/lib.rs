//! Electrochemical single-particle battery model with a dual sliding-mode
//! SOC observer gated by a Lyapunov dead zone.

pub mod error;
pub mod harness;
pub mod model;
pub mod observer;
pub mod par;
pub mod profiles;
pub mod scenarios;

pub use error::{Error, Result};
