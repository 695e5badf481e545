//! Simulator for sparse attention offloaded to computational storage devices.

mod error;

pub mod attention;
pub mod cli;
pub mod engine;
pub mod flash;
pub mod layout;
pub mod oracle;
pub mod system;
pub mod tensor;

pub use error::{Error, Result};
