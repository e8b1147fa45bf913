//! Smart-factory NOMA uplink simulator with a deep Q-network that learns joint
//! sub-channel and power allocation under a throughput/latency trade-off.

pub mod channel;
pub mod dqn;
pub mod env;
pub mod error;
pub mod experiment;

pub use error::{Error, Result};
