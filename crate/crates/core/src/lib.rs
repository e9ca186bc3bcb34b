pub mod bcd;
pub mod beamforming;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod phase;
