//! Energy-efficient precoding and power splitting for a two-way
//! amplify-and-forward MIMO relay network in which one transceiver harvests
//! its operating energy from the relay's broadcast.
//!
//! The optimization runs in the eigenvalue domain: with precoder directions
//! aligned to the channel singular vectors, rates and powers reduce to
//! per-mode scalar expressions ([`objective`]). [`solver`] maximizes the
//! energy efficiency by alternating Dinkelbach solves over the relay and
//! transceiver eigenvalues with a closed-form update of the splitting
//! factor. [`experiments`] runs seeded Monte-Carlo sweeps over many channel
//! realizations.

pub mod config;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod matprops;
pub mod model;
pub mod objective;
pub mod solver;

pub use config::{NetworkConfig, Settings, SolverOptions};
pub use error::{Error, Result};
pub use model::{generate_channels, ChannelGains, ChannelMode, ChannelRealization};
pub use objective::{SpectrumPoint, ALPHA_MIN};
pub use solver::{Scheme, Solution};
