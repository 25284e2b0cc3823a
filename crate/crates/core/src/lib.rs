//! Arrival-time statistics of entangled atom pairs falling from a double
//! double slit onto horizontal screens.
//!
//! Positions are in micrometres, times in milliseconds and masses in units of
//! 1e-27 kg; see [`units`].

pub mod abr;
pub mod bohm;
pub mod config;
pub mod error;
pub mod ode;
pub mod output;
pub mod sampler;
pub mod semiclassical;
pub mod stats;
pub mod units;
pub mod wave;

pub use config::{load_config, load_config_with_base, preset, ExperimentConfig, Setup};
pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
