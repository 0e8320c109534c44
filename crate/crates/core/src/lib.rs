//! Discrete element simulation of granular media on a uniform grid, with a
//! lockstep warp cost model for comparing two Collide kernel layouts.

pub mod config;
pub mod contacts;
pub mod driver;
pub mod error;
pub mod grid;
pub mod init;
pub mod oracle;
pub mod output;
pub mod physics;
pub mod pipeline;
pub mod simt;

pub use config::{ConfigError, SimConfig};
pub use error::{Error, Kernel, Result};
pub use physics::Vec3;
pub use pipeline::{CollideMode, CollideVariant, Simulation};
