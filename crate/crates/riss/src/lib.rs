//! Simulation library for a reflective surface with a small active sensing array.
//!
//! The pipeline: synthesize channels between two transmitters, the surface, and a
//! receiver (planar- or spherical-wavefront models), estimate transmitter directions
//! from active-element snapshots, design per-element reflection phases that boost the
//! target link while suppressing the interferer, then run a QPSK link simulation and
//! report EVM, beampatterns, and field heatmaps.

pub mod analysis;
pub mod channel;
pub mod farfield;
pub mod geometry;
pub mod iq;
pub mod link;
pub mod nearfield;
pub mod sdp;
pub mod sensing;


pub use channel::{ChannelModel, ChannelSet, ReflectionConfig};
pub use geometry::{AngleSet, DistanceTable, Scenario, TxNode};
pub use sdp::{SdpProblem, SdpSolution, SdpStatus};

/// Complex double-precision scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
