//! Deterministic fixed-timestep co-simulation.
//!
//! Engines advance in lockstep behind a framed request/reply protocol and
//! exchange named datapacks through transceiver functions. Built-in engines
//! cover a kinematic Ackermann vehicle, a waypoint controller, a synthetic
//! camera and a threshold detector.

pub mod doc;

pub mod bench;
pub mod config;
pub mod controller;
pub mod course;
pub mod datapack;
pub mod engine;
pub mod geometry;
pub mod perception;
pub mod pipeline;
pub mod report;
pub mod sim;
pub mod transport;
pub mod vehicle;

pub use config::{load_config, parse_config, SimulationConfig};
pub use sim::{run_simulation, Simulation, SimulationReport};
pub use transport::Codec;
