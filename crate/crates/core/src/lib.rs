//! Simulation and reconstruction of entangled-photon coincidences recorded
//! by a time-stamping pixel camera.

pub mod bell;
pub mod bench;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod hist;
pub mod io;
pub mod pipeline;
pub mod quantum;
pub mod sim;
