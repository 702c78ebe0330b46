pub mod error;
pub mod fields;
pub mod spectral;
pub mod barrier;
pub mod linalg;
pub mod solver;
pub mod verify;
pub mod config;
pub mod pipeline;
