//! Planning toolkit for a dual 6-DoF arm cell: collision statistics drive
//! proximity-sensor placement, a variational autoencoder embeds dual-arm poses
//! in a 2-D latent space, and a k-nearest-neighbour roadmap over the safe part
//! of that space is searched and re-searched with Dijkstra while a second arm
//! moves through the workspace.

pub mod error;
pub mod geometry;
pub mod dataset;
pub mod kinematics;
pub mod scene;
pub mod sensor_placement;
pub mod pipeline;
pub mod reactive_planner;
pub mod roadmap;
pub mod vae;

pub use error::{Error, Result};
