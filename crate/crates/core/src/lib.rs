//! Hybrid mesoscopic/microscopic spatial stochastic simulation of
//! reaction-diffusion kinetics.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod geom;
pub mod hybrid;
pub mod mesh;
pub mod meso;
pub mod micro;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod rates;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use mesh::{CartesianMesh, VoxelId};
pub use model::{BoxDomain, Model, ModelFile, Reaction, ReactionNetwork, SimConfig, SpeciesSpec};
