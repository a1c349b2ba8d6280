//! Graph partitioning by a pre-trained pair classifier whose output seeds a
//! modularity refiner on a coarsened super-graph.

pub mod bench;
pub mod error;
pub mod graph;
pub mod infer;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pretrain;
pub mod refine;
pub mod sbmgen;

pub use error::{CheckpointError, Error, Result};
pub use graph::{Graph, NodeId, Partition, SuperGraph};
