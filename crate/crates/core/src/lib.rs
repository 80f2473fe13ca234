pub mod fabric;
pub mod blockstore;
pub mod config;
pub mod mapreduce;
pub mod cluster;
pub mod error;
pub mod ingestion;
pub mod jobs;

pub use cluster::Cluster;
pub use config::ClusterConfig;
pub use error::{Error, Result};
