pub mod dataset;
pub mod error;
pub mod fom;
pub mod io;
pub mod partition;
pub mod pod;
pub mod scaling;
pub mod neural;
pub mod autoencoder;
pub mod regressor;
pub mod container;
pub mod pipeline;
pub mod analysis;
pub mod cli;
pub mod config;
