pub mod agent;
pub mod cli;
pub mod config;
mod bytes;
pub mod demos;
pub mod distributional;
pub mod env;
pub mod net;
pub mod replay;
pub mod train;
pub mod transport;
