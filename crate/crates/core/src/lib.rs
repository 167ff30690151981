pub mod analysis;
pub mod artifacts;
pub mod cli;
pub mod config;
pub mod difficulty;
pub mod energy;
pub mod protocol;
pub mod simnet;
pub mod stochastic;
