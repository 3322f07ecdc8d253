pub mod cli;
pub mod config;
pub mod error;
pub mod montecarlo;
pub mod noise;
pub mod optimize;
pub mod physical;
pub mod selftest;
pub mod sequence;
pub mod signal;
pub mod special;
