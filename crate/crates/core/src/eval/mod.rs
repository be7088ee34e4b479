//! Downstream Monte Carlo evaluation of designed pilots.

pub mod baselines;
pub mod estimation;
pub mod link;
pub mod qam;
pub mod radar;
