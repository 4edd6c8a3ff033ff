//! Certified numerics, Monte Carlo simulation and exact enumeration for the
//! frog model on the 3,2-alternating tree.

pub mod interval;
pub mod operators;
pub mod bounds;
pub mod certificate;
pub mod simulator;

mod finite;
