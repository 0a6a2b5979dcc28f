//! Procedural manipulator generation, rigid-body simulation, sequence
//! datasets and a transformer regressor for dynamic parameter estimation.

pub mod control;
pub mod dataset;
pub mod dynamics;
pub mod estimator;
pub mod model;
