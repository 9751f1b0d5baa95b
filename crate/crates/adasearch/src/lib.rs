//! Simulation engine for top-k source seeking over gridded Poisson emitter
//! fields.
//!
//! A mobile sensor traverses a planar grid of emitters and must identify the
//! `k` cells with the largest emission rates. The engine implements the
//! adaptive successive-elimination search (`adasearch`) together with two
//! baselines (`naivesearch`, `infomax`), both sensing models (pointwise and
//! inverse-square), Poisson confidence machinery, a recursive least-squares
//! estimator, and executable sample-complexity calculators.
//!
//! Everything is deterministic given a seed: identical configuration and seed
//! reproduce byte-identical trial trajectories and CSV outputs.

pub mod baselines;
pub mod complexity;
pub mod confidence;
pub mod elimination;
pub mod env;
pub mod estimator;
pub mod harness;
pub mod planner;
pub mod sensing;
pub mod trial;
