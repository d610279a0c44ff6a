//! Layered networks read both as deterministic feed-forward nets and as
//! Bayesian networks of stochastic units: sequential-approximation and
//! ancestral forward passes, back-propagation and stochastic likelihood
//! learning, exact enumeration, Monte-Carlo and Gibbs inference, and the
//! segmentation tooling built on them.

pub mod cli;
pub mod config;
pub mod data;
pub mod evaluate;
pub mod experiment;
pub mod inference;
pub mod learning;
pub mod model;
pub mod oracle;
pub mod propagation;
pub mod rng;
pub mod segment;
pub mod service;
