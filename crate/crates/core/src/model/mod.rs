//! Network data model: unit distributions, layered structure, parameters,
//! and the exact probability and energy of a full assignment.

pub mod checkpoint;
mod network;
mod spec;
mod unit;

pub use network::{Assignment, Init, ModelError, Network, Params, Source};
pub(crate) use network::source_value;
pub use spec::{Connectivity, Grid, InputGrid, LayerSpec, NetworkSpec, ValidationReport, Violation};
pub use unit::{relu_expand, sigmoid, softplus, Event, UnitKind, DEFAULT_RELU_TERMS, MAX_RELU_TERMS};
