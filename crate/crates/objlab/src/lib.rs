//! objlab: an exact workbench for probabilistic control objectives.
//!
//! The crate implements two families of objectives over finite generative
//! models, the evidence objective (expected log-desire of predicted
//! observations) and the divergence objective (KL from predicted to desired
//! observations), together with every decomposition and bound connecting them
//! to variational control, expected free energy, joint-divergence
//! minimization, and empowerment. Models are small and dense on purpose:
//! every quantity is computed by exact enumeration so identities can be
//! checked to floating-point accuracy.

pub mod empowerment;
pub mod error;
pub mod mixture;
pub mod objectives;
pub mod prob;
pub mod relations;
pub mod report;
pub mod sampling;
pub mod suite;
pub mod testbeds;

pub use error::{Error, Result};
pub use report::RelationReport;
