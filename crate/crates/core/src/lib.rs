//! Architecture-based data flow analysis for confidentiality.
//!
//! The pipeline has four steps: load a model ([`adl`]), extract every possible
//! data flow as an action sequence ([`extraction`]), propagate characteristic
//! labels along each sequence ([`propagation`]) and check data flow
//! constraints against the propagated snapshots ([`constraints`]).
//! [`analysis::DataFlowAnalysisBuilder`] wires the steps together.

pub mod adl;
pub mod analysis;
pub mod benchgen;
pub mod constraints;
pub mod expr;
pub mod extraction;
pub mod model;
pub mod oracle;
pub mod propagation;
pub mod report;
