//! Modular Bayesian inference on directed acyclic graph models.
//!
//! `cutgraph` takes a DAG model whose nodes are split into observables and
//! parameters, groups the observables the analyst trusts differently, and
//! mechanizes everything that follows: building self-contained modules around
//! each observable group, ordering the modules by how information is allowed
//! to flow between them, writing down the resulting cut distribution as an
//! ordered list of conditional factors, and sampling or solving that
//! factorization for concrete model families.

pub mod cli;
pub mod dag;
pub mod experiment;
pub mod inference;
pub mod model_io;
pub mod modules;
pub mod cut;
pub mod ordering;
pub mod seed;
pub mod separation;

#[cfg(test)]
mod testutil;
