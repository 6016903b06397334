//! Selectivity estimation over relational data with linked Bayesian networks.
//!
//! Each relation gets a Chow-Liu tree over its attributes. Relations that
//! reference others through foreign keys also model a few attributes of the
//! referenced relation, measured after the join, so that the per-relation
//! trees can be stitched into a single tree at query time and evaluated with
//! sum-product variable elimination.
//!
//! Module map:
//!
//! - [`catalog`]: schema, CSV ingestion and dictionary encoding
//! - [`factor`]: marginals and conditional probability tables
//! - [`structure`]: mutual information, maximum spanning trees, tree BNs
//! - [`linker`]: construction of the linked model across PK/FK edges
//! - [`query`]: query representation and parsing
//! - [`inference`]: stitching, Steiner pruning and variable elimination
//! - [`baselines`]: attribute-value-independence and sampling estimators
//! - [`oracle`]: exact selectivities
//! - [`workload`]: workload expansion, q-error and benchmark reports
//! - [`synth`]: synthetic databases used by tests, benches and the demo

pub mod baselines;
pub mod catalog;
mod error;
pub mod factor;
pub mod inference;
pub mod linker;
pub mod oracle;
pub mod query;
pub mod structure;
pub mod synth;
mod timing;
pub mod workload;

pub use error::{Error, Result};

/// Method tags shared by every estimator.
pub mod method {
    pub const AVI: &str = "avi";
    pub const SAMPLING: &str = "sampling";
    pub const CORRELATED: &str = "correlated";

    pub fn linked(k: usize) -> String {
        format!("k{k}")
    }
}
