//! Dialect-robustness evaluation toolkit: corpus loading, string metrics,
//! noise injection, challenge sets, meta-evaluation statistics and reports.

pub mod challenge;
pub mod corpus;
pub mod metrics;
pub mod noise;
pub mod report;
pub mod stats;
pub mod synth;
pub mod tokenize;
pub(crate) mod tsv;
