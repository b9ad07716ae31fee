//! Model-output perspective: text-generation metrics and their aggregation.

mod metrics;
mod report;

pub use metrics::*;
pub use report::*;
