pub mod cfg;
pub mod data;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod regress;
pub mod report;
pub mod serve;
