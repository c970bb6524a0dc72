pub mod artifacts;
pub mod assets;
pub mod cluster;
pub mod diag;
pub mod engine;
pub mod metrics;
pub mod payload;
pub mod predicate;
pub mod quantity;
pub mod scheduler;
pub mod workflow;
pub mod yaml;
