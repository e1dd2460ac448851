pub mod batch;
pub mod bench;
pub mod dataset;
pub mod field;
pub mod iaq;
pub mod indexgen;
pub mod protocol;
pub mod query;
pub mod shamir;
