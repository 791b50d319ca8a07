//! Automatic horizontal partitioning for UDF-centric analytics workloads.
//!
//! Workloads are IR graphs ([`ir`]). Partitioner candidates for a dataset are
//! two-terminal subgraphs found in the IRs of its historical consumers
//! ([`enumerate`], [`history`]); an actor-critic policy ([`rl`]) trained
//! against a shuffle simulator ([`sim`]) picks one from their features
//! ([`features`]), and applied partitionings are recognised in running
//! consumers by path signatures ([`signature`]). [`advisor`] ties the flows
//! together.

pub mod advisor;
pub mod analysis;
pub mod enumerate;
pub mod features;
pub mod fixtures;
pub mod history;
pub mod ir;
pub mod rl;
pub mod signature;
pub mod sim;
