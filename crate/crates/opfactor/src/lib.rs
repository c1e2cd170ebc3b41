//! File formats, durable enrollment store, evaluation reports and the
//! authentication gateway built on `opfactor-core`.

pub mod config;
pub mod corpus;
pub mod pnm;
pub mod protocol;
pub mod report;
pub mod server;
pub mod service;
pub mod store;
pub mod wav;
