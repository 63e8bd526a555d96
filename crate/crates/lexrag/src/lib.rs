//! Std side of lexrag: corpus files, on-disk indexes, embedding and chat
//! clients, the agent loop, evaluation, load benchmarking, the HTTP search
//! service and configuration. The search engine itself is `lexrag-core`,
//! re-exported here as [`core`].

pub use lexrag_core as core;

pub mod agent;
pub mod bench;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod llm;
pub mod retrieval;
pub mod service;
pub mod store;
