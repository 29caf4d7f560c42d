pub mod agent;
pub mod config;
pub mod digest;
pub mod fsutil;
pub mod ingest;
pub mod llm;
pub mod net;
pub mod pipeline;
pub mod runtime;
pub mod sandbox;
pub mod stages;
pub mod store;
