pub mod audit;
pub mod code;
pub mod docs;
pub mod harness;
pub mod http;
pub mod orchestrator;
pub mod protocol;
pub mod repo;
pub mod scripted;
