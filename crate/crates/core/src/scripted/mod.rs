//! Deterministic OpenAI-compatible endpoint that replays authored scenarios.

mod scenario;
mod server;

pub use scenario::{
    EmbeddingMode, Matcher, NoMatch, Scenario, ScenarioError, ScriptedCall, ScriptedReply, ScriptedTurn,
};
pub use server::{ScriptedError, ScriptedModel, ScriptedServer};
