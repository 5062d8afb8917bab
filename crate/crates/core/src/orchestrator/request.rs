use super::session::{ChatMessage, ChatSession, Role};
use super::tools::ToolRegistry;
use crate::audit::RetrievedPassage;
use crate::protocol::{ChatCompletionRequest, WireFunctionCall, WireMessage, WireToolCall};

pub const CONTEXT_OPEN: &str = "<context>";
pub const CONTEXT_CLOSE: &str = "</context>";

/// Delimited block of retrieved passages, best first. `None` when there are none.
pub fn context_block(passages: &[RetrievedPassage]) -> Option<String> {
    if passages.is_empty() {
        return None;
    }
    let mut out = String::from(CONTEXT_OPEN);
    out.push('\n');
    for (i, p) in passages.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!(
            "[{}] {} #{} (score {:.4})\n",
            i + 1,
            p.source,
            p.ordinal,
            p.score
        ));
        out.push_str(p.text.trim_end());
        out.push('\n');
    }
    out.push_str(CONTEXT_CLOSE);
    Some(out)
}

/// The user's own text of a message that may start with a context block.
pub fn strip_context(content: &str) -> &str {
    if let Some(rest) = content.strip_prefix(CONTEXT_OPEN) {
        if let Some(end) = rest.find(&format!("\n{CONTEXT_CLOSE}")) {
            return rest[end + CONTEXT_CLOSE.len() + 1..].trim_start_matches('\n');
        }
    }
    content
}

fn wire_message(message: &ChatMessage, content: String) -> WireMessage {
    let tool_calls = (!message.tool_calls.is_empty()).then(|| {
        message
            .tool_calls
            .iter()
            .map(|c| WireToolCall {
                id: c.call_id.clone(),
                kind: "function".into(),
                function: WireFunctionCall {
                    name: c.tool_name.clone(),
                    arguments: c.arguments.clone(),
                },
            })
            .collect()
    });
    let content = if content.is_empty() && tool_calls.is_some() {
        None
    } else {
        Some(content)
    };
    WireMessage {
        role: message.role.as_str().to_string(),
        content,
        tool_calls,
        tool_call_id: message.tool_call_id.clone(),
    }
}

/// Builds the chat-completions request for the session's current state.
/// Retrieved passages go into the latest user message only.
pub fn assemble_request(
    session: &ChatSession,
    registry: &ToolRegistry,
    retrieved: &[RetrievedPassage],
) -> ChatCompletionRequest {
    let last_user = session.messages.iter().rposition(|m| m.role == Role::User);
    let block = context_block(retrieved);
    let messages = session
        .messages
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let content = match (&block, Some(i) == last_user) {
                (Some(block), true) => format!("{block}\n\n{}", m.content),
                _ => m.content.clone(),
            };
            wire_message(m, content)
        })
        .collect();
    let strip_min_p = session.stripped_fields.iter().any(|f| f == "min_p");
    let tools = registry.wire_tools();
    ChatCompletionRequest {
        model: session.model_id.clone(),
        messages,
        tool_choice: (!tools.is_empty()).then(|| "auto".to_string()),
        tools,
        temperature: Some(session.sampling.temperature),
        top_p: Some(session.sampling.top_p),
        min_p: (!strip_min_p).then_some(session.sampling.min_p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::session::{SamplingConfig, ToolCall};

    fn session(sampling: SamplingConfig) -> ChatSession {
        ChatSession {
            session_id: "s".into(),
            model_id: "m".into(),
            sampling,
            messages: vec![
                ChatMessage::system("sys"),
                ChatMessage::user("first"),
                ChatMessage::assistant(
                    "",
                    vec![ToolCall::new(
                        "c1",
                        "get_methods",
                        &serde_json::json!({"path": "A.java"}),
                    )],
                ),
                ChatMessage::tool("c1", "{}"),
                ChatMessage::user("second"),
            ],
            tools: vec![],
            inventory_loaded: false,
            knowledge_base: None,
            stripped_fields: vec![],
            closed: false,
        }
    }

    fn passage(id: &str, score: f64, text: &str) -> RetrievedPassage {
        RetrievedPassage {
            chunk_id: id.into(),
            source: "docs/a.md".into(),
            ordinal: 0,
            score,
            text: text.into(),
        }
    }

    #[test]
    fn context_goes_into_latest_user_message_in_order() {
        let s = session(SamplingConfig::DEFAULT);
        let req = assemble_request(
            &s,
            &ToolRegistry::repository_tools(),
            &[passage("a", 0.9, "alpha text"), passage("b", 0.5, "beta text")],
        );
        assert_eq!(req.messages[0].role, "system");
        assert_eq!(req.messages[1].content.as_deref(), Some("first"));
        let last = req.messages[4].content.as_deref().unwrap();
        assert!(last.starts_with(CONTEXT_OPEN));
        assert!(last.find("alpha text").unwrap() < last.find("beta text").unwrap());
        assert!(last.ends_with("\n\nsecond"));
        assert_eq!(strip_context(last), "second");
        assert_eq!(req.messages[2].content, None);
        assert_eq!(req.messages[3].tool_call_id.as_deref(), Some("c1"));
        assert_eq!(req.tool_choice.as_deref(), Some("auto"));
        assert_eq!(req.tools[0].function.name, "file_path_finder");
    }

    #[test]
    fn empty_retrieval_emits_no_block() {
        let s = session(SamplingConfig::DEFAULT);
        let req = assemble_request(&s, &ToolRegistry::repository_tools(), &[]);
        let json = serde_json::to_string(&req).unwrap();
        assert!(!json.contains(CONTEXT_OPEN));
        assert_eq!(strip_context("plain"), "plain");
    }

    #[test]
    fn sampling_is_copied_verbatim() {
        let mut s = session(SamplingConfig::new(0.3, 1.0, 0.3).unwrap());
        let req = assemble_request(&s, &ToolRegistry::repository_tools(), &[]);
        assert_eq!(
            (req.temperature, req.top_p, req.min_p),
            (Some(0.3), Some(1.0), Some(0.3))
        );
        s.stripped_fields.push("min_p".into());
        let req = assemble_request(&s, &ToolRegistry::repository_tools(), &[]);
        assert_eq!(req.min_p, None);
    }
}
