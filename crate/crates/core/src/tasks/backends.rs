//! Deterministic agent backends for tests and offline runs.

use crate::exec::{AgentBackend, BackendError, BackendRequest, BackendResponse};
use crate::seeding::fnv1a;
use std::collections::HashMap;

/// Synthetic backend: replies with a short acknowledgment derived from the
/// request, so identical inputs always produce identical outputs and
/// different inputs almost always differ.
#[derive(Debug, Clone, Default)]
pub struct EchoBackend;

impl AgentBackend for EchoBackend {
    fn respond(&self, request: &BackendRequest<'_>) -> Result<BackendResponse, BackendError> {
        let digest = fnv1a(request.user_content.bytes()) & 0xFFFF_FFFF;
        let text = match request.node {
            Some(node) => format!("{}@n{}: ack {:08x}", request.system_prompt, node, digest),
            None => format!("{}: ack {:08x}", request.system_prompt, digest),
        };
        Ok(BackendResponse::text_only(text))
    }
}

/// Backend with a fixed reply per node (`None` keys the aggregation call).
/// Optionally reports fake provider usage counts.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    replies: HashMap<Option<usize>, String>,
    usage: Option<(u64, u64)>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reply(mut self, node: Option<usize>, text: impl Into<String>) -> Self {
        self.replies.insert(node, text.into());
        self
    }

    /// Report `(prompt_tokens, completion_tokens)` with every reply.
    pub fn with_usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.usage = Some((prompt_tokens, completion_tokens));
        self
    }
}

impl AgentBackend for ScriptedBackend {
    fn respond(&self, request: &BackendRequest<'_>) -> Result<BackendResponse, BackendError> {
        let key = request.node.map(|n| n.index());
        let text = self
            .replies
            .get(&key)
            .cloned()
            .ok_or_else(|| BackendError::Protocol(format!("no scripted reply for node {key:?}")))?;
        Ok(BackendResponse {
            text,
            prompt_tokens: self.usage.map(|(p, _)| p),
            completion_tokens: self.usage.map(|(_, c)| c),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;

    #[test]
    fn echo_is_deterministic_and_input_sensitive() {
        let backend = EchoBackend;
        let req = BackendRequest {
            system_prompt: "Critic",
            user_content: "hello",
            node: Some(NodeId::new(3)),
        };
        let a = backend.respond(&req).unwrap();
        let b = backend.respond(&req).unwrap();
        assert_eq!(a.text, b.text);
        assert!(a.text.starts_with("Critic@n3: ack "));

        let other = BackendRequest {
            user_content: "different",
            ..req
        };
        assert_ne!(backend.respond(&other).unwrap().text, a.text);
    }

    #[test]
    fn scripted_backend_errors_on_unknown_node() {
        let backend = ScriptedBackend::new().reply(Some(0), "hi");
        let req = BackendRequest {
            system_prompt: "r",
            user_content: "c",
            node: Some(NodeId::new(1)),
        };
        assert!(matches!(
            backend.respond(&req),
            Err(BackendError::Protocol(_))
        ));
    }
}
