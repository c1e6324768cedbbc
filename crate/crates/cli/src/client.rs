//! Agent client that posts prompts to an HTTP endpoint.
//!
//! The request body is `{"prompt": <PromptBundle>}`. The reply is either a
//! JSON object with a `response` string or plain text.

use adaptagent::icl::{AgentClient, ClientError, PromptBundle};
use serde_json::json;

#[derive(Debug, Clone)]
pub struct HttpClient {
    endpoint: String,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpClient {
            endpoint: endpoint.into(),
        }
    }
}

impl AgentClient for HttpClient {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, ClientError> {
        let transport = |e: ureq::Error| ClientError::Transport(e.to_string());
        let mut reply = ureq::post(&self.endpoint)
            .send_json(json!({ "prompt": prompt }))
            .map_err(transport)?;
        let text = reply.body_mut().read_to_string().map_err(transport)?;
        match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(serde_json::Value::Object(map)) => map
                .get("response")
                .and_then(serde_json::Value::as_str)
                .map(str::to_owned)
                .ok_or_else(|| ClientError::Transport("reply has no response field".into())),
            _ => Ok(text),
        }
    }
}
