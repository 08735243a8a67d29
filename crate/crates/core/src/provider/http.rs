use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendReply, CompletionBackend, CompletionRequest, ProviderConfig, ProviderError};

/// OpenAI-style `POST /chat/completions` client. Works with any compatible
/// endpoint; the model is selected by name in the body.
pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    auth_token_env: String,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// `base/chat/completions` unless the endpoint already names the route. A
/// query string stays at the end.
pub fn chat_url(endpoint: &str) -> String {
    let trimmed = endpoint.trim();
    let (base, query) = match trimmed.find('?') {
        Some(at) => trimmed.split_at(at),
        None => (trimmed, ""),
    };
    let base = base.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        format!("{base}{query}")
    } else {
        format!("{base}/chat/completions{query}")
    }
}

fn retryable_status(status: u16) -> bool {
    matches!(status, 408 | 409 | 425 | 429) || status >= 500
}

impl HttpChatBackend {
    pub fn new(config: &ProviderConfig) -> Result<Self, ProviderError> {
        let endpoint = config.endpoint.as_deref().ok_or_else(|| ProviderError::InvalidConfig("endpoint: required".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::InvalidConfig(format!("http client: {e}")))?;
        Ok(HttpChatBackend {
            client,
            url: chat_url(endpoint),
            model: config.model_name.clone(),
            auth_token_env: config.auth_token_env.clone(),
        })
    }

    fn token(&self) -> Result<Option<String>, ProviderError> {
        if self.auth_token_env.is_empty() {
            return Ok(None);
        }
        match std::env::var(&self.auth_token_env) {
            Ok(t) if !t.is_empty() => Ok(Some(t)),
            _ => Err(ProviderError::MissingToken(self.auth_token_env.clone())),
        }
    }
}

impl CompletionBackend for HttpChatBackend {
    fn call(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage { role: "user", content: &request.prompt }],
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(token) = self.token().map_err(BackendError::Fatal)? {
            builder = builder.bearer_auth(token);
        }
        let response = builder
            .send()
            .map_err(|e| BackendError::Retryable { status: e.status().map(|s| s.as_u16()), message: e.without_url().to_string() })?;
        let status = response.status().as_u16();
        if !response.status().is_success() {
            // bodies are truncated: error pages can be large
            let mut message = response.text().unwrap_or_default();
            message.truncate(500);
            return Err(match status {
                401 | 403 => BackendError::Fatal(ProviderError::Auth { status, message }),
                s if retryable_status(s) => BackendError::Retryable { status: Some(s), message },
                s => BackendError::Fatal(ProviderError::Transport {
                    tag: request.request_tag.clone(),
                    attempts: 1,
                    status: Some(s),
                    message,
                }),
            });
        }
        let parsed: ChatResponse = response.json().map_err(|e| BackendError::Retryable {
            status: Some(status),
            message: format!("unreadable response body: {}", e.without_url()),
        })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Retryable { status: Some(status), message: "response has no message content".into() })?;
        Ok(BackendReply { text, model: parsed.model.unwrap_or_else(|| self.model.clone()) })
    }

    fn is_networked(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_building() {
        assert_eq!(chat_url("http://h:1/v1"), "http://h:1/v1/chat/completions");
        assert_eq!(chat_url("http://h:1/v1/"), "http://h:1/v1/chat/completions");
        assert_eq!(chat_url("http://h/v1/chat/completions"), "http://h/v1/chat/completions");
        assert_eq!(chat_url("http://h/v1/?key=x"), "http://h/v1/chat/completions?key=x");
    }

    #[test]
    fn status_classes() {
        assert!(retryable_status(429));
        assert!(retryable_status(503));
        assert!(!retryable_status(400));
        assert!(!retryable_status(401));
    }
}
