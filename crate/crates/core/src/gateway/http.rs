use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::templates::RenderedPrompt;
use super::{BackendProfile, Completion, ProviderUsage, Transport, TransportError};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ProviderUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-style chat-completion client. `profile.endpoint` is the full URL
/// of the completions route.
pub struct HttpTransport {
    client: Client,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(api_key: Option<String>, timeout: Duration) -> Result<Self, TransportError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Fatal(e.to_string()))?;
        Ok(Self { client, api_key })
    }

    /// Reads the key from the role's `SQLVEIL_*_API_KEY` variable.
    pub fn from_env(role: super::Role, timeout: Duration) -> Result<Self, TransportError> {
        Self::new(std::env::var(role.api_key_var()).ok(), timeout)
    }
}

impl Transport for HttpTransport {
    fn send(
        &self,
        profile: &BackendProfile,
        prompt: &RenderedPrompt,
    ) -> Result<Completion, TransportError> {
        let body = ChatRequest {
            model: &profile.model,
            temperature: profile.temperature,
            messages: [ChatMessage {
                role: "user",
                content: prompt.text(),
            }],
        };
        let mut req = self.client.post(&profile.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                TransportError::Transient(e.to_string())
            } else {
                TransportError::Fatal(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            let msg = format!(
                "HTTP {status}: {}",
                detail.chars().take(300).collect::<String>()
            );
            return Err(if matches!(status.as_u16(), 408 | 429 | 500..=599) {
                TransportError::Transient(msg)
            } else {
                TransportError::Fatal(msg)
            });
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| TransportError::Fatal(format!("malformed completion body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Fatal("completion has no choices".into()))?;
        Ok(Completion {
            text,
            usage: parsed.usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::net::TcpListener;

    use super::*;
    use crate::gateway::{render_prompt, Role, TemplateId};
    use crate::testutil::serve;

    fn prompt() -> RenderedPrompt {
        render_prompt(
            TemplateId::ClassifyToken,
            &[("categories", "a"), ("token", "b")],
        )
        .unwrap()
    }

    #[test]
    fn posts_chat_completion_and_reads_usage() {
        let (url, handle) = serve(vec![(
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"SELECT 1"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#.into(),
        )]);
        let t = HttpTransport::new(Some("k".into()), Duration::from_secs(5)).unwrap();
        let profile = BackendProfile::new(Role::TrustedSlm, url, "qwen");
        let c = t.send(&profile, &prompt()).unwrap();
        assert_eq!(c.text, "SELECT 1");
        assert_eq!(
            c.usage,
            Some(ProviderUsage {
                prompt_tokens: 7,
                completion_tokens: 2
            })
        );
        let (path, body) = &handle.join().unwrap()[0];
        assert_eq!(path, "/v1/chat/completions");
        let body: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(body["model"], "qwen");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["content"], prompt().text());
    }

    #[test]
    fn classifies_status_codes() {
        let (url, handle) = serve(vec![(503, "{}".into()), (400, "{}".into())]);
        let t = HttpTransport::new(None, Duration::from_secs(5)).unwrap();
        let profile = BackendProfile::new(Role::TrustedSlm, url, "m");
        assert!(matches!(
            t.send(&profile, &prompt()),
            Err(TransportError::Transient(_))
        ));
        assert!(matches!(
            t.send(&profile, &prompt()),
            Err(TransportError::Fatal(_))
        ));
        handle.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_is_transient() {
        let port = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let t = HttpTransport::new(None, Duration::from_secs(2)).unwrap();
        let profile =
            BackendProfile::new(Role::TrustedSlm, format!("http://127.0.0.1:{port}/x"), "m");
        assert!(matches!(
            t.send(&profile, &prompt()),
            Err(TransportError::Transient(_))
        ));
    }
}
