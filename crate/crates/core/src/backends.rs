//! Model-call seams: an OpenAI-compatible chat-completion client for the
//! describer and the responder, and deterministic mocks for both.
//!
//! Request body (keys in this order, no whitespace):
//!
//! ```json
//! {"model":"m","messages":[{"role":"user","content":[
//!   {"type":"text","text":"..."},
//!   {"type":"image_url","image_url":{"url":"data:image/png;base64,..."}}]}]}
//! ```
//!
//! The image part is present only when image bytes are supplied. Requests
//! carry an `Idempotency-Key` header derived from the body, and an
//! `Authorization: Bearer` header when a token variable is configured. The
//! reply is read from `choices[0].message.content`, either a string or a list
//! of text parts.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::describe::{mock_describe, DescriptionBackend, DescriptionSet, VlmRequest};
use crate::error::{Error, Result};
use crate::metrics::{TaskInstance, TaskKind};
use crate::model::{identifier_for, Scene};
use crate::prompt::{detect_referenced_objects, PromptBundle, SceneVocabulary};

const EXCERPT_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env_var: Option<String>,
    pub request_parallelism: usize,
    /// First retry delay; doubles on every further attempt.
    pub retry_backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::new(),
            model_name: String::new(),
            timeout_ms: 30_000,
            max_retries: 2,
            auth_token_env_var: None,
            request_parallelism: 4,
            retry_backoff_ms: 250,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be positive".into()));
        }
        if self.request_parallelism == 0 {
            return Err(Error::Config("request_parallelism must be at least 1".into()));
        }
        if self.endpoint_url.is_empty() {
            return Err(Error::Config("endpoint_url is not set".into()));
        }
        Ok(())
    }

    fn token(&self) -> Result<Option<String>> {
        match &self.auth_token_env_var {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| Error::Config(format!("environment variable {var} is not set"))),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: Vec<ContentPart>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Serialize)]
struct ImageUrl {
    url: String,
}

fn image_mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG") {
        "image/png"
    } else if bytes.starts_with(&[0xff, 0xd8]) {
        "image/jpeg"
    } else {
        "application/octet-stream"
    }
}

/// Canonical JSON body for one user turn.
pub fn chat_request_body(model: &str, text: &str, image: Option<&[u8]>) -> Vec<u8> {
    let mut content = vec![ContentPart::Text { text: text.to_string() }];
    if let Some(bytes) = image {
        let data = base64::engine::general_purpose::STANDARD.encode(bytes);
        content.push(ContentPart::ImageUrl {
            image_url: ImageUrl {
                url: format!("data:{};base64,{data}", image_mime(bytes)),
            },
        });
    }
    let req = ChatRequest {
        model,
        messages: vec![ChatMessage { role: "user", content }],
    };
    serde_json::to_vec(&req).expect("request serializes")
}

/// Hex SHA-256 prefix of the body; stable across retries.
pub fn request_id(body: &[u8]) -> String {
    Sha256::digest(body).iter().take(16).map(|b| format!("{b:02x}")).collect()
}

fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_CHARS).collect()
}

/// First text choice of a chat-completion response.
pub fn parse_chat_response(body: &str) -> Result<String> {
    let protocol = |message: &str| Error::Protocol {
        message: message.to_string(),
        excerpt: excerpt(body),
    };
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| protocol(&format!("invalid JSON: {e}")))?;
    let content = value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .ok_or_else(|| protocol("missing choices[0].message.content"))?;
    match content {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Array(parts) => {
            let texts: Vec<&str> = parts
                .iter()
                .filter(|p| p.get("type").and_then(|t| t.as_str()) == Some("text"))
                .filter_map(|p| p.get("text").and_then(|t| t.as_str()))
                .collect();
            if texts.is_empty() {
                Err(protocol("content has no text part"))
            } else {
                Ok(texts.concat())
            }
        }
        _ => Err(protocol("content is neither a string nor a list of parts")),
    }
}

/// Blocking chat-completion client. Cheap to clone and safe to share across threads.
#[derive(Debug, Clone)]
pub struct ChatClient {
    config: BackendConfig,
    agent: ureq::Agent,
}

impl ChatClient {
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Sends one user turn, retrying transport failures, 429 and 5xx.
    pub fn complete(&self, text: &str, image: Option<&[u8]>) -> Result<String> {
        let body = chat_request_body(&self.config.model_name, text, image);
        let id = request_id(&body);
        let token = self.config.token()?;
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let delay = self.config.retry_backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::debug!("request {id}: retry {attempt} in {delay} ms");
                std::thread::sleep(Duration::from_millis(delay));
            }
            let mut req = self
                .agent
                .post(&self.config.endpoint_url)
                .header("Content-Type", "application/json")
                .header("Idempotency-Key", &id);
            if let Some(t) = &token {
                req = req.header("Authorization", format!("Bearer {t}"));
            }
            let mut response = match req.send(&body[..]) {
                Ok(r) => r,
                Err(e) => {
                    last = format!("transport: {e}");
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = match response.body_mut().read_to_string() {
                Ok(t) => t,
                Err(e) => {
                    last = format!("reading body: {e}");
                    continue;
                }
            };
            match status {
                200..=299 => return parse_chat_response(&text),
                429 | 500..=599 => last = format!("HTTP {status}: {}", excerpt(&text)),
                _ => return Err(Error::Backend(format!("HTTP {status}: {}", excerpt(&text)))),
            }
        }
        Err(Error::Backend(format!(
            "{} failed after {} attempts: {last}",
            self.config.endpoint_url,
            self.config.max_retries + 1
        )))
    }
}

/// Sends a describer request. No image renderer is attached, so the
/// annotation overlay travels as text after the prompt.
pub fn vlm_describe(client: &ChatClient, request: &VlmRequest, image: Option<&[u8]>) -> Result<String> {
    let text = format!("{}\n{}", request.prompt_text, request.annotation_text());
    client.complete(&text, image)
}

pub fn llm_answer(client: &ChatClient, bundle: &PromptBundle) -> Result<String> {
    client.complete(&bundle.full_text, None)
}

/// Describer backed by [`ChatClient`]. Images are read from the view's
/// `image_ref` when present.
pub struct HttpVlm<'a> {
    pub client: ChatClient,
    pub scene: &'a Scene,
}

impl DescriptionBackend for HttpVlm<'_> {
    fn describe(&self, request: &VlmRequest) -> Result<String> {
        let image = match self.scene.view(&request.view_id).and_then(|v| v.image_ref.as_ref()) {
            Some(path) => Some(std::fs::read(path).map_err(|e| Error::io(path, e))?),
            None => None,
        };
        vlm_describe(&self.client, request, image.as_deref())
    }
}

/// Geometric describer; see [`mock_describe`].
pub struct MockVlm<'a> {
    pub scene: &'a Scene,
}

impl DescriptionBackend for MockVlm<'_> {
    fn describe(&self, request: &VlmRequest) -> Result<String> {
        let view = self
            .scene
            .view(&request.view_id)
            .ok_or_else(|| Error::domain(format!("unknown view {}", request.view_id)))?;
        mock_describe(request, self.scene, view)
    }
}

/// Something that answers a task given its prompt.
pub trait Responder: Sync {
    fn answer(&self, task: &TaskInstance, bundle: &PromptBundle) -> Result<String>;
}

impl Responder for ChatClient {
    fn answer(&self, _task: &TaskInstance, bundle: &PromptBundle) -> Result<String> {
        llm_answer(self, bundle)
    }
}

fn ngrams(tokens: &[String], max_n: usize) -> BTreeSet<Vec<String>> {
    (1..=max_n)
        .flat_map(|n| tokens.windows(n).map(|w| w.to_vec()).collect::<Vec<_>>())
        .collect()
}

/// Deterministic responder over the raw scene descriptions.
///
/// - single grounding: identifier of the object whose description shares the
///   most distinct 1..4-grams with the query (lowest index on ties);
/// - multi grounding: identifiers of every object the query mentions;
/// - captioning: the mentioned (else best-matching) object's identifier,
///   then its description;
/// - QA: the category of the best-matching object.
pub struct MockLlm<'a> {
    pub scene: &'a Scene,
    pub descriptions: &'a DescriptionSet,
}

impl MockLlm<'_> {
    pub fn best_match(&self, query: &str) -> Option<usize> {
        let q = ngrams(&crate::metrics::tokenize(query), 4);
        let mut best: Option<(usize, usize)> = None;
        for (&idx, record) in self.descriptions {
            if record.is_missing() {
                continue;
            }
            let d = ngrams(&crate::metrics::tokenize(&record.text), 4);
            let shared = d.intersection(&q).count();
            if shared > 0 && best.is_none_or(|(s, _)| shared > s) {
                best = Some((shared, idx));
            }
        }
        best.map(|(_, i)| i)
    }
}

impl Responder for MockLlm<'_> {
    fn answer(&self, task: &TaskInstance, _bundle: &PromptBundle) -> Result<String> {
        let vocab = SceneVocabulary::new(self.scene);
        let answer = match task.task_kind {
            TaskKind::GroundSingle => self.best_match(&task.query).map(identifier_for).unwrap_or_default(),
            TaskKind::GroundMulti => detect_referenced_objects(&task.query, &vocab)
                .into_iter()
                .map(identifier_for)
                .collect::<Vec<_>>()
                .join(" "),
            TaskKind::Caption => {
                let target = detect_referenced_objects(&task.query, &vocab)
                    .first()
                    .copied()
                    .or_else(|| self.best_match(&task.query));
                match target.and_then(|i| self.descriptions.get(&i).map(|r| (i, r))) {
                    Some((i, r)) => format!("{} {}", identifier_for(i), r.text),
                    None => String::new(),
                }
            }
            TaskKind::Qa => self
                .best_match(&task.query)
                .and_then(|i| self.scene.object(i))
                .map(|o| o.display_label().to_string())
                .unwrap_or_default(),
        };
        Ok(answer)
    }
}

/// Answers for a batch of prompts with at most `parallelism` calls in flight,
/// returned in input order.
pub fn answer_all<R: Responder + ?Sized>(
    responder: &R,
    items: &[(TaskInstance, PromptBundle)],
    parallelism: usize,
) -> Vec<Result<String>> {
    let workers = parallelism.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(|(t, b)| responder.answer(t, b)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(BTreeMap::new());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((t, b)) = items.get(i) else { break };
                let outcome = responder.answer(t, b);
                slots.lock().expect("answer slots poisoned").insert(i, outcome);
            });
        }
    });
    slots.into_inner().expect("answer slots poisoned").into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_is_canonical() {
        let body = chat_request_body("m", "hi", None);
        assert_eq!(
            String::from_utf8(body).unwrap(),
            r#"{"model":"m","messages":[{"role":"user","content":[{"type":"text","text":"hi"}]}]}"#
        );
        let with_image = String::from_utf8(chat_request_body("m", "hi", Some(b"\x89PNGxx"))).unwrap();
        assert!(with_image.contains(r#"{"type":"image_url","image_url":{"url":"data:image/png;base64,iVBOR3h4"}}"#));
    }

    #[test]
    fn request_id_is_stable() {
        let a = request_id(b"abc");
        assert_eq!(a, request_id(b"abc"));
        assert_eq!(a.len(), 32);
        assert_ne!(a, request_id(b"abd"));
    }

    #[test]
    fn response_parsing() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"a chair"}}]}"#;
        assert_eq!(parse_chat_response(ok).unwrap(), "a chair");
        let parts = r#"{"choices":[{"message":{"content":[{"type":"text","text":"a "},{"type":"text","text":"lamp"}]}}]}"#;
        assert_eq!(parse_chat_response(parts).unwrap(), "a lamp");
        match parse_chat_response("not json").unwrap_err() {
            Error::Protocol { excerpt, .. } => assert_eq!(excerpt, "not json"),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse_chat_response(r#"{"choices":[]}"#), Err(Error::Protocol { .. })));
    }

    #[test]
    fn config_validation() {
        let mut c = BackendConfig {
            endpoint_url: "http://localhost:1/v1".into(),
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        c.timeout_ms = 0;
        assert!(c.validate().is_err());
        c.timeout_ms = 1;
        c.request_parallelism = 0;
        assert!(c.validate().is_err());
    }
}
