//! Pluggable text generation: a recorded-fixture replay provider, a live
//! chat-completion HTTP provider and a recorder that promotes live output
//! to fixtures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::StepIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// What a request is for; part of the fixture key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTags {
    pub kind: String,
    pub doc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepIndex>,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub tags: RequestTags,
    pub messages: Vec<Message>,
}

impl CompletionRequest {
    /// Hex SHA-256 over the canonical JSON of tags and messages.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// The last user message.
    pub fn prompt(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no recorded fixture for request {hash}")]
    FixtureMiss { hash: String },
    #[error("provider HTTP error{}: {message}", .status.map(|s| format!(" {s}")).unwrap_or_default())]
    Http { status: Option<u16>, message: String },
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Fixture,
}

impl std::str::FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(ProviderMode::Live),
            "fixture" => Ok(ProviderMode::Fixture),
            other => Err(format!(
                "unknown provider mode `{other}` (expected live or fixture)"
            )),
        }
    }
}

pub trait GenerationProvider: Send + Sync {
    fn mode(&self) -> ProviderMode;
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

/// Replays responses stored as `<hash>.txt`.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    pub dir: PathBuf,
}

impl FixtureProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl GenerationProvider for FixtureProvider {
    fn mode(&self) -> ProviderMode {
        ProviderMode::Fixture
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let hash = request.content_hash();
        let path = self.dir.join(format!("{hash}.txt"));
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ProviderError::FixtureMiss { hash }),
            Err(e) => Err(ProviderError::Io { path, source: e }),
        }
    }
}

/// Chat-completion endpoint (`POST {base_url}/chat/completions`).
#[derive(Debug, Clone)]
pub struct LiveProvider {
    pub base_url: String,
    pub model: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl LiveProvider {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: api_key.into(),
            client: reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(300))
                .build()
                .expect("http client"),
        }
    }

    /// Reads `EXPLORABLE_PROVIDER_URL`, `EXPLORABLE_PROVIDER_MODEL` and the
    /// key from `EXPLORABLE_PROVIDER_KEY`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let var = |k: &str| std::env::var(k).map_err(|_| ProviderError::Config(format!("{k} is not set")));
        Ok(Self::new(
            var("EXPLORABLE_PROVIDER_URL")?,
            var("EXPLORABLE_PROVIDER_MODEL")?,
            var("EXPLORABLE_PROVIDER_KEY")?,
        ))
    }
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl GenerationProvider for LiveProvider {
    fn mode(&self) -> ProviderMode {
        ProviderMode::Live
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let http = |e: reqwest::Error| ProviderError::Http {
            status: e.status().map(|s| s.as_u16()),
            message: e.to_string(),
        };
        let resp = self
            .client
            .post(url)
            .bearer_auth(&self.api_key)
            .json(&ChatBody {
                model: &self.model,
                messages: &request.messages,
                temperature: 0.0,
            })
            .send()
            .map_err(http)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Http {
                status: Some(status.as_u16()),
                message: resp.text().unwrap_or_default(),
            });
        }
        let body: ChatResponse = resp.json().map_err(http)?;
        body.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Http {
                status: Some(status.as_u16()),
                message: "response has no choices".into(),
            })
    }
}

/// Wraps a provider and stores every response as a fixture, alongside the
/// request that produced it.
pub struct RecordingProvider<P> {
    inner: P,
    dir: PathBuf,
    lock: Mutex<()>,
}

impl<P: GenerationProvider> RecordingProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl<P: GenerationProvider> GenerationProvider for RecordingProvider<P> {
    fn mode(&self) -> ProviderMode {
        self.inner.mode()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let text = self.inner.complete(request)?;
        let hash = request.content_hash();
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let io = |path: PathBuf| move |e| ProviderError::Io { path, source: e };
        std::fs::create_dir_all(&self.dir).map_err(io(self.dir.clone()))?;
        let req_path = self.dir.join(format!("{hash}.request.txt"));
        let rendered = render_request(request);
        std::fs::write(&req_path, rendered).map_err(io(req_path.clone()))?;
        let path = self.dir.join(format!("{hash}.txt"));
        std::fs::write(&path, &text).map_err(io(path.clone()))?;
        Ok(text)
    }
}

fn render_request(request: &CompletionRequest) -> String {
    let mut out = format!(
        "kind: {}\ndoc: {}\nstep: {}\nattempt: {}\n",
        request.tags.kind,
        request.tags.doc,
        request
            .tags
            .step
            .map(|s| s.to_string())
            .unwrap_or_else(|| "-".into()),
        request.tags.attempt
    );
    for m in &request.messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push_str(&format!("\n=== {role} ===\n{}\n", m.content));
    }
    out
}

/// Versioned prompt files compiled into the crate.
pub mod prompts {
    pub const VERSION: &str = "v1";
    pub const SYSTEM: &str = include_str!("../prompts/system.v1.txt");
    pub const FORMALIZE: &str = include_str!("../prompts/formalize.v1.txt");
    pub const REPAIR: &str = include_str!("../prompts/repair.v1.txt");
    pub const LINK: &str = include_str!("../prompts/link.v1.txt");
    pub const TEMPLATE: &str = include_str!("../prompts/template.v1.txt");
    pub const TEMPLATE_RETRY: &str = include_str!("../prompts/template_retry.v1.txt");
}

/// Fills `<<name>>` slots in a prompt. Unknown slots are left in place.
pub fn fill_prompt(template: &str, slots: &BTreeMap<&str, String>) -> String {
    let mut out = template.to_string();
    for (k, v) in slots {
        out = out.replace(&format!("<<{k}>>"), v);
    }
    out
}

/// The first fenced code block of a response, or the whole response.
pub fn extract_code_block(response: &str) -> String {
    let mut lines = response.lines();
    let mut in_block = false;
    let mut block = Vec::new();
    for line in lines.by_ref() {
        if line.trim_start().starts_with("```") {
            if in_block {
                return block.join("\n") + "\n";
            }
            in_block = true;
            continue;
        }
        if in_block {
            block.push(line);
        }
    }
    if in_block {
        block.join("\n") + "\n"
    } else {
        response.to_string()
    }
}
