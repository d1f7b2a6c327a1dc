//! Chat gateway: dialogue state, token accounting, live / mock / replay.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const API_KEY_ENV: &str = "COVELIM_API_KEY";
pub const BASE_URL_ENV: &str = "COVELIM_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

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

/// One conversation. Cleared history means a new dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub messages: Vec<Message>,
    pub token_estimate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Live,
    Mock,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub model_id: String,
    pub temperature: f64,
    pub token_limit: usize,
    pub mode: LlmMode,
    pub transcript_path: Option<PathBuf>,
    /// Characters per estimated token.
    pub chars_per_token: usize,
    /// Retries after a failed transport attempt.
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub request_timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            model_id: "gpt-4o".into(),
            temperature: 1.0,
            token_limit: 8096,
            mode: LlmMode::Mock,
            transcript_path: None,
            chars_per_token: 4,
            max_retries: 3,
            retry_backoff_ms: 500,
            request_timeout_secs: 120,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("token limit exceeded: {estimate} > {limit}")]
    Overflow { estimate: usize, limit: usize },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("no recorded reply for request digest {digest}")]
    ReplayMismatch { digest: String },
    #[error("mock reply queue is empty")]
    MockExhausted,
    #[error("configuration: {0}")]
    Config(String),
}

/// A single-attempt failure from a client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    Retriable(String),
    Fatal(LlmError),
}

/// Something that answers a full message list.
pub trait ChatClient: Send {
    fn complete(&mut self, messages: &[Message]) -> Result<String, ClientError>;
}

/// Scripted replies; an `Err` entry is delivered as a retriable failure.
#[derive(Debug, Default)]
pub struct MockClient {
    queue: VecDeque<Result<String, String>>,
}

impl MockClient {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockClient {
            queue: replies.into_iter().map(|r| Ok(r.into())).collect(),
        }
    }

    pub fn scripted(items: impl IntoIterator<Item = Result<String, String>>) -> Self {
        MockClient {
            queue: items.into_iter().collect(),
        }
    }
}

impl ChatClient for MockClient {
    fn complete(&mut self, _messages: &[Message]) -> Result<String, ClientError> {
        match self.queue.pop_front() {
            Some(Ok(r)) => Ok(r),
            Some(Err(e)) => Err(ClientError::Retriable(e)),
            None => Err(ClientError::Fatal(LlmError::MockExhausted)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub reply: String,
}

/// Recorded exchanges, unique by digest, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let file = std::fs::File::open(path)
            .map_err(|e| LlmError::Config(format!("transcript {}: {e}", path.display())))?;
        let mut t = Transcript::default();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LlmError::Config(format!("transcript {}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
                LlmError::Config(format!("transcript {} line {}: {e}", path.display(), i + 1))
            })?;
            t.push(entry);
        }
        Ok(t)
    }

    /// Appends unless the digest is already present.
    pub fn push(&mut self, entry: TranscriptEntry) {
        if !self.entries.iter().any(|e| e.digest == entry.digest) {
            self.entries.push(entry);
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("plain strings serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())
    }
}

/// Replies looked up by request digest.
#[derive(Debug)]
pub struct ReplayClient {
    replies: HashMap<String, String>,
}

impl ReplayClient {
    pub fn new(transcript: &Transcript) -> Self {
        ReplayClient {
            replies: transcript
                .entries
                .iter()
                .map(|e| (e.digest.clone(), e.reply.clone()))
                .collect(),
        }
    }
}

impl ChatClient for ReplayClient {
    fn complete(&mut self, messages: &[Message]) -> Result<String, ClientError> {
        let digest = request_digest(messages);
        self.replies
            .get(&digest)
            .cloned()
            .ok_or(ClientError::Fatal(LlmError::ReplayMismatch { digest }))
    }
}

/// OpenAI-compatible `/chat/completions` over blocking HTTP.
pub struct HttpClient {
    http: reqwest::blocking::Client,
    url: String,
    api_key: String,
    model: String,
    temperature: f64,
}

impl HttpClient {
    pub fn new(base_url: &str, api_key: &str, config: &LlmConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpClient {
            http,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: api_key.to_string(),
            model: config.model_id.clone(),
            temperature: config.temperature,
        })
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [Message],
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
    content: Option<String>,
}

fn fatal(message: String) -> ClientError {
    ClientError::Fatal(LlmError::Transport {
        attempts: 1,
        message,
    })
}

impl ChatClient for HttpClient {
    fn complete(&mut self, messages: &[Message]) -> Result<String, ClientError> {
        let body = ChatRequest {
            model: &self.model,
            temperature: self.temperature,
            messages,
        };
        let resp = self
            .http
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ClientError::Retriable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(ClientError::Retriable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(fatal(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| fatal(format!("malformed response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| fatal("response has no message content".into()))
    }
}

/// Deterministic character-based token estimate.
pub fn estimate_tokens(text: &str, chars_per_token: usize) -> usize {
    text.chars().count().div_ceil(chars_per_token.max(1))
}

/// SHA-256 over the role-tagged message list, hex encoded.
pub fn request_digest(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(serde_json::to_string(&m.role).unwrap().as_bytes());
        h.update(b"\x00");
        h.update((m.content.len() as u64).to_le_bytes());
        h.update(m.content.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Owns a client and hands out dialogues.
pub struct Gateway {
    config: LlmConfig,
    client: Box<dyn ChatClient>,
    next_id: u64,
    sends: usize,
    recorded: Transcript,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.config.mode)
            .field("sends", &self.sends)
            .finish()
    }
}

impl Gateway {
    /// Validates `config` and builds its client. Mock mode starts with an
    /// empty queue; use [`Gateway::mock`] to script replies.
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        if config.token_limit == 0 {
            return Err(LlmError::Config("token_limit must be positive".into()));
        }
        let client: Box<dyn ChatClient> = match config.mode {
            LlmMode::Mock => Box::new(MockClient::default()),
            LlmMode::Replay => {
                let path = config
                    .transcript_path
                    .as_ref()
                    .ok_or_else(|| LlmError::Config("replay mode requires a transcript".into()))?;
                Box::new(ReplayClient::new(&Transcript::load(path)?))
            }
            LlmMode::Live => {
                let key = std::env::var(API_KEY_ENV)
                    .ok()
                    .filter(|k| !k.is_empty())
                    .ok_or_else(|| LlmError::Config(format!("live mode requires {API_KEY_ENV}")))?;
                let base = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.into());
                Box::new(HttpClient::new(&base, &key, &config)?)
            }
        };
        Ok(Self::with_client(config, client))
    }

    pub fn with_client(config: LlmConfig, client: Box<dyn ChatClient>) -> Self {
        Gateway {
            config,
            client,
            next_id: 0,
            sends: 0,
            recorded: Transcript::default(),
        }
    }

    /// Mock gateway with default limits and the given reply queue.
    pub fn mock<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_client(LlmConfig::default(), Box::new(MockClient::new(replies)))
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn new_dialogue(&mut self) -> Dialogue {
        self.next_id += 1;
        Dialogue {
            id: format!("dlg-{:04}", self.next_id),
            messages: Vec::new(),
            token_estimate: 0,
        }
    }

    /// Number of successful sends so far.
    pub fn sends(&self) -> usize {
        self.sends
    }

    /// Every exchange answered so far, replayable.
    pub fn transcript(&self) -> &Transcript {
        &self.recorded
    }

    pub fn estimate(&self, text: &str) -> usize {
        estimate_tokens(text, self.config.chars_per_token)
    }

    /// Sends `message` as the next user turn. On any error the dialogue is
    /// left unchanged.
    pub fn send(&mut self, dialogue: &mut Dialogue, message: &str) -> Result<String, LlmError> {
        let estimate = dialogue.token_estimate + self.estimate(message);
        if estimate > self.config.token_limit {
            return Err(LlmError::Overflow {
                estimate,
                limit: self.config.token_limit,
            });
        }
        let mut messages = dialogue.messages.clone();
        messages.push(Message {
            role: Role::User,
            content: message.to_string(),
        });

        let mut attempts = 0;
        let reply = loop {
            attempts += 1;
            match self.client.complete(&messages) {
                Ok(r) => break r,
                Err(ClientError::Retriable(m)) if attempts <= self.config.max_retries => {
                    log::warn!("{}: attempt {attempts} failed: {m}", dialogue.id);
                    if self.config.retry_backoff_ms > 0 {
                        std::thread::sleep(Duration::from_millis(
                            self.config.retry_backoff_ms << (attempts - 1),
                        ));
                    }
                }
                Err(ClientError::Retriable(message)) => {
                    return Err(LlmError::Transport { attempts, message })
                }
                Err(ClientError::Fatal(LlmError::Transport { message, .. })) => {
                    return Err(LlmError::Transport { attempts, message })
                }
                Err(ClientError::Fatal(e)) => return Err(e),
            }
        };

        self.recorded.push(TranscriptEntry {
            digest: request_digest(&messages),
            reply: reply.clone(),
        });
        self.sends += 1;
        dialogue.token_estimate = estimate + self.estimate(&reply);
        messages.push(Message {
            role: Role::Assistant,
            content: reply.clone(),
        });
        dialogue.messages = messages;
        Ok(reply)
    }
}
