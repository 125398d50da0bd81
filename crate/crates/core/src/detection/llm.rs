use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::rest::map_reqwest_error;
use super::{
    Classification, ClassificationInput, Detector, DetectorError, DetectorErrorKind, Verdict,
};
use crate::config::DetectionSettings;

/// Classification prompt; `{text}` is replaced by the selected issue text.
pub const DEFAULT_PROMPT: &str = include_str!("../../assets/llm_prompt.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmProvider {
    OpenAi,
    Anthropic,
    Gemini,
}

impl LlmProvider {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "openai" => Some(LlmProvider::OpenAi),
            "anthropic" => Some(LlmProvider::Anthropic),
            "gemini" | "google" => Some(LlmProvider::Gemini),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LlmProvider::OpenAi => "openai",
            LlmProvider::Anthropic => "anthropic",
            LlmProvider::Gemini => "gemini",
        }
    }

    pub fn api_key_var(self) -> &'static str {
        match self {
            LlmProvider::OpenAi => "OPENAI_API_KEY",
            LlmProvider::Anthropic => "ANTHROPIC_API_KEY",
            LlmProvider::Gemini => "GEMINI_API_KEY",
        }
    }

    fn default_base(self) -> &'static str {
        match self {
            LlmProvider::OpenAi => "https://api.openai.com/v1",
            LlmProvider::Anthropic => "https://api.anthropic.com/v1",
            LlmProvider::Gemini => "https://generativelanguage.googleapis.com/v1beta",
        }
    }
}

/// One provider round trip. Swapped out for a mock in tests.
pub trait LlmTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<Value, DetectorError>;
}

pub struct HttpLlmTransport {
    client: Client,
}

impl HttpLlmTransport {
    pub fn new(timeout: Duration) -> Result<Self, DetectorError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| DetectorError::new(DetectorErrorKind::Network, e.to_string()))?;
        Ok(Self { client })
    }
}

impl LlmTransport for HttpLlmTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<Value, DetectorError> {
        let mut req = self.client.post(url).json(body);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let resp = req.send().map_err(map_reqwest_error)?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(DetectorError::new(
                DetectorErrorKind::Auth,
                format!("provider rejected credentials ({status})"),
            ));
        }
        if !status.is_success() {
            return Err(DetectorError::bad_response(format!("provider answered {status}")));
        }
        resp.json().map_err(map_reqwest_error)
    }
}

type KeySource = Arc<dyn Fn(&str) -> Option<String> + Send + Sync>;

/// Prompts a hosted LLM and accepts only an exact `TD` / `non-TD` answer.
pub struct LlmDetector {
    provider: LlmProvider,
    model: String,
    prompt: String,
    base_url: String,
    key_var: String,
    name: String,
    keys: KeySource,
    transport: Arc<dyn LlmTransport>,
}

pub(crate) fn timeout_param(settings: &DetectionSettings) -> Result<Option<Duration>, DetectorError> {
    match settings.plugin_params.get("timeout-secs") {
        None => Ok(None),
        Some(v) => match v.parse::<u64>() {
            Ok(n) if n > 0 => Ok(Some(Duration::from_secs(n))),
            _ => Err(DetectorError::invalid_settings(format!(
                "timeout-secs must be a positive integer, got {v:?}"
            ))),
        },
    }
}

impl LlmDetector {
    pub fn new(
        provider: LlmProvider,
        model: &str,
        transport: Arc<dyn LlmTransport>,
    ) -> Self {
        Self {
            provider,
            model: model.to_string(),
            prompt: DEFAULT_PROMPT.to_string(),
            base_url: provider.default_base().to_string(),
            key_var: provider.api_key_var().to_string(),
            name: format!("llm:{}:{}", provider.as_str(), model),
            keys: Arc::new(|var| std::env::var(var).ok().filter(|v| !v.is_empty())),
            transport,
        }
    }

    /// Builds the detector from plugin params: `provider` (default
    /// `openai`), `model` (required), and optionally `prompt-file`,
    /// `base-url`, `api-key-env` and `timeout-secs`.
    pub fn from_settings(settings: &DetectionSettings) -> Result<Self, DetectorError> {
        let params = &settings.plugin_params;
        let provider = match params.get("provider") {
            None => LlmProvider::OpenAi,
            Some(p) => LlmProvider::parse(p).ok_or_else(|| {
                DetectorError::invalid_settings(format!("unknown LLM provider {p:?}"))
            })?,
        };
        let model = params
            .get("model")
            .filter(|m| !m.trim().is_empty())
            .ok_or_else(|| DetectorError::invalid_settings("llm plugin needs a \"model\" param"))?;
        let timeout = timeout_param(settings)?.unwrap_or(super::rest::DEFAULT_TIMEOUT);
        let mut det = Self::new(provider, model, Arc::new(HttpLlmTransport::new(timeout)?));
        if let Some(path) = params.get("prompt-file") {
            let prompt = std::fs::read_to_string(path).map_err(|e| {
                DetectorError::invalid_settings(format!("cannot read prompt file {path:?}: {e}"))
            })?;
            det = det.with_prompt(&prompt);
        }
        if let Some(base) = params.get("base-url") {
            det.base_url = base.trim_end_matches('/').to_string();
        }
        if let Some(var) = params.get("api-key-env") {
            det.key_var = var.clone();
        }
        Ok(det)
    }

    pub fn with_prompt(mut self, prompt: &str) -> Self {
        self.prompt = prompt.to_string();
        self
    }

    pub fn with_base_url(mut self, base_url: &str) -> Self {
        self.base_url = base_url.trim_end_matches('/').to_string();
        self
    }

    /// Replaces the environment lookup used to find the API key.
    pub fn with_key_source(
        mut self,
        keys: impl Fn(&str) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.keys = Arc::new(keys);
        self
    }

    pub fn provider(&self) -> LlmProvider {
        self.provider
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn render_prompt(&self, text: &str) -> String {
        self.prompt.replace("{text}", text)
    }

    fn request(&self, key: &str, prompt: &str) -> (String, Vec<(String, String)>, Value) {
        match self.provider {
            LlmProvider::OpenAi => (
                format!("{}/chat/completions", self.base_url),
                vec![("Authorization".into(), format!("Bearer {key}"))],
                json!({
                    "model": self.model,
                    "messages": [{ "role": "user", "content": prompt }],
                }),
            ),
            LlmProvider::Anthropic => (
                format!("{}/messages", self.base_url),
                vec![
                    ("x-api-key".into(), key.to_string()),
                    ("anthropic-version".into(), "2023-06-01".into()),
                ],
                json!({
                    "model": self.model,
                    "max_tokens": 16,
                    "messages": [{ "role": "user", "content": prompt }],
                }),
            ),
            LlmProvider::Gemini => (
                format!("{}/models/{}:generateContent", self.base_url, self.model),
                vec![("x-goog-api-key".into(), key.to_string())],
                json!({ "contents": [{ "parts": [{ "text": prompt }] }] }),
            ),
        }
    }

    fn extract_text(&self, resp: &Value) -> Option<String> {
        let text = match self.provider {
            LlmProvider::OpenAi => resp.pointer("/choices/0/message/content"),
            LlmProvider::Anthropic => resp.pointer("/content/0/text"),
            LlmProvider::Gemini => resp.pointer("/candidates/0/content/parts/0/text"),
        };
        text.and_then(Value::as_str).map(str::to_string)
    }
}

/// Accepts exactly `TD` or `non-TD`, ignoring surrounding whitespace.
pub fn parse_answer(answer: &str) -> Result<Verdict, DetectorError> {
    Verdict::from_wire(answer.trim()).ok_or_else(|| {
        DetectorError::bad_response(format!("model answered {answer:?} instead of TD/non-TD"))
    })
}

impl Detector for LlmDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn classify(&self, input: &ClassificationInput) -> Result<Classification, DetectorError> {
        let key = (self.keys)(&self.key_var).ok_or_else(|| {
            DetectorError::new(
                DetectorErrorKind::Auth,
                format!("environment variable {} is not set", self.key_var),
            )
        })?;
        let prompt = self.render_prompt(&input.text);
        let (url, headers, body) = self.request(&key, &prompt);
        let resp = self.transport.post_json(&url, &headers, &body)?;
        let answer = self
            .extract_text(&resp)
            .ok_or_else(|| DetectorError::bad_response("provider response has no text"))?;
        Classification::new(parse_answer(&answer)?, None)
    }
}
