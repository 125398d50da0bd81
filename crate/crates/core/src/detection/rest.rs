use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{
    Classification, ClassificationInput, Detector, DetectorError, DetectorErrorKind, Verdict,
};
use crate::config::DetectionSettings;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct Response {
    label: String,
    #[serde(default)]
    confidence: Option<f64>,
}

/// Client for a classifier served over HTTP.
///
/// Wire contract: `POST {"text": ...}` answered by
/// `{"label": "TD" | "non-TD", "confidence": <optional number>}`.
pub struct RestDetector {
    endpoint: String,
    client: Client,
}

impl RestDetector {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, DetectorError> {
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(DetectorError::invalid_settings(format!(
                "endpoint {endpoint:?} is not an http(s) URL"
            )));
        }
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| DetectorError::new(DetectorErrorKind::Network, e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.to_string(),
            client,
        })
    }

    /// Reads `endpoint` and optional `timeout-secs` from the plugin params.
    pub fn from_settings(settings: &DetectionSettings) -> Result<Self, DetectorError> {
        let endpoint = settings
            .plugin_params
            .get("endpoint")
            .ok_or_else(|| DetectorError::invalid_settings("rest plugin needs an \"endpoint\" param"))?;
        let timeout = super::llm::timeout_param(settings)?.unwrap_or(DEFAULT_TIMEOUT);
        Self::new(endpoint, timeout)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

pub(crate) fn map_reqwest_error(e: reqwest::Error) -> DetectorError {
    let kind = if e.is_timeout() {
        DetectorErrorKind::Timeout
    } else if e.is_decode() || e.is_body() {
        DetectorErrorKind::BadResponse
    } else {
        DetectorErrorKind::Network
    };
    DetectorError::new(kind, e.to_string())
}

/// Strict mapping of a response body onto a [`Classification`].
pub fn parse_response(body: &[u8]) -> Result<Classification, DetectorError> {
    let resp: Response = serde_json::from_slice(body)
        .map_err(|e| DetectorError::bad_response(format!("invalid classifier response: {e}")))?;
    let label = Verdict::from_wire(&resp.label)
        .ok_or_else(|| DetectorError::bad_response(format!("unknown label {:?}", resp.label)))?;
    Classification::new(label, resp.confidence)
}

impl Detector for RestDetector {
    fn name(&self) -> &str {
        "rest"
    }

    fn classify(&self, input: &ClassificationInput) -> Result<Classification, DetectorError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&Request { text: &input.text })
            .send()
            .map_err(map_reqwest_error)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(DetectorError::bad_response(format!(
                "classifier answered {status}"
            )));
        }
        let body = resp.bytes().map_err(map_reqwest_error)?;
        parse_response(&body)
    }
}
