//! Pluggable SATD detection.
//!
//! Detectors are built by a [`PluginRegistry`] from the `detection` section
//! of the repository config: the `type` string picks the constructor, the
//! rest of the settings are handed to it. Everything downstream only sees
//! `dyn Detector`.

mod heuristic;
mod llm;
mod metrics;
mod rest;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::config::{AnalyzedPart, DetectionSettings};
use crate::forge::{Issue, RepoRef};

pub use heuristic::{HeuristicDetector, Lexicon, HEURISTIC_CONFIDENCE};
pub use llm::{HttpLlmTransport, LlmDetector, LlmProvider, LlmTransport, DEFAULT_PROMPT};
pub use metrics::{evaluate_detector, ConfusionMatrix, Metrics};
pub use rest::RestDetector;

/// Wire string of the SATD verdict.
pub const TD: &str = "TD";
/// Wire string of the non-SATD verdict.
pub const NON_TD: &str = "non-TD";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Td,
    NonTd,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Td => TD,
            Verdict::NonTd => NON_TD,
        }
    }

    /// Strict parse of the wire string.
    pub fn from_wire(s: &str) -> Option<Self> {
        match s {
            TD => Some(Verdict::Td),
            NON_TD => Some(Verdict::NonTd),
            _ => None,
        }
    }

    /// The other verdict; the two labels are kept mutually exclusive.
    pub fn counterpart(self) -> Self {
        match self {
            Verdict::Td => Verdict::NonTd,
            Verdict::NonTd => Verdict::Td,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: Verdict,
    confidence: Option<f64>,
}

impl Classification {
    /// Fails if `confidence` lies outside `[0, 1]`.
    pub fn new(label: Verdict, confidence: Option<f64>) -> Result<Self, DetectorError> {
        if let Some(c) = confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(DetectorError::bad_response(format!(
                    "confidence {c} outside [0, 1]"
                )));
            }
        }
        Ok(Self { label, confidence })
    }

    pub fn confidence(&self) -> Option<f64> {
        self.confidence
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationInput {
    pub text: String,
    pub repo: RepoRef,
    pub issue_number: u64,
}

impl ClassificationInput {
    pub fn from_issue(issue: &Issue, part: AnalyzedPart) -> Self {
        Self {
            text: select_text(issue, part),
            repo: issue.repo.clone(),
            issue_number: issue.number,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorErrorKind {
    Network,
    Timeout,
    BadResponse,
    Auth,
    InvalidSettings,
}

impl DetectorErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorErrorKind::Network => "network",
            DetectorErrorKind::Timeout => "timeout",
            DetectorErrorKind::BadResponse => "bad_response",
            DetectorErrorKind::Auth => "auth",
            DetectorErrorKind::InvalidSettings => "invalid_settings",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("detector error ({}): {detail}", kind.as_str())]
pub struct DetectorError {
    pub kind: DetectorErrorKind,
    pub detail: String,
}

impl DetectorError {
    pub fn new(kind: DetectorErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }

    pub fn bad_response(detail: impl Into<String>) -> Self {
        Self::new(DetectorErrorKind::BadResponse, detail)
    }

    pub fn invalid_settings(detail: impl Into<String>) -> Self {
        Self::new(DetectorErrorKind::InvalidSettings, detail)
    }
}

/// A SATD classifier. Implementations must tolerate concurrent calls.
pub trait Detector: Send + Sync {
    fn name(&self) -> &str;

    fn classify(&self, input: &ClassificationInput) -> Result<Classification, DetectorError>;
}

/// Calls `detector`, retrying once if the first attempt timed out.
pub fn classify_with_retry(
    detector: &dyn Detector,
    input: &ClassificationInput,
) -> Result<Classification, DetectorError> {
    match detector.classify(input) {
        Err(e) if e.kind == DetectorErrorKind::Timeout => {
            tracing::warn!(detector = detector.name(), "detector timed out, retrying once");
            detector.classify(input)
        }
        other => other,
    }
}

/// The part of an issue handed to the detector, unmodified.
pub fn select_text(issue: &Issue, part: AnalyzedPart) -> String {
    match part {
        AnalyzedPart::Title => issue.title.clone(),
        AnalyzedPart::Description => issue.body.clone(),
        AnalyzedPart::Both => format!("{}\n\n{}", issue.title, issue.body),
    }
}

pub type Constructor =
    Box<dyn Fn(&DetectionSettings) -> Result<Arc<dyn Detector>, DetectorError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("a detector plugin named {0:?} is already registered")]
    DuplicatePlugin(String),
    #[error("the plugin registry is frozen")]
    RegistryFrozen,
    #[error("the plugin registry must be frozen before creating detectors")]
    NotFrozen,
    #[error("plugin type identifiers must not be empty")]
    EmptyTypeId,
    #[error("no detector plugin named {0:?}")]
    UnknownPluginType(String),
    #[error("failed to construct detector: {0}")]
    Construction(#[from] DetectorError),
}

/// Factory mapping `detection.type` strings to detector constructors.
///
/// Registration is only allowed until [`freeze`](Self::freeze); detectors
/// can only be created afterwards.
#[derive(Default)]
pub struct PluginRegistry {
    entries: BTreeMap<String, Constructor>,
    frozen: bool,
}

impl fmt::Debug for PluginRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PluginRegistry")
            .field("types", &self.entries.keys().collect::<Vec<_>>())
            .field("frozen", &self.frozen)
            .finish()
    }
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// An unfrozen registry holding `heuristic`, `rest` and `llm`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        reg.register_plugin("heuristic", |_| {
            Ok(Arc::new(HeuristicDetector::builtin()) as Arc<dyn Detector>)
        })
        .expect("fresh registry");
        reg.register_plugin("rest", |s| {
            Ok(Arc::new(RestDetector::from_settings(s)?) as Arc<dyn Detector>)
        })
        .expect("fresh registry");
        reg.register_plugin("llm", |s| {
            Ok(Arc::new(LlmDetector::from_settings(s)?) as Arc<dyn Detector>)
        })
        .expect("fresh registry");
        reg
    }

    pub fn register_plugin<F>(&mut self, type_id: &str, constructor: F) -> Result<(), RegistryError>
    where
        F: Fn(&DetectionSettings) -> Result<Arc<dyn Detector>, DetectorError> + Send + Sync + 'static,
    {
        if self.frozen {
            return Err(RegistryError::RegistryFrozen);
        }
        if type_id.is_empty() {
            return Err(RegistryError::EmptyTypeId);
        }
        if self.entries.contains_key(type_id) {
            return Err(RegistryError::DuplicatePlugin(type_id.to_string()));
        }
        self.entries.insert(type_id.to_string(), Box::new(constructor));
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn type_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn create_detector(
        &self,
        settings: &DetectionSettings,
    ) -> Result<Arc<dyn Detector>, RegistryError> {
        if !self.frozen {
            return Err(RegistryError::NotFrozen);
        }
        let ctor = self
            .entries
            .get(&settings.plugin_type)
            .ok_or_else(|| RegistryError::UnknownPluginType(settings.plugin_type.clone()))?;
        Ok(ctor(settings)?)
    }
}
