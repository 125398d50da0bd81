//! Per-repository bot configuration (`Bot/config.json`).
//!
//! Every field is optional in the file; anything left out takes the built-in
//! default. Keys are kebab-case. Unknown keys are rejected so typos such as
//! `send-email` surface immediately instead of being silently ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::{Map, Value};

use crate::forge::{Forge, ForgeError, RepoRef};

/// Where the bot looks for its configuration, relative to the repo root.
pub const CONFIG_PATH: &str = "Bot/config.json";

/// Template-map key used for the lingering-issue digest.
pub const LINGERING_TEMPLATE_KEY: &str = "lingering";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnalyzedPart {
    Title,
    Description,
    Both,
}

impl AnalyzedPart {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalyzedPart::Title => "title",
            AnalyzedPart::Description => "description",
            AnalyzedPart::Both => "both",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "title" => Some(AnalyzedPart::Title),
            "description" => Some(AnalyzedPart::Description),
            "both" => Some(AnalyzedPart::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LingeringMode {
    Creation,
    LastModified,
}

impl LingeringMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LingeringMode::Creation => "creation",
            LingeringMode::LastModified => "last-modified",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "creation" => Some(LingeringMode::Creation),
            "last-modified" | "last_modified" => Some(LingeringMode::LastModified),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionSettings {
    /// Registry key of the detector plugin.
    pub plugin_type: String,
    pub analyzed_part: AnalyzedPart,
    pub plugin_params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmailSettings {
    pub send_emails: bool,
    pub when_to_send: BTreeSet<String>,
    pub recipients: Vec<String>,
    /// label -> subject template
    pub subject_templates: BTreeMap<String, String>,
    /// label -> body template
    pub body_templates: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LingeringSettings {
    pub threshold_days: u32,
    pub mode: LingeringMode,
    pub check_frequency_hours: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BotConfig {
    pub detection: DetectionSettings,
    pub email: EmailSettings,
    pub lingering: LingeringSettings,
    pub welcome_comment: bool,
    pub auto_label_on_creation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConfigErrorKind {
    MalformedJson,
    UnknownField,
    InvalidValue,
    InvariantViolation,
}

impl ConfigErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfigErrorKind::MalformedJson => "malformed_json",
            ConfigErrorKind::UnknownField => "unknown_field",
            ConfigErrorKind::InvalidValue => "invalid_value",
            ConfigErrorKind::InvariantViolation => "invariant_violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub kind: ConfigErrorKind,
    /// Dotted path of the offending field; empty for malformed JSON.
    pub path: String,
    pub detail: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}: {}", self.kind.as_str(), self.detail)
        } else {
            write!(f, "{} at {}: {}", self.kind.as_str(), self.path, self.detail)
        }
    }
}

impl ConfigError {
    fn new(kind: ConfigErrorKind, path: &str, detail: impl Into<String>) -> Self {
        Self {
            kind,
            path: path.to_string(),
            detail: detail.into(),
        }
    }

    fn invalid(path: &str, detail: impl Into<String>) -> Self {
        Self::new(ConfigErrorKind::InvalidValue, path, detail)
    }
}

/// The built-in configuration used when a repository has no config file.
pub fn default_config() -> BotConfig {
    BotConfig {
        detection: DetectionSettings {
            plugin_type: "heuristic".to_string(),
            analyzed_part: AnalyzedPart::Both,
            plugin_params: BTreeMap::new(),
        },
        email: EmailSettings {
            send_emails: false,
            when_to_send: BTreeSet::from(["TD".to_string()]),
            recipients: Vec::new(),
            subject_templates: BTreeMap::new(),
            body_templates: BTreeMap::new(),
        },
        lingering: LingeringSettings {
            threshold_days: 30,
            mode: LingeringMode::Creation,
            check_frequency_hours: 24,
        },
        welcome_comment: true,
        auto_label_on_creation: false,
    }
}

impl Default for BotConfig {
    fn default() -> Self {
        default_config()
    }
}

/// Minimal address shape: exactly one `@` with something on both sides.
pub fn is_plausible_address(addr: &str) -> bool {
    let mut parts = addr.split('@');
    matches!(
        (parts.next(), parts.next(), parts.next()),
        (Some(local), Some(domain), None)
            if !local.trim().is_empty() && !domain.trim().is_empty()
                && !addr.chars().any(char::is_whitespace)
    )
}

type StringMap = BTreeMap<String, String>;

struct Cursor<'a> {
    path: String,
    obj: &'a Map<String, Value>,
}

impl<'a> Cursor<'a> {
    fn object(path: &str, value: &'a Value) -> Result<Self, ConfigError> {
        match value {
            Value::Object(obj) => Ok(Self {
                path: path.to_string(),
                obj,
            }),
            _ => Err(ConfigError::invalid(path, "expected a JSON object")),
        }
    }

    fn child_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    /// Rejects keys not in `known` (aliases included).
    fn deny_unknown(&self, known: &[&str]) -> Result<(), ConfigError> {
        for key in self.obj.keys() {
            if !known.contains(&key.as_str()) {
                return Err(ConfigError::new(
                    ConfigErrorKind::UnknownField,
                    &self.child_path(key),
                    format!("unknown field {key:?}; expected one of {}", known.join(", ")),
                ));
            }
        }
        Ok(())
    }

    /// Looks up `key` or one of its aliases, returning the spelling found.
    fn get(&self, key: &'a str, aliases: &[&'a str]) -> Result<Option<(String, &'a Value)>, ConfigError> {
        let mut found: Option<(&str, &Value)> = None;
        for k in std::iter::once(&key).chain(aliases.iter()) {
            if let Some(v) = self.obj.get(*k) {
                if let Some((prev, _)) = found {
                    return Err(ConfigError::invalid(
                        &self.child_path(k),
                        format!("{k:?} duplicates {prev:?}"),
                    ));
                }
                found = Some((k, v));
            }
        }
        Ok(found.map(|(k, v)| (self.child_path(k), v)))
    }

    fn bool(&self, key: &'a str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key, &[])? {
            None => Ok(default),
            Some((_, Value::Bool(b))) => Ok(*b),
            Some((path, _)) => Err(ConfigError::invalid(&path, "expected true or false")),
        }
    }

    fn positive(&self, key: &'a str, aliases: &[&'a str], default: u32) -> Result<u32, ConfigError> {
        match self.get(key, aliases)? {
            None => Ok(default),
            Some((path, v)) => match v.as_u64() {
                Some(n) if n >= 1 && n <= u32::MAX as u64 => Ok(n as u32),
                _ => Err(ConfigError::invalid(&path, format!("expected a positive integer, got {v}"))),
            },
        }
    }

    fn string(&self, key: &'a str, aliases: &[&'a str]) -> Result<Option<(String, String)>, ConfigError> {
        match self.get(key, aliases)? {
            None => Ok(None),
            Some((path, Value::String(s))) => Ok(Some((path, s.clone()))),
            Some((path, _)) => Err(ConfigError::invalid(&path, "expected a string")),
        }
    }

    fn string_map(&self, key: &'a str) -> Result<Option<(String, StringMap)>, ConfigError> {
        let Some((path, v)) = self.get(key, &[])? else {
            return Ok(None);
        };
        let Value::Object(obj) = v else {
            return Err(ConfigError::invalid(&path, "expected an object of strings"));
        };
        let mut out = BTreeMap::new();
        for (k, v) in obj {
            match v {
                Value::String(s) => {
                    out.insert(k.clone(), s.clone());
                }
                _ => return Err(ConfigError::invalid(&format!("{path}.{k}"), "expected a string")),
            }
        }
        Ok(Some((path, out)))
    }

    fn string_list(&self, key: &'a str) -> Result<Option<(String, Vec<String>)>, ConfigError> {
        let Some((path, v)) = self.get(key, &[])? else {
            return Ok(None);
        };
        let Value::Array(items) = v else {
            return Err(ConfigError::invalid(&path, "expected an array of strings"));
        };
        items
            .iter()
            .enumerate()
            .map(|(i, item)| match item {
                Value::String(s) => Ok(s.clone()),
                _ => Err(ConfigError::invalid(&format!("{path}[{i}]"), "expected a string")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|v| Some((path, v)))
    }

    fn nested(&self, key: &'a str) -> Result<Option<Cursor<'a>>, ConfigError> {
        match self.get(key, &[])? {
            None => Ok(None),
            Some((path, v)) => Cursor::object(&path, v).map(Some),
        }
    }
}

/// Parses a (possibly partial) configuration document, filling gaps from
/// [`default_config`].
pub fn parse_config(raw: &[u8]) -> Result<BotConfig, ConfigError> {
    let value: Value = serde_json::from_slice(raw)
        .map_err(|e| ConfigError::new(ConfigErrorKind::MalformedJson, "", e.to_string()))?;
    let root = Cursor::object("", &value)?;
    root.deny_unknown(&[
        "detection",
        "email",
        "lingering",
        "welcome-comment",
        "auto-label-on-creation",
    ])?;

    let mut config = default_config();

    if let Some(det) = root.nested("detection")? {
        det.deny_unknown(&["type", "analyzed-part", "plugin-params"])?;
        if let Some((path, ty)) = det.string("type", &[])? {
            if ty.trim().is_empty() {
                return Err(ConfigError::invalid(&path, "plugin type must not be empty"));
            }
            config.detection.plugin_type = ty;
        }
        if let Some((path, part)) = det.string("analyzed-part", &[])? {
            config.detection.analyzed_part = AnalyzedPart::parse(&part).ok_or_else(|| {
                ConfigError::invalid(
                    &path,
                    format!("expected \"title\", \"description\" or \"both\", got {part:?}"),
                )
            })?;
        }
        if let Some((_, params)) = det.string_map("plugin-params")? {
            config.detection.plugin_params = params;
        }
    }

    if let Some(email) = root.nested("email")? {
        email.deny_unknown(&[
            "send-emails",
            "when-to-send",
            "email-info",
            "email-subject-template",
            "email-body-template",
        ])?;
        config.email.send_emails = email.bool("send-emails", config.email.send_emails)?;
        if let Some((path, labels)) = email.string_list("when-to-send")? {
            if let Some(i) = labels.iter().position(|l| l.trim().is_empty()) {
                return Err(ConfigError::invalid(&format!("{path}[{i}]"), "label must not be empty"));
            }
            config.email.when_to_send = labels.into_iter().collect();
        }
        if let Some(info) = email.nested("email-info")? {
            info.deny_unknown(&["recipients"])?;
            if let Some((path, recipients)) = info.string_list("recipients")? {
                for (i, r) in recipients.iter().enumerate() {
                    if !is_plausible_address(r) {
                        return Err(ConfigError::new(
                            ConfigErrorKind::InvariantViolation,
                            &format!("{path}[{i}]"),
                            format!("{r:?} is not an email address"),
                        ));
                    }
                }
                config.email.recipients = recipients;
            }
        }
        if let Some((_, map)) = email.string_map("email-subject-template")? {
            if let Some((k, _)) = map.iter().find(|(_, v)| v.contains(['\n', '\r'])) {
                return Err(ConfigError::invalid(
                    &format!("{}.{k}", email.child_path("email-subject-template")),
                    "subject templates must be a single line",
                ));
            }
            config.email.subject_templates = map;
        }
        if let Some((_, map)) = email.string_map("email-body-template")? {
            config.email.body_templates = map;
        }
        for section in ["email-subject-template", "email-body-template"] {
            let map = if section == "email-subject-template" {
                &config.email.subject_templates
            } else {
                &config.email.body_templates
            };
            for key in map.keys() {
                if key != LINGERING_TEMPLATE_KEY && !config.email.when_to_send.contains(key) {
                    return Err(ConfigError::new(
                        ConfigErrorKind::InvariantViolation,
                        &format!("{}.{key}", email.child_path(section)),
                        format!("template label {key:?} is not listed in when-to-send"),
                    ));
                }
            }
        }
    }

    if let Some(ling) = root.nested("lingering")? {
        const THRESHOLD_ALIASES: &[&str] = &["threshold-days"];
        const FREQUENCY_ALIASES: &[&str] = &["lingering_check_frequency"];
        let mut known = vec![
            "lingering-issue-threshold",
            "lingering-mode",
            "lingering-check-frequency",
        ];
        known.extend_from_slice(THRESHOLD_ALIASES);
        known.extend_from_slice(FREQUENCY_ALIASES);
        ling.deny_unknown(&known)?;
        config.lingering.threshold_days = ling.positive(
            "lingering-issue-threshold",
            THRESHOLD_ALIASES,
            config.lingering.threshold_days,
        )?;
        if let Some((path, mode)) = ling.string("lingering-mode", &[])? {
            config.lingering.mode = LingeringMode::parse(&mode).ok_or_else(|| {
                ConfigError::invalid(
                    &path,
                    format!("expected \"creation\" or \"last-modified\", got {mode:?}"),
                )
            })?;
        }
        config.lingering.check_frequency_hours = ling.positive(
            "lingering-check-frequency",
            FREQUENCY_ALIASES,
            config.lingering.check_frequency_hours,
        )?;
    }

    config.welcome_comment = root.bool("welcome-comment", config.welcome_comment)?;
    config.auto_label_on_creation =
        root.bool("auto-label-on-creation", config.auto_label_on_creation)?;

    Ok(config)
}

impl BotConfig {
    /// Canonical JSON form. `parse_config` of this value yields `self`.
    pub fn to_json(&self) -> Value {
        let d = &self.detection;
        let e = &self.email;
        let l = &self.lingering;
        serde_json::json!({
            "detection": {
                "type": d.plugin_type,
                "analyzed-part": d.analyzed_part.as_str(),
                "plugin-params": d.plugin_params,
            },
            "email": {
                "send-emails": e.send_emails,
                "when-to-send": e.when_to_send,
                "email-info": { "recipients": e.recipients },
                "email-subject-template": e.subject_templates,
                "email-body-template": e.body_templates,
            },
            "lingering": {
                "lingering-issue-threshold": l.threshold_days,
                "lingering-mode": l.mode.as_str(),
                "lingering-check-frequency": l.check_frequency_hours,
            },
            "welcome-comment": self.welcome_comment,
            "auto-label-on-creation": self.auto_label_on_creation,
        })
    }

    /// Pretty-printed canonical JSON with a trailing newline.
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("config is serializable");
        s.push('\n');
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error("repository configuration is invalid: {0}")]
    Config(#[from] ConfigError),
}

/// Reads `Bot/config.json` from the repo's default branch. A missing file
/// yields the defaults; an unparseable one is an error, never a fallback.
pub fn resolve_config(forge: &dyn Forge, repo: &RepoRef) -> Result<BotConfig, ResolveError> {
    match forge.fetch_file(repo, CONFIG_PATH, repo.default_branch())? {
        Some(raw) => Ok(parse_config(&raw)?),
        None => Ok(default_config()),
    }
}
