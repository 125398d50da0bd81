//! Event handling: config resolution, commands, detection, labeling,
//! comments and notifications, in that order.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};

use crate::clock::Clock;
use crate::commands::{self, Command};
use crate::config::{resolve_config, BotConfig, ResolveError, CONFIG_PATH};
use crate::detection::{classify_with_retry, ClassificationInput, PluginRegistry, Verdict};
use crate::forge::{Comment, Forge, Issue, RepoRef};
use crate::gateway::Event;
use crate::notifier::{prepare_label_email, Mailer};

/// Error notices are posted at most once per issue and kind within this window.
pub const NOTICE_INTERVAL_MINUTES: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Config,
    Forge,
    Detector,
    Notify,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Forge => "forge",
            ErrorKind::Detector => "detector",
            ErrorKind::Notify => "notify",
        }
    }
}

/// One effect the bot actually performed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Labeled(String),
    Commented,
    Emailed,
    Ignored,
    Errored(ErrorKind),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Labeled(l) => write!(f, "labeled({l})"),
            Action::Commented => f.write_str("commented"),
            Action::Emailed => f.write_str("emailed"),
            Action::Ignored => f.write_str("ignored"),
            Action::Errored(k) => write!(f, "errored({})", k.as_str()),
        }
    }
}

/// Append-only record of what a handler did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HandlerOutcome {
    pub actions: Vec<Action>,
}

impl HandlerOutcome {
    fn push(&mut self, action: Action) {
        self.actions.push(action);
    }

    fn ignored() -> Self {
        Self {
            actions: vec![Action::Ignored],
        }
    }

    pub fn labels(&self) -> Vec<&str> {
        self.actions
            .iter()
            .filter_map(|a| match a {
                Action::Labeled(l) => Some(l.as_str()),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for HandlerOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.actions.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

pub struct Bot {
    forge: Arc<dyn Forge>,
    registry: Arc<PluginRegistry>,
    mailer: Arc<dyn Mailer>,
    clock: Arc<dyn Clock>,
    notices: Mutex<HashMap<(RepoRef, u64, ErrorKind), DateTime<Utc>>>,
}

impl Bot {
    pub fn new(
        forge: Arc<dyn Forge>,
        registry: Arc<PluginRegistry>,
        mailer: Arc<dyn Mailer>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            forge,
            registry,
            mailer,
            clock,
            notices: Mutex::new(HashMap::new()),
        }
    }

    pub fn forge(&self) -> &Arc<dyn Forge> {
        &self.forge
    }

    pub fn handle_event(&self, event: &Event) -> HandlerOutcome {
        match event {
            Event::IssueOpened { issue } => self.handle_issue_opened(issue),
            Event::IssueCommented { issue, comment } => self.handle_issue_comment(issue, comment),
            Event::Ignored { .. } => HandlerOutcome::ignored(),
        }
    }

    /// Welcome comment, then (if enabled) classification, label and mail.
    pub fn handle_issue_opened(&self, issue: &Issue) -> HandlerOutcome {
        let mut out = HandlerOutcome::default();
        let Some(config) = self.resolve(issue, &mut out) else {
            return out;
        };
        if config.welcome_comment {
            self.comment(issue, commands::welcome_text(), &mut out);
        }
        if config.auto_label_on_creation {
            if let Some(verdict) = self.classify(issue, &config, &mut out) {
                self.apply_verdict(issue, verdict, &config, &mut out);
            }
        }
        out
    }

    pub fn handle_issue_comment(&self, issue: &Issue, comment: &Comment) -> HandlerOutcome {
        if comment.author_is_bot {
            return HandlerOutcome::ignored();
        }
        let Some(command) = commands::parse_command(&comment.body) else {
            return HandlerOutcome::ignored();
        };
        let mut out = HandlerOutcome::default();
        match command {
            Command::Help => self.comment(issue, &commands::help_text(), &mut out),
            Command::Unknown(_) => self.comment(issue, commands::UNKNOWN_COMMAND_REPLY, &mut out),
            Command::LabelAuto => {
                if let Some(config) = self.resolve(issue, &mut out) {
                    if let Some(verdict) = self.classify(issue, &config, &mut out) {
                        self.apply_verdict(issue, verdict, &config, &mut out);
                    }
                }
            }
            Command::LabelExplicit(label) => {
                if let Some(config) = self.resolve(issue, &mut out) {
                    if self.add_label(issue, &label, &mut out) {
                        self.notify(issue, &label, &config, &mut out);
                    }
                }
            }
        }
        out
    }

    fn resolve(&self, issue: &Issue, out: &mut HandlerOutcome) -> Option<BotConfig> {
        match resolve_config(self.forge.as_ref(), &issue.repo) {
            Ok(config) => Some(config),
            Err(ResolveError::Config(e)) => {
                tracing::warn!(repo = %issue.repo, error = %e, "repository is misconfigured");
                out.push(Action::Errored(ErrorKind::Config));
                let body = format!(
                    "tdbot could not use `{CONFIG_PATH}`: {e}\n\n\
                     No action was taken. Fix the file on the default branch and try again."
                );
                self.notice(issue, ErrorKind::Config, &body, out);
                None
            }
            Err(ResolveError::Forge(e)) => {
                tracing::error!(repo = %issue.repo, error = %e, "could not fetch configuration");
                out.push(Action::Errored(ErrorKind::Forge));
                None
            }
        }
    }

    fn classify(&self, issue: &Issue, config: &BotConfig, out: &mut HandlerOutcome) -> Option<Verdict> {
        let result = self
            .registry
            .create_detector(&config.detection)
            .map_err(|e| e.to_string())
            .and_then(|detector| {
                let input = ClassificationInput::from_issue(issue, config.detection.analyzed_part);
                classify_with_retry(detector.as_ref(), &input).map_err(|e| e.to_string())
            });
        match result {
            Ok(c) => Some(c.label),
            Err(e) => {
                tracing::error!(repo = %issue.repo, issue = issue.number, error = %e, "classification failed");
                out.push(Action::Errored(ErrorKind::Detector));
                let body = format!(
                    "tdbot could not classify this issue: {e}\n\n\
                     Try again later, or apply a label yourself with `/tdbot label <name>`."
                );
                self.notice(issue, ErrorKind::Detector, &body, out);
                None
            }
        }
    }

    /// Applies the verdict label and drops its counterpart so `TD` and
    /// `non-TD` never coexist.
    fn apply_verdict(&self, issue: &Issue, verdict: Verdict, config: &BotConfig, out: &mut HandlerOutcome) {
        let label = verdict.as_str();
        if !self.add_label(issue, label, out) {
            return;
        }
        let stale = verdict.counterpart().as_str();
        if issue.labels.contains(stale) {
            if let Err(e) = self.forge.remove_label(&issue.repo, issue.number, stale) {
                tracing::warn!(error = %e, "could not remove stale verdict label");
                out.push(Action::Errored(ErrorKind::Forge));
            }
        }
        self.notify(issue, label, config, out);
    }

    fn add_label(&self, issue: &Issue, label: &str, out: &mut HandlerOutcome) -> bool {
        match self.forge.add_label(&issue.repo, issue.number, label) {
            Ok(()) => {
                out.push(Action::Labeled(label.to_string()));
                true
            }
            Err(e) => {
                tracing::error!(error = %e, label, "could not label issue");
                out.push(Action::Errored(ErrorKind::Forge));
                false
            }
        }
    }

    fn notify(&self, issue: &Issue, label: &str, config: &BotConfig, out: &mut HandlerOutcome) {
        let link = self.forge.issue_link(&issue.repo, issue.number);
        let Some(message) = prepare_label_email(issue, label, &link, &config.email) else {
            return;
        };
        match self.mailer.send(&message) {
            Ok(()) => out.push(Action::Emailed),
            Err(e) => {
                tracing::error!(error = %e, "notification email failed");
                out.push(Action::Errored(ErrorKind::Notify));
                let body = format!("tdbot applied `{label}` but could not send the notification email: {e}");
                self.notice(issue, ErrorKind::Notify, &body, out);
            }
        }
    }

    fn comment(&self, issue: &Issue, body: &str, out: &mut HandlerOutcome) {
        match self.forge.post_comment(&issue.repo, issue.number, body) {
            Ok(()) => out.push(Action::Commented),
            Err(e) => {
                tracing::error!(error = %e, "could not post comment");
                out.push(Action::Errored(ErrorKind::Forge));
            }
        }
    }

    /// Error comment, rate-limited per issue and kind.
    fn notice(&self, issue: &Issue, kind: ErrorKind, body: &str, out: &mut HandlerOutcome) {
        let now = self.clock.now();
        let key = (issue.repo.clone(), issue.number, kind);
        {
            let mut notices = self.notices.lock().unwrap();
            if let Some(last) = notices.get(&key) {
                if now - *last < Duration::minutes(NOTICE_INTERVAL_MINUTES) {
                    return;
                }
            }
            notices.insert(key, now);
        }
        self.comment(issue, body, out);
    }
}
