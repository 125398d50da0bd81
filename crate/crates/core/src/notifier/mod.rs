//! Email notifications: when to send, what to say, and how to deliver it.
//!
//! Templates use `/name` placeholders. Label mails understand `/label`,
//! `/issue_link`, `/issue_title` and `/repository`; the lingering digest
//! understands `/count`, `/repository` and `/issues`. Substitution is a
//! single left-to-right pass, so placeholder text inside a substituted value
//! is never expanded again. Unknown `/tokens` are left alone.

pub mod double;
mod smtp;

use crate::config::{EmailSettings, LINGERING_TEMPLATE_KEY};
use crate::forge::Issue;
use crate::lingering::LingeringReport;

pub use smtp::{
    send_email, LettreConnector, Mailer, NotifyError, NotifyErrorKind, SmtpConnector, SmtpMailer,
    SmtpSession, TransportSettings, SMTP_DOTFILE,
};

pub const GENERIC_SUBJECT: &str = "[/repository] Issue labeled /label: /issue_title";
pub const GENERIC_BODY: &str = "The issue \"/issue_title\" in /repository was labeled /label.\n\n\
                                Open it here: /issue_link\n\n\
                                You receive this message because your address is listed in the \
                                repository's Bot/config.json.\n";
pub const LINGERING_SUBJECT: &str = "[/repository] /count lingering issue(s)";
pub const LINGERING_BODY: &str = "The following open issues in /repository have been lingering:\n\n\
                                  /issues\n\n\
                                  You receive this message because your address is listed in the \
                                  repository's Bot/config.json.\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderContext {
    pub label: String,
    pub issue_link: String,
    pub issue_title: String,
    /// `owner/name`
    pub repository: String,
}

impl RenderContext {
    fn lookup(&self, name: &str) -> Option<&str> {
        match name {
            "label" => Some(&self.label),
            "issue_link" => Some(&self.issue_link),
            "issue_title" => Some(&self.issue_title),
            "repository" => Some(&self.repository),
            _ => None,
        }
    }
}

/// A ready-to-send plain-text mail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmailMessage {
    subject: String,
    body: String,
    recipients: Vec<String>,
}

impl EmailMessage {
    /// `None` when there is nobody to send to. Line breaks in the subject are
    /// folded into spaces.
    pub fn new(subject: &str, body: &str, recipients: &[String]) -> Option<Self> {
        if recipients.is_empty() {
            return None;
        }
        let subject = subject
            .split(['\r', '\n'])
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        Some(Self {
            subject,
            body: body.to_string(),
            recipients: recipients.to_vec(),
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn recipients(&self) -> &[String] {
        &self.recipients
    }
}

pub fn should_notify(label: &str, settings: &EmailSettings) -> bool {
    settings.send_emails && settings.when_to_send.contains(label) && !settings.recipients.is_empty()
}

/// Single-pass `/name` substitution. `lookup` returns the replacement for a
/// placeholder name, or `None` to keep the token verbatim.
pub fn render_with<'a>(template: &str, lookup: impl Fn(&str) -> Option<&'a str>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(pos) = rest.find('/') {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let name = &after[..name_len];
        match lookup(name).filter(|_| !name.is_empty()) {
            Some(value) => out.push_str(value),
            None => {
                out.push('/');
                out.push_str(name);
            }
        }
        rest = &after[name_len..];
    }
    out.push_str(rest);
    out
}

pub fn render_template(template: &str, ctx: &RenderContext) -> String {
    render_with(template, |name| ctx.lookup(name))
}

/// Mail announcing that `label` was applied to `issue`, or `None` if the
/// notification gate is closed.
pub fn prepare_label_email(
    issue: &Issue,
    label: &str,
    issue_link: &str,
    settings: &EmailSettings,
) -> Option<EmailMessage> {
    if !should_notify(label, settings) {
        return None;
    }
    let ctx = RenderContext {
        label: label.to_string(),
        issue_link: issue_link.to_string(),
        issue_title: issue.title.clone(),
        repository: issue.repo.full_name(),
    };
    let subject = settings
        .subject_templates
        .get(label)
        .map_or(GENERIC_SUBJECT, String::as_str);
    let body = settings
        .body_templates
        .get(label)
        .map_or(GENERIC_BODY, String::as_str);
    EmailMessage::new(
        &render_template(subject, &ctx),
        &render_template(body, &ctx),
        &settings.recipients,
    )
}

/// One digest line per lingering issue.
pub fn digest_lines(report: &LingeringReport) -> String {
    report
        .items
        .iter()
        .map(|item| {
            format!(
                "- #{} {} ({} days) {}",
                item.issue_number, item.title, item.days_lingering, item.link
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Digest mail for a lingering-issue scan, or `None` if mail is off, nobody
/// is subscribed, or nothing is lingering.
pub fn prepare_lingering_email(
    report: &LingeringReport,
    settings: &EmailSettings,
) -> Option<EmailMessage> {
    if !settings.send_emails || settings.recipients.is_empty() || report.items.is_empty() {
        return None;
    }
    let count = report.items.len().to_string();
    let repository = report.repo.full_name();
    let issues = digest_lines(report);
    let lookup = |name: &str| match name {
        "count" => Some(count.as_str()),
        "repository" => Some(repository.as_str()),
        "issues" => Some(issues.as_str()),
        _ => None,
    };
    let subject = settings
        .subject_templates
        .get(LINGERING_TEMPLATE_KEY)
        .map_or(LINGERING_SUBJECT, String::as_str);
    let body = settings
        .body_templates
        .get(LINGERING_TEMPLATE_KEY)
        .map_or(LINGERING_BODY, String::as_str);
    EmailMessage::new(
        &render_with(subject, lookup),
        &render_with(body, lookup),
        &settings.recipients,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::forge::RepoRef;
    use crate::lingering::LingeringItem;
    use chrono::{TimeZone, Utc};

    fn ctx() -> RenderContext {
        RenderContext {
            label: "TD".into(),
            issue_link: "https://f/o/r/issues/1".into(),
            issue_title: "Slow build".into(),
            repository: "o/r".into(),
        }
    }

    fn mail_settings() -> EmailSettings {
        let mut s = default_config().email;
        s.send_emails = true;
        s.recipients = vec!["dev@example.org".into()];
        s
    }

    #[test]
    fn gate_examples() {
        let s = mail_settings();
        assert!(should_notify("TD", &s));
        assert!(!should_notify("non-TD", &s));
        let mut off = s.clone();
        off.send_emails = false;
        assert!(!should_notify("TD", &off));
        let mut nobody = s;
        nobody.recipients.clear();
        assert!(!should_notify("TD", &nobody));
    }

    #[test]
    fn render_examples() {
        assert_eq!(
            render_template("New /label item: /issue_link", &ctx()),
            "New TD item: https://f/o/r/issues/1"
        );
        assert_eq!(render_template("no placeholders", &ctx()), "no placeholders");
        let mut adversarial = ctx();
        adversarial.label = "/label".into();
        assert_eq!(render_template("/label", &adversarial), "/label");
        adversarial.label = "/issue_link /label".into();
        assert_eq!(render_template("[/label]", &adversarial), "[/issue_link /label]");
    }

    #[test]
    fn render_all_placeholders_and_unknowns() {
        assert_eq!(
            render_template("/repository: /issue_title (/label) /issue_link", &ctx()),
            "o/r: Slow build (TD) https://f/o/r/issues/1"
        );
        assert_eq!(
            render_template("a/b /labels /unknown / // /label.", &ctx()),
            "a/b /labels /unknown / // TD."
        );
        assert_eq!(render_template("/", &ctx()), "/");
        assert_eq!(render_template("/label/label", &ctx()), "TDTD");
    }

    fn issue() -> Issue {
        Issue::new(
            RepoRef::new("o", "r").unwrap(),
            1,
            "Slow build",
            "temporary hack",
            Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        )
    }

    #[test]
    fn label_email_uses_configured_templates() {
        let mut s = mail_settings();
        s.subject_templates.insert("TD".into(), "Debt: /issue_title".into());
        s.body_templates.insert("TD".into(), "See /issue_link".into());
        let msg = prepare_label_email(&issue(), "TD", "https://f/o/r/issues/1", &s).unwrap();
        assert_eq!(msg.subject(), "Debt: Slow build");
        assert_eq!(msg.body(), "See https://f/o/r/issues/1");
        assert_eq!(msg.recipients(), &["dev@example.org".to_string()]);
    }

    #[test]
    fn label_email_gate_and_fallback() {
        let s = mail_settings();
        assert!(prepare_label_email(&issue(), "non-TD", "https://x", &s).is_none());
        let msg = prepare_label_email(&issue(), "TD", "https://f/o/r/issues/1", &s).unwrap();
        assert_eq!(msg.subject(), "[o/r] Issue labeled TD: Slow build");
        assert!(msg.body().contains("https://f/o/r/issues/1"));
    }

    #[test]
    fn subject_is_single_line() {
        let mut i = issue();
        i.title = "two\r\nlines".into();
        let msg = prepare_label_email(&i, "TD", "https://x", &mail_settings()).unwrap();
        assert_eq!(msg.subject(), "[o/r] Issue labeled TD: two lines");
        assert!(EmailMessage::new("s", "b", &[]).is_none());
    }

    fn report(n: usize) -> LingeringReport {
        LingeringReport {
            repo: RepoRef::new("o", "r").unwrap(),
            generated_at: Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap(),
            items: (0..n)
                .map(|i| LingeringItem {
                    issue_number: 10 + i as u64,
                    title: format!("Issue {i}"),
                    days_lingering: 40 - i as i64,
                    link: format!("https://f/o/r/issues/{}", 10 + i),
                })
                .collect(),
        }
    }

    #[test]
    fn lingering_digest() {
        let msg = prepare_lingering_email(&report(2), &mail_settings()).unwrap();
        assert_eq!(msg.subject(), "[o/r] 2 lingering issue(s)");
        assert!(msg.body().contains("- #10 Issue 0 (40 days) https://f/o/r/issues/10"));
        assert!(msg.body().contains("- #11 Issue 1 (39 days)"));
    }

    #[test]
    fn lingering_digest_gates() {
        assert!(prepare_lingering_email(&report(0), &mail_settings()).is_none());
        let mut off = mail_settings();
        off.send_emails = false;
        assert!(prepare_lingering_email(&report(2), &off).is_none());
        let mut nobody = mail_settings();
        nobody.recipients.clear();
        assert!(prepare_lingering_email(&report(2), &nobody).is_none());
    }

    #[test]
    fn lingering_custom_template() {
        let mut s = mail_settings();
        s.subject_templates.insert("lingering".into(), "/count stale in /repository".into());
        s.body_templates.insert("lingering".into(), "/issues".into());
        let msg = prepare_lingering_email(&report(1), &s).unwrap();
        assert_eq!(msg.subject(), "1 stale in o/r");
        assert_eq!(msg.body(), "- #10 Issue 0 (40 days) https://f/o/r/issues/10");
    }
}
