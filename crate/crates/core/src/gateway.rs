//! Webhook authentication and payload parsing.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use hmac::{Hmac, Mac};
use serde_json::Value;
use sha2::Sha256;

use crate::forge::{Comment, Issue, IssueState, RepoRef};

type HmacSha256 = Hmac<Sha256>;

pub const SIGNATURE_HEADER: &str = "X-Hub-Signature-256";
pub const EVENT_HEADER: &str = "X-GitHub-Event";
pub const DELIVERY_HEADER: &str = "X-GitHub-Delivery";

/// A delivery as received on the wire, before verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WebhookEnvelope {
    pub event_name: String,
    pub delivery_id: String,
    pub signature: Option<String>,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    IssueOpened {
        issue: Issue,
    },
    IssueCommented {
        issue: Issue,
        comment: Comment,
    },
    Ignored {
        reason: String,
    },
}

impl Event {
    pub fn repo(&self) -> Option<&RepoRef> {
        match self {
            Event::IssueOpened { issue } | Event::IssueCommented { issue, .. } => Some(&issue.repo),
            Event::Ignored { .. } => None,
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(self, Event::Ignored { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("bad payload: {0}")]
    BadPayload(String),
}

/// `sha256=<lowercase hex>` for `payload` under `secret`.
pub fn sign(payload: &[u8], secret: &[u8]) -> String {
    let mut mac = HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(payload);
    format!("sha256={}", hex::encode(mac.finalize().into_bytes()))
}

/// Constant-time check of an `X-Hub-Signature-256` header value.
pub fn verify_signature(payload: &[u8], signature_header: &str, secret: &[u8]) -> bool {
    if secret.is_empty() {
        return false;
    }
    let Some(hex_digest) = signature_header.strip_prefix("sha256=") else {
        return false;
    };
    if hex_digest.len() != 64 || !hex_digest.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return false;
    }
    let Ok(expected) = hex::decode(hex_digest) else {
        return false;
    };
    let mut mac = HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(payload);
    mac.verify_slice(&expected).is_ok()
}

fn bad(msg: impl Into<String>) -> GatewayError {
    GatewayError::BadPayload(msg.into())
}

fn field<'a>(v: &'a Value, path: &str) -> Result<&'a Value, GatewayError> {
    let pointer = format!("/{}", path.replace('.', "/"));
    v.pointer(&pointer).ok_or_else(|| bad(format!("missing field {path}")))
}

fn str_field<'a>(v: &'a Value, path: &str) -> Result<&'a str, GatewayError> {
    field(v, path)?
        .as_str()
        .ok_or_else(|| bad(format!("field {path} must be a string")))
}

/// Present but possibly `null` (issue bodies are `null` when empty).
fn nullable_str(v: &Value, path: &str) -> Result<String, GatewayError> {
    match field(v, path)? {
        Value::Null => Ok(String::new()),
        Value::String(s) => Ok(s.clone()),
        _ => Err(bad(format!("field {path} must be a string or null"))),
    }
}

fn time_field(v: &Value, path: &str) -> Result<DateTime<Utc>, GatewayError> {
    let s = str_field(v, path)?;
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| bad(format!("field {path}: {e}")))
}

fn parse_repo(v: &Value) -> Result<RepoRef, GatewayError> {
    let full = str_field(v, "repository.full_name")?;
    let branch = str_field(v, "repository.default_branch")?;
    let (owner, name) = full
        .split_once('/')
        .ok_or_else(|| bad(format!("repository.full_name {full:?} is not owner/name")))?;
    RepoRef::with_branch(owner, name, branch).map_err(|e| bad(e.to_string()))
}

fn parse_issue(v: &Value, repo: RepoRef) -> Result<Issue, GatewayError> {
    let number = field(v, "issue.number")?
        .as_u64()
        .filter(|n| *n > 0)
        .ok_or_else(|| bad("issue.number must be a positive integer"))?;
    let labels = field(v, "issue.labels")?
        .as_array()
        .ok_or_else(|| bad("issue.labels must be an array"))?
        .iter()
        .map(|l| {
            l.get("name")
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| bad("issue.labels[].name must be a string"))
        })
        .collect::<Result<BTreeSet<_>, _>>()?;
    let state = str_field(v, "issue.state")?
        .parse::<IssueState>()
        .map_err(bad)?;
    let created_at = time_field(v, "issue.created_at")?;
    let updated_at = time_field(v, "issue.updated_at")?;
    if updated_at < created_at {
        return Err(bad("issue.updated_at precedes issue.created_at"));
    }
    Ok(Issue {
        repo,
        number,
        title: str_field(v, "issue.title")?.to_string(),
        body: nullable_str(v, "issue.body")?,
        labels,
        state,
        created_at,
        updated_at,
    })
}

/// Turns a verified delivery into an [`Event`].
///
/// Only `issues/opened` and `issue_comment/created` are active; comments
/// written by a bot account (or by `bot_login`) are ignored so the bot never
/// reacts to itself.
pub fn parse_event(envelope: &WebhookEnvelope, bot_login: Option<&str>) -> Result<Event, GatewayError> {
    let ignored = |reason: String| Ok(Event::Ignored { reason });
    let name = envelope.event_name.as_str();
    if name != "issues" && name != "issue_comment" {
        return ignored(format!("event {name:?} is not handled"));
    }
    let v: Value = serde_json::from_slice(&envelope.payload).map_err(|e| bad(e.to_string()))?;
    let action = str_field(&v, "action")?;
    match (name, action) {
        ("issues", "opened") => {
            let repo = parse_repo(&v)?;
            Ok(Event::IssueOpened {
                issue: parse_issue(&v, repo)?,
            })
        }
        ("issue_comment", "created") => {
            let repo = parse_repo(&v)?;
            let issue = parse_issue(&v, repo)?;
            let login = str_field(&v, "comment.user.login")?.to_string();
            let user_type = str_field(&v, "comment.user.type")?;
            let author_is_bot = user_type == "Bot" || bot_login.is_some_and(|b| b == login);
            if author_is_bot {
                return ignored(format!("comment by bot account {login:?}"));
            }
            let created_at = match v.pointer("/comment/created_at").and_then(Value::as_str) {
                Some(_) => time_field(&v, "comment.created_at")?,
                None => issue.updated_at,
            };
            let comment = Comment {
                repo: issue.repo.clone(),
                issue_number: issue.number,
                author_login: login,
                author_is_bot,
                body: nullable_str(&v, "comment.body")?,
                created_at,
            };
            Ok(Event::IssueCommented { issue, comment })
        }
        (name, action) => ignored(format!("{name}/{action} is not handled")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn issue_json() -> Value {
        json!({
            "number": 7,
            "title": "Crash on save",
            "body": null,
            "labels": [{ "name": "bug" }],
            "state": "open",
            "created_at": "2024-05-01T10:00:00Z",
            "updated_at": "2024-05-02T10:00:00Z"
        })
    }

    fn envelope(event: &str, payload: Value) -> WebhookEnvelope {
        WebhookEnvelope {
            event_name: event.into(),
            delivery_id: "d-1".into(),
            signature: None,
            payload: serde_json::to_vec(&payload).unwrap(),
        }
    }

    fn repo_json() -> Value {
        json!({ "full_name": "acme/widgets", "default_branch": "main" })
    }

    #[test]
    fn issue_opened() {
        let env = envelope(
            "issues",
            json!({ "action": "opened", "repository": repo_json(), "issue": issue_json() }),
        );
        let Event::IssueOpened { issue } = parse_event(&env, None).unwrap() else {
            panic!("expected IssueOpened");
        };
        assert_eq!(issue.number, 7);
        assert_eq!(issue.body, "");
        assert!(issue.labels.contains("bug"));
        assert_eq!(issue.repo.full_name(), "acme/widgets");
    }

    fn comment_payload(user_type: &str, login: &str) -> Value {
        json!({
            "action": "created",
            "repository": repo_json(),
            "issue": issue_json(),
            "comment": { "body": "/tdbot label", "user": { "login": login, "type": user_type } }
        })
    }

    #[test]
    fn issue_comment() {
        let env = envelope("issue_comment", comment_payload("User", "alice"));
        match parse_event(&env, Some("tdbot[bot]")).unwrap() {
            Event::IssueCommented { issue, comment } => {
                assert_eq!(issue.number, 7);
                assert_eq!(comment.body, "/tdbot label");
                assert_eq!(comment.author_login, "alice");
                assert!(!comment.author_is_bot);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bot_comments_are_ignored() {
        let env = envelope("issue_comment", comment_payload("Bot", "other[bot]"));
        assert!(!parse_event(&env, None).unwrap().is_active());
        let env = envelope("issue_comment", comment_payload("User", "tdbot[bot]"));
        assert!(!parse_event(&env, Some("tdbot[bot]")).unwrap().is_active());
    }

    #[test]
    fn other_actions_are_ignored() {
        let env = envelope(
            "issues",
            json!({ "action": "edited", "repository": repo_json(), "issue": issue_json() }),
        );
        assert!(!parse_event(&env, None).unwrap().is_active());
        assert!(!parse_event(&envelope("push", json!({})), None).unwrap().is_active());
        let env = envelope("issue_comment", json!({ "action": "deleted" }));
        assert!(!parse_event(&env, None).unwrap().is_active());
    }

    #[test]
    fn missing_fields_are_errors() {
        let mut issue = issue_json();
        issue.as_object_mut().unwrap().remove("number");
        let env = envelope(
            "issues",
            json!({ "action": "opened", "repository": repo_json(), "issue": issue }),
        );
        assert!(matches!(parse_event(&env, None), Err(GatewayError::BadPayload(_))));

        let env = envelope("issues", json!({ "repository": repo_json(), "issue": issue_json() }));
        assert!(parse_event(&env, None).is_err());

        let mut payload = comment_payload("User", "alice");
        payload["comment"].as_object_mut().unwrap().remove("user");
        assert!(parse_event(&envelope("issue_comment", payload), None).is_err());

        let env = WebhookEnvelope { payload: b"{oops".to_vec(), ..envelope("issues", json!({})) };
        assert!(parse_event(&env, None).is_err());
    }

    #[test]
    fn signature_examples() {
        let secret = b"It's a Secret to Everybody";
        let payload = b"Hello, World!";
        // Published example from GitHub's webhook documentation.
        let sig = "sha256=757107ea0eb2509fc211221cce984b8a37570b6d7586c22c46f4379c8b043e17";
        assert_eq!(sign(payload, secret), sig);
        assert!(verify_signature(payload, sig, secret));
        assert!(!verify_signature(b"Hello, World?", sig, secret));
        assert!(!verify_signature(payload, "sha1=deadbeef", secret));
        assert!(!verify_signature(payload, &sig.to_uppercase(), secret));
        assert!(!verify_signature(payload, sig, b""));
        assert!(!verify_signature(payload, &sig[..70], secret));
    }
}
