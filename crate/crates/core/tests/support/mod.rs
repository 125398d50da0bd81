//! Shared helpers for the integration suites.
#![allow(dead_code)]

pub mod oracles;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde_json::{json, Value};

use tdbot::clock::ManualClock;
use tdbot::config::CONFIG_PATH;
use tdbot::detection::{
    Classification, ClassificationInput, Detector, DetectorError, HeuristicDetector, PluginRegistry,
    Verdict,
};
use tdbot::forge::{FakeForge, Forge, ForgeError, Issue, RepoRef};
use tdbot::gateway::{parse_event, Event, WebhookEnvelope};
use tdbot::notifier::double::RecordingSmtp;
use tdbot::notifier::{SmtpMailer, TransportSettings};
use tdbot::orchestrator::Bot;

pub fn at(s: &str) -> DateTime<Utc> {
    DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

pub fn repo() -> RepoRef {
    RepoRef::new("acme", "widgets").unwrap()
}

pub fn issue_json(number: u64, title: &str, body: &str, labels: &[&str]) -> Value {
    json!({
        "number": number,
        "title": title,
        "body": body,
        "labels": labels.iter().map(|l| json!({"name": l})).collect::<Vec<_>>(),
        "state": "open",
        "created_at": "2024-06-01T10:00:00Z",
        "updated_at": "2024-06-01T10:00:00Z"
    })
}

fn repository_json() -> Value {
    json!({"full_name": "acme/widgets", "default_branch": "main"})
}

pub fn opened_payload(number: u64, title: &str, body: &str) -> Value {
    json!({
        "action": "opened",
        "repository": repository_json(),
        "issue": issue_json(number, title, body, &[]),
    })
}

pub fn comment_payload(number: u64, title: &str, body: &str, comment: &str) -> Value {
    json!({
        "action": "created",
        "repository": repository_json(),
        "issue": issue_json(number, title, body, &[]),
        "comment": {"body": comment, "user": {"login": "alice", "type": "User"}},
    })
}

pub fn event(name: &str, payload: &Value) -> Event {
    let envelope = WebhookEnvelope {
        event_name: name.to_string(),
        delivery_id: "test".to_string(),
        signature: None,
        payload: serde_json::to_vec(payload).unwrap(),
    };
    parse_event(&envelope, None).unwrap()
}

/// Ordered record of effects across forge and detectors.
pub type Journal = Arc<Mutex<Vec<String>>>;

/// Forge wrapper that appends each call to a shared journal.
pub struct JournalForge {
    pub inner: Arc<FakeForge>,
    pub journal: Journal,
}

impl JournalForge {
    fn log(&self, entry: String) {
        self.journal.lock().unwrap().push(entry);
    }
}

impl Forge for JournalForge {
    fn fetch_file(&self, repo: &RepoRef, path: &str, branch: &str) -> Result<Option<Vec<u8>>, ForgeError> {
        self.log(format!("fetch:{path}"));
        self.inner.fetch_file(repo, path, branch)
    }

    fn add_label(&self, repo: &RepoRef, issue_number: u64, label: &str) -> Result<(), ForgeError> {
        self.log(format!("label:{label}"));
        self.inner.add_label(repo, issue_number, label)
    }

    fn remove_label(&self, repo: &RepoRef, issue_number: u64, label: &str) -> Result<(), ForgeError> {
        self.log(format!("unlabel:{label}"));
        self.inner.remove_label(repo, issue_number, label)
    }

    fn post_comment(&self, repo: &RepoRef, issue_number: u64, body: &str) -> Result<(), ForgeError> {
        self.log("comment".to_string());
        self.inner.post_comment(repo, issue_number, body)
    }

    fn list_open_issues(&self, repo: &RepoRef) -> Result<Vec<Issue>, ForgeError> {
        self.log("list".to_string());
        self.inner.list_open_issues(repo)
    }
}

/// Detector that records its calls and answers with a fixed verdict, or
/// delegates to the heuristic when `verdict` is `None`.
pub struct StubDetector {
    pub name: String,
    pub verdict: Option<Verdict>,
    pub journal: Journal,
}

impl Detector for StubDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn classify(&self, input: &ClassificationInput) -> Result<Classification, DetectorError> {
        self.journal.lock().unwrap().push(format!("detect:{}", self.name));
        match self.verdict {
            Some(v) => Classification::new(v, None),
            None => Ok(HeuristicDetector::builtin().classify_text(&input.text)),
        }
    }
}

/// Frozen registry whose `heuristic` entry journals before classifying, plus
/// two fixed-verdict stubs `stub-td` and `stub-non-td`.
pub fn journaled_registry(journal: &Journal) -> Arc<PluginRegistry> {
    let mut reg = PluginRegistry::new();
    for (id, verdict) in [
        ("heuristic", None),
        ("stub-td", Some(Verdict::Td)),
        ("stub-non-td", Some(Verdict::NonTd)),
    ] {
        let journal = journal.clone();
        reg.register_plugin(id, move |_| {
            Ok(Arc::new(StubDetector {
                name: id.to_string(),
                verdict,
                journal: journal.clone(),
            }) as Arc<dyn Detector>)
        })
        .unwrap();
    }
    reg.freeze();
    Arc::new(reg)
}

pub fn smtp_settings() -> TransportSettings {
    TransportSettings {
        host: "smtp.test".into(),
        port: 587,
        username: "bot@example.org".into(),
        password: "secret".into(),
        from: "bot@example.org".into(),
    }
}

/// A bot wired to a journaling fake forge, a stub registry and the SMTP double.
pub struct Harness {
    pub fake: Arc<FakeForge>,
    pub smtp: Arc<RecordingSmtp>,
    pub clock: Arc<ManualClock>,
    pub journal: Journal,
    pub bot: Bot,
}

impl Harness {
    pub fn new() -> Self {
        let clock = Arc::new(ManualClock::new(at("2024-06-01T10:00:00Z")));
        let fake = Arc::new(FakeForge::with_clock(clock.clone()));
        fake.add_repo(&repo());
        let journal: Journal = Arc::default();
        let forge = Arc::new(JournalForge {
            inner: fake.clone(),
            journal: journal.clone(),
        });
        let smtp = Arc::new(RecordingSmtp::new());
        let mailer = Arc::new(SmtpMailer::new(smtp_settings(), smtp.clone()));
        let bot = Bot::new(forge, journaled_registry(&journal), mailer, clock.clone());
        Self {
            fake,
            smtp,
            clock,
            journal,
            bot,
        }
    }

    pub fn with_config(self, config: &Value) -> Self {
        self.set_config(config);
        self
    }

    pub fn set_config(&self, config: &Value) {
        self.fake
            .put_file(&repo(), "main", CONFIG_PATH, serde_json::to_vec(config).unwrap());
    }

    /// Seeds the issue from the payload and handles the event.
    pub fn deliver(&self, name: &str, payload: &Value) -> tdbot::orchestrator::HandlerOutcome {
        let event = event(name, payload);
        if let Event::IssueOpened { issue } | Event::IssueCommented { issue, .. } = &event {
            if self.fake.issue(&issue.repo, issue.number).is_none() {
                self.fake.put_issue(issue.clone());
            }
        }
        self.bot.handle_event(&event)
    }

    pub fn journal(&self) -> Vec<String> {
        self.journal.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.journal.lock().unwrap().clear();
        self.fake.clear_calls();
    }

    pub fn labels(&self, number: u64) -> Vec<String> {
        self.fake
            .issue(&repo(), number)
            .map(|i| i.labels.into_iter().collect())
            .unwrap_or_default()
    }
}

/// One-shot HTTP stub: answers each request with the next canned
/// `(status, body)` and records request bodies.
pub struct HttpStub {
    pub url: String,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
}

pub fn http_stub(responses: Vec<(u16, String)>) -> HttpStub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests: Arc<Mutex<Vec<(String, String)>>> = Arc::default();
    let log = requests.clone();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut req_body = vec![0u8; content_length];
            reader.read_exact(&mut req_body).unwrap();
            log.lock().unwrap().push((
                request_line.trim_end().to_string(),
                String::from_utf8_lossy(&req_body).into_owned(),
            ));
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    HttpStub { url, requests }
}

/// An address with nothing listening on it.
pub fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}")
}
