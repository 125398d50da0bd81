use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use lettre::address::Envelope;
use lettre::message::header::ContentType;
use lettre::transport::smtp::authentication::{Credentials, Mechanism};
use lettre::transport::smtp::client::{SmtpConnection, TlsParameters};
use lettre::transport::smtp::extension::ClientId;
use lettre::{Address, Message};

use super::EmailMessage;

/// Optional credentials file, `KEY=value` per line. Overrides the environment.
pub const SMTP_DOTFILE: &str = ".tagdebt-smtp";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NotifyErrorKind {
    Connect,
    TlsUnavailable,
    Auth,
    SendRejected,
    /// Transport settings are missing or malformed.
    Config,
}

impl NotifyErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NotifyErrorKind::Connect => "connect",
            NotifyErrorKind::TlsUnavailable => "tls_unavailable",
            NotifyErrorKind::Auth => "auth",
            NotifyErrorKind::SendRejected => "send_rejected",
            NotifyErrorKind::Config => "config",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("email error ({}): {detail}", kind.as_str())]
pub struct NotifyError {
    pub kind: NotifyErrorKind,
    pub detail: String,
}

impl NotifyError {
    pub fn new(kind: NotifyErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct TransportSettings {
    pub host: String,
    pub port: u16,
    pub username: String,
    pub password: String,
    pub from: String,
}

impl std::fmt::Debug for TransportSettings {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransportSettings")
            .field("host", &self.host)
            .field("port", &self.port)
            .field("username", &self.username)
            .field("password", &"<redacted>")
            .field("from", &self.from)
            .finish()
    }
}

fn parse_dotfile(text: &str) -> HashMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

impl TransportSettings {
    /// Reads `SMTP_HOST`, `SMTP_PORT` (default 587), `SMTP_USER`, `SMTP_PASS`
    /// and `SMTP_FROM` (default: the user). Values in `dotfile` win over
    /// `env`.
    pub fn from_sources(
        env: impl Fn(&str) -> Option<String>,
        dotfile: Option<&str>,
    ) -> Result<Self, NotifyError> {
        let file = dotfile.map(parse_dotfile).unwrap_or_default();
        let get = |key: &str| {
            file.get(key)
                .cloned()
                .or_else(|| env(key))
                .filter(|v| !v.is_empty())
        };
        let require = |key: &str| {
            get(key).ok_or_else(|| NotifyError::new(NotifyErrorKind::Config, format!("{key} is not set")))
        };
        let host = require("SMTP_HOST")?;
        let port = match get("SMTP_PORT") {
            None => 587,
            Some(p) => p.parse().map_err(|_| {
                NotifyError::new(NotifyErrorKind::Config, format!("SMTP_PORT {p:?} is not a port"))
            })?,
        };
        let username = require("SMTP_USER")?;
        let password = require("SMTP_PASS")?;
        let from = get("SMTP_FROM").unwrap_or_else(|| username.clone());
        Ok(Self {
            host,
            port,
            username,
            password,
            from,
        })
    }

    /// Environment plus `.tagdebt-smtp` in the working directory if present.
    pub fn from_env() -> Result<Self, NotifyError> {
        let dotfile = std::fs::read_to_string(SMTP_DOTFILE).ok();
        Self::from_sources(|k| std::env::var(k).ok(), dotfile.as_deref())
    }
}

/// Opens SMTP sessions.
pub trait SmtpConnector: Send + Sync {
    fn connect(&self, settings: &TransportSettings) -> Result<Box<dyn SmtpSession>, NotifyError>;
}

/// One SMTP session, used for exactly one message.
pub trait SmtpSession {
    fn starttls(&mut self) -> Result<(), NotifyError>;
    fn authenticate(&mut self, username: &str, password: &str) -> Result<(), NotifyError>;
    fn send(&mut self, from: &str, to: &[String], data: &[u8]) -> Result<(), NotifyError>;
    fn close(&mut self);
}

fn parse_address(addr: &str) -> Result<Address, NotifyError> {
    addr.parse()
        .map_err(|e| NotifyError::new(NotifyErrorKind::SendRejected, format!("{addr:?}: {e}")))
}

/// RFC 5322 plain-text rendering of `message`.
pub fn format_message(message: &EmailMessage, from: &str) -> Result<Vec<u8>, NotifyError> {
    let mut builder = Message::builder()
        .from(parse_address(from)?.into())
        .subject(message.subject())
        .header(ContentType::TEXT_PLAIN);
    for rcpt in message.recipients() {
        builder = builder.to(parse_address(rcpt)?.into());
    }
    let mail = builder
        .body(message.body().to_string())
        .map_err(|e| NotifyError::new(NotifyErrorKind::SendRejected, e.to_string()))?;
    Ok(mail.formatted())
}

/// Delivers one message over a fresh session: connect, STARTTLS,
/// authenticate, send, quit. The session is closed on every path once
/// opened, and nothing is sent unless TLS was established.
pub fn send_email(
    message: &EmailMessage,
    settings: &TransportSettings,
    connector: &dyn SmtpConnector,
) -> Result<(), NotifyError> {
    let data = format_message(message, &settings.from)?;
    let mut session = connector.connect(settings)?;
    let result = (|| {
        session.starttls()?;
        session.authenticate(&settings.username, &settings.password)?;
        session.send(&settings.from, message.recipients(), &data)
    })();
    session.close();
    result
}

/// Delivery endpoint used by the bot.
pub trait Mailer: Send + Sync {
    fn send(&self, message: &EmailMessage) -> Result<(), NotifyError>;
}

pub struct SmtpMailer {
    settings: Result<TransportSettings, NotifyError>,
    connector: Arc<dyn SmtpConnector>,
}

impl SmtpMailer {
    pub fn new(settings: TransportSettings, connector: Arc<dyn SmtpConnector>) -> Self {
        Self {
            settings: Ok(settings),
            connector,
        }
    }

    /// A mailer whose settings failed to load; every send reports that error.
    pub fn unconfigured(error: NotifyError) -> Self {
        Self {
            settings: Err(error),
            connector: Arc::new(LettreConnector::default()),
        }
    }
}

impl Mailer for SmtpMailer {
    /// Retries once, and only when the connection could not be opened, so a
    /// message is never delivered twice.
    fn send(&self, message: &EmailMessage) -> Result<(), NotifyError> {
        let settings = self.settings.as_ref().map_err(Clone::clone)?;
        match send_email(message, settings, self.connector.as_ref()) {
            Err(e) if e.kind == NotifyErrorKind::Connect => {
                tracing::warn!(error = %e, "smtp connect failed, retrying once");
                send_email(message, settings, self.connector.as_ref())
            }
            other => other,
        }
    }
}

/// Real SMTP over TCP with STARTTLS (rustls).
pub struct LettreConnector {
    pub timeout: Duration,
}

impl Default for LettreConnector {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
        }
    }
}

struct LettreSession {
    conn: SmtpConnection,
    host: String,
    hello: ClientId,
}

impl SmtpConnector for LettreConnector {
    fn connect(&self, settings: &TransportSettings) -> Result<Box<dyn SmtpSession>, NotifyError> {
        let hello = ClientId::default();
        let conn = SmtpConnection::connect(
            (settings.host.as_str(), settings.port),
            Some(self.timeout),
            &hello,
            None,
            None,
        )
        .map_err(|e| NotifyError::new(NotifyErrorKind::Connect, e.to_string()))?;
        Ok(Box::new(LettreSession {
            conn,
            host: settings.host.clone(),
            hello,
        }))
    }
}

impl SmtpSession for LettreSession {
    fn starttls(&mut self) -> Result<(), NotifyError> {
        let tls_err = |e: lettre::transport::smtp::Error| {
            NotifyError::new(NotifyErrorKind::TlsUnavailable, e.to_string())
        };
        if !self.conn.can_starttls() {
            return Err(NotifyError::new(
                NotifyErrorKind::TlsUnavailable,
                "server does not offer STARTTLS",
            ));
        }
        let params = TlsParameters::new(self.host.clone()).map_err(tls_err)?;
        self.conn.starttls(&params, &self.hello).map_err(tls_err)
    }

    fn authenticate(&mut self, username: &str, password: &str) -> Result<(), NotifyError> {
        let creds = Credentials::new(username.to_string(), password.to_string());
        self.conn
            .auth(&[Mechanism::Plain, Mechanism::Login], &creds)
            .map(drop)
            .map_err(|e| NotifyError::new(NotifyErrorKind::Auth, e.to_string()))
    }

    fn send(&mut self, from: &str, to: &[String], data: &[u8]) -> Result<(), NotifyError> {
        let rcpts = to.iter().map(|r| parse_address(r)).collect::<Result<Vec<_>, _>>()?;
        let envelope = Envelope::new(Some(parse_address(from)?), rcpts)
            .map_err(|e| NotifyError::new(NotifyErrorKind::SendRejected, e.to_string()))?;
        self.conn
            .send(&envelope, data)
            .map(drop)
            .map_err(|e| NotifyError::new(NotifyErrorKind::SendRejected, e.to_string()))
    }

    fn close(&mut self) {
        if self.conn.quit().is_err() {
            self.conn.abort();
        }
    }
}
