//! In-process SMTP stand-in that records every session. Used by the test
//! suites, `tdbot simulate` and the fake-forge demo server.

use std::sync::{Arc, Mutex};

use super::smtp::{NotifyError, NotifyErrorKind, SmtpConnector, SmtpSession, TransportSettings};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentMessage {
    pub from: String,
    pub to: Vec<String>,
    pub data: Vec<u8>,
}

impl SentMessage {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.data).into_owned()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionRecord {
    pub tls: bool,
    pub authenticated: bool,
    pub messages: Vec<SentMessage>,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SmtpBehavior {
    pub refuse_connect: bool,
    pub refuse_tls: bool,
    pub reject_auth: bool,
    pub reject_send: bool,
}

#[derive(Debug, Default)]
pub struct RecordingSmtp {
    behavior: Mutex<SmtpBehavior>,
    sessions: Arc<Mutex<Vec<SessionRecord>>>,
    connect_attempts: Mutex<usize>,
}

impl RecordingSmtp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_behavior(behavior: SmtpBehavior) -> Self {
        Self {
            behavior: Mutex::new(behavior),
            ..Self::default()
        }
    }

    pub fn set_behavior(&self, behavior: SmtpBehavior) {
        *self.behavior.lock().unwrap() = behavior;
    }

    /// Every session opened so far, in order.
    pub fn sessions(&self) -> Vec<SessionRecord> {
        self.sessions.lock().unwrap().clone()
    }

    pub fn messages(&self) -> Vec<SentMessage> {
        self.sessions()
            .into_iter()
            .flat_map(|s| s.messages)
            .collect()
    }

    pub fn connect_attempts(&self) -> usize {
        *self.connect_attempts.lock().unwrap()
    }
}

struct RecordingSession {
    behavior: SmtpBehavior,
    index: usize,
    sessions: Arc<Mutex<Vec<SessionRecord>>>,
}

impl RecordingSession {
    fn update(&self, f: impl FnOnce(&mut SessionRecord)) {
        f(&mut self.sessions.lock().unwrap()[self.index]);
    }

    fn record(&self) -> SessionRecord {
        self.sessions.lock().unwrap()[self.index].clone()
    }
}

impl SmtpConnector for RecordingSmtp {
    fn connect(&self, _: &TransportSettings) -> Result<Box<dyn SmtpSession>, NotifyError> {
        *self.connect_attempts.lock().unwrap() += 1;
        let behavior = *self.behavior.lock().unwrap();
        if behavior.refuse_connect {
            return Err(NotifyError::new(NotifyErrorKind::Connect, "connection refused"));
        }
        let mut sessions = self.sessions.lock().unwrap();
        sessions.push(SessionRecord::default());
        Ok(Box::new(RecordingSession {
            behavior,
            index: sessions.len() - 1,
            sessions: Arc::clone(&self.sessions),
        }))
    }
}

impl SmtpSession for RecordingSession {
    fn starttls(&mut self) -> Result<(), NotifyError> {
        if self.behavior.refuse_tls {
            return Err(NotifyError::new(
                NotifyErrorKind::TlsUnavailable,
                "server does not offer STARTTLS",
            ));
        }
        self.update(|s| s.tls = true);
        Ok(())
    }

    fn authenticate(&mut self, _: &str, _: &str) -> Result<(), NotifyError> {
        if !self.record().tls {
            return Err(NotifyError::new(NotifyErrorKind::Auth, "AUTH before STARTTLS"));
        }
        if self.behavior.reject_auth {
            return Err(NotifyError::new(NotifyErrorKind::Auth, "535 bad credentials"));
        }
        self.update(|s| s.authenticated = true);
        Ok(())
    }

    fn send(&mut self, from: &str, to: &[String], data: &[u8]) -> Result<(), NotifyError> {
        if !self.record().authenticated {
            return Err(NotifyError::new(NotifyErrorKind::SendRejected, "530 authentication required"));
        }
        if self.behavior.reject_send {
            return Err(NotifyError::new(NotifyErrorKind::SendRejected, "554 rejected"));
        }
        let msg = SentMessage {
            from: from.to_string(),
            to: to.to_vec(),
            data: data.to_vec(),
        };
        self.update(|s| s.messages.push(msg));
        Ok(())
    }

    fn close(&mut self) {
        self.update(|s| s.closed = true);
    }
}
