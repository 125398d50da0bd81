//! HTTP front end: `POST /webhook` and `GET /healthz`.
//!
//! Deliveries are authenticated before anything else looks at them. Active
//! events are acknowledged with 202 and handled on the blocking pool.

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::{bail, Context};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::Router;
use tokio::sync::broadcast;

use crate::clock::SystemClock;
use crate::detection::PluginRegistry;
use crate::forge::{FakeForge, Forge, InstallationStore};
use crate::gateway::{
    parse_event, verify_signature, Event, WebhookEnvelope, DELIVERY_HEADER, EVENT_HEADER,
    SIGNATURE_HEADER,
};
use crate::lingering::Scheduler;
use crate::notifier::Mailer;
use crate::orchestrator::{Bot, HandlerOutcome};

pub struct AppState {
    bot: Arc<Bot>,
    secret: Vec<u8>,
    bot_login: Option<String>,
    mirror: Option<Arc<FakeForge>>,
    completed: broadcast::Sender<(String, HandlerOutcome)>,
}

impl AppState {
    pub fn new(bot: Arc<Bot>, secret: &[u8]) -> Self {
        let (completed, _) = broadcast::channel(64);
        Self {
            bot,
            secret: secret.to_vec(),
            bot_login: None,
            mirror: None,
            completed,
        }
    }

    pub fn with_bot_login(mut self, login: &str) -> Self {
        self.bot_login = Some(login.to_string());
        self
    }

    /// Demo mode: copy each delivered issue snapshot into the fake forge
    /// before handling, so the forge knows about issues it never created.
    pub fn mirroring(mut self, forge: Arc<FakeForge>) -> Self {
        self.mirror = Some(forge);
        self
    }

    /// Receives `(delivery id, outcome)` whenever a handler finishes.
    pub fn subscribe(&self) -> broadcast::Receiver<(String, HandlerOutcome)> {
        self.completed.subscribe()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/webhook", post(webhook))
        .with_state(state)
}

fn header(headers: &HeaderMap, name: &str) -> Option<String> {
    headers
        .get(name)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
}

async fn webhook(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> (StatusCode, String) {
    let envelope = WebhookEnvelope {
        event_name: header(&headers, EVENT_HEADER).unwrap_or_default(),
        delivery_id: header(&headers, DELIVERY_HEADER).unwrap_or_default(),
        signature: header(&headers, SIGNATURE_HEADER),
        payload: body.to_vec(),
    };
    let verified = envelope
        .signature
        .as_deref()
        .is_some_and(|sig| verify_signature(&envelope.payload, sig, &state.secret));
    if !verified {
        tracing::warn!(delivery = %envelope.delivery_id, "rejected delivery with bad signature");
        return (StatusCode::UNAUTHORIZED, "invalid signature".into());
    }
    if envelope.event_name.is_empty() {
        return (StatusCode::BAD_REQUEST, format!("missing {EVENT_HEADER} header"));
    }
    let event = match parse_event(&envelope, state.bot_login.as_deref()) {
        Ok(event) => event,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()),
    };
    if let Event::Ignored { reason } = &event {
        tracing::debug!(delivery = %envelope.delivery_id, reason, "ignored delivery");
        return (StatusCode::OK, "ignored".into());
    }
    let delivery = envelope.delivery_id;
    let task_state = Arc::clone(&state);
    tokio::task::spawn_blocking(move || {
        if let (Some(mirror), Some(issue)) = (&task_state.mirror, event_issue(&event)) {
            mirror.put_issue(issue.clone());
        }
        let outcome = task_state.bot.handle_event(&event);
        tracing::info!(delivery = %delivery, %outcome, "handled delivery");
        let _ = task_state.completed.send((delivery, outcome));
    });
    (StatusCode::ACCEPTED, "accepted".into())
}

fn event_issue(event: &Event) -> Option<&crate::forge::Issue> {
    match event {
        Event::IssueOpened { issue } | Event::IssueCommented { issue, .. } => Some(issue),
        Event::Ignored { .. } => None,
    }
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub struct ServerOptions {
    pub bind: SocketAddr,
    pub secret: Option<String>,
    pub bot_login: Option<String>,
    pub scheduler_frequency_hours: u32,
}

/// Starts the lingering scheduler on its own thread and serves webhooks
/// until the process is stopped. Fails fast on a missing secret, an unfrozen
/// registry, or a bind error.
pub fn run_server(
    options: ServerOptions,
    forge: Arc<dyn Forge>,
    installs: Arc<dyn InstallationStore>,
    registry: Arc<PluginRegistry>,
    mailer: Arc<dyn Mailer>,
    mirror: Option<Arc<FakeForge>>,
) -> anyhow::Result<()> {
    let secret = match options.secret.as_deref() {
        Some(s) if !s.is_empty() => s.as_bytes().to_vec(),
        _ => bail!("WEBHOOK_SECRET is not set; refusing to accept unauthenticated webhooks"),
    };
    if !registry.is_frozen() {
        bail!("detector registry must be frozen before serving");
    }
    if options.scheduler_frequency_hours == 0 {
        bail!("scheduler frequency must be at least one hour");
    }
    let clock = Arc::new(SystemClock);
    let bot = Arc::new(Bot::new(Arc::clone(&forge), registry, Arc::clone(&mailer), clock.clone()));
    let mut state = AppState::new(bot, &secret);
    if let Some(login) = &options.bot_login {
        state = state.with_bot_login(login);
    }
    if let Some(fake) = mirror {
        state = state.mirroring(fake);
    }

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(options.bind)
            .await
            .with_context(|| format!("binding {}", options.bind))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        let frequency = options.scheduler_frequency_hours;
        std::thread::Builder::new()
            .name("lingering-scheduler".into())
            .spawn(move || {
                Scheduler::new(forge, installs, mailer, clock, frequency).run_until(None);
            })
            .context("starting scheduler thread")?;
        serve(listener, Arc::new(state)).await.context("serving")
    })
}
