//! `tdbot` command line.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::clock::ManualClock;
use crate::config::{default_config, parse_config, BotConfig, CONFIG_PATH};
use crate::detection::{evaluate_detector, ClassificationInput, PluginRegistry, Verdict};
use crate::forge::{FakeForge, Forge, HttpForge, InstallationStore, Issue, IssueState, RepoRef};
use crate::gateway::{parse_event, Event, WebhookEnvelope};
use crate::notifier::double::RecordingSmtp;
use crate::notifier::{Mailer, SmtpMailer, TransportSettings, LettreConnector};
use crate::orchestrator::Bot;
use crate::server::{run_server, ServerOptions};

#[derive(Debug, Parser)]
#[command(name = "tdbot", version, about = "Self-admitted technical debt labeling bot")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Serve the webhook endpoint and run the lingering-issue scheduler.
    Serve {
        #[arg(long, default_value = "0.0.0.0:3000")]
        bind: SocketAddr,
        /// Use an in-memory forge and a recording mail double (demo mode).
        #[arg(long)]
        fake_forge: bool,
        /// Repository to scan for lingering issues (owner/name[@branch]); repeatable.
        #[arg(long = "repo")]
        repos: Vec<RepoRef>,
        /// Forge API base URL.
        #[arg(long, env = "FORGE_API_URL", default_value = "https://api.github.com")]
        api_url: String,
        /// The bot's own login, so its comments are never treated as commands.
        #[arg(long, env = "TDBOT_LOGIN")]
        bot_login: Option<String>,
        #[arg(long, default_value_t = 24)]
        lingering_frequency_hours: u32,
    },
    /// Parse a config file and print the effective configuration.
    ValidateConfig { file: PathBuf },
    /// Classify an exported issue list offline.
    Classify {
        issues: PathBuf,
        /// Config whose `detection` section selects the detector.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replay a scripted event sequence against the in-memory forge.
    Simulate {
        scenario: PathBuf,
        /// Seeded as Bot/config.json in every repository of the scenario.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score the configured detector on a labelled corpus.
    Evaluate {
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the built-in default configuration.
    PrintDefaultConfig,
}

/// Labels may be plain strings or forge-style `{"name": ...}` objects.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ExportLabel {
    Name(String),
    Object { name: String },
}

#[derive(Debug, Deserialize)]
pub struct ExportedIssue {
    number: u64,
    title: String,
    #[serde(default)]
    body: Option<String>,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
    state: IssueState,
    #[serde(default)]
    labels: Vec<ExportLabel>,
}

impl ExportedIssue {
    fn into_issue(self, repo: &RepoRef) -> Issue {
        Issue {
            repo: repo.clone(),
            number: self.number,
            title: self.title,
            body: self.body.unwrap_or_default(),
            labels: self
                .labels
                .into_iter()
                .map(|l| match l {
                    ExportLabel::Name(n) | ExportLabel::Object { name: n } => n,
                })
                .collect(),
            state: self.state,
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ScenarioStep {
    at: DateTime<Utc>,
    /// Event header value; inferred from the payload when absent.
    #[serde(default)]
    name: Option<String>,
    event: serde_json::Value,
}

#[derive(Debug, Deserialize)]
struct CorpusItem {
    text: String,
    label: String,
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: Option<&Path>) -> anyhow::Result<BotConfig> {
    match path {
        None => Ok(default_config()),
        Some(p) => parse_config(&read(p)?).map_err(|e| anyhow!("{}: {e}", p.display())),
    }
}

fn frozen_builtins() -> Arc<PluginRegistry> {
    let mut registry = PluginRegistry::with_builtins();
    registry.freeze();
    Arc::new(registry)
}

fn recording_mailer(smtp: Arc<RecordingSmtp>) -> Arc<dyn Mailer> {
    let settings = TransportSettings {
        host: "smtp.invalid".into(),
        port: 587,
        username: "tdbot@localhost.invalid".into(),
        password: "unused".into(),
        from: "tdbot@localhost.invalid".into(),
    };
    Arc::new(SmtpMailer::new(settings, smtp))
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn execute(command: CliCommand, out: &mut dyn Write) -> anyhow::Result<i32> {
    match command {
        CliCommand::PrintDefaultConfig => {
            write!(out, "{}", default_config().to_json_pretty())?;
            Ok(0)
        }
        CliCommand::ValidateConfig { file } => match parse_config(&read(&file)?) {
            Ok(config) => {
                write!(out, "{}", config.to_json_pretty())?;
                Ok(0)
            }
            Err(e) => {
                writeln!(out, "invalid configuration: {e}")?;
                Ok(1)
            }
        },
        CliCommand::Classify { issues, config } => {
            let config = load_config(config.as_deref())?;
            let exported: Vec<ExportedIssue> =
                serde_json::from_slice(&read(&issues)?).context("parsing issue export")?;
            let detector = frozen_builtins().create_detector(&config.detection)?;
            let repo = RepoRef::new("local", "export").expect("static repo ref");
            for raw in exported {
                let issue = raw.into_issue(&repo);
                let input = ClassificationInput::from_issue(&issue, config.detection.analyzed_part);
                let verdict = detector.classify(&input)?;
                writeln!(out, "{}\t{}", issue.number, verdict.label)?;
            }
            Ok(0)
        }
        CliCommand::Evaluate { corpus, config } => {
            let config = load_config(config.as_deref())?;
            let items: Vec<CorpusItem> =
                serde_json::from_slice(&read(&corpus)?).context("parsing corpus")?;
            let corpus = items
                .into_iter()
                .map(|i| {
                    Verdict::from_wire(&i.label)
                        .map(|v| (i.text, v))
                        .ok_or_else(|| anyhow!("corpus label {:?} is not TD/non-TD", i.label))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            if corpus.is_empty() {
                return Err(anyhow!("corpus is empty"));
            }
            let detector = frozen_builtins().create_detector(&config.detection)?;
            let m = evaluate_detector(detector.as_ref(), &corpus)?;
            let cm = m.confusion;
            writeln!(out, "items\t{}", cm.total())?;
            writeln!(out, "tp\t{}\nfp\t{}\nfn\t{}\ntn\t{}", cm.tp, cm.fp, cm.fn_, cm.tn)?;
            writeln!(out, "precision\t{:.4}", m.precision)?;
            writeln!(out, "recall\t{:.4}", m.recall)?;
            writeln!(out, "f1\t{:.4}", m.f1)?;
            Ok(0)
        }
        CliCommand::Simulate { scenario, config } => {
            let steps: Vec<ScenarioStep> =
                serde_json::from_slice(&read(&scenario)?).context("parsing scenario")?;
            let config_bytes = config.as_deref().map(read).transpose()?;
            simulate(&steps, config_bytes.as_deref(), out)?;
            Ok(0)
        }
        CliCommand::Serve {
            bind,
            fake_forge,
            repos,
            api_url,
            bot_login,
            lingering_frequency_hours,
        } => {
            let options = ServerOptions {
                bind,
                secret: std::env::var("WEBHOOK_SECRET").ok(),
                bot_login,
                scheduler_frequency_hours: lingering_frequency_hours,
            };
            if fake_forge {
                let forge = Arc::new(FakeForge::new());
                for repo in &repos {
                    forge.add_repo(repo);
                }
                let mailer = recording_mailer(Arc::new(RecordingSmtp::new()));
                let options = ServerOptions {
                    bot_login: options.bot_login.or_else(|| Some(forge.bot_login().to_string())),
                    ..options
                };
                run_server(
                    options,
                    forge.clone(),
                    forge.clone(),
                    frozen_builtins(),
                    mailer,
                    Some(forge),
                )?;
            } else {
                let token = std::env::var("FORGE_TOKEN")
                    .or_else(|_| std::env::var("GITHUB_TOKEN"))
                    .ok();
                let forge = Arc::new(HttpForge::new(&api_url, token)?);
                let mailer: Arc<dyn Mailer> = match TransportSettings::from_env() {
                    Ok(settings) => Arc::new(SmtpMailer::new(settings, Arc::new(LettreConnector::default()))),
                    Err(e) => {
                        tracing::warn!(error = %e, "email delivery is not configured");
                        Arc::new(SmtpMailer::unconfigured(e))
                    }
                };
                let installs: Arc<dyn InstallationStore> = Arc::new(repos);
                run_server(options, forge, installs, frozen_builtins(), mailer, None)?;
            }
            Ok(0)
        }
    }
}

fn infer_event_name(payload: &serde_json::Value) -> &'static str {
    if payload.get("comment").is_some() {
        "issue_comment"
    } else {
        "issues"
    }
}

/// Replays `steps` against a fresh fake forge, one line of output per step.
fn simulate(steps: &[ScenarioStep], config: Option<&[u8]>, out: &mut dyn Write) -> anyhow::Result<()> {
    let start = steps.first().map_or_else(Utc::now, |s| s.at);
    let clock = Arc::new(ManualClock::new(start));
    let forge = Arc::new(FakeForge::with_clock(clock.clone()));
    let smtp = Arc::new(RecordingSmtp::new());
    let bot = Bot::new(forge.clone(), frozen_builtins(), recording_mailer(smtp.clone()), clock.clone());

    for (i, step) in steps.iter().enumerate() {
        clock.set(step.at);
        let name = step
            .name
            .clone()
            .unwrap_or_else(|| infer_event_name(&step.event).to_string());
        let envelope = WebhookEnvelope {
            event_name: name.clone(),
            delivery_id: format!("sim-{}", i + 1),
            signature: None,
            payload: serde_json::to_vec(&step.event)?,
        };
        let event = match parse_event(&envelope, Some(forge.bot_login())) {
            Ok(event) => event,
            Err(e) => {
                writeln!(out, "{}\t{name}\t-\terror: {e}", step.at.to_rfc3339())?;
                continue;
            }
        };
        let target = match &event {
            Event::IssueOpened { issue } | Event::IssueCommented { issue, .. } => {
                forge.add_repo(&issue.repo);
                if let Some(raw) = config {
                    if forge
                        .fetch_file(&issue.repo, CONFIG_PATH, issue.repo.default_branch())
                        .ok()
                        .flatten()
                        .is_none()
                    {
                        forge.put_file(&issue.repo, issue.repo.default_branch(), CONFIG_PATH, raw.to_vec());
                    }
                }
                if forge.issue(&issue.repo, issue.number).is_none() {
                    forge.put_issue(issue.clone());
                }
                format!("{}#{}", issue.repo, issue.number)
            }
            Event::Ignored { .. } => "-".to_string(),
        };
        let outcome = bot.handle_event(&event);
        writeln!(out, "{}\t{name}\t{target}\t{outcome}", step.at.to_rfc3339())?;
    }
    writeln!(out, "emails sent: {}", smtp.messages().len())?;
    Ok(())
}
