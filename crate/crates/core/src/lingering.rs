//! Lingering-issue detection and the periodic scanner that mails digests.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};

use crate::clock::Clock;
use crate::config::{resolve_config, BotConfig, LingeringMode, LingeringSettings};
use crate::forge::{Forge, ForgeError, InstallationStore, Issue, IssueState, RepoRef};
use crate::notifier::{prepare_lingering_email, Mailer};

const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LingeringPolicy {
    pub threshold_days: u32,
    pub mode: LingeringMode,
}

impl From<&LingeringSettings> for LingeringPolicy {
    fn from(s: &LingeringSettings) -> Self {
        Self {
            threshold_days: s.threshold_days,
            mode: s.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LingeringItem {
    pub issue_number: u64,
    pub title: String,
    pub days_lingering: i64,
    pub link: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LingeringReport {
    pub repo: RepoRef,
    pub generated_at: DateTime<Utc>,
    /// Longest-lingering first; ties by ascending issue number.
    pub items: Vec<LingeringItem>,
}

/// Whole days elapsed from `from` to `to`, rounded towards negative infinity.
pub fn whole_days(from: DateTime<Utc>, to: DateTime<Utc>) -> i64 {
    (to - from).num_seconds().div_euclid(SECONDS_PER_DAY)
}

fn reference_time(issue: &Issue, mode: LingeringMode) -> DateTime<Utc> {
    match mode {
        LingeringMode::Creation => issue.created_at,
        LingeringMode::LastModified => issue.updated_at,
    }
}

pub fn lingering_days(issue: &Issue, mode: LingeringMode, now: DateTime<Utc>) -> i64 {
    whole_days(reference_time(issue, mode), now)
}

/// Inclusive: an issue exactly `threshold_days` old is lingering.
pub fn is_lingering(issue: &Issue, policy: LingeringPolicy, now: DateTime<Utc>) -> bool {
    lingering_days(issue, policy.mode, now) >= i64::from(policy.threshold_days)
}

/// Lingering open issues of `repo` under `config`, evaluated at `now`.
pub fn scan_repo(
    forge: &dyn Forge,
    repo: &RepoRef,
    config: &BotConfig,
    now: DateTime<Utc>,
) -> Result<LingeringReport, ForgeError> {
    let policy = LingeringPolicy::from(&config.lingering);
    let mut items: Vec<LingeringItem> = forge
        .list_open_issues(repo)?
        .into_iter()
        .filter(|i| i.state == IssueState::Open && is_lingering(i, policy, now))
        .map(|i| LingeringItem {
            days_lingering: lingering_days(&i, policy.mode, now),
            link: forge.issue_link(repo, i.number),
            issue_number: i.number,
            title: i.title,
        })
        .collect();
    items.sort_by(|a, b| {
        b.days_lingering
            .cmp(&a.days_lingering)
            .then(a.issue_number.cmp(&b.issue_number))
    });
    Ok(LingeringReport {
        repo: repo.clone(),
        generated_at: now,
        items,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepoScanOutcome {
    /// Not due yet under the repo's own check frequency.
    Skipped,
    Scanned { lingering: usize, emailed: bool },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickSummary {
    pub at: DateTime<Utc>,
    pub repos: Vec<(RepoRef, RepoScanOutcome)>,
}

/// Periodic lingering-issue scanner.
///
/// Ticks every `frequency`. On each tick every installed repository whose
/// own `lingering-check-frequency` has elapsed since its last scan is
/// scanned with freshly resolved config, and a digest is mailed if one is
/// due. A failing repository is logged and skipped; the rest still run.
pub struct Scheduler {
    forge: Arc<dyn Forge>,
    installs: Arc<dyn InstallationStore>,
    mailer: Arc<dyn Mailer>,
    clock: Arc<dyn Clock>,
    frequency: Duration,
    last_scan: Mutex<HashMap<RepoRef, DateTime<Utc>>>,
}

impl Scheduler {
    pub fn new(
        forge: Arc<dyn Forge>,
        installs: Arc<dyn InstallationStore>,
        mailer: Arc<dyn Mailer>,
        clock: Arc<dyn Clock>,
        frequency_hours: u32,
    ) -> Self {
        assert!(frequency_hours >= 1, "scheduler frequency must be at least one hour");
        Self {
            forge,
            installs,
            mailer,
            clock,
            frequency: Duration::hours(i64::from(frequency_hours)),
            last_scan: Mutex::new(HashMap::new()),
        }
    }

    fn due(&self, repo: &RepoRef, config: &BotConfig, now: DateTime<Utc>) -> bool {
        let every = Duration::hours(i64::from(config.lingering.check_frequency_hours));
        match self.last_scan.lock().unwrap().get(repo) {
            Some(last) => now - *last >= every,
            None => true,
        }
    }

    fn scan_one(&self, repo: &RepoRef, now: DateTime<Utc>) -> RepoScanOutcome {
        let config = match resolve_config(self.forge.as_ref(), repo) {
            Ok(c) => c,
            Err(e) => return RepoScanOutcome::Failed(e.to_string()),
        };
        if !self.due(repo, &config, now) {
            return RepoScanOutcome::Skipped;
        }
        let report = match scan_repo(self.forge.as_ref(), repo, &config, now) {
            Ok(r) => r,
            Err(e) => return RepoScanOutcome::Failed(e.to_string()),
        };
        self.last_scan.lock().unwrap().insert(repo.clone(), now);
        let emailed = match prepare_lingering_email(&report, &config.email) {
            Some(msg) => match self.mailer.send(&msg) {
                Ok(()) => true,
                Err(e) => {
                    tracing::error!(repo = %repo, error = %e, "failed to send lingering digest");
                    false
                }
            },
            None => false,
        };
        RepoScanOutcome::Scanned {
            lingering: report.items.len(),
            emailed,
        }
    }

    /// Runs one scan pass over all installed repositories now.
    pub fn tick(&self) -> TickSummary {
        let now = self.clock.now();
        let repos = self
            .installs
            .installed_repos()
            .into_iter()
            .map(|repo| {
                let outcome = self.scan_one(&repo, now);
                if let RepoScanOutcome::Failed(e) = &outcome {
                    tracing::error!(repo = %repo, error = %e, "lingering scan failed");
                }
                (repo, outcome)
            })
            .collect();
        TickSummary { at: now, repos }
    }

    /// Ticks every `frequency` starting one period from now, stopping once
    /// the next tick would fall after `until`. With `until = None` it never
    /// returns.
    pub fn run_until(&self, until: Option<DateTime<Utc>>) -> Vec<TickSummary> {
        let mut summaries = Vec::new();
        let mut next = self.clock.now() + self.frequency;
        loop {
            if until.is_some_and(|u| next > u) {
                return summaries;
            }
            self.clock.sleep_until(next);
            let summary = self.tick();
            if until.is_some() {
                summaries.push(summary);
            }
            next += self.frequency;
        }
    }
}

/// Runs the scanner forever.
pub fn run_scheduler(
    forge: Arc<dyn Forge>,
    installs: Arc<dyn InstallationStore>,
    mailer: Arc<dyn Mailer>,
    clock: Arc<dyn Clock>,
    frequency_hours: u32,
) -> ! {
    let scheduler = Scheduler::new(forge, installs, mailer, clock, frequency_hours);
    scheduler.run_until(None);
    unreachable!("scheduler without a deadline never stops")
}
