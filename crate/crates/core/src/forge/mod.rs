//! Forge abstraction: the handful of GitHub-style operations the bot needs.
//!
//! Two implementations live here: [`HttpForge`] talks to a real
//! GitHub-compatible REST API, and [`FakeForge`] keeps everything in memory
//! for tests, simulation and the demo server.

mod fake;
mod http;
mod retry;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use fake::{FakeForge, ForgeCall};
pub use http::HttpForge;
pub use retry::{with_retry, RetryPolicy};

/// Color used when the bot has to create a label definition itself.
pub const LABEL_COLOR: &str = "d93f0b";

/// Owner/name pair plus the branch the bot reads configuration from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepoRef {
    owner: String,
    name: String,
    default_branch: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid repository reference {0:?}")]
pub struct InvalidRepoRef(pub String);

fn valid_segment(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c == '/')
}

impl RepoRef {
    pub fn new(owner: &str, name: &str) -> Result<Self, InvalidRepoRef> {
        Self::with_branch(owner, name, "main")
    }

    pub fn with_branch(owner: &str, name: &str, branch: &str) -> Result<Self, InvalidRepoRef> {
        if !valid_segment(owner) || !valid_segment(name) || branch.trim().is_empty() {
            return Err(InvalidRepoRef(format!("{owner}/{name}@{branch}")));
        }
        Ok(Self {
            owner: owner.to_string(),
            name: name.to_string(),
            default_branch: branch.to_string(),
        })
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn default_branch(&self) -> &str {
        &self.default_branch
    }

    /// `owner/name`
    pub fn full_name(&self) -> String {
        format!("{}/{}", self.owner, self.name)
    }
}

impl fmt::Display for RepoRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.owner, self.name)
    }
}

/// Parses `owner/name` or `owner/name@branch`.
impl FromStr for RepoRef {
    type Err = InvalidRepoRef;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (full, branch) = match s.split_once('@') {
            Some((full, branch)) => (full, branch),
            None => (s, "main"),
        };
        let (owner, name) = full
            .split_once('/')
            .ok_or_else(|| InvalidRepoRef(s.to_string()))?;
        Self::with_branch(owner, name, branch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueState {
    Open,
    Closed,
}

impl FromStr for IssueState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(IssueState::Open),
            "closed" => Ok(IssueState::Closed),
            other => Err(format!("unknown issue state {other:?}")),
        }
    }
}

/// Snapshot of an issue as the forge reports it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub repo: RepoRef,
    pub number: u64,
    pub title: String,
    pub body: String,
    pub labels: BTreeSet<String>,
    pub state: IssueState,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Issue {
    /// A fresh open issue with no labels, created and updated at `at`.
    pub fn new(repo: RepoRef, number: u64, title: &str, body: &str, at: DateTime<Utc>) -> Self {
        Self {
            repo,
            number,
            title: title.to_string(),
            body: body.to_string(),
            labels: BTreeSet::new(),
            state: IssueState::Open,
            created_at: at,
            updated_at: at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub repo: RepoRef,
    pub issue_number: u64,
    pub author_login: String,
    pub author_is_bot: bool,
    pub body: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForgeErrorKind {
    NotFound,
    PermissionDenied,
    RateLimited,
    Network,
    InvalidResponse,
}

impl ForgeErrorKind {
    pub fn is_retryable(self) -> bool {
        matches!(self, ForgeErrorKind::RateLimited | ForgeErrorKind::Network)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ForgeErrorKind::NotFound => "not_found",
            ForgeErrorKind::PermissionDenied => "permission_denied",
            ForgeErrorKind::RateLimited => "rate_limited",
            ForgeErrorKind::Network => "network",
            ForgeErrorKind::InvalidResponse => "invalid_response",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("forge error ({}): {detail}", kind.as_str())]
pub struct ForgeError {
    pub kind: ForgeErrorKind,
    pub detail: String,
}

impl ForgeError {
    pub fn new(kind: ForgeErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }

    pub fn not_found(detail: impl Into<String>) -> Self {
        Self::new(ForgeErrorKind::NotFound, detail)
    }

    pub fn is_retryable(&self) -> bool {
        self.kind.is_retryable()
    }
}

/// The operations the bot performs against a forge.
///
/// Implementations must be safe to share between webhook handlers and the
/// lingering-issue scheduler.
pub trait Forge: Send + Sync {
    /// Raw file contents at the head of `branch`, or `None` if the file does
    /// not exist. Never cached.
    fn fetch_file(&self, repo: &RepoRef, path: &str, branch: &str)
        -> Result<Option<Vec<u8>>, ForgeError>;

    /// Adds `label` to the issue, creating the label definition if needed.
    /// Adding a label that is already present is a no-op.
    fn add_label(&self, repo: &RepoRef, issue_number: u64, label: &str) -> Result<(), ForgeError>;

    /// Removes `label` from the issue; absent labels are ignored.
    fn remove_label(&self, repo: &RepoRef, issue_number: u64, label: &str)
        -> Result<(), ForgeError>;

    fn post_comment(&self, repo: &RepoRef, issue_number: u64, body: &str) -> Result<(), ForgeError>;

    fn list_open_issues(&self, repo: &RepoRef) -> Result<Vec<Issue>, ForgeError>;

    /// Browser URL of an issue.
    fn issue_link(&self, repo: &RepoRef, issue_number: u64) -> String {
        format!(
            "https://github.com/{}/{}/issues/{}",
            repo.owner(),
            repo.name(),
            issue_number
        )
    }
}

/// Source of the repositories the bot is installed on.
pub trait InstallationStore: Send + Sync {
    fn installed_repos(&self) -> Vec<RepoRef>;
}

impl InstallationStore for Vec<RepoRef> {
    fn installed_repos(&self) -> Vec<RepoRef> {
        self.clone()
    }
}

/// Rejects absolute paths and `..` segments.
pub(crate) fn check_repo_path(path: &str) -> Result<(), ForgeError> {
    if path.is_empty() || path.starts_with('/') || path.split('/').any(|seg| seg == "..") {
        return Err(ForgeError::new(
            ForgeErrorKind::PermissionDenied,
            format!("path {path:?} is not a repo-relative path"),
        ));
    }
    Ok(())
}
